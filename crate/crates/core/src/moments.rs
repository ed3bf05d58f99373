//! Hypothesis-conditional mean and variance of the received molecule count
//! at a decoding node.
//!
//! Every receiver in a chain sees the same structure: the current-slot signal
//! from its transmitter, inter-symbol interference from the transmitter's
//! earlier emissions, Gaussian multi-source interference, and a counting error
//! whose variance equals the expected count under the hypothesis being tested.
//! Relay hops differ from the direct link only in which absolute slot they
//! observe, so all of them go through [`hypothesis_moments`].
//!
//! Slots are 1-based. Slot `j` of an [`EmissionSchedule`] is stored at
//! index `j - 1`.

use crate::channel::ArrivalProfile;
use crate::error::{Error, Result};

/// Per-slot molecule counts released by one transmitting node for symbol 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmissionSchedule {
    counts: Vec<u32>,
}

impl EmissionSchedule {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    /// The same count in every one of `slots` slots.
    pub fn constant(count: u32, slots: usize) -> Self {
        Self {
            counts: vec![count; slots],
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Count for the 1-based `slot`.
    pub fn at(&self, slot: usize) -> Option<u32> {
        slot.checked_sub(1)
            .and_then(|i| self.counts.get(i))
            .copied()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
}

/// Gaussian multi-source interference, shared by every receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsiParams {
    pub mean: f64,
    pub var: f64,
}

impl MsiParams {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        let msi = Self { mean, var };
        msi.validate()?;
        Ok(msi)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || self.mean < 0.0 {
            return Err(Error::invalid(
                "msi_mean",
                format!("must be finite and >= 0, got {}", self.mean),
            ));
        }
        if !self.var.is_finite() || self.var < 0.0 {
            return Err(Error::invalid(
                "msi_var",
                format!("must be finite and >= 0, got {}", self.var),
            ));
        }
        Ok(())
    }
}

/// Mean and variance of the received count under H0 and H1 for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisMoments {
    pub mu0: f64,
    pub var0: f64,
    pub mu1: f64,
    pub var1: f64,
    /// Whether the current-slot binomial is well inside the regime where the
    /// Gaussian approximation is trusted (`Q·q₀ > 5` and `Q·(1 − q₀) > 5`).
    pub gaussian_regime: bool,
}

impl HypothesisMoments {
    pub fn sigma0(&self) -> f64 {
        self.var0.sqrt()
    }

    pub fn sigma1(&self) -> f64 {
        self.var1.sqrt()
    }
}

/// Moments of the count observed in `slot`, with ISI from the `isi_depth`
/// preceding emissions of the same transmitter.
pub fn hypothesis_moments(
    profile: &ArrivalProfile,
    emissions: &EmissionSchedule,
    prior: f64,
    msi: &MsiParams,
    slot: usize,
    isi_depth: usize,
) -> Result<HypothesisMoments> {
    if slot == 0 {
        return Err(Error::Contract("slots are 1-based".into()));
    }
    if isi_depth > slot - 1 {
        return Err(Error::Contract(format!(
            "isi depth {isi_depth} exceeds the {} slots preceding slot {slot}",
            slot - 1
        )));
    }
    if isi_depth >= profile.len() {
        return Err(Error::Contract(format!(
            "arrival profile holds {} lags, isi depth {isi_depth} needs {}",
            profile.len(),
            isi_depth + 1
        )));
    }
    if !(0.0..=1.0).contains(&prior) {
        return Err(Error::invalid(
            "prior",
            format!("must lie in [0, 1], got {prior}"),
        ));
    }
    msi.validate()?;
    let current = emissions
        .at(slot)
        .ok_or_else(|| Error::Contract(format!("emission schedule does not cover slot {slot}")))?
        as f64;

    let mut isi_mean = 0.0;
    let mut isi_var = 0.0;
    for lag in 1..=isi_depth {
        // slot - lag >= 1 because isi_depth <= slot - 1.
        let released = emissions.at(slot - lag).unwrap_or(0) as f64;
        let q = profile.at(lag);
        let m = released * q;
        isi_mean += prior * m;
        isi_var += prior * m * (1.0 - q) + prior * (1.0 - prior) * m * m;
    }

    let q0 = profile.at(0);
    let signal_mean = current * q0;
    let signal_var = signal_mean * (1.0 - q0);

    let mu0 = isi_mean + msi.mean;
    let mu1 = mu0 + signal_mean;
    let structural = isi_var + msi.var;
    Ok(HypothesisMoments {
        mu0,
        var0: structural + mu0,
        mu1,
        var1: structural + signal_var + mu1,
        gaussian_regime: signal_mean > 5.0 && current * (1.0 - q0) > 5.0,
    })
}

/// Moments at the receiver of hop `hop` (0 = source transmitter) for the
/// symbol the source sent in `frame`. That receiver observes absolute slot
/// `frame + hop`, with interference from the `frame - 1` earlier emissions of
/// the hop's transmitter.
pub fn hop_moments(
    profile: &ArrivalProfile,
    emissions: &EmissionSchedule,
    hop: usize,
    prior: f64,
    msi: &MsiParams,
    frame: usize,
) -> Result<HypothesisMoments> {
    if frame == 0 {
        return Err(Error::Contract("frames are 1-based".into()));
    }
    hypothesis_moments(profile, emissions, prior, msi, frame + hop, frame - 1)
}

/// Source to destination, no relays.
pub fn direct_link_moments(
    profile: &ArrivalProfile,
    source: &EmissionSchedule,
    prior: f64,
    msi: &MsiParams,
    frame: usize,
) -> Result<HypothesisMoments> {
    hop_moments(profile, source, 0, prior, msi, frame)
}

/// Source to the first relay. Identical in form to the direct link.
pub fn source_relay_moments(
    profile: &ArrivalProfile,
    source: &EmissionSchedule,
    prior: f64,
    msi: &MsiParams,
    frame: usize,
) -> Result<HypothesisMoments> {
    hop_moments(profile, source, 0, prior, msi, frame)
}

/// Single relay to destination, observed one slot after the source emission.
pub fn relay_destination_moments(
    profile: &ArrivalProfile,
    relay: &EmissionSchedule,
    prior: f64,
    msi: &MsiParams,
    frame: usize,
) -> Result<HypothesisMoments> {
    hop_moments(profile, relay, 1, prior, msi, frame)
}

/// Relay `n` to relay `n + 1`, observed in slot `frame + n`.
pub fn relay_relay_moments(
    profile: &ArrivalProfile,
    relay: &EmissionSchedule,
    n: usize,
    prior: f64,
    msi: &MsiParams,
    frame: usize,
) -> Result<HypothesisMoments> {
    if n == 0 {
        return Err(Error::Contract("relay indices start at 1".into()));
    }
    hop_moments(profile, relay, n, prior, msi, frame)
}

/// Last of `relays` relays to destination, observed in slot `frame + relays`.
pub fn multihop_destination_moments(
    profile: &ArrivalProfile,
    last_relay: &EmissionSchedule,
    relays: usize,
    prior: f64,
    msi: &MsiParams,
    frame: usize,
) -> Result<HypothesisMoments> {
    hop_moments(profile, last_relay, relays, prior, msi, frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(q: &[f64]) -> ArrivalProfile {
        ArrivalProfile::from_probabilities(q.to_vec()).unwrap()
    }

    const SEC5_Q: [f64; 4] = [
        0.44816716211908412,
        0.192_127_681_519_387_4,
        0.027816536520508413,
        0.004_230_706_328_314,
    ];

    #[test]
    fn isi_free_first_slot() {
        let m = hypothesis_moments(
            &profile(&[0.3]),
            &EmissionSchedule::constant(60, 1),
            0.5,
            &MsiParams::new(20.0, 20.0).unwrap(),
            1,
            0,
        )
        .unwrap();
        assert_eq!(m.mu0, 20.0);
        assert_eq!(m.var0, 40.0);
        assert!((m.mu1 - 38.0).abs() < 1e-12);
        assert!((m.var1 - 70.6).abs() < 1e-12);
        assert!(m.gaussian_regime);
    }

    #[test]
    fn zero_prior_removes_isi() {
        let msi = MsiParams::new(20.0, 15.0).unwrap();
        let m = hypothesis_moments(
            &profile(&SEC5_Q),
            &EmissionSchedule::constant(60, 4),
            0.0,
            &msi,
            4,
            3,
        )
        .unwrap();
        assert_eq!(m.mu0, 20.0);
        assert_eq!(m.var0, 35.0);
    }

    #[test]
    fn fourth_slot_matches_term_by_term_expansion() {
        // Independent expansion of the ISI sums for slot 4, Q = 60, β = 0.5, μo = σo² = 20.
        let msi = MsiParams::new(20.0, 20.0).unwrap();
        let m = hypothesis_moments(
            &profile(&SEC5_Q),
            &EmissionSchedule::constant(60, 4),
            0.5,
            &msi,
            4,
            3,
        )
        .unwrap();
        assert!((m.mu0 - 26.725247731046295).abs() < 1e-12);
        assert!((m.var0 - 86.25358845195467).abs() < 1e-12);
        assert!((m.mu1 - 53.61527745819134).abs() < 1e-12);
        assert!((m.var1 - 127.98241959413235).abs() < 1e-12);
    }

    #[test]
    fn relay_wrappers_shift_the_observed_slot() {
        let msi = MsiParams::new(20.0, 20.0).unwrap();
        let p = profile(&SEC5_Q);
        // Relay schedule whose count differs in every slot exposes the index bookkeeping.
        let relay = EmissionSchedule::new(vec![0, 10, 20, 30, 40]);
        let m = relay_destination_moments(&p, &relay, 0.5, &msi, 3).unwrap();
        let direct = hypothesis_moments(&p, &relay, 0.5, &msi, 4, 2).unwrap();
        assert_eq!(m, direct);
        // Current signal uses Q[4] = 30, ISI uses Q[3] = 20 and Q[2] = 10.
        let expected_mu0 = 0.5 * (20.0 * SEC5_Q[1] + 10.0 * SEC5_Q[2]) + 20.0;
        assert!((m.mu0 - expected_mu0).abs() < 1e-12);
        assert!((m.mu1 - m.mu0 - 30.0 * SEC5_Q[0]).abs() < 1e-12);

        let rr = relay_relay_moments(&p, &relay, 2, 0.5, &msi, 2).unwrap();
        assert_eq!(rr, hypothesis_moments(&p, &relay, 0.5, &msi, 4, 1).unwrap());
        let md = multihop_destination_moments(&p, &relay, 2, 0.5, &msi, 2).unwrap();
        assert_eq!(md, rr);
        assert!(relay_relay_moments(&p, &relay, 0, 0.5, &msi, 2).is_err());
    }

    #[test]
    fn contract_errors() {
        let msi = MsiParams::new(1.0, 1.0).unwrap();
        let p = profile(&SEC5_Q);
        let s = EmissionSchedule::constant(10, 3);
        assert!(matches!(
            hypothesis_moments(&p, &s, 0.5, &msi, 2, 2),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            hypothesis_moments(&p, &s, 0.5, &msi, 0, 0),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            hypothesis_moments(&p, &s, 0.5, &msi, 4, 0),
            Err(Error::Contract(_))
        ));
        let short = profile(&[0.3]);
        assert!(matches!(
            hypothesis_moments(&short, &s, 0.5, &msi, 3, 2),
            Err(Error::Contract(_))
        ));
        assert!(hypothesis_moments(&p, &s, 1.5, &msi, 1, 0).is_err());
        assert!(MsiParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn vanishing_tail_reduces_to_first_slot() {
        let msi = MsiParams::new(12.0, 7.0).unwrap();
        let p = profile(&[0.4, 0.0, 0.0, 0.0, 0.0]);
        let s = EmissionSchedule::constant(80, 5);
        let first = hypothesis_moments(&p, &s, 0.3, &msi, 1, 0).unwrap();
        for slot in 2..=5 {
            assert_eq!(
                hypothesis_moments(&p, &s, 0.3, &msi, slot, slot - 1).unwrap(),
                first
            );
        }
    }

    #[test]
    fn gaussian_regime_flag() {
        let msi = MsiParams::new(1.0, 1.0).unwrap();
        let low = hypothesis_moments(
            &profile(&[0.05]),
            &EmissionSchedule::constant(60, 1),
            0.5,
            &msi,
            1,
            0,
        )
        .unwrap();
        assert!(!low.gaussian_regime);
        let high = hypothesis_moments(
            &profile(&[0.95]),
            &EmissionSchedule::constant(60, 1),
            0.5,
            &msi,
            1,
            0,
        )
        .unwrap();
        assert!(!high.gaussian_regime);
    }

    proptest! {
        #[test]
        fn variance_gap_identity(
            q in proptest::collection::vec(0.0f64..0.14, 1..8),
            counts in proptest::collection::vec(0u32..300, 8),
            prior in 0.0f64..=1.0,
            msi_mean in 0.0f64..50.0,
            msi_var in 0.0f64..50.0,
            slot_pick in 0usize..8,
        ) {
            let p = ArrivalProfile::from_probabilities(q.clone()).unwrap();
            let s = EmissionSchedule::new(counts.clone());
            let msi = MsiParams::new(msi_mean, msi_var).unwrap();
            let slot = 1 + slot_pick % 8;
            let depth = (slot - 1).min(p.len() - 1);
            let m = hypothesis_moments(&p, &s, prior, &msi, slot, depth).unwrap();
            let signal = counts[slot - 1] as f64 * q[0];
            let gap = signal * (1.0 - q[0]) + (m.mu1 - m.mu0);
            prop_assert!((m.var1 - m.var0 - gap).abs() <= 1e-9 * m.var1.max(1.0));
            prop_assert!(m.mu1 >= m.mu0);
            if signal == 0.0 {
                prop_assert_eq!(m.mu1, m.mu0);
            } else if signal > 1e-6 {
                prop_assert!(m.mu1 > m.mu0);
            }
            prop_assert!(m.var1 >= m.var0);
            if msi_mean > 0.0 || msi_var > 0.0 {
                prop_assert!(m.var0 > 0.0 && m.var1 > 0.0);
            }
        }
    }
}
