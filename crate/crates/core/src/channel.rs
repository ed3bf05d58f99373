//! Single-hop diffusion channel: first-hitting-time density of a drifting
//! Brownian particle and the per-slot arrival probabilities derived from it.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, SimpsonConfig};

/// Absolute tolerance used for every per-lag arrival integral.
pub const ARRIVAL_ABS_TOL: f64 = 1e-10;

/// Physical parameters of one hop, in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionLink {
    /// Transmitter to receiver distance (m).
    pub distance: f64,
    /// Drift velocity along the link (m/s).
    pub drift_velocity: f64,
    /// Diffusion coefficient (m²/s).
    pub diffusion_coeff: f64,
    /// Exponential lifetime rate of a molecule (1/s); zero disables degradation.
    pub degradation_rate: f64,
    /// Slot duration (s).
    pub slot_duration: f64,
}

impl DiffusionLink {
    pub fn new(
        distance: f64,
        drift_velocity: f64,
        diffusion_coeff: f64,
        degradation_rate: f64,
        slot_duration: f64,
    ) -> Result<Self> {
        let link = Self {
            distance,
            drift_velocity,
            diffusion_coeff,
            degradation_rate,
            slot_duration,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        positive("distance", self.distance)?;
        positive("drift_velocity", self.drift_velocity)?;
        positive("diffusion_coeff", self.diffusion_coeff)?;
        positive("slot_duration", self.slot_duration)?;
        if !(self.degradation_rate >= 0.0 && self.degradation_rate.is_finite()) {
            return Err(Error::invalid(
                "degradation_rate",
                format!("must be finite and >= 0, got {}", self.degradation_rate),
            ));
        }
        let (mean, shape) = (self.mean_hitting_time(), self.shape());
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::invalid(
                "drift_velocity",
                "mean hitting time is not finite",
            ));
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::invalid(
                "diffusion_coeff",
                "shape parameter is not finite",
            ));
        }
        Ok(())
    }

    /// Mean first hitting time `d / v` (s).
    pub fn mean_hitting_time(&self) -> f64 {
        self.distance / self.drift_velocity
    }

    /// Inverse Gaussian shape `d² / 2D` (s).
    pub fn shape(&self) -> f64 {
        self.distance * self.distance / (2.0 * self.diffusion_coeff)
    }

    /// Copy of the link with a different distance.
    pub fn with_distance(mut self, distance: f64) -> Self {
        self.distance = distance;
        self
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

/// Inverse Gaussian first-hitting-time density at `t` (1/s). Zero for `t <= 0`.
pub fn hitting_time_pdf(t: f64, link: &DiffusionLink) -> Result<f64> {
    link.validate()?;
    Ok(ig_density(t, link.mean_hitting_time(), link.shape()))
}

fn ig_density(t: f64, mean: f64, shape: f64) -> f64 {
    if t <= 0.0 || !t.is_finite() {
        return 0.0;
    }
    // Log domain keeps the t -> 0 limit free of inf * 0.
    let d = t - mean;
    let log_f =
        0.5 * (shape / (2.0 * PI)).ln() - 1.5 * t.ln() - shape * d * d / (2.0 * mean * mean * t);
    log_f.exp()
}

/// Per-lag arrival probabilities `q[i]` for one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProfile {
    q: Vec<f64>,
}

impl ArrivalProfile {
    /// Builds a profile from raw probabilities, checking the profile invariants.
    pub fn from_probabilities(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::invalid("q", "profile must hold at least one lag"));
        }
        if let Some(bad) = q.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(
                "q",
                format!("probability {bad} outside [0, 1]"),
            ));
        }
        let sum: f64 = q.iter().sum();
        if sum > 1.0 + 1e-9 {
            return Err(Error::invalid(
                "q",
                format!("probabilities sum to {sum} > 1"),
            ));
        }
        Ok(Self { q })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Arrival probability at `lag`, zero beyond the stored horizon.
    pub fn at(&self, lag: usize) -> f64 {
        self.q.get(lag).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }
}

/// Probability that a molecule released at the start of a slot arrives alive
/// during the window `[lag·τ, (lag+1)·τ]`.
pub fn arrival_probability(link: &DiffusionLink, lag: usize) -> Result<f64> {
    arrival_probability_with_tol(link, lag, ARRIVAL_ABS_TOL)
}

pub(crate) fn arrival_probability_with_tol(
    link: &DiffusionLink,
    lag: usize,
    abs_tol: f64,
) -> Result<f64> {
    link.validate()?;
    let (mean, shape, alpha) = (
        link.mean_hitting_time(),
        link.shape(),
        link.degradation_rate,
    );
    let tau = link.slot_duration;
    let cfg = SimpsonConfig {
        abs_tol,
        ..SimpsonConfig::default()
    };
    let value = adaptive_simpson(
        |t| ig_density(t, mean, shape) * (-alpha * t).exp(),
        lag as f64 * tau,
        (lag + 1) as f64 * tau,
        &cfg,
    )?;
    Ok(value.clamp(0.0, 1.0))
}

/// Arrival probabilities for lags `0..max_lag`.
pub fn arrival_profile(link: &DiffusionLink, max_lag: usize) -> Result<ArrivalProfile> {
    if max_lag == 0 {
        return Err(Error::invalid("max_lag", "must be >= 1"));
    }
    let q = (0..max_lag)
        .map(|lag| arrival_probability(link, lag))
        .collect::<Result<Vec<_>>>()?;
    // Independent windows can overshoot the partition bound by quadrature error.
    let sum: f64 = q.iter().sum();
    let q = if sum > 1.0 {
        q.into_iter().map(|p| p / sum).collect()
    } else {
        q
    };
    ArrivalProfile::from_probabilities(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sec5_link(distance_um: f64) -> DiffusionLink {
        DiffusionLink::new(distance_um * 1e-6, 7e-6, 2.2e-11, 0.2, 2.0).unwrap()
    }

    #[test]
    fn density_vanishes_at_origin() {
        assert_eq!(hitting_time_pdf(0.0, &sec5_link(30.0)).unwrap(), 0.0);
        assert_eq!(hitting_time_pdf(-1.0, &sec5_link(30.0)).unwrap(), 0.0);
        assert_eq!(hitting_time_pdf(1e-300, &sec5_link(30.0)).unwrap(), 0.0);
    }

    #[test]
    fn derived_parameters() {
        let link = sec5_link(30.0);
        assert!((link.mean_hitting_time() - 4.285714285714286).abs() < 1e-12);
        assert!((link.shape() - 20.454545454545453).abs() < 1e-9);
    }

    #[test]
    fn density_matches_high_precision_values() {
        // 40-digit mpmath evaluations of the closed-form density.
        let link = sec5_link(30.0);
        for (t, expected) in [
            (link.mean_hitting_time(), 0.203_362_166_635_231_9),
            (1.0, 0.004_421_839_005_346_817),
            (10.0, 0.009_261_442_858_823_28),
        ] {
            let got = hitting_time_pdf(t, &link).unwrap();
            assert!(
                ((got - expected) / expected).abs() < 1e-12,
                "f({t}) = {got}"
            );
        }
    }

    #[test]
    fn arrival_probabilities_match_high_precision_quadrature() {
        // mpmath quad of f(t)·exp(-αt) over each window (d = 15 µm, α = 0.2, τ = 2 s).
        let expected = [
            0.44816716211908412,
            0.192_127_681_519_387_4,
            0.027816536520508413,
            0.004_230_706_328_314,
            0.000_686_871_669_497_947_2,
            0.00011710071875960627,
        ];
        let link = sec5_link(15.0);
        for (lag, want) in expected.iter().enumerate() {
            let got = arrival_probability(&link, lag).unwrap();
            assert!((got - want).abs() < 1e-10, "lag {lag}: {got} vs {want}");
        }
    }

    #[test]
    fn invalid_links_are_rejected() {
        assert!(matches!(
            DiffusionLink::new(0.0, 7e-6, 2.2e-11, 0.2, 2.0),
            Err(Error::InvalidParameter {
                name: "distance",
                ..
            })
        ));
        assert!(DiffusionLink::new(1e-5, -1.0, 2.2e-11, 0.2, 2.0).is_err());
        assert!(DiffusionLink::new(1e-5, 1e-5, 0.0, 0.2, 2.0).is_err());
        assert!(DiffusionLink::new(1e-5, 1e-5, 2.2e-11, -0.1, 2.0).is_err());
        assert!(DiffusionLink::new(1e-5, 1e-5, 2.2e-11, 0.2, -2.0).is_err());
        let mut bad = sec5_link(10.0);
        bad.drift_velocity = 0.0;
        assert!(hitting_time_pdf(1.0, &bad).is_err());
        assert!(arrival_probability(&bad, 0).is_err());
    }

    #[test]
    fn heavy_degradation_kills_arrivals() {
        let mut link = sec5_link(15.0);
        link.degradation_rate = 1e6;
        for lag in 0..4 {
            assert!(arrival_probability(&link, lag).unwrap() < 1e-12);
        }
    }

    #[test]
    fn single_lag_profile_equals_lag_zero() {
        let link = sec5_link(15.0);
        let p = arrival_profile(&link, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.at(0), arrival_probability(&link, 0).unwrap());
        assert_eq!(p.at(5), 0.0);
        assert!(arrival_profile(&link, 0).is_err());
    }

    #[test]
    fn profile_decreases_after_mean_lag() {
        let link = sec5_link(15.0);
        let p = arrival_profile(&link, 30).unwrap();
        assert!(p.as_slice().iter().sum::<f64>() <= 1.0);
        let mean_lag = (link.mean_hitting_time() / link.slot_duration).floor() as usize;
        for lag in mean_lag..29 {
            let tight_a = arrival_probability_with_tol(&link, lag, 1e-11).unwrap();
            let tight_b = arrival_probability_with_tol(&link, lag + 1, 1e-11).unwrap();
            assert!(tight_a > tight_b);
            if p.at(lag + 1) > 1e-10 {
                assert!(p.at(lag) > p.at(lag + 1), "lag {lag}");
            }
        }
    }

    #[test]
    fn profile_constructor_checks_invariants() {
        assert!(ArrivalProfile::from_probabilities(vec![]).is_err());
        assert!(ArrivalProfile::from_probabilities(vec![1.2]).is_err());
        assert!(ArrivalProfile::from_probabilities(vec![0.7, 0.6]).is_err());
        assert!(ArrivalProfile::from_probabilities(vec![0.3, 0.2]).is_ok());
    }
}
