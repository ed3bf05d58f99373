//! Likelihood-ratio decision thresholds for directly observed and relayed
//! transmissions.
//!
//! A receiver tests `p(R | H1) / p(R | H0)` against an odds factor. For a
//! direct link the factor is the prior odds `(1 − β)/β`. When the transmitter
//! is a relay that re-emits its own hard decision, the H0/H1 likelihoods become
//! mixtures over the relay's decision, and the factor absorbs the relay's
//! detection and false-alarm probabilities. With Gaussian likelihoods the test
//! reduces to a quadratic in the received count whose upper root is the
//! scalar threshold.

use crate::error::{Error, Result};
use crate::moments::HypothesisMoments;

/// Upper bound on relays for the state-enumeration routines.
pub const MAX_ENUMERATED_RELAYS: usize = 20;

/// Detection and false-alarm probability of one decoding node in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub pd: f64,
    pub pfa: f64,
}

impl Rates {
    pub const PERFECT: Rates = Rates { pd: 1.0, pfa: 0.0 };

    pub fn new(pd: f64, pfa: f64) -> Result<Self> {
        for (name, p) in [("pd", pd), ("pfa", pfa)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {p}")));
            }
        }
        Ok(Self { pd, pfa })
    }
}

/// Per-slot rates of one decoding node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodePerformance {
    pub pd: Vec<f64>,
    pub pfa: Vec<f64>,
}

impl NodePerformance {
    pub fn push(&mut self, r: Rates) {
        self.pd.push(r.pd);
        self.pfa.push(r.pfa);
    }

    pub fn len(&self) -> usize {
        self.pd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pd.is_empty()
    }

    pub fn slot(&self, index: usize) -> Option<Rates> {
        Some(Rates {
            pd: *self.pd.get(index)?,
            pfa: *self.pfa.get(index)?,
        })
    }
}

/// Positive factor the likelihood ratio is compared against.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EffectiveOdds(f64);

impl EffectiveOdds {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::invalid(
                "odds",
                format!("must be finite and > 0, got {value}"),
            ))
        }
    }

    /// Prior odds `(1 − β)/β` of a directly observed transmitter.
    pub fn direct(prior: f64) -> Result<Self> {
        check_prior(prior)?;
        Self::new((1.0 - prior) / prior)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_prior(prior: f64) -> Result<()> {
    if prior > 0.0 && prior < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "prior",
            format!("must lie in (0, 1), got {prior}"),
        ))
    }
}

fn odds_from_parts(numerator: f64, denominator: f64) -> Result<EffectiveOdds> {
    if !(denominator > 0.0 && numerator > 0.0) {
        return Err(Error::UninformativeRelay {
            numerator,
            denominator,
        });
    }
    EffectiveOdds::new(numerator / denominator)
}

/// Odds factor for a receiver whose transmitter relays decisions made with
/// `upstream` rates.
pub fn effective_prior_ratio(prior: f64, upstream: Rates) -> Result<EffectiveOdds> {
    check_prior(prior)?;
    let Rates { pd, pfa } = upstream;
    let numerator = (1.0 - prior) * (1.0 - pfa) - prior * (1.0 - pd);
    let denominator = prior * pd - (1.0 - prior) * pfa;
    odds_from_parts(numerator, denominator)
}

/// Probabilities of one joint relay state under H0 and H1. Bit `N − 1 − n` of
/// `state` is relay `n`'s decision (relay indices from 0), so the least
/// significant bit belongs to the last relay.
pub(crate) fn state_probabilities(chain: &[Rates], state: usize) -> (f64, f64) {
    let n = chain.len();
    let mut under_h0 = 1.0;
    let mut under_h1 = 1.0;
    for (idx, r) in chain.iter().enumerate() {
        if state >> (n - 1 - idx) & 1 == 1 {
            under_h0 *= r.pfa;
            under_h1 *= r.pd;
        } else {
            under_h0 *= 1.0 - r.pfa;
            under_h1 *= 1.0 - r.pd;
        }
    }
    (under_h0, under_h1)
}

pub(crate) fn check_chain(chain: &[Rates]) -> Result<()> {
    if chain.is_empty() {
        return Err(Error::Contract(
            "relay chain must hold at least one relay".into(),
        ));
    }
    if chain.len() > MAX_ENUMERATED_RELAYS {
        return Err(Error::Contract(format!(
            "{} relays exceed the enumeration limit of {MAX_ENUMERATED_RELAYS}",
            chain.len()
        )));
    }
    Ok(())
}

/// Odds factor obtained by summing over all `2^N` joint relay decision states.
///
/// States where the last relay decided 0 (even index) feed the numerator,
/// the rest the denominator. The result depends only on the last relay; this
/// routine exists to certify that collapse.
pub fn brute_force_prior_ratio(prior: f64, chain: &[Rates]) -> Result<EffectiveOdds> {
    check_prior(prior)?;
    check_chain(chain)?;
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for state in 0..(1usize << chain.len()) {
        let (h0, h1) = state_probabilities(chain, state);
        if state % 2 == 0 {
            numerator += (1.0 - prior) * h0 - prior * h1;
        } else {
            denominator += prior * h1 - (1.0 - prior) * h0;
        }
    }
    odds_from_parts(numerator, denominator)
}

/// One slot's decision rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdEntry {
    /// Decide 1 iff the count exceeds the value.
    Threshold(f64),
    /// The weighted likelihoods never cross and H0 always wins.
    AlwaysH0,
    /// The weighted likelihoods never cross and H1 always wins.
    AlwaysH1,
}

impl ThresholdEntry {
    pub fn value(self) -> Option<f64> {
        match self {
            ThresholdEntry::Threshold(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_degenerate(self) -> bool {
        !matches!(self, ThresholdEntry::Threshold(_))
    }
}

/// Per-slot thresholds of one decoding node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThresholdSchedule {
    pub entries: Vec<ThresholdEntry>,
}

impl ThresholdSchedule {
    pub fn degenerate_slots(&self) -> usize {
        self.entries.iter().filter(|e| e.is_degenerate()).count()
    }
}

/// Bayes threshold for Gaussian hypotheses weighted by `odds`.
///
/// The log-likelihood-ratio test is the quadratic
/// `A·R² + 2B·R + C ≥ 0` with `A = σ1² − σ0²`, `B = μ1σ0² − μ0σ1²` and
/// `C = μ0²σ1² − μ1²σ0² − 2σ0²σ1²·ln(odds·σ1/σ0)`. Its upper root, the
/// completed-square form `√γ − α` with `α = B/A` and `γ = (B² − AC)/A²`, is
/// evaluated in the cancellation-free arrangement.
pub fn optimal_threshold(
    moments: &HypothesisMoments,
    odds: EffectiveOdds,
) -> Result<ThresholdEntry> {
    let HypothesisMoments {
        mu0,
        var0,
        mu1,
        var1,
        ..
    } = *moments;
    if !(var0 > 0.0 && var1 > 0.0) || !(mu0.is_finite() && mu1.is_finite()) {
        return Err(Error::invalid(
            "moments",
            "variances must be positive and means finite",
        ));
    }
    if mu1 == mu0 && var1 == var0 {
        return Err(Error::IndistinguishableHypotheses);
    }
    if var1 < var0 || mu1 < mu0 {
        return Err(Error::invalid(
            "moments",
            "the H1 count must dominate H0 in mean and variance for a one-sided rule",
        ));
    }
    let ln_odds = odds.value().ln();

    if var1 == var0 {
        return Ok(ThresholdEntry::Threshold(
            0.5 * (mu0 + mu1) + var0 * ln_odds / (mu1 - mu0),
        ));
    }

    let a = var1 - var0;
    let b = mu1 * var0 - mu0 * var1;
    let log_factor = ln_odds + 0.5 * (var1 / var0).ln();
    let c = mu0 * mu0 * var1 - mu1 * mu1 * var0 - 2.0 * var0 * var1 * log_factor;
    let disc = b * b - a * c;
    if disc < 0.0 {
        // No real crossing: the sign of the test statistic is constant.
        let at_mu0 = a * mu0 * mu0 + 2.0 * b * mu0 + c;
        return Ok(if at_mu0 > 0.0 {
            ThresholdEntry::AlwaysH1
        } else {
            ThresholdEntry::AlwaysH0
        });
    }
    let s = disc.sqrt();
    let root = if b > 0.0 { -c / (b + s) } else { (s - b) / a };
    Ok(ThresholdEntry::Threshold(root))
}

/// Applies a decision rule; ties go to 0.
pub fn decide(count: f64, entry: ThresholdEntry) -> u8 {
    match entry {
        ThresholdEntry::Threshold(t) => u8::from(count > t),
        ThresholdEntry::AlwaysH0 => 0,
        ThresholdEntry::AlwaysH1 => 1,
    }
}
