//! Trial-level simulation of a relay chain.
//!
//! Frames are simulated in blocks of `K` consecutive source symbols that start
//! from an empty channel, so frame `j` of every block sees the same
//! interference history as the analytic frame `j`. Each transmitted molecule
//! batch is thinned by an exact binomial draw, multi-source interference and
//! the counting error are Gaussian, and every relay re-emits its hard decision
//! in the following slot.
//!
//! Block `b` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `b`. Results are sums of integer counts over blocks, so they do not depend
//! on how blocks are spread across threads.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, InverseGaussian, StandardNormal};
use rayon::prelude::*;

use crate::channel::DiffusionLink;
use crate::detection::{decide, Rates, ThresholdEntry};
use crate::error::{Error, Result};
use crate::performance::{ChainConfig, ChainModel, RelayMode};

/// Two-sided 95% normal quantile used for the Wilson intervals.
pub const WILSON_Z: f64 = 1.96;

/// Lower bound on the counting-error variance.
const MIN_COUNTING_VAR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub chain: ChainConfig,
    pub frames: u64,
    pub seed: u64,
}

/// How one decoding node turns its observation into a bit.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionRule {
    /// One rule per frame index within a block.
    Thresholds(Vec<ThresholdEntry>),
    /// Decides 1 with probability `pd` when the source sent 1 and `pfa`
    /// otherwise, without observing the channel.
    Pinned(Rates),
}

/// The analytic optimal rules of every decoding node at the chain's prior.
pub fn decision_rules(model: &ChainModel) -> Result<Vec<DecisionRule>> {
    let cfg = model.config();
    let report = model.report(cfg.prior)?;
    Ok(report
        .nodes
        .into_iter()
        .enumerate()
        .map(|(i, node)| match cfg.relay_mode {
            RelayMode::Pinned(r) if i == 0 && cfg.relays() > 0 => DecisionRule::Pinned(r),
            _ => DecisionRule::Thresholds(node.thresholds.entries),
        })
        .collect())
}

/// Raw tallies, mergeable by summation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimCounts {
    pub frames: u64,
    /// Frames whose source symbol was 1.
    pub ones: u64,
    /// Per decoding node: frames with source 1 decided as 1.
    pub detections: Vec<u64>,
    /// Per decoding node: frames with source 0 decided as 1.
    pub false_alarms: Vec<u64>,
}

impl SimCounts {
    pub fn empty(nodes: usize) -> Self {
        Self {
            frames: 0,
            ones: 0,
            detections: vec![0; nodes],
            false_alarms: vec![0; nodes],
        }
    }

    pub fn merge(mut self, other: &SimCounts) -> Self {
        self.frames += other.frames;
        self.ones += other.ones;
        for (a, b) in self.detections.iter_mut().zip(&other.detections) {
            *a += b;
        }
        for (a, b) in self.false_alarms.iter_mut().zip(&other.false_alarms) {
            *a += b;
        }
        self
    }
}

/// A proportion with its Wilson 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
    pub trials: u64,
}

impl Estimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                value: 0.0,
                half_width: 1.0,
                trials,
            };
        }
        let p = successes as f64 / trials as f64;
        Self {
            value: p,
            half_width: wilson_half_width(p, trials),
            trials,
        }
    }

    /// Whether `x` lies within `k` half-widths of the estimate.
    pub fn agrees_with(&self, x: f64, k: f64) -> bool {
        (self.value - x).abs() <= k * self.half_width
    }
}

pub fn wilson_half_width(p: f64, trials: u64) -> f64 {
    let n = trials as f64;
    let z2 = WILSON_Z * WILSON_Z;
    WILSON_Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEstimate {
    pub pd: Estimate,
    pub pfa: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub frames: u64,
    /// Destination error rate.
    pub pe: Estimate,
    pub pd: Estimate,
    pub pfa: Estimate,
    /// Relay 1..N, then the destination.
    pub nodes: Vec<NodeEstimate>,
    pub counts: SimCounts,
}

impl SimReport {
    pub fn from_counts(counts: SimCounts) -> Self {
        let zeros = counts.frames - counts.ones;
        let nodes: Vec<NodeEstimate> = counts
            .detections
            .iter()
            .zip(&counts.false_alarms)
            .map(|(&d, &f)| NodeEstimate {
                pd: Estimate::new(d, counts.ones),
                pfa: Estimate::new(f, zeros),
            })
            .collect();
        let dest = *nodes.last().expect("at least one decoding node");
        let d = *counts.detections.last().unwrap_or(&0);
        let f = *counts.false_alarms.last().unwrap_or(&0);
        let errors = (counts.ones - d) + f;
        Self {
            frames: counts.frames,
            pe: Estimate::new(errors, counts.frames),
            pd: dest.pd,
            pfa: dest.pfa,
            nodes,
            counts,
        }
    }
}

pub fn simulate_chain(cfg: &SimConfig) -> Result<SimReport> {
    let model = ChainModel::new(cfg.chain.clone())?;
    let rules = decision_rules(&model)?;
    simulate_with_rules(&model, &rules, cfg.frames, cfg.seed)
}

/// Simulates `frames` frames with caller-supplied decision rules.
pub fn simulate_with_rules(
    model: &ChainModel,
    rules: &[DecisionRule],
    frames: u64,
    seed: u64,
) -> Result<SimReport> {
    if frames == 0 {
        return Err(Error::invalid("frames", "must be >= 1"));
    }
    check_rules(model, rules)?;
    let k = model.config().num_slots as u64;
    let blocks = frames.div_ceil(k);
    let counts = simulate_blocks(model, rules, frames, seed, 0..blocks)?;
    Ok(SimReport::from_counts(counts))
}

fn check_rules(model: &ChainModel, rules: &[DecisionRule]) -> Result<()> {
    let cfg = model.config();
    if rules.len() != cfg.hops.len() {
        return Err(Error::Contract(format!(
            "{} decision rules for {} decoding nodes",
            rules.len(),
            cfg.hops.len()
        )));
    }
    for rule in rules {
        if let DecisionRule::Thresholds(t) = rule {
            if t.len() < cfg.num_slots {
                return Err(Error::Contract(format!(
                    "{} thresholds for {} frames per block",
                    t.len(),
                    cfg.num_slots
                )));
            }
        }
    }
    Ok(())
}

/// Tallies for the given block indices of a run of `frames` frames.
pub fn simulate_blocks(
    model: &ChainModel,
    rules: &[DecisionRule],
    frames: u64,
    seed: u64,
    blocks: Range<u64>,
) -> Result<SimCounts> {
    check_rules(model, rules)?;
    let nodes = rules.len();
    let k = model.config().num_slots as u64;
    Ok(blocks
        .into_par_iter()
        .map(|b| {
            let start = b * k;
            let len = frames.saturating_sub(start).min(k) as usize;
            simulate_block(model, rules, seed, b, len)
        })
        .reduce(|| SimCounts::empty(nodes), |a, b| a.merge(&b)))
}

fn simulate_block(
    model: &ChainModel,
    rules: &[DecisionRule],
    seed: u64,
    block: u64,
    len: usize,
) -> SimCounts {
    let cfg = model.config();
    let mut counts = SimCounts::empty(rules.len());
    if len == 0 {
        return counts;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);

    let prior = cfg.prior;
    let msi_sd = cfg.msi.var.sqrt();
    let source: Vec<bool> = (0..len).map(|_| rng.random_bool(prior)).collect();
    let mut sent = source.clone();

    for (hop, rule) in rules.iter().enumerate() {
        let profile = &model.profiles()[hop];
        let schedule = &cfg.emissions[hop];
        let mut decided = Vec::with_capacity(len);
        for f in 0..len {
            let bit = match rule {
                DecisionRule::Pinned(r) => rng.random_bool(if source[f] { r.pd } else { r.pfa }),
                DecisionRule::Thresholds(entries) => {
                    let slot = f + 1 + hop;
                    let mut count = 0.0;
                    let mut expected = cfg.msi.mean;
                    for lag in 0..=f {
                        if !sent[f - lag] {
                            continue;
                        }
                        let released = schedule.at(slot - lag).unwrap_or(0) as u64;
                        let q = profile.at(lag);
                        if released == 0 || q <= 0.0 {
                            continue;
                        }
                        let arrived = Binomial::new(released, q)
                            .expect("q lies in [0, 1]")
                            .sample(&mut rng);
                        count += arrived as f64;
                        expected += released as f64 * q;
                    }
                    let z_msi: f64 = rng.sample(StandardNormal);
                    let z_count: f64 = rng.sample(StandardNormal);
                    count += cfg.msi.mean + msi_sd * z_msi;
                    count += expected.max(MIN_COUNTING_VAR).sqrt() * z_count;
                    decide(count, entries[f]) == 1
                }
            };
            decided.push(bit);
        }
        for (f, &d) in decided.iter().enumerate() {
            if d && source[f] {
                counts.detections[hop] += 1;
            } else if d {
                counts.false_alarms[hop] += 1;
            }
        }
        sent = decided;
    }
    counts.frames = len as u64;
    counts.ones = source.iter().filter(|&&b| b).count() as u64;
    counts
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMean {
    pub mean: f64,
    pub std_err: f64,
}

impl SampleMean {
    /// `|mean − x|` in standard errors.
    pub fn z_score(&self, x: f64) -> f64 {
        if self.std_err > 0.0 {
            (self.mean - x).abs() / self.std_err
        } else if self.mean == x {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Arrival probabilities for lags `0..lags` estimated from `samples` inverse
/// Gaussian hitting times, each weighted by its survival probability `e^{−αt}`.
pub fn sample_arrival_probabilities(
    link: &DiffusionLink,
    lags: usize,
    samples: u64,
    seed: u64,
) -> Result<Vec<SampleMean>> {
    link.validate()?;
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2 samples"));
    }
    let ig = InverseGaussian::new(link.mean_hitting_time(), link.shape())
        .map_err(|e| Error::invalid("link", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; lags];
    let mut sum_sq = vec![0.0; lags];
    for _ in 0..samples {
        let t: f64 = ig.sample(&mut rng);
        let lag = (t / link.slot_duration).floor();
        if lag < lags as f64 {
            let w = (-link.degradation_rate * t).exp();
            sum[lag as usize] += w;
            sum_sq[lag as usize] += w * w;
        }
    }
    let n = samples as f64;
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &s2)| {
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            SampleMean {
                mean,
                std_err: (var / n).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DiffusionLink;
    use crate::moments::MsiParams;
    use crate::performance::system_metrics;

    fn chain(hops: usize, q: u32, mode: RelayMode) -> ChainConfig {
        let link = DiffusionLink::new(10e-6, 1e-5, 2.2e-11, 0.2, 2.5).unwrap();
        ChainConfig::with_constant_emissions(
            vec![link; hops],
            &vec![q; hops],
            0.5,
            MsiParams::new(20.0, 20.0).unwrap(),
            10,
            mode,
        )
    }

    #[test]
    fn wilson_reference() {
        // p = 0.1, n = 1000.
        let hw = wilson_half_width(0.1, 1000);
        let z: f64 = 1.96;
        let n = 1000.0;
        let expect = z / (1.0 + z * z / n) * (0.09 / n + z * z / (4.0 * n * n)).sqrt();
        assert!((hw - expect).abs() < 1e-15);
        assert!(wilson_half_width(0.1, 4000) < hw / 1.9);
    }

    #[test]
    fn same_seed_same_report() {
        let cfg = SimConfig {
            chain: chain(2, 60, RelayMode::Computed),
            frames: 2_000,
            seed: 7,
        };
        assert_eq!(simulate_chain(&cfg).unwrap(), simulate_chain(&cfg).unwrap());
        let other = SimConfig {
            seed: 8,
            ..cfg.clone()
        };
        assert_ne!(
            simulate_chain(&cfg).unwrap().counts,
            simulate_chain(&other).unwrap().counts
        );
    }

    #[test]
    fn partitions_merge_to_the_same_totals() {
        let model = ChainModel::new(chain(2, 60, RelayMode::Computed)).unwrap();
        let rules = decision_rules(&model).unwrap();
        let frames = 995;
        let whole = simulate_blocks(&model, &rules, frames, 3, 0..100).unwrap();
        let parts = [0..13, 13..50, 50..51, 51..100]
            .into_iter()
            .map(|r| simulate_blocks(&model, &rules, frames, 3, r).unwrap())
            .fold(SimCounts::empty(2), |a, b| a.merge(&b));
        assert_eq!(whole, parts);
        assert_eq!(whole.frames, frames);
    }

    #[test]
    fn null_signal_gives_equal_rates() {
        let model = ChainModel::new(chain(1, 0, RelayMode::Computed)).unwrap();
        let rules = vec![DecisionRule::Thresholds(vec![
            ThresholdEntry::Threshold(
                20.0
            );
            10
        ])];
        let rep = simulate_with_rules(&model, &rules, 20_000, 11).unwrap();
        let gap = (rep.pd.value - rep.pfa.value).abs();
        assert!(gap <= rep.pd.half_width + rep.pfa.half_width, "{rep:?}");
    }

    #[test]
    fn pinned_relay_follows_its_rates() {
        let pinned = Rates { pd: 0.9, pfa: 0.2 };
        let cfg = SimConfig {
            chain: chain(2, 60, RelayMode::Pinned(pinned)),
            frames: 20_000,
            seed: 5,
        };
        let rep = simulate_chain(&cfg).unwrap();
        assert!(rep.nodes[0].pd.agrees_with(0.9, 3.0));
        assert!(rep.nodes[0].pfa.agrees_with(0.2, 3.0));
    }

    #[test]
    fn direct_link_matches_analytic_rates() {
        let chain = chain(1, 150, RelayMode::Computed);
        let analytic = system_metrics(&chain).unwrap();
        let rep = simulate_chain(&SimConfig {
            chain,
            frames: 20_000,
            seed: 1,
        })
        .unwrap();
        assert!(
            rep.pe.agrees_with(analytic.avg_pe, 3.0),
            "{} vs {}",
            rep.pe.value,
            analytic.avg_pe
        );
    }

    #[test]
    fn sampled_arrivals_agree_with_quadrature() {
        let link = DiffusionLink::new(15e-6, 7e-6, 2.2e-11, 0.2, 2.0).unwrap();
        let est = sample_arrival_probabilities(&link, 4, 200_000, 9).unwrap();
        for (lag, e) in est.iter().enumerate() {
            let q = crate::channel::arrival_probability(&link, lag).unwrap();
            assert!(e.z_score(q) < 4.0, "lag {lag}: {e:?} vs {q}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = ChainModel::new(chain(1, 60, RelayMode::Computed)).unwrap();
        let rules = decision_rules(&model).unwrap();
        assert!(simulate_with_rules(&model, &rules, 0, 1).is_err());
        assert!(simulate_with_rules(&model, &rules[..0], 10, 1).is_err());
        let short = vec![DecisionRule::Thresholds(vec![ThresholdEntry::AlwaysH0; 3])];
        assert!(simulate_with_rules(&model, &short, 10, 1).is_err());
    }
}
