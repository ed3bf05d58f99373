//! Closed-form detection, false-alarm and error probabilities for every
//! decoding node of a relay chain.
//!
//! A chain has `N` relays and `N + 1` hops. Hop `h` carries the decision of
//! node `h` (node 0 is the source) to node `h + 1`; node `N + 1` is the
//! destination. The symbol the source sends in frame `j` is decoded by node
//! `h + 1` in absolute slot `j + h`.

use crate::channel::{arrival_profile, ArrivalProfile, DiffusionLink};
use crate::detection::{
    check_chain, effective_prior_ratio, optimal_threshold, state_probabilities, EffectiveOdds,
    NodePerformance, Rates, ThresholdEntry, ThresholdSchedule,
};
use crate::error::{Error, Result};
use crate::moments::{hop_moments, EmissionSchedule, HypothesisMoments, MsiParams};
use crate::special::q_function;

/// How the first relay's detection performance is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelayMode {
    /// Every node decodes with its optimal threshold.
    Computed,
    /// The first relay's `(pd, pfa)` is fixed in every slot.
    Pinned(Rates),
}

/// Everything that defines a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// `N + 1` hops, source side first.
    pub hops: Vec<DiffusionLink>,
    /// One schedule per transmitting node (source, relay 1, ..., relay N),
    /// indexed by absolute slot.
    pub emissions: Vec<EmissionSchedule>,
    pub prior: f64,
    pub msi: MsiParams,
    /// Number of source frames `K`.
    pub num_slots: usize,
    /// Ignored when the chain has no relays.
    pub relay_mode: RelayMode,
}

impl ChainConfig {
    /// Chain in which node `n` releases `counts[n]` molecules in every slot.
    pub fn with_constant_emissions(
        hops: Vec<DiffusionLink>,
        counts: &[u32],
        prior: f64,
        msi: MsiParams,
        num_slots: usize,
        relay_mode: RelayMode,
    ) -> Self {
        let slots = num_slots + hops.len().saturating_sub(1);
        Self {
            emissions: counts
                .iter()
                .map(|&q| EmissionSchedule::constant(q, slots))
                .collect(),
            hops,
            prior,
            msi,
            num_slots,
            relay_mode,
        }
    }

    pub fn relays(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hops.is_empty() {
            return Err(Error::invalid("hops", "a chain needs at least one hop"));
        }
        if self.num_slots == 0 {
            return Err(Error::invalid("num_slots", "must be >= 1"));
        }
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(Error::invalid(
                "prior",
                format!("must lie in (0, 1), got {}", self.prior),
            ));
        }
        self.msi.validate()?;
        let tau = self.hops[0].slot_duration;
        for link in &self.hops {
            link.validate()?;
            if link.slot_duration != tau {
                return Err(Error::invalid(
                    "slot_duration",
                    "all hops must share one slot duration",
                ));
            }
        }
        if self.emissions.len() != self.hops.len() {
            return Err(Error::invalid(
                "emissions",
                format!(
                    "{} schedules for {} hops",
                    self.emissions.len(),
                    self.hops.len()
                ),
            ));
        }
        let needed = self.num_slots + self.relays();
        if let Some(short) = self.emissions.iter().position(|e| e.len() < needed) {
            return Err(Error::invalid(
                "emissions",
                format!(
                    "schedule {short} covers {} slots, {needed} needed",
                    self.emissions[short].len()
                ),
            ));
        }
        if let RelayMode::Pinned(r) = self.relay_mode {
            Rates::new(r.pd, r.pfa)?;
        }
        Ok(())
    }

    fn pinned(&self) -> Option<Rates> {
        match self.relay_mode {
            RelayMode::Pinned(r) if self.relays() > 0 => Some(r),
            _ => None,
        }
    }
}

/// `(pd, pfa)` of a node observing its transmitter directly.
pub fn single_link_rates(moments: &HypothesisMoments, entry: ThresholdEntry) -> Rates {
    let (a, b) = exceedance(moments, entry);
    Rates { pd: a, pfa: b }
}

/// Probabilities that the count exceeds the rule under H1 and H0.
fn exceedance(moments: &HypothesisMoments, entry: ThresholdEntry) -> (f64, f64) {
    match entry {
        ThresholdEntry::Threshold(t) => (
            q_function((t - moments.mu1) / moments.sigma1()),
            q_function((t - moments.mu0) / moments.sigma0()),
        ),
        ThresholdEntry::AlwaysH1 => (1.0, 1.0),
        ThresholdEntry::AlwaysH0 => (0.0, 0.0),
    }
}

/// End-to-end rates at a node whose transmitter relays decisions made with
/// end-to-end rates `upstream`.
pub fn relayed_rates(moments: &HypothesisMoments, entry: ThresholdEntry, upstream: Rates) -> Rates {
    let (a, b) = exceedance(moments, entry);
    mix(a, b, upstream)
}

fn mix(a: f64, b: f64, upstream: Rates) -> Rates {
    Rates {
        pd: (a * upstream.pd + b * (1.0 - upstream.pd)).clamp(0.0, 1.0),
        pfa: (a * upstream.pfa + b * (1.0 - upstream.pfa)).clamp(0.0, 1.0),
    }
}

/// Destination rates obtained by summing over all `2^N` joint relay states,
/// where `chain` holds each relay's rates and `a`, `b` are the destination's
/// exceedance probabilities given that the last relay sent 1 and 0.
pub fn brute_force_relayed_rates(chain: &[Rates], a: f64, b: f64) -> Result<Rates> {
    check_chain(chain)?;
    let mut pd = 0.0;
    let mut pfa = 0.0;
    for state in 0..(1usize << chain.len()) {
        let (h0, h1) = state_probabilities(chain, state);
        let exceed = if state % 2 == 1 { a } else { b };
        pd += h1 * exceed;
        pfa += h0 * exceed;
    }
    Ok(Rates { pd, pfa })
}

/// `β(1 − pd) + (1 − β)·pfa`.
pub fn error_probability(rates: Rates, prior: f64) -> f64 {
    (prior * (1.0 - rates.pd) + (1.0 - prior) * rates.pfa).clamp(0.0, 1.0)
}

/// Rates over a threshold grid with the moments held fixed. `upstream` is
/// `None` for a directly observed transmitter.
pub fn roc_sweep(
    moments: &HypothesisMoments,
    upstream: Option<Rates>,
    thresholds: &[f64],
) -> Vec<Rates> {
    let upstream = upstream.unwrap_or(Rates::PERFECT);
    thresholds
        .iter()
        .map(|&t| relayed_rates(moments, ThresholdEntry::Threshold(t), upstream))
        .collect()
}

/// Threshold at which the node's false-alarm rate equals `target_pfa`, with
/// the resulting rates.
pub fn rates_at_pfa(
    moments: &HypothesisMoments,
    upstream: Option<Rates>,
    target_pfa: f64,
) -> Result<(f64, Rates)> {
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::invalid(
            "target_pfa",
            format!("must lie in (0, 1), got {target_pfa}"),
        ));
    }
    let upstream = upstream.unwrap_or(Rates::PERFECT);
    let at = |t: f64| relayed_rates(moments, ThresholdEntry::Threshold(t), upstream);
    let spread = 40.0 * moments.sigma0().max(moments.sigma1());
    let mut lo = moments.mu0.min(moments.mu1) - spread;
    let mut hi = moments.mu0.max(moments.mu1) + spread;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).pfa > target_pfa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok((t, at(t)))
}

/// One decoding node in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeFrame {
    /// `None` for a pinned relay.
    pub moments: Option<HypothesisMoments>,
    pub threshold: Option<ThresholdEntry>,
    /// End-to-end rates with respect to the source symbol.
    pub rates: Rates,
}

/// Every decoding node's view of one source frame, relay 1 first.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRates {
    pub frame: usize,
    pub nodes: Vec<NodeFrame>,
}

impl FrameRates {
    pub fn destination(&self) -> &NodeFrame {
        self.nodes.last().expect("chains have a destination")
    }
}

/// Per-slot record of one decoding node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeReport {
    pub performance: NodePerformance,
    /// Empty for a pinned relay.
    pub thresholds: ThresholdSchedule,
    /// Empty for a pinned relay.
    pub moments: Vec<HypothesisMoments>,
}

/// Per-slot and slot-averaged metrics of a chain over frames `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    /// Relay 1..N, then the destination.
    pub nodes: Vec<NodeReport>,
    pub pd: Vec<f64>,
    pub pfa: Vec<f64>,
    pub pe: Vec<f64>,
    pub avg_pd: f64,
    pub avg_pfa: f64,
    pub avg_pe: f64,
    /// Node-slots whose moments fall outside the Gaussian regime.
    pub non_gaussian_slots: usize,
}

impl ChainReport {
    pub fn destination(&self) -> &NodeReport {
        self.nodes.last().expect("chains have a destination")
    }

    /// Threshold of the destination in the last frame.
    pub fn steady_state_threshold(&self) -> Option<ThresholdEntry> {
        self.destination().thresholds.entries.last().copied()
    }
}

/// A validated chain with its arrival profiles computed once.
#[derive(Debug, Clone)]
pub struct ChainModel {
    cfg: ChainConfig,
    profiles: Vec<ArrivalProfile>,
}

impl ChainModel {
    pub fn new(cfg: ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let profiles = cfg
            .hops
            .iter()
            .map(|link| arrival_profile(link, cfg.num_slots))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg, profiles })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn profiles(&self) -> &[ArrivalProfile] {
        &self.profiles
    }

    /// Same links with different emission schedules; the profiles are reused.
    pub fn with_emissions(&self, emissions: Vec<EmissionSchedule>) -> Result<Self> {
        let cfg = ChainConfig {
            emissions,
            ..self.cfg.clone()
        };
        cfg.validate()?;
        Ok(Self {
            cfg,
            profiles: self.profiles.clone(),
        })
    }

    /// All decoding nodes for source frame `frame` under `prior`.
    pub fn frame(&self, prior: f64, frame: usize) -> Result<FrameRates> {
        if frame == 0 || frame > self.cfg.num_slots {
            return Err(Error::Contract(format!(
                "frame {frame} outside 1..={}",
                self.cfg.num_slots
            )));
        }
        let pinned = self.cfg.pinned();
        let mut nodes = Vec::with_capacity(self.cfg.hops.len());
        let mut upstream: Option<Rates> = None;
        for hop in 0..self.cfg.hops.len() {
            let node = match (hop, pinned) {
                (0, Some(r)) => NodeFrame {
                    moments: None,
                    threshold: None,
                    rates: r,
                },
                _ => {
                    let m = hop_moments(
                        &self.profiles[hop],
                        &self.cfg.emissions[hop],
                        hop,
                        prior,
                        &self.cfg.msi,
                        frame,
                    )?;
                    let (odds, up) = match upstream {
                        None => (EffectiveOdds::direct(prior)?, Rates::PERFECT),
                        Some(up) => (effective_prior_ratio(prior, up)?, up),
                    };
                    let entry = optimal_threshold(&m, odds)?;
                    NodeFrame {
                        moments: Some(m),
                        threshold: Some(entry),
                        rates: relayed_rates(&m, entry, up),
                    }
                }
            };
            upstream = Some(node.rates);
            nodes.push(node);
        }
        Ok(FrameRates { frame, nodes })
    }

    /// Destination rates of every frame under `prior`.
    pub fn destination_rates(&self, prior: f64) -> Result<Vec<Rates>> {
        (1..=self.cfg.num_slots)
            .map(|j| Ok(self.frame(prior, j)?.destination().rates))
            .collect()
    }

    pub fn report(&self, prior: f64) -> Result<ChainReport> {
        let k = self.cfg.num_slots;
        let mut nodes = vec![NodeReport::default(); self.cfg.hops.len()];
        let (mut pd, mut pfa, mut pe) = (
            Vec::with_capacity(k),
            Vec::with_capacity(k),
            Vec::with_capacity(k),
        );
        let mut non_gaussian_slots = 0;
        for j in 1..=k {
            let fr = self.frame(prior, j)?;
            for (report, node) in nodes.iter_mut().zip(&fr.nodes) {
                report.performance.push(node.rates);
                if let (Some(m), Some(t)) = (node.moments, node.threshold) {
                    non_gaussian_slots += usize::from(!m.gaussian_regime);
                    report.moments.push(m);
                    report.thresholds.entries.push(t);
                }
            }
            let dest = fr.destination().rates;
            pd.push(dest.pd);
            pfa.push(dest.pfa);
            pe.push(error_probability(dest, prior));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Ok(ChainReport {
            avg_pd: mean(&pd),
            avg_pfa: mean(&pfa),
            avg_pe: mean(&pe),
            nodes,
            pd,
            pfa,
            pe,
            non_gaussian_slots,
        })
    }
}

/// Rates of every decoding node for the source frame `frame`.
pub fn chain_rates(cfg: &ChainConfig, frame: usize) -> Result<FrameRates> {
    ChainModel::new(cfg.clone())?.frame(cfg.prior, frame)
}

/// Per-slot and averaged metrics over frames `1..=K`.
pub fn system_metrics(cfg: &ChainConfig) -> Result<ChainReport> {
    ChainModel::new(cfg.clone())?.report(cfg.prior)
}
