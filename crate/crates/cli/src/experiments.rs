//! One function per experiment kind. Each returns the CSV table and a few
//! summary lines for the terminal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use molrelay_core::capacity::{allocations, capacity_of};
use molrelay_core::detection::brute_force_prior_ratio;
use molrelay_core::monte_carlo::{
    decision_rules, sample_arrival_probabilities, simulate_with_rules,
};
use molrelay_core::special::{normal_pdf, q_function};
use molrelay_core::{
    brute_force_relayed_rates, effective_prior_ratio, error_probability, relayed_rates, ChainModel,
    EmissionSchedule, Error, HypothesisMoments, Rates, ThresholdEntry,
};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind};
use crate::csv::{num, Table};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Numerical(e) => write!(f, "numerical error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => {
                RunError::Config(ConfigError::field(name, reason))
            }
            other => RunError::Numerical(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub summary: Vec<String>,
    /// Set when the experiment itself reports failure (every row failed, or
    /// a validation check did not pass).
    pub failed: bool,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match cfg.kind {
        ExperimentKind::Roc => roc(cfg),
        ExperimentKind::ThresholdSweep => threshold_sweep(cfg),
        ExperimentKind::PeVsDrift => pe_vs_drift(cfg),
        ExperimentKind::CapacityVsNoise | ExperimentKind::CapacityVsSlot => capacity_sweep(cfg),
        ExperimentKind::BudgetSweep => budget(cfg),
        ExperimentKind::Validate => validate(cfg),
    }
}

/// Short machine-readable tag for a failed row.
pub fn error_flag(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter { .. } => "invalid_parameter",
        Error::Quadrature { .. } => "quadrature",
        Error::Contract(_) => "contract",
        Error::UninformativeRelay { .. } => "uninformative_relay",
        Error::IndistinguishableHypotheses => "indistinguishable",
    }
}

fn nan_row(width: usize, lead: Vec<String>, flag: &str) -> Vec<String> {
    let mut row = lead;
    while row.len() + 1 < width {
        row.push(num(f64::NAN));
    }
    row.push(flag.to_owned());
    row
}

/// Destination moments in the last frame, with the end-to-end rates of the
/// node that feeds it (`None` for a direct link).
struct SteadyState {
    moments: HypothesisMoments,
    upstream: Option<Rates>,
    optimal: ThresholdEntry,
}

fn steady_state(cfg: &ExperimentConfig) -> Result<SteadyState, RunError> {
    let chain = cfg.chain.build()?;
    let k = chain.num_slots;
    let prior = chain.prior;
    let model = ChainModel::new(chain)?;
    let frame = model.frame(prior, k)?;
    let n = frame.nodes.len();
    let dest = frame.nodes[n - 1];
    Ok(SteadyState {
        moments: dest
            .moments
            .expect("the destination always observes a channel"),
        upstream: (n > 1).then(|| frame.nodes[n - 2].rates),
        optimal: dest.threshold.expect("the destination always has a rule"),
    })
}

fn threshold_summary(optimal: ThresholdEntry) -> String {
    match optimal {
        ThresholdEntry::Threshold(t) => format!("steady-state optimal threshold: {}", num(t)),
        ThresholdEntry::AlwaysH0 => "steady-state rule: always 0".into(),
        ThresholdEntry::AlwaysH1 => "steady-state rule: always 1".into(),
    }
}

fn roc(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sweep = cfg.sweep.as_ref().expect("roc has a sweep");
    let ss = steady_state(cfg)?;
    let mut table = Table::new(&["threshold", "pfa", "pd", "flag"]);
    for t in sweep.grid() {
        let r = relayed_rates(
            &ss.moments,
            ThresholdEntry::Threshold(t),
            ss.upstream.unwrap_or(Rates::PERFECT),
        );
        table.push(vec![num(t), num(r.pfa), num(r.pd), "ok".into()]);
    }
    Ok(Outcome {
        table,
        summary: vec![threshold_summary(ss.optimal)],
        failed: false,
    })
}

fn threshold_sweep(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sweep = cfg.sweep.as_ref().expect("threshold-sweep has a sweep");
    let ss = steady_state(cfg)?;
    let upstream = ss.upstream.unwrap_or(Rates::PERFECT);
    let prior = cfg.chain.prior;
    let mut table = Table::new(&["gamma", "pe", "flag"]);
    for t in sweep.grid() {
        let r = relayed_rates(&ss.moments, ThresholdEntry::Threshold(t), upstream);
        table.push(vec![num(t), num(error_probability(r, prior)), "ok".into()]);
    }
    let pe_opt = error_probability(relayed_rates(&ss.moments, ss.optimal, upstream), prior);
    Ok(Outcome {
        table,
        summary: vec![
            threshold_summary(ss.optimal),
            format!("error probability there: {}", num(pe_opt)),
        ],
        failed: false,
    })
}

/// Collects per-point rows computed in parallel, in grid order.
fn sweep_rows<F>(values: &[f64], width: usize, f: F) -> (Vec<Vec<String>>, usize)
where
    F: Fn(usize, f64) -> Result<Vec<String>, Error> + Sync,
{
    let rows: Vec<Result<Vec<String>, Error>> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| f(i, v))
        .collect();
    let mut failed = 0;
    let rows = rows
        .into_iter()
        .zip(values)
        .map(|(r, &v)| {
            r.unwrap_or_else(|e| {
                failed += 1;
                nan_row(width, vec![num(v)], error_flag(&e))
            })
        })
        .collect();
    (rows, failed)
}

fn quality_flag(degenerate: usize, non_gaussian: usize) -> String {
    match (degenerate, non_gaussian) {
        (0, 0) => "ok".into(),
        (0, _) => "non_gaussian".into(),
        _ => "degenerate".into(),
    }
}

fn pe_vs_drift(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sweep = cfg.sweep.as_ref().expect("pe-vs-drift has a sweep");
    let grid = sweep.grid();
    let header = ["v", "pe_analytic", "pe_mc", "ci_halfwidth", "flag"];
    let (rows, failed) = sweep_rows(&grid, header.len(), |i, v| {
        let chain = sweep
            .variable
            .apply(&cfg.chain, v)
            .build()
            .expect("checked at parse time");
        let model = ChainModel::new(chain)?;
        let report = model.report(model.config().prior)?;
        let rules = decision_rules(&model)?;
        let sim = simulate_with_rules(&model, &rules, cfg.frames, cfg.seed.wrapping_add(i as u64))?;
        let degenerate = report
            .nodes
            .iter()
            .map(|n| n.thresholds.degenerate_slots())
            .sum();
        Ok(vec![
            num(v),
            num(report.avg_pe),
            num(sim.pe.value),
            num(sim.pe.half_width),
            quality_flag(degenerate, report.non_gaussian_slots),
        ])
    });
    let mut table = Table::new(&header);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Outcome {
        summary: vec![format!(
            "{} drift points, {} frames each",
            grid.len(),
            cfg.frames
        )],
        failed: failed == grid.len(),
        table,
    })
}

fn capacity_sweep(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sweep = cfg.sweep.as_ref().expect("capacity sweeps have a sweep");
    let grid = sweep.grid();
    let header = ["sweep_value", "capacity", "beta_star", "flag"];
    let (rows, failed) = sweep_rows(&grid, header.len(), |_, v| {
        let chain = sweep
            .variable
            .apply(&cfg.chain, v)
            .build()
            .expect("checked at parse time");
        let res = capacity_of(&ChainModel::new(chain)?)?;
        Ok(vec![
            num(v),
            num(res.capacity),
            num(res.beta_star),
            "ok".into(),
        ])
    });
    let mut table = Table::new(&header);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Outcome {
        summary: vec![format!(
            "swept `{}` over {} points",
            sweep.variable.key(),
            grid.len()
        )],
        failed: failed == grid.len(),
        table,
    })
}

fn budget(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let (total, step) = cfg.budget.expect("budget-sweep has a budget");
    let chain = cfg.chain.build()?;
    let parts = chain.hops.len();
    let slots = chain.num_slots + chain.relays();
    let base = ChainModel::new(chain)?;
    let allocs = allocations(total, step, parts);
    let results: Vec<Result<(f64, f64), Error>> = allocs
        .par_iter()
        .map(|a| {
            let emissions = a
                .iter()
                .map(|&q| EmissionSchedule::constant(q, slots))
                .collect();
            let res = capacity_of(&base.with_emissions(emissions)?)?;
            Ok((res.capacity, res.beta_star))
        })
        .collect();

    let mut header: Vec<String> = (0..parts).map(|n| format!("q{n}")).collect();
    header.extend(["capacity", "beta_star", "flag"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs);
    let mut best: Option<(usize, f64)> = None;
    let mut failed = 0;
    for (i, (a, r)) in allocs.iter().zip(&results).enumerate() {
        let lead: Vec<String> = a.iter().map(|&q| q.to_string()).collect();
        match r {
            Ok((c, b)) => {
                if best.is_none_or(|(_, bc)| *c > bc) {
                    best = Some((i, *c));
                }
                let mut row = lead;
                row.extend([num(*c), num(*b), "ok".into()]);
                table.push(row);
            }
            Err(e) => {
                failed += 1;
                table.push(nan_row(header.len(), lead, error_flag(e)));
            }
        }
    }
    let summary = match best {
        Some((i, c)) => vec![format!(
            "best allocation {:?}: capacity {}",
            allocs[i],
            num(c)
        )],
        None => vec!["no allocation produced a capacity".into()],
    };
    Ok(Outcome {
        table,
        summary,
        failed: failed == allocs.len(),
    })
}

/// Unit-variance hypotheses one molecule apart, for exercising the mixtures.
const UNIT_SHIFT: HypothesisMoments = HypothesisMoments {
    mu0: 0.0,
    var0: 1.0,
    mu1: 1.0,
    var1: 1.0,
    gaussian_regime: true,
};

/// Independent-oracle checks on the configured chain.
fn validate(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let chain = cfg.chain.build()?;
    let prior = chain.prior;
    let model = ChainModel::new(chain.clone())?;
    let report = model.report(prior)?;
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut ratio_gap, mut rates_gap) = (0.0f64, 0.0f64);
    for trial in 0..1000 {
        let n = 1 + trial % 6;
        let relays: Vec<Rates> = (0..n)
            .map(|_| Rates {
                pd: rng.random_range(0.5..1.0),
                pfa: rng.random_range(0.0..0.5),
            })
            .collect();
        let beta = rng.random_range(0.05..0.95);
        let last = *relays.last().expect("n >= 1");
        if let (Ok(a), Ok(b)) = (
            effective_prior_ratio(beta, last),
            brute_force_prior_ratio(beta, &relays),
        ) {
            ratio_gap = ratio_gap.max((a.value() - b.value()).abs() / a.value().max(1.0));
        }
        let t = rng.random_range(-2.0..3.0);
        let (a, b) = (q_function(t - 1.0), q_function(t));
        let brute = brute_force_relayed_rates(&relays, a, b)?;
        let direct = relayed_rates(&UNIT_SHIFT, ThresholdEntry::Threshold(t), last);
        rates_gap = rates_gap.max(
            (brute.pd - direct.pd)
                .abs()
                .max((brute.pfa - direct.pfa).abs()),
        );
    }
    checks.push(("prior_ratio_collapse", ratio_gap, 1e-12));
    checks.push(("relayed_rates_collapse", rates_gap, 1e-12));

    let mut max_z = 0.0f64;
    for (h, link) in chain.hops.iter().enumerate() {
        let lags = 4.min(chain.num_slots);
        let est = sample_arrival_probabilities(
            link,
            lags,
            cfg.frames.max(2),
            cfg.seed.wrapping_add(h as u64),
        )?;
        for (lag, e) in est.iter().enumerate() {
            max_z = max_z.max(e.z_score(model.profiles()[h].at(lag)));
        }
    }
    checks.push(("arrival_sampling_z", max_z, 4.0));

    let mut crossing = 0.0f64;
    for (i, node) in report.nodes.iter().enumerate() {
        for (slot, (m, t)) in node
            .moments
            .iter()
            .zip(&node.thresholds.entries)
            .enumerate()
        {
            let odds = match i {
                0 => (1.0 - prior) / prior,
                _ => {
                    let up = report.nodes[i - 1]
                        .performance
                        .slot(slot)
                        .expect("same slot count");
                    match effective_prior_ratio(prior, up) {
                        Ok(o) => o.value(),
                        Err(_) => continue,
                    }
                }
            };
            if let ThresholdEntry::Threshold(t) = t {
                let lhs = normal_pdf(*t, m.mu1, m.var1);
                let rhs = odds * normal_pdf(*t, m.mu0, m.var0);
                if lhs > 1e-250 {
                    crossing = crossing.max(((lhs - rhs) / lhs).abs());
                }
            }
        }
    }
    checks.push(("likelihood_crossing", crossing, 1e-9));

    let dest = report.destination();
    let k = chain.num_slots;
    let m = dest.moments[k - 1];
    let up = if report.nodes.len() > 1 {
        report.nodes[report.nodes.len() - 2]
            .performance
            .slot(k - 1)
            .expect("k slots")
    } else {
        Rates::PERFECT
    };
    let pe_at = |e: ThresholdEntry| error_probability(relayed_rates(&m, e, up), prior);
    let lo = m.mu0 - 5.0 * m.sigma0();
    let hi = m.mu1 + 5.0 * m.sigma1();
    let grid_min = (0..=((hi - lo) / 0.01) as usize)
        .map(|i| pe_at(ThresholdEntry::Threshold(lo + 0.01 * i as f64)))
        .fold(f64::INFINITY, f64::min);
    checks.push((
        "threshold_optimality",
        pe_at(dest.thresholds.entries[k - 1]) - grid_min,
        1e-9,
    ));

    let rules = decision_rules(&model)?;
    let sim = simulate_with_rules(&model, &rules, cfg.frames, cfg.seed)?;
    checks.push((
        "monte_carlo_pe_halfwidths",
        (sim.pe.value - report.avg_pe).abs() / sim.pe.half_width,
        3.0,
    ));

    let mut table = Table::new(&["check", "value", "tolerance", "pass"]);
    let mut failed = 0;
    for (name, value, tol) in &checks {
        let pass = *value <= *tol;
        failed += usize::from(!pass);
        table.push(vec![
            (*name).into(),
            num(*value),
            num(*tol),
            pass.to_string(),
        ]);
    }
    Ok(Outcome {
        table,
        summary: vec![format!(
            "{} of {} checks passed",
            checks.len() - failed,
            checks.len()
        )],
        failed: failed > 0,
    })
}
