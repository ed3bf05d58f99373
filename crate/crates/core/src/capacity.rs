//! Mutual information of the end-to-end binary channel and its maximization
//! over the source prior.

use rayon::prelude::*;

use crate::detection::Rates;
use crate::error::{Error, Result};
use crate::moments::EmissionSchedule;
use crate::performance::{ChainConfig, ChainModel};
use crate::special::binary_entropy;

/// Coarse prior grid `0.01, 0.02, ..., 0.99`.
pub fn prior_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Width at which golden-section refinement stops.
pub const PRIOR_TOLERANCE: f64 = 1e-4;

/// Mutual information in bits between the source symbol and the decision,
/// for a binary channel with `P(y=1|x=1) = pd` and `P(y=1|x=0) = pfa`.
pub fn mutual_information(rates: Rates, prior: f64) -> f64 {
    let Rates { pd, pfa } = rates;
    let p_one = prior * pd + (1.0 - prior) * pfa;
    let conditional = (1.0 - prior) * binary_entropy(pfa) + prior * binary_entropy(pd);
    (binary_entropy(p_one) - conditional).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    /// Bits per slot.
    pub capacity: f64,
    pub beta_star: f64,
    /// `(prior, rate)` on the coarse grid. Priors at which the chain has no
    /// valid decision rule are left out.
    pub curve: Vec<(f64, f64)>,
}

/// Average information per slot, `Σ_j I_j / (K + N)`, under `prior`.
pub fn information_rate(model: &ChainModel, prior: f64) -> Result<f64> {
    let cfg = model.config();
    let total: f64 = model
        .destination_rates(prior)?
        .into_iter()
        .map(|r| mutual_information(r, prior))
        .sum();
    Ok(total / (cfg.num_slots + cfg.relays()) as f64)
}

/// Rate at `prior`, or `None` when some relay carries no usable evidence
/// under that prior. Other failures propagate.
fn rate_or_skip(model: &ChainModel, prior: f64) -> Result<Option<f64>> {
    match information_rate(model, prior) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UninformativeRelay { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn capacity(cfg: &ChainConfig) -> Result<CapacityResult> {
    capacity_of(&ChainModel::new(cfg.clone())?)
}

/// Capacity of an already built chain.
pub fn capacity_of(model: &ChainModel) -> Result<CapacityResult> {
    let grid = prior_grid();
    let rates = grid
        .par_iter()
        .map(|&b| rate_or_skip(model, b))
        .collect::<Result<Vec<_>>>()?;
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .zip(&rates)
        .filter_map(|(&b, r)| r.map(|r| (b, r)))
        .collect();
    let best = rates
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .fold(None, |acc: Option<(usize, f64)>, (i, r)| match acc {
            Some((_, v)) if v >= r => acc,
            _ => Some((i, r)),
        })
        .ok_or_else(|| {
            Error::Contract("no prior on the grid admits a valid decision chain".into())
        })?;

    let (i, grid_max) = best;
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let objective = |b: f64| rate_or_skip(model, b).map(|r| r.unwrap_or(f64::NEG_INFINITY));
    let (b_ref, v_ref) = golden_section_max(objective, lo, hi, PRIOR_TOLERANCE)?;
    let (beta_star, capacity) = if v_ref > grid_max {
        (b_ref, v_ref)
    } else {
        (grid[i], grid_max)
    };
    Ok(CapacityResult {
        capacity,
        beta_star,
        curve,
    })
}

/// Maximizes a unimodal `f` on `[lo, hi]` until the bracket is narrower than `tol`.
fn golden_section_max<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// One allocation of the molecule budget and its capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPoint {
    /// Molecules per slot for the source, relay 1, ..., relay N.
    pub allocation: Vec<u32>,
    pub result: CapacityResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSweep {
    /// Allocations in lexicographic order.
    pub points: Vec<BudgetPoint>,
    /// Index of the capacity-maximizing allocation; the first one on ties.
    pub best: usize,
}

impl BudgetSweep {
    pub fn argmax(&self) -> &BudgetPoint {
        &self.points[self.best]
    }
}

/// All ways to split `total` into `parts` positive multiples of `step`.
pub fn allocations(total: u32, step: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(units: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(units);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for u in 1..=units.saturating_sub(parts as u32 - 1) {
            prefix.push(u);
            rec(units - u, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 || step == 0 || total / step < parts as u32 {
        return out;
    }
    rec(
        total / step,
        parts,
        &mut Vec::with_capacity(parts),
        &mut out,
    );
    for a in &mut out {
        for q in a.iter_mut() {
            *q *= step;
        }
    }
    out
}

/// Capacity for every constant-emission split of `total` molecules per slot
/// across the transmitting nodes of `cfg`, in multiples of `step`.
pub fn budget_sweep(cfg: &ChainConfig, total: u32, step: u32) -> Result<BudgetSweep> {
    let parts = cfg.hops.len();
    if step == 0 {
        return Err(Error::invalid("step", "must be > 0"));
    }
    if !total.is_multiple_of(step) {
        return Err(Error::invalid(
            "budget",
            format!("{total} is not a multiple of the step {step}"),
        ));
    }
    if total < parts as u32 * step {
        return Err(Error::invalid(
            "budget",
            format!("{total} cannot give {parts} nodes at least {step} molecules each"),
        ));
    }
    let base = ChainModel::new(cfg.clone())?;
    let slots = cfg.num_slots + cfg.relays();
    let points = allocations(total, step, parts)
        .into_par_iter()
        .map(|allocation| {
            let emissions = allocation
                .iter()
                .map(|&q| EmissionSchedule::constant(q, slots))
                .collect();
            let result = capacity_of(&base.with_emissions(emissions)?)?;
            Ok(BudgetPoint { allocation, result })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points.iter().enumerate().fold(0, |b, (i, p)| {
        if p.result.capacity > points[b].result.capacity {
            i
        } else {
            b
        }
    });
    Ok(BudgetSweep { points, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DiffusionLink;
    use crate::moments::MsiParams;
    use crate::performance::RelayMode;
    use proptest::prelude::*;

    #[test]
    fn information_limits() {
        assert_eq!(mutual_information(Rates { pd: 0.3, pfa: 0.3 }, 0.4), 0.0);
        assert!((mutual_information(Rates::PERFECT, 0.5) - 1.0).abs() < 1e-15);
        // 1 - H2(0.1) from mpmath.
        let bsc = mutual_information(Rates { pd: 0.9, pfa: 0.1 }, 0.5);
        assert!((bsc - 0.531_004_406_410_718_5).abs() < 1e-12, "{bsc}");
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, v) = golden_section_max(|x| Ok(-(x - 0.37) * (x - 0.37)), 0.0, 1.0, 1e-8).unwrap();
        assert!((x - 0.37).abs() < 1e-7 && v <= 0.0);
    }

    #[test]
    fn allocation_simplex() {
        let a = allocations(180, 10, 3);
        assert_eq!(a.len(), 136);
        assert!(a
            .iter()
            .all(|x| x.iter().sum::<u32>() == 180 && x.iter().all(|&q| q >= 10)));
        assert_eq!(allocations(50, 10, 1), vec![vec![50]]);
        assert!(allocations(20, 10, 3).is_empty());
    }

    fn link(d_um: f64, tau: f64) -> DiffusionLink {
        DiffusionLink::new(d_um * 1e-6, 1.5e-5, 2.2e-11, 0.2, tau).unwrap()
    }

    fn chain(hops: usize, mode: RelayMode) -> ChainConfig {
        ChainConfig::with_constant_emissions(
            vec![link(15.0, 2.5); hops],
            &vec![60; hops],
            0.5,
            MsiParams::new(20.0, 20.0).unwrap(),
            10,
            mode,
        )
    }

    #[test]
    fn slot_count_scaling() {
        // Relay 1 pinned perfect, so the destination sees the same hop as a
        // direct link, one slot later.
        let direct = capacity(&chain(1, RelayMode::Computed)).unwrap();
        let dual = capacity(&chain(2, RelayMode::Pinned(Rates::PERFECT))).unwrap();
        assert!((direct.capacity * 10.0 / 11.0 - dual.capacity).abs() < 1e-12);
    }

    #[test]
    fn grid_maximum_is_local() {
        let res = capacity(&chain(1, RelayMode::Computed)).unwrap();
        let grid_best = res.curve.iter().map(|c| c.1).fold(f64::MIN, f64::max);
        assert!(res.capacity >= grid_best);
        assert!(res.capacity <= 10.0 / 10.0);
        assert!((res.beta_star - 0.5).abs() < 0.05);
    }

    #[test]
    fn pinned_relay_capacity_plateaus() {
        // With a long slot the relay-destination hop is nearly perfect and the
        // pinned relay's rates cap the rate.
        let mut cfg = chain(
            2,
            RelayMode::Pinned(Rates {
                pd: 0.99,
                pfa: 0.01,
            }),
        );
        cfg.hops = vec![link(15.0, 20.0); 2];
        cfg.emissions = vec![EmissionSchedule::constant(400, 11); 2];
        let res = capacity(&cfg).unwrap();
        let cap = mutual_information(
            Rates {
                pd: 0.99,
                pfa: 0.01,
            },
            0.5,
        ) * 10.0
            / 11.0;
        assert!(res.capacity <= cap + 1e-9);
        assert!(res.capacity > cap - 1e-3, "{} vs {cap}", res.capacity);
        // β = 0.01 is uninformative for this relay and drops out of the curve.
        assert!(res.curve[0].0 > 0.01);
    }

    #[test]
    fn budget_sweep_single_node() {
        let cfg = chain(1, RelayMode::Computed);
        let sweep = budget_sweep(&cfg, 60, 10).unwrap();
        assert_eq!(sweep.points.len(), 1);
        assert_eq!(sweep.argmax().result, capacity(&cfg).unwrap());
        assert!(budget_sweep(&cfg, 65, 10).is_err());
        assert!(budget_sweep(&chain(3, RelayMode::Computed), 20, 10).is_err());
    }

    proptest! {
        #[test]
        fn information_properties(pd in 0.0f64..=1.0, pfa in 0.0f64..=1.0, prior in 0.01f64..0.99) {
            let i = mutual_information(Rates { pd, pfa }, prior);
            prop_assert!((0.0..=1.0).contains(&i));
            let mirrored = mutual_information(Rates { pd: 1.0 - pfa, pfa: 1.0 - pd }, 1.0 - prior);
            prop_assert!((i - mirrored).abs() < 1e-12);
            if (pd - pfa).abs() > 1e-3 {
                prop_assert!(i > 0.0);
            }
        }
    }
}
