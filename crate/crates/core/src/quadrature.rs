//! Adaptive Simpson quadrature on a finite interval.

use crate::error::{Error, Result};

/// Settings for [`adaptive_simpson`].
#[derive(Debug, Clone, Copy)]
pub struct SimpsonConfig {
    /// Absolute error target for the whole interval.
    pub abs_tol: f64,
    /// Number of equal panels the interval is cut into before adapting.
    pub initial_panels: usize,
    /// Maximum recursion depth below each initial panel.
    pub max_depth: u32,
}

impl Default for SimpsonConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            initial_panels: 16,
            max_depth: 40,
        }
    }
}

/// Integrates `f` over `[a, b]`.
///
/// The tolerance is split evenly across the initial panels and halved at each
/// bisection. A panel that reaches `max_depth` without meeting its share of the
/// tolerance makes the whole call fail with the accumulated error estimate.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, cfg: &SimpsonConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Contract(format!(
            "quadrature interval [{a}, {b}] must be finite and ordered"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let panels = cfg.initial_panels.max(1);
    let h = (b - a) / panels as f64;
    let panel_tol = cfg.abs_tol / panels as f64;

    let mut total = 0.0;
    let mut err_total = 0.0;
    let mut failed = false;
    for k in 0..panels {
        let lo = a + h * k as f64;
        let hi = if k + 1 == panels { b } else { lo + h };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = simpson(lo, hi, flo, fmid, fhi);
        let step = Panel {
            lo,
            hi,
            flo,
            fmid,
            fhi,
            whole,
        };
        let (value, err, ok) = recurse(&f, step, panel_tol, cfg.max_depth);
        total += value;
        err_total += err;
        failed |= !ok;
    }
    if failed || !total.is_finite() {
        return Err(Error::Quadrature {
            lower: a,
            upper: b,
            achieved: err_total,
        });
    }
    Ok(total)
}

#[derive(Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    flo: f64,
    fmid: f64,
    fhi: f64,
    whole: f64,
}

fn simpson(lo: f64, hi: f64, flo: f64, fmid: f64, fhi: f64) -> f64 {
    (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
}

/// Returns (estimate, error estimate, converged).
fn recurse<F: Fn(f64) -> f64>(f: &F, p: Panel, tol: f64, depth: u32) -> (f64, f64, bool) {
    let mid = 0.5 * (p.lo + p.hi);
    let lm = 0.5 * (p.lo + mid);
    let rm = 0.5 * (mid + p.hi);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(p.lo, mid, p.flo, flm, p.fmid);
    let right = simpson(mid, p.hi, p.fmid, frm, p.fhi);
    let delta = left + right - p.whole;
    let err = delta.abs() / 15.0;
    if err <= tol {
        // Richardson extrapolation.
        return (left + right + delta / 15.0, err, true);
    }
    if depth == 0 {
        return (left + right + delta / 15.0, err, false);
    }
    let l = Panel {
        lo: p.lo,
        hi: mid,
        flo: p.flo,
        fmid: flm,
        fhi: p.fmid,
        whole: left,
    };
    let r = Panel {
        lo: mid,
        hi: p.hi,
        flo: p.fmid,
        fmid: frm,
        fhi: p.fhi,
        whole: right,
    };
    let (lv, le, lok) = recurse(f, l, 0.5 * tol, depth - 1);
    let (rv, re, rok) = recurse(f, r, 0.5 * tol, depth - 1);
    (lv + rv, le + re, lok && rok)
}
