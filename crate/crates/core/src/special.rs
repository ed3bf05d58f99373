//! Gaussian tail function and a few small helpers shared by the detection and
//! capacity code.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Tail probability of the standard normal, `Q(x) = P(Z > x)`.
///
/// Evaluated through `erfc` so the upper tail keeps full relative precision
/// until it underflows (around `x = 38`).
pub fn q_function(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Density of `N(mean, var)` at `x`.
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Binary entropy in bits, with `0·log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    xlog2x(p) + xlog2x(1.0 - p)
}

fn xlog2x(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}
