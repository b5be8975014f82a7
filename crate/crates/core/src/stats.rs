//! Distribution helpers for the proportion tests.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_lr;

/// Chi-square CDF with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(f64::from(dof) / 2.0, x / 2.0)
}

/// Inverse chi-square CDF by bisection on the regularized lower incomplete
/// gamma function, to an absolute tolerance of 1e-9.
///
/// # Panics
/// If `p` is outside `(0, 1)` or `dof` is zero.
pub fn chi2_quantile(p: f64, dof: u32) -> f64 {
    assert!(p > 0.0 && p < 1.0, "chi2_quantile: p = {p} outside (0, 1)");
    assert!(dof >= 1, "chi2_quantile: dof must be at least 1");
    let mut lo = 0.0;
    let mut hi = f64::from(dof).max(1.0);
    while chi2_cdf(hi, dof) < p {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

pub fn normal_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Density of N(mean, std²).
pub fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}
