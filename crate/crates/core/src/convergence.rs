use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// Residuals at or below this are treated as exact zeros.
pub const EXACT_THRESHOLD: f64 = 1e-13;

/// Residuals over a ladder of mesh sizes with a fitted log–log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mesh_sizes: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Least-squares slope of `log₂ r` against `log₂ N`; absent when the
    /// residuals are exact.
    pub slope: Option<f64>,
    pub exact: bool,
    pub target_slope: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ConvergenceReport {
    /// Fit and judge. When every residual is at most [`EXACT_THRESHOLD`] the
    /// report is marked exact and passes without a slope.
    pub fn new(mesh_sizes: Vec<usize>, residuals: Vec<f64>, target_slope: f64, tolerance: f64) -> Result<Self> {
        if mesh_sizes.len() != residuals.len() || mesh_sizes.len() < 2 {
            return arg("a convergence report needs at least two (mesh, residual) pairs");
        }
        if mesh_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return arg("mesh sizes must be strictly increasing");
        }
        if residuals.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return arg("residuals must be finite and nonnegative");
        }
        let exact = residuals.iter().all(|r| *r <= EXACT_THRESHOLD);
        let slope = if exact || residuals.iter().any(|r| *r <= EXACT_THRESHOLD) {
            None
        } else {
            let xs: Vec<f64> = mesh_sizes.iter().map(|n| (*n as f64).log2()).collect();
            let ys: Vec<f64> = residuals.iter().map(|r| r.log2()).collect();
            Some(fit_slope(&xs, &ys))
        };
        let pass = exact || slope.is_some_and(|s| (s - target_slope).abs() <= tolerance);
        Ok(Self { mesh_sizes, residuals, slope, exact, target_slope, tolerance, pass })
    }

    /// Ratios `r(N_k) / r(N_{k+1})` between consecutive levels.
    pub fn ratios(&self) -> Vec<f64> {
        self.residuals.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Slope of `log₂ y` against `log₂ x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log2()).collect();
    fit_slope(&lx, &ly)
}

/// `N₀, 2N₀, …, 2^{k−1} N₀`.
pub fn dyadic_ladder(n0: usize, levels: usize) -> Vec<usize> {
    (0..levels).map(|k| n0 << k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let sizes = dyadic_ladder(64, 4);
        let res: Vec<f64> = sizes.iter().map(|n| 3.0 * (*n as f64).powf(-0.35)).collect();
        let r = ConvergenceReport::new(sizes, res, -0.35, 0.3).unwrap();
        assert!((r.slope.unwrap() + 0.35).abs() < 1e-12);
        assert!(r.pass);
        assert!(!r.exact);
    }

    #[test]
    fn exact_residuals_pass_without_slope() {
        let r = ConvergenceReport::new(vec![8, 16], vec![1e-15, 0.0], -0.35, 0.3).unwrap();
        assert!(r.exact && r.pass && r.slope.is_none());
    }

    #[test]
    fn mixed_zero_residual_fails() {
        let r = ConvergenceReport::new(vec![8, 16], vec![1e-3, 0.0], -0.35, 0.3).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn wrong_slope_fails() {
        let r = ConvergenceReport::new(vec![8, 16, 32], vec![1.0, 0.5, 0.25], -0.35, 0.3).unwrap();
        assert!(!r.pass);
        assert!((r.ratios()[0] - 2.0).abs() < 1e-15);
    }
}
