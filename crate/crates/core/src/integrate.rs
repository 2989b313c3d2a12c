//! Compensated Riemann sums: rough integrals against `𝐗`, integrals of a
//! controlled path against another, and Young integrals against `[𝐗]`.
//!
//! All running sums are accumulated left to right so results are
//! reproducible bit for bit.

use ndarray::{s, Array1, Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::controlled::ControlledPath;
use crate::error::{arg, Result};
use crate::pairing::{apply_gubinelli, apply_map, compose, contract, psi_dot_phi};
use crate::rough_path::RoughPath;
use crate::tensor::norm;

/// A running integral together with its Gubinelli derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralResult {
    pub path: ControlledPath,
    /// Compensated-sum defects per interval length, filled by
    /// [`IntegralResult::with_local_defects`]; empty otherwise.
    pub local_error_table: Vec<DefectEntry>,
}

/// Compensated-sum defects over the aligned intervals of one length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectEntry {
    pub length: f64,
    pub intervals: usize,
    pub mean: f64,
    pub max: f64,
}

impl IntegralResult {
    pub fn value(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.path.value(i)
    }

    pub fn terminal(&self) -> Array1<f64> {
        self.path.value(self.path.len() - 1).to_owned()
    }

    /// Attach the dyadic defect table of the rough integral of `y` against `p`.
    pub fn with_local_defects(mut self, y: &ControlledPath, p: &RoughPath, levels: std::ops::RangeInclusive<u32>) -> Result<Self> {
        self.local_error_table = local_defect_table(|i, j| local_defect(y, p, i, j), p, levels)?;
        Ok(self)
    }
}

fn rough_germ(y: &ControlledPath, p: &RoughPath, i: usize, j: usize) -> Array1<f64> {
    let a = apply_map(y.value(i), p.increment(i, j).view());
    let b = apply_gubinelli(y.derivative(i), &p.xx(i, j));
    a + b
}

fn check_rough_integrand(y: &ControlledPath, p: &RoughPath) -> Result<usize> {
    y.check_driver(p)?;
    let d = p.dim();
    if y.dim() % d != 0 {
        return arg(format!("integrand of size {} cannot act on R^{d}", y.dim()));
    }
    Ok(y.dim() / d)
}

/// `∫ Y dX` for `Y` valued in `L(R^d, R^m)` (flattened `m·d`).
///
/// The sums are `Σ Y_u X_{uv} + ∂_X Y_u 𝕏_{uv}`; the result's Gubinelli
/// derivative is `Y` itself, reshaped to `m × d`.
pub fn rough_integral(y: &ControlledPath, p: &RoughPath) -> Result<IntegralResult> {
    let m = check_rough_integrand(y, p)?;
    let d = p.dim();
    let n = y.len();
    let mut values = Array2::zeros((n, m));
    for i in 0..n - 1 {
        let step = rough_germ(y, p, i, i + 1);
        for k in 0..m {
            values[[i + 1, k]] = values[[i, k]] + step[k];
        }
    }
    let gubinelli = y.values().clone().into_shape_with_order((n, m, d)).expect("checked divisibility");
    Ok(IntegralResult {
        path: ControlledPath::new(p.grid().clone(), values, gubinelli)?,
        local_error_table: Vec::new(),
    })
}

fn controlled_germ(y: &ControlledPath, z: &ControlledPath, p: &RoughPath, i: usize, j: usize) -> Array1<f64> {
    let a = apply_map(y.value(i), z.increment(i, j).view());
    let c = psi_dot_phi(y.derivative(i), z.derivative(i));
    let b = contract(c.view(), &p.xx(i, j));
    a + b
}

fn check_controlled(y: &ControlledPath, z: &ControlledPath, p: &RoughPath) -> Result<usize> {
    y.check_driver(p)?;
    z.check_driver(p)?;
    let m = z.dim();
    if y.dim() % m != 0 {
        return arg(format!("integrand of size {} cannot act on R^{m}", y.dim()));
    }
    Ok(y.dim() / m)
}

/// `∫ Y d_X Z` for `Y` valued in `L(R^m, R^k)` (flattened `k·m`) and `Z` in `R^m`.
///
/// The sums are `Σ Y_u Z_{uv} + (∂_X Y_u · ∂_X Z_u) 𝕏_{uv}`; the result's
/// Gubinelli derivative is `Y ∂_X Z`.
pub fn controlled_integral(y: &ControlledPath, z: &ControlledPath, p: &RoughPath) -> Result<IntegralResult> {
    let k = check_controlled(y, z, p)?;
    let n = y.len();
    let d = p.dim();
    let mut values = Array2::zeros((n, k));
    let mut gubinelli = Array3::zeros((n, k, d));
    for i in 0..n {
        gubinelli.slice_mut(s![i, .., ..]).assign(&compose(y.value(i), z.derivative(i)));
        if i + 1 < n {
            let step = controlled_germ(y, z, p, i, i + 1);
            for c in 0..k {
                values[[i + 1, c]] = values[[i, c]] + step[c];
            }
        }
    }
    Ok(IntegralResult {
        path: ControlledPath::new(p.grid().clone(), values, gubinelli)?,
        local_error_table: Vec::new(),
    })
}

/// Left-endpoint sums `Σ C_u [𝐗]_{uv}` for a path `C` of maps
/// `L(R^d ⊗ R^d, R^w)` stored `(N+1) × w × d²`.
pub fn young_bracket_integral(c: &Array3<f64>, p: &RoughPath) -> Result<Array2<f64>> {
    let (n, w, dd) = c.dim();
    let d = p.dim();
    if n != p.grid().len() || dd != d * d {
        return arg(format!("Young integrand has shape {:?}, expected ({}, w, {})", c.dim(), p.grid().len(), d * d));
    }
    let mut out = Array2::zeros((n, w));
    for i in 0..n - 1 {
        let b = p.bracket_unchecked(i, i + 1);
        let step = contract(c.slice(s![i, .., ..]), &b);
        for k in 0..w {
            out[[i + 1, k]] = out[[i, k]] + step[k];
        }
    }
    Ok(out)
}

/// `C[i, k·d + l] = ∂Y[i·d + l, k]`, the map `v ⊗ v' ↦ (∂_X Y v)(v')`.
pub fn gubinelli_as_tensor_map(dy: ArrayView2<f64>, d: usize) -> Array2<f64> {
    psi_dot_phi(dy, Array2::eye(d).view())
}

/// `|∫_{t_i}^{t_j} Y dX − Y_{t_i} X_{ij} − ∂_X Y_{t_i} 𝕏_{ij}|`, the integral
/// being the compensated sum over every cell of `p`'s grid between `i` and `j`.
pub fn local_defect(y: &ControlledPath, p: &RoughPath, i: usize, j: usize) -> Result<f64> {
    check_rough_integrand(y, p)?;
    if i >= j || j >= y.len() {
        return arg(format!("need i < j ≤ N, got ({i}, {j})"));
    }
    let mut acc = Array1::zeros(y.dim() / p.dim());
    for u in i..j {
        acc += &rough_germ(y, p, u, u + 1);
    }
    Ok(norm((&acc - &rough_germ(y, p, i, j)).view()))
}

/// Same as [`local_defect`] for `∫ Y d_X Z`.
pub fn controlled_local_defect(y: &ControlledPath, z: &ControlledPath, p: &RoughPath, i: usize, j: usize) -> Result<f64> {
    let k = check_controlled(y, z, p)?;
    if i >= j || j >= y.len() {
        return arg(format!("need i < j ≤ N, got ({i}, {j})"));
    }
    let mut acc = Array1::zeros(k);
    for u in i..j {
        acc += &controlled_germ(y, z, p, u, u + 1);
    }
    Ok(norm((&acc - &controlled_germ(y, z, p, i, j)).view()))
}

/// Defects over the dyadic intervals `[q 2^{-k} T, (q + 1) 2^{-k} T]` for
/// `k` in `levels`, summarized per length by mean and maximum.
///
/// The step count of `p` must be divisible by `2^k` for every level.
pub fn local_defect_table(
    defect: impl Fn(usize, usize) -> Result<f64>,
    p: &RoughPath,
    levels: std::ops::RangeInclusive<u32>,
) -> Result<Vec<DefectEntry>> {
    let n = p.steps();
    let mut table = Vec::new();
    for k in levels {
        let pieces = 1usize << k;
        if n % pieces != 0 {
            return arg(format!("{n} steps do not split into {pieces} dyadic intervals"));
        }
        let width = n / pieces;
        let mut sum = 0.0;
        let mut max = 0.0_f64;
        for q in 0..pieces {
            let e = defect(q * width, (q + 1) * width)?;
            sum += e;
            max = max.max(e);
        }
        table.push(DefectEntry { length: p.grid().t(width), intervals: pieces, mean: sum / pieces as f64, max });
    }
    Ok(table)
}

/// Log–log slope of the mean defect against interval length.
pub fn defect_slope(table: &[DefectEntry]) -> f64 {
    let lengths: Vec<f64> = table.iter().map(|e| e.length).collect();
    let means: Vec<f64> = table.iter().map(|e| e.mean).collect();
    crate::convergence::log_log_slope(&lengths, &means)
}

/// Largest over grid times of `|∫₀ᵗ Y dX̃ − ∫₀ᵗ Y dX − ½∫₀ᵗ ∂_X Y d[𝐗]|` with
/// `X̃` the geometrization of `p`.
pub fn ito_strato_residual_path(y: &ControlledPath, p: &RoughPath) -> Result<f64> {
    check_rough_integrand(y, p)?;
    let geo = p.geometrize();
    let strato = rough_integral(y, &geo)?;
    let ito = rough_integral(y, p)?;
    let n = y.len();
    let mut c = Array3::zeros((n, y.dim() / p.dim(), p.dim() * p.dim()));
    for i in 0..n {
        c.slice_mut(s![i, .., ..]).assign(&gubinelli_as_tensor_map(y.derivative(i), p.dim()));
    }
    let young = young_bracket_integral(&c, p)?;
    Ok(max_residual(strato.path.values(), ito.path.values(), &young))
}

/// Largest over grid times of `|∫ Y d_{X̃} Z − ∫ Y d_X Z − ½∫ (∂_X Y · ∂_X Z) d[𝐗]|`.
pub fn ito_strato_residual_controlled(y: &ControlledPath, z: &ControlledPath, p: &RoughPath) -> Result<f64> {
    let k = check_controlled(y, z, p)?;
    let geo = p.geometrize();
    let strato = controlled_integral(y, z, &geo)?;
    let ito = controlled_integral(y, z, p)?;
    let n = y.len();
    let mut c = Array3::zeros((n, k, p.dim() * p.dim()));
    for i in 0..n {
        c.slice_mut(s![i, .., ..]).assign(&psi_dot_phi(y.derivative(i), z.derivative(i)));
    }
    let young = young_bracket_integral(&c, p)?;
    Ok(max_residual(strato.path.values(), ito.path.values(), &young))
}

fn max_residual(strato: &Array2<f64>, ito: &Array2<f64>, young: &Array2<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..strato.nrows() {
        let r = &(&strato.row(i) - &ito.row(i)) - &(&young.row(i) * 0.5);
        worst = worst.max(norm(r.view()));
    }
    worst
}
