use ndarray::{s, Array1, Array2, Array3, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::grid::TimeGrid;
use crate::tensor::{norm, Tensor2};

/// Smallest regularity exponent accepted (exclusive).
pub const ALPHA_MIN: f64 = 1.0 / 3.0;
/// Largest regularity exponent accepted (inclusive).
pub const ALPHA_MAX: f64 = 0.5;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > ALPHA_MIN && alpha <= ALPHA_MAX) {
        return arg(format!("alpha must lie in (1/3, 1/2], got {alpha}"));
    }
    Ok(())
}

/// An α-Hölder rough path `(X, 𝕏)` sampled on a grid.
///
/// Level 2 is stored cumulatively, `A_i = 𝕏_{0, t_i}`, and any `𝕏_{t_i t_j}` is
/// recovered in constant time through Chen's relation
/// `𝕏_{ij} = A_j − A_i − X_{0i} ⊗ X_{ij}`.
#[derive(Debug, Clone)]
pub struct RoughPath {
    grid: TimeGrid,
    values: Array2<f64>,
    cum2: Array3<f64>,
    alpha: f64,
}

/// How pairwise Hölder sups are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Every pair `i < j`, `O(N²)`.
    #[default]
    AllPairs,
    /// Adjacent cells only. A lower bound of the all-pairs value.
    Adjacent,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HoelderReport {
    pub norm_x_alpha: f64,
    pub norm_xx_2alpha: f64,
    pub norm_x_sup: f64,
    pub bracket_2alpha: f64,
    pub mode: NormMode,
}

impl RoughPath {
    /// Build from level-1 samples and cumulative level-2 tensors.
    pub fn from_parts(grid: TimeGrid, values: Array2<f64>, cum2: Array3<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let n = grid.len();
        let d = values.ncols();
        if d == 0 {
            return arg("rough path dimension must be positive");
        }
        if values.nrows() != n {
            return arg(format!("{} samples for a grid of {n} instants", values.nrows()));
        }
        if cum2.dim() != (n, d, d) {
            return arg(format!("cum2 has shape {:?}, expected ({n}, {d}, {d})", cum2.dim()));
        }
        if cum2.slice(s![0, .., ..]).iter().any(|v| *v != 0.0) {
            return arg("cum2 must vanish at t_0");
        }
        if values.iter().chain(cum2.iter()).any(|v| !v.is_finite()) {
            return arg("rough path contains non-finite entries");
        }
        Ok(Self { grid, values, cum2, alpha })
    }

    /// Build from level-1 samples and the level-2 increments of each cell
    /// `[t_i, t_{i+1}]`, accumulating `A_{i+1} = A_i + 𝕏_{i,i+1} + X_{0i} ⊗ X_{i,i+1}`.
    pub fn from_cells(grid: TimeGrid, values: Array2<f64>, cells: &[Tensor2], alpha: f64) -> Result<Self> {
        let d = values.ncols();
        if cells.len() + 1 != grid.len() {
            return arg(format!("{} cell tensors for {} steps", cells.len(), grid.steps()));
        }
        if values.nrows() != grid.len() {
            return arg(format!("{} samples for a grid of {} instants", values.nrows(), grid.len()));
        }
        let mut cum2 = Array3::zeros((grid.len(), d, d));
        for (i, cell) in cells.iter().enumerate() {
            if cell.dim() != d {
                return arg(format!("cell {i} tensor has dimension {}, expected {d}", cell.dim()));
            }
            for k in 0..d {
                let x0k = values[[i, k]] - values[[0, k]];
                for l in 0..d {
                    let dxl = values[[i + 1, l]] - values[[i, l]];
                    cum2[[i + 1, k, l]] = cum2[[i, k, l]] + cell.0[[k, l]] + x0k * dxl;
                }
            }
        }
        Self::from_parts(grid, values, cum2, alpha)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn cum2(&self) -> &Array3<f64> {
        &self.cum2
    }

    pub fn value(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// `X_{t_i t_j}`.
    pub fn increment(&self, i: usize, j: usize) -> Array1<f64> {
        &self.values.row(j) - &self.values.row(i)
    }

    /// `𝕏_{t_i t_j}` without index checks.
    pub(crate) fn xx(&self, i: usize, j: usize) -> Tensor2 {
        let d = self.dim();
        let mut out = Array2::zeros((d, d));
        self.xx_into(i, j, &mut out);
        Tensor2(out)
    }

    fn xx_into(&self, i: usize, j: usize, out: &mut Array2<f64>) {
        let d = self.dim();
        for k in 0..d {
            let x0k = self.values[[i, k]] - self.values[[0, k]];
            for l in 0..d {
                let xl = self.values[[j, l]] - self.values[[i, l]];
                out[[k, l]] = self.cum2[[j, k, l]] - self.cum2[[i, k, l]] - x0k * xl;
            }
        }
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        self.grid.check_index(i)?;
        self.grid.check_index(j)?;
        if i > j {
            return arg(format!("indices out of order: {i} > {j}"));
        }
        Ok(())
    }

    /// `𝕏_{t_i t_j}` for `i ≤ j`; zero when `i = j`.
    pub fn second_level(&self, i: usize, j: usize) -> Result<Tensor2> {
        self.check_pair(i, j)?;
        Ok(self.xx(i, j))
    }

    /// Frobenius norm of the Chen defect for the split `i ≤ k ≤ j`.
    ///
    /// Since level 2 is reconstructed from cumulative tensors the defect is an
    /// algebraic zero; the residual measures floating-point cancellation only.
    pub fn chen_residual(&self, i: usize, k: usize, j: usize) -> Result<f64> {
        self.check_pair(i, k)?;
        self.check_pair(k, j)?;
        let cross = Tensor2::outer(self.increment(i, k).view(), self.increment(k, j).view());
        let defect = &(&self.xx(i, j) - &self.xx(i, k)) - &(&self.xx(k, j) + &cross);
        Ok(defect.frobenius())
    }

    /// `[𝐗]_{t_i t_j} = X_{ij} ⊗ X_{ij} − 2 Sym 𝕏_{ij}`.
    pub fn bracket(&self, i: usize, j: usize) -> Result<Tensor2> {
        self.check_pair(i, j)?;
        Ok(self.bracket_unchecked(i, j))
    }

    pub(crate) fn bracket_unchecked(&self, i: usize, j: usize) -> Tensor2 {
        let x = self.increment(i, j);
        let xx = self.xx(i, j);
        let d = self.dim();
        let mut out = Array2::zeros((d, d));
        for k in 0..d {
            for l in 0..d {
                out[[k, l]] = x[k] * x[l] - (xx.0[[k, l]] + xx.0[[l, k]]);
            }
        }
        Tensor2(out)
    }

    /// Brackets of every cell `[t_i, t_{i+1}]`.
    pub fn cell_brackets(&self) -> Vec<Tensor2> {
        (0..self.steps()).map(|i| self.bracket_unchecked(i, i + 1)).collect()
    }

    /// `‖X‖_∞ = max_i |X_{t_i}|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.rows().into_iter().map(|r| norm(r)).fold(0.0, f64::max)
    }

    /// Magnitude used to scale floating-point tolerances: `1 + ‖X‖²_∞`.
    pub fn scale(&self) -> f64 {
        let s = self.sup_norm();
        1.0 + s * s
    }

    /// Largest bracket over cells and over `[0, t_j]`.
    pub fn max_bracket(&self) -> f64 {
        (0..self.steps())
            .flat_map(|i| [self.bracket_unchecked(i, i + 1).frobenius(), self.bracket_unchecked(0, i + 1).frobenius()])
            .fold(0.0, f64::max)
    }

    /// True when every bracket is below `tol · scale`.
    pub fn is_weak_geometric(&self, tol: f64) -> bool {
        self.max_bracket() <= tol * self.scale()
    }

    pub fn require_geometric(&self, what: &str) -> Result<()> {
        if !self.is_weak_geometric(1e-10) {
            return Err(Error::Precondition(format!(
                "{what} requires a weak geometric driver; bracket reaches {:.3e}",
                self.max_bracket()
            )));
        }
        Ok(())
    }

    /// `(X, 𝕏 + ½[𝐗])`, the weak geometric rough path over the same level 1.
    pub fn geometrize(&self) -> RoughPath {
        let d = self.dim();
        let mut cum2 = self.cum2.clone();
        for j in 1..self.grid.len() {
            let b = self.bracket_unchecked(0, j);
            for k in 0..d {
                for l in 0..d {
                    cum2[[j, k, l]] += 0.5 * b.0[[k, l]];
                }
            }
        }
        RoughPath { grid: self.grid.clone(), values: self.values.clone(), cum2, alpha: self.alpha }
    }

    /// Keep every `stride`-th instant. Level 2 of the coarse path is the
    /// Chen-consistent restriction of this one.
    pub fn restrict(&self, stride: usize) -> Result<RoughPath> {
        let grid = self.grid.restrict(stride)?;
        let values = self.values.slice(s![..;stride, ..]).to_owned();
        let cum2 = self.cum2.slice(s![..;stride, .., ..]).to_owned();
        RoughPath::from_parts(grid, values, cum2, self.alpha)
    }

    /// Discrete Hölder norms at exponent `alpha`.
    pub fn hoelder_norms(&self, alpha: f64, mode: NormMode) -> Result<HoelderReport> {
        check_alpha(alpha)?;
        let n = self.steps();
        let row = |i: usize| -> (f64, f64, f64) {
            let d = self.dim();
            let mut xx = Array2::zeros((d, d));
            let (mut m1, mut m2, mut mb) = (0.0_f64, 0.0_f64, 0.0_f64);
            let last = match mode {
                NormMode::AllPairs => n,
                NormMode::Adjacent => i + 1,
            };
            for j in i + 1..=last {
                let tau = self.grid.t(j) - self.grid.t(i);
                let x = self.increment(i, j);
                self.xx_into(i, j, &mut xx);
                let mut b2 = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        let b = x[k] * x[l] - (xx[[k, l]] + xx[[l, k]]);
                        b2 += b * b;
                    }
                }
                let t2 = tau.powf(2.0 * alpha);
                m1 = m1.max(norm(x.view()) / tau.powf(alpha));
                m2 = m2.max(xx.iter().map(|v| v * v).sum::<f64>().sqrt() / t2);
                mb = mb.max(b2.sqrt() / t2);
            }
            (m1, m2, mb)
        };
        let (m1, m2, mb) = (0..n)
            .into_par_iter()
            .map(row)
            .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2)));
        Ok(HoelderReport {
            norm_x_alpha: m1,
            norm_xx_2alpha: m2,
            norm_x_sup: self.sup_norm(),
            bracket_2alpha: mb,
            mode,
        })
    }

    pub(crate) fn check_same_shape(&self, other: &RoughPath) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return arg("rough paths live on different grids");
        }
        if self.dim() != other.dim() {
            return arg(format!("dimension mismatch: {} vs {}", self.dim(), other.dim()));
        }
        Ok(())
    }

    /// `‖X − X̃‖_α + ‖𝕏 − 𝕏̃‖_{2α}` over all grid pairs.
    pub fn rough_distance(&self, other: &RoughPath, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        self.check_same_shape(other)?;
        let n = self.steps();
        let (m1, m2) = (0..n)
            .into_par_iter()
            .map(|i| {
                let (mut m1, mut m2) = (0.0_f64, 0.0_f64);
                for j in i + 1..=n {
                    let tau = self.grid.t(j) - self.grid.t(i);
                    let dx = &self.increment(i, j) - &other.increment(i, j);
                    let dxx = &self.xx(i, j) - &other.xx(i, j);
                    m1 = m1.max(norm(dx.view()) / tau.powf(alpha));
                    m2 = m2.max(dxx.frobenius() / tau.powf(2.0 * alpha));
                }
                (m1, m2)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        Ok(m1 + m2)
    }

    pub fn to_file(&self) -> RoughPathFile {
        let d = self.dim();
        RoughPathFile {
            alpha: self.alpha,
            times: self.grid.times().to_vec(),
            values: self.values.rows().into_iter().map(|r| r.to_vec()).collect(),
            cum2: (0..self.grid.len())
                .map(|i| (0..d).map(|k| self.cum2.slice(s![i, k, ..]).to_vec()).collect())
                .collect(),
        }
    }

    pub fn from_file(file: RoughPathFile) -> Result<Self> {
        let grid = TimeGrid::from_times(file.times)?;
        let n = grid.len();
        let d = file.values.first().map_or(0, |r| r.len());
        if file.values.len() != n || file.cum2.len() != n {
            return arg("values and cum2 must have one entry per grid instant");
        }
        let mut values = Array2::zeros((n, d));
        let mut cum2 = Array3::zeros((n, d, d));
        for i in 0..n {
            if file.values[i].len() != d || file.cum2[i].len() != d {
                return arg(format!("ragged entry at grid index {i}"));
            }
            for k in 0..d {
                values[[i, k]] = file.values[i][k];
                if file.cum2[i][k].len() != d {
                    return arg(format!("ragged cum2 row at grid index {i}"));
                }
                for l in 0..d {
                    cum2[[i, k, l]] = file.cum2[i][k][l];
                }
            }
        }
        Self::from_parts(grid, values, cum2, file.alpha)
    }
}

/// Chen residuals over random triples `i ≤ k ≤ j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChenSweep {
    pub n: usize,
    pub dim: usize,
    pub samples: usize,
    pub max_residual: f64,
    /// `1 + ‖X‖²_∞`.
    pub scale: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Relative tolerance of [`chen_sweep`].
pub const CHEN_TOLERANCE: f64 = 1e-10;

/// Largest Chen residual over `samples` triples drawn from a seeded stream.
pub fn chen_sweep(p: &RoughPath, samples: usize, seed: u64) -> ChenSweep {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let n = p.steps();
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let mut t = [rng.random_range(0..=n), rng.random_range(0..=n), rng.random_range(0..=n)];
        t.sort_unstable();
        worst = worst.max(p.chen_residual(t[0], t[1], t[2]).expect("sorted in-range indices"));
    }
    let scale = p.scale();
    ChenSweep {
        n,
        dim: p.dim(),
        samples,
        max_residual: worst,
        scale,
        tolerance: CHEN_TOLERANCE * scale,
        pass: worst <= CHEN_TOLERANCE * scale,
    }
}

/// Serialized form: `{"alpha", "times", "values", "cum2"}` with row-major
/// `d × d` tensors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RoughPathFile {
    pub alpha: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub cum2: Vec<Vec<Vec<f64>>>,
}
