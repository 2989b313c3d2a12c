//! Constructors for rough paths.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::grid::TimeGrid;
use crate::rough_path::RoughPath;
use crate::tensor::Tensor2;

/// Level 2 of each cell is `½ X_{i,i+1} ⊗ X_{i,i+1}`: the lift of the
/// piecewise-linear interpolant of the samples.
pub fn piecewise_linear(grid: TimeGrid, values: Array2<f64>, alpha: f64) -> Result<RoughPath> {
    if values.nrows() < 2 {
        return arg("a piecewise-linear lift needs at least two samples");
    }
    if values.nrows() != grid.len() {
        return arg(format!("{} samples for a grid of {} instants", values.nrows(), grid.len()));
    }
    let cells: Vec<Tensor2> = (0..grid.steps())
        .map(|i| {
            let dx = &values.row(i + 1) - &values.row(i);
            Tensor2::outer(dx.view(), dx.view()) * 0.5
        })
        .collect();
    RoughPath::from_cells(grid, values, &cells, alpha)
}

/// Sample `f` on the grid and lift piecewise-linearly.
pub fn piecewise_linear_fn(grid: TimeGrid, d: usize, f: impl Fn(f64) -> Vec<f64>, alpha: f64) -> Result<RoughPath> {
    let values = sample(&grid, d, f)?;
    piecewise_linear(grid, values, alpha)
}

fn sample(grid: &TimeGrid, d: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Array2<f64>> {
    let mut values = Array2::zeros((grid.len(), d));
    for (i, &t) in grid.times().iter().enumerate() {
        let v = f(t);
        if v.len() != d {
            return arg(format!("path returned {} coordinates, expected {d}", v.len()));
        }
        for (k, x) in v.into_iter().enumerate() {
            values[[i, k]] = x;
        }
    }
    Ok(values)
}

/// Brownian motion with Itô second level.
///
/// Random numbers come from one ChaCha20 stream seeded with `seed`. The coarse
/// increments are drawn first, in time order with coordinates innermost. Each
/// coarse cell is then refined into `m` sub-steps by an exact Brownian bridge
/// drawn from the same stream, so the level-1 path does not depend on `m`.
/// The piecewise-linear area of the refined path supplies the antisymmetric
/// part; `½Δt·I` is subtracted from the symmetric part. For `d = 1` level 2 is
/// the exact `(X_{st}² − (t − s))/2`.
pub fn brownian_ito(seed: u64, d: usize, n: usize, horizon: f64, m: usize, alpha: f64) -> Result<RoughPath> {
    if d == 0 {
        return arg("dimension must be positive");
    }
    if m == 0 {
        return arg("subsample factor must be at least 1");
    }
    let grid = TimeGrid::uniform(n, horizon)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut inc = Array2::zeros((n, d));
    for i in 0..n {
        let sd = grid.dt(i).sqrt();
        for k in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            inc[[i, k]] = sd * z;
        }
    }
    let mut values = Array2::zeros((n + 1, d));
    for i in 0..n {
        for k in 0..d {
            values[[i + 1, k]] = values[[i, k]] + inc[[i, k]];
        }
    }
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let dt = grid.dt(i);
        let x = inc.row(i);
        if d == 1 {
            cells.push(Tensor2(Array2::from_elem((1, 1), 0.5 * (x[0] * x[0] - dt))));
            continue;
        }
        let mut cell = if m == 1 {
            Tensor2::outer(x, x) * 0.5
        } else {
            bridge_area(&mut rng, x, dt, m)
        };
        for k in 0..d {
            cell.0[[k, k]] -= 0.5 * dt;
        }
        cells.push(cell);
    }
    RoughPath::from_cells(grid, values, &cells, alpha)
}

/// Piecewise-linear level 2 over a cell refined by a Brownian bridge with the
/// prescribed total increment `x`.
fn bridge_area(rng: &mut ChaCha20Rng, x: ndarray::ArrayView1<f64>, dt: f64, m: usize) -> Tensor2 {
    let d = x.len();
    let sd = (dt / m as f64).sqrt();
    let mut z = Array2::<f64>::zeros((m, d));
    for j in 0..m {
        for k in 0..d {
            z[[j, k]] = rng.sample(StandardNormal);
        }
    }
    let mean = z.mean_axis(ndarray::Axis(0)).expect("m > 0");
    let mut pos = Array1::<f64>::zeros(d);
    let mut area = Array2::<f64>::zeros((d, d));
    for j in 0..m {
        let delta: Array1<f64> = (0..d).map(|k| sd * (z[[j, k]] - mean[k]) + x[k] / m as f64).collect();
        for k in 0..d {
            for l in 0..d {
                area[[k, l]] += pos[k] * delta[l] + 0.5 * delta[k] * delta[l];
            }
        }
        pos += &delta;
    }
    // The bridge ends exactly at x up to rounding; pin the symmetric part to
    // ½ x ⊗ x so the cell bracket is exact.
    let anti = Tensor2(area).antisym();
    anti + Tensor2::outer(x, x) * 0.5
}

/// `X ≡ 0` and `𝕏_{st} = (t − s) a` for antisymmetric `a`.
pub fn pure_area(a: &Array2<f64>, n: usize, horizon: f64, alpha: f64) -> Result<RoughPath> {
    let d = a.nrows();
    if d == 0 || a.ncols() != d {
        return arg("area matrix must be square and non-empty");
    }
    for k in 0..d {
        for l in 0..d {
            if a[[k, l]] != -a[[l, k]] {
                return arg(format!("area matrix is not antisymmetric at ({k}, {l})"));
            }
        }
    }
    let grid = TimeGrid::uniform(n, horizon)?;
    let cells: Vec<Tensor2> = (0..n).map(|i| Tensor2(a * grid.dt(i))).collect();
    RoughPath::from_cells(grid, Array2::zeros((n + 1, d)), &cells, alpha)
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Lift of a differentiable path, level 2 of each cell by 5-point
/// Gauss–Legendre quadrature of `∫_s^t (f(u) − f(s)) ⊗ f′(u) du`.
pub fn smooth(
    grid: TimeGrid,
    d: usize,
    f: impl Fn(f64) -> Vec<f64> + Sync,
    df: impl Fn(f64) -> Vec<f64> + Sync,
    alpha: f64,
) -> Result<RoughPath> {
    let values = sample(&grid, d, &f)?;
    let mut cells = Vec::with_capacity(grid.steps());
    for i in 0..grid.steps() {
        let (s, t) = (grid.t(i), grid.t(i + 1));
        let (mid, half) = (0.5 * (s + t), 0.5 * (t - s));
        let mut cell = Array2::zeros((d, d));
        for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let u = mid + half * node;
            let fu = f(u);
            let du = df(u);
            if du.len() != d || fu.len() != d {
                return arg("path derivative has the wrong dimension");
            }
            for k in 0..d {
                for l in 0..d {
                    cell[[k, l]] += w * half * (fu[k] - values[[i, k]]) * du[l];
                }
            }
        }
        cells.push(Tensor2(cell));
    }
    RoughPath::from_cells(grid, values, &cells, alpha)
}

/// Deterministic test paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curve {
    /// `t` in one dimension.
    Identity,
    /// `(cos 2πt, sin 2πt)`.
    Circle,
    /// `(t, t²)`.
    Parabola,
    /// `√t`, exactly ½-Hölder at the origin.
    Root,
    /// A lacunary sum of asymmetric tents, `Σ_k c 2^{-k/2} S(2^k t)`, which is
    /// ½-Hölder at every scale and whose cubic variation does not cancel.
    Sawtooth,
}

const SAWTOOTH_LEVELS: usize = 40;
const SAWTOOTH_AMPLITUDE: f64 = 0.5;

fn tent(u: f64) -> f64 {
    let v = u - u.floor();
    if v < 0.25 {
        4.0 * v
    } else {
        (1.0 - v) / 0.75
    }
}

impl Curve {
    pub fn dim(self) -> usize {
        match self {
            Curve::Circle | Curve::Parabola => 2,
            _ => 1,
        }
    }

    pub fn eval(self, t: f64) -> Vec<f64> {
        match self {
            Curve::Identity => vec![t],
            Curve::Circle => vec![(2.0 * PI * t).cos(), (2.0 * PI * t).sin()],
            Curve::Parabola => vec![t, t * t],
            Curve::Root => vec![t.sqrt()],
            Curve::Sawtooth => {
                let mut x = 0.0;
                let mut scale = 1.0_f64;
                for _ in 0..SAWTOOTH_LEVELS {
                    x += SAWTOOTH_AMPLITUDE * scale.sqrt().recip() * tent(scale * t);
                    scale *= 2.0;
                }
                vec![x]
            }
        }
    }

    /// Time derivative, for the curves that have one everywhere on `[0, T]`.
    pub fn derivative(self, t: f64) -> Option<Vec<f64>> {
        match self {
            Curve::Identity => Some(vec![1.0]),
            Curve::Circle => Some(vec![-2.0 * PI * (2.0 * PI * t).sin(), 2.0 * PI * (2.0 * PI * t).cos()]),
            Curve::Parabola => Some(vec![1.0, 2.0 * t]),
            Curve::Root | Curve::Sawtooth => None,
        }
    }

    /// Piecewise-linear lift of the samples on `grid`.
    pub fn lift(self, grid: TimeGrid, alpha: f64) -> Result<RoughPath> {
        piecewise_linear_fn(grid, self.dim(), |t| self.eval(t), alpha)
    }
}

/// Which constructor a [`LiftSpec`] selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftKind {
    PiecewiseLinear,
    BrownianIto,
    PureArea,
    Smooth,
}

/// A serializable description of a lift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftSpec {
    pub kind: LiftKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub n: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_subsample")]
    pub subsample: usize,
    /// Area matrix for `pure_area`, row-major.
    #[serde(default)]
    pub area: Option<Vec<Vec<f64>>>,
    /// Sampled path for `piecewise_linear` and `smooth`.
    #[serde(default)]
    pub curve: Option<Curve>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_dim() -> usize {
    1
}
fn default_horizon() -> f64 {
    1.0
}
fn default_subsample() -> usize {
    16
}
fn default_alpha() -> f64 {
    0.45
}

/// Smallest subsample factor accepted by [`LiftSpec::build`] for Brownian
/// lifts in `d ≥ 2`.
pub const MIN_SUBSAMPLE: usize = 4;

impl LiftSpec {
    pub fn new(kind: LiftKind, n: usize) -> Self {
        Self {
            kind,
            dim: default_dim(),
            n,
            horizon: default_horizon(),
            seed: 0,
            subsample: default_subsample(),
            area: None,
            curve: None,
            alpha: default_alpha(),
        }
    }

    /// Parse the short names used on the command line: `brownian`,
    /// `brownian-ito`, `pure-area`, `smooth`, `pwl-<curve>`.
    pub fn from_name(name: &str, n: usize) -> Result<Self> {
        let mut spec = match name {
            "brownian" | "brownian-ito" => Self::new(LiftKind::BrownianIto, n),
            "pure-area" => {
                let mut s = Self::new(LiftKind::PureArea, n);
                s.dim = 2;
                s.area = Some(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
                s
            }
            "smooth" => {
                let mut s = Self::new(LiftKind::Smooth, n);
                s.curve = Some(Curve::Parabola);
                s
            }
            other => {
                let curve = match other.strip_prefix("pwl-") {
                    Some("identity") => Curve::Identity,
                    Some("circle") => Curve::Circle,
                    Some("parabola") => Curve::Parabola,
                    Some("root") => Curve::Root,
                    Some("sawtooth") => Curve::Sawtooth,
                    _ => return arg(format!("unknown lift name {other:?}")),
                };
                let mut s = Self::new(LiftKind::PiecewiseLinear, n);
                s.curve = Some(curve);
                s
            }
        };
        if let Some(c) = spec.curve {
            spec.dim = c.dim();
        }
        Ok(spec)
    }

    pub fn build(&self) -> Result<RoughPath> {
        match self.kind {
            LiftKind::PiecewiseLinear => {
                let curve = self.curve.unwrap_or(Curve::Identity);
                curve.lift(TimeGrid::uniform(self.n, self.horizon)?, self.alpha)
            }
            LiftKind::Smooth => {
                let curve = self.curve.unwrap_or(Curve::Parabola);
                if curve.derivative(0.0).is_none() {
                    return arg(format!("curve {curve:?} has no derivative for a smooth lift"));
                }
                smooth(
                    TimeGrid::uniform(self.n, self.horizon)?,
                    curve.dim(),
                    |t| curve.eval(t),
                    |t| curve.derivative(t).expect("checked above"),
                    self.alpha,
                )
            }
            LiftKind::PureArea => {
                let rows = self.area.as_ref().ok_or_else(|| crate::Error::Config("pure_area needs an area matrix".into()))?;
                let d = rows.len();
                if rows.iter().any(|r| r.len() != d) {
                    return arg("area matrix must be square");
                }
                let a = Array2::from_shape_fn((d, d), |(k, l)| rows[k][l]);
                pure_area(&a, self.n, self.horizon, self.alpha)
            }
            LiftKind::BrownianIto => {
                if self.dim >= 2 && self.subsample < MIN_SUBSAMPLE {
                    return arg(format!("subsample must be at least {MIN_SUBSAMPLE} for d >= 2, got {}", self.subsample));
                }
                brownian_ito(self.seed, self.dim, self.n, self.horizon, self.subsample, self.alpha)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_lift_at_horizon() {
        let p = Curve::Identity.lift(TimeGrid::uniform(4, 1.0).unwrap(), 0.5).unwrap();
        assert!((p.cum2()[[4, 0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_area_rejects_symmetric_matrix() {
        assert!(pure_area(&array![[0.0, 1.0], [1.0, 0.0]], 4, 1.0, 0.5).is_err());
        let p = pure_area(&array![[0.0, 1.0], [-1.0, 0.0]], 4, 1.0, 0.5).unwrap();
        assert_eq!(p.second_level(0, 4).unwrap().0, array![[0.0, 1.0], [-1.0, 0.0]]);
    }

    #[test]
    fn parabola_cross_integral() {
        let p = smooth(
            TimeGrid::uniform(8, 1.0).unwrap(),
            2,
            |t| vec![t, t * t],
            |t| vec![1.0, 2.0 * t],
            0.5,
        )
        .unwrap();
        let xx = p.second_level(0, 8).unwrap();
        assert!((xx.get(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        // ∫ u² d u = 1/3
        assert!((xx.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn brownian_is_reproducible() {
        let a = brownian_ito(3, 2, 32, 1.0, 8, 0.45).unwrap();
        let b = brownian_ito(3, 2, 32, 1.0, 8, 0.45).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.cum2(), b.cum2());
        let c = brownian_ito(4, 2, 32, 1.0, 8, 0.45).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn lift_names_parse() {
        assert_eq!(LiftSpec::from_name("pwl-circle", 8).unwrap().dim, 2);
        assert_eq!(LiftSpec::from_name("brownian", 8).unwrap().kind, LiftKind::BrownianIto);
        assert!(LiftSpec::from_name("fbm", 8).is_err());
        let mut s = LiftSpec::from_name("brownian", 8).unwrap();
        s.dim = 2;
        s.subsample = 1;
        assert!(s.build().is_err());
    }

    #[test]
    fn sawtooth_is_half_hoelder_sized() {
        let x0 = Curve::Sawtooth.eval(0.0)[0];
        assert_eq!(x0, 0.0);
        for &tau in &[1e-2, 1e-4, 1e-6] {
            let dx = (Curve::Sawtooth.eval(0.3 + tau)[0] - Curve::Sawtooth.eval(0.3)[0]).abs();
            assert!(dx < 10.0 * tau.sqrt(), "tau {tau}: {dx}");
        }
    }
}
