//! Rough differential equations `dY = f(Y) d𝐗` by the second-order Davie
//! step, flows on a grid of start points, and the flow-composition check.

use ndarray::{s, Array1, Array2, Array3, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controlled::ControlledPath;
use crate::convergence::ConvergenceReport;
use crate::error::{arg, Error, Result};
use crate::rough_path::RoughPath;
use crate::tensor::Tensor2;

type FieldEval = Box<dyn Fn(ArrayView1<f64>) -> Array2<f64> + Send + Sync>;
type FieldDeriv = Box<dyn Fn(ArrayView1<f64>) -> Array3<f64> + Send + Sync>;

/// A vector field `f: R^m → L(R^d, R^m)` with its derivative
/// `Df[i, l, j] = ∂f_{il} / ∂y_j`.
pub struct VectorField {
    m: usize,
    d: usize,
    f: FieldEval,
    df: FieldDeriv,
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("VectorField").field("m", &self.m).field("d", &self.d).finish()
    }
}

/// Relative tolerance of [`VectorField::check_derivative`].
pub const DERIVATIVE_TOLERANCE: f64 = 1e-4;

impl VectorField {
    pub fn new(
        m: usize,
        d: usize,
        f: impl Fn(ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
        df: impl Fn(ArrayView1<f64>) -> Array3<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { m, d, f: Box::new(f), df: Box::new(df) }
    }

    pub fn zero(m: usize, d: usize) -> Self {
        Self::constant(Array2::zeros((m, d)))
    }

    /// `f ≡ c` for an `m × d` matrix `c`.
    pub fn constant(c: Array2<f64>) -> Self {
        let (m, d) = c.dim();
        Self::new(m, d, move |_| c.clone(), move |_| Array3::zeros((m, d, m)))
    }

    /// The scalar field `f(y) = λ y` against a one-dimensional driver.
    pub fn linear(lambda: f64) -> Self {
        Self::new(
            1,
            1,
            move |y| Array2::from_elem((1, 1), lambda * y[0]),
            move |_| Array3::from_elem((1, 1, 1), lambda),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn driver_dim(&self) -> usize {
        self.d
    }

    pub fn eval(&self, y: ArrayView1<f64>) -> Array2<f64> {
        (self.f)(y)
    }

    pub fn derivative(&self, y: ArrayView1<f64>) -> Array3<f64> {
        (self.df)(y)
    }

    /// Largest relative discrepancy between `Df` and central differences of
    /// `f` at `points` pseudo-random states in `[-radius, radius]^m`.
    pub fn derivative_error(&self, seed: u64, points: usize, radius: f64) -> f64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        for _ in 0..points {
            let y = Array1::from_shape_fn(self.m, |_| rng.random_range(-radius..=radius));
            let df = self.derivative(y.view());
            let scale = df.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            for j in 0..self.m {
                let h = 1e-6 * (1.0 + y[j].abs());
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] -= h;
                let fd = (self.eval(yp.view()) - self.eval(ym.view())) / (2.0 * h);
                for i in 0..self.m {
                    for l in 0..self.d {
                        worst = worst.max((fd[[i, l]] - df[[i, l, j]]).abs() / scale);
                    }
                }
            }
        }
        worst
    }

    /// Reject fields whose `Df` disagrees with finite differences at ten
    /// random points by more than [`DERIVATIVE_TOLERANCE`].
    pub fn check_derivative(&self, seed: u64, radius: f64) -> Result<()> {
        let err = self.derivative_error(seed, 10, radius);
        if err > DERIVATIVE_TOLERANCE {
            return Err(Error::Precondition(format!(
                "derivative disagrees with finite differences (relative error {err:.3e})"
            )));
        }
        Ok(())
    }

    /// `f(y) X + (Df(y) · f(y)) 𝕏` for one step.
    pub fn davie_increment(&self, y: ArrayView1<f64>, x: ArrayView1<f64>, xx: &Tensor2) -> Array1<f64> {
        let fy = self.eval(y);
        let dfy = self.derivative(y);
        davie_from_parts(&fy, &dfy, x, xx)
    }
}

fn davie_from_parts(fy: &Array2<f64>, dfy: &Array3<f64>, x: ArrayView1<f64>, xx: &Tensor2) -> Array1<f64> {
    let (m, d) = fy.dim();
    let mut out = Array1::zeros(m);
    for i in 0..m {
        let mut acc = 0.0;
        for l in 0..d {
            acc += fy[[i, l]] * x[l];
        }
        out[i] = acc;
        let mut acc = 0.0;
        for k in 0..d {
            for l in 0..d {
                let xkl = xx.0[[k, l]];
                if xkl == 0.0 {
                    continue;
                }
                let mut c = 0.0;
                for j in 0..m {
                    c += dfy[[i, l, j]] * fy[[j, k]];
                }
                acc += c * xkl;
            }
        }
        out[i] += acc;
    }
    out
}

/// Per-cell increments and second levels of a driver.
pub(crate) struct Cells {
    pub x: Vec<Array1<f64>>,
    pub xx: Vec<Tensor2>,
}

impl Cells {
    pub fn of(p: &RoughPath) -> Self {
        let n = p.steps();
        Self {
            x: (0..n).map(|i| p.increment(i, i + 1)).collect(),
            xx: (0..n).map(|i| p.xx(i, i + 1)).collect(),
        }
    }
}

/// Solve `dY = f(Y) d𝐗`, `Y_0 = y0`, storing `∂_X Y = f(Y)`.
pub fn solve_rde(f: &VectorField, y0: ArrayView1<f64>, p: &RoughPath) -> Result<ControlledPath> {
    solve_with_cells(f, y0, p, &Cells::of(p))
}

pub(crate) fn solve_with_cells(f: &VectorField, y0: ArrayView1<f64>, p: &RoughPath, cells: &Cells) -> Result<ControlledPath> {
    if f.d != p.dim() {
        return arg(format!("field expects a {}-dimensional driver, got {}", f.d, p.dim()));
    }
    if y0.len() != f.m {
        return arg(format!("initial state has {} components, field acts on R^{}", y0.len(), f.m));
    }
    let n = p.grid().len();
    let (m, d) = (f.m, f.d);
    let mut values = Array2::zeros((n, m));
    let mut gubinelli = Array3::zeros((n, m, d));
    values.row_mut(0).assign(&y0);
    for i in 0..n {
        let y = values.row(i).to_owned();
        let fy = f.eval(y.view());
        if fy.dim() != (m, d) {
            return arg(format!("field returned shape {:?}, expected ({m}, {d})", fy.dim()));
        }
        if i + 1 < n {
            let dfy = f.derivative(y.view());
            let step = davie_from_parts(&fy, &dfy, cells.x[i].view(), &cells.xx[i]);
            let next = &y + &step;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: i + 1, detail: "state is no longer finite".into() });
            }
            values.row_mut(i + 1).assign(&next);
        }
        gubinelli.slice_mut(s![i, .., ..]).assign(&fy);
    }
    ControlledPath::new(p.grid().clone(), values, gubinelli)
}

/// State after `last` steps of the Davie scheme, without storing the path.
pub(crate) fn state_at(f: &VectorField, y0: ArrayView1<f64>, cells: &Cells, last: usize) -> Result<Array1<f64>> {
    let mut y = y0.to_owned();
    for i in 0..last {
        let step = f.davie_increment(y.view(), cells.x[i].view(), &cells.xx[i]);
        y += &step;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: i + 1, detail: "state is no longer finite".into() });
        }
    }
    Ok(y)
}

/// Default spacing of the start grid used for flow derivatives.
pub const FLOW_FD_STEP: f64 = 1e-2;

/// Scalar flows `x ↦ Y_t(x)` sampled on a uniform start grid, with central
/// finite-difference derivatives in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub starts: Vec<f64>,
    pub step: f64,
    /// `values[[i, j]] = Y_{t_i}(x_j)`.
    pub values: Array2<f64>,
    pub dy: Array2<f64>,
    pub d2y: Array2<f64>,
}

/// Solve the scalar RDE from every point of a uniform start grid.
pub fn solve_flow(f: &VectorField, p: &RoughPath, starts: &[f64]) -> Result<FlowResult> {
    if f.m != 1 {
        return arg("flows are computed for scalar states only");
    }
    let k = starts.len();
    if k < 5 {
        return arg(format!("a flow needs at least 5 start points, got {k}"));
    }
    let h = starts[1] - starts[0];
    if h <= 0.0 || starts.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return arg("start grid must be uniform and increasing");
    }
    let cells = Cells::of(p);
    let paths: Vec<Array1<f64>> = starts
        .par_iter()
        .map(|x| solve_with_cells(f, Array1::from_elem(1, *x).view(), p, &cells).map(|y| y.values().column(0).to_owned()))
        .collect::<Result<_>>()?;
    let n = p.grid().len();
    let mut values = Array2::zeros((n, k));
    for (j, path) in paths.iter().enumerate() {
        values.column_mut(j).assign(path);
    }
    let mut dy = Array2::zeros((n, k));
    let mut d2y = Array2::zeros((n, k));
    for i in 0..n {
        let y = values.row(i);
        for j in 0..k {
            let (d1, d2) = if j == 0 {
                ((-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h), (2.0 * y[0] - 5.0 * y[1] + 4.0 * y[2] - y[3]) / (h * h))
            } else if j == k - 1 {
                (
                    (3.0 * y[j] - 4.0 * y[j - 1] + y[j - 2]) / (2.0 * h),
                    (2.0 * y[j] - 5.0 * y[j - 1] + 4.0 * y[j - 2] - y[j - 3]) / (h * h),
                )
            } else {
                ((y[j + 1] - y[j - 1]) / (2.0 * h), (y[j + 1] - 2.0 * y[j] + y[j - 1]) / (h * h))
            };
            dy[[i, j]] = d1;
            d2y[[i, j]] = d2;
        }
    }
    Ok(FlowResult { starts: starts.to_vec(), step: h, values, dy, d2y })
}

impl FlowResult {
    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let lo = self.starts[0];
        let hi = self.starts[self.starts.len() - 1];
        if !(lo..=hi).contains(&x) {
            return Err(Error::Domain(format!("{x} lies outside the start grid [{lo}, {hi}]")));
        }
        let j = (((x - lo) / self.step).floor() as usize).min(self.starts.len() - 2);
        Ok((j, (x - self.starts[j]) / self.step))
    }

    fn hermite(&self, v: &Array2<f64>, dv: &Array2<f64>, i: usize, j: usize, s: f64) -> f64 {
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * v[[i, j]] + h10 * self.step * dv[[i, j]] + h01 * v[[i, j + 1]] + h11 * self.step * dv[[i, j + 1]]
    }

    /// `Y_{t_i}(x)` by cubic Hermite interpolation.
    pub fn value_at(&self, i: usize, x: f64) -> Result<f64> {
        let (j, s) = self.locate(x)?;
        Ok(self.hermite(&self.values, &self.dy, i, j, s))
    }

    /// `DY_{t_i}(x)` by cubic Hermite interpolation of the sampled derivatives.
    pub fn derivative_at(&self, i: usize, x: f64) -> Result<f64> {
        let (j, s) = self.locate(x)?;
        Ok(self.hermite(&self.dy, &self.d2y, i, j, s))
    }

    /// `D²Y_{t_i}(x)` by linear interpolation.
    pub fn second_derivative_at(&self, i: usize, x: f64) -> Result<f64> {
        let (j, s) = self.locate(x)?;
        Ok((1.0 - s) * self.d2y[[i, j]] + s * self.d2y[[i, j + 1]])
    }
}

/// Which coefficient multiplies `d[𝐗]` in the composed equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BracketCoefficient {
    /// `Dg(V) DY(Z) f(Z) ⊗ + ½ D²Y(Z) f(Z) ⊗ f(Z)`, from the Itô–Wentzell
    /// formula applied to `Y_t(Z_t)`.
    #[default]
    Derived,
    /// `Dg(Z) f(Z) + D²Y(Z) f(Z) ⊗ f(Z)`.
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCompositionReport {
    pub n: usize,
    pub x: f64,
    pub fd_step: f64,
    pub coefficient: BracketCoefficient,
    /// `V_t = Y_t(Z_t(x))` on the driver grid.
    pub lhs: Vec<f64>,
    /// `x + ∫ (g(V) + DY(Z) f(Z)) d𝐗 + ∫ c d[𝐗]`.
    pub rhs: Vec<f64>,
    pub residual: f64,
    /// The same residual with the `d[𝐗]` terms dropped, which is the whole
    /// equation on weak geometric drivers.
    pub geometric_residual: f64,
}

/// Compose the flows `Y` of `g` and `Z` of `f` (both scalar) started at `x`
/// and compare `V_t = Y_t(Z_t(x))` with the integrated composed equation.
pub fn flow_composition(
    g: &VectorField,
    f: &VectorField,
    p: &RoughPath,
    x: f64,
    fd_step: f64,
    coefficient: BracketCoefficient,
) -> Result<FlowCompositionReport> {
    if g.m != 1 || f.m != 1 {
        return arg("flow composition is implemented for scalar states");
    }
    if !(fd_step > 0.0) {
        return arg("start-grid step must be positive");
    }
    let d = p.dim();
    let n = p.grid().len();
    let cells = Cells::of(p);
    let z = solve_with_cells(f, Array1::from_elem(1, x).view(), p, &cells)?;
    let zs: Vec<f64> = z.values().column(0).to_vec();
    let (zmin, zmax) = zs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let lo = zmin - 3.0 * fd_step;
    let count = (((zmax + 3.0 * fd_step - lo) / fd_step).ceil() as usize + 1).max(5);
    let starts: Vec<f64> = (0..count).map(|j| lo + j as f64 * fd_step).collect();
    let flow = solve_flow(g, p, &starts)?;

    let mut lhs = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    let mut d2y = Vec::with_capacity(n);
    for (i, zi) in zs.iter().enumerate() {
        lhs.push(flow.value_at(i, *zi)?);
        dy.push(flow.derivative_at(i, *zi)?);
        d2y.push(flow.second_derivative_at(i, *zi)?);
    }

    let mut rhs = vec![x; n];
    let mut geometric = vec![x; n];
    for i in 0..n - 1 {
        let v = Array1::from_elem(1, lhs[i]);
        let zi = Array1::from_elem(1, zs[i]);
        let gv = g.eval(v.view());
        let dgv = g.derivative(v.view());
        let fz = f.eval(zi.view());
        let dfz = f.derivative(zi.view());
        // a_l = g_l(V) + DY f_l(Z) and its Gubinelli derivative in direction k.
        let a: Vec<f64> = (0..d).map(|l| gv[[0, l]] + dy[i] * fz[[0, l]]).collect();
        let mut step = 0.0;
        for l in 0..d {
            step += a[l] * cells.x[i][l];
            for k in 0..d {
                let da = dgv[[0, l, 0]] * a[k]
                    + (dgv[[0, k, 0]] * dy[i] + d2y[i] * fz[[0, k]]) * fz[[0, l]]
                    + dy[i] * dfz[[0, l, 0]] * fz[[0, k]];
                step += da * cells.xx[i].0[[k, l]];
            }
        }
        let bracket = p.bracket_unchecked(i, i + 1);
        let dgz = g.derivative(zi.view());
        let mut corr = 0.0;
        for k in 0..d {
            for l in 0..d {
                let c = match coefficient {
                    BracketCoefficient::Derived => {
                        dgv[[0, l, 0]] * dy[i] * fz[[0, k]] + 0.5 * d2y[i] * fz[[0, k]] * fz[[0, l]]
                    }
                    BracketCoefficient::AsPrinted => dgz[[0, l, 0]] * fz[[0, k]] + d2y[i] * fz[[0, k]] * fz[[0, l]],
                };
                corr += c * bracket.0[[k, l]];
            }
        }
        geometric[i + 1] = geometric[i] + step;
        rhs[i + 1] = rhs[i] + step + corr;
    }
    let max_diff = |a: &[f64]| lhs.iter().zip(a).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    Ok(FlowCompositionReport {
        n: p.steps(),
        x,
        fd_step,
        coefficient,
        residual: max_diff(&rhs),
        geometric_residual: max_diff(&geometric),
        lhs,
        rhs,
    })
}

/// Composition residuals on the driver restricted to `levels` dyadic meshes,
/// finest last, judged against slope `-(3α − 1) ± tolerance`.
pub fn flow_composition_ladder(
    g: &VectorField,
    f: &VectorField,
    p: &RoughPath,
    x: f64,
    levels: usize,
    coefficient: BracketCoefficient,
    tolerance: f64,
) -> Result<ConvergenceReport> {
    if levels < 2 || p.steps() % (1 << (levels - 1)) != 0 {
        return arg(format!("{} steps cannot be coarsened over {levels} levels", p.steps()));
    }
    let mut sizes = Vec::new();
    let mut residuals = Vec::new();
    for k in (0..levels).rev() {
        let q = p.restrict(1 << k)?;
        sizes.push(q.steps());
        residuals.push(flow_composition(g, f, &q, x, FLOW_FD_STEP, coefficient)?.residual);
    }
    ConvergenceReport::new(sizes, residuals, -(3.0 * p.alpha() - 1.0), tolerance)
}
