//! Characteristics of first-order rough equations
//! `du = Σ_j F^j(x, u, D_x u) d𝐗^j` and the solution of the semilinear case
//! `F^j = D_x u · P^j(x) + Q^j(x, u)` by inverting the spatial
//! characteristic.
//!
//! Inversion is implemented for one space dimension. All solvers require a
//! weak geometric driver.

use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controlled::ControlledPath;
use crate::convergence::ConvergenceReport;
use crate::error::{arg, Error, Result};
use crate::integrate::rough_integral;
use crate::rde::{solve_with_cells, state_at, Cells, VectorField};
use crate::rough_path::RoughPath;

type Map1 = Arc<dyn Fn(ArrayView1<f64>) -> f64 + Send + Sync>;
type MapV = Arc<dyn Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync>;
type MapM = Arc<dyn Fn(ArrayView1<f64>) -> Array2<f64> + Send + Sync>;
type MapT = Arc<dyn Fn(ArrayView1<f64>) -> Array3<f64> + Send + Sync>;
type SourceV = Arc<dyn Fn(ArrayView1<f64>, f64) -> Array1<f64> + Send + Sync>;
type SourceD = Arc<dyn Fn(ArrayView1<f64>, f64) -> (Array2<f64>, Array1<f64>) + Send + Sync>;

/// Initial datum `φ` with its gradient.
#[derive(Clone)]
pub struct InitialDatum {
    phi: Map1,
    dphi: MapV,
}

impl InitialDatum {
    pub fn new(
        phi: impl Fn(ArrayView1<f64>) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { phi: Arc::new(phi), dphi: Arc::new(dphi) }
    }

    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        (self.phi)(x)
    }

    pub fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (self.dphi)(x)
    }
}

/// `du = Σ_j (D_x u · P^j(x) + Q^j(x, u)) d𝐗^j`, `u(0, ·) = φ`.
#[derive(Clone)]
pub struct SemilinearSpec {
    d: usize,
    n: usize,
    p: MapM,
    dp: MapT,
    q: SourceV,
    dq: SourceD,
    pub datum: InitialDatum,
    /// Spacing of the start grid on which characteristics are sampled.
    pub start_step: f64,
}

impl std::fmt::Debug for SemilinearSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemilinearSpec")
            .field("d", &self.d)
            .field("n", &self.n)
            .field("start_step", &self.start_step)
            .finish()
    }
}

/// Default spacing of the characteristic start grid.
pub const START_STEP: f64 = 1e-2;

impl SemilinearSpec {
    /// Transport part only (`Q ≡ 0`). `p(x)` is the `d × n` matrix whose
    /// columns are the `P^j(x)`; `dp(x)[i, j, q] = ∂P^j_i / ∂x_q`.
    pub fn new(
        d: usize,
        n: usize,
        p: impl Fn(ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
        dp: impl Fn(ArrayView1<f64>) -> Array3<f64> + Send + Sync + 'static,
        datum: InitialDatum,
    ) -> Self {
        Self {
            d,
            n,
            p: Arc::new(p),
            dp: Arc::new(dp),
            q: Arc::new(move |_, _| Array1::zeros(n)),
            dq: Arc::new(move |_, _| (Array2::zeros((n, d)), Array1::zeros(n))),
            datum,
            start_step: START_STEP,
        }
    }

    /// Source terms `Q^j(x, u)` with `dq(x, u) = (∂_x Q as n × d, ∂_u Q)`.
    pub fn with_source(
        mut self,
        q: impl Fn(ArrayView1<f64>, f64) -> Array1<f64> + Send + Sync + 'static,
        dq: impl Fn(ArrayView1<f64>, f64) -> (Array2<f64>, Array1<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.q = Arc::new(q);
        self.dq = Arc::new(dq);
        self
    }

    pub fn with_start_step(mut self, step: f64) -> Self {
        self.start_step = step;
        self
    }

    /// One space dimension, constant `P^j = p0[j]`, constant `Q^j = c[j]`.
    pub fn translation(p0: Vec<f64>, c: Vec<f64>, datum: InitialDatum) -> Result<Self> {
        let n = p0.len();
        if c.len() != n {
            return arg("transport and source coefficients differ in length");
        }
        let pm = Array2::from_shape_vec((1, n), p0).expect("length checked");
        let cv = Array1::from(c);
        Ok(Self::new(1, n, move |_| pm.clone(), move |_| Array3::zeros((1, n, 1)), datum)
            .with_source(move |_, _| cv.clone(), move |_, _| (Array2::zeros((n, 1)), Array1::zeros(n))))
    }

    /// `P(x) = x`, `Q = 0`, `φ(x) = x` against a one-dimensional driver.
    pub fn linear() -> Self {
        Self::new(
            1,
            1,
            |x| Array2::from_elem((1, 1), x[0]),
            |_| Array3::from_elem((1, 1, 1), 1.0),
            InitialDatum::new(|x| x[0], |_| Array1::from_elem(1, 1.0)),
        )
    }

    /// `P(x) = 1 + ½ sin x`, `Q(x, u) = 0.3 cos(x) u`, `φ = sin` against a
    /// one-dimensional driver.
    pub fn nonlinear() -> Self {
        Self::new(
            1,
            1,
            |x| Array2::from_elem((1, 1), 1.0 + 0.5 * x[0].sin()),
            |x| Array3::from_elem((1, 1, 1), 0.5 * x[0].cos()),
            InitialDatum::new(|x| x[0].sin(), |x| Array1::from_elem(1, x[0].cos())),
        )
        .with_source(
            |x, u| Array1::from_elem(1, 0.3 * x[0].cos() * u),
            |x, u| (Array2::from_elem((1, 1), -0.3 * x[0].sin() * u), Array1::from_elem(1, 0.3 * x[0].cos())),
        )
    }

    pub fn space_dim(&self) -> usize {
        self.d
    }

    pub fn noise_dim(&self) -> usize {
        self.n
    }

    pub fn transport(&self, x: ArrayView1<f64>) -> Array2<f64> {
        (self.p)(x)
    }

    pub fn transport_derivative(&self, x: ArrayView1<f64>) -> Array3<f64> {
        (self.dp)(x)
    }

    pub fn source(&self, x: ArrayView1<f64>, u: f64) -> Array1<f64> {
        (self.q)(x, u)
    }

    pub fn source_derivative(&self, x: ArrayView1<f64>, u: f64) -> (Array2<f64>, Array1<f64>) {
        (self.dq)(x, u)
    }

    /// The field of `da = −Σ P^j(a) dX^j`, `db = Σ Q^j(a, b) dX^j` on
    /// states `(a, b)`.
    pub fn characteristic_field(&self) -> VectorField {
        let (d, n) = (self.d, self.n);
        let (s1, s2) = (self.clone(), self.clone());
        VectorField::new(
            d + 1,
            n,
            move |y| {
                let mut out = Array2::zeros((d + 1, n));
                s1.ab_rows(y, &mut out);
                out
            },
            move |y| {
                let mut out = Array3::zeros((d + 1, n, d + 1));
                s2.ab_jacobian(y, &mut out);
                out
            },
        )
    }

    fn ab_rows(&self, y: ArrayView1<f64>, out: &mut Array2<f64>) {
        let d = self.d;
        let a = y.slice(ndarray::s![..d]);
        let p = self.transport(a);
        let q = self.source(a, y[d]);
        for j in 0..self.n {
            for i in 0..d {
                out[[i, j]] = -p[[i, j]];
            }
            out[[d, j]] = q[j];
        }
    }

    fn ab_jacobian(&self, y: ArrayView1<f64>, out: &mut Array3<f64>) {
        let d = self.d;
        let a = y.slice(ndarray::s![..d]);
        let dp = self.transport_derivative(a);
        let (qx, qu) = self.source_derivative(a, y[d]);
        for j in 0..self.n {
            for i in 0..d {
                for k in 0..d {
                    out[[i, j, k]] = -dp[[i, j, k]];
                }
            }
            for k in 0..d {
                out[[d, j, k]] = qx[[j, k]];
            }
            out[[d, j, d]] = qu[j];
        }
    }

    fn start_state(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let mut s = Array1::zeros(self.d + 1);
        s.slice_mut(ndarray::s![..self.d]).assign(&y);
        s[self.d] = self.datum.value(y);
        s
    }

    fn check(&self, p: &RoughPath) -> Result<()> {
        if self.n != p.dim() {
            return arg(format!("equation has {} noise terms, driver has dimension {}", self.n, p.dim()));
        }
        p.require_geometric("the characteristic method")
    }
}

/// A first-order field `F^j(x, u, p)`, `j = 1..n`, with its partial
/// derivatives. States of the characteristic system are `(a, b, c)` in
/// `R^d × R × R^d`.
pub trait FirstOrderField: Send + Sync {
    fn space_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// `F^j(x, u, p)` for every `j`.
    fn value(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array1<f64>;
    /// Row `j` holds `F_p^j`.
    fn dp(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array2<f64>;
    /// Row `j` holds `F_x^j`.
    fn dx(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array2<f64>;
    fn du(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array1<f64>;

    /// `F^j − F_p^j · p`.
    fn reduced(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array1<f64> {
        self.value(x, u, p) - self.dp(x, u, p).dot(&p)
    }

    /// Right-hand side of the characteristic system, `(2d + 1) × n`.
    fn characteristic_rhs(&self, state: ArrayView1<f64>) -> Array2<f64> {
        let d = self.space_dim();
        let (x, u, p) = split_state(state, d);
        let fp = self.dp(x, u, p);
        let red = self.reduced(x, u, p);
        let fx = self.dx(x, u, p);
        let fu = self.du(x, u, p);
        let mut out = Array2::zeros((2 * d + 1, self.noise_dim()));
        for j in 0..self.noise_dim() {
            for i in 0..d {
                out[[i, j]] = -fp[[j, i]];
                out[[d + 1 + i, j]] = fx[[j, i]] + fu[j] * p[i];
            }
            out[[d, j]] = red[j];
        }
        out
    }

    /// Jacobian of [`FirstOrderField::characteristic_rhs`] in the state,
    /// `[row, j, component]`; central differences unless overridden.
    fn characteristic_jacobian(&self, state: ArrayView1<f64>) -> Array3<f64> {
        fd_jacobian(|s| self.characteristic_rhs(s), state, self.noise_dim())
    }
}

fn split_state<'a>(state: ArrayView1<'a, f64>, d: usize) -> (ArrayView1<'a, f64>, f64, ArrayView1<'a, f64>) {
    (state.slice_move(ndarray::s![..d]), state[d], state.slice_move(ndarray::s![d + 1..]))
}

fn fd_jacobian(f: impl Fn(ArrayView1<f64>) -> Array2<f64>, state: ArrayView1<f64>, n: usize) -> Array3<f64> {
    let m = state.len();
    let mut out = Array3::zeros((m, n, m));
    for q in 0..m {
        let h = 1e-6 * (1.0 + state[q].abs());
        let mut sp = state.to_owned();
        let mut sm = state.to_owned();
        sp[q] += h;
        sm[q] -= h;
        let diff = (f(sp.view()) - f(sm.view())) / (2.0 * h);
        for i in 0..m {
            for j in 0..n {
                out[[i, j, q]] = diff[[i, j]];
            }
        }
    }
    out
}

/// The semilinear equation as a first-order field `F^j = P^j · p + Q^j`.
/// Rows `(a, b)` of the characteristic Jacobian are analytic and match
/// [`SemilinearSpec::characteristic_field`].
impl FirstOrderField for SemilinearSpec {
    fn space_dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array1<f64> {
        self.transport(x).t().dot(&p) + self.source(x, u)
    }

    fn dp(&self, x: ArrayView1<f64>, _: f64, _: ArrayView1<f64>) -> Array2<f64> {
        self.transport(x).t().to_owned()
    }

    fn dx(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array2<f64> {
        let dp = self.transport_derivative(x);
        let (qx, _) = self.source_derivative(x, u);
        let mut out = qx;
        for j in 0..self.n {
            for q in 0..self.d {
                for i in 0..self.d {
                    out[[j, q]] += dp[[i, j, q]] * p[i];
                }
            }
        }
        out
    }

    fn du(&self, x: ArrayView1<f64>, u: f64, _: ArrayView1<f64>) -> Array1<f64> {
        self.source_derivative(x, u).1
    }

    fn reduced(&self, x: ArrayView1<f64>, u: f64, _: ArrayView1<f64>) -> Array1<f64> {
        self.source(x, u)
    }

    fn characteristic_rhs(&self, state: ArrayView1<f64>) -> Array2<f64> {
        let d = self.d;
        let mut out = Array2::zeros((2 * d + 1, self.n));
        self.ab_rows(state.slice(ndarray::s![..d + 1]), &mut out);
        let (x, u, p) = split_state(state, d);
        let fx = FirstOrderField::dx(self, x, u, p);
        let fu = FirstOrderField::du(self, x, u, p);
        for j in 0..self.n {
            for i in 0..d {
                out[[d + 1 + i, j]] = fx[[j, i]] + fu[j] * p[i];
            }
        }
        out
    }

    fn characteristic_jacobian(&self, state: ArrayView1<f64>) -> Array3<f64> {
        let d = self.d;
        let mut out = fd_jacobian(|s| self.characteristic_rhs(s), state, self.n);
        for i in 0..=d {
            for j in 0..self.n {
                for q in 0..2 * d + 1 {
                    out[[i, j, q]] = 0.0;
                }
            }
        }
        let mut ab = Array3::zeros((d + 1, self.n, d + 1));
        self.ab_jacobian(state.slice(ndarray::s![..d + 1]), &mut ab);
        for i in 0..=d {
            for j in 0..self.n {
                for q in 0..=d {
                    out[[i, j, q]] = ab[[i, j, q]];
                }
            }
        }
        out
    }
}

/// A first-order field given by closures.
pub struct ClosureField {
    d: usize,
    n: usize,
    #[allow(clippy::type_complexity)]
    parts: Box<dyn Fn(ArrayView1<f64>, f64, ArrayView1<f64>) -> FieldParts + Send + Sync>,
}

/// `F`, `F_p`, `F_x`, `F_u` at one point.
pub struct FieldParts {
    pub value: Array1<f64>,
    pub dp: Array2<f64>,
    pub dx: Array2<f64>,
    pub du: Array1<f64>,
}

impl ClosureField {
    pub fn new(
        d: usize,
        n: usize,
        parts: impl Fn(ArrayView1<f64>, f64, ArrayView1<f64>) -> FieldParts + Send + Sync + 'static,
    ) -> Self {
        Self { d, n, parts: Box::new(parts) }
    }
}

impl FirstOrderField for ClosureField {
    fn space_dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array1<f64> {
        (self.parts)(x, u, p).value
    }

    fn dp(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array2<f64> {
        (self.parts)(x, u, p).dp
    }

    fn dx(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array2<f64> {
        (self.parts)(x, u, p).dx
    }

    fn du(&self, x: ArrayView1<f64>, u: f64, p: ArrayView1<f64>) -> Array1<f64> {
        (self.parts)(x, u, p).du
    }
}

/// Solve the full characteristic system from `(y, φ(y), Dφ(y))`. The state
/// path is `(a, b, c)` stacked in `R^{2d+1}`.
pub fn solve_full_characteristics<F: FirstOrderField + 'static>(
    field: Arc<F>,
    datum: &InitialDatum,
    p: &RoughPath,
    y: ArrayView1<f64>,
) -> Result<ControlledPath> {
    let d = field.space_dim();
    let n = field.noise_dim();
    if y.len() != d {
        return arg(format!("start point has {} components, field has {d} space dimensions", y.len()));
    }
    if n != p.dim() {
        return arg(format!("field has {n} noise terms, driver has dimension {}", p.dim()));
    }
    p.require_geometric("the characteristic method")?;
    let mut s0 = Array1::zeros(2 * d + 1);
    s0.slice_mut(ndarray::s![..d]).assign(&y);
    s0[d] = datum.value(y);
    s0.slice_mut(ndarray::s![d + 1..]).assign(&datum.gradient(y));
    let (f1, f2) = (field.clone(), field);
    let vf = VectorField::new(
        2 * d + 1,
        n,
        move |s| f1.characteristic_rhs(s),
        move |s| f2.characteristic_jacobian(s),
    );
    solve_with_cells(&vf, s0.view(), p, &Cells::of(p))
}

/// Solve `(a, b)` from `(y, φ(y))`; the state path is `(a, b)` in `R^{d+1}`.
pub fn solve_characteristics(spec: &SemilinearSpec, p: &RoughPath, y: ArrayView1<f64>) -> Result<ControlledPath> {
    spec.check(p)?;
    if y.len() != spec.d {
        return arg(format!("start point has {} components, equation has {} space dimensions", y.len(), spec.d));
    }
    solve_with_cells(&spec.characteristic_field(), spec.start_state(y).view(), p, &Cells::of(p))
}

/// `y` with `a_t(y) = x` from samples of a monotone map on a start grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub y: f64,
    /// Index of the bracketing cell `[starts[cell], starts[cell + 1]]`.
    pub cell: usize,
    /// Estimate of the linear-interpolation error of the sampled map there.
    pub bound: f64,
}

/// Invert sampled `a_t` at `x` by bisection over the start grid followed by
/// linear interpolation inside the bracketing cell.
pub fn invert_a(starts: &[f64], a: &[f64], x: f64) -> Result<Inversion> {
    let k = starts.len();
    if k < 2 || a.len() != k {
        return arg("inversion needs at least two samples of matching length");
    }
    let increasing = a[1] > a[0];
    if a.windows(2).any(|w| if increasing { w[1] <= w[0] } else { w[1] >= w[0] }) {
        return Err(Error::Precondition("sampled characteristic is not strictly monotone".into()));
    }
    let (lo, hi) = if increasing { (a[0], a[k - 1]) } else { (a[k - 1], a[0]) };
    if !(lo..=hi).contains(&x) {
        return Err(Error::Domain(format!("x = {x} lies outside the sampled range [{lo}, {hi}]")));
    }
    let below = |v: f64| if increasing { v <= x } else { v >= x };
    let (mut l, mut r) = (0usize, k - 1);
    while r - l > 1 {
        let mid = (l + r) / 2;
        if below(a[mid]) {
            l = mid;
        } else {
            r = mid;
        }
    }
    let s = (x - a[l]) / (a[r] - a[l]);
    let y = starts[l] + s * (starts[r] - starts[l]);
    let curvature = |j: usize| (a[j + 1] - 2.0 * a[j] + a[j - 1]).abs();
    let bound = if k >= 3 {
        let c = [l.max(1).min(k - 2), r.max(1).min(k - 2)].into_iter().map(curvature).fold(0.0, f64::max);
        c / 8.0
    } else {
        0.0
    };
    Ok(Inversion { y, cell: l, bound })
}

/// Characteristics started from every point of a uniform grid.
struct StartGrid {
    starts: Vec<f64>,
    /// `a[[i, j]] = a_{t_i}(starts[j])`.
    a: Array2<f64>,
    field: VectorField,
    cells: Cells,
    spec: SemilinearSpec,
}

/// Target tolerance of the Newton polish after interpolation.
const POLISH_TOL: f64 = 1e-13;

impl StartGrid {
    fn build(spec: &SemilinearSpec, p: &RoughPath, lo: f64, hi: f64) -> Result<Self> {
        let h = spec.start_step;
        if !(h > 0.0) {
            return arg("start-grid step must be positive");
        }
        let drift = (0..p.grid().len()).map(|i| crate::tensor::norm(p.increment(0, i).view())).fold(0.0, f64::max);
        let sup_p = |l: f64, r: f64| {
            let k = (((r - l) / h).ceil() as usize).max(1);
            (0..=k)
                .map(|j| {
                    let x = Array1::from_elem(1, l + (r - l) * j as f64 / k as f64);
                    spec.transport(x.view()).iter().map(|v| v * v).sum::<f64>().sqrt()
                })
                .fold(0.0, f64::max)
        };
        let mut pad = 0.0;
        for _ in 0..4 {
            pad = 1.25 * sup_p(lo - pad, hi + pad) * drift;
        }
        pad += 3.0 * h;
        let (l, r) = (lo - pad, hi + pad);
        let count = ((r - l) / h).ceil() as usize + 1;
        let starts: Vec<f64> = (0..count).map(|j| l + j as f64 * h).collect();
        let field = spec.characteristic_field();
        let cells = Cells::of(p);
        let cols: Vec<Array1<f64>> = starts
            .par_iter()
            .map(|y| {
                let s0 = spec.start_state(Array1::from_elem(1, *y).view());
                solve_with_cells(&field, s0.view(), p, &cells).map(|c| c.values().column(0).to_owned())
            })
            .collect::<Result<_>>()?;
        let mut a = Array2::zeros((p.grid().len(), count));
        for (j, c) in cols.iter().enumerate() {
            a.column_mut(j).assign(c);
        }
        Ok(Self { starts, a, field, cells, spec: spec.clone() })
    }

    /// `(u(t_i, x), preimage, |a_{t_i}(y) − x|, interpolation bound)`.
    fn solve_at(&self, i: usize, x: f64) -> Result<(f64, f64, f64, f64)> {
        let row = self.a.row(i);
        let inv = invert_a(&self.starts, row.as_slice().expect("row of a standard-layout array"), x)
            .map_err(|e| match e {
                Error::Domain(_) => Error::Domain(format!("preimage of x = {x} at step {i} is outside the start grid")),
                other => other,
            })?;
        let slope = (row[inv.cell + 1] - row[inv.cell]) / (self.starts[inv.cell + 1] - self.starts[inv.cell]);
        let mut y = inv.y;
        let mut best = (f64::INFINITY, y, 0.0);
        for _ in 0..20 {
            let s = state_at(&self.field, self.spec.start_state(Array1::from_elem(1, y).view()).view(), &self.cells, i)?;
            let r = s[0] - x;
            if r.abs() < best.0 {
                best = (r.abs(), y, s[1]);
            }
            if r.abs() <= POLISH_TOL * (1.0 + x.abs()) {
                break;
            }
            y -= r / slope;
        }
        Ok((best.2, best.1, best.0, inv.bound))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemilinearSolution {
    pub t_index: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub preimages: Vec<f64>,
    /// Largest `|a_t(y) − x|` after refinement.
    pub inversion_residual: f64,
    /// Largest interpolation-error estimate of the first guess.
    pub interpolation_bound: f64,
}

/// `u(t_i, x) = b_t(a_t^{-1}(x))` at each of `x_points` (one space dimension).
pub fn solve_semilinear(spec: &SemilinearSpec, p: &RoughPath, t_index: usize, x_points: &[f64]) -> Result<SemilinearSolution> {
    spec.check(p)?;
    if spec.d != 1 {
        return arg("characteristic inversion is implemented in one space dimension");
    }
    p.grid().check_index(t_index)?;
    if x_points.is_empty() {
        return arg("no evaluation points");
    }
    let lo = x_points.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x_points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let grid = StartGrid::build(spec, p, lo, hi)?;
    let rows: Vec<(f64, f64, f64, f64)> =
        x_points.par_iter().map(|x| grid.solve_at(t_index, *x)).collect::<Result<_>>()?;
    Ok(SemilinearSolution {
        t_index,
        t: p.grid().t(t_index),
        x: x_points.to_vec(),
        u: rows.iter().map(|r| r.0).collect(),
        preimages: rows.iter().map(|r| r.1).collect(),
        inversion_residual: rows.iter().map(|r| r.2).fold(0.0, f64::max),
        interpolation_bound: rows.iter().map(|r| r.3).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub t_index: usize,
    pub fd_step: f64,
    /// Largest `|b_t(y) − u(t, a_t(y))|`.
    pub value_discrepancy: f64,
    /// Largest `|c_t(y) − D_x u(t, a_t(y))|` with `D_x u` by central differences.
    pub gradient_discrepancy: f64,
}

/// Compare the full characteristics `(a, b, c)` from each start `y` with the
/// solved field `u` and its gradient along `a_t(y)`.
pub fn structure_check(spec: &SemilinearSpec, p: &RoughPath, t_index: usize, starts: &[f64], fd_step: f64) -> Result<StructureReport> {
    spec.check(p)?;
    if spec.d != 1 {
        return arg("structure check is implemented in one space dimension");
    }
    let field = Arc::new(spec.clone());
    let mut targets = Vec::new();
    let mut chars = Vec::new();
    for y in starts {
        let path = solve_full_characteristics(field.clone(), &spec.datum, p, Array1::from_elem(1, *y).view())?;
        let s = path.value(t_index).to_owned();
        targets.extend([s[0] - fd_step, s[0], s[0] + fd_step]);
        chars.push(s);
    }
    let sol = solve_semilinear(spec, p, t_index, &targets)?;
    let mut value_discrepancy = 0.0_f64;
    let mut gradient_discrepancy = 0.0_f64;
    for (q, s) in chars.iter().enumerate() {
        let (um, u0, up) = (sol.u[3 * q], sol.u[3 * q + 1], sol.u[3 * q + 2]);
        value_discrepancy = value_discrepancy.max((s[1] - u0).abs());
        gradient_discrepancy = gradient_discrepancy.max((s[2] - (up - um) / (2.0 * fd_step)).abs());
    }
    Ok(StructureReport { t_index, fd_step, value_discrepancy, gradient_discrepancy })
}

/// Spacing of the finite differences in `x` used by [`pde_residual`].
pub const PDE_FD_STEP: f64 = 1e-3;

/// `max_t |u(t, x) − φ(x) − Σ_j ∫₀ᵗ (D_x u P^j + Q^j)(s, x) d𝐗^j_s|` at a fixed
/// `x`, with `u` from the characteristic solution and `D_x u`, `D²_x u` by
/// central differences of step [`PDE_FD_STEP`].
pub fn pde_residual(spec: &SemilinearSpec, p: &RoughPath, x: f64) -> Result<f64> {
    spec.check(p)?;
    if spec.d != 1 {
        return arg("the direct residual is implemented in one space dimension");
    }
    let delta = PDE_FD_STEP;
    let grid = StartGrid::build(spec, p, x - delta, x + delta)?;
    let len = p.grid().len();
    let us: Vec<[f64; 3]> = (0..len)
        .into_par_iter()
        .map(|i| -> Result<[f64; 3]> {
            Ok([grid.solve_at(i, x - delta)?.0, grid.solve_at(i, x)?.0, grid.solve_at(i, x + delta)?.0])
        })
        .collect::<Result<_>>()?;
    let n = spec.n;
    let xv = Array1::from_elem(1, x);
    let pv = spec.transport(xv.view());
    let dpv = spec.transport_derivative(xv.view());
    let mut values = Array2::zeros((len, n));
    let mut gub = Array3::zeros((len, n, n));
    for (i, [um, u, up]) in us.iter().enumerate() {
        let ux = (up - um) / (2.0 * delta);
        let uxx = (up - 2.0 * u + um) / (delta * delta);
        let q = spec.source(xv.view(), *u);
        let (qx, qu) = spec.source_derivative(xv.view(), *u);
        for j in 0..n {
            values[[i, j]] = ux * pv[[0, j]] + q[j];
        }
        for j in 0..n {
            for k in 0..n {
                // ∂_X of D_x u in direction k, then of the source through u.
                let dux = uxx * pv[[0, k]] + ux * dpv[[0, k, 0]] + qx[[k, 0]] + qu[k] * ux;
                gub[[i, j, k]] = dux * pv[[0, j]] + qu[j] * values[[i, k]];
            }
        }
    }
    let eta = ControlledPath::new(p.grid().clone(), values, gub)?;
    let integral = rough_integral(&eta, p)?;
    let u0 = spec.datum.value(xv.view());
    Ok(us
        .iter()
        .enumerate()
        .map(|(i, u)| (u[1] - u0 - integral.path.value(i)[0]).abs())
        .fold(0.0, f64::max))
}

/// [`pde_residual`] over `levels` dyadic coarsenings of `p`, finest last,
/// judged against slope `−(3α − 1) ± tolerance`.
pub fn pde_residual_ladder(spec: &SemilinearSpec, p: &RoughPath, x: f64, levels: usize, tolerance: f64) -> Result<ConvergenceReport> {
    if levels < 2 || p.steps() % (1 << (levels - 1)) != 0 {
        return arg(format!("{} steps cannot be coarsened over {levels} levels", p.steps()));
    }
    let mut sizes = Vec::new();
    let mut residuals = Vec::new();
    for k in (0..levels).rev() {
        let q = p.restrict(1 << k)?;
        sizes.push(q.steps());
        residuals.push(pde_residual(spec, &q, x)?);
    }
    ConvergenceReport::new(sizes, residuals, -(3.0 * p.alpha() - 1.0), tolerance)
}
