//! Itô–Wentzell verification.
//!
//! A field `g(t, x) = g(0, x) + ∫₀ᵗ h(s, x) dX_s` is composed with a controlled
//! path `Z`, and `g(t, Z_t)` is compared with the expansion
//!
//! ```text
//! g(0, Z_0) + ∫ h(r, Z_r) dX_r + ∫ Dg(r, Z_r) d_X Z_r
//!           + ∫ Dh(r, Z_r) ∘ ∂_X Z_r d[𝐗]_r + ½ ∫ D²g(r, Z_r) ∂_X Z_r ⊗ ∂_X Z_r d[𝐗]_r
//! ```
//!
//! Dimensions: the driver lives in `V = R^d`, the state `x` in `U = R^m`, the
//! field `g` in `W = R^w`. Linear maps follow the conventions of
//! [`crate::pairing`].

use std::sync::Arc;

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controlled::ControlledPath;
use crate::convergence::log_log_slope;
use crate::error::{arg, Error, Result};
use crate::integrate::{controlled_integral, rough_integral, young_bracket_integral};
use crate::pairing::{apply_gubinelli, apply_map, circ, contract, psi_dot_phi, quadratic_form};
use crate::rough_path::RoughPath;
use crate::tensor::{norm, Tensor2};

type Eval1 = Arc<dyn Fn(usize, ArrayView1<f64>) -> Array1<f64> + Send + Sync>;
type Eval2 = Arc<dyn Fn(usize, ArrayView1<f64>) -> Array2<f64> + Send + Sync>;
type Eval3 = Arc<dyn Fn(usize, ArrayView1<f64>) -> Array3<f64> + Send + Sync>;

/// The family `x ↦ h(·, x)` of controlled paths in `L(V, W)`, with
/// `∂_X h`, the space derivative `Dh` and, optionally, `∂_X Dh`.
///
/// Shapes at a grid index `i` and point `x`:
/// `h` is `w·d`; `∂_X h` is `(w·d) × d`; `Dh` is `(w·d) × m`;
/// `∂_X Dh` is `(w·d) × m × d` (last axis the driver direction).
#[derive(Clone)]
pub struct FieldFamily {
    pub w: usize,
    pub m: usize,
    pub d: usize,
    h: Eval1,
    dxh: Eval2,
    dh: Eval2,
    dxdh: Option<Eval3>,
}

impl std::fmt::Debug for FieldFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldFamily")
            .field("w", &self.w)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("has_dxdh", &self.dxdh.is_some())
            .finish()
    }
}

impl FieldFamily {
    pub fn new(
        (w, m, d): (usize, usize, usize),
        h: impl Fn(usize, ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
        dxh: impl Fn(usize, ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
        dh: impl Fn(usize, ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { w, m, d, h: Arc::new(h), dxh: Arc::new(dxh), dh: Arc::new(dh), dxdh: None }
    }

    pub fn with_dxdh(mut self, dxdh: impl Fn(usize, ArrayView1<f64>) -> Array3<f64> + Send + Sync + 'static) -> Self {
        self.dxdh = Some(Arc::new(dxdh));
        self
    }

    /// `h ≡ 0`.
    pub fn zero(w: usize, m: usize, d: usize) -> Self {
        Self::new(
            (w, m, d),
            move |_, _| Array1::zeros(w * d),
            move |_, _| Array2::zeros((w * d, d)),
            move |_, _| Array2::zeros((w * d, m)),
        )
        .with_dxdh(move |_, _| Array3::zeros((w * d, m, d)))
    }

    pub fn h(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        (self.h)(i, x)
    }

    pub fn dxh(&self, i: usize, x: ArrayView1<f64>) -> Array2<f64> {
        (self.dxh)(i, x)
    }

    pub fn dh(&self, i: usize, x: ArrayView1<f64>) -> Array2<f64> {
        (self.dh)(i, x)
    }

    pub fn dxdh(&self, i: usize, x: ArrayView1<f64>) -> Result<Array3<f64>> {
        match &self.dxdh {
            Some(f) => Ok(f(i, x)),
            None => Err(Error::Config("field family has no Gubinelli derivative of Dh".into())),
        }
    }

    /// The controlled path `t ↦ h(t, x)` on `p`'s grid.
    pub fn path_at(&self, x: ArrayView1<f64>, p: &RoughPath) -> Result<ControlledPath> {
        let n = p.grid().len();
        let wd = self.w * self.d;
        let mut values = Array2::zeros((n, wd));
        let mut gub = Array3::zeros((n, wd, self.d));
        for i in 0..n {
            values.row_mut(i).assign(&self.h(i, x));
            gub.slice_mut(s![i, .., ..]).assign(&self.dxh(i, x));
        }
        ControlledPath::new(p.grid().clone(), values, gub)
    }

    fn check(&self, p: &RoughPath) -> Result<()> {
        if self.d != p.dim() {
            return arg(format!("field family expects a {}-dimensional driver, got {}", self.d, p.dim()));
        }
        Ok(())
    }
}

/// `g(0, ·)` with its first two derivatives: `w`, `w × m`, `w × m × m`.
#[derive(Clone)]
pub struct InitialField {
    g0: Eval1,
    dg0: Eval2,
    d2g0: Eval3,
}

impl std::fmt::Debug for InitialField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("InitialField")
    }
}

impl InitialField {
    pub fn new(
        g0: impl Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
        dg0: impl Fn(ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
        d2g0: impl Fn(ArrayView1<f64>) -> Array3<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            g0: Arc::new(move |_, x| g0(x)),
            dg0: Arc::new(move |_, x| dg0(x)),
            d2g0: Arc::new(move |_, x| d2g0(x)),
        }
    }

    pub fn zero(w: usize, m: usize) -> Self {
        Self::new(move |_| Array1::zeros(w), move |_| Array2::zeros((w, m)), move |_| Array3::zeros((w, m, m)))
    }

    /// `g₀(x) = |x|²` (scalar).
    pub fn squared_norm() -> Self {
        Self::new(
            |x| Array1::from_elem(1, x.dot(&x)),
            |x| (&x * 2.0).insert_axis(ndarray::Axis(0)),
            |x| {
                let m = x.len();
                let mut h = Array3::zeros((1, m, m));
                for k in 0..m {
                    h[[0, k, k]] = 2.0;
                }
                h
            },
        )
    }

    pub fn value(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (self.g0)(0, x)
    }

    pub fn derivative(&self, x: ArrayView1<f64>) -> Array2<f64> {
        (self.dg0)(0, x)
    }

    pub fn second_derivative(&self, x: ArrayView1<f64>) -> Array3<f64> {
        (self.d2g0)(0, x)
    }
}

/// Evaluation of `g(t_i, x)`, `Dg(t_i, x)` and `D²g(t_i, x)` at arbitrary points.
pub trait GSource: Sync {
    fn value(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64>;
    fn dg(&self, i: usize, x: ArrayView1<f64>) -> Result<Array2<f64>>;
    fn d2g(&self, i: usize, x: ArrayView1<f64>) -> Result<Array3<f64>>;
    /// True when `D²g` comes from finite differences.
    fn finite_difference_d2g(&self) -> bool {
        false
    }
}

/// Relative step for the finite-difference `D²g` of [`IntegratedG`].
pub const D2G_FD_STEP: f64 = 1e-4;

/// `g` evaluated by rough integration of the family on the driver's grid.
///
/// `Dg` follows from `Dg(t, x)·u = Dg(0, x)·u + ∫₀ᵗ Dh(r, x)·u dX_r` computed
/// along a basis of `U`, and `D²g` is the analytic `D²g(0, ·)` plus central
/// differences of the integral part with step `10⁻⁴·(1 + |x_q|)`.
#[derive(Debug, Clone)]
pub struct IntegratedG {
    family: FieldFamily,
    init: InitialField,
    driver: Arc<RoughPath>,
}

impl IntegratedG {
    pub fn new(family: FieldFamily, init: InitialField, driver: Arc<RoughPath>) -> Result<Self> {
        family.check(&driver)?;
        Ok(Self { family, init, driver })
    }

    fn integral_part(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        let p = &self.driver;
        let mut acc = Array1::zeros(self.family.w);
        for u in 0..i {
            let xx = p.xx(u, u + 1);
            let step = apply_map(self.family.h(u, x).view(), p.increment(u, u + 1).view())
                + apply_gubinelli(self.family.dxh(u, x).view(), &xx);
            acc += &step;
        }
        acc
    }

    /// The `Dg` increment over `[0, t_i]` computed as rough integrals of
    /// `Dh(·, x) e_j`.
    fn dg_part(&self, i: usize, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        let (w, m) = (self.family.w, self.family.m);
        let p = &self.driver;
        let mut acc = Array2::zeros((w, m));
        for u in 0..i {
            let dh = self.family.dh(u, x);
            let dxdh = self.family.dxdh(u, x)?;
            let inc = p.increment(u, u + 1);
            let xx = p.xx(u, u + 1);
            for j in 0..m {
                let y = dh.column(j);
                let gub = dxdh.slice(s![.., j, ..]);
                let step = apply_map(y, inc.view()) + apply_gubinelli(gub, &xx);
                for a in 0..w {
                    acc[[a, j]] += step[a];
                }
            }
        }
        Ok(acc)
    }
}

impl GSource for IntegratedG {
    fn value(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        self.init.value(x) + self.integral_part(i, x)
    }

    fn dg(&self, i: usize, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        Ok(self.init.derivative(x) + self.dg_part(i, x)?)
    }

    fn d2g(&self, i: usize, x: ArrayView1<f64>) -> Result<Array3<f64>> {
        let (w, m) = (self.family.w, self.family.m);
        let mut out = self.init.second_derivative(x);
        for q in 0..m {
            let h = D2G_FD_STEP * (1.0 + x[q].abs());
            let mut xp = x.to_owned();
            let mut xm = x.to_owned();
            xp[q] += h;
            xm[q] -= h;
            let diff = (self.dg_part(i, xp.view())? - self.dg_part(i, xm.view())?) / (2.0 * h);
            for a in 0..w {
                for p in 0..m {
                    out[[a, p, q]] += diff[[a, p]];
                }
            }
        }
        Ok(out)
    }

    fn finite_difference_d2g(&self) -> bool {
        true
    }
}

/// `g` given in closed form.
#[derive(Clone)]
pub struct AnalyticG {
    g: Eval1,
    dg: Eval2,
    d2g: Eval3,
}

impl AnalyticG {
    pub fn new(
        g: impl Fn(usize, ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
        dg: impl Fn(usize, ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
        d2g: impl Fn(usize, ArrayView1<f64>) -> Array3<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { g: Arc::new(g), dg: Arc::new(dg), d2g: Arc::new(d2g) }
    }
}

impl GSource for AnalyticG {
    fn value(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        (self.g)(i, x)
    }

    fn dg(&self, i: usize, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        Ok((self.dg)(i, x))
    }

    fn d2g(&self, i: usize, x: ArrayView1<f64>) -> Result<Array3<f64>> {
        Ok((self.d2g)(i, x))
    }
}

/// `g`, `Dg`, `D²g` tabulated on the grid at a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GField {
    pub points: Vec<Array1<f64>>,
    /// `(N+1) × P × w`
    pub values: Array3<f64>,
    /// `(N+1) × P × w × m`
    pub dg: Array4<f64>,
    /// `D²g` per grid index and point, `w × m × m` each.
    pub d2g: Vec<Vec<Array3<f64>>>,
    pub d2g_finite_difference: bool,
}

/// Materialize `g(t, x) = g₀(x) + ∫₀ᵗ h(s, x) dX_s` at `points`.
///
/// Values are running rough integrals of `h(·, x)`. `Dg` comes from the
/// analytic `dg` when given, otherwise from rough integrals of `Dh(·, x)·e_j`;
/// `D²g` likewise falls back to finite differences of that integral.
pub fn build_g(
    family: &FieldFamily,
    init: &InitialField,
    p: &Arc<RoughPath>,
    points: &[Array1<f64>],
    analytic: Option<&AnalyticG>,
) -> Result<GField> {
    if points.is_empty() {
        return arg("build_g needs at least one point");
    }
    family.check(p)?;
    let n = p.grid().len();
    let (w, m) = (family.w, family.m);
    let integrated = IntegratedG::new(family.clone(), init.clone(), p.clone())?;
    let mut values = Array3::zeros((n, points.len(), w));
    let mut dg = Array4::zeros((n, points.len(), w, m));
    let mut d2g = vec![Vec::with_capacity(points.len()); n];
    for (q, x) in points.iter().enumerate() {
        if x.len() != m {
            return arg(format!("point {q} has dimension {}, expected {m}", x.len()));
        }
        let run = rough_integral(&family.path_at(x.view(), p)?, p)?;
        let g0 = init.value(x.view());
        let mut dg_paths = Vec::new();
        if analytic.is_none() {
            for j in 0..m {
                dg_paths.push(rough_integral(&direction_path(family, x.view(), j, p)?, p)?);
            }
        }
        let dg0 = init.derivative(x.view());
        for i in 0..n {
            values.slice_mut(s![i, q, ..]).assign(&(&g0 + &run.value(i)));
            match analytic {
                Some(a) => {
                    dg.slice_mut(s![i, q, .., ..]).assign(&a.dg(i, x.view())?);
                    d2g[i].push(a.d2g(i, x.view())?);
                }
                None => {
                    for (j, path) in dg_paths.iter().enumerate() {
                        for a in 0..w {
                            dg[[i, q, a, j]] = dg0[[a, j]] + path.value(i)[a];
                        }
                    }
                    d2g[i].push(integrated.d2g(i, x.view())?);
                }
            }
        }
    }
    Ok(GField { points: points.to_vec(), values, dg, d2g, d2g_finite_difference: analytic.is_none() })
}

/// The controlled path `r ↦ Dh(r, x) e_j` in `L(V, W)`.
fn direction_path(family: &FieldFamily, x: ArrayView1<f64>, j: usize, p: &RoughPath) -> Result<ControlledPath> {
    let n = p.grid().len();
    let wd = family.w * family.d;
    let mut values = Array2::zeros((n, wd));
    let mut gub = Array3::zeros((n, wd, family.d));
    for i in 0..n {
        values.row_mut(i).assign(&family.dh(i, x).column(j));
        gub.slice_mut(s![i, .., ..]).assign(&family.dxdh(i, x)?.slice(s![.., j, ..]));
    }
    ControlledPath::new(p.grid().clone(), values, gub)
}

/// `max_t |Dg(t, x)·u − Dg(0, x)·u − ∫₀ᵗ Dh(r, x)·u dX_r|` for an analytic `Dg`.
pub fn dg_consistency(family: &FieldFamily, g: &dyn GSource, p: &RoughPath, x: ArrayView1<f64>, u: ArrayView1<f64>) -> Result<f64> {
    family.check(p)?;
    let n = p.grid().len();
    let (wd, d) = (family.w * family.d, family.d);
    let mut values = Array2::zeros((n, wd));
    let mut gub = Array3::zeros((n, wd, d));
    for i in 0..n {
        values.row_mut(i).assign(&family.dh(i, x).dot(&u));
        let dxdh = family.dxdh(i, x)?;
        for r in 0..wd {
            for k in 0..d {
                gub[[i, r, k]] = (0..family.m).map(|j| dxdh[[r, j, k]] * u[j]).sum();
            }
        }
    }
    let run = rough_integral(&ControlledPath::new(p.grid().clone(), values, gub)?, p)?;
    let base = g.dg(0, x)?.dot(&u);
    let mut worst = 0.0_f64;
    for i in 0..n {
        let lhs = g.dg(i, x)?.dot(&u) - &base;
        worst = worst.max(norm((&lhs - &run.value(i)).view()));
    }
    Ok(worst)
}

/// Both sides of the expansion along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WentzellReport {
    pub n: usize,
    pub alpha: f64,
    /// `g(t, Z_t)` per grid index.
    pub lhs: Vec<Vec<f64>>,
    pub terms: WentzellTerms,
    pub residual_max: f64,
    pub d2g_finite_difference: bool,
}

/// The right-hand side, term by term. Terms absent from a given form are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WentzellTerms {
    /// `g(0, Z_0)`.
    pub initial: Vec<f64>,
    /// `∫ h(r, Z_r) dX_r`.
    pub rough: Vec<Vec<f64>>,
    /// `∫ Dg(r, Z_r) d_X Z_r`.
    pub controlled: Vec<Vec<f64>>,
    /// `∫ Dh(r, Z_r) ∘ ∂_X Z_r d[𝐗]_r`.
    pub bracket_cross: Vec<Vec<f64>>,
    /// `½ ∫ D²g(r, Z_r) ∂_X Z_r ⊗ ∂_X Z_r d[𝐗]_r`.
    pub bracket_second: Vec<Vec<f64>>,
}

impl WentzellTerms {
    /// The assembled right-hand side at grid index `i`.
    pub fn rhs(&self, i: usize) -> Array1<f64> {
        let mut v = Array1::from(self.initial.clone());
        for term in [&self.rough, &self.controlled, &self.bracket_cross, &self.bracket_second] {
            v += &ArrayView1::from(&term[i]);
        }
        v
    }
}

/// Everything evaluated along `Z`.
struct Along {
    lhs: Array2<f64>,
    /// `h(r, Z_r)` with Gubinelli `∂_X h + Dh ∂_X Z`.
    h_path: ControlledPath,
    /// `Dg(r, Z_r)` with Gubinelli `∂_X Dg + D²g ∂_X Z`.
    dg_path: ControlledPath,
    /// `Dh(r, Z_r) ∘ ∂_X Z_r`, `(N+1) × w × d²`.
    cross: Array3<f64>,
    /// `D²g(r, Z_r)(∂_X Z_r ⊗ ∂_X Z_r)`.
    second: Array3<f64>,
    /// `∂_X h(r, Z_r)` as a map on `V ⊗ V`.
    dxh_map: Array3<f64>,
    d2g: Vec<Array3<f64>>,
    dh: Vec<Array2<f64>>,
}

/// `∂_X Dg[(a·m + j), k] = Dh[(a·d + k), j]`: the Gubinelli derivative of
/// `Dg(·, x)` read off from `Dh` through `Dg·u = ∫ Dh·u dX`.
pub fn dxdg_from_dh(dh: &Array2<f64>, w: usize, m: usize, d: usize) -> Array2<f64> {
    let mut out = Array2::zeros((w * m, d));
    for a in 0..w {
        for j in 0..m {
            for k in 0..d {
                out[[a * m + j, k]] = dh[[a * d + k, j]];
            }
        }
    }
    out
}

fn along(family: &FieldFamily, g: &dyn GSource, z: &ControlledPath, p: &RoughPath) -> Result<Along> {
    family.check(p)?;
    z.check_driver(p)?;
    let (w, m, d) = (family.w, family.m, family.d);
    if z.dim() != m {
        return arg(format!("trajectory lives in R^{}, field expects R^{m}", z.dim()));
    }
    let n = z.len();
    struct Row {
        lhs: Array1<f64>,
        h: Array1<f64>,
        dh_gub: Array2<f64>,
        dg: Array2<f64>,
        dg_gub: Array2<f64>,
        cross: Array2<f64>,
        second: Array2<f64>,
        dxh_map: Array2<f64>,
        d2g: Array3<f64>,
        dh: Array2<f64>,
    }
    let rows: Vec<Row> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Row> {
            let x = z.value(i);
            let dz = z.derivative(i);
            let h = family.h(i, x);
            let dxh = family.dxh(i, x);
            let dh = family.dh(i, x);
            let dg = g.dg(i, x)?;
            let d2g = g.d2g(i, x)?;
            let mut dh_gub = dxh.clone();
            dh_gub += &dh.dot(&dz);
            let mut dg_gub = dxdg_from_dh(&dh, w, m, d);
            for a in 0..w {
                for j in 0..m {
                    for k in 0..d {
                        let mut acc = 0.0;
                        for q in 0..m {
                            acc += d2g[[a, j, q]] * dz[[q, k]];
                        }
                        dg_gub[[a * m + j, k]] += acc;
                    }
                }
            }
            Ok(Row {
                lhs: g.value(i, x),
                h,
                cross: circ(dh.view(), dz),
                second: quadratic_form(d2g.view(), dz),
                dxh_map: psi_dot_phi(dxh.view(), Array2::eye(d).view()),
                dh_gub,
                dg: dg.clone(),
                dg_gub,
                d2g,
                dh,
            })
        })
        .collect::<Result<_>>()?;
    let mut lhs = Array2::zeros((n, w));
    let mut hv = Array2::zeros((n, w * d));
    let mut hg = Array3::zeros((n, w * d, d));
    let mut gv = Array2::zeros((n, w * m));
    let mut gg = Array3::zeros((n, w * m, d));
    let mut cross = Array3::zeros((n, w, d * d));
    let mut second = Array3::zeros((n, w, d * d));
    let mut dxh_map = Array3::zeros((n, w, d * d));
    let mut d2g = Vec::with_capacity(n);
    let mut dh = Vec::with_capacity(n);
    for (i, r) in rows.into_iter().enumerate() {
        if r.lhs.len() != w || r.h.len() != w * d || r.dg.dim() != (w, m) {
            return arg("field callables returned values of the wrong shape");
        }
        lhs.row_mut(i).assign(&r.lhs);
        hv.row_mut(i).assign(&r.h);
        hg.slice_mut(s![i, .., ..]).assign(&r.dh_gub);
        gv.row_mut(i).assign(&Array1::from_iter(r.dg.iter().copied()));
        gg.slice_mut(s![i, .., ..]).assign(&r.dg_gub);
        cross.slice_mut(s![i, .., ..]).assign(&r.cross);
        second.slice_mut(s![i, .., ..]).assign(&r.second);
        dxh_map.slice_mut(s![i, .., ..]).assign(&r.dxh_map);
        d2g.push(r.d2g);
        dh.push(r.dh);
    }
    Ok(Along {
        lhs,
        h_path: ControlledPath::new(p.grid().clone(), hv, hg)?,
        dg_path: ControlledPath::new(p.grid().clone(), gv, gg)?,
        cross,
        second,
        dxh_map,
        d2g,
        dh,
    })
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn report(along: &Along, terms: WentzellTerms, p: &RoughPath, fd: bool) -> WentzellReport {
    let n = along.lhs.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        worst = worst.max(norm((&along.lhs.row(i) - &terms.rhs(i)).view()));
    }
    WentzellReport {
        n: p.steps(),
        alpha: p.alpha(),
        lhs: rows(&along.lhs),
        terms,
        residual_max: worst,
        d2g_finite_difference: fd,
    }
}

/// Residual of the full expansion with both bracket terms.
pub fn wentzell_residual(family: &FieldFamily, g: &dyn GSource, z: &ControlledPath, p: &RoughPath) -> Result<WentzellReport> {
    let a = along(family, g, z, p)?;
    let t1 = rough_integral(&a.h_path, p)?;
    let t2 = controlled_integral(&a.dg_path, z, p)?;
    let t3 = young_bracket_integral(&a.cross, p)?;
    let t4 = young_bracket_integral(&a.second, p)? * 0.5;
    let terms = WentzellTerms {
        initial: a.lhs.row(0).to_vec(),
        rough: rows(t1.path.values()),
        controlled: rows(t2.path.values()),
        bracket_cross: rows(&t3),
        bracket_second: rows(&t4),
    };
    Ok(report(&a, terms, p, g.finite_difference_d2g()))
}

/// Residual of the two-term form, valid for weak geometric drivers only.
pub fn wentzell_stratonovich(family: &FieldFamily, g: &dyn GSource, z: &ControlledPath, p: &RoughPath) -> Result<WentzellReport> {
    p.require_geometric("the Stratonovich form")?;
    let a = along(family, g, z, p)?;
    let t1 = rough_integral(&a.h_path, p)?;
    let t2 = controlled_integral(&a.dg_path, z, p)?;
    let zeros = vec![vec![0.0; family.w]; z.len()];
    let terms = WentzellTerms {
        initial: a.lhs.row(0).to_vec(),
        rough: rows(t1.path.values()),
        controlled: rows(t2.path.values()),
        bracket_cross: zeros.clone(),
        bracket_second: zeros,
    };
    Ok(report(&a, terms, p, g.finite_difference_d2g()))
}

/// Assemble the two-term form against the geometrization `X̃`, convert each
/// integral back to `X` with the Itô–Stratonovich corrections, and compare
/// with the full expansion on `X`. Returns the largest discrepancy over
/// grid times.
///
/// The conversion of `∫ h(r, Z_r) dX̃` produces, besides `½ ∫ Dh ∘ ∂_X Z d[𝐗]`,
/// the term `½ ∫ ∂_X h(r, Z_r) d[𝐗]`; it is removed as well since `g` is
/// defined by integration against `X`.
pub fn stratonovich_conversion_discrepancy(family: &FieldFamily, g: &dyn GSource, z: &ControlledPath, p: &RoughPath) -> Result<f64> {
    let full = wentzell_residual(family, g, z, p)?;
    let a = along(family, g, z, p)?;
    let geo = p.geometrize();
    let z_geo = ControlledPath::new(geo.grid().clone(), z.values().clone(), z.gubinelli().clone())?;
    let s1 = rough_integral(&a.h_path, &geo)?;
    let s2 = controlled_integral(&a.dg_path, &z_geo, &geo)?;
    let n = z.len();
    let (w, d) = (family.w, family.d);
    let mut c_h = Array3::zeros((n, w, d * d));
    let mut c_g = Array3::zeros((n, w, d * d));
    for i in 0..n {
        c_h.slice_mut(s![i, .., ..]).assign(&psi_dot_phi(a.h_path.derivative(i), Array2::eye(d).view()));
        c_g.slice_mut(s![i, .., ..]).assign(&psi_dot_phi(a.dg_path.derivative(i), z.derivative(i)));
    }
    let corr_h = young_bracket_integral(&c_h, p)?;
    let corr_g = young_bracket_integral(&c_g, p)?;
    let dxh_term = young_bracket_integral(&a.dxh_map, p)?;
    let mut worst = 0.0_f64;
    for i in 0..n {
        let half_h = &corr_h.row(i) * 0.5;
        let half_g = &corr_g.row(i) * 0.5;
        // Itô–Stratonovich conversion of each integral.
        let strato = Array1::from(full.terms.initial.clone()) + &s1.path.value(i) + &s2.path.value(i);
        let ito = Array1::from(full.terms.initial.clone())
            + &ArrayView1::from(&full.terms.rough[i])
            + &ArrayView1::from(&full.terms.controlled[i])
            + &half_h
            + &half_g;
        // The conversion corrections regrouped into the bracket terms.
        let bracket = &ArrayView1::from(&full.terms.bracket_cross[i])
            + &ArrayView1::from(&full.terms.bracket_second[i])
            + &(&dxh_term.row(i) * 0.5);
        worst = worst
            .max(norm((&strato - &ito).view()))
            .max(norm((&(&half_h + &half_g) - &bracket).view()));
    }
    Ok(worst)
}

/// `Z = Z_0 + ∫ a dX + ∫ b d[𝐗]` with `∂_X Z = a`.
///
/// `a` is a controlled path in `L(V, U)` (flattened `m·d`), `b` a path of
/// maps `L(V ⊗ V, U)` stored `(N+1) × m × d²`.
pub fn keller_zhang_path(z0: ArrayView1<f64>, a: &ControlledPath, b: &Array3<f64>, p: &RoughPath) -> Result<ControlledPath> {
    let m = z0.len();
    let d = p.dim();
    if a.dim() != m * d {
        return arg(format!("a has {} entries, expected {}", a.dim(), m * d));
    }
    if b.dim().1 != m {
        return arg(format!("b maps into R^{}, expected R^{m}", b.dim().1));
    }
    let drift = rough_integral(a, p)?;
    let young = young_bracket_integral(b, p)?;
    let n = a.len();
    let values = Array2::from_shape_fn((n, m), |(i, k)| z0[k] + drift.path.values()[[i, k]] + young[[i, k]]);
    ControlledPath::new(p.grid().clone(), values, drift.path.gubinelli().clone())
}

/// Residual of the expansion after the substitution `dZ = a dX + b d[𝐗]`:
/// `g(t, Z_t) = g(0, Z_0) + ∫ (h + Dg a) dX + ∫ (Dg b + Dh ∘ a + ½ D²g a ⊗ a) d[𝐗]`.
///
/// The dX-integrand is controlled with Gubinelli derivative
/// `∂_X h + Dh a + (∂_X Dg + D²g a)·a + Dg ∂_X a`.
pub fn keller_zhang_residual(
    family: &FieldFamily,
    g: &dyn GSource,
    z0: ArrayView1<f64>,
    a: &ControlledPath,
    b: &Array3<f64>,
    p: &RoughPath,
) -> Result<WentzellReport> {
    let z = keller_zhang_path(z0, a, b, p)?;
    let al = along(family, g, &z, p)?;
    let (w, m, d) = (family.w, family.m, family.d);
    let n = z.len();
    let mut vals = Array2::zeros((n, w * d));
    let mut gub = Array3::zeros((n, w * d, d));
    let mut young = Array3::zeros((n, w, d * d));
    for i in 0..n {
        let dg = al.dg_path.value(i).to_owned().into_shape_with_order((w, m)).expect("w·m entries");
        let ai = a.value(i).to_owned().into_shape_with_order((m, d)).expect("m·d entries");
        let dga = dg.dot(&ai);
        let hv = &al.h_path.value(i) + &Array1::from_iter(dga.iter().copied());
        vals.row_mut(i).assign(&hv);
        let dgg = al.dg_path.derivative(i);
        let da = a.derivative(i);
        for r in 0..w {
            for l in 0..d {
                for k in 0..d {
                    let mut acc = al.h_path.derivative(i)[[r * d + l, k]];
                    for j in 0..m {
                        acc += dgg[[r * m + j, k]] * ai[[j, l]] + dg[[r, j]] * da[[j * d + l, k]];
                    }
                    gub[[i, r * d + l, k]] = acc;
                }
            }
        }
        let bi = b.slice(s![i, .., ..]);
        let mut c = dg.dot(&bi);
        c += &al.cross.slice(s![i, .., ..]);
        c += &(&al.second.slice(s![i, .., ..]) * 0.5);
        young.slice_mut(s![i, .., ..]).assign(&c);
    }
    let t1 = rough_integral(&ControlledPath::new(p.grid().clone(), vals, gub)?, p)?;
    let t3 = young_bracket_integral(&young, p)?;
    let zeros = vec![vec![0.0; w]; n];
    let terms = WentzellTerms {
        initial: al.lhs.row(0).to_vec(),
        rough: rows(t1.path.values()),
        controlled: zeros.clone(),
        bracket_cross: rows(&t3),
        bracket_second: zeros,
    };
    Ok(report(&al, terms, p, g.finite_difference_d2g()))
}

/// One sweep of the appendix identities over dyadic intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixSweep {
    pub lengths: Vec<f64>,
    /// Mean second-order expansion defect per length.
    pub a1: Vec<f64>,
    /// Mean first-order time-shift defect per length.
    pub a2: Vec<f64>,
    /// Largest transpose-identity defect per length.
    pub com: Vec<f64>,
    pub a1_slope: f64,
    pub a2_slope: f64,
    /// Scale for the transpose identity, `1 + ‖X‖²_∞` times the largest
    /// magnitude of the paired terms.
    pub com_scale: f64,
}

/// Sweep over intervals `[t_s, t_t]` of lengths `2^{-k} T`, `k ∈ levels`:
///
/// * second order: `½ D²g(t, Z_s) Z_{st} ⊗ Z_{st}` against
///   `D²g(s, Z_s)(∂Z ⊗ ∂Z) 𝕏_{st} + ½ D²g(s, Z_s)(∂Z ⊗ ∂Z)[𝐗]_{st}`;
/// * time shift: `Dg(t, Z_s) Z_{st}` against
///   `Dg(s, Z_s) Z_{st} + (Dh(s, Z_s) ∘ ∂Z_s) X_{st} ⊗ X_{st}`;
/// * transpose: `(∂_X Dg · ∂Z) 𝕏_{st}` against `(Dh ∘ ∂Z) 𝕏*_{st}`, with
///   `∂_X Dg` taken from the Gubinelli field of the rough integrals
///   `∫ Dh(r, Z_s) e_j dX_r`.
///
/// For each length the two expansion defects are averaged over the aligned
/// intervals and the transpose defect is maximized.
pub fn appendix_identity_checks(
    family: &FieldFamily,
    g: &dyn GSource,
    z: &ControlledPath,
    p: &RoughPath,
    levels: std::ops::RangeInclusive<u32>,
) -> Result<AppendixSweep> {
    let al = along(family, g, z, p)?;
    let (w, m, d) = (family.w, family.m, family.d);
    let n = p.steps();
    let mut lengths = Vec::new();
    let (mut a1, mut a2, mut com) = (Vec::new(), Vec::new(), Vec::new());
    let mut com_scale = 0.0_f64;
    for k in levels {
        let pieces = 1usize << k;
        if n % pieces != 0 {
            return arg(format!("{n} steps do not split into {pieces} dyadic intervals"));
        }
        let width = n / pieces;
        let results: Vec<(f64, f64, f64, f64)> = (0..pieces)
            .into_par_iter()
            .map(|q| -> Result<(f64, f64, f64, f64)> {
                let (i, j) = (q * width, (q + 1) * width);
                let zs = z.value(i);
                let dz = z.derivative(i);
                let zst = z.increment(i, j);
                let x = p.increment(i, j);
                let xx = p.xx(i, j);
                let br = p.bracket_unchecked(i, j);

                let d2_t = g.d2g(j, zs)?;
                let d2_s = &al.d2g[i];
                let mut lhs1 = Array1::zeros(w);
                for a in 0..w {
                    for p_ in 0..m {
                        for q_ in 0..m {
                            lhs1[a] += 0.5 * d2_t[[a, p_, q_]] * zst[p_] * zst[q_];
                        }
                    }
                }
                let qf = quadratic_form(d2_s.view(), dz);
                let rhs1 = contract(qf.view(), &xx) + contract(qf.view(), &br) * 0.5;

                let dg_t = g.dg(j, zs)?;
                let dg_s = al.dg_path.value(i).to_owned().into_shape_with_order((w, m)).expect("w·m");
                let cr = al.cross.slice(s![i, .., ..]);
                let lhs2 = dg_t.dot(&zst);
                let rhs2 = dg_s.dot(&zst) + contract(cr, &Tensor2::outer(x.view(), x.view()));

                let mut dxdg = Array2::zeros((w * m, d));
                for jj in 0..m {
                    let path = direction_path(family, zs, jj, p)?;
                    let run = rough_integral(&path, p)?;
                    let gub = run.path.derivative(i);
                    for a in 0..w {
                        for kk in 0..d {
                            dxdg[[a * m + jj, kk]] = gub[[a, kk]];
                        }
                    }
                }
                let lhs3 = contract(psi_dot_phi(dxdg.view(), dz).view(), &xx);
                let rhs3 = contract(circ(al.dh[i].view(), dz).view(), &xx.transpose());
                let mag = norm(lhs3.view()).max(norm(rhs3.view()));
                Ok((
                    norm((&lhs1 - &rhs1).view()),
                    norm((&lhs2 - &rhs2).view()),
                    norm((&lhs3 - &rhs3).view()),
                    mag,
                ))
            })
            .collect::<Result<_>>()?;
        lengths.push(p.grid().t(width));
        a1.push(results.iter().map(|r| r.0).sum::<f64>() / pieces as f64);
        a2.push(results.iter().map(|r| r.1).sum::<f64>() / pieces as f64);
        com.push(results.iter().map(|r| r.2).fold(0.0, f64::max));
        com_scale = com_scale.max(results.iter().map(|r| r.3).fold(0.0, f64::max));
    }
    Ok(AppendixSweep {
        a1_slope: log_log_slope(&lengths, &a1),
        a2_slope: log_log_slope(&lengths, &a2),
        lengths,
        a1,
        a2,
        com,
        com_scale: p.scale() * (1.0 + com_scale),
    })
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::grid::TimeGrid;
    use crate::lifts::{brownian_ito, Curve};
    use crate::scenarios;

    fn sawtooth(n: usize) -> Arc<RoughPath> {
        Arc::new(Curve::Sawtooth.lift(TimeGrid::uniform(n, 1.0).unwrap(), 0.5).unwrap())
    }

    /// `h(t, x) = c` for a constant `c`, so `g(t, x) = g₀(x) + c X_{0t}`.
    fn constant_family(c: f64) -> FieldFamily {
        FieldFamily::new(
            (1, 1, 1),
            move |_, _| array![c],
            |_, _| Array2::zeros((1, 1)),
            |_, _| Array2::zeros((1, 1)),
        )
        .with_dxdh(|_, _| Array3::zeros((1, 1, 1)))
    }

    #[test]
    fn integrated_g_of_constant_family_is_a_shift() {
        let p = Arc::new(brownian_ito(3, 1, 64, 1.0, 1, 0.45).unwrap());
        let g = IntegratedG::new(constant_family(0.3), InitialField::squared_norm(), p.clone()).unwrap();
        let x = array![0.7];
        for i in [0, 10, 64] {
            let oracle = 0.49 + 0.3 * (p.values()[[i, 0]] - p.values()[[0, 0]]);
            assert!((g.value(i, x.view())[0] - oracle).abs() < 1e-14);
            assert!((g.dg(i, x.view()).unwrap()[[0, 0]] - 1.4).abs() < 1e-14);
            assert!((g.d2g(i, x.view()).unwrap()[[0, 0, 0]] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn build_g_matches_pointwise_evaluation() {
        let p = sawtooth(128);
        let sc = scenarios::separable(&p).unwrap();
        let points = vec![array![-0.4], array![0.9]];
        let field = build_g(&sc.family, &sc.init, &p, &points, None).unwrap();
        assert!(field.d2g_finite_difference);
        for (q, x) in points.iter().enumerate() {
            for i in [0, 50, 128] {
                let direct = sc.g.value(i, x.view());
                assert!((field.values[[i, q, 0]] - direct[0]).abs() < 1e-13);
                let dg = sc.g.dg(i, x.view()).unwrap();
                assert!((field.dg[[i, q, 0, 0]] - dg[[0, 0]]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn analytic_dg_is_consistent_with_dh() {
        let p = Arc::new(brownian_ito(9, 2, 128, 1.0, 8, 0.45).unwrap());
        let sc = scenarios::h_linear(&p).unwrap();
        let r = dg_consistency(&sc.family, sc.g.as_ref(), &p, array![0.3, -1.2].view(), array![1.0, 0.5].view()).unwrap();
        assert!(r < 1e-13, "{r}");
    }

    #[test]
    fn zero_field_with_quadratic_start_telescopes() {
        let p = sawtooth(256);
        let sc = scenarios::h_zero_quadratic(&p).unwrap();
        let r = wentzell_residual(&sc.family, sc.g.as_ref(), &sc.z, &p).unwrap();
        assert!(r.residual_max < 1e-12 * p.scale());
        for i in [0, 100, 256] {
            let x = p.values()[[i, 0]];
            assert!((r.lhs[i][0] - x * x).abs() < 1e-14);
        }
    }

    #[test]
    fn stratonovich_form_rejects_ito_drivers() {
        let p = Arc::new(brownian_ito(1, 1, 32, 1.0, 1, 0.45).unwrap());
        let sc = scenarios::separable(&p).unwrap();
        let e = wentzell_stratonovich(&sc.family, sc.g.as_ref(), &sc.z, &p).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
    }

    #[test]
    fn family_dimension_must_match_driver() {
        let p = Arc::new(Curve::Circle.lift(TimeGrid::uniform(16, 1.0).unwrap(), 0.5).unwrap());
        assert!(IntegratedG::new(constant_family(1.0), InitialField::zero(1, 1), p).is_err());
    }

    #[test]
    fn keller_zhang_path_adds_drift_against_the_bracket() {
        // a ≡ 1, b ≡ c on an Itô driver: Z_t = X_t + c t.
        let p = brownian_ito(4, 1, 128, 1.0, 1, 0.45).unwrap();
        let (a, b) = scenarios::kz_inputs(&p, 0.25);
        let z = keller_zhang_path(p.value(0), &a, &b, &p).unwrap();
        for i in [0, 17, 128] {
            let oracle = p.values()[[i, 0]] + 0.25 * p.grid().t(i);
            assert!((z.values()[[i, 0]] - oracle).abs() < 1e-13);
            assert_eq!(z.derivative(i)[[0, 0]], 1.0);
        }
    }

    #[test]
    fn missing_dxdh_is_a_configuration_error() {
        let family = FieldFamily::new(
            (1, 1, 1),
            |_, _| array![1.0],
            |_, _| Array2::zeros((1, 1)),
            |_, _| Array2::zeros((1, 1)),
        );
        assert!(matches!(family.dxdh(0, array![0.0].view()), Err(Error::Config(_))));
    }
}
