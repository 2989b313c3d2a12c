use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::grid::TimeGrid;
use crate::rough_path::{check_alpha, RoughPath};
use crate::tensor::norm;

/// A path `Y` in `R^m` with Gubinelli derivative `∂_X Y` in `R^{m×d}`, both
/// sampled on the driver's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    grid: TimeGrid,
    values: Array2<f64>,
    gubinelli: Array3<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ControlledNormReport {
    pub y0_abs: f64,
    pub dy0_abs: f64,
    pub dy_alpha: f64,
    pub remainder_2alpha: f64,
    pub total: f64,
}

impl ControlledPath {
    pub fn new(grid: TimeGrid, values: Array2<f64>, gubinelli: Array3<f64>) -> Result<Self> {
        let n = grid.len();
        let m = values.ncols();
        if values.nrows() != n {
            return arg(format!("{} values for a grid of {n} instants", values.nrows()));
        }
        let (gn, gm, _) = gubinelli.dim();
        if gn != n || gm != m {
            return arg(format!("gubinelli shape {:?} does not match values ({n}, {m})", gubinelli.dim()));
        }
        Ok(Self { grid, values, gubinelli })
    }

    /// `Y = X`, `∂_X Y = I`.
    pub fn canonical(p: &RoughPath) -> Self {
        let n = p.grid().len();
        let d = p.dim();
        let mut gubinelli = Array3::zeros((n, d, d));
        for i in 0..n {
            for k in 0..d {
                gubinelli[[i, k, k]] = 1.0;
            }
        }
        Self { grid: p.grid().clone(), values: p.values().clone(), gubinelli }
    }

    /// A path constant in time with zero derivative against a `d`-dimensional driver.
    pub fn constant(grid: TimeGrid, value: ArrayView1<f64>, d: usize) -> Self {
        let n = grid.len();
        let m = value.len();
        let values = Array2::from_shape_fn((n, m), |(_, k)| value[k]);
        Self { grid, values, gubinelli: Array3::zeros((n, m, d)) }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn driver_dim(&self) -> usize {
        self.gubinelli.dim().2
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn gubinelli(&self) -> &Array3<f64> {
        &self.gubinelli
    }

    pub fn value(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn derivative(&self, i: usize) -> ArrayView2<'_, f64> {
        self.gubinelli.slice(s![i, .., ..])
    }

    pub fn increment(&self, i: usize, j: usize) -> Array1<f64> {
        &self.values.row(j) - &self.values.row(i)
    }

    pub(crate) fn check_driver(&self, p: &RoughPath) -> Result<()> {
        if !self.grid.same_as(p.grid()) {
            return arg("controlled path and driver live on different grids");
        }
        if self.driver_dim() != p.dim() {
            return arg(format!(
                "derivative acts on R^{} but the driver is {}-dimensional",
                self.driver_dim(),
                p.dim()
            ));
        }
        Ok(())
    }

    fn remainder_unchecked(&self, p: &RoughPath, i: usize, j: usize) -> Array1<f64> {
        let x = p.increment(i, j);
        let dy = self.derivative(i);
        &self.increment(i, j) - &dy.dot(&x)
    }

    /// `R^Y_{t_i t_j} = Y_{ij} − ∂_X Y_{t_i} X_{ij}`.
    pub fn remainder(&self, p: &RoughPath, i: usize, j: usize) -> Result<Array1<f64>> {
        self.check_driver(p)?;
        self.grid.check_index(i)?;
        self.grid.check_index(j)?;
        Ok(self.remainder_unchecked(p, i, j))
    }

    /// `|Y_0| + |∂_X Y_0| + ‖∂_X Y‖_α + ‖R^Y‖_{2α}` with sups over all grid pairs.
    pub fn norm(&self, p: &RoughPath, alpha: f64) -> Result<ControlledNormReport> {
        check_alpha(alpha)?;
        self.check_driver(p)?;
        let n = self.grid.steps();
        let (dy_alpha, rem) = (0..n)
            .into_par_iter()
            .map(|i| {
                let (mut a, mut b) = (0.0_f64, 0.0_f64);
                for j in i + 1..=n {
                    let tau = self.grid.t(j) - self.grid.t(i);
                    let ddy = &self.derivative(j) - &self.derivative(i);
                    let f = ddy.iter().map(|v| v * v).sum::<f64>().sqrt();
                    a = a.max(f / tau.powf(alpha));
                    b = b.max(norm(self.remainder_unchecked(p, i, j).view()) / tau.powf(2.0 * alpha));
                }
                (a, b)
            })
            .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
        let y0_abs = norm(self.value(0));
        let dy0_abs = self.derivative(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(ControlledNormReport {
            y0_abs,
            dy0_abs,
            dy_alpha,
            remainder_2alpha: rem,
            total: y0_abs + dy0_abs + dy_alpha + rem,
        })
    }

    /// Largest `|R^Y_{t_i t_j}| / (t_j − t_i)^{2α}` over all pairs.
    pub fn remainder_norm(&self, p: &RoughPath, alpha: f64) -> Result<f64> {
        Ok(self.norm(p, alpha)?.remainder_2alpha)
    }

    /// Keep every `stride`-th instant.
    pub fn restrict(&self, stride: usize) -> Result<Self> {
        let grid = self.grid.restrict(stride)?;
        Ok(Self {
            grid,
            values: self.values.slice(s![..;stride, ..]).to_owned(),
            gubinelli: self.gubinelli.slice(s![..;stride, .., ..]).to_owned(),
        })
    }

    /// Sum of two controlled paths on the same grid.
    pub fn add(&self, other: &ControlledPath) -> Result<Self> {
        if !self.grid.same_as(&other.grid) || self.values.dim() != other.values.dim() || self.gubinelli.dim() != other.gubinelli.dim() {
            return arg("cannot add controlled paths of different shapes");
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: &self.values + &other.values,
            gubinelli: &self.gubinelli + &other.gubinelli,
        })
    }

    pub fn to_file(&self, driver: &str) -> ControlledPathFile {
        let (n, m, _) = self.gubinelli.dim();
        ControlledPathFile {
            driver: driver.to_string(),
            values: self.values.rows().into_iter().map(|r| r.to_vec()).collect(),
            gubinelli: (0..n)
                .map(|i| (0..m).map(|k| self.gubinelli.slice(s![i, k, ..]).to_vec()).collect())
                .collect(),
        }
    }

    pub fn from_file(file: &ControlledPathFile, p: &RoughPath) -> Result<Self> {
        let n = p.grid().len();
        let d = p.dim();
        let m = file.values.first().map_or(0, |r| r.len());
        if file.values.len() != n || file.gubinelli.len() != n {
            return arg("controlled path file does not match the driver's grid");
        }
        let mut values = Array2::zeros((n, m));
        let mut gubinelli = Array3::zeros((n, m, d));
        for i in 0..n {
            if file.values[i].len() != m || file.gubinelli[i].len() != m {
                return arg(format!("ragged controlled path entry at index {i}"));
            }
            for k in 0..m {
                values[[i, k]] = file.values[i][k];
                if file.gubinelli[i][k].len() != d {
                    return arg(format!("gubinelli row at index {i} has the wrong width"));
                }
                for l in 0..d {
                    gubinelli[[i, k, l]] = file.gubinelli[i][k][l];
                }
            }
        }
        Self::new(p.grid().clone(), values, gubinelli)
    }
}

/// Serialized controlled path; `driver` names the rough-path file it lives on.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ControlledPathFile {
    pub driver: String,
    pub values: Vec<Vec<f64>>,
    pub gubinelli: Vec<Vec<Vec<f64>>>,
}

type Eval1 = Box<dyn Fn(usize, ArrayView1<f64>) -> Array1<f64> + Send + Sync>;
type Eval2 = Box<dyn Fn(usize, ArrayView1<f64>) -> Array2<f64> + Send + Sync>;
type Eval3 = Box<dyn Fn(usize, ArrayView1<f64>) -> Array3<f64> + Send + Sync>;

/// Default relative step of the finite-difference fallback for `D²f`.
pub const FD_STEP: f64 = 1e-5;

/// A map `f(t, x)` from `R^m` to `R^w` evaluated at grid times, with its
/// space derivatives and, for time-dependent maps, its Gubinelli derivative
/// in `t`.
pub struct FieldFunction {
    in_dim: usize,
    out_dim: usize,
    f: Eval1,
    df: Option<Eval2>,
    d2f: Option<Eval3>,
    dxf: Option<Eval2>,
    time_dependent: bool,
    fd_step: f64,
}

impl std::fmt::Debug for FieldFunction {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("FieldFunction")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("has_df", &self.df.is_some())
            .field("has_d2f", &self.d2f.is_some())
            .field("has_dxf", &self.dxf.is_some())
            .field("time_dependent", &self.time_dependent)
            .finish()
    }
}

impl FieldFunction {
    /// A time-independent map `f(x)`.
    pub fn autonomous(
        in_dim: usize,
        out_dim: usize,
        f: impl Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            f: Box::new(move |_, x| f(x)),
            df: None,
            d2f: None,
            dxf: None,
            time_dependent: false,
            fd_step: FD_STEP,
        }
    }

    /// A map `f(t_i, x)` given by grid index. Its Gubinelli derivative in time
    /// must be supplied with [`FieldFunction::with_time_derivative`] before
    /// it can be composed with a controlled path.
    pub fn time_dependent(
        in_dim: usize,
        out_dim: usize,
        f: impl Fn(usize, ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            f: Box::new(f),
            df: None,
            d2f: None,
            dxf: None,
            time_dependent: true,
            fd_step: FD_STEP,
        }
    }

    /// `Df(t_i, x)` as an `out_dim × in_dim` matrix.
    pub fn with_derivative(mut self, df: impl Fn(usize, ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static) -> Self {
        self.df = Some(Box::new(df));
        self
    }

    /// `D²f(t_i, x)` as `out_dim × in_dim × in_dim`.
    pub fn with_second_derivative(
        mut self,
        d2f: impl Fn(usize, ArrayView1<f64>) -> Array3<f64> + Send + Sync + 'static,
    ) -> Self {
        self.d2f = Some(Box::new(d2f));
        self
    }

    /// `∂_X f(t_i, x)` as an `out_dim × d` matrix.
    pub fn with_time_derivative(
        mut self,
        dxf: impl Fn(usize, ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
    ) -> Self {
        self.dxf = Some(Box::new(dxf));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn eval(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        (self.f)(i, x)
    }

    pub fn derivative(&self, i: usize, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        match &self.df {
            Some(df) => Ok(df(i, x)),
            None => Err(Error::Config("field has no space derivative".into())),
        }
    }

    /// `D²f(t_i, x)` and whether it came from the finite-difference fallback.
    pub fn second_derivative(&self, i: usize, x: ArrayView1<f64>) -> Result<(Array3<f64>, bool)> {
        if let Some(d2f) = &self.d2f {
            return Ok((d2f(i, x), false));
        }
        let df = self.df.as_ref().ok_or_else(|| Error::Config("field has no space derivative".into()))?;
        let m = self.in_dim;
        let mut out = Array3::zeros((self.out_dim, m, m));
        for q in 0..m {
            let h = self.fd_step * (1.0 + x[q].abs());
            let mut xp = x.to_owned();
            let mut xm = x.to_owned();
            xp[q] += h;
            xm[q] -= h;
            let diff = (df(i, xp.view()) - df(i, xm.view())) / (2.0 * h);
            for w in 0..self.out_dim {
                for p in 0..m {
                    out[[w, p, q]] = diff[[w, p]];
                }
            }
        }
        Ok((out, true))
    }

    /// Largest `|D²f[w, p, q] − D²f[w, q, p]|` over the sample points.
    pub fn hessian_asymmetry(&self, i: usize, points: &[Array1<f64>]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for x in points {
            let (h, _) = self.second_derivative(i, x.view())?;
            let (w, m, _) = h.dim();
            for a in 0..w {
                for p in 0..m {
                    for q in 0..m {
                        worst = worst.max((h[[a, p, q]] - h[[a, q, p]]).abs());
                    }
                }
            }
        }
        Ok(worst)
    }

    pub fn time_derivative(&self, i: usize, x: ArrayView1<f64>, d: usize) -> Result<Array2<f64>> {
        match &self.dxf {
            Some(dxf) => Ok(dxf(i, x)),
            None if !self.time_dependent => Ok(Array2::zeros((self.out_dim, d))),
            None => Err(Error::Config("time-dependent field has no Gubinelli derivative".into())),
        }
    }
}

/// `η_t = f(t, Z_t)` with `∂_X η_t = ∂_X f(t, Z_t) + Df(t, Z_t) ∂_X Z_t`.
pub fn compose_chain_rule(f: &FieldFunction, z: &ControlledPath, p: &RoughPath) -> Result<ControlledPath> {
    z.check_driver(p)?;
    if z.dim() != f.in_dim {
        return arg(format!("field expects R^{} input, path is in R^{}", f.in_dim, z.dim()));
    }
    if f.df.is_none() {
        return Err(Error::Config("chain rule needs the space derivative Df".into()));
    }
    if f.time_dependent && f.dxf.is_none() {
        return Err(Error::Config("chain rule for a time-dependent field needs its Gubinelli derivative".into()));
    }
    let n = z.len();
    let d = p.dim();
    let w = f.out_dim;
    let rows: Vec<(Array1<f64>, Array2<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(Array1<f64>, Array2<f64>)> {
            let x = z.value(i);
            let v = f.eval(i, x);
            let mut dv = f.time_derivative(i, x, d)?;
            dv += &f.derivative(i, x)?.dot(&z.derivative(i));
            Ok((v, dv))
        })
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((n, w));
    let mut gubinelli = Array3::zeros((n, w, d));
    for (i, (v, dv)) in rows.into_iter().enumerate() {
        if v.len() != w || dv.dim() != (w, d) {
            return arg("field returned values of the wrong shape");
        }
        values.row_mut(i).assign(&v);
        gubinelli.slice_mut(s![i, .., ..]).assign(&dv);
    }
    ControlledPath::new(z.grid.clone(), values, gubinelli)
}
