//! Built-in field families and trajectories for the Itô–Wentzell checks.
//!
//! Each scenario is built against a specific driver because time-dependent
//! fields are functions of the driver's samples.

use std::sync::Arc;

use ndarray::{array, Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::controlled::ControlledPath;
use crate::error::{arg, Result};
use crate::rough_path::RoughPath;
use crate::wentzell::{AnalyticG, FieldFamily, GSource, InitialField, IntegratedG};

/// Everything a Wentzell residual needs.
pub struct Scenario {
    pub family: FieldFamily,
    pub init: InitialField,
    pub g: Box<dyn GSource + Send>,
    pub z: ControlledPath,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario").field("family", &self.family).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    /// `h ≡ 0`, `g₀(x) = |x|²`, `Z = X`.
    HZeroQuadratic,
    /// `h(t, x) = x` (as a map `v ↦ x·v`), `g₀ = 0`, `Z = X`.
    HLinear,
    /// `h(t, x) = sin(x) cos(X_t)`, `g₀(x) = x²/2`, `Z = X` (one dimension).
    Separable,
    /// Keller–Zhang drift: `a ≡ 1`, `b ≡ 0.5`, `h(t, x) = sin(x) cos(X_t)`.
    KzDrift,
    /// Two dimensions: `h(t, x) v = Σ_l sin(c_l·x) cos(X^l_t) v_l`,
    /// `g₀(x) = |x|²/2`, `Z = X`.
    Planar,
}

impl ScenarioName {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "h_zero_quadratic" => Ok(Self::HZeroQuadratic),
            "h_linear" => Ok(Self::HLinear),
            "separable" => Ok(Self::Separable),
            "kz_drift" => Ok(Self::KzDrift),
            "planar" => Ok(Self::Planar),
            other => arg(format!("unknown scenario {other:?}")),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HZeroQuadratic => "h_zero_quadratic",
            Self::HLinear => "h_linear",
            Self::Separable => "separable",
            Self::KzDrift => "kz_drift",
            Self::Planar => "planar",
        }
    }
}

/// `h ≡ 0`, `g₀(x) = |x|²` on `U = V`, trajectory `Z = X`.
pub fn h_zero_quadratic(p: &Arc<RoughPath>) -> Result<Scenario> {
    let d = p.dim();
    let family = FieldFamily::zero(1, d, d);
    let init = InitialField::squared_norm();
    let g = IntegratedG::new(family.clone(), init.clone(), p.clone())?;
    Ok(Scenario { family, init, g: Box::new(g), z: ControlledPath::canonical(p) })
}

/// `h(t, x) v = x·v` on `U = V`, `g₀ = 0`, so `g(t, x) = x·X_{0t}`; `Z = X`.
pub fn h_linear(p: &Arc<RoughPath>) -> Result<Scenario> {
    let d = p.dim();
    let family = FieldFamily::new(
        (1, d, d),
        |_, x| x.to_owned(),
        move |_, _| Array2::zeros((d, d)),
        move |_, _| Array2::eye(d),
    )
    .with_dxdh(move |_, _| Array3::zeros((d, d, d)));
    let init = InitialField::zero(1, d);
    let values = p.values().clone();
    let values2 = values.clone();
    let g = AnalyticG::new(
        move |i, x| {
            let inc = &values.row(i) - &values.row(0);
            Array1::from_elem(1, x.dot(&inc))
        },
        move |i, _| (&values2.row(i) - &values2.row(0)).insert_axis(ndarray::Axis(0)),
        move |_, _| Array3::zeros((1, d, d)),
    );
    Ok(Scenario { family, init, g: Box::new(g), z: ControlledPath::canonical(p) })
}

/// One-dimensional `h(t, x) = sin(x) cos(X_t)` with `g₀(x) = x²/2`;
/// `g` by rough integration. `Z` defaults to `X`.
pub fn separable(p: &Arc<RoughPath>) -> Result<Scenario> {
    if p.dim() != 1 {
        return arg("the separable scenario needs a one-dimensional driver");
    }
    let family = separable_family(p);
    let init = InitialField::new(
        |x| array![0.5 * x[0] * x[0]],
        |x| array![[x[0]]],
        |_| Array3::from_elem((1, 1, 1), 1.0),
    );
    let g = IntegratedG::new(family.clone(), init.clone(), p.clone())?;
    Ok(Scenario { family, init, g: Box::new(g), z: ControlledPath::canonical(p) })
}

/// `h(t, x) = sin(x) cos(X_t)` for a one-dimensional driver.
pub fn separable_family(p: &Arc<RoughPath>) -> FieldFamily {
    let xs: Arc<Vec<f64>> = Arc::new(p.values().column(0).to_vec());
    let (a, b, c, e) = (xs.clone(), xs.clone(), xs.clone(), xs);
    FieldFamily::new(
        (1, 1, 1),
        move |i, x| array![x[0].sin() * a[i].cos()],
        move |i, x| array![[-x[0].sin() * b[i].sin()]],
        move |i, x| array![[x[0].cos() * c[i].cos()]],
    )
    .with_dxdh(move |i, x| Array3::from_elem((1, 1, 1), -x[0].cos() * e[i].sin()))
}

const PLANAR_C: [[f64; 2]; 2] = [[1.0, 0.5], [-0.7, 1.0]];

/// `h(t, x) v = Σ_l sin(c_l·x) cos(X^l_t) v_l` with `c_0 = (1, 0.5)`,
/// `c_1 = (−0.7, 1)`, `g₀(x) = |x|²/2`; `g` by rough integration, `Z = X`.
pub fn planar(p: &Arc<RoughPath>) -> Result<Scenario> {
    if p.dim() != 2 {
        return arg("the planar scenario needs a two-dimensional driver");
    }
    let xs: Arc<Array2<f64>> = Arc::new(p.values().clone());
    let dot = |l: usize, x: ndarray::ArrayView1<f64>| PLANAR_C[l][0] * x[0] + PLANAR_C[l][1] * x[1];
    let (a, b, c, e) = (xs.clone(), xs.clone(), xs.clone(), xs);
    let family = FieldFamily::new(
        (1, 2, 2),
        move |i, x| Array1::from_shape_fn(2, |l| dot(l, x).sin() * a[[i, l]].cos()),
        move |i, x| Array2::from_shape_fn((2, 2), |(l, k)| if l == k { -dot(l, x).sin() * b[[i, l]].sin() } else { 0.0 }),
        move |i, x| Array2::from_shape_fn((2, 2), |(l, j)| dot(l, x).cos() * PLANAR_C[l][j] * c[[i, l]].cos()),
    )
    .with_dxdh(move |i, x| {
        Array3::from_shape_fn((2, 2, 2), |(l, j, k)| {
            if l == k {
                -dot(l, x).cos() * PLANAR_C[l][j] * e[[i, l]].sin()
            } else {
                0.0
            }
        })
    });
    let init = InitialField::new(
        |x| array![0.5 * (x[0] * x[0] + x[1] * x[1])],
        |x| array![[x[0], x[1]]],
        |_| Array3::from_shape_fn((1, 2, 2), |(_, p, q)| if p == q { 1.0 } else { 0.0 }),
    );
    let g = IntegratedG::new(family.clone(), init.clone(), p.clone())?;
    Ok(Scenario { family, init, g: Box::new(g), z: ControlledPath::canonical(p) })
}

/// Keller–Zhang inputs: `a ≡ 1` with zero derivative and `b ≡ c`.
pub fn kz_inputs(p: &RoughPath, c: f64) -> (ControlledPath, Array3<f64>) {
    let n = p.grid().len();
    let a = ControlledPath::constant(p.grid().clone(), array![1.0].view(), 1);
    (a, Array3::from_elem((n, 1, 1), c))
}

pub fn build(name: ScenarioName, p: &Arc<RoughPath>) -> Result<Scenario> {
    match name {
        ScenarioName::HZeroQuadratic => h_zero_quadratic(p),
        ScenarioName::HLinear => h_linear(p),
        ScenarioName::Separable | ScenarioName::KzDrift => separable(p),
        ScenarioName::Planar => planar(p),
    }
}
