//! The `roughw` command line.
//!
//! Every run is described by a [`RunConfig`]: flags override the values of
//! an optional `--config` file, the effective configuration is hashed, and
//! the hash and seed are logged to stderr so a run can be replayed.
//!
//! Exit codes: 0 on success, 2 when a verification fails, 1 for usage,
//! configuration and input errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characteristics::{pde_residual_ladder, solve_semilinear, InitialDatum, SemilinearSpec};
use crate::controlled::{ControlledPath, ControlledPathFile};
use crate::convergence::ConvergenceReport;
use crate::error::{Error, Result};
use crate::integrate::{controlled_integral, ito_strato_residual_path, local_defect, local_defect_table, rough_integral};
use crate::io::{read_driver, write_csv};
use crate::lifts::LiftSpec;
use crate::rde::{flow_composition_ladder, solve_rde, BracketCoefficient, VectorField};
use crate::rough_path::{chen_sweep, RoughPath, ALPHA_MAX, ALPHA_MIN};
use crate::scenarios::{self, ScenarioName};
use crate::wentzell::{keller_zhang_residual, wentzell_residual, WentzellReport};
use crate::young_bracket_integral;

#[derive(Debug, Parser)]
#[command(name = "roughw", version, about = "Rough paths, rough integrals and Itô–Wentzell checks")]
pub struct Cli {
    /// Seed of the random lifts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Hölder exponent in (1/3, 1/2].
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a rough path and write it as JSON.
    Lift(LiftArgs),
    /// Check Chen's relation on random triples.
    VerifyChen {
        #[command(flatten)]
        driver: DriverArgs,
        /// Number of sampled triples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Integrate a controlled path against the driver; CSV `t,I1,...`.
    Integrate {
        #[command(flatten)]
        driver: DriverArgs,
        /// canonical, square or file.
        #[arg(long)]
        integrand: Option<String>,
        /// Controlled-path JSON for `--integrand file`.
        #[arg(long)]
        integrand_file: Option<PathBuf>,
        /// rough, controlled or young.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Itô–Wentzell residuals over a mesh ladder; JSON array of reports.
    VerifyWentzell {
        #[command(flatten)]
        driver: DriverArgs,
        /// h_zero_quadratic, h_linear, separable, kz_drift or planar.
        #[arg(long)]
        scenario: Option<String>,
        /// Number of dyadic mesh levels, 1 to 6.
        #[arg(long)]
        mesh_ladder: Option<usize>,
    },
    /// Solve dY = f(Y) dX; CSV `t,y1,...`.
    SolveRde {
        #[command(flatten)]
        driver: DriverArgs,
        /// zero, const:c or linear:λ.
        #[arg(long)]
        field: Option<String>,
        /// Comma-separated initial state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y0: Option<Vec<f64>>,
    },
    /// Solve a semilinear transport equation by characteristics; CSV `x,u`.
    SolveTransport {
        #[command(flatten)]
        driver: DriverArgs,
        /// translate, linear, nonlinear or custom-json.
        #[arg(long)]
        scenario: Option<String>,
        /// Evaluation time; must be a grid time. Defaults to the horizon.
        #[arg(long)]
        t: Option<f64>,
        /// Evaluation grid `lo:hi:n`.
        #[arg(long, allow_hyphen_values = true)]
        xgrid: Option<String>,
        /// Equation file for `--scenario custom-json`.
        #[arg(long)]
        transport_spec: Option<PathBuf>,
    },
    /// Fit a convergence slope; JSON convergence report.
    Convergence {
        #[command(flatten)]
        driver: DriverArgs,
        /// conversion, defect, wentzell, flow or transport.
        #[arg(long)]
        study: Option<String>,
        /// Scenario for the wentzell and transport studies.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        mesh_ladder: Option<usize>,
        /// Evaluation point for the flow and transport studies.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
    },
}

#[derive(Debug, Args, Default)]
pub struct LiftArgs {
    /// brownian, brownian-ito, pure-area, smooth or pwl-<curve>.
    #[arg(long, visible_alias = "lift")]
    pub kind: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Horizon T.
    #[arg(long = "t", visible_alias = "horizon")]
    pub horizon: Option<f64>,
    /// Fine steps per coarse step for Brownian areas.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Replace the second level by its weak geometric version.
    #[arg(long)]
    pub geometrize: bool,
}

#[derive(Debug, Args, Default)]
pub struct DriverArgs {
    /// Rough-path JSON, or CSV samples `t,x1,...` lifted piecewise linearly.
    #[arg(long)]
    pub driver: Option<PathBuf>,
    /// Lift to build when no driver file is given.
    #[arg(long)]
    pub lift: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub geometrize: bool,
}

/// Effective settings of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometrize: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrand_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_ladder: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xgrid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_spec: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    /// Fields set in `top` replace those of `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay!(self, top; command, seed, alpha, out, driver, lift, dim, n, horizon, subsample, geometrize,
            samples, integrand, integrand_file, kind, scenario, mesh_ladder, field, y0, t, xgrid,
            transport_spec, study, x);
        self
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn alpha(&self) -> Result<f64> {
        let a = self.alpha.unwrap_or(DEFAULT_ALPHA);
        if !(a > ALPHA_MIN && a <= ALPHA_MAX) {
            return Err(Error::Config(format!("alpha must lie in (1/3, 1/2], got {a}")));
        }
        Ok(a)
    }

    pub fn mesh_ladder(&self, default: usize) -> Result<usize> {
        let k = self.mesh_ladder.unwrap_or(default);
        if !(1..=6).contains(&k) {
            return Err(Error::Config(format!("mesh ladder depth must lie in [1, 6], got {k}")));
        }
        Ok(k)
    }

    fn flag(&self, set: bool) -> Option<bool> {
        let _ = self;
        set.then_some(true)
    }

    fn with_driver(mut self, d: DriverArgs) -> Self {
        self.driver = d.driver;
        self.lift = d.lift;
        self.dim = d.dim;
        self.n = d.n;
        self.horizon = d.horizon;
        self.subsample = d.subsample;
        self.geometrize = self.flag(d.geometrize);
        self
    }
}

const DEFAULT_ALPHA: f64 = 0.45;
const DEFAULT_N: usize = 256;

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lift(_) => "lift",
            Command::VerifyChen { .. } => "verify-chen",
            Command::Integrate { .. } => "integrate",
            Command::VerifyWentzell { .. } => "verify-wentzell",
            Command::SolveRde { .. } => "solve-rde",
            Command::SolveTransport { .. } => "solve-transport",
            Command::Convergence { .. } => "convergence",
        }
    }
}

impl Cli {
    /// Flags as a configuration (unset flags stay `None`).
    pub fn to_config(self) -> RunConfig {
        let mut c = RunConfig {
            command: Some(self.command.name().to_string()),
            seed: self.seed,
            alpha: self.alpha,
            out: self.out,
            ..RunConfig::default()
        };
        match self.command {
            Command::Lift(a) => {
                c.lift = a.kind;
                c.dim = a.dim;
                c.n = a.n;
                c.horizon = a.horizon;
                c.subsample = a.subsample;
                c.geometrize = c.flag(a.geometrize);
            }
            Command::VerifyChen { driver, samples } => {
                c = c.with_driver(driver);
                c.samples = samples;
            }
            Command::Integrate { driver, integrand, integrand_file, kind } => {
                c = c.with_driver(driver);
                c.integrand = integrand;
                c.integrand_file = integrand_file;
                c.kind = kind;
            }
            Command::VerifyWentzell { driver, scenario, mesh_ladder } => {
                c = c.with_driver(driver);
                c.scenario = scenario;
                c.mesh_ladder = mesh_ladder;
            }
            Command::SolveRde { driver, field, y0 } => {
                c = c.with_driver(driver);
                c.field = field;
                c.y0 = y0;
            }
            Command::SolveTransport { driver, scenario, t, xgrid, transport_spec } => {
                c = c.with_driver(driver);
                c.scenario = scenario;
                c.t = t;
                c.xgrid = xgrid;
                c.transport_spec = transport_spec;
            }
            Command::Convergence { driver, study, scenario, mesh_ladder, x } => {
                c = c.with_driver(driver);
                c.study = study;
                c.scenario = scenario;
                c.mesh_ladder = mesh_ladder;
                c.x = x;
            }
        }
        c
    }
}

/// What a run produced.
#[derive(Debug)]
pub struct Outcome {
    pub artifact: Vec<u8>,
    /// False when a verification failed.
    pub pass: bool,
    /// One-line human summary for stderr.
    pub summary: String,
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_csv(&mut out, &header, rows)?;
    Ok(out)
}

/// Build the driver named by the configuration.
pub fn build_driver(cfg: &RunConfig, default_lift: &str) -> Result<RoughPath> {
    let alpha = cfg.alpha()?;
    let p = match &cfg.driver {
        Some(path) => read_driver(path, alpha)?,
        None => {
            let name = cfg.lift.as_deref().unwrap_or(default_lift);
            let mut spec = LiftSpec::from_name(name, cfg.n.unwrap_or(DEFAULT_N))?;
            if name.starts_with("brownian") {
                spec.dim = cfg.dim.unwrap_or(1);
            } else if let Some(d) = cfg.dim {
                if d != spec.dim {
                    return Err(Error::Config(format!("lift {name} has dimension {}, not {d}", spec.dim)));
                }
            }
            if let Some(h) = cfg.horizon {
                spec.horizon = h;
            }
            if let Some(m) = cfg.subsample {
                spec.subsample = m;
            }
            spec.seed = cfg.seed();
            spec.alpha = alpha;
            spec.build()?
        }
    };
    Ok(if cfg.geometrize == Some(true) { p.geometrize() } else { p })
}

fn arc(p: RoughPath) -> Arc<RoughPath> {
    Arc::new(p)
}

/// Coarsenings of `p` by `2^{k−1}, …, 2, 1`, coarsest first.
fn ladder(p: &RoughPath, k: usize) -> Result<Vec<RoughPath>> {
    if p.steps() % (1 << (k - 1)) != 0 {
        return Err(Error::Config(format!("{} steps cannot be halved {} times", p.steps(), k - 1)));
    }
    (0..k).rev().map(|j| p.restrict(1 << j)).collect()
}

fn sine_integrand(p: &RoughPath) -> ControlledPath {
    let n = p.grid().len();
    let d = p.dim();
    let values = Array2::from_shape_fn((n, d), |(i, l)| p.values()[[i, l]].sin());
    let gub = Array3::from_shape_fn((n, d, d), |(i, l, k)| if l == k { p.values()[[i, l]].cos() } else { 0.0 });
    ControlledPath::new(p.grid().clone(), values, gub).expect("shapes match the driver")
}

fn integrand(cfg: &RunConfig, p: &RoughPath) -> Result<ControlledPath> {
    let n = p.grid().len();
    let d = p.dim();
    match cfg.integrand.as_deref().unwrap_or("canonical") {
        "canonical" => Ok(ControlledPath::canonical(p)),
        "square" => {
            let values = Array2::from_shape_fn((n, d), |(i, l)| p.values()[[i, l]].powi(2));
            let gub = Array3::from_shape_fn((n, d, d), |(i, l, k)| if l == k { 2.0 * p.values()[[i, l]] } else { 0.0 });
            ControlledPath::new(p.grid().clone(), values, gub)
        }
        "file" => {
            let path = cfg.integrand_file.as_ref().ok_or_else(|| Error::Config("--integrand file needs --integrand-file".into()))?;
            let file: ControlledPathFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            ControlledPath::from_file(&file, p)
        }
        other => Err(Error::Config(format!("unknown integrand {other:?}"))),
    }
}

fn run_integrate(cfg: &RunConfig) -> Result<Outcome> {
    let p = build_driver(cfg, "pwl-circle")?;
    let y = integrand(cfg, &p)?;
    let d = p.dim();
    let values: Array2<f64> = match cfg.kind.as_deref().unwrap_or("rough") {
        "rough" => rough_integral(&y, &p)?.path.values().clone(),
        "controlled" => controlled_integral(&y, &ControlledPath::canonical(&p), &p)?.path.values().clone(),
        "young" => {
            let w = y.dim();
            let c = Array3::from_shape_fn((p.grid().len(), w, d * d), |(i, a, kl)| {
                if kl / d == kl % d {
                    y.values()[[i, a]]
                } else {
                    0.0
                }
            });
            young_bracket_integral(&c, &p)?
        }
        other => return Err(Error::Config(format!("unknown integral kind {other:?}"))),
    };
    let mut header = vec!["t".to_string()];
    header.extend((1..=values.ncols()).map(|k| format!("value{k}")));
    let rows: Vec<Vec<f64>> = (0..values.nrows())
        .map(|i| std::iter::once(p.grid().t(i)).chain(values.row(i).iter().copied()).collect())
        .collect();
    let last = values.row(values.nrows() - 1).to_vec();
    Ok(Outcome { artifact: csv_bytes(header, rows)?, pass: true, summary: format!("terminal value {last:?}") })
}

fn wentzell_ladder(cfg: &RunConfig, default_k: usize) -> Result<(ScenarioName, Vec<WentzellReport>, Vec<f64>)> {
    let name = ScenarioName::parse(cfg.scenario.as_deref().unwrap_or("h_zero_quadratic"))
        .map_err(|e| Error::Config(e.to_string()))?;
    let default_lift = match name {
        ScenarioName::Planar => "brownian-ito",
        ScenarioName::HZeroQuadratic => "pwl-circle",
        _ => "brownian-ito",
    };
    let mut base = cfg.clone();
    if name == ScenarioName::Planar && base.driver.is_none() && base.dim.is_none() {
        base.dim = Some(2);
    }
    let p = build_driver(&base, default_lift)?;
    let k = cfg.mesh_ladder(default_k)?;
    let mut reports = Vec::new();
    let mut scales = Vec::new();
    for q in ladder(&p, k)? {
        let q = arc(q);
        let sc = scenarios::build(name, &q)?;
        let report = if name == ScenarioName::KzDrift {
            let (a, b) = scenarios::kz_inputs(&q, 0.5);
            keller_zhang_residual(&sc.family, sc.g.as_ref(), q.value(0), &a, &b, &q)?
        } else {
            wentzell_residual(&sc.family, sc.g.as_ref(), &sc.z, &q)?
        };
        scales.push(q.scale());
        reports.push(report);
    }
    Ok((name, reports, scales))
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Tolerance for scenarios whose residual telescopes to zero.
const EXACT_TOL: f64 = 1e-12;

fn wentzell_verdict(name: ScenarioName, reports: &[WentzellReport], scales: &[f64]) -> Result<(bool, String, Option<ConvergenceReport>)> {
    let residuals: Vec<f64> = reports.iter().map(|r| r.residual_max).collect();
    if name == ScenarioName::HZeroQuadratic {
        let pass = residuals.iter().zip(scales).all(|(r, s)| *r <= EXACT_TOL * s);
        return Ok((pass, format!("residuals {}", sci(&residuals)), None));
    }
    if reports.len() < 2 {
        return Ok((true, format!("residual {:.3e}", residuals[0]), None));
    }
    let alpha = reports[0].alpha;
    let conv = ConvergenceReport::new(reports.iter().map(|r| r.n).collect(), residuals.clone(), -(3.0 * alpha - 1.0), 0.3)?;
    let slope = match conv.slope {
        Some(s) => format!("{s:.3}"),
        None if conv.exact => "exact".into(),
        None => "undefined".into(),
    };
    Ok((conv.pass, format!("residuals {} slope {slope}", sci(&residuals)), Some(conv)))
}

fn parse_field(spec: &str, m: usize, d: usize) -> Result<VectorField> {
    let bad = || Error::Config(format!("unknown field {spec:?}; expected zero, const:c or linear:λ"));
    if spec == "zero" {
        return Ok(VectorField::zero(m, d));
    }
    let (kind, value) = spec.split_once(':').ok_or_else(bad)?;
    let c: f64 = value.parse().map_err(|_| bad())?;
    match kind {
        "const" => Ok(VectorField::constant(Array2::from_elem((m, d), c))),
        "linear" => Ok(VectorField::new(
            m,
            d,
            move |y| Array2::from_shape_fn((m, d), |(i, _)| c * y[i]),
            move |_| Array3::from_shape_fn((m, d, m), |(i, _, j)| if i == j { c } else { 0.0 }),
        )),
        _ => Err(bad()),
    }
}

fn parse_xgrid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("xgrid must look like lo:hi:n, got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(hi >= lo) || (n == 1 && hi != lo) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect())
}

/// Polynomial transport equation read by `--scenario custom-json`:
/// `P^j(x) = Σ_k p[j][k] x^k`, `Q^j(x, u) = q0[j] + q1[j] u`,
/// `φ(x) = Σ_k phi[k] x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportFile {
    pub p: Vec<Vec<f64>>,
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub q1: Option<Vec<f64>>,
    pub phi: Vec<f64>,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect()
}

impl TransportFile {
    pub fn to_spec(&self) -> Result<SemilinearSpec> {
        let n = self.p.len();
        let q0 = self.q0.clone().unwrap_or_else(|| vec![0.0; n]);
        let q1 = self.q1.clone().unwrap_or_else(|| vec![0.0; n]);
        let dq1 = q1.clone();
        if n == 0 || q0.len() != n || q1.len() != n {
            return Err(Error::Config("p, q0 and q1 need one entry per noise component".into()));
        }
        let p = self.p.clone();
        let dp: Vec<Vec<f64>> = p.iter().map(|c| poly_derivative(c)).collect();
        let phi = self.phi.clone();
        let dphi = poly_derivative(&phi);
        let datum = InitialDatum::new(move |x| poly(&phi, x[0]), move |x| Array1::from_elem(1, poly(&dphi, x[0])));
        Ok(SemilinearSpec::new(
            1,
            n,
            move |x| Array2::from_shape_fn((1, n), |(_, j)| poly(&p[j], x[0])),
            move |x| Array3::from_shape_fn((1, n, 1), |(_, j, _)| poly(&dp[j], x[0])),
            datum,
        )
        .with_source(
            move |_, u| Array1::from_shape_fn(n, |j| q0[j] + q1[j] * u),
            move |_, _| (Array2::zeros((n, 1)), Array1::from(dq1.clone())),
        ))
    }
}

fn transport_spec(cfg: &RunConfig, n: usize) -> Result<SemilinearSpec> {
    match cfg.scenario.as_deref().unwrap_or("translate") {
        "translate" => SemilinearSpec::translation(
            vec![0.7; n],
            vec![0.0; n],
            InitialDatum::new(|x| (2.0 * x[0]).sin(), |x| Array1::from_elem(1, 2.0 * (2.0 * x[0]).cos())),
        ),
        "linear" => Ok(SemilinearSpec::linear()),
        "nonlinear" => Ok(SemilinearSpec::nonlinear()),
        "custom-json" => {
            let path = cfg
                .transport_spec
                .as_ref()
                .ok_or_else(|| Error::Config("--scenario custom-json needs --transport-spec".into()))?;
            let file: TransportFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            file.to_spec()
        }
        other => Err(Error::Config(format!("unknown transport scenario {other:?}"))),
    }
}

fn grid_index(p: &RoughPath, t: f64) -> Result<usize> {
    let times = p.grid().times();
    let tol = 1e-9 * p.grid().horizon().abs().max(1.0);
    times
        .iter()
        .position(|s| (s - t).abs() <= tol)
        .ok_or_else(|| Error::Config(format!("t = {t} is not a time of the driver's grid")))
}

fn run_convergence(cfg: &RunConfig) -> Result<Outcome> {
    let study = cfg.study.as_deref().unwrap_or("conversion");
    let report = match study {
        "conversion" => {
            let p = build_driver(cfg, "brownian-ito")?;
            let k = cfg.mesh_ladder(4)?;
            let mut sizes = Vec::new();
            let mut residuals = Vec::new();
            for q in ladder(&p, k)? {
                sizes.push(q.steps());
                residuals.push(ito_strato_residual_path(&sine_integrand(&q), &q)?);
            }
            ConvergenceReport::new(sizes, residuals, -(3.0 * p.alpha() - 1.0), 0.3)?
        }
        "defect" => {
            let p = build_driver(cfg, "brownian-ito")?;
            let k = cfg.mesh_ladder(4)?;
            let finest = (p.steps() as f64).log2().round() as u32;
            if 1usize << finest != p.steps() || finest < 6 + k as u32 {
                return Err(Error::Config(format!(
                    "the defect study needs 2^j steps with j >= {} (64 fine steps per finest interval)",
                    6 + k
                )));
            }
            let top = finest - 6;
            let y = sine_integrand(&p);
            let table = local_defect_table(|i, j| local_defect(&y, &p, i, j), &p, (top + 1 - k as u32)..=top)?;
            ConvergenceReport::new(
                table.iter().map(|e| e.intervals).collect(),
                table.iter().map(|e| e.mean).collect(),
                -3.0 * p.alpha(),
                0.3,
            )?
        }
        "wentzell" => {
            let (name, reports, scales) = wentzell_ladder(cfg, 4)?;
            match wentzell_verdict(name, &reports, &scales)?.2 {
                Some(c) => c,
                None => ConvergenceReport::new(
                    reports.iter().map(|r| r.n).collect(),
                    reports.iter().map(|r| r.residual_max).collect(),
                    -(3.0 * reports[0].alpha - 1.0),
                    0.3,
                )?,
            }
        }
        "flow" => {
            let p = build_driver(cfg, "brownian-ito")?;
            let k = cfg.mesh_ladder(4)?;
            if k < 2 {
                return Err(Error::Config("a convergence study needs at least two mesh levels".into()));
            }
            flow_composition_ladder(
                &VectorField::linear(0.6),
                &VectorField::linear(-0.4),
                &p,
                cfg.x.unwrap_or(0.8),
                k,
                BracketCoefficient::Derived,
                0.3,
            )?
        }
        "transport" => {
            // The test curves are 1/2-Hölder; use that unless --alpha says otherwise.
            let mut c = cfg.clone();
            if c.alpha.is_none() && c.driver.is_none() && c.lift.as_deref().unwrap_or("pwl-sawtooth").starts_with("pwl-") {
                c.alpha = Some(0.5);
            }
            let p = build_driver(&c, "pwl-sawtooth")?;
            let k = cfg.mesh_ladder(4)?;
            if k < 2 {
                return Err(Error::Config("a convergence study needs at least two mesh levels".into()));
            }
            c.scenario = Some(cfg.scenario.clone().unwrap_or_else(|| "nonlinear".into()));
            let spec = transport_spec(&c, p.dim())?;
            pde_residual_ladder(&spec, &p, cfg.x.unwrap_or(0.3), k, 0.4)?
        }
        other => return Err(Error::Config(format!("unknown study {other:?}"))),
    };
    let summary = format!(
        "{study}: residuals {} slope {} target {} ± {}",
        sci(&report.residuals),
        report.slope.map_or_else(|| if report.exact { "exact".into() } else { "undefined".into() }, |s| format!("{s:.3}")),
        report.target_slope,
        report.tolerance
    );
    Ok(Outcome { artifact: json(&report)?, pass: report.pass, summary })
}

/// Execute one configured run.
pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command.as_deref() {
        Some("lift") => {
            let p = build_driver(cfg, "brownian")?;
            Ok(Outcome {
                artifact: json(&p.to_file())?,
                pass: true,
                summary: format!("{} steps in dimension {}", p.steps(), p.dim()),
            })
        }
        Some("verify-chen") => {
            let p = build_driver(cfg, "brownian")?;
            let sweep = chen_sweep(&p, cfg.samples.unwrap_or(10_000), cfg.seed());
            let summary = format!("max Chen residual {:.3e} (tolerance {:.3e})", sweep.max_residual, sweep.tolerance);
            Ok(Outcome { artifact: json(&sweep)?, pass: sweep.pass, summary })
        }
        Some("integrate") => run_integrate(cfg),
        Some("verify-wentzell") => {
            let (name, reports, scales) = wentzell_ladder(cfg, 3)?;
            let (pass, summary, _) = wentzell_verdict(name, &reports, &scales)?;
            Ok(Outcome { artifact: json(&reports)?, pass, summary: format!("{}: {summary}", name.as_str()) })
        }
        Some("solve-rde") => {
            let p = build_driver(cfg, "pwl-identity")?;
            let y0 = Array1::from(cfg.y0.clone().unwrap_or_else(|| vec![1.0]));
            if y0.is_empty() {
                return Err(Error::Config("initial state is empty".into()));
            }
            let f = parse_field(cfg.field.as_deref().unwrap_or("zero"), y0.len(), p.dim())?;
            let y = solve_rde(&f, y0.view(), &p)?;
            let mut header = vec!["t".to_string()];
            header.extend((1..=y.dim()).map(|k| format!("y{k}")));
            let rows = (0..y.len())
                .map(|i| std::iter::once(p.grid().t(i)).chain(y.value(i).iter().copied()).collect())
                .collect();
            Ok(Outcome {
                artifact: csv_bytes(header, rows)?,
                pass: true,
                summary: format!("terminal state {:?}", y.value(y.len() - 1).to_vec()),
            })
        }
        Some("solve-transport") => {
            let p = build_driver(cfg, "pwl-sawtooth")?;
            let spec = transport_spec(cfg, p.dim())?;
            let i = grid_index(&p, cfg.t.unwrap_or(p.grid().horizon()))?;
            let xs = parse_xgrid(cfg.xgrid.as_deref().unwrap_or("-1:1:21"))?;
            let sol = solve_semilinear(&spec, &p, i, &xs)?;
            let rows = sol.x.iter().zip(&sol.u).map(|(x, u)| vec![*x, *u]).collect();
            Ok(Outcome {
                artifact: csv_bytes(vec!["x".into(), "u".into()], rows)?,
                pass: true,
                summary: format!("t = {}, inversion residual {:.3e}", sol.t, sol.inversion_residual),
            })
        }
        Some("convergence") => run_convergence(cfg),
        Some(other) => Err(Error::Config(format!("unknown command {other:?}"))),
        None => Err(Error::Config("no command given".into())),
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn set_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ROUGHW_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("ROUGHW_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Config("ROUGHW_THREADS must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    set_threads()?;
    let config_path = cli.config.clone();
    let flags = cli.to_config();
    let cfg = match &config_path {
        Some(path) => {
            let file = load_config(path)?;
            if let (Some(a), Some(b)) = (&file.command, &flags.command) {
                if a != b {
                    return Err(Error::Config(format!("config file is for {a:?}, command line runs {b:?}")));
                }
            }
            file.overlay(flags)
        }
        None => flags,
    };
    let command = cfg.command.clone().unwrap_or_default();
    eprintln!("roughw {command}: config {} seed {}", cfg.hash(), cfg.seed());
    let outcome = run(&cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &outcome.artifact)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&outcome.artifact)?;
        }
    }
    eprintln!("roughw {command}: {} [{}]", outcome.summary, if outcome.pass { "pass" } else { "FAIL" });
    Ok(outcome.pass)
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e @ Error::Verification(_)) => {
            eprintln!("roughw: {e}");
            2
        }
        Err(e) => {
            eprintln!("roughw: {e}");
            1
        }
    }
}
