use std::sync::Arc;

use ndarray::{array, Array1, Array2};

use roughw::characteristics::{structure_check, SemilinearSpec};
use roughw::lifts::{brownian_ito, Curve};
use roughw::rde::{flow_composition, flow_composition_ladder, BracketCoefficient, FLOW_FD_STEP};
use roughw::rough_path::chen_sweep;
use roughw::scenarios::{self, ScenarioName};
use roughw::wentzell::{keller_zhang_residual, stratonovich_conversion_discrepancy, wentzell_residual};
use roughw::{solve_flow, solve_rde, ConvergenceReport, RoughPath, TimeGrid, VectorField};

fn grid(n: usize) -> TimeGrid {
    TimeGrid::uniform(n, 1.0).unwrap()
}

fn ladder(p: &RoughPath, levels: usize) -> Vec<RoughPath> {
    (0..levels).rev().map(|k| p.restrict(1 << k).unwrap()).collect()
}

#[test]
fn corrupted_second_level_is_absorbed_into_a_valid_rough_path() {
    // The stored cumulative second level determines every increment, so any
    // finite edit produces another rough path satisfying Chen exactly; only
    // the cell tensors change.
    let p = brownian_ito(7, 2, 64, 1.0, 8, 0.45).unwrap();
    let mut file = p.to_file();
    file.cum2[30][0][1] += 0.25;
    let q = RoughPath::from_file(file).unwrap();
    assert!(chen_sweep(&q, 5000, 1).pass);
    let before = p.second_level(29, 30).unwrap().get(0, 1);
    let after = q.second_level(29, 30).unwrap().get(0, 1);
    assert!((after - before - 0.25).abs() < 1e-12);
    assert!((q.second_level(0, 64).unwrap().get(0, 1) - p.second_level(0, 64).unwrap().get(0, 1)).abs() < 1e-12);
}

#[test]
fn flow_composition_converges_at_least_at_the_generic_rate_on_brownian_drivers() {
    let (g, f) = (VectorField::linear(0.6), VectorField::linear(-0.4));
    for seed in [1u64, 42] {
        let p = brownian_ito(seed, 1, 1 << 11, 1.0, 1, 0.45).unwrap();
        let rep = flow_composition_ladder(&g, &f, &p, 0.8, 4, BracketCoefficient::Derived, 0.3).unwrap();
        let slope = rep.slope.unwrap();
        assert!(slope <= rep.target_slope + rep.tolerance, "seed {seed}: slope {slope}");
        assert!(rep.residuals.windows(2).all(|w| w[1] < w[0]), "{:?}", rep.residuals);
    }
}

#[test]
fn printed_bracket_coefficient_leaves_an_order_one_residual() {
    let (g, f) = (VectorField::linear(0.6), VectorField::linear(-0.4));
    let p = brownian_ito(42, 1, 1 << 10, 1.0, 1, 0.45).unwrap();
    let derived = flow_composition(&g, &f, &p, 0.8, FLOW_FD_STEP, BracketCoefficient::Derived).unwrap();
    let printed = flow_composition(&g, &f, &p, 0.8, FLOW_FD_STEP, BracketCoefficient::AsPrinted).unwrap();
    assert!(printed.residual > 0.05, "{}", printed.residual);
    assert!(derived.residual < 0.2 * printed.residual);
    // On a geometric driver the bracket terms vanish and both agree.
    let q = Curve::Sawtooth.lift(grid(1 << 10), 0.5).unwrap();
    let a = flow_composition(&g, &f, &q, 0.8, FLOW_FD_STEP, BracketCoefficient::Derived).unwrap();
    let b = flow_composition(&g, &f, &q, 0.8, FLOW_FD_STEP, BracketCoefficient::AsPrinted).unwrap();
    assert!((a.residual - b.residual).abs() < 1e-12);
}

#[test]
fn flow_derivative_matches_the_exponential() {
    let lam = 0.7;
    let p = Curve::Root.lift(grid(1 << 12), 0.5).unwrap();
    let starts: Vec<f64> = (0..7).map(|j| 0.97 + 0.01 * j as f64).collect();
    let flow = solve_flow(&VectorField::linear(lam), &p, &starts).unwrap();
    for i in (0..=p.steps()).step_by(256) {
        let oracle = (lam * (p.values()[[i, 0]] - p.values()[[0, 0]])).exp();
        assert!((flow.derivative_at(i, 1.0).unwrap() - oracle).abs() < 1e-3);
        assert_eq!(flow.values[[0, 3]], starts[3]);
    }
}

#[test]
fn rde_restart_agrees_with_the_direct_solution() {
    let f = VectorField::new(
        1,
        2,
        |y| array![[y[0].sin(), 0.5 * y[0].cos()]],
        |y| ndarray::Array3::from_shape_vec((1, 2, 1), vec![y[0].cos(), -0.5 * y[0].sin()]).unwrap(),
    );
    let p = brownian_ito(3, 2, 1 << 10, 1.0, 8, 0.45).unwrap();
    let y0 = Array1::from_elem(1, 0.4);
    let direct = solve_rde(&f, y0.view(), &p).unwrap();
    let split = 400;
    let t0 = p.grid().t(split);
    let times: Vec<f64> = p.grid().times()[split..].iter().map(|t| t - t0).collect();
    let shifted = Array2::from_shape_fn((times.len(), 2), |(i, l)| p.values()[[split + i, l]]);
    let cum2 = ndarray::Array3::from_shape_fn((times.len(), 2, 2), |(i, k, l)| p.second_level(split, split + i).unwrap().get(k, l));
    let tail = RoughPath::from_parts(TimeGrid::from_times(times).unwrap(), shifted, cum2, 0.45).unwrap();
    let restarted = solve_rde(&f, direct.value(split), &tail).unwrap();
    let last = p.steps() - split;
    assert!((restarted.values()[[last, 0]] - direct.values()[[p.steps(), 0]]).abs() < 1e-12);
}

#[test]
fn planar_wentzell_residual_shrinks_with_the_mesh() {
    let fine = brownian_ito(11, 2, 1 << 10, 1.0, 16, 0.45).unwrap();
    let mut sizes = Vec::new();
    let mut residuals = Vec::new();
    for q in ladder(&fine, 3) {
        let q = Arc::new(q);
        let sc = scenarios::planar(&q).unwrap();
        sizes.push(q.steps());
        residuals.push(wentzell_residual(&sc.family, sc.g.as_ref(), &sc.z, &q).unwrap().residual_max);
    }
    let rep = ConvergenceReport::new(sizes, residuals, -0.35, 0.3).unwrap();
    assert!(rep.slope.unwrap() <= -0.35 + 0.3, "{rep:?}");
}

#[test]
fn keller_zhang_drift_residual_shrinks_with_the_mesh() {
    let fine = brownian_ito(12, 1, 1 << 11, 1.0, 1, 0.45).unwrap();
    let mut residuals = Vec::new();
    for q in ladder(&fine, 3) {
        let q = Arc::new(q);
        let sc = scenarios::build(ScenarioName::KzDrift, &q).unwrap();
        let (a, b) = scenarios::kz_inputs(&q, 0.5);
        residuals.push(keller_zhang_residual(&sc.family, sc.g.as_ref(), q.value(0), &a, &b, &q).unwrap().residual_max);
    }
    assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
}

#[test]
fn stratonovich_conversion_regroups_into_the_bracket_terms() {
    for (seed, name, d) in [(4u64, ScenarioName::Separable, 1usize), (5, ScenarioName::Planar, 2)] {
        let m = if d == 1 { 1 } else { 8 };
        let p = Arc::new(brownian_ito(seed, d, 256, 1.0, m, 0.45).unwrap());
        let sc = scenarios::build(name, &p).unwrap();
        let gap = stratonovich_conversion_discrepancy(&sc.family, sc.g.as_ref(), &sc.z, &p).unwrap();
        assert!(gap < 1e-10 * p.scale(), "{name:?}: {gap}");
    }
}

#[test]
fn characteristic_values_track_the_reconstructed_solution() {
    let p = Curve::Root.lift(grid(1 << 12), 0.5).unwrap();
    for spec in [SemilinearSpec::linear(), SemilinearSpec::nonlinear()] {
        let r = structure_check(&spec, &p, 3000, &[-0.5, 0.0, 0.3, 0.8], 1e-2).unwrap();
        assert!(r.value_discrepancy <= 1e-3 && r.gradient_discrepancy <= 1e-3, "{r:?}");
    }
}
