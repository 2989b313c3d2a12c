//! Compose the flows of two scalar RDEs and compare with the equation for the
//! composition.
//!
//! `cargo run --release --example flow_composition`

use roughw::lifts::{brownian_ito, Curve};
use roughw::rde::{flow_composition, BracketCoefficient, FLOW_FD_STEP};
use roughw::{solve_flow, TimeGrid, VectorField};

fn main() -> roughw::Result<()> {
    let (lam, mu, x) = (0.6, -0.4, 0.8);
    let (g, f) = (VectorField::linear(lam), VectorField::linear(mu));

    println!("geometric driver √t: V_T against x·e^((λ+μ)X_T)");
    for k in [6, 8, 10, 12] {
        let n = 1usize << k;
        let p = Curve::Root.lift(TimeGrid::uniform(n, 1.0)?, 0.5)?;
        let r = flow_composition(&g, &f, &p, x, FLOW_FD_STEP, BracketCoefficient::Derived)?;
        let exact = x * ((lam + mu) * p.values()[[n, 0]]).exp();
        println!("  N = {n:>5}: V_T = {:.10}, error {:.3e}, composition residual {:.3e}", r.lhs[n], (r.lhs[n] - exact).abs(), r.residual);
    }

    println!("Itô driver: both bracket coefficients");
    let fine = brownian_ito(42, 1, 1 << 12, 1.0, 1, 0.45)?;
    for stride in [8, 2, 1] {
        let p = fine.restrict(stride)?;
        let derived = flow_composition(&g, &f, &p, x, FLOW_FD_STEP, BracketCoefficient::Derived)?;
        let printed = flow_composition(&g, &f, &p, x, FLOW_FD_STEP, BracketCoefficient::AsPrinted)?;
        println!("  N = {:>4}: derived {:.3e}, printed {:.3e}", p.steps(), derived.residual, printed.residual);
    }

    let p = fine.restrict(4)?;
    let starts: Vec<f64> = (0..9).map(|j| 0.6 + 0.05 * j as f64).collect();
    let flow = solve_flow(&g, &p, &starts)?;
    let t = p.steps();
    let itô_exact = (lam * p.values()[[t, 0]] - 0.5 * lam * lam).exp();
    println!("DY_T(0.8) = {:.6}, closed form e^(λX_T − λ²T/2) = {:.6}", flow.derivative_at(t, 0.8)?, itô_exact);
    Ok(())
}
