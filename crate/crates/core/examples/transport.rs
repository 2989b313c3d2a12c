//! Solve rough semilinear transport equations by characteristics.
//!
//! `cargo run --release --example transport`

use ndarray::array;
use roughw::characteristics::{pde_residual_ladder, solve_semilinear, structure_check, InitialDatum, SemilinearSpec};
use roughw::lifts::Curve;
use roughw::TimeGrid;

fn main() -> roughw::Result<()> {
    let xs: Vec<f64> = (0..9).map(|j| -1.0 + 0.25 * j as f64).collect();
    let n = 1 << 10;
    let p = Curve::Sawtooth.lift(TimeGrid::uniform(n, 1.0)?, 0.5)?;

    // du = 0.7 u_x dX: the initial datum translated along the driver.
    let datum = InitialDatum::new(|x| (2.0 * x[0]).sin(), |x| array![2.0 * (2.0 * x[0]).cos()]);
    let spec = SemilinearSpec::translation(vec![0.7], vec![0.0], datum)?;
    let sol = solve_semilinear(&spec, &p, n, &xs)?;
    let shift = 0.7 * p.values()[[n, 0]];
    let err = xs.iter().zip(&sol.u).map(|(x, u)| (u - (2.0 * (x + shift)).sin()).abs()).fold(0.0, f64::max);
    println!("translation: sup error {err:.2e}");

    // du = x u_x dX, u_0(x) = x: u(t, x) = x e^{X_t}.
    for m in [256, 1024, 4096] {
        let q = Curve::Sawtooth.lift(TimeGrid::uniform(m, 1.0)?, 0.5)?;
        let sol = solve_semilinear(&SemilinearSpec::linear(), &q, m, &xs)?;
        let err = xs.iter().zip(&sol.u).map(|(x, u)| (u - x * q.values()[[m, 0]].exp()).abs()).fold(0.0, f64::max);
        println!("linear transport N = {m:>4}: sup error {err:.2e}, inversion residual {:.1e}", sol.inversion_residual);
    }

    // Nonlinear transport with a source.
    let spec = SemilinearSpec::nonlinear();
    let sol = solve_semilinear(&spec, &p, n, &xs)?;
    println!("nonlinear transport at T:");
    for (x, u) in sol.x.iter().zip(&sol.u) {
        println!("  u({x:+.2}) = {u:+.6}");
    }
    let check = structure_check(&spec, &p, 3 * n / 4, &[-0.5, 0.0, 0.5], 1e-2)?;
    println!("characteristics vs reconstructed u: value {:.1e}, gradient {:.1e}", check.value_discrepancy, check.gradient_discrepancy);
    let rep = pde_residual_ladder(&spec, &p, 0.3, 4, 0.4)?;
    println!("PDE residuals {:?}, slope {:.2}", rep.residuals, rep.slope.unwrap_or(f64::NAN));
    Ok(())
}
