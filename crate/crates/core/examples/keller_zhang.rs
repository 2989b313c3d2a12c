//! The Itô–Wentzell expansion along a trajectory with drift against the
//! bracket, `dZ = a dX + b d[X]`.
//!
//! `cargo run --release --example keller_zhang`

use std::sync::Arc;

use roughw::lifts::brownian_ito;
use roughw::scenarios::{self, ScenarioName};
use roughw::wentzell::{keller_zhang_path, keller_zhang_residual, wentzell_residual};

fn main() -> roughw::Result<()> {
    let fine = brownian_ito(12, 1, 1 << 12, 1.0, 1, 0.45)?;
    for b in [0.0, 0.5, -1.0] {
        println!("b = {b:+}");
        for stride in [16, 4, 1] {
            let p = Arc::new(fine.restrict(stride)?);
            let sc = scenarios::build(ScenarioName::KzDrift, &p)?;
            let (a, drift) = scenarios::kz_inputs(&p, b);
            let z = keller_zhang_path(p.value(0), &a, &drift, &p)?;
            let r = keller_zhang_residual(&sc.family, sc.g.as_ref(), p.value(0), &a, &drift, &p)?;
            print!("  N = {:>4}: Z_T − X_T = {:+.4}, residual {:.3e}", p.steps(), z.values()[[p.steps(), 0]] - p.values()[[p.steps(), 0]], r.residual_max);
            if b == 0.0 {
                let main = wentzell_residual(&sc.family, sc.g.as_ref(), &sc.z, &p)?;
                print!(" (Z = X form: {:.3e})", main.residual_max);
            }
            println!();
        }
    }
    Ok(())
}
