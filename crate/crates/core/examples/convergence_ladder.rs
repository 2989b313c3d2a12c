//! Local defect orders and mesh-ladder slopes over several Brownian samples.
//!
//! `cargo run --release --example convergence_ladder -- [samples]`

use ndarray::Array3;
use roughw::integrate::{defect_slope, local_defect, local_defect_table};
use roughw::lifts::brownian_ito;
use roughw::rde::{flow_composition_ladder, BracketCoefficient};
use roughw::{ControlledPath, VectorField};

fn main() -> roughw::Result<()> {
    let samples: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let alpha = 0.45;
    println!("local defect slope (window [{:.2}, {:.2}])", 3.0 * alpha - 0.3, 3.0 * alpha + 0.3);
    for seed in 0..samples {
        let p = brownian_ito(seed, 2, 1 << 14, 1.0, 16, alpha)?;
        let n = p.grid().len();
        let y = ControlledPath::new(
            p.grid().clone(),
            p.values().mapv(f64::sin),
            Array3::from_shape_fn((n, 2, 2), |(i, l, k)| if l == k { p.values()[[i, l]].cos() } else { 0.0 }),
        )?;
        let table = local_defect_table(|i, j| local_defect(&y, &p, i, j), &p, 3..=8)?;
        println!("  seed {seed}: {:.2}", defect_slope(&table));
    }

    println!("flow composition ladder, target slope {:.2}", -(3.0 * alpha - 1.0));
    let (g, f) = (VectorField::linear(0.6), VectorField::linear(-0.4));
    for seed in 0..samples {
        let p = brownian_ito(seed, 1, 1 << 11, 1.0, 1, alpha)?;
        let rep = flow_composition_ladder(&g, &f, &p, 0.8, 4, BracketCoefficient::Derived, 0.3)?;
        println!("  seed {seed}: residuals {} slope {:.2}", rep.residuals.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>().join(" "), rep.slope.unwrap_or(f64::NAN));
    }
    Ok(())
}
