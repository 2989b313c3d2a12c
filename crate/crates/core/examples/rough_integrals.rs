//! Rough, controlled and Young integrals against Itô and geometric lifts of
//! the same Brownian sample, and the Itô–Stratonovich conversion between them.
//!
//! `cargo run --release --example rough_integrals`

use ndarray::Array3;
use roughw::integrate::{ito_strato_residual_path, young_bracket_integral};
use roughw::lifts::brownian_ito;
use roughw::{controlled_integral, rough_integral, ControlledPath};

fn main() -> roughw::Result<()> {
    let n = 1 << 12;
    let ito = brownian_ito(3, 1, n, 1.0, 1, 0.45)?;
    let strat = ito.geometrize();
    let xt = ito.values()[[n, 0]] - ito.values()[[0, 0]];

    let x = ControlledPath::canonical(&ito);
    let i_ito = rough_integral(&x, &ito)?.terminal()[0];
    let i_strat = rough_integral(&ControlledPath::canonical(&strat), &strat)?.terminal()[0];
    println!("∫ X dX   Itô {i_ito:+.12}  closed form {:+.12}", 0.5 * (xt * xt - 1.0));
    println!("∫ X ∘dX  Str {i_strat:+.12}  closed form {:+.12}", 0.5 * xt * xt);

    // Y = sin X is controlled by X with Y' = cos X.
    let y = ControlledPath::new(
        ito.grid().clone(),
        ito.values().mapv(f64::sin),
        Array3::from_shape_fn((n + 1, 1, 1), |(i, _, _)| ito.values()[[i, 0]].cos()),
    )?;
    let ys = rough_integral(&y, &ito)?;
    println!("∫ sin X dX (Itô) = {:+.6}", ys.terminal()[0]);
    let with_table = ys.with_local_defects(&y, &ito, 2..=7)?;
    for e in &with_table.local_error_table {
        println!("  defect over intervals of length {:.5}: mean {:.3e}, max {:.3e}", e.length, e.mean, e.max);
    }

    // ∫ Y d_X Y for Y = sin X is ½(sin² X_T − sin² X_0) minus half its bracket.
    let yy = controlled_integral(&y, &y, &ito)?.terminal()[0];
    let c = Array3::from_shape_fn((n + 1, 1, 1), |(i, _, _)| ito.values()[[i, 0]].cos().powi(2));
    let half_bracket = 0.5 * young_bracket_integral(&c, &ito)?[[n, 0]];
    let sin_t = ito.values()[[n, 0]].sin();
    println!("∫ Y dY + ½∫ (Y')² d[X] = {:+.6}, ½ sin² X_T = {:+.6}", yy + half_bracket, 0.5 * sin_t * sin_t);

    println!("conversion residual |∫ Y ∘dX − ∫ Y dX − ½∫ Y' d[X]| = {:.2e}", ito_strato_residual_path(&y, &ito)?);
    Ok(())
}
