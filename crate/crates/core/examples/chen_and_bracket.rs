//! Build each kind of lift and check Chen's relation and the bracket.
//!
//! `cargo run --release --example chen_and_bracket`

use ndarray::array;
use roughw::lifts::{brownian_ito, pure_area, smooth, Curve};
use roughw::rough_path::chen_sweep;
use roughw::TimeGrid;

fn main() -> roughw::Result<()> {
    let n = 1 << 10;
    let grid = TimeGrid::uniform(n, 1.0)?;
    let lifts = [
        ("piecewise-linear circle", Curve::Circle.lift(grid.clone(), 0.5)?),
        ("smooth (t, t²)", smooth(grid.clone(), 2, |t| vec![t, t * t], |t| vec![1.0, 2.0 * t], 0.5)?),
        ("pure area", pure_area(&array![[0.0, 1.0], [-1.0, 0.0]], n, 1.0, 0.45)?),
        ("Brownian Itô, d = 2", brownian_ito(7, 2, n, 1.0, 16, 0.45)?),
    ];
    println!("{:<26} {:>12} {:>12} {:>12}", "lift", "Chen", "|[X]_0T|", "area 𝕏⁰¹");
    for (name, p) in &lifts {
        let sweep = chen_sweep(p, 10_000, 1);
        let bracket = p.bracket(0, n)?;
        let area = p.second_level(0, n)?.antisym().get(0, 1);
        println!("{name:<26} {:>12.2e} {:>12.4} {:>12.4}", sweep.max_residual, bracket.frobenius(), area);
    }

    // For an Itô Brownian lift the bracket is the quadratic variation t·I.
    let p = &lifts[3].1;
    let b = p.bracket(0, n / 2)?;
    println!("\nItô bracket over [0, 1/2]:\n{:.6}", b.as_array());
    Ok(())
}
