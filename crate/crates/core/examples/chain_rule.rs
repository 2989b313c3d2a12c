//! Compose a smooth function with a controlled path and compare the rough
//! Itô formula against the exact value.
//!
//! `cargo run --release --example chain_rule`

use ndarray::{array, Array1, Array2, Array3};
use roughw::integrate::young_bracket_integral;
use roughw::lifts::brownian_ito;
use roughw::{compose_chain_rule, rough_integral, ControlledPath, FieldFunction};

fn main() -> roughw::Result<()> {
    // F(x) = x₀ x₁ + sin x₀ on a two-dimensional Itô Brownian path.
    let f = FieldFunction::autonomous(2, 1, |x| array![x[0] * x[1] + x[0].sin()])
        .with_derivative(|_, x| array![[x[1] + x[0].cos(), x[0]]])
        .with_second_derivative(|_, x| Array3::from_shape_vec((1, 2, 2), vec![-x[0].sin(), 1.0, 1.0, 0.0]).unwrap());
    let fine = brownian_ito(5, 2, 1 << 14, 1.0, 16, 0.45)?;
    for k in [8, 10, 12, 14] {
        let n = 1usize << k;
        let p = fine.restrict(fine.steps() / n)?;
        let x = ControlledPath::canonical(&p);
        let fx = compose_chain_rule(&f, &x, &p)?;

        // F(X_T) = F(X_0) + ∫ DF(X) dX + ½ ∫ D²F(X) d[X].
        let df = ControlledPath::new(
            p.grid().clone(),
            Array2::from_shape_fn((n + 1, 2), |(i, l)| f.derivative(i, p.value(i)).unwrap()[[0, l]]),
            Array3::from_shape_fn((n + 1, 2, 2), |(i, l, k)| f.second_derivative(i, p.value(i)).unwrap().0[[0, l, k]]),
        )?;
        let first = rough_integral(&df, &p)?.terminal()[0];
        let c = Array3::from_shape_fn((n + 1, 1, 4), |(i, _, kl)| 0.5 * f.second_derivative(i, p.value(i)).unwrap().0[[0, kl / 2, kl % 2]]);
        let second = young_bracket_integral(&c, &p)?[[n, 0]];
        let start: Array1<f64> = f.eval(0, p.value(0));
        let rhs = start[0] + first + second;
        println!("N = {n:>5}: F(X_T) = {:+.8}, Itô expansion {:+.8}, gap {:.2e}", fx.values()[[n, 0]], rhs, (fx.values()[[n, 0]] - rhs).abs());
    }
    Ok(())
}
