//! Sample an Itô Brownian rough path, save it, and inspect its Hölder norms
//! and its weak geometric version.
//!
//! `cargo run --release --example brownian_lift -- [seed]`

use roughw::lifts::LiftSpec;
use roughw::{NormMode, RoughPath};

fn main() -> roughw::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let mut spec = LiftSpec::from_name("brownian-ito", 1 << 11)?;
    spec.dim = 2;
    spec.seed = seed;
    let p = spec.build()?;

    let norms = p.hoelder_norms(0.45, NormMode::AllPairs)?;
    println!("seed {seed}: |X|_α = {:.3}, |𝕏|_2α = {:.3}, |[X]|_2α = {:.3}", norms.norm_x_alpha, norms.norm_xx_2alpha, norms.bracket_2alpha);
    println!("[X]_0T =\n{:.6}", p.bracket(0, p.steps())?.as_array());

    let g = p.geometrize();
    println!("geometrized: [X]_0T = {:.1e}, distance to Itô lift {:.3}", g.bracket(0, g.steps())?.frobenius(), p.rough_distance(&g, 0.45)?);

    let path = std::env::temp_dir().join(format!("brownian_{seed}.json"));
    std::fs::write(&path, serde_json::to_string(&p.to_file())?)?;
    let back = RoughPath::from_file(serde_json::from_str(&std::fs::read_to_string(&path)?)?)?;
    println!("saved to {} (round trip exact: {})", path.display(), back.cum2() == p.cum2());
    Ok(())
}
