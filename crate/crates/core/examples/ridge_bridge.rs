//! Ridge risk tends to the ridgeless curve as λ shrinks, away from γ = 1.

use ddlab::asymptotics::{ridge_point, ridgeless_point, SpectrumContext};

fn main() -> ddlab::Result<()> {
    let p = 400;
    let eigs: Vec<f64> = (0..p).map(|i| 1.0 + (i % 4) as f64).collect();
    let base = SpectrumContext::new(eigs, 1.0, 1.0, vec![1.0 / p as f64; p])?;

    for gamma in [0.5, 1.5, 3.0] {
        let ctx = base.with_gamma(gamma)?;
        let limit = ridgeless_point(&ctx)?.risk;
        print!("γ = {gamma}: ridgeless {limit:.5}");
        for lambda in [1e-1, 1e-2, 1e-4] {
            print!(" | λ={lambda:e} {:.5}", ridge_point(lambda, &ctx)?.risk);
        }
        println!();
    }
    Ok(())
}
