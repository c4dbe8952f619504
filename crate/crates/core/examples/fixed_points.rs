//! Solve the ridgeless and ridge fixed points for an anisotropic spectrum.

use ddlab::asymptotics::{c0_residual, mn1, mn_derivative, solve_c0, solve_mn, SpectrumContext};

fn main() -> ddlab::Result<()> {
    let p = 300;
    let eigs: Vec<f64> = (0..p).map(|i| 0.5 + 2.5 * i as f64 / (p - 1) as f64).collect();
    let energy = vec![1.0 / p as f64; p];

    for gamma in [1.2, 2.0, 4.0] {
        let ctx = SpectrumContext::new(eigs.clone(), gamma, 1.0, energy.clone())?;
        let c0 = solve_c0(&ctx)?;
        println!(
            "γ = {gamma}: c0 = {:.6} after {} iterations, residual {:.1e}",
            c0.value,
            c0.iterations,
            c0_residual(c0.value, &ctx)
        );
        for lambda in [1e-1, 1e-3] {
            let m = solve_mn(lambda, &ctx)?;
            println!(
                "    λ = {lambda:e}: m = {:.5}, m' = {:.5}, m1 = {:.5}",
                m.value,
                mn_derivative(lambda, &ctx)?,
                mn1(lambda, &ctx)?
            );
        }
    }
    Ok(())
}
