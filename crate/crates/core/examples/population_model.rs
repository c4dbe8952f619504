//! Build an HMM population model, inspect its covariances and sample a sequence.

use ddlab::population::{build_population_model, sample_sequence, ModelSpec};
use ddlab::rng::rng_from;

fn main() -> ddlab::Result<()> {
    let spec = ModelSpec::gaussian(4, 60, 0.6, 0.5, 7);
    let model = build_population_model(&spec)?;

    let eigs = &model.sigma_x_eigs;
    println!("p = {}, d = {}", model.p(), model.d());
    println!("Σ_x eigenvalues: max {:.3}, min {:.3}", eigs[0], eigs[eigs.len() - 1]);
    println!("Tr(Σ_ε) = {:.4}, ‖B‖² = {:.4}", model.trace_sigma_eps, model.b.norm_squared());

    for n in [30, 59, 120] {
        let report = model.assumption1(n, 1e3);
        println!("n = {n:>3}: γ = {:.3}, spectral checks ok: {}", report.ratio, report.all_ok());
    }

    let data = sample_sequence(&model, &spec, 200, 7, &mut rng_from(7, &[1]))?;
    println!("sampled X {:?}, Y {:?}", data.x.shape(), data.y.shape());
    println!("{}", spec.to_json()?);
    Ok(())
}
