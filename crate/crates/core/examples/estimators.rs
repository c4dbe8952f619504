//! Fit min-norm and ridge heads, then compare exact conditional risk with Monte Carlo.

use ddlab::estimators::{
    exact_report, fit_min_norm, fit_ridge, monte_carlo_risk, plug_in_risk, Design, EstimatorSpec, DEFAULT_REL_CUTOFF,
};
use ddlab::population::{sample_direct_linear, PopulationModel};
use ddlab::rng::{gaussian_matrix, rng_from};
use nalgebra::DMatrix;

fn main() -> ddlab::Result<()> {
    let (n, p, d) = (80, 160, 5);
    let mut b = gaussian_matrix(&mut rng_from(1, &[0]), p, d);
    let norm = b.norm();
    b /= norm;
    let model = PopulationModel::from_regression(DMatrix::identity(p, p), b, DMatrix::identity(d, d) * 0.1)?;

    let data = sample_direct_linear(&model.sigma_x, &model.b, 0.1, n, 1, &mut rng_from(1, &[1]))?;
    let mn = fit_min_norm(&data.x, &data.y, DEFAULT_REL_CUTOFF)?;
    let ridge = fit_ridge(&data.x, &data.y, 0.05)?;
    println!("min-norm rank {}, plug-in risk {:.4}", mn.rank, plug_in_risk(&mn, &model)?);
    println!("ridge λ=0.05, plug-in risk {:.4}", plug_in_risk(&ridge, &model)?);

    let design = Design::new(&data.x, DEFAULT_REL_CUTOFF)?;
    for est in [EstimatorSpec::MinNorm, EstimatorSpec::Ridge { lambda: 0.05 }] {
        let exact = exact_report(&design, &model, est)?;
        let mc = monte_carlo_risk(&data.x, &model, est, 400, 3)?;
        println!(
            "{est}: exact bias {:.4} var {:.4} | MC bias {:.4} var {:.4} risk {:.4} ± {:.4}",
            exact.bias, exact.variance, mc.bias, mc.variance, mc.risk, mc.stderr
        );
    }
    Ok(())
}
