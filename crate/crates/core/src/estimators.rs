//! Min-norm and ridge multivariate least squares, with exact bias/variance
//! conditional on the design and Monte Carlo replication over fresh noise.
//!
//! Everything is computed from one thin SVD `X = U·S·Vᵀ`. Both estimators
//! are spectral filters `B̂ = V·diag(f(s))·Uᵀ·Y` with `f(s) = 1/s` above the
//! rank cutoff for min-norm and `f(s) = s/(s² + nλ)` for ridge.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{covariance_factor, spd_solve, trace_quadratic};
use crate::population::PopulationModel;
use crate::rng::{gaussian_matrix, rng_from};

/// Default relative singular-value cutoff for the pseudo-inverse.
pub const DEFAULT_REL_CUTOFF: f64 = 1e-12;

/// Which estimator to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    MinNorm,
    Ridge { lambda: f64 },
}

impl EstimatorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorSpec::MinNorm => Ok(()),
            EstimatorSpec::Ridge { lambda } if lambda > 0.0 && lambda.is_finite() => Ok(()),
            EstimatorSpec::Ridge { lambda } => Err(Error::invalid(
                "lambda",
                format!("{lambda} must be positive (use min-norm for the ridgeless limit)"),
            )),
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            EstimatorSpec::MinNorm => 0.0,
            EstimatorSpec::Ridge { lambda } => lambda,
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::MinNorm => f.write_str("min-norm"),
            EstimatorSpec::Ridge { lambda } => write!(f, "ridge(λ={lambda})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(with = "crate::linalg::rows_serde")]
    pub bhat: DMatrix<f64>,
    pub rank: usize,
    pub lambda: f64,
    pub svd_cutoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskMethod {
    ExactConditional,
    MonteCarlo,
    PlugIn,
}

/// Bias/variance/risk of one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub bias: f64,
    pub variance: f64,
    pub risk: f64,
    pub method: RiskMethod,
    /// Standard error of `risk`; zero for exact methods.
    pub stderr: f64,
    pub trials: usize,
    pub bias_stderr: f64,
    pub variance_stderr: f64,
}

impl RiskReport {
    pub fn exact(bias: f64, variance: f64) -> Self {
        RiskReport {
            bias,
            variance,
            risk: bias + variance,
            method: RiskMethod::ExactConditional,
            stderr: 0.0,
            trials: 0,
            bias_stderr: 0.0,
            variance_stderr: 0.0,
        }
    }
}

fn check_finite(m: &DMatrix<f64>, field: &'static str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid(field, "matrix is empty"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(field, "contains non-finite entries"));
    }
    Ok(())
}

/// Thin SVD of a design matrix with its numerical rank.
#[derive(Debug, Clone)]
pub struct Design {
    pub n: usize,
    pub p: usize,
    /// n×k left singular vectors, k = min(n, p).
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// p×k right singular vectors.
    pub v: DMatrix<f64>,
    pub rank: usize,
    pub cutoff: f64,
}

impl Design {
    pub fn new(x: &DMatrix<f64>, rel_cutoff: f64) -> Result<Self> {
        check_finite(x, "X")?;
        let (n, p) = x.shape();
        let svd = x
            .clone()
            .try_svd(true, true, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Factorization("SVD of the design did not converge".into()))?;
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested Vᵀ");
        let s_max = svd.singular_values.max();
        let cutoff = rel_cutoff * n.max(p) as f64 * s_max;
        let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        let rank = singular_values.iter().filter(|&&s| s > cutoff).count();
        Ok(Design {
            n,
            p,
            u,
            singular_values,
            v: vt.transpose(),
            rank,
            cutoff,
        })
    }

    /// Spectral filter `f(s_k)` of the estimator.
    pub fn filter(&self, est: EstimatorSpec) -> Vec<f64> {
        let n = self.n as f64;
        self.singular_values
            .iter()
            .map(|&s| match est {
                EstimatorSpec::MinNorm if s > self.cutoff => 1.0 / s,
                EstimatorSpec::MinNorm => 0.0,
                EstimatorSpec::Ridge { lambda } => s / (s * s + n * lambda),
            })
            .collect()
    }

    /// `V·diag(f)·Uᵀ·Y`.
    pub fn apply(&self, est: EstimatorSpec, y: &DMatrix<f64>) -> DMatrix<f64> {
        let f = self.filter(est);
        let mut uty = self.u.transpose() * y;
        for (k, fk) in f.iter().enumerate() {
            uty.row_mut(k).scale_mut(*fk);
        }
        &self.v * uty
    }

    /// `V·diag(w)·Vᵀ·B` for per-singular-direction weights `w`.
    fn project(&self, weights: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut coords = self.v.transpose() * b;
        for (k, wk) in weights.iter().enumerate() {
            coords.row_mut(k).scale_mut(*wk);
        }
        &self.v * coords
    }

    /// Eigenvalues of `S_X = XᵀX/n` paired with the columns of `V`.
    fn sample_cov_eigs(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.singular_values.iter().map(|s| s * s / n).collect()
    }

    /// `v_kᵀ·Σ·v_k` for each right singular vector.
    fn sigma_diag_in_v(&self, sigma_x: &DMatrix<f64>) -> Vec<f64> {
        let sv = sigma_x * &self.v;
        sv.component_mul(&self.v).row_sum().iter().copied().collect()
    }

    pub fn condition_number(&self) -> f64 {
        let min = self.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.singular_values.iter().copied().fold(0.0, f64::max);
        max / min
    }
}

fn check_model(design: &Design, model: &PopulationModel) -> Result<()> {
    if model.p() != design.p {
        return Err(Error::DimensionMismatch {
            context: "design columns vs model",
            expected: model.p().to_string(),
            found: design.p.to_string(),
        });
    }
    Ok(())
}

fn check_rows(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    check_finite(y, "Y")?;
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            context: "rows of X and Y",
            expected: x.nrows().to_string(),
            found: y.nrows().to_string(),
        });
    }
    Ok(())
}

/// Minimum-norm least squares `(XᵀX)⁺XᵀY`.
pub fn fit_min_norm(x: &DMatrix<f64>, y: &DMatrix<f64>, rel_cutoff: f64) -> Result<FitResult> {
    check_finite(x, "X")?;
    check_rows(x, y)?;
    let design = Design::new(x, rel_cutoff)?;
    Ok(FitResult {
        bhat: design.apply(EstimatorSpec::MinNorm, y),
        rank: design.rank,
        lambda: 0.0,
        svd_cutoff: design.cutoff,
    })
}

/// Ridge `(XᵀX + nλI)⁻¹XᵀY`.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<FitResult> {
    let est = EstimatorSpec::Ridge { lambda };
    est.validate()?;
    check_finite(x, "X")?;
    check_rows(x, y)?;
    let design = Design::new(x, DEFAULT_REL_CUTOFF)?;
    Ok(FitResult {
        bhat: design.apply(est, y),
        rank: design.rank,
        lambda,
        svd_cutoff: design.cutoff,
    })
}

/// `Tr(Bᵀ(P − I)Σ_x(P − I)B)` with `P = XᵀX(XᵀX)⁺` the row-space projector.
pub fn design_bias_min_norm(design: &Design, model: &PopulationModel) -> Result<f64> {
    check_model(design, model)?;
    let weights: Vec<f64> = design
        .singular_values
        .iter()
        .map(|&s| if s > design.cutoff { 1.0 } else { 0.0 })
        .collect();
    let residual = &model.b - design.project(&weights, &model.b);
    Ok(trace_quadratic(&residual, &model.sigma_x).max(0.0))
}

/// `Tr(Σ_ε)·Tr(Σ_x(XᵀX)⁺)`.
pub fn design_variance_min_norm(design: &Design, model: &PopulationModel) -> Result<f64> {
    check_model(design, model)?;
    let diag = design.sigma_diag_in_v(&model.sigma_x);
    let trace: f64 = design
        .singular_values
        .iter()
        .zip(&diag)
        .filter(|(s, _)| **s > design.cutoff)
        .map(|(s, q)| q / (s * s))
        .sum();
    Ok(model.trace_sigma_eps * trace)
}

/// `λ²·Tr(Bᵀ(S_X + λI)⁻¹Σ_x(S_X + λI)⁻¹B)` with `S_X = XᵀX/n`.
pub fn design_bias_ridge(design: &Design, model: &PopulationModel, lambda: f64) -> Result<f64> {
    check_model(design, model)?;
    EstimatorSpec::Ridge { lambda }.validate()?;
    // λ(S + λ)⁻¹B = B − V·diag(d/(d + λ))·VᵀB
    let weights: Vec<f64> = design.sample_cov_eigs().iter().map(|d| d / (d + lambda)).collect();
    let shrunk = &model.b - design.project(&weights, &model.b);
    Ok(trace_quadratic(&shrunk, &model.sigma_x).max(0.0))
}

/// `Tr(Σ_ε)/n·Tr(Σ_x·U·D(λI + D)⁻²·Uᵀ)` from the eigen-decomposition of `S_X`.
pub fn design_variance_ridge(
    design: &Design,
    model: &PopulationModel,
    lambda: f64,
) -> Result<f64> {
    check_model(design, model)?;
    EstimatorSpec::Ridge { lambda }.validate()?;
    let diag = design.sigma_diag_in_v(&model.sigma_x);
    let trace: f64 = design
        .sample_cov_eigs()
        .iter()
        .zip(&diag)
        .map(|(d, q)| q * d / ((d + lambda) * (d + lambda)))
        .sum();
    Ok(model.trace_sigma_eps * trace / design.n as f64)
}

pub fn exact_bias_min_norm(x: &DMatrix<f64>, model: &PopulationModel) -> Result<f64> {
    design_bias_min_norm(&Design::new(x, DEFAULT_REL_CUTOFF)?, model)
}

pub fn exact_variance_min_norm(x: &DMatrix<f64>, model: &PopulationModel) -> Result<f64> {
    design_variance_min_norm(&Design::new(x, DEFAULT_REL_CUTOFF)?, model)
}

pub fn exact_bias_ridge(x: &DMatrix<f64>, model: &PopulationModel, lambda: f64) -> Result<f64> {
    design_bias_ridge(&Design::new(x, DEFAULT_REL_CUTOFF)?, model, lambda)
}

pub fn exact_variance_ridge(
    x: &DMatrix<f64>,
    model: &PopulationModel,
    lambda: f64,
) -> Result<f64> {
    design_variance_ridge(&Design::new(x, DEFAULT_REL_CUTOFF)?, model, lambda)
}

/// Resolvent form `Tr(Σ_ε)/n·Tr(Σ_x·S_X·(S_X + λI)⁻²)` via a Cholesky solve.
pub fn exact_variance_ridge_resolvent(
    x: &DMatrix<f64>,
    model: &PopulationModel,
    lambda: f64,
) -> Result<f64> {
    EstimatorSpec::Ridge { lambda }.validate()?;
    check_finite(x, "X")?;
    let (n, p) = x.shape();
    if model.p() != p {
        return Err(Error::DimensionMismatch {
            context: "design columns vs model",
            expected: model.p().to_string(),
            found: p.to_string(),
        });
    }
    let s = x.transpose() * x / n as f64;
    let shifted = &s + DMatrix::identity(p, p) * lambda;
    let r1 = spd_solve(&shifted, &s)?;
    let r2 = spd_solve(&shifted, &r1)?;
    Ok(model.trace_sigma_eps * (&model.sigma_x * r2).trace() / n as f64)
}

/// Exact conditional report for either estimator.
pub fn exact_report(
    design: &Design,
    model: &PopulationModel,
    est: EstimatorSpec,
) -> Result<RiskReport> {
    let (bias, variance) = match est {
        EstimatorSpec::MinNorm => (
            design_bias_min_norm(design, model)?,
            design_variance_min_norm(design, model)?,
        ),
        EstimatorSpec::Ridge { lambda } => (
            design_bias_ridge(design, model, lambda)?,
            design_variance_ridge(design, model, lambda)?,
        ),
    };
    Ok(RiskReport::exact(bias, variance))
}

/// `Tr((B − B̂)ᵀΣ_x(B − B̂))` for one realized fit.
pub fn plug_in_risk(fit: &FitResult, model: &PopulationModel) -> Result<f64> {
    if fit.bhat.shape() != model.b.shape() {
        return Err(Error::DimensionMismatch {
            context: "fitted vs population coefficients",
            expected: format!("{:?}", model.b.shape()),
            found: format!("{:?}", fit.bhat.shape()),
        });
    }
    let delta = &model.b - &fit.bhat;
    Ok(trace_quadratic(&delta, &model.sigma_x).max(0.0))
}

/// Error of the estimator in `Σ_x`-whitened coordinates as an affine map of
/// the projected noise: `Lᵀ(B̂ − B) = offset + gain·(Uᵀ·E)` where
/// `Σ_x = L·Lᵀ`. Exact bias is `‖offset‖²_F`, exact variance is
/// `Tr(Σ_ε)·‖gain‖²_F`.
#[derive(Debug, Clone)]
pub struct WhitenedError {
    pub offset: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    u: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
    n: usize,
}

impl WhitenedError {
    pub fn new(design: &Design, model: &PopulationModel, est: EstimatorSpec) -> Result<Self> {
        check_model(design, model)?;
        est.validate()?;
        let f = design.filter(est);
        let signal: Vec<f64> = f.iter().zip(&design.singular_values).map(|(f, s)| f * s).collect();
        let lt = covariance_factor(&model.sigma_x)?.transpose();
        let offset = &lt * (design.project(&signal, &model.b) - &model.b);
        let mut gain = &lt * &design.v;
        for (k, fk) in f.iter().enumerate() {
            gain.column_mut(k).scale_mut(*fk);
        }
        Ok(WhitenedError {
            offset,
            gain,
            u: design.u.clone(),
            noise_factor: covariance_factor(&model.sigma_eps)?,
            n: design.n,
        })
    }

    pub fn exact(&self, trace_sigma_eps: f64) -> RiskReport {
        RiskReport::exact(self.offset.norm_squared(), trace_sigma_eps * self.gain.norm_squared())
    }

    /// Whitened error for one fresh noise draw.
    pub fn draw(&self, seed: u64, trial: u64) -> DMatrix<f64> {
        let mut rng = rng_from(seed, &[trial]);
        let d = self.noise_factor.nrows();
        let noise = gaussian_matrix(&mut rng, self.n, d) * self.noise_factor.transpose();
        &self.offset + &self.gain * (self.u.transpose() * noise)
    }

    /// Fresh-noise replication with trial `t` drawn from stream `(seed, t)`.
    pub fn monte_carlo(&self, trials: usize, seed: u64) -> Result<RiskReport> {
        if trials < 2 {
            return Err(Error::invalid("trials", "Monte Carlo needs at least 2 trials"));
        }
        let draws: Vec<DMatrix<f64>> = (0..trials as u64).map(|t| self.draw(seed, t)).collect();
        Ok(summarize_draws(&draws))
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// Splits per-trial whitened errors into bias and variance.
///
/// The bias is the squared norm of the trial-averaged error, corrected for
/// its `variance/T` excess and clipped at zero; the variance is the mean
/// risk minus that bias. The bias standard error is a jackknife estimate.
fn summarize_draws(draws: &[DMatrix<f64>]) -> RiskReport {
    let trials = draws.len();
    let t = trials as f64;
    let mut mean = DMatrix::zeros(draws[0].nrows(), draws[0].ncols());
    for d in draws {
        mean += d;
    }
    mean /= t;

    let risks: Vec<f64> = draws.iter().map(|d| d.norm_squared()).collect();
    let spreads: Vec<f64> = draws.iter().map(|d| (d - &mean).norm_squared()).collect();
    let (risk, stderr) = mean_and_se(&risks);
    let (_, spread_se) = mean_and_se(&spreads);
    let ss: f64 = spreads.iter().sum();
    let center = mean.norm_squared();

    let raw_bias = center - ss / ((t - 1.0) * t);
    let bias = raw_bias.max(0.0);
    let variance = risk - bias;
    let variance_stderr = spread_se * t / (t - 1.0);

    let bias_stderr = if trials >= 3 {
        let loo: Vec<f64> = draws
            .iter()
            .zip(&spreads)
            .map(|(d, v)| {
                let delta = d - &mean;
                let cross = mean.dot(&delta);
                let center_t = center - 2.0 * cross / (t - 1.0) + v / ((t - 1.0) * (t - 1.0));
                let ss_t = ss - v * t / (t - 1.0);
                center_t - ss_t / ((t - 2.0) * (t - 1.0))
            })
            .collect();
        let loo_mean = loo.iter().sum::<f64>() / t;
        ((t - 1.0) / t * loo.iter().map(|b| (b - loo_mean).powi(2)).sum::<f64>()).sqrt()
    } else {
        stderr
    };

    RiskReport {
        bias,
        variance,
        risk,
        method: RiskMethod::MonteCarlo,
        stderr,
        trials,
        bias_stderr,
        variance_stderr,
    }
}

/// Monte Carlo risk for a fixed design: draws `Y = X·B + E` with fresh
/// `E ~ N(0, Σ_ε)` per trial, fits, and averages the plug-in risk.
pub fn monte_carlo_risk(
    x: &DMatrix<f64>,
    model: &PopulationModel,
    est: EstimatorSpec,
    trials: usize,
    seed: u64,
) -> Result<RiskReport> {
    if trials < 2 {
        return Err(Error::invalid("trials", "Monte Carlo needs at least 2 trials"));
    }
    let design = Design::new(x, DEFAULT_REL_CUTOFF)?;
    WhitenedError::new(&design, model, est)?.monte_carlo(trials, seed)
}

/// Condition number `s_max/s_min` of `X`.
pub fn condition_number(x: &DMatrix<f64>) -> Result<f64> {
    Ok(Design::new(x, DEFAULT_REL_CUTOFF)?.condition_number())
}

/// Residual `‖(XᵀX + nλI)B̂ − XᵀY‖_F / ‖XᵀY‖_F` of the ridge normal equations.
pub fn ridge_normal_residual(x: &DMatrix<f64>, y: &DMatrix<f64>, fit: &FitResult) -> f64 {
    let n = x.nrows() as f64;
    let xty = x.transpose() * y;
    let lhs = x.transpose() * (x * &fit.bhat) + &fit.bhat * (n * fit.lambda);
    (lhs - &xty).norm() / xty.norm().max(f64::MIN_POSITIVE)
}
