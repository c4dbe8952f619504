//! Sweeps over `(n, p, noise)` comparing empirical risk of fitted heads
//! with the deterministic theory, plus CSV/JSON/SVG output.

mod io;
mod svg;

pub use io::{read_csv, read_json, result_to_csv, write_csv, write_json, CSV_HEADER};
pub use svg::{render_svg, render_svg_string, SvgOptions};

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{is_threshold, ridge_point, ridgeless_point, solve_c0, SpectrumContext};
use crate::error::{Error, Result};
use crate::estimators::{exact_report, Design, EstimatorSpec, WhitenedError, DEFAULT_REL_CUTOFF};
use crate::format::nullable_f64;
use crate::linalg::{covariance_factor, identity};
use crate::population::{
    build_population_model, gaussian_rows, sample_sequence, DataMode, ModelSpec, PopulationModel, Position,
};
use crate::rng::{derive_seed, gaussian_matrix, rng_from};

const STREAM_X: u64 = 1;
const STREAM_B: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_MODEL: u64 = 4;

pub const THRESHOLD_TAG: &str = "threshold";

/// Coefficients used in direct-linear mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BRecipe {
    /// I.i.d. Gaussian entries rescaled to `‖B‖²_F = norm2`.
    Gaussian { norm2: f64 },
}

impl Default for BRecipe {
    fn default() -> Self {
        BRecipe::Gaussian { norm2: 1.0 }
    }
}

/// Generative settings for the two HMM-based modes; the noise level of the
/// sweep is the output noise `σ_ξ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSettings {
    pub rho: f64,
    pub sigma_eps2: f64,
    pub position: Position,
}

impl Default for HmmSettings {
    fn default() -> Self {
        HmmSettings { rho: 0.5, sigma_eps2: 1.0, position: Position::Stationary }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub d: usize,
    pub p_grid: Vec<usize>,
    pub n_values: Vec<usize>,
    /// `Tr(Σ_ε)` in direct-linear mode, `σ_ξ²` in the HMM modes.
    pub noise_levels: Vec<f64>,
    pub data_mode: DataMode,
    pub trials: usize,
    pub x_redraws: usize,
    pub estimator: EstimatorSpec,
    pub seed: u64,
    #[serde(default)]
    pub b_recipe: BRecipe,
    #[serde(default)]
    pub hmm: HmmSettings,
}

fn default_name() -> String {
    "custom".into()
}

/// `lo, lo + step, …` up to and including `hi`.
pub fn p_range(lo: usize, hi: usize, step: usize) -> Vec<usize> {
    (lo..=hi).step_by(step.max(1)).collect()
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d", "must be at least 1"));
        }
        if self.p_grid.is_empty() {
            return Err(Error::invalid("p_grid", "must not be empty"));
        }
        if self.p_grid[0] == 0 || self.p_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("p_grid", "must be positive and strictly increasing"));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::invalid("n_values", "must be a nonempty list of positive integers"));
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("noise_levels", "must be a nonempty list of positive reals"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.x_redraws == 0 {
            return Err(Error::invalid("x_redraws", "must be at least 1"));
        }
        self.estimator.validate()?;
        let BRecipe::Gaussian { norm2 } = self.b_recipe;
        if !(norm2.is_finite() && norm2 >= 0.0) {
            return Err(Error::invalid("b_recipe.norm2", "must be finite and nonnegative"));
        }
        if self.data_mode != DataMode::DirectLinear {
            let h = self.hmm;
            if !(h.rho >= 0.0 && h.rho < 1.0) {
                return Err(Error::invalid("hmm.rho", "must lie in [0, 1)"));
            }
            if !(h.sigma_eps2.is_finite() && h.sigma_eps2 >= 0.0) {
                return Err(Error::invalid("hmm.sigma_eps2", "must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn figure1_preset() -> SweepConfig {
    figure1_preset_with_step(5)
}

pub fn figure1_preset_with_step(step: usize) -> SweepConfig {
    SweepConfig {
        name: "figure1".into(),
        d: 50,
        p_grid: p_range(50, 150, step),
        n_values: vec![100],
        noise_levels: vec![0.25, 0.5, 1.0],
        data_mode: DataMode::DirectLinear,
        trials: 50,
        x_redraws: 5,
        estimator: EstimatorSpec::MinNorm,
        seed: 0,
        b_recipe: BRecipe::default(),
        hmm: HmmSettings::default(),
    }
}

pub fn figure2_preset() -> SweepConfig {
    SweepConfig {
        name: "figure2".into(),
        d: 50,
        p_grid: p_range(50, 350, 10),
        n_values: vec![100, 150, 200, 250],
        noise_levels: vec![0.5],
        data_mode: DataMode::DirectLinear,
        trials: 50,
        x_redraws: 5,
        estimator: EstimatorSpec::MinNorm,
        seed: 0,
        b_recipe: BRecipe::default(),
        hmm: HmmSettings::default(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub p: usize,
    pub gamma: f64,
    pub noise_level: f64,
    #[serde(with = "nullable_f64")]
    pub emp_bias_mean: f64,
    #[serde(with = "nullable_f64")]
    pub emp_bias_se: f64,
    #[serde(with = "nullable_f64")]
    pub emp_var_mean: f64,
    #[serde(with = "nullable_f64")]
    pub emp_var_se: f64,
    #[serde(with = "nullable_f64")]
    pub emp_risk_mean: f64,
    #[serde(with = "nullable_f64")]
    pub emp_risk_se: f64,
    #[serde(with = "nullable_f64")]
    pub theory_bias: f64,
    #[serde(with = "nullable_f64")]
    pub theory_variance: f64,
    #[serde(with = "nullable_f64")]
    pub theory_risk: f64,
    #[serde(with = "nullable_f64")]
    pub c0: f64,
    pub threshold_tag: String,
}

impl SweepRow {
    fn blank(n: usize, p: usize, noise_level: f64, tag: String) -> Self {
        SweepRow {
            n,
            p,
            gamma: p as f64 / n as f64,
            noise_level,
            emp_bias_mean: f64::NAN,
            emp_bias_se: f64::NAN,
            emp_var_mean: f64::NAN,
            emp_var_se: f64::NAN,
            emp_risk_mean: f64::NAN,
            emp_risk_se: f64::NAN,
            theory_bias: f64::NAN,
            theory_variance: f64::NAN,
            theory_risk: f64::NAN,
            c0: f64::NAN,
            threshold_tag: tag,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.threshold_tag.starts_with("failed")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub n: usize,
    pub p: usize,
    pub redraw: usize,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub config: SweepConfig,
    pub code_version: String,
    pub wall_time_secs: f64,
    /// Design condition numbers at grid points inside the threshold band.
    pub threshold_conditioning: Vec<ConditionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

/// Mean and standard error of the mean; the error is zero for one value.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Population quantities per noise level at one `p`.
fn models_for(cfg: &SweepConfig, p: usize) -> Result<Vec<PopulationModel>> {
    let d = cfg.d;
    match cfg.data_mode {
        DataMode::DirectLinear => {
            let BRecipe::Gaussian { norm2 } = cfg.b_recipe;
            let raw = gaussian_matrix(&mut rng_from(cfg.seed, &[STREAM_B, p as u64]), p, d);
            let b = &raw * (norm2 / raw.norm_squared()).sqrt();
            cfg.noise_levels
                .iter()
                .map(|&noise| PopulationModel::from_regression(identity(p), b.clone(), identity(d) * (noise / d as f64)))
                .collect()
        }
        DataMode::IidGaussian | DataMode::HmmSequence => cfg
            .noise_levels
            .iter()
            .map(|&noise| build_population_model(&hmm_spec(cfg, p, noise)))
            .collect(),
    }
}

fn hmm_spec(cfg: &SweepConfig, p: usize, noise: f64) -> ModelSpec {
    let mut spec = ModelSpec::gaussian(cfg.d, p, cfg.hmm.rho, noise, derive_seed(cfg.seed, &[STREAM_MODEL, p as u64]));
    spec.sigma_eps2 = cfg.hmm.sigma_eps2;
    spec.position = cfg.hmm.position;
    spec
}

/// One design; it depends on `(seed, n, p, redraw)` only, so every noise
/// level at a grid point sees the same designs.
fn draw_design(cfg: &SweepConfig, model: &PopulationModel, n: usize, p: usize, redraw: usize) -> Result<DMatrix<f64>> {
    let mut rng = rng_from(cfg.seed, &[STREAM_X, n as u64, p as u64, redraw as u64]);
    match cfg.data_mode {
        DataMode::DirectLinear => Ok(gaussian_rows(None, n, p, &mut rng)),
        DataMode::IidGaussian => {
            let factor = covariance_factor(&model.sigma_x)?;
            Ok(gaussian_rows(Some(&factor), n, p, &mut rng))
        }
        DataMode::HmmSequence => {
            let spec = hmm_spec(cfg, p, cfg.noise_levels[0]);
            Ok(sample_sequence(model, &spec, n, cfg.seed, &mut rng)?.x)
        }
    }
}

struct PointOutput {
    rows: Vec<SweepRow>,
    conditioning: Vec<ConditionRecord>,
}

#[derive(Default)]
struct Accum {
    bias: Vec<f64>,
    var: Vec<f64>,
    risk: Vec<f64>,
    mc_se: Vec<f64>,
}

fn run_point(cfg: &SweepConfig, n: usize, p: usize) -> PointOutput {
    let fail = |e: Error| PointOutput {
        rows: cfg.noise_levels.iter().map(|&v| SweepRow::blank(n, p, v, format!("failed: {e}"))).collect(),
        conditioning: Vec::new(),
    };
    let models = match models_for(cfg, p) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let gamma = p as f64 / n as f64;
    let threshold = cfg.estimator == EstimatorSpec::MinNorm && is_threshold(gamma);
    let mut accums: Vec<Accum> = models.iter().map(|_| Accum::default()).collect();
    let mut conditioning = Vec::new();
    for redraw in 0..cfg.x_redraws {
        let design = match draw_design(cfg, &models[0], n, p, redraw).and_then(|x| Design::new(&x, DEFAULT_REL_CUTOFF)) {
            Ok(d) => d,
            Err(e) => return fail(e),
        };
        if threshold {
            conditioning.push(ConditionRecord { n, p, redraw, condition_number: design.condition_number() });
        }
        for (k, (model, acc)) in models.iter().zip(accums.iter_mut()).enumerate() {
            let exact = match exact_report(&design, model, cfg.estimator) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            acc.bias.push(exact.bias);
            acc.var.push(exact.variance);
            if cfg.trials >= 2 {
                let seed = derive_seed(cfg.seed, &[STREAM_NOISE, n as u64, p as u64, k as u64, redraw as u64]);
                match WhitenedError::new(&design, model, cfg.estimator).and_then(|w| w.monte_carlo(cfg.trials, seed)) {
                    Ok(mc) => {
                        acc.risk.push(mc.risk);
                        acc.mc_se.push(mc.stderr);
                    }
                    Err(e) => return fail(e),
                }
            } else {
                acc.risk.push(exact.risk);
            }
        }
    }

    let rows = models
        .iter()
        .zip(&accums)
        .zip(&cfg.noise_levels)
        .map(|((model, acc), &noise)| {
            let mut row = SweepRow::blank(n, p, noise, String::new());
            (row.emp_bias_mean, row.emp_bias_se) = mean_se(&acc.bias);
            (row.emp_var_mean, row.emp_var_se) = mean_se(&acc.var);
            (row.emp_risk_mean, row.emp_risk_se) = mean_se(&acc.risk);
            if acc.risk.len() == 1 && !acc.mc_se.is_empty() {
                row.emp_risk_se = acc.mc_se[0];
            }
            match theory(cfg, model, n) {
                Ok((b, v, r, c0)) => {
                    (row.theory_bias, row.theory_variance, row.theory_risk, row.c0) = (b, v, r, c0);
                    if threshold {
                        row.threshold_tag = THRESHOLD_TAG.into();
                    }
                }
                Err(e) => row.threshold_tag = format!("failed: theory: {e}"),
            }
            row
        })
        .collect();
    PointOutput { rows, conditioning }
}

/// `(bias, variance, risk, c₀ or NaN)` from the deterministic equivalents.
fn theory(cfg: &SweepConfig, model: &PopulationModel, n: usize) -> Result<(f64, f64, f64, f64)> {
    let ctx = SpectrumContext::from_model(model, n)?;
    match cfg.estimator {
        EstimatorSpec::MinNorm => {
            let row = ridgeless_point(&ctx)?;
            let c0 = if ctx.gamma > 1.0 && row.tag.is_empty() { solve_c0(&ctx)?.value } else { f64::NAN };
            Ok((row.bias, row.variance, row.risk, c0))
        }
        EstimatorSpec::Ridge { lambda } => {
            let row = ridge_point(lambda, &ctx)?;
            Ok((row.bias, row.variance, row.risk, f64::NAN))
        }
    }
}

fn row_order(a: &SweepRow, b: &SweepRow) -> std::cmp::Ordering {
    (a.n, a.noise_level, a.p)
        .partial_cmp(&(b.n, b.noise_level, b.p))
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Runs every `(n, p)` grid point in parallel. Bad grid points yield rows
/// tagged `failed: …` rather than an error.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let points: Vec<(usize, usize)> =
        cfg.n_values.iter().flat_map(|&n| cfg.p_grid.iter().map(move |&p| (n, p))).collect();
    let outputs: Vec<PointOutput> = points.par_iter().map(|&(n, p)| run_point(cfg, n, p)).collect();
    let mut rows = Vec::new();
    let mut threshold_conditioning = Vec::new();
    for out in outputs {
        rows.extend(out.rows);
        threshold_conditioning.extend(out.conditioning);
    }
    rows.sort_by(row_order);
    Ok(SweepResult {
        rows,
        metadata: SweepMetadata {
            config: cfg.clone(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            threshold_conditioning,
        },
    })
}
