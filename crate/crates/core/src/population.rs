//! Generative HMM over tokens, its population covariances, and the
//! covariance-matched regression pair `(B, Σ_ε)` used by every estimator.
//!
//! Tokens follow a linear-Gaussian chain `z_i = z_{i-1}·A + ε_i` started at
//! `z_0 ~ N(0, I_d)`. A frozen linear representation `x_i = z_i·W + u_i`
//! with unit-variance noise `u_i` feeds a linear head that predicts the
//! next token `y_i = z_i·A + ξ_i`. Regressing `y` on `x` at a fixed
//! position gives `y = x·B + ε` with `B = Σ_x⁻¹Σ_xy` and the Schur
//! complement noise `Σ_ε`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, RowDVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    covariance_factor, identity, rel_frobenius, rows_serde, spd_solve, spectral_radius,
    symmetric_eigen_desc, symmetrize,
};
use crate::rng::{gaussian_matrix, rng_from};

const STREAM_TRANSITION: u64 = 0xA;
const STREAM_REPRESENTATION: u64 = 0xB;

const MAX_NILPOTENT_RESAMPLES: usize = 16;
const SERIES_REL_TOL: f64 = 1e-12;
const SERIES_MAX_TERMS: usize = 1_000_000;
const CROSSCHECK_TOL: f64 = 1e-8;

/// Which token position the population covariances describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "PositionRepr", into = "PositionRepr")]
pub enum Position {
    Index(usize),
    #[default]
    Stationary,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PositionRepr {
    Index(usize),
    Marker(String),
}

impl TryFrom<PositionRepr> for Position {
    type Error = String;

    fn try_from(r: PositionRepr) -> std::result::Result<Self, String> {
        match r {
            PositionRepr::Index(i) => Ok(Position::Index(i)),
            PositionRepr::Marker(s) if s == "stationary" => Ok(Position::Stationary),
            PositionRepr::Marker(s) => Err(format!(
                "position must be a non-negative integer or \"stationary\", got {s:?}"
            )),
        }
    }
}

impl From<Position> for PositionRepr {
    fn from(p: Position) -> Self {
        match p {
            Position::Index(i) => PositionRepr::Index(i),
            Position::Stationary => PositionRepr::Marker("stationary".into()),
        }
    }
}

/// How the transition matrix `A` is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransitionRecipe {
    /// I.i.d. standard normal entries rescaled to spectral radius `rho`.
    Gaussian { rho: f64 },
    /// A fixed matrix, optionally rescaled to spectral radius `rho`.
    Explicit {
        matrix: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
    Zero,
}

/// How the representation matrix `W` is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RepresentationRecipe {
    /// I.i.d. standard normal entries rescaled to unit average column norm.
    Gaussian,
    Explicit { matrix: Vec<Vec<f64>> },
    Zero,
}

fn default_unit() -> f64 {
    1.0
}

/// User-facing description of the generative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    pub p: usize,
    #[serde(default = "default_unit")]
    pub sigma_eps2: f64,
    pub sigma_xi2: f64,
    #[serde(default)]
    pub position: Position,
    pub a_recipe: TransitionRecipe,
    pub w_recipe: RepresentationRecipe,
    pub seed: u64,
}

impl ModelSpec {
    /// Gaussian recipes at the stationary position.
    pub fn gaussian(d: usize, p: usize, rho: f64, sigma_xi2: f64, seed: u64) -> Self {
        ModelSpec {
            d,
            p,
            sigma_eps2: 1.0,
            sigma_xi2,
            position: Position::Stationary,
            a_recipe: TransitionRecipe::Gaussian { rho },
            w_recipe: RepresentationRecipe::Gaussian,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d", "must be at least 1"));
        }
        if self.p == 0 {
            return Err(Error::invalid("p", "must be at least 1"));
        }
        if !(self.sigma_eps2 > 0.0 && self.sigma_eps2.is_finite()) {
            return Err(Error::invalid("sigma_eps2", "must be positive and finite"));
        }
        if !(self.sigma_xi2 > 0.0 && self.sigma_xi2.is_finite()) {
            return Err(Error::invalid("sigma_xi2", "must be positive and finite"));
        }
        let rho = match &self.a_recipe {
            TransitionRecipe::Gaussian { rho } => Some(*rho),
            TransitionRecipe::Explicit { rho, .. } => *rho,
            TransitionRecipe::Zero => None,
        };
        if let Some(rho) = rho {
            let upper_ok = rho < 1.0 || self.position != Position::Stationary;
            if !(rho > 0.0 && rho.is_finite() && upper_ok) {
                return Err(Error::invalid(
                    "a_recipe.rho",
                    format!("spectral radius {rho} must lie in (0, 1) for a stationary model"),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Realized population quantities for one [`ModelSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationModel {
    #[serde(with = "rows_serde")]
    pub a: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub w: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub sigma_z: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub sigma_x: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub sigma_y: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub sigma_xy: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub b: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub sigma_eps: DMatrix<f64>,
    pub trace_sigma_eps: f64,
    /// Eigenvalues of `Σ_x`, descending.
    pub sigma_x_eigs: Vec<f64>,
    /// Orthonormal eigenvectors of `Σ_x`, column `k` pairs with eigenvalue `k`.
    #[serde(with = "rows_serde")]
    pub sigma_x_basis: DMatrix<f64>,
}

impl PopulationModel {
    pub fn p(&self) -> usize {
        self.sigma_x.nrows()
    }

    pub fn d(&self) -> usize {
        self.sigma_y.nrows()
    }

    /// Regression pair given directly, bypassing the HMM. `Σ_z`, `A`, `W`
    /// are left empty and `Σ_y` is set to `Bᵀ·Σ_x·B + Σ_ε`.
    pub fn from_regression(
        sigma_x: DMatrix<f64>,
        b: DMatrix<f64>,
        sigma_eps: DMatrix<f64>,
    ) -> Result<Self> {
        let p = sigma_x.nrows();
        let d = sigma_eps.nrows();
        if sigma_x.ncols() != p || b.nrows() != p || b.ncols() != d || sigma_eps.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "regression pair",
                expected: format!("Σ_x {p}×{p}, B {p}×{d}, Σ_ε {d}×{d}"),
                found: format!(
                    "Σ_x {}×{}, B {}×{}, Σ_ε {}×{}",
                    sigma_x.nrows(),
                    sigma_x.ncols(),
                    b.nrows(),
                    b.ncols(),
                    sigma_eps.nrows(),
                    sigma_eps.ncols()
                ),
            });
        }
        let sigma_x = symmetrize(&sigma_x);
        let sigma_eps = symmetrize(&sigma_eps);
        let sigma_xy = &sigma_x * &b;
        let sigma_y = b.transpose() * &sigma_xy + &sigma_eps;
        let (sigma_x_eigs, sigma_x_basis) = symmetric_eigen_desc(&sigma_x);
        Ok(PopulationModel {
            a: DMatrix::zeros(0, 0),
            w: DMatrix::zeros(0, 0),
            sigma_z: DMatrix::zeros(0, 0),
            trace_sigma_eps: sigma_eps.trace(),
            sigma_x,
            sigma_y,
            sigma_xy,
            b,
            sigma_eps,
            sigma_x_eigs,
            sigma_x_basis,
        })
    }

    /// Per-eigendirection energy of `B`: `Σ_j (Qᵀ·B)_{kj}²` for eigenvector `k`.
    pub fn b_energy(&self) -> Vec<f64> {
        let rotated = self.sigma_x_basis.transpose() * &self.b;
        rotated.row_iter().map(|r| r.norm_squared()).collect()
    }

    pub fn assumption1(&self, n: usize, bound: f64) -> Assumption1Report {
        check_assumption1(&self.sigma_x_eigs, n, bound)
    }
}

/// Rescales `m` so that its spectral radius equals `rho`.
pub fn rescale_to_spectral_radius(m: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    let current = spectral_radius(m);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if !(current > f64::EPSILON * scale) {
        return Err(Error::Construction { attempts: 1 });
    }
    Ok(m * (rho / current))
}

/// Random transition matrix with spectral radius `rho`.
pub fn build_transition_matrix<R: Rng + ?Sized>(
    d: usize,
    rho: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho", format!("{rho} is outside (0, 1)")));
    }
    for _ in 0..MAX_NILPOTENT_RESAMPLES {
        let draw = gaussian_matrix(rng, d, d);
        if let Ok(a) = rescale_to_spectral_radius(&draw, rho) {
            return Ok(a);
        }
    }
    Err(Error::Construction {
        attempts: MAX_NILPOTENT_RESAMPLES,
    })
}

/// Random representation matrix with unit average column norm.
pub fn build_representation_matrix<R: Rng + ?Sized>(
    d: usize,
    p: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let w = gaussian_matrix(rng, d, p);
    let mean_norm = w.column_iter().map(|c| c.norm()).sum::<f64>() / p as f64;
    if mean_norm > 0.0 {
        w / mean_norm
    } else {
        w
    }
}

/// Token covariance at `position`.
///
/// At index `i` this is `(Aⁱ)ᵀAⁱ + σ_ε²·Σ_{j=0}^{i-1}(Aʲ)ᵀAʲ`, the exact
/// covariance of the chain started from `N(0, I)`; at unit innovation
/// variance it is `I + Σ_{j=1}^{i}(Aʲ)ᵀAʲ`. The stationary value is the
/// limit `σ_ε²·Σ_{j≥0}(Aʲ)ᵀAʲ`.
pub fn sigma_z(a: &DMatrix<f64>, position: Position, sigma_eps2: f64) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "transition matrix",
            expected: "square".into(),
            found: format!("{}×{}", a.nrows(), a.ncols()),
        });
    }
    match position {
        Position::Index(0) => Ok(identity(d)),
        Position::Index(i) => {
            let mut acc = identity(d) * sigma_eps2;
            let mut power = a.clone();
            for _ in 1..i {
                acc += power.transpose() * &power * sigma_eps2;
                power = &power * a;
            }
            acc += power.transpose() * &power;
            Ok(symmetrize(&acc))
        }
        Position::Stationary => {
            let radius = spectral_radius(a);
            if radius >= 1.0 {
                return Err(Error::Divergence {
                    spectral_radius: radius,
                });
            }
            let mut acc = identity(d);
            let mut power = a.clone();
            for _ in 0..SERIES_MAX_TERMS {
                let term = power.transpose() * &power;
                let small = term.norm() < SERIES_REL_TOL * acc.norm();
                acc += term;
                if small {
                    return Ok(symmetrize(&(acc * sigma_eps2)));
                }
                power = &power * a;
            }
            Err(Error::NoConvergence {
                what: "stationary covariance series",
                residual: (power.transpose() * &power).norm(),
                iterations: SERIES_MAX_TERMS,
            })
        }
    }
}

fn explicit_matrix(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    field: &'static str,
) -> Result<DMatrix<f64>> {
    let m = rows_serde::from_rows(rows).map_err(|e| Error::invalid(field, e))?;
    if m.nrows() != nrows || m.ncols() != ncols {
        return Err(Error::DimensionMismatch {
            context: field,
            expected: format!("{nrows}×{ncols}"),
            found: format!("{}×{}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(field, "entries must be finite"));
    }
    Ok(m)
}

pub fn realize_transition(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let d = spec.d;
    match &spec.a_recipe {
        TransitionRecipe::Gaussian { rho } => {
            build_transition_matrix(d, *rho, &mut rng_from(spec.seed, &[STREAM_TRANSITION]))
        }
        TransitionRecipe::Explicit { matrix, rho } => {
            let m = explicit_matrix(matrix, d, d, "a_recipe.matrix")?;
            match rho {
                Some(rho) => rescale_to_spectral_radius(&m, *rho),
                None => Ok(m),
            }
        }
        TransitionRecipe::Zero => Ok(DMatrix::zeros(d, d)),
    }
}

pub fn realize_representation(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    match &spec.w_recipe {
        RepresentationRecipe::Gaussian => Ok(build_representation_matrix(
            spec.d,
            spec.p,
            &mut rng_from(spec.seed, &[STREAM_REPRESENTATION]),
        )),
        RepresentationRecipe::Explicit { matrix } => {
            explicit_matrix(matrix, spec.d, spec.p, "w_recipe.matrix")
        }
        RepresentationRecipe::Zero => Ok(DMatrix::zeros(spec.d, spec.p)),
    }
}

/// Builds all population quantities for `spec`.
///
/// `B` uses the product form `WᵀΣ_z(I + WWᵀΣ_z)⁻¹A` and `Σ_ε` the closed
/// form `Σ_ξ + Aᵀ(I + Σ_zWWᵀ)⁻¹Σ_zA`; both are checked against the
/// regression route `Σ_x⁻¹Σ_xy` and the Schur complement.
pub fn build_population_model(spec: &ModelSpec) -> Result<PopulationModel> {
    spec.validate()?;
    let (d, p) = (spec.d, spec.p);
    let a = realize_transition(spec)?;
    let w = realize_representation(spec)?;
    let sigma_z = sigma_z(&a, spec.position, spec.sigma_eps2)?;

    let sigma_x = symmetrize(&(w.transpose() * &sigma_z * &w + identity(p)));
    let sigma_y = symmetrize(&(a.transpose() * &sigma_z * &a + identity(d) * spec.sigma_xi2));
    let sigma_xy = w.transpose() * &sigma_z * &a;

    let inner = identity(d) + &w * w.transpose() * &sigma_z;
    let inner_inv = inner
        .try_inverse()
        .ok_or_else(|| Error::Factorization("I + W·Wᵀ·Σ_z is singular".into()))?;
    let b = w.transpose() * &sigma_z * inner_inv * &a;

    let b_regression = spd_solve(&sigma_x, &sigma_xy)?;
    let b_gap = (&b - &b_regression).norm();
    if b_gap > CROSSCHECK_TOL * (1.0 + b.norm()) {
        return Err(Error::Factorization(format!(
            "push-through cross-check failed: ‖ΔB‖_F = {b_gap:e}"
        )));
    }

    let outer = identity(d) + &sigma_z * &w * w.transpose();
    let outer_inv = outer
        .try_inverse()
        .ok_or_else(|| Error::Factorization("I + Σ_z·W·Wᵀ is singular".into()))?;
    let sigma_eps = symmetrize(
        &(identity(d) * spec.sigma_xi2 + a.transpose() * outer_inv * &sigma_z * &a),
    );
    let schur = symmetrize(&(&sigma_y - sigma_xy.transpose() * &b_regression));
    let eps_gap = rel_frobenius(&sigma_eps, &schur);
    if eps_gap > CROSSCHECK_TOL {
        return Err(Error::Factorization(format!(
            "Schur complement cross-check failed: relative gap {eps_gap:e}"
        )));
    }

    let (sigma_x_eigs, sigma_x_basis) = symmetric_eigen_desc(&sigma_x);
    Ok(PopulationModel {
        trace_sigma_eps: sigma_eps.trace(),
        a,
        w,
        sigma_z,
        sigma_x,
        sigma_y,
        sigma_xy,
        b,
        sigma_eps,
        sigma_x_eigs,
        sigma_x_basis,
    })
}

/// How a [`Dataset`] was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataMode {
    HmmSequence,
    IidGaussian,
    DirectLinear,
}

impl DataMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DataMode::HmmSequence => "hmm-sequence",
            DataMode::IidGaussian => "iid-gaussian",
            DataMode::DirectLinear => "direct-linear",
        }
    }
}

impl fmt::Display for DataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DataMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hmm-sequence" => Ok(DataMode::HmmSequence),
            "iid-gaussian" => Ok(DataMode::IidGaussian),
            "direct-linear" => Ok(DataMode::DirectLinear),
            other => Err(format!(
                "unknown mode {other:?} (expected hmm-sequence, iid-gaussian or direct-linear)"
            )),
        }
    }
}

/// Design matrix `X` (n×p) and targets `Y` (n×d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(with = "rows_serde")]
    pub x: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub y: DMatrix<f64>,
    pub n: usize,
    pub mode: DataMode,
    pub seed: u64,
}

impl Dataset {
    /// Long-format CSV with header `row,kind,col,value`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("row,kind,col,value\n");
        for (kind, m) in [("x", &self.x), ("y", &self.y)] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.push_str(&format!("{i},{kind},{j},{}\n", m[(i, j)]));
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn check_rows(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("n", "sample count must be at least 1"))
    } else {
        Ok(())
    }
}

/// One chain `z_0 … z_{n-1}` with `z_0 ~ N(0, I)`; also returns the states.
pub fn sample_sequence_with_states<R: Rng + ?Sized>(
    model: &PopulationModel,
    spec: &ModelSpec,
    n: usize,
    seed: u64,
    rng: &mut R,
) -> Result<(Dataset, DMatrix<f64>)> {
    check_rows(n)?;
    let (d, p) = (model.d(), model.p());
    if model.a.shape() != (d, d) || model.w.shape() != (d, p) {
        return Err(Error::DimensionMismatch {
            context: "sequence sampling needs the HMM matrices",
            expected: format!("A {d}×{d}, W {d}×{p}"),
            found: format!("A {:?}, W {:?}", model.a.shape(), model.w.shape()),
        });
    }
    let innovation = spec.sigma_eps2.sqrt();
    let xi = spec.sigma_xi2.sqrt();
    let mut states = DMatrix::zeros(n, d);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DMatrix::zeros(n, d);
    let mut z: RowDVector<f64> = gaussian_matrix(rng, 1, d).row(0).into_owned();
    for i in 0..n {
        if i > 0 {
            let eps = gaussian_matrix(rng, 1, d).row(0) * innovation;
            z = &z * &model.a + eps;
        }
        let u = gaussian_matrix(rng, 1, p);
        let noise = gaussian_matrix(rng, 1, d) * xi;
        states.set_row(i, &z);
        x.set_row(i, &(&z * &model.w + u.row(0)));
        y.set_row(i, &(&z * &model.a + noise.row(0)));
    }
    Ok((
        Dataset {
            x,
            y,
            n,
            mode: DataMode::HmmSequence,
            seed,
        },
        states,
    ))
}

pub fn sample_sequence<R: Rng + ?Sized>(
    model: &PopulationModel,
    spec: &ModelSpec,
    n: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Dataset> {
    sample_sequence_with_states(model, spec, n, seed, rng).map(|(data, _)| data)
}

/// Rows `x ~ N(0, Σ)` from a lower factor `L` of `Σ`.
pub(crate) fn gaussian_rows<R: Rng + ?Sized>(
    factor: Option<&DMatrix<f64>>,
    n: usize,
    dim: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, dim);
    match factor {
        Some(l) => g * l.transpose(),
        None => g,
    }
}

/// I.i.d. rows `x ~ N(0, Σ_x)`, `y = x·B + ε`, `ε ~ N(0, Σ_ε)`.
pub fn sample_iid_rows<R: Rng + ?Sized>(
    model: &PopulationModel,
    n: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Dataset> {
    check_rows(n)?;
    let lx = covariance_factor(&model.sigma_x)?;
    let le = covariance_factor(&model.sigma_eps)?;
    let x = gaussian_rows(Some(&lx), n, model.p(), rng);
    let noise = gaussian_rows(Some(&le), n, model.d(), rng);
    let y = &x * &model.b + noise;
    Ok(Dataset {
        x,
        y,
        n,
        mode: DataMode::IidGaussian,
        seed,
    })
}

/// I.i.d. rows `x ~ N(0, Σ_x)`, `y = x·B + ε` with isotropic noise
/// `ε ~ N(0, σ²·I_d)`. `σ² = 0` is accepted and gives `Y = X·B` exactly.
pub fn sample_direct_linear<R: Rng + ?Sized>(
    sigma_x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    noise_var: f64,
    n: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Dataset> {
    check_rows(n)?;
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid("noise variance", "must be non-negative and finite"));
    }
    let p = sigma_x.nrows();
    if sigma_x.ncols() != p || b.nrows() != p {
        return Err(Error::DimensionMismatch {
            context: "direct-linear sampling",
            expected: format!("Σ_x {p}×{p} and B with {p} rows"),
            found: format!("Σ_x {:?}, B {:?}", sigma_x.shape(), b.shape()),
        });
    }
    let factor = if *sigma_x == identity(p) {
        None
    } else {
        Some(covariance_factor(sigma_x)?)
    };
    let x = gaussian_rows(factor.as_ref(), n, p, rng);
    let noise = gaussian_matrix(rng, n, b.ncols()) * noise_var.sqrt();
    let y = &x * b + noise;
    Ok(Dataset {
        x,
        y,
        n,
        mode: DataMode::DirectLinear,
        seed,
    })
}

/// Diagnostic quantities of the spectral assumptions, flagged against a
/// user bound `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assumption1Report {
    pub s1: f64,
    pub inverse_eig_sum: f64,
    pub threshold_gap: f64,
    pub ratio: f64,
    pub bound: f64,
    pub s1_ok: bool,
    pub inverse_eig_sum_ok: bool,
    pub threshold_gap_ok: bool,
    pub ratio_ok: bool,
}

impl Assumption1Report {
    pub fn all_ok(&self) -> bool {
        self.s1_ok && self.inverse_eig_sum_ok && self.threshold_gap_ok && self.ratio_ok
    }
}

pub fn check_assumption1(eigs: &[f64], n: usize, bound: f64) -> Assumption1Report {
    let s1 = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inverse_eig_sum: f64 = eigs.iter().map(|s| 1.0 / s).sum();
    let ratio = eigs.len() as f64 / n as f64;
    let threshold_gap = (1.0 - ratio).abs();
    Assumption1Report {
        s1,
        inverse_eig_sum,
        threshold_gap,
        ratio,
        bound,
        s1_ok: s1 <= bound,
        inverse_eig_sum_ok: inverse_eig_sum <= bound,
        threshold_gap_ok: threshold_gap >= 1.0 / bound,
        ratio_ok: ratio >= 1.0 / bound && ratio <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn scalar_spec(a: f64, w: f64, position: Position) -> ModelSpec {
        ModelSpec {
            d: 1,
            p: 1,
            sigma_eps2: 1.0,
            sigma_xi2: 1.0,
            position,
            a_recipe: TransitionRecipe::Explicit {
                matrix: vec![vec![a]],
                rho: None,
            },
            w_recipe: RepresentationRecipe::Explicit {
                matrix: vec![vec![w]],
            },
            seed: 0,
        }
    }

    #[test]
    fn scalar_transition_rescaled_to_rho() {
        let a = build_transition_matrix(1, 0.5, &mut rng_from(1, &[])).unwrap();
        assert!((a[(0, 0)].abs() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn transition_spectral_radius_hits_target() {
        let a = build_transition_matrix(3, 0.9, &mut rng_from(7, &[])).unwrap();
        assert!((spectral_radius(&a) - 0.9).abs() <= 1e-6);
    }

    #[test]
    fn identity_draw_rescales_to_scaled_identity() {
        let a = rescale_to_spectral_radius(&identity(2), 0.3).unwrap();
        assert!(rel_frobenius(&a, &(identity(2) * 0.3)) < 1e-15);
    }

    #[test]
    fn nilpotent_draw_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            rescale_to_spectral_radius(&m, 0.5),
            Err(Error::Construction { .. })
        ));
    }

    #[test]
    fn sigma_z_zero_transition_is_identity() {
        let a = DMatrix::zeros(3, 3);
        for pos in [Position::Index(0), Position::Index(4), Position::Stationary] {
            assert_eq!(sigma_z(&a, pos, 1.0).unwrap(), identity(3));
        }
    }

    #[test]
    fn sigma_z_scalar_index_two() {
        let a = DMatrix::from_element(1, 1, 0.7);
        let s = sigma_z(&a, Position::Index(2), 1.0).unwrap();
        let expected = 1.0 + 0.7f64.powi(2) + 0.7f64.powi(4);
        assert!((s[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn sigma_z_stationary_geometric_series() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let s = sigma_z(&a, Position::Stationary, 1.0).unwrap();
        // oracle: Σ_{j≥0} 0.25^j
        let oracle: f64 = (0..200).map(|j| 0.25f64.powi(j)).sum();
        assert!((s[(0, 0)] - oracle).abs() < 1e-11);
        assert!((s[(0, 0)] - 4.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn sigma_z_stationary_diverges_outside_unit_disc() {
        let a = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            sigma_z(&a, Position::Stationary, 1.0),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn sigma_z_is_monotone_in_position() {
        let a = build_transition_matrix(4, 0.8, &mut rng_from(11, &[])).unwrap();
        for i in 0..6 {
            let lo = sigma_z(&a, Position::Index(i), 1.0).unwrap();
            let hi = sigma_z(&a, Position::Index(i + 1), 1.0).unwrap();
            let (vals, _) = symmetric_eigen_desc(&(hi - lo));
            assert!(vals.last().unwrap() >= &-1e-12);
        }
    }

    #[test]
    fn zero_representation_carries_no_signal() {
        let mut spec = ModelSpec::gaussian(3, 5, 0.6, 0.4, 9);
        spec.w_recipe = RepresentationRecipe::Zero;
        let m = build_population_model(&spec).unwrap();
        assert_eq!(m.sigma_x, identity(5));
        assert!(m.b.norm() < 1e-15);
        let expected = m.a.transpose() * &m.sigma_z * &m.a + identity(3) * 0.4;
        assert!(rel_frobenius(&m.sigma_eps, &expected) < 1e-12);
        assert!(rel_frobenius(&m.sigma_y, &expected) < 1e-12);
    }

    #[test]
    fn zero_transition_is_pure_noise() {
        let mut spec = ModelSpec::gaussian(2, 4, 0.6, 0.3, 9);
        spec.a_recipe = TransitionRecipe::Zero;
        let m = build_population_model(&spec).unwrap();
        assert!(m.b.norm() < 1e-15);
        assert!(rel_frobenius(&m.sigma_eps, &(identity(2) * 0.3)) < 1e-14);
        assert!(rel_frobenius(&m.sigma_y, &(identity(2) * 0.3)) < 1e-14);
    }

    #[test]
    fn scalar_model_matches_hand_regression() {
        let (a, w) = (0.6, 1.3);
        let m = build_population_model(&scalar_spec(a, w, Position::Index(1))).unwrap();
        // oracle: 1-D regression of y = z·a + ξ on x = z·w + u with Var z = 1 + a²
        let vz = 1.0 + a * a;
        let vx = w * w * vz + 1.0;
        let cov_xy = w * vz * a;
        assert!((m.sigma_z[(0, 0)] - vz).abs() < 1e-14);
        assert!((m.sigma_x[(0, 0)] - vx).abs() < 1e-14);
        assert!((m.b[(0, 0)] - cov_xy / vx).abs() < 1e-14);
        assert!((m.b[(0, 0)] - w * vz * a / (1.0 + w * w * vz)).abs() < 1e-14);
        let vy = a * a * vz + 1.0;
        assert!((m.sigma_eps[(0, 0)] - (vy - cov_xy * cov_xy / vx)).abs() < 1e-13);
    }

    #[test]
    fn population_invariants_on_random_models() {
        for seed in 0..8 {
            let spec = ModelSpec::gaussian(4, 7, 0.85, 0.5, seed);
            let m = build_population_model(&spec).unwrap();
            let regression = spd_solve(&m.sigma_x, &m.sigma_xy).unwrap();
            assert!((&m.b - &regression).norm() <= 1e-8 * (1.0 + m.b.norm()));
            let schur = &m.sigma_y - m.sigma_xy.transpose() * &regression;
            assert!(rel_frobenius(&m.sigma_eps, &schur) < 1e-8);
            let (eps_eigs, _) = symmetric_eigen_desc(&m.sigma_eps);
            assert!(*eps_eigs.last().unwrap() >= -1e-10);
            assert!(*m.sigma_x_eigs.last().unwrap() >= 1.0 - 1e-10);
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(m.sigma_x_eigs.clone()));
            let rebuilt = &m.sigma_x_basis * d * m.sigma_x_basis.transpose();
            assert!(rel_frobenius(&rebuilt, &m.sigma_x) < 1e-10);
            assert!((m.trace_sigma_eps - m.sigma_eps.trace()).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_in_explicit_recipe() {
        let mut spec = scalar_spec(0.5, 1.0, Position::Stationary);
        spec.p = 2;
        assert!(matches!(
            build_population_model(&spec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spec_validation_rejects_bad_fields() {
        let mut spec = ModelSpec::gaussian(2, 3, 0.5, 1.0, 0);
        spec.sigma_xi2 = 0.0;
        assert!(spec.validate().is_err());
        let spec = ModelSpec::gaussian(2, 3, 1.0, 1.0, 0);
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::gaussian(2, 3, 0.5, 1.0, 0);
        spec.d = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_field_names() {
        let spec = ModelSpec::gaussian(2, 3, 0.5, 1.0, 42);
        let v: serde_json::Value = serde_json::from_str(&spec.to_json().unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        for k in ["d", "p", "sigma_eps2", "sigma_xi2", "position", "a_recipe", "w_recipe", "seed"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(obj["position"], "stationary");
        let mut indexed = spec.clone();
        indexed.position = Position::Index(3);
        let back = ModelSpec::from_json(&indexed.to_json().unwrap()).unwrap();
        assert_eq!(back, indexed);
        assert!(ModelSpec::from_json(r#"{"d":1,"p":1,"sigma_xi2":1,"position":"later","a_recipe":{"kind":"zero"},"w_recipe":{"kind":"zero"},"seed":0}"#).is_err());
    }

    #[test]
    fn sequence_without_coupling_is_white_noise() {
        let mut spec = ModelSpec::gaussian(2, 3, 0.5, 0.25, 5);
        spec.a_recipe = TransitionRecipe::Zero;
        spec.w_recipe = RepresentationRecipe::Zero;
        let m = build_population_model(&spec).unwrap();
        let data = sample_sequence(&m, &spec, 4000, 5, &mut rng_from(5, &[])).unwrap();
        let xx = data.x.transpose() * &data.x / 4000.0;
        let yy = data.y.transpose() * &data.y / 4000.0;
        assert!((xx - identity(3)).norm() < 0.15);
        assert!((yy - identity(2) * 0.25).norm() < 0.04);
        assert_eq!(data.mode, DataMode::HmmSequence);
    }

    #[test]
    fn sequence_is_deterministic() {
        let spec = ModelSpec::gaussian(3, 4, 0.7, 0.5, 3);
        let m = build_population_model(&spec).unwrap();
        let a = sample_sequence(&m, &spec, 50, 1, &mut rng_from(1, &[])).unwrap();
        let b = sample_sequence(&m, &spec, 50, 1, &mut rng_from(1, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_end_variance_matches_stationary() {
        for innovation in [1.0, 2.0] {
            let mut spec = scalar_spec(0.5, 1.0, Position::Stationary);
            spec.sigma_eps2 = innovation;
            let m = build_population_model(&spec).unwrap();
            let reps = 10_000;
            let mut rng = rng_from(99, &[]);
            let ends: Vec<f64> = (0..reps)
                .map(|_| {
                    let (_, z) =
                        sample_sequence_with_states(&m, &spec, 40, 0, &mut rng).unwrap();
                    z[(39, 0)]
                })
                .collect();
            let var = ends.iter().map(|v| v * v).sum::<f64>() / reps as f64;
            // oracle: σ_ε²·Σ a^{2j}
            let target = innovation * 4.0 / 3.0;
            let se = target * (2.0 / reps as f64).sqrt();
            assert!((var - target).abs() < 3.0 * se, "var {var} target {target}");
            assert!((m.sigma_z[(0, 0)] - target).abs() < 1e-11);
        }
    }

    #[test]
    fn iid_rows_match_population_covariance() {
        let spec = ModelSpec::gaussian(3, 4, 0.8, 0.5, 21);
        let m = build_population_model(&spec).unwrap();
        let n = 5000;
        let data = sample_iid_rows(&m, n, 21, &mut rng_from(21, &[])).unwrap();
        let emp = data.x.transpose() * &data.x / n as f64;
        assert!((emp - &m.sigma_x).norm() <= 5.0 * 4.0 / (n as f64).sqrt() * m.sigma_x_eigs[0]);
        assert_eq!(data.mode, DataMode::IidGaussian);
    }

    #[test]
    fn iid_rows_entrywise_within_four_standard_errors() {
        let spec = ModelSpec::gaussian(3, 6, 0.7, 0.5, 4);
        let m = build_population_model(&spec).unwrap();
        let n = 20_000;
        let data = sample_iid_rows(&m, n, 4, &mut rng_from(4, &[])).unwrap();
        let emp = data.x.transpose() * &data.x / n as f64;
        let s = &m.sigma_x;
        for i in 0..6 {
            for j in 0..6 {
                // Var(x_i x_j) = Σ_ii Σ_jj + Σ_ij² for jointly Gaussian pairs
                let se = ((s[(i, i)] * s[(j, j)] + s[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((emp[(i, j)] - s[(i, j)]).abs() < 4.0 * se);
            }
        }
    }

    #[test]
    fn direct_linear_noiseless_is_exact() {
        let b = gaussian_matrix(&mut rng_from(2, &[]), 5, 3);
        let data =
            sample_direct_linear(&identity(5), &b, 0.0, 20, 2, &mut rng_from(2, &[1])).unwrap();
        assert!((&data.x * &b - &data.y).norm() == 0.0);
        assert_eq!(data.mode, DataMode::DirectLinear);
        let again =
            sample_direct_linear(&identity(5), &b, 0.0, 20, 2, &mut rng_from(2, &[1])).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn direct_linear_noise_trace() {
        let m = PopulationModel::from_regression(identity(4), identity(4), identity(4) * 0.5)
            .unwrap();
        assert!((m.trace_sigma_eps - 2.0).abs() < 1e-15);
    }

    #[test]
    fn assumption_diagnostics() {
        let r = check_assumption1(&vec![1.0; 100], 200, 10.0);
        assert_eq!((r.s1, r.inverse_eig_sum, r.threshold_gap, r.ratio), (1.0, 100.0, 0.5, 0.5));
        for bound in [2.0, 1e3, 1e9] {
            assert!(!check_assumption1(&vec![1.0; 50], 50, bound).threshold_gap_ok);
        }
        let r = check_assumption1(&[3.0, 0.5], 10, 10.0);
        assert_eq!(r.s1, 3.0);
        assert!((r.inverse_eig_sum - (1.0 / 3.0 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn dataset_csv_is_long_format() {
        let data = Dataset {
            x: DMatrix::from_row_slice(1, 2, &[1.0, 2.5]),
            y: DMatrix::from_row_slice(1, 1, &[-3.0]),
            n: 1,
            mode: DataMode::DirectLinear,
            seed: 0,
        };
        assert_eq!(
            data.to_csv_string(),
            "row,kind,col,value\n0,x,0,1\n0,x,1,2.5\n0,y,0,-3\n"
        );
    }
}
