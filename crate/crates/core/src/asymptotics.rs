//! Deterministic equivalents of the bias and variance of min-norm and ridge
//! least squares in terms of the spectrum of `Σ_x`.
//!
//! All spectral sums are averages over the `p` eigenvalues. The ridge fixed
//! point is solved in the rescaled unknown `r = (1 − γ + γλm)/λ`, which stays
//! O(1) as λ → 0 where `m` itself blows up like `1/λ`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{fmt_f64, nullable_f64, parse_f64};
use crate::population::PopulationModel;

/// Residual tolerance for accepted fixed points.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Half-width of the excluded band around γ = 1.
pub const THRESHOLD_BAND: f64 = 1e-3;
const MAX_DOUBLINGS: usize = 200;
const MAX_ITERATIONS: usize = 10_000;

/// Spectrum of `Σ_x` with the energy of `B` along each eigendirection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumContext {
    pub eigs: Vec<f64>,
    pub gamma: f64,
    pub trace_sigma_eps: f64,
    /// `‖u_iᵀB‖²` for each eigenvector `u_i`, aligned with `eigs`.
    pub b_energy: Vec<f64>,
}

impl SpectrumContext {
    pub fn new(eigs: Vec<f64>, gamma: f64, trace_sigma_eps: f64, b_energy: Vec<f64>) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::invalid("eigs", "spectrum is empty"));
        }
        if let Some(s) = eigs.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid("eigs", format!("eigenvalue {s} is not strictly positive")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid("gamma", format!("{gamma} must be positive")));
        }
        if !(trace_sigma_eps.is_finite() && trace_sigma_eps >= 0.0) {
            return Err(Error::invalid("trace_sigma_eps", "must be finite and nonnegative"));
        }
        if b_energy.len() != eigs.len() {
            return Err(Error::DimensionMismatch {
                context: "B energy vs spectrum",
                expected: eigs.len().to_string(),
                found: b_energy.len().to_string(),
            });
        }
        if b_energy.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("b_energy", "entries must be finite and nonnegative"));
        }
        let mut pairs: Vec<(f64, f64)> = eigs.into_iter().zip(b_energy).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (eigs, b_energy) = pairs.into_iter().unzip();
        Ok(SpectrumContext { eigs, gamma, trace_sigma_eps, b_energy })
    }

    /// `Σ_x = σ²·I_p` with `‖B‖²_F` spread evenly.
    pub fn isotropic(p: usize, sigma2: f64, gamma: f64, trace_sigma_eps: f64, b_norm2: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("p", "must be positive"));
        }
        SpectrumContext::new(vec![sigma2; p], gamma, trace_sigma_eps, vec![b_norm2 / p as f64; p])
    }

    /// Uses `n` to set `γ = p/n`.
    pub fn from_model(model: &PopulationModel, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        SpectrumContext::new(
            model.sigma_x_eigs.clone(),
            model.p() as f64 / n as f64,
            model.trace_sigma_eps,
            model.b_energy(),
        )
    }

    pub fn p(&self) -> usize {
        self.eigs.len()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        SpectrumContext::new(self.eigs.clone(), gamma, self.trace_sigma_eps, self.b_energy.clone())
    }

    fn mean(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.eigs.iter().map(|&s| f(s)).sum::<f64>() / self.p() as f64
    }

    fn weighted(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.eigs.iter().zip(&self.b_energy).map(|(&s, w)| w * f(s)).sum()
    }

    fn require_overparametrized(&self) -> Result<()> {
        if self.gamma > 1.0 {
            Ok(())
        } else {
            Err(Error::invalid("gamma", format!("{} must exceed 1", self.gamma)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// Root of an increasing `f` with `f(lo) < 0`, expanding `hi` by doubling.
fn increasing_root(
    what: &'static str,
    f: impl Fn(f64) -> f64,
    lo: f64,
    start: f64,
) -> Result<(f64, f64, usize, (f64, f64))> {
    let mut hi = start;
    let mut doublings = 0;
    while f(hi) <= 0.0 {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::BracketExpansion { what, doublings });
        }
        hi *= 2.0;
        doublings += 1;
    }
    let bracket = (lo, hi);
    let (mut a, mut b) = bracket;
    let mut iterations = 0;
    let mut best = (b, f(b));
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let v = f(mid);
        if v.abs() < best.1.abs() {
            best = (mid, v);
        }
        if v == 0.0 {
            break;
        }
        if v < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    if !(best.1.abs() <= RESIDUAL_TOL) {
        return Err(Error::NoConvergence { what, residual: best.1, iterations });
    }
    Ok((best.0, best.1, iterations, bracket))
}

/// Residual of the ridgeless fixed point, `(1 − 1/γ) − mean 1/(1 + cγs)`.
pub fn c0_residual(c0: f64, ctx: &SpectrumContext) -> f64 {
    let g = ctx.gamma;
    (1.0 - 1.0 / g) - ctx.mean(|s| 1.0 / (1.0 + c0 * g * s))
}

/// Solves `mean 1/(1 + c₀γs) = 1 − 1/γ` for `c₀ ≥ 0`.
pub fn solve_c0(ctx: &SpectrumContext) -> Result<FixedPointSolution> {
    ctx.require_overparametrized()?;
    let scale = ctx.mean(|s| s);
    let (value, residual, iterations, bracket) =
        increasing_root("c0", |c| c0_residual(c, ctx), 0.0, 1.0 / (ctx.gamma * scale))?;
    Ok(FixedPointSolution { value, residual, iterations, bracket })
}

/// `(c₀, mean s²/(1+γc₀s)² / mean s/(1+γc₀s)²)`.
fn c0_and_ratio(ctx: &SpectrumContext) -> Result<(f64, f64)> {
    let c0 = solve_c0(ctx)?.value;
    let k = c0 * ctx.gamma;
    let num = ctx.mean(|s| s * s / (1.0 + k * s).powi(2));
    let den = ctx.mean(|s| s / (1.0 + k * s).powi(2));
    Ok((c0, num / den))
}

/// Ridgeless bias for `γ > 1`.
pub fn asymptotic_bias(ctx: &SpectrumContext) -> Result<f64> {
    let (c0, ratio) = c0_and_ratio(ctx)?;
    let k = c0 * ctx.gamma;
    Ok((1.0 + k * ratio) * ctx.weighted(|s| s / (1.0 + k * s).powi(2)))
}

/// Ridgeless variance for `γ > 1`.
pub fn asymptotic_variance(ctx: &SpectrumContext) -> Result<f64> {
    let (c0, ratio) = c0_and_ratio(ctx)?;
    Ok(ctx.trace_sigma_eps * ctx.gamma * c0 * ratio)
}

/// Risk for `γ < 1`, where the bias vanishes: `Tr(Σ_ε)·γ/(1 − γ)`.
pub fn underparam_risk(gamma: f64, trace_sigma_eps: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("gamma", format!("{gamma} must lie in (0, 1)")));
    }
    Ok(trace_sigma_eps * gamma / (1.0 - gamma))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("lambda", format!("{lambda} must be positive")))
    }
}

/// Ridge fixed point in the rescaled unknown `r`.
#[derive(Debug, Clone, Copy)]
struct RidgePoint {
    lambda: f64,
    r: f64,
    m: f64,
    residual: f64,
    iterations: usize,
    bracket: (f64, f64),
}

fn solve_r(lambda: f64, ctx: &SpectrumContext) -> Result<RidgePoint> {
    check_lambda(lambda)?;
    let g = ctx.gamma;
    let h = |r: f64| lambda * r + g * ctx.mean(|s| s * r / (1.0 + s * r)) - 1.0;
    let (r, residual, iterations, bracket) = increasing_root("m_n", h, 0.0, 1.0)?;
    let m = ctx.mean(|s| 1.0 / (1.0 + r * s)) / lambda;
    Ok(RidgePoint { lambda, r, m, residual, iterations, bracket })
}

/// Relative residual of the ridge fixed point at `m`,
/// `(m − mean 1/((1 − γ + γλm)s + λ))/m`.
///
/// Near λ → 0 with large γ this form loses digits, since `1 − γ + γλm` is a
/// small difference of O(γ) terms.
pub fn mn_residual(m: f64, lambda: f64, ctx: &SpectrumContext) -> f64 {
    let g = ctx.gamma;
    let a = (g * lambda).mul_add(m, 1.0 - g);
    (m - ctx.mean(|s| 1.0 / a.mul_add(s, lambda))) / m
}

/// Solves for `m = m_n(−λ) > 0`. The reported residual is that of the
/// rescaled equation `λr + γ·mean rs/(1 + rs) = 1` actually solved.
pub fn solve_mn(lambda: f64, ctx: &SpectrumContext) -> Result<FixedPointSolution> {
    let pt = solve_r(lambda, ctx)?;
    Ok(FixedPointSolution { value: pt.m, residual: pt.residual, iterations: pt.iterations, bracket: pt.bracket })
}

fn derivative_at(pt: &RidgePoint, ctx: &SpectrumContext) -> Result<f64> {
    let (g, l, r, m) = (ctx.gamma, pt.lambda, pt.r, pt.m);
    let dm = 1.0 + g / l * ctx.mean(|s| s / (1.0 + r * s).powi(2));
    if !(dm.abs() >= 1e-12) {
        return Err(Error::NearSingular { what: "m_n derivative denominator", value: dm });
    }
    let dl = ctx.mean(|s| (g * m * s + 1.0) / (1.0 + r * s).powi(2)) / (l * l);
    Ok(dl / dm)
}

/// `m_n′(−λ)` by implicit differentiation of the fixed-point equation.
pub fn mn_derivative(lambda: f64, ctx: &SpectrumContext) -> Result<f64> {
    derivative_at(&solve_r(lambda, ctx)?, ctx)
}

fn mn1_at(pt: &RidgePoint, ctx: &SpectrumContext) -> Result<f64> {
    let (g, l, r) = (ctx.gamma, pt.lambda, pt.r);
    let tail = ctx.mean(|s| s / (1.0 + r * s).powi(2));
    let den = 1.0 + g / l * tail;
    if !(den.abs() >= 1e-12) {
        return Err(Error::NearSingular { what: "m_n,1 denominator", value: den });
    }
    Ok(r * ctx.mean(|s| s * s / (1.0 + r * s).powi(2)) / (l + g * tail))
}

/// `m_{n,1}(−λ)`.
pub fn mn1(lambda: f64, ctx: &SpectrumContext) -> Result<f64> {
    mn1_at(&solve_r(lambda, ctx)?, ctx)
}

/// Ridge bias `λ²(1 + γm₁)·Tr(Bᵀ(λI + aΣ_x)⁻²Σ_xB)` with `a = 1 − γ + γλm`.
pub fn ridge_asymptotic_bias(lambda: f64, ctx: &SpectrumContext) -> Result<f64> {
    let pt = solve_r(lambda, ctx)?;
    let m1 = mn1_at(&pt, ctx)?;
    // λ + a·s = λ(1 + r·s)
    Ok((1.0 + ctx.gamma * m1) * ctx.weighted(|s| s / (1.0 + pt.r * s).powi(2)))
}

/// Ridge variance `Tr(Σ_ε)·γ·mean s²(1 − γ + γλ²m′)/(λ + a·s)²`.
pub fn ridge_asymptotic_variance(lambda: f64, ctx: &SpectrumContext) -> Result<f64> {
    let pt = solve_r(lambda, ctx)?;
    let dm = derivative_at(&pt, ctx)?;
    let g = ctx.gamma;
    let q = 1.0 - g + g * lambda * lambda * dm;
    let sum = ctx.mean(|s| s * s * q / (lambda * (1.0 + pt.r * s)).powi(2));
    Ok((ctx.trace_sigma_eps * g * sum).max(0.0))
}

/// Which side of the interpolation threshold a curve point sits on.
pub fn is_threshold(gamma: f64) -> bool {
    (gamma - 1.0).abs() < THRESHOLD_BAND
}

/// One point of a theoretical risk curve. Threshold rows carry `inf` risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub gamma: f64,
    #[serde(with = "nullable_f64")]
    pub bias: f64,
    #[serde(with = "nullable_f64")]
    pub variance: f64,
    #[serde(with = "nullable_f64")]
    pub risk: f64,
    pub tag: String,
}

/// Theory for min-norm least squares at one γ.
pub fn ridgeless_point(ctx: &SpectrumContext) -> Result<CurveRow> {
    let g = ctx.gamma;
    let (bias, variance, tag) = if is_threshold(g) {
        (f64::NAN, f64::INFINITY, "threshold")
    } else if g < 1.0 {
        (0.0, underparam_risk(g, ctx.trace_sigma_eps)?, "")
    } else {
        (asymptotic_bias(ctx)?, asymptotic_variance(ctx)?, "")
    };
    Ok(CurveRow { gamma: g, bias, variance, risk: bias_plus(bias, variance), tag: tag.into() })
}

fn bias_plus(bias: f64, variance: f64) -> f64 {
    if variance.is_infinite() {
        f64::INFINITY
    } else {
        bias + variance
    }
}

/// Theory for ridge at one γ; defined on both sides of the threshold.
pub fn ridge_point(lambda: f64, ctx: &SpectrumContext) -> Result<CurveRow> {
    let bias = ridge_asymptotic_bias(lambda, ctx)?;
    let variance = ridge_asymptotic_variance(lambda, ctx)?;
    Ok(CurveRow { gamma: ctx.gamma, bias, variance, risk: bias + variance, tag: String::new() })
}

/// Ridgeless risk curve for a fixed spectrum over a grid of γ.
pub fn theoretical_risk_curve(base: &SpectrumContext, gamma_grid: &[f64]) -> Result<Vec<CurveRow>> {
    gamma_grid.iter().map(|&g| ridgeless_point(&base.with_gamma(g)?)).collect()
}

/// Ridge risk curve for a fixed spectrum over a grid of γ.
pub fn ridge_risk_curve(base: &SpectrumContext, lambda: f64, gamma_grid: &[f64]) -> Result<Vec<CurveRow>> {
    gamma_grid.iter().map(|&g| ridge_point(lambda, &base.with_gamma(g)?)).collect()
}

pub const CURVE_HEADER: &str = "gamma,bias,variance,risk,tag";

pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.gamma),
            fmt_f64(r.bias),
            fmt_f64(r.variance),
            fmt_f64(r.risk),
            r.tag
        );
    }
    out
}

pub fn curve_from_csv(text: &str) -> Result<Vec<CurveRow>> {
    let bad = |reason: String| Error::Format { path: "<curve>".into(), reason };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CURVE_HEADER => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(format!("line {}: expected 5 fields", i + 2)));
            }
            let num = |k: usize| parse_f64(f[k]).ok_or_else(|| bad(format!("line {}: bad number {:?}", i + 2, f[k])));
            Ok(CurveRow { gamma: num(0)?, bias: num(1)?, variance: num(2)?, risk: num(3)?, tag: f[4].trim().into() })
        })
        .collect()
}

pub fn write_curve_csv(rows: &[CurveRow], path: &Path) -> Result<()> {
    std::fs::write(path, curve_to_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn write_curve_json(rows: &[CurveRow], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(rows)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    fn iso(gamma: f64) -> SpectrumContext {
        SpectrumContext::isotropic(10, 1.0, gamma, 1.0, 1.0).unwrap()
    }

    fn random_ctx(seed: u64, p: usize, gamma: f64) -> SpectrumContext {
        let mut rng = rng_from(seed, &[]);
        let eigs: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..3.0)).collect();
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0) / p as f64).collect();
        SpectrumContext::new(eigs, gamma, 1.3, w).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    // positive root of γλm² + (λ + 1 − γ)m − 1 = 0
    fn iso_m(gamma: f64, lambda: f64) -> f64 {
        let (a, b) = (gamma * lambda, lambda + 1.0 - gamma);
        (-b + (b * b + 4.0 * a).sqrt()) / (2.0 * a)
    }

    #[test]
    fn context_validation() {
        assert!(SpectrumContext::new(vec![1.0, 0.0], 2.0, 1.0, vec![0.0; 2]).is_err());
        assert!(SpectrumContext::new(vec![1.0], 0.0, 1.0, vec![0.0]).is_err());
        assert!(SpectrumContext::new(vec![1.0], 2.0, 1.0, vec![0.0; 2]).is_err());
        let c = SpectrumContext::new(vec![1.0, 3.0], 2.0, 1.0, vec![0.1, 0.2]).unwrap();
        assert_eq!(c.eigs, vec![3.0, 1.0]);
        assert_eq!(c.b_energy, vec![0.2, 0.1]);
    }

    #[test]
    fn c0_isotropic_closed_form() {
        assert!(rel(solve_c0(&iso(2.0)).unwrap().value, 0.5) < 1e-10);
        assert!(rel(solve_c0(&iso(4.0)).unwrap().value, 1.0 / 12.0) < 1e-10);
        for g in [1.01, 1.5, 3.0, 10.0, 100.0] {
            for s2 in [0.5, 2.0] {
                let c = SpectrumContext::isotropic(5, s2, g, 1.0, 1.0).unwrap();
                assert!(rel(solve_c0(&c).unwrap().value, 1.0 / (g * (g - 1.0) * s2)) < 1e-8);
            }
        }
        assert!(solve_c0(&iso(1.0)).is_err());
        assert!(solve_c0(&iso(0.5)).is_err());
    }

    #[test]
    fn c0_scales_inversely_with_spectrum() {
        let c = random_ctx(1, 30, 2.5);
        let mut scaled = c.clone();
        scaled.eigs.iter_mut().for_each(|s| *s *= 2.0);
        let a = solve_c0(&c).unwrap().value;
        let b = solve_c0(&scaled).unwrap().value;
        assert!(rel(b, a / 2.0) < 1e-9);
    }

    #[test]
    fn c0_residual_decreasing_on_grid() {
        for seed in 0..10 {
            let c = random_ctx(seed, 20, 1.7);
            let vals: Vec<f64> = (0..100).map(|k| -c0_residual(k as f64 * 0.05, &c)).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn c0_residual_contract_on_random_spectra() {
        for seed in 0..100 {
            let c = random_ctx(seed, 5 + (seed as usize % 40), 1.05 + seed as f64 * 0.05);
            let sol = solve_c0(&c).unwrap();
            assert!(sol.value >= 0.0);
            assert!(c0_residual(sol.value, &c).abs() <= RESIDUAL_TOL);
        }
    }

    #[test]
    fn ridgeless_isotropic_closed_forms() {
        for g in [1.2, 2.0, 5.0, 20.0] {
            let c = SpectrumContext::isotropic(7, 1.0, g, 2.0, 3.0).unwrap();
            assert!(rel(asymptotic_variance(&c).unwrap(), 2.0 / (g - 1.0)) < 1e-8);
            assert!(rel(asymptotic_bias(&c).unwrap(), 3.0 * (1.0 - 1.0 / g)) < 1e-8);
        }
        let c = SpectrumContext::isotropic(7, 1.0, 5.0, 2.0, 1.0).unwrap();
        assert!(rel(asymptotic_variance(&c).unwrap(), 0.5) < 1e-10);
        let zero = SpectrumContext::isotropic(7, 1.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(asymptotic_bias(&zero).unwrap(), 0.0);
    }

    #[test]
    fn bias_approaches_null_risk() {
        let b: Vec<f64> = [4.0, 16.0, 64.0]
            .iter()
            .map(|&g| asymptotic_bias(&iso(g)).unwrap())
            .collect();
        assert!(b[0] < b[1] && b[1] < b[2] && b[2] < 1.0);
    }

    #[test]
    fn variance_linear_in_noise() {
        let c = random_ctx(3, 20, 2.0);
        let mut d = c.clone();
        d.trace_sigma_eps *= 2.0;
        assert!(rel(asymptotic_variance(&d).unwrap(), 2.0 * asymptotic_variance(&c).unwrap()) < 1e-14);
        assert!(rel(ridge_asymptotic_variance(0.1, &d).unwrap(), 2.0 * ridge_asymptotic_variance(0.1, &c).unwrap()) < 1e-12);
    }

    #[test]
    fn underparam_values() {
        assert!((underparam_risk(0.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((underparam_risk(0.9, 2.0).unwrap() - 18.0).abs() < 1e-12);
        assert!(underparam_risk(1e-9, 1.0).unwrap() < 1e-8);
        assert!(underparam_risk(1.0, 1.0).is_err());
    }

    #[test]
    fn mn_quadratic_oracle() {
        let sol = solve_mn(1.0, &iso(2.0)).unwrap();
        assert!(rel(sol.value, 1.0 / 2f64.sqrt()) < 1e-12);
        for g in [0.3, 0.9, 1.0, 1.5, 4.0] {
            for l in [1e-3, 0.1, 1.0, 10.0] {
                let sol = solve_mn(l, &iso(g)).unwrap();
                assert!(rel(sol.value, iso_m(g, l)) < 1e-9, "γ={g} λ={l}");
                assert!(sol.residual.abs() <= RESIDUAL_TOL);
            }
        }
    }

    #[test]
    fn mn_large_lambda_decay() {
        let m = solve_mn(1e6, &random_ctx(4, 15, 2.0)).unwrap().value;
        assert!((0.9..=1.1).contains(&(m * 1e6)));
        assert!(solve_mn(0.0, &iso(2.0)).is_err());
        assert!(solve_mn(-1.0, &iso(2.0)).is_err());
    }

    #[test]
    fn mn_small_lambda_expansion() {
        let c = iso(2.0);
        let gaps: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&l| (solve_mn(l, &c).unwrap().value - 0.5 / l - 0.5).abs())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[2] <= 1e-3);
    }

    #[test]
    fn mn_residual_independent_check() {
        for seed in 0..20 {
            let c = random_ctx(seed, 25, 0.5 + 0.2 * seed as f64);
            for l in [1e-4, 1e-2, 1.0, 100.0] {
                let m = solve_mn(l, &c).unwrap().value;
                assert!(m > 0.0);
                assert!(mn_residual(m, l, &c).abs() <= RESIDUAL_TOL);
            }
        }
    }

    #[test]
    fn derivative_matches_quadratic_oracle() {
        // differentiate γλm² + (λ + 1 − γ)m − 1 = 0 in λ: m_λ = −(γm² + m)/(2γλm + λ + 1 − γ)
        let (g, l) = (2.0, 1.0);
        let m = iso_m(g, l);
        let m_lambda = -(g * m * m + m) / (2.0 * g * l * m + l + 1.0 - g);
        assert!(rel(mn_derivative(l, &iso(g)).unwrap(), -m_lambda) < 1e-10);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for seed in 0..20 {
            let c = random_ctx(100 + seed, 30, 0.4 + 0.15 * seed as f64);
            for l in [0.05, 0.5, 3.0] {
                let h = 1e-6 * f64::max(l, 1.0);
                let fd = (solve_mn(l - h, &c).unwrap().value - solve_mn(l + h, &c).unwrap().value) / (2.0 * h);
                let d = mn_derivative(l, &c).unwrap();
                assert!(d > 0.0);
                assert!(rel(d, fd) <= 1e-6, "seed {seed} λ={l}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn mn1_limits() {
        let c = iso(2.0);
        let gaps: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&l| (mn1(l, &c).unwrap() - 0.5).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]) && gaps[2] < 1e-3, "{gaps:?}");
        assert!(mn1(1e6, &random_ctx(5, 10, 2.0)).unwrap().abs() <= 1e-3);
    }

    #[test]
    fn mn1_matches_literal_formula() {
        let c = random_ctx(6, 12, 1.8);
        let l = 0.3;
        let m = solve_mn(l, &c).unwrap().value;
        let g = c.gamma;
        let a = 1.0 - g + g * l * m;
        let num = c.mean(|s| a * s * s / (a * s + l).powi(2));
        let den = 1.0 + g * c.mean(|s| l * s / (a * s + l).powi(2));
        assert!(rel(mn1(l, &c).unwrap(), num / den) < 1e-10);
    }

    #[test]
    fn ridge_variance_equals_trace_gamma_mn1() {
        for seed in 0..10 {
            let c = random_ctx(200 + seed, 20, 0.3 + 0.3 * seed as f64);
            for l in [1e-3, 0.1, 2.0] {
                let v = ridge_asymptotic_variance(l, &c).unwrap();
                let alt = c.trace_sigma_eps * c.gamma * mn1(l, &c).unwrap();
                assert!(rel(v, alt) < 1e-6, "{v} vs {alt}");
            }
        }
    }

    #[test]
    fn ridge_tends_to_ridgeless() {
        for c in [iso(2.0), random_ctx(7, 40, 2.5)] {
            let (b0, v0) = (asymptotic_bias(&c).unwrap(), asymptotic_variance(&c).unwrap());
            let gaps: Vec<(f64, f64)> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&l| {
                    (
                        (ridge_asymptotic_bias(l, &c).unwrap() - b0).abs(),
                        (ridge_asymptotic_variance(l, &c).unwrap() - v0).abs(),
                    )
                })
                .collect();
            assert!(gaps.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1), "{gaps:?}");
        }
        let under = SpectrumContext::isotropic(10, 1.0, 0.5, 1.0, 1.0).unwrap();
        assert!(ridge_asymptotic_bias(1e-6, &under).unwrap() < 1e-5);
        assert!(rel(ridge_asymptotic_variance(1e-6, &under).unwrap(), 1.0) < 1e-4);
    }

    #[test]
    fn ridge_edge_cases() {
        let zero = SpectrumContext::isotropic(10, 1.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(ridge_asymptotic_bias(0.1, &zero).unwrap(), 0.0);
        assert!(ridge_asymptotic_variance(1e6, &iso(2.0)).unwrap() <= 1e-6);
    }

    #[test]
    fn curve_rows() {
        let rows = theoretical_risk_curve(&iso(1.0), &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!((rows[0].bias, rows[0].variance, rows[0].risk), (0.0, 1.0, 1.0));
        assert_eq!(rows[1].tag, "threshold");
        assert!(rows[1].risk.is_infinite());
        assert!((rows[2].bias - 0.5).abs() < 1e-9 && (rows[2].variance - 1.0).abs() < 1e-9);
        assert!((rows[2].risk - 1.5).abs() < 1e-9);
        let text = curve_to_csv(&rows);
        assert!(text.starts_with("gamma,bias,variance,risk,tag\n"));
        let back = curve_from_csv(&text).unwrap();
        assert_eq!(back[2], rows[2]);
        assert!(back[1].risk.is_infinite() && back[1].tag == "threshold");
        let json = serde_json::to_value(&rows).unwrap();
        assert_eq!(json[1]["risk"], "inf");
        assert!(json[1]["bias"].is_null());
    }

    proptest! {
        #[test]
        fn permutation_invariance(seed in 0u64..1000, lambda in 0.01f64..10.0) {
            let c = random_ctx(seed, 8, 1.5);
            let mut rev = c.clone();
            rev.eigs.reverse();
            rev.b_energy.reverse();
            prop_assert!(rel(mn1(lambda, &rev).unwrap(), mn1(lambda, &c).unwrap()) < 1e-12);
            prop_assert!(rel(ridge_asymptotic_bias(lambda, &rev).unwrap() + 1e-300, ridge_asymptotic_bias(lambda, &c).unwrap() + 1e-300) < 1e-12);
        }

        #[test]
        fn solutions_are_nonnegative(seed in 0u64..1000, gamma in 0.1f64..8.0, lambda in 1e-4f64..1e3) {
            let c = random_ctx(seed, 6, gamma);
            let s = solve_mn(lambda, &c).unwrap();
            prop_assert!(s.value > 0.0 && s.residual.abs() <= RESIDUAL_TOL);
            prop_assert!(ridge_asymptotic_bias(lambda, &c).unwrap() >= 0.0);
            prop_assert!(ridge_asymptotic_variance(lambda, &c).unwrap() >= 0.0);
        }
    }
}
