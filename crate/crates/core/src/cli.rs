//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 2 on usage errors, 1 on runtime failures.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::asymptotics::{
    asymptotic_bias, asymptotic_variance, c0_residual, curve_to_csv, mn_derivative, mn_residual, ridge_risk_curve,
    solve_c0, solve_mn, theoretical_risk_curve, write_curve_csv, write_curve_json, SpectrumContext, RESIDUAL_TOL,
};
use crate::error::Error;
use crate::harness::{
    figure1_preset, figure2_preset, render_svg, result_to_csv, run_sweep, write_csv, write_json, SvgOptions,
    SweepConfig,
};
use crate::population::{build_population_model, sample_iid_rows, sample_sequence, DataMode, ModelSpec};
use crate::rng::rng_from;

#[derive(Debug, Parser)]
#[command(name = "ddlab", version, about = "Double descent experiments for linear heads on sequence representations")]
struct Cli {
    /// JSON config layered over the built-in preset
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Root seed
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Monte Carlo noise draws per design (1 = exact conditional risk only)
    #[arg(long, global = true, value_name = "K")]
    trials: Option<usize>,
    /// Independent design draws per grid point
    #[arg(long, global = true, value_name = "K")]
    redraws: Option<usize>,
    /// Data generating mode: hmm-sequence, iid-gaussian or direct-linear
    #[arg(long, global = true, value_parser = parse_mode, value_name = "MODE")]
    mode: Option<DataMode>,
    /// Ridge penalty; selects the ridge estimator
    #[arg(long, global = true, value_name = "F")]
    lambda: Option<f64>,
    /// Output formats
    #[arg(long, global = true, value_delimiter = ',', value_name = "csv,json,svg")]
    format: Option<Vec<OutFormat>>,
    /// Logarithmic risk axis in SVG plots
    #[arg(long, global = true)]
    log_y: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a population model and optionally sample a dataset from it
    Model(ModelArgs),
    /// Print a theoretical risk curve
    Theory(TheoryArgs),
    /// Empirical versus theoretical risk at one (n, p, noise) point
    Empirical(EmpiricalArgs),
    /// Run a sweep from a config file and overrides
    Sweep(Overrides),
    /// Risk versus model size at n = 100 for three noise levels
    Figure1(Overrides),
    /// Risk versus model size for n in {100, 150, 200, 250}
    Figure2(Overrides),
    /// Run the numerical self-check suite
    Selfcheck,
}

#[derive(Debug, Args)]
struct Overrides {
    /// key=value overrides, dotted keys for nested fields
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Sample this many rows and write them as a dataset
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    /// Overparametrization ratios p/n
    #[arg(long, value_delimiter = ',', required = true)]
    gamma: Vec<f64>,
    /// Trace of the noise covariance
    #[arg(long, default_value_t = 1.0)]
    trace_eps: f64,
    /// Squared Frobenius norm of B
    #[arg(long, default_value_t = 1.0)]
    b_norm2: f64,
    /// JSON array of Σ_x eigenvalues (default: identity)
    #[arg(long, value_name = "PATH")]
    spectrum: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmpiricalArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Noise level (Tr Σ_ε in direct-linear mode)
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
    Svg,
}

fn parse_mode(s: &str) -> Result<DataMode, String> {
    s.parse::<DataMode>().map_err(|e| e.to_string())
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput { .. } | Error::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Entry point with process streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Entry point writing to the given streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

/// Help text for the top-level command.
pub fn help_text() -> String {
    use clap::CommandFactory;
    Cli::command().render_help().to_string()
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::Model(args) => cmd_model(cli, args, out),
        Command::Theory(args) => cmd_theory(cli, args, out),
        Command::Empirical(args) => cmd_empirical(cli, args, out),
        Command::Sweep(o) => {
            let mut base = figure1_preset();
            base.name = "sweep".into();
            cmd_sweep(cli, base, &o.overrides, out)
        }
        Command::Figure1(o) => cmd_sweep(cli, figure1_preset(), &o.overrides, out),
        Command::Figure2(o) => cmd_sweep(cli, figure2_preset(), &o.overrides, out),
        Command::Selfcheck => cmd_selfcheck(out),
    }
}

fn io_fail(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn merge(base: &mut Value, layer: Value, path: &str) -> Outcome {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && same_variant(slot, &v) => merge(slot, v, &key)?,
                    Some(slot) => *slot = v,
                    None => return Err(Failure::Usage(format!("unknown config key `{key}`"))),
                }
            }
            Ok(())
        }
        (b, l) => {
            *b = l;
            Ok(())
        }
    }
}

/// A layer naming a different `kind` replaces the object wholesale.
fn same_variant(base: &Value, layer: &Value) -> bool {
    match layer.get("kind") {
        Some(k) => base.get("kind") == Some(k),
        None => true,
    }
}

fn parse_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() == 3 {
        if let (Ok(lo), Ok(hi), Ok(step)) = (parts[0].parse::<usize>(), parts[1].parse::<usize>(), parts[2].parse::<usize>()) {
            return json!((lo..=hi).step_by(step.max(1)).collect::<Vec<_>>());
        }
    }
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(|s| parse_value(s.trim())).collect());
    }
    Value::String(raw.to_string())
}

fn apply_override(base: &mut Value, item: &str) -> Outcome {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("override `{item}` is not key=value")))?;
    let mut slot = &mut *base;
    for part in key.split('.') {
        slot = slot
            .get_mut(part)
            .ok_or_else(|| Failure::Usage(format!("unknown config key `{key}`")))?;
    }
    let mut value = parse_value(raw);
    // scalar lists such as noise_levels=0.5
    if slot.is_array() && !value.is_array() {
        value = Value::Array(vec![value]);
    }
    if slot.is_string() && !value.is_string() {
        value = Value::String(raw.to_string());
    }
    *slot = value;
    Ok(())
}

fn layered(cli: &Cli, base: Value, overrides: &[String]) -> Outcome<Value> {
    let mut value = base;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let layer: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
        if !layer.is_object() {
            return Err(Failure::Usage(format!("config {} must be a JSON object", path.display())));
        }
        merge(&mut value, layer, "")?;
    }
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    Ok(value)
}

fn resolve_sweep(cli: &Cli, base: SweepConfig, overrides: &[String]) -> Outcome<SweepConfig> {
    let value = serde_json::to_value(&base).map_err(|e| Failure::Runtime(e.to_string()))?;
    let value = layered(cli, value, overrides)?;
    let mut cfg: SweepConfig = serde_json::from_value(value).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(r) = cli.redraws {
        cfg.x_redraws = r;
    }
    if let Some(m) = cli.mode {
        cfg.data_mode = m;
    }
    if let Some(l) = cli.lambda {
        cfg.estimator = crate::estimators::EstimatorSpec::Ridge { lambda: l };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn formats(cli: &Cli) -> Vec<OutFormat> {
    cli.format.clone().unwrap_or_else(|| vec![OutFormat::Csv, OutFormat::Svg])
}

fn ensure_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_metadata(dir: &Path, meta: Value) -> Outcome {
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_sweep(cli: &Cli, base: SweepConfig, overrides: &[String], out: &mut dyn Write) -> Outcome {
    let cfg = resolve_sweep(cli, base, overrides)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    ensure_dir(&dir)?;
    let result = run_sweep(&cfg)?;
    let mut written = Vec::new();
    for f in formats(cli) {
        let path = match f {
            OutFormat::Csv => dir.join("results.csv"),
            OutFormat::Json => dir.join("results.json"),
            OutFormat::Svg => dir.join("results.svg"),
        };
        match f {
            OutFormat::Csv => write_csv(&result, &path)?,
            OutFormat::Json => write_json(&result, &path)?,
            OutFormat::Svg => render_svg(&result, &path, &SvgOptions { log_y: cli.log_y, ..SvgOptions::default() })?,
        }
        written.push(path.display().to_string());
    }
    write_metadata(
        &dir,
        json!({
            "command": cfg.name,
            "seed": cfg.seed,
            "config": cfg,
            "code_version": result.metadata.code_version,
            "wall_time_secs": result.metadata.wall_time_secs,
            "threshold_conditioning": result.metadata.threshold_conditioning,
            "outputs": written,
        }),
    )?;
    let failed = result.rows.iter().filter(|r| r.is_failed()).count();
    writeln!(out, "{}: {} rows written to {}", cfg.name, result.rows.len(), dir.display()).map_err(io_fail)?;
    if failed > 0 {
        writeln!(out, "{failed} rows failed; see threshold_tag").map_err(io_fail)?;
    }
    Ok(())
}

fn cmd_empirical(cli: &Cli, args: &EmpiricalArgs, out: &mut dyn Write) -> Outcome {
    let mut base = figure1_preset();
    base.name = "empirical".into();
    base.d = args.d;
    base.p_grid = vec![args.p];
    base.n_values = vec![args.n];
    base.noise_levels = vec![args.noise];
    let cfg = resolve_sweep(cli, base, &[])?;
    let result = run_sweep(&cfg)?;
    write!(out, "{}", result_to_csv(&result)).map_err(io_fail)?;
    if let Some(dir) = &cli.out {
        ensure_dir(dir)?;
        for f in formats(cli) {
            match f {
                OutFormat::Csv => write_csv(&result, &dir.join("results.csv"))?,
                OutFormat::Json => write_json(&result, &dir.join("results.json"))?,
                OutFormat::Svg => render_svg(&result, &dir.join("results.svg"), &SvgOptions::default())?,
            }
        }
        write_metadata(dir, json!({"command": "empirical", "seed": cfg.seed, "config": cfg}))?;
    }
    Ok(())
}

fn cmd_theory(cli: &Cli, args: &TheoryArgs, out: &mut dyn Write) -> Outcome {
    if args.gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Failure::Usage("--gamma values must be positive".into()));
    }
    let base = match &args.spectrum {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read spectrum {}: {e}", path.display())))?;
            let eigs: Vec<f64> = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("spectrum {}: {e}", path.display())))?;
            let p = eigs.len().max(1);
            SpectrumContext::new(eigs, 2.0, args.trace_eps, vec![args.b_norm2 / p as f64; p])?
        }
        None => SpectrumContext::isotropic(1, 1.0, 2.0, args.trace_eps, args.b_norm2)?,
    };
    let rows = match cli.lambda {
        Some(l) => ridge_risk_curve(&base, l, &args.gamma)?,
        None => theoretical_risk_curve(&base, &args.gamma)?,
    };
    write!(out, "{}", curve_to_csv(&rows)).map_err(io_fail)?;
    if let Some(dir) = &cli.out {
        ensure_dir(dir)?;
        for f in formats(cli) {
            match f {
                OutFormat::Csv => write_curve_csv(&rows, &dir.join("theory.csv"))?,
                OutFormat::Json => write_curve_json(&rows, &dir.join("theory.json"))?,
                OutFormat::Svg => {}
            }
        }
        write_metadata(
            dir,
            json!({"command": "theory", "gamma": args.gamma, "trace_eps": args.trace_eps,
                   "b_norm2": args.b_norm2, "lambda": cli.lambda, "eigs": base.eigs}),
        )?;
    }
    Ok(())
}

fn cmd_model(cli: &Cli, args: &ModelArgs, out: &mut dyn Write) -> Outcome {
    let base = ModelSpec::gaussian(10, 20, 0.5, 1.0, 0);
    let value = serde_json::to_value(&base).map_err(|e| Failure::Runtime(e.to_string()))?;
    let value = layered(cli, value, &args.overrides.overrides)?;
    let mut spec: ModelSpec = serde_json::from_value(value).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    spec.validate()?;
    let model = build_population_model(&spec)?;
    let eig_max = model.sigma_x_eigs.first().copied().unwrap_or(f64::NAN);
    let eig_min = model.sigma_x_eigs.last().copied().unwrap_or(f64::NAN);
    writeln!(out, "d={} p={} tr(sigma_eps)={} sigma_x eigenvalues in [{eig_min}, {eig_max}]", spec.d, spec.p, model.trace_sigma_eps)
        .map_err(io_fail)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs/model"));
    ensure_dir(&dir)?;
    let model_path = dir.join("model.json");
    let text = serde_json::to_string_pretty(&model).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(&model_path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", model_path.display())))?;
    let mut outputs = vec![model_path.display().to_string()];
    if let Some(n) = args.n {
        let mode = cli.mode.unwrap_or(DataMode::HmmSequence);
        let mut rng = rng_from(spec.seed, &[0xDA7A, n as u64]);
        let data = match mode {
            DataMode::HmmSequence => sample_sequence(&model, &spec, n, spec.seed, &mut rng)?,
            DataMode::IidGaussian | DataMode::DirectLinear => {
                let mut d = sample_iid_rows(&model, n, spec.seed, &mut rng)?;
                d.mode = mode;
                d
            }
        };
        for f in formats(cli) {
            let path = match f {
                OutFormat::Csv => dir.join("dataset.csv"),
                OutFormat::Json => dir.join("dataset.json"),
                OutFormat::Svg => continue,
            };
            match f {
                OutFormat::Csv => data.write_csv(&path)?,
                _ => data.write_json(&path)?,
            }
            outputs.push(path.display().to_string());
        }
    }
    write_metadata(&dir, json!({"command": "model", "seed": spec.seed, "config": spec, "outputs": outputs}))?;
    Ok(())
}

struct Check {
    name: &'static str,
    ok: bool,
    detail: String,
}

/// Isotropic closed forms and fixed-point residuals.
pub fn selfcheck_report() -> Vec<(String, bool, String)> {
    use rand::Rng;
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for &g in &[1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 50.0] {
        for &s2 in &[0.5, 1.0, 2.0] {
            let ctx = SpectrumContext::isotropic(4, s2, g, 1.0, 1.0).expect("valid context");
            let errs = [
                solve_c0(&ctx).map(|s| s.value).unwrap_or(f64::NAN) * (g * (g - 1.0) * s2) - 1.0,
                asymptotic_variance(&ctx).unwrap_or(f64::NAN) * (g - 1.0) - 1.0,
                asymptotic_bias(&ctx).unwrap_or(f64::NAN) / (s2 * (1.0 - 1.0 / g)) - 1.0,
            ];
            for e in errs {
                worst = if e.is_nan() { f64::INFINITY } else { worst.max(e.abs()) };
            }
        }
    }
    checks.push(Check { name: "isotropic closed forms", ok: worst <= 1e-8, detail: format!("max relative error {worst:e}") });

    let mut rng = rng_from(0x5E1F, &[]);
    let (mut c0_worst, mut mn_worst, mut fd_worst) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = rng.random_range(1..=500);
        let eigs: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..3.0)).collect();
        let gamma = rng.random_range(1.1..10.0);
        let ctx = SpectrumContext::new(eigs, gamma, 1.0, vec![0.0; p]).expect("valid context");
        c0_worst = c0_worst.max(solve_c0(&ctx).map(|s| c0_residual(s.value, &ctx).abs()).unwrap_or(f64::INFINITY));
        let lambda = 10f64.powf(rng.random_range(-4.0..2.0));
        mn_worst = mn_worst.max(solve_mn(lambda, &ctx).map(|s| mn_residual(s.value, lambda, &ctx).abs()).unwrap_or(f64::INFINITY));
    }
    for _ in 0..20 {
        let eigs: Vec<f64> = (0..30).map(|_| rng.random_range(0.5..3.0)).collect();
        let ctx = SpectrumContext::new(eigs, rng.random_range(0.3..4.0), 1.0, vec![0.0; 30]).expect("valid context");
        let lambda = rng.random_range(0.05..5.0);
        let h = 1e-6 * f64::max(lambda, 1.0);
        let fd = match (solve_mn(lambda - h, &ctx), solve_mn(lambda + h, &ctx)) {
            (Ok(a), Ok(b)) => (a.value - b.value) / (2.0 * h),
            _ => f64::NAN,
        };
        let rel = mn_derivative(lambda, &ctx).map(|d| ((d - fd) / fd).abs()).unwrap_or(f64::INFINITY);
        fd_worst = if rel.is_nan() { f64::INFINITY } else { fd_worst.max(rel) };
    }
    checks.push(Check { name: "c0 residuals", ok: c0_worst <= RESIDUAL_TOL, detail: format!("max |residual| {c0_worst:e}") });
    checks.push(Check { name: "m_n residuals", ok: mn_worst <= RESIDUAL_TOL, detail: format!("max |residual| {mn_worst:e}") });
    checks.push(Check { name: "m_n derivative vs finite difference", ok: fd_worst <= 1e-6, detail: format!("max relative gap {fd_worst:e}") });
    checks.into_iter().map(|c| (c.name.to_string(), c.ok, c.detail)).collect()
}

fn cmd_selfcheck(out: &mut dyn Write) -> Outcome {
    let report = selfcheck_report();
    let mut all = true;
    for (name, ok, detail) in &report {
        all &= ok;
        writeln!(out, "{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" }).map_err(io_fail)?;
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Runtime("self-check failed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("ddlab").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn theory_underparametrized_prints_one() {
        let (code, out, _) = run_capture(&["theory", "--gamma", "0.5", "--trace-eps", "1"]);
        assert_eq!(code, 0);
        assert_eq!(out, "gamma,bias,variance,risk,tag\n0.5,0,1,1,\n");
    }

    #[test]
    fn theory_threshold_and_ridge() {
        let (code, out, _) = run_capture(&["theory", "--gamma", "1,2"]);
        assert_eq!(code, 0);
        assert!(out.contains("\n1,,inf,inf,threshold\n"));
        let (code, out, _) = run_capture(&["--lambda", "0.1", "theory", "--gamma", "1"]);
        assert_eq!(code, 0);
        assert!(!out.contains("threshold"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_capture(&[]).0, 2);
        assert_eq!(run_capture(&["nope"]).0, 2);
        assert_eq!(run_capture(&["theory"]).0, 2);
        assert_eq!(run_capture(&["theory", "--gamma", "-1"]).0, 2);
        let (code, _, err) = run_capture(&["figure1", "bogus=1"]);
        assert_eq!(code, 2);
        assert!(err.contains("bogus"));
        assert_eq!(run_capture(&["figure1", "trials=0"]).0, 2);
        assert_eq!(run_capture(&["--config", "/nonexistent.json", "sweep"]).0, 2);
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn overrides_layer_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"p_grid":[10,20],"n_values":[15],"noise_levels":[1.0],"d":3,"seed":5}"#).unwrap();
        let (code, _, err) = run_capture(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--trials",
            "1",
            "--redraws",
            "2",
            "--format",
            "csv,json",
            "sweep",
            "p_grid=10:30:10",
            "b_recipe.norm2=2",
        ]);
        assert_eq!(code, 0, "{err}");
        let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["config"]["p_grid"], json!([10, 20, 30]));
        assert_eq!(meta["config"]["seed"], 5);
        assert_eq!(meta["config"]["x_redraws"], 2);
        assert_eq!(meta["config"]["b_recipe"]["norm2"], 2.0);
        assert!(dir.path().join("results.json").exists());
        assert!(!dir.path().join("results.svg").exists());
    }

    #[test]
    fn model_subcommand_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let (code, out, err) =
            run_capture(&["--out", dir.path().to_str().unwrap(), "model", "--n", "12", "d=3", "p=5"]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("d=3 p=5"));
        for f in ["model.json", "dataset.csv", "metadata.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(run_capture(&["model", "p=0"]).0, 2);
    }

    #[test]
    fn selfcheck_passes() {
        let (code, out, _) = run_capture(&["selfcheck"]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 4);
    }
}
