//! Risk against model size at n = 100 for three noise levels.
//!
//! `cargo run --release --example figure1 -- runs/figure1` writes CSV, JSON and SVG.

use std::path::PathBuf;

use ddlab::harness::{figure1_preset, render_svg, run_sweep, write_csv, write_json, SvgOptions};

fn main() -> ddlab::Result<()> {
    let mut cfg = figure1_preset();
    cfg.trials = 10;
    let result = run_sweep(&cfg)?;

    for noise in &cfg.noise_levels {
        let peak = result
            .rows
            .iter()
            .filter(|r| r.noise_level == *noise && r.emp_risk_mean.is_finite())
            .max_by(|a, b| a.emp_risk_mean.total_cmp(&b.emp_risk_mean))
            .unwrap();
        println!("noise {noise}: empirical peak at p = {} (risk {:.3})", peak.p, peak.emp_risk_mean);
    }

    if let Some(dir) = std::env::args_os().nth(1).map(PathBuf::from) {
        std::fs::create_dir_all(&dir).map_err(|e| ddlab::Error::io(&dir, e))?;
        write_csv(&result, &dir.join("results.csv"))?;
        write_json(&result, &dir.join("results.json"))?;
        render_svg(&result, &dir.join("results.svg"), &SvgOptions::default())?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
