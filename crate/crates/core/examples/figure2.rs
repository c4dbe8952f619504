//! Risk against model size for several sample sizes; each curve peaks at p = n.

use ddlab::harness::{figure2_preset, render_svg_string, run_sweep, SvgOptions};

fn main() -> ddlab::Result<()> {
    let mut cfg = figure2_preset();
    cfg.trials = 1;
    cfg.x_redraws = 3;
    let result = run_sweep(&cfg)?;

    for n in &cfg.n_values {
        let rows: Vec<_> = result.rows.iter().filter(|r| r.n == *n).collect();
        let peak = rows.iter().max_by(|a, b| a.emp_risk_mean.total_cmp(&b.emp_risk_mean)).unwrap();
        let tail = rows.last().unwrap();
        println!(
            "n = {n}: peak at p = {}, risk at p = {} is {:.3} (theory {:.3})",
            peak.p, tail.p, tail.emp_risk_mean, tail.theory_risk
        );
    }
    let opts = SvgOptions { log_y: true, ..Default::default() };
    println!("{} bytes of SVG", render_svg_string(&result, &opts)?.len());
    Ok(())
}
