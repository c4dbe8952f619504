use std::fmt::Write as _;
use std::path::Path;

use super::{SweepResult, SweepRow};
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgOptions {
    pub log_y: bool,
    pub width: f64,
    pub height: f64,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions { log_y: false, width: 720.0, height: 480.0 }
    }
}

struct Frame {
    left: f64,
    top: f64,
    w: f64,
    h: f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_y: bool,
}

impl Frame {
    fn x(&self, p: f64) -> f64 {
        let span = (self.x1 - self.x0).max(1.0);
        self.left + (p - self.x0) / span * self.w
    }

    fn y(&self, v: f64) -> f64 {
        let t = if self.log_y {
            (v.max(self.y0).ln() - self.y0.ln()) / (self.y1.ln() - self.y0.ln())
        } else {
            (v - self.y0) / (self.y1 - self.y0)
        };
        self.top + (1.0 - t.clamp(0.0, 1.0)) * self.h
    }
}

/// Series key: one curve per `(n, noise level)`.
fn series(rows: &[SweepRow]) -> Vec<((usize, f64), Vec<&SweepRow>)> {
    let mut out: Vec<((usize, f64), Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        let key = (r.n, r.noise_level);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => out.push((key, vec![r])),
        }
    }
    for (_, v) in out.iter_mut() {
        v.sort_by_key(|r| r.p);
    }
    out
}

fn y_range(rows: &[SweepRow], log_y: bool) -> (f64, f64) {
    let away: Vec<&SweepRow> = rows.iter().filter(|r| (r.gamma - 1.0).abs() >= 0.1).collect();
    let pool: Vec<&SweepRow> = if away.is_empty() { rows.iter().collect() } else { away };
    let top = pool
        .iter()
        .flat_map(|r| [r.emp_risk_mean + r.emp_risk_se.max(0.0), r.theory_risk])
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let top = if top > 0.0 { 1.2 * top } else { 1.0 };
    if log_y {
        let bottom = rows
            .iter()
            .flat_map(|r| [r.emp_risk_mean, r.theory_risk])
            .filter(|v| v.is_finite() && *v > 0.0)
            .fold(f64::INFINITY, f64::min);
        let bottom = if bottom.is_finite() { bottom / 1.5 } else { top / 1e3 };
        (bottom.min(top / 10.0), top)
    } else {
        (0.0, top)
    }
}

pub fn render_svg_string(result: &SweepResult, options: &SvgOptions) -> Result<String> {
    let rows: Vec<SweepRow> = result.rows.iter().filter(|r| !r.is_failed()).cloned().collect();
    if rows.is_empty() {
        return Err(Error::invalid("result", "nothing to plot"));
    }
    let (y0, y1) = y_range(&rows, options.log_y);
    let x0 = rows.iter().map(|r| r.p).min().unwrap_or(0) as f64;
    let x1 = rows.iter().map(|r| r.p).max().unwrap_or(1) as f64;
    let f = Frame {
        left: 70.0,
        top: 30.0,
        w: options.width - 250.0,
        h: options.height - 80.0,
        x0,
        x1,
        y0,
        y1,
        log_y: options.log_y,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}" font-family="sans-serif" font-size="12">"#,
        options.width, options.height, options.width, options.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
        f.left, f.top, f.w, f.h
    );

    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let v = if f.log_y { (y0.ln() + t * (y1.ln() - y0.ln())).exp() } else { y0 + t * (y1 - y0) };
        let y = f.y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            f.left,
            f.left + f.w,
            f.left - 6.0,
            y + 4.0,
            tick_label(v)
        );
        let p = x0 + t * (x1 - x0);
        let x = f.x(p);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{:.0}</text>"#,
            f.top + f.h + 18.0,
            p
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">model size p</text>"#,
        f.left + f.w / 2.0,
        options.height - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">prediction risk</text>"#,
        f.top + f.h / 2.0,
        f.top + f.h / 2.0
    );

    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.sort_unstable();
    ns.dedup();
    for n in ns {
        if (n as f64) >= x0 && (n as f64) <= x1 {
            let x = f.x(n as f64);
            let _ = writeln!(
                s,
                r##"<line class="threshold" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
                f.top,
                f.top + f.h
            );
        }
    }

    for (i, ((n, noise), pts)) in series(&rows).into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let line: Vec<String> = pts
            .iter()
            .filter(|r| r.theory_risk.is_finite())
            .map(|r| format!("{:.2},{:.2}", f.x(r.p as f64), f.y(r.theory_risk)))
            .collect();
        if !line.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline class="theory" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        for r in pts.iter().filter(|r| r.emp_risk_mean.is_finite()) {
            let x = f.x(r.p as f64);
            let se = if r.emp_risk_se.is_finite() { r.emp_risk_se } else { 0.0 };
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                f.y(r.emp_risk_mean - se),
                f.y(r.emp_risk_mean + se),
                f.y(r.emp_risk_mean)
            );
        }
        let ly = f.top + 10.0 + 18.0 * i as f64;
        let lx = f.left + f.w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">n={n}, noise={noise}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

pub fn render_svg(result: &SweepResult, path: &Path, options: &SvgOptions) -> Result<()> {
    let text = render_svg_string(result, options)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
