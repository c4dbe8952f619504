use std::fmt::Write as _;
use std::path::Path;

use super::{SweepResult, SweepRow};
use crate::error::{Error, Result};
use crate::format::{fmt_f64, parse_f64};

pub const CSV_HEADER: [&str; 15] = [
    "n",
    "p",
    "gamma",
    "noise_level",
    "emp_bias_mean",
    "emp_bias_se",
    "emp_var_mean",
    "emp_var_se",
    "emp_risk_mean",
    "emp_risk_se",
    "theory_bias",
    "theory_variance",
    "theory_risk",
    "c0",
    "threshold_tag",
];

pub fn result_to_csv(result: &SweepResult) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in &result.rows {
        let nums = [
            r.gamma,
            r.noise_level,
            r.emp_bias_mean,
            r.emp_bias_se,
            r.emp_var_mean,
            r.emp_var_se,
            r.emp_risk_mean,
            r.emp_risk_se,
            r.theory_bias,
            r.theory_variance,
            r.theory_risk,
            r.c0,
        ];
        let _ = write!(out, "{},{}", r.n, r.p);
        for x in nums {
            let _ = write!(out, ",{}", fmt_f64(x));
        }
        let _ = writeln!(out, ",{}", csv_text(&r.threshold_tag));
    }
    out
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_csv(result: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, result_to_csv(result)).map_err(|e| Error::io(path, e))
}

/// Reads rows written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let int = |k: usize| rec[k].parse::<usize>().map_err(|_| bad(format!("line {line}: bad {}", CSV_HEADER[k])));
        let num = |k: usize| parse_f64(&rec[k]).ok_or_else(|| bad(format!("line {line}: bad {}", CSV_HEADER[k])));
        rows.push(SweepRow {
            n: int(0)?,
            p: int(1)?,
            gamma: num(2)?,
            noise_level: num(3)?,
            emp_bias_mean: num(4)?,
            emp_bias_se: num(5)?,
            emp_var_mean: num(6)?,
            emp_var_se: num(7)?,
            emp_risk_mean: num(8)?,
            emp_risk_se: num(9)?,
            theory_bias: num(10)?,
            theory_variance: num(11)?,
            theory_risk: num(12)?,
            c0: num(13)?,
            threshold_tag: rec[14].to_string(),
        });
    }
    Ok(rows)
}

pub fn write_json(result: &SweepResult, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(result)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::super::{figure1_preset, SweepMetadata};
    use super::*;

    fn same(a: f64, b: f64) -> bool {
        a == b || (a.is_nan() && b.is_nan())
    }

    fn row(p: usize, tag: &str) -> SweepRow {
        let mut r = SweepRow::blank(100, p, 0.5, tag.into());
        r.emp_risk_mean = 0.1 + 1.0 / 3.0;
        r.theory_risk = if tag == "threshold" { f64::INFINITY } else { 1e-17 };
        r
    }

    fn result(rows: Vec<SweepRow>) -> SweepResult {
        SweepResult {
            rows,
            metadata: SweepMetadata {
                config: figure1_preset(),
                code_version: "0".into(),
                wall_time_secs: 0.25,
                threshold_conditioning: vec![],
            },
        }
    }

    fn rows_equal(a: &[SweepRow], b: &[SweepRow]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.n == y.n
                    && x.p == y.p
                    && x.threshold_tag == y.threshold_tag
                    && same(x.gamma, y.gamma)
                    && same(x.emp_risk_mean, y.emp_risk_mean)
                    && same(x.theory_risk, y.theory_risk)
                    && same(x.c0, y.c0)
            })
    }

    #[test]
    fn empty_result_is_header_only() {
        assert_eq!(result_to_csv(&result(vec![])), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn csv_round_trip_with_inf_and_blank() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = vec![row(95, ""), row(100, "threshold"), row(105, "failed: x, \"y\"")];
        write_csv(&result(rows.clone()), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(2).unwrap().contains(",inf,"));
        assert!(rows_equal(&read_csv(&path).unwrap(), &rows));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let res = result(vec![row(95, ""), row(100, "threshold")]);
        write_json(&res, &path).unwrap();
        let back = read_json(&path).unwrap();
        assert!(rows_equal(&back.rows, &res.rows));
        assert_eq!(back.metadata, res.metadata);
    }

    #[test]
    fn io_errors_name_the_path() {
        let err = read_csv(Path::new("/nonexistent/r.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/r.csv"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_csv(&path).is_err());
        let err = write_csv(&result(vec![]), Path::new("/nonexistent/dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.csv"));
    }
}
