//! Print the ridgeless risk curve for isotropic features as CSV.

use ddlab::asymptotics::{curve_to_csv, theoretical_risk_curve, SpectrumContext};

fn main() -> ddlab::Result<()> {
    let base = SpectrumContext::isotropic(500, 1.0, 1.0, 0.5, 1.0)?;
    let grid: Vec<f64> = (1..=30).map(|k| k as f64 / 10.0).collect();
    print!("{}", curve_to_csv(&theoretical_risk_curve(&base, &grid)?));
    Ok(())
}
