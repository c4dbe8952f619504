//! Sweep on features drawn i.i.d. from an HMM population model, with theory
//! computed from that model's spectrum.

use ddlab::harness::{result_to_csv, run_sweep, SweepConfig};

fn main() -> ddlab::Result<()> {
    let cfg = SweepConfig::from_json(
        r#"{
            "name": "hmm",
            "d": 5,
            "p_grid": [20, 30, 38, 42, 50, 60, 80],
            "n_values": [40],
            "noise_levels": [0.5],
            "data_mode": "iid-gaussian",
            "trials": 1,
            "x_redraws": 8,
            "estimator": {"kind": "min-norm"},
            "seed": 3,
            "hmm": {"rho": 0.7}
        }"#,
    )?;
    let result = run_sweep(&cfg)?;
    print!("{}", result_to_csv(&result));
    Ok(())
}
