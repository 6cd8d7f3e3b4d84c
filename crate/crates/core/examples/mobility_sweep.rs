//! Best test accuracy versus channel mobility. Every 50 batches each link
//! becomes `(1−ρ)H + ρH̃` with a fresh draw `H̃`.
//!
//! ```bash
//! cargo run --release --example mobility_sweep
//! ```

use oac_split::harness::{run_sweep_rho, sweep_csv, ExperimentConfig, SweepAxis};

fn main() -> oac_split::Result<()> {
    let cfg = ExperimentConfig::parse(
        r#"{
            "model": { "preset": "blobs" },
            "data": { "blobs": {} },
            "mimo": { "n_t": 8, "n_r": 8, "r": 4 },
            "snr_db": 20,
            "mobility": { "update_interval": 50 }
        }"#,
    )?;
    let rows = run_sweep_rho(&cfg, &[0.0, 0.01, 0.1, 0.5, 1.0])?;
    print!("{}", sweep_csv(SweepAxis::Rho, &rows)?);
    Ok(())
}
