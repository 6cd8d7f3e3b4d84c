//! Best test accuracy versus link SNR for CReLU and 16QAM activations.
//!
//! ```bash
//! cargo run --release --example snr_sweep
//! ```

use oac_split::harness::{run_sweep_snr, sweep_csv, ExperimentConfig, SweepAxis};

fn main() -> oac_split::Result<()> {
    let cfg = ExperimentConfig::parse(
        r#"{
            "model": { "preset": "blobs" },
            "data": { "blobs": {} },
            "mimo": { "n_t": 8, "n_r": 8, "r": 4 }
        }"#,
    )?;
    let rows = run_sweep_snr(&cfg, &[-5.0, 0.0, 5.0, 10.0, 20.0])?;
    print!("{}", sweep_csv(SweepAxis::Snr, &rows)?);
    Ok(())
}
