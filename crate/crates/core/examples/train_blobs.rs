//! Train the two-split network on the synthetic blob task over 8×8 links at
//! 20 dB and print the per-epoch metrics CSV.
//!
//! ```bash
//! cargo run --release --example train_blobs
//! cargo run --release --example train_blobs -- qam
//! ```

use oac_split::harness::{metrics_csv, run_train, ExperimentConfig, TrainOptions};
use oac_split::nn::ActivationKind;

fn main() -> oac_split::Result<()> {
    let mut cfg = ExperimentConfig::parse(
        r#"{
            "model": { "preset": "blobs" },
            "data": { "blobs": {} },
            "mimo": { "n_t": 8, "n_r": 8, "r": 4 },
            "snr_db": 20
        }"#,
    )?;
    if std::env::args().nth(1).as_deref() == Some("qam") {
        cfg.activation.kind = ActivationKind::Qam;
    }
    let out = run_train(&cfg, &TrainOptions { record_wall_time: true })?;
    print!("{}", metrics_csv(&out.rows)?);
    eprintln!(
        "best test accuracy {:.3}, {} channel updates",
        out.best_test_acc(),
        out.channel_evolutions()
    );
    Ok(())
}
