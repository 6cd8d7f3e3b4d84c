//! The complex ResNet with its 5th and 13th convolutions computed over 64×64
//! links, on CIFAR-10.
//!
//! Pass a directory holding the binary batches to use the real dataset;
//! otherwise a tiny synthetic corpus in the same format is generated so the
//! pipeline can be exercised in a minute or two.
//!
//! ```bash
//! cargo run --release --example cifar_preset
//! cargo run --release --example cifar_preset -- /data/cifar-10-batches-bin 50
//! ```

use std::path::PathBuf;

use oac_split::data::write_synthetic_cifar;
use oac_split::harness::{metrics_csv, run_train, ExperimentConfig, TrainOptions};

fn main() -> oac_split::Result<()> {
    let mut args = std::env::args().skip(1);
    let (dir, epochs, batch) = match args.next() {
        Some(dir) => (PathBuf::from(dir), args.next().map_or(Ok(50), |e| e.parse()).unwrap_or(50), 64),
        None => {
            let dir = std::env::temp_dir().join("oac-split-synthetic-cifar");
            write_synthetic_cifar(&dir, 8, 0)?;
            (dir, 1, 8)
        }
    };
    let text = format!(
        r#"{{
            "model": {{ "preset": "complex_resnet" }},
            "data": {{ "cifar10": {{ "path": {path:?} }} }},
            "mimo": {{ "n_t": 64, "n_r": 64, "r": 8 }},
            "snr_db": 20,
            "optimizer": {{ "epochs": {epochs}, "batch_size": {batch} }}
        }}"#,
        path = dir.display().to_string()
    );
    let cfg = ExperimentConfig::parse(&text)?;
    let out = run_train(&cfg, &TrainOptions { record_wall_time: true })?;
    print!("{}", metrics_csv(&out.rows)?);
    Ok(())
}
