//! The binary's subcommands, exit codes and outputs.

use std::path::Path;
use std::process::{Command, Output};

const QUICK: &str = r#"{"model":{"preset":"blobs"},"data":{"blobs":{"per_class":20}},
    "mimo":{"n_t":8,"n_r":8,"r":4},"snr_db":10,"optimizer":{"epochs":2,"batch_size":16}}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oac-split")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", QUICK);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = run(&["train", "--config", &cfg, "--out", arg(out), "--seed", "3"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 3);
    assert!(!text.contains('\r'));
    assert!(dir.path().join("a.snapshot.json").exists());

    let c = dir.path().join("c.csv");
    run(&["train", "--config", &cfg, "--out", arg(&c), "--seed", "4"]);
    assert_ne!(text, std::fs::read_to_string(&c).unwrap());
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"model":{"preset":"blobs"},"data":{"blobs":{}},"mimo":{"n_t":8,"n_r":16,"r":16}}"#,
    );
    let out = dir.path().join("o.csv");
    let o = run(&["train", "--config", &bad, "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mimo.r"));
    assert!(!out.exists());

    let missing = run(&["train", "--config", arg(&dir.path().join("nope.json")), "--out", arg(&out)]);
    assert_eq!(missing.status.code(), Some(1));

    let cfg = write(dir.path(), "c.json", QUICK);
    let one_point = run(&["sweep", "snr", "--config", &cfg, "--snrs", "10", "--out", arg(&out)]);
    assert_eq!(one_point.status.code(), Some(1));
}

#[test]
fn sweep_rho_rows_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", QUICK);
    let out = dir.path().join("rho.csv");
    let o = run(&["sweep", "rho", "--config", &cfg, "--rhos", "0,0.5", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let keys: Vec<String> = text
        .lines()
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(keys, ["rho,activation", "0.0,crelu", "0.0,qam", "0.5,crelu", "0.5,qam"]);
}

#[test]
fn sweep_snr_accepts_negative_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", QUICK);
    let out = dir.path().join("snr.csv");
    let o = run(&["sweep", "snr", "--config", &cfg, "--snrs", "-5,20", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&out).unwrap().contains("\n-5.0,qam,"));
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.json",
        r#"{"model":{"preset":"blobs"},"data":{"blobs":{"per_class":10}},"mimo":{"n_t":8,"n_r":8,"r":4}}"#,
    );
    let ok = run(&["gradcheck", "--config", &cfg]);
    let report = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(ok.status.code(), Some(0), "{report}");
    assert!(report.contains("layer0.p") && report.trim_end().ends_with("PASS"));

    let bad = run(&["gradcheck", "--config", &cfg, "--corrupt-sign"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).trim_end().ends_with("FAIL"));
}

#[test]
fn synthetic_cifar_trains() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cifar");
    let o = run(&["data", "synth", "--out", arg(&data), "--per-file", "20"]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["data_batch_1.bin", "data_batch_5.bin", "test_batch.bin"] {
        assert_eq!(std::fs::metadata(data.join(f)).unwrap().len(), 20 * 3073);
    }
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"model":{{"layers":[{{"type":"oac_conv","out_channels":2,"kernel":[4,4],"stride":4}},
                {{"type":"activation"}},{{"type":"avg_pool"}},{{"type":"dense_head"}}]}},
                "data":{{"cifar10":{{"path":{:?}}}}},"mimo":{{"n_t":4,"n_r":4,"r":2}},
                "optimizer":{{"epochs":1,"batch_size":50}}}}"#,
            arg(&data)
        ),
    );
    let out = dir.path().join("m.csv");
    let o = run(&["train", "--config", &cfg, "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn non_finite_loss_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"model":{"preset":"blobs"},"data":{"blobs":{"per_class":20}},"mimo":{"n_t":8,"n_r":8,"r":4},
            "optimizer":{"lr":1e300,"epochs":3,"batch_size":16}}"#,
    );
    let out = dir.path().join("m.csv");
    let o = run(&["train", "--config", &cfg, "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
    assert!(dir.path().join("m.snapshot.json").exists());
}
