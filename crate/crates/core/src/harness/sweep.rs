use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::train::{csv_err, load_data, train_on, TrainOptions};
use crate::error::{invalid, Error, Result};
use crate::nn::ActivationKind;

/// Best test accuracy of one run in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub activation: ActivationKind,
    pub best_test_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Snr,
    Rho,
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr_db",
            SweepAxis::Rho => "rho",
        }
    }
}

const ACTIVATIONS: [ActivationKind; 2] = [ActivationKind::Crelu, ActivationKind::Qam];

/// One independent run per `(value, activation)` pair. Runs execute in
/// parallel; rows come back in list order.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.len() < 2 {
        return Err(invalid("a sweep needs at least 2 points"));
    }
    let mut jobs = Vec::with_capacity(values.len() * ACTIVATIONS.len());
    for &value in values {
        for kind in ACTIVATIONS {
            let mut c = cfg.clone();
            c.activation.kind = kind;
            match axis {
                SweepAxis::Snr => c.snr_db = Some(value),
                SweepAxis::Rho => c.mobility.rho = value,
            }
            c.validate()?;
            jobs.push((value, kind, c));
        }
    }
    let (train, test) = load_data(cfg)?;
    jobs.into_par_iter()
        .map(|(value, activation, c)| {
            let out = train_on(&c, &train, &test, &TrainOptions::default())?;
            if let Some(reason) = out.abort {
                return Err(Error::NonFinite(reason));
            }
            Ok(SweepRow {
                value,
                activation,
                best_test_acc: out.best_test_acc(),
            })
        })
        .collect()
}

pub fn run_sweep_snr(cfg: &ExperimentConfig, snrs: &[f64]) -> Result<Vec<SweepRow>> {
    run_sweep(cfg, SweepAxis::Snr, snrs)
}

pub fn run_sweep_rho(cfg: &ExperimentConfig, rhos: &[f64]) -> Result<Vec<SweepRow>> {
    run_sweep(cfg, SweepAxis::Rho, rhos)
}

#[derive(Serialize)]
struct CsvRow {
    value: f64,
    activation: ActivationKind,
    best_test_acc: f64,
}

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([axis.column(), "activation", "best_test_acc"]).map_err(csv_err)?;
    for r in rows {
        w.serialize(CsvRow {
            value: r.value,
            activation: r.activation,
            best_test_acc: r.best_test_acc,
        })
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Parses `"-5,0,10"` style lists.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("not a number: {s:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_rows_in_order() {
        let cfg = ExperimentConfig::parse(
            r#"{"model":{"preset":"blobs"},"data":{"blobs":{"per_class":20}},
                "mimo":{"n_t":8,"n_r":8,"r":4},"optimizer":{"epochs":1,"batch_size":16}}"#,
        )
        .unwrap();
        let rows = run_sweep_snr(&cfg, &[-5.0, 0.0, 10.0, 20.0]).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[1].value, -5.0);
        assert_eq!(rows[1].activation, ActivationKind::Qam);
        assert_eq!(rows[6].value, 20.0);
        let csv = sweep_csv(SweepAxis::Snr, &rows).unwrap();
        assert!(csv.starts_with("snr_db,activation,best_test_acc\n-5.0,crelu,"), "{csv}");
        assert!(run_sweep_rho(&cfg, &[0.0]).is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("-5, 0,2.5").unwrap(), vec![-5.0, 0.0, 2.5]);
        assert!(parse_list("1,x").is_err());
    }
}
