use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataConfig, ExperimentConfig};
use crate::beamform::total_loss;
use crate::data::{batches, load_cifar10, synth_blobs, Dataset};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, head_loss, predict, stream_rng, AdamState, Backprop, Mode, Model, ModelSnapshot, Stream,
    TrackCovariance,
};

/// One line of the metrics CSV, written once per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub step: usize,
    pub loss_task: f64,
    pub loss_f: f64,
    pub loss_b: f64,
    pub loss_total: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub snr_db_measured: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Fill `wall_ms` with elapsed time. Off by default so CSVs stay byte-identical.
    pub record_wall_time: bool,
}

/// Something that happened during a run, kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    ChannelEvolved { step: usize },
    StepRejected { step: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub snapshot: ModelSnapshot,
    pub events: Vec<Event>,
    /// Set when training stopped on a non-finite loss; `snapshot` then holds
    /// the parameters from before the failing step.
    pub abort: Option<String>,
}

impl TrainOutcome {
    pub fn best_test_acc(&self) -> f64 {
        self.rows.iter().map(|r| r.test_acc).fold(0.0, f64::max)
    }

    pub fn channel_evolutions(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::ChannelEvolved { .. }))
            .count()
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataConfig::Cifar10 { path } => load_cifar10(path),
        DataConfig::Blobs(b) => synth_blobs(b),
    }
}

/// Fraction of `data` classified correctly by an inference-mode pass.
pub fn evaluate(model: &mut Model, data: &Dataset, batch_size: usize) -> Result<f64> {
    let mut rng = stream_rng(0, Stream::Shuffle, 0);
    let mut correct = 0;
    for batch in batches(data, batch_size, false, &mut rng)? {
        let z = model.forward(&batch.x, Mode::Eval)?;
        correct += predict(&z)
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains on the configured data, evaluating on the test split once per epoch.
pub fn run_train(cfg: &ExperimentConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    train_on(cfg, &train, &test, opts)
}

/// As [`run_train`] with the datasets supplied by the caller.
pub fn train_on(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset, opts: &TrainOptions) -> Result<TrainOutcome> {
    let spec = cfg.model_spec()?;
    let mut model = Model::build(&spec, &cfg.build_context())?;
    let weights = cfg.loss_weights;
    model.track = TrackCovariance {
        forward: weights.lambda_f != 0.0,
        backward: weights.lambda_b != 0.0,
    };
    let opt = cfg.optimizer;
    let mut adam = AdamState::new();
    let mut shuffle_rng = stream_rng(cfg.seed, Stream::Shuffle, 0);
    let start = Instant::now();

    let mut rows = Vec::with_capacity(opt.epochs);
    let mut events = Vec::new();
    let mut step = 0;
    for epoch in 1..=opt.epochs {
        let (mut sum_task, mut sum_f, mut sum_b, mut n_batches) = (0.0, 0.0, 0.0, 0usize);
        let mut correct = 0;
        for batch in batches(train, opt.batch_size, true, &mut shuffle_rng)? {
            let z = model.forward(&batch.x, Mode::Train)?;
            let (task, g_z) = head_loss(&z, &batch.labels)?;
            let abort = |what: &str, model: &mut Model, rows: Vec<MetricsRow>, events: Vec<Event>| TrainOutcome {
                rows,
                snapshot: model.snapshot(),
                events,
                abort: Some(format!("non-finite {what} at epoch {epoch}, step {}", step + 1)),
            };
            if !task.is_finite() {
                return Ok(abort("task loss", &mut model, rows, events));
            }
            correct += predict(&z)
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
            model.backward(&g_z, Backprop::OverTheAir)?;
            let (lf, lb) = model.subspace_losses(weights.lambda_f, weights.lambda_b)?;
            let bundle = total_loss(task, lf, lb, weights.lambda_f, weights.lambda_b);
            if !bundle.total.is_finite() {
                return Ok(abort("total loss", &mut model, rows, events));
            }
            sum_task += task;
            sum_f += lf;
            sum_b += lb;
            n_batches += 1;
            step += 1;

            let (mut values, grads): (Vec<_>, Vec<_>) = model.params().into_iter().map(|p| (p.value, p.grad)).unzip();
            match adam_step(&mut values, &grads, &mut adam, opt.lr) {
                Ok(()) => {}
                Err(Error::NonFinite(reason)) => events.push(Event::StepRejected { step, reason }),
                Err(e) => return Err(e),
            }

            if step % cfg.mobility.update_interval == 0 {
                model.evolve_channels(&cfg.mobility)?;
                events.push(Event::ChannelEvolved { step });
            }
        }
        let stats = model.take_link_stats();
        let test_acc = evaluate(&mut model, test, opt.batch_size)?;
        model.take_link_stats();
        let n = n_batches as f64;
        let bundle = total_loss(sum_task / n, sum_f / n, sum_b / n, weights.lambda_f, weights.lambda_b);
        rows.push(MetricsRow {
            epoch,
            step,
            loss_task: bundle.task,
            loss_f: bundle.forward,
            loss_b: bundle.backward,
            loss_total: bundle.total,
            train_acc: correct as f64 / train.len() as f64,
            test_acc,
            snr_db_measured: stats.snr_db(),
            wall_ms: if opts.record_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        });
    }
    Ok(TrainOutcome {
        rows,
        snapshot: model.snapshot(),
        events,
        abort: None,
    })
}

/// Serializes rows with a header line.
pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "epoch",
            "step",
            "loss_task",
            "loss_f",
            "loss_b",
            "loss_total",
            "train_acc",
            "test_acc",
            "snr_db_measured",
            "wall_ms",
        ])
        .map_err(csv_err)?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

pub fn write_snapshot(path: &Path, snapshot: &ModelSnapshot) -> Result<()> {
    std::fs::write(path, serde_json::to_string(snapshot)?)?;
    Ok(())
}
