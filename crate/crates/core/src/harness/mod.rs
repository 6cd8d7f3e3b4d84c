//! Experiment engine: configuration, the training loop, sweeps, and the
//! gradient check behind the command-line tool.

mod config;
mod gradcheck;
mod sweep;
mod train;

pub use config::{
    preset, ActivationConfig, DataConfig, ExperimentConfig, LossWeights, ModelConfig, OptimizerConfig, PRESETS,
};
pub use gradcheck::{run_gradcheck, GradcheckHook, GradcheckReport, GroupReport, FD_TOLERANCE, OTA_TOLERANCE};
pub use sweep::{parse_list, run_sweep, run_sweep_rho, run_sweep_snr, sweep_csv, SweepAxis, SweepRow};
pub use train::{
    evaluate, load_data, metrics_csv, run_train, train_on, write_snapshot, Event, MetricsRow, TrainOptions,
    TrainOutcome,
};
