use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channel::MobilityConfig;
use crate::data::{BlobConfig, CIFAR_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{ActivationKind, BuildContext, Constellation, LayerSpec, MimoConfig, ModelSpec};
use crate::oac::FeatureShape;

/// A complete, strictly-typed experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub mimo: MimoConfig,
    /// Target received SNR; absent means a noiseless link.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub activation: ActivationConfig,
    #[serde(default)]
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub mobility: MobilityConfig,
    pub data: DataConfig,
}

/// Either an explicit layer list or a named preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivationConfig {
    pub kind: ActivationKind,
    pub levels: usize,
    pub delta: f64,
}

impl Default for ActivationConfig {
    fn default() -> Self {
        Self {
            kind: ActivationKind::Crelu,
            levels: 4,
            delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_f: f64,
    pub lambda_b: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_f: 1.0,
            lambda_b: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            batch_size: 64,
            epochs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Cifar10 { path: PathBuf },
    Blobs(BlobConfig),
}

impl DataConfig {
    pub fn input_shape(&self) -> FeatureShape {
        match self {
            DataConfig::Cifar10 { .. } => FeatureShape::new(3, 32, 32),
            DataConfig::Blobs(b) => FeatureShape::flat(b.dim),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DataConfig::Cifar10 { .. } => CIFAR_CLASSES,
            DataConfig::Blobs(b) => b.classes,
        }
    }
}

/// Built-in model descriptions.
pub fn preset(name: &str) -> Option<ModelSpec> {
    let layers = match name {
        // Two split points in a row, each on its own link, as in the ResNet
        // below but small enough for the synthetic blob task.
        "blobs" => vec![
            LayerSpec::OacLinear { out: 16 },
            LayerSpec::Batchnorm,
            LayerSpec::Activation,
            LayerSpec::OacLinear { out: 16 },
            LayerSpec::Batchnorm,
            LayerSpec::Activation,
            LayerSpec::DenseHead,
        ],
        // Complex ResNet: input conv, six two-conv residual blocks, global
        // pooling and a dense head. Counting convolutions from 1, the 5th and
        // 13th run over the air.
        "complex_resnet" => {
            let conv = |over_air: bool| {
                if over_air {
                    LayerSpec::OacConv {
                        out_channels: 16,
                        kernel: [3, 3],
                        padding: 1,
                        stride: 1,
                    }
                } else {
                    LayerSpec::Conv {
                        out_channels: 16,
                        kernel: [3, 3],
                        padding: 1,
                        stride: 1,
                    }
                }
            };
            let mut layers = vec![conv(false), LayerSpec::Batchnorm, LayerSpec::Activation];
            for block in 0..6 {
                let second = 2 * block + 3;
                layers.push(LayerSpec::Residual {
                    layers: vec![
                        conv(false),
                        LayerSpec::Batchnorm,
                        LayerSpec::Activation,
                        conv(second == 5 || second == 13),
                        LayerSpec::Batchnorm,
                    ],
                });
                layers.push(LayerSpec::Activation);
            }
            layers.push(LayerSpec::AvgPool);
            layers.push(LayerSpec::DenseHead);
            layers
        }
        _ => return None,
    };
    Some(ModelSpec { layers })
}

pub const PRESETS: [&str; 2] = ["blobs", "complex_resnet"];

fn field(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses JSON, fills defaults, and validates everything before returning.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| field("<json>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The resolved layer list.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        match (&self.model.preset, self.model.layers.is_empty()) {
            (Some(name), true) => preset(name).ok_or_else(|| {
                field(
                    "model.preset",
                    format!("unknown preset {name:?} (known: {})", PRESETS.join(", ")),
                )
            }),
            (None, false) => Ok(ModelSpec {
                layers: self.model.layers.clone(),
            }),
            _ => Err(field("model", "give exactly one of `preset` or `layers`")),
        }
    }

    pub fn constellation(&self) -> Constellation {
        Constellation {
            levels: self.activation.levels,
            delta_r: self.activation.delta,
            delta_i: self.activation.delta,
        }
    }

    pub fn build_context(&self) -> BuildContext {
        BuildContext {
            input: self.data.input_shape(),
            classes: self.data.classes(),
            mimo: self.mimo,
            activation: self.activation.kind,
            constellation: self.constellation(),
            snr_db: self.snr_db,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mimo;
        if m.n_t == 0 || m.n_r == 0 {
            return Err(field("mimo", "n_t and n_r must be >= 1"));
        }
        if m.r == 0 || m.r > m.n_t.min(m.n_r) {
            return Err(field(
                "mimo.r",
                format!("r = {} must lie in 1..=min(n_t, n_r) = {}", m.r, m.n_t.min(m.n_r)),
            ));
        }
        if m.n_paths == 0 {
            return Err(field("mimo.n_paths", "need at least one path"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(field("snr_db", "must be finite"));
            }
        }
        if self.activation.levels < 2 {
            return Err(field("activation.levels", "need at least 2 levels per axis"));
        }
        if !(self.activation.delta > 0.0) || !self.activation.delta.is_finite() {
            return Err(field("activation.delta", "must be a positive number"));
        }
        for (name, v) in [
            ("loss_weights.lambda_f", self.loss_weights.lambda_f),
            ("loss_weights.lambda_b", self.loss_weights.lambda_b),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(field(name, "must be a finite number >= 0"));
            }
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || !o.lr.is_finite() {
            return Err(field("optimizer.lr", "must be positive"));
        }
        if o.batch_size == 0 {
            return Err(field("optimizer.batch_size", "must be >= 1"));
        }
        if o.epochs == 0 {
            return Err(field("optimizer.epochs", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.mobility.rho) {
            return Err(field("mobility.rho", "must lie in [0, 1]"));
        }
        if self.mobility.update_interval == 0 {
            return Err(field("mobility.update_interval", "must be >= 1"));
        }
        if let DataConfig::Blobs(b) = &self.data {
            b.validate().map_err(|e| field("data.blobs", e.to_string()))?;
        }
        let spec = self.model_spec()?;
        spec.validate(&self.build_context())?;
        Ok(())
    }
}
