//! The complex-valued network around the split points.

mod activation;
mod adam;
mod batchnorm;
mod head;
mod model;
mod quantize;

pub use activation::{crelu, crelu_backward};
pub use adam::{adam_step, AdamState};
pub use batchnorm::{BatchNormCache, BatchNormGrads, BatchNormState, BN_EPS, BN_MOMENTUM};
pub use head::{head_loss, predict};
pub use model::{
    stream_rng, ActivationKind, AffineLayer, Backprop, BatchNormLayer, BuildContext, Layer,
    LayerSpec, Link, MimoConfig, Mode, Model, ModelSnapshot, ModelSpec, NamedTensor, OacBlock,
    OacGrads, ParamRef, Stream, TrackCovariance,
};
pub use quantize::{qam_activate, qam_backward, Constellation};
