//! The over-the-air computed linear layer and its convolutional rearrangement.

mod conv;
mod layer;

pub use conv::{
    conv_disassemble, conv_rearrange, conv_rearrange_adjoint, conv_rearrange_batch,
    conv_reassemble, ConvGeometry, FeatureShape,
};
pub use layer::{BackwardTrace, ForwardTrace, OacLinearLayer};
