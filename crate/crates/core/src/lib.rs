// `!(x > 0.0)` style checks are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod channel;
pub mod clinalg;
pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod oac;

pub use error::{Error, Result};
