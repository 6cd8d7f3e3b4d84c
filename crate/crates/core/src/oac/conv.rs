//! Patch rearrangement that lets the OAC linear layer act as a convolution.
//!
//! Each output location becomes one column holding its receptive field,
//! flattened channel-major, then by kernel row, then kernel column. Running
//! the linear layer over those columns and reassembling gives the conv output.

use serde::{Deserialize, Serialize};

use crate::clinalg::{Complex, ComplexMatrix};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FeatureShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn flat(dim: usize) -> Self {
        Self::new(dim, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub padding: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(kernel_h: usize, kernel_w: usize, padding: usize, stride: usize) -> Self {
        Self {
            kernel_h,
            kernel_w,
            padding,
            stride,
        }
    }

    /// Output spatial size for the given input, or an error if the kernel does not fit.
    pub fn output_hw(&self, input: &FeatureShape) -> Result<(usize, usize)> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return Err(invalid("kernel sizes and stride must be >= 1"));
        }
        let ph = input.height + 2 * self.padding;
        let pw = input.width + 2 * self.padding;
        if self.kernel_h > ph || self.kernel_w > pw {
            return Err(invalid(format!(
                "{}x{} kernel does not fit a padded {ph}x{pw} map",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    pub fn patch_len(&self, channels: usize) -> usize {
        channels * self.kernel_h * self.kernel_w
    }
}

/// Input index read by patch row `p` at output location `(oy, ox)`, if not padding.
#[inline]
fn source_index(
    shape: &FeatureShape,
    geom: &ConvGeometry,
    p: usize,
    oy: usize,
    ox: usize,
) -> Option<usize> {
    let kk = geom.kernel_h * geom.kernel_w;
    let ch = p / kk;
    let ky = (p % kk) / geom.kernel_w;
    let kx = p % geom.kernel_w;
    let y = (oy * geom.stride + ky) as isize - geom.padding as isize;
    let x = (ox * geom.stride + kx) as isize - geom.padding as isize;
    if y < 0 || x < 0 || y as usize >= shape.height || x as usize >= shape.width {
        return None;
    }
    Some((ch * shape.height + y as usize) * shape.width + x as usize)
}

/// One column per output location for a single channel-major feature map.
pub fn conv_rearrange(
    map: &[Complex],
    shape: &FeatureShape,
    geom: &ConvGeometry,
) -> Result<ComplexMatrix> {
    let batch = ComplexMatrix::column(map.to_vec());
    conv_rearrange_batch(&batch, shape, geom)
}

/// Patches for a batch whose columns are flattened feature maps. Column
/// `b·L + l` of the result is location `l` of sample `b`.
pub fn conv_rearrange_batch(
    batch: &ComplexMatrix,
    shape: &FeatureShape,
    geom: &ConvGeometry,
) -> Result<ComplexMatrix> {
    if batch.rows() != shape.len() {
        return Err(Error::Shape {
            op: "conv_rearrange",
            left: (shape.len(), batch.cols()),
            right: batch.shape(),
        });
    }
    let (oh, ow) = geom.output_hw(shape)?;
    let locations = oh * ow;
    let rows = geom.patch_len(shape.channels);
    let mut out = ComplexMatrix::zeros(rows, batch.cols() * locations);
    for b in 0..batch.cols() {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = b * locations + oy * ow + ox;
                for p in 0..rows {
                    if let Some(src) = source_index(shape, geom, p, oy, ox) {
                        out[(p, col)] = batch[(src, b)];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`conv_rearrange_batch`]: scatters patch gradients back onto the
/// input maps, summing overlapping receptive fields.
pub fn conv_rearrange_adjoint(
    patches: &ComplexMatrix,
    shape: &FeatureShape,
    geom: &ConvGeometry,
    batch_size: usize,
) -> Result<ComplexMatrix> {
    let (oh, ow) = geom.output_hw(shape)?;
    let locations = oh * ow;
    let rows = geom.patch_len(shape.channels);
    if patches.shape() != (rows, batch_size * locations) {
        return Err(Error::Shape {
            op: "conv_rearrange_adjoint",
            left: (rows, batch_size * locations),
            right: patches.shape(),
        });
    }
    let mut out = ComplexMatrix::zeros(shape.len(), batch_size);
    for b in 0..batch_size {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = b * locations + oy * ow + ox;
                for p in 0..rows {
                    if let Some(src) = source_index(shape, geom, p, oy, ox) {
                        out[(src, b)] += patches[(p, col)];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse rearrangement of layer outputs: `c_out × (B·H'·W')` columns back to
/// `(c_out·H'·W') × B` channel-major maps.
pub fn conv_reassemble(
    outputs: &ComplexMatrix,
    out_h: usize,
    out_w: usize,
) -> Result<ComplexMatrix> {
    let locations = out_h * out_w;
    if locations == 0 || !outputs.cols().is_multiple_of(locations) {
        return Err(invalid(format!(
            "{} columns do not split into {out_h}x{out_w} maps",
            outputs.cols()
        )));
    }
    let batch = outputs.cols() / locations;
    let c_out = outputs.rows();
    let mut out = ComplexMatrix::zeros(c_out * locations, batch);
    for b in 0..batch {
        for ch in 0..c_out {
            for l in 0..locations {
                out[(ch * locations + l, b)] = outputs[(ch, b * locations + l)];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`conv_reassemble`] (also its adjoint, being a permutation).
pub fn conv_disassemble(maps: &ComplexMatrix, c_out: usize, locations: usize) -> Result<ComplexMatrix> {
    if maps.rows() != c_out * locations {
        return Err(Error::Shape {
            op: "conv_disassemble",
            left: (c_out * locations, maps.cols()),
            right: maps.shape(),
        });
    }
    let batch = maps.cols();
    let mut out = ComplexMatrix::zeros(c_out, batch * locations);
    for b in 0..batch {
        for ch in 0..c_out {
            for l in 0..locations {
                out[(ch, b * locations + l)] = maps[(ch * locations + l, b)];
            }
        }
    }
    Ok(out)
}
