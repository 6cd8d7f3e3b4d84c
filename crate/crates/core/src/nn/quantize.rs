//! Constellation-diagram activations: nearest-point QAM quantization forward,
//! straight-through (HardTanh-style) gradient backward.

use serde::{Deserialize, Serialize};

use crate::clinalg::{Complex, ComplexMatrix};
use crate::error::{invalid, Error, Result};

/// A rectangular QAM grid with `levels` points per axis spanning `±delta_r`
/// on the real axis and `±delta_i` on the imaginary axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub levels: usize,
    pub delta_r: f64,
    pub delta_i: f64,
}

impl Default for Constellation {
    /// 16QAM with unit extremes.
    fn default() -> Self {
        Self::square(4, 1.0).expect("valid default")
    }
}

impl Constellation {
    /// Square QAM: `levels` per axis on both axes, extremes `±delta`.
    pub fn square(levels: usize, delta: f64) -> Result<Self> {
        let c = Self {
            levels,
            delta_r: delta,
            delta_i: delta,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(invalid(format!("constellation needs >= 2 levels, got {}", self.levels)));
        }
        if !(self.delta_r > 0.0 && self.delta_i > 0.0) || !self.delta_r.is_finite() || !self.delta_i.is_finite() {
            return Err(invalid("constellation extremes must be finite and > 0"));
        }
        Ok(())
    }

    /// Number of points in the full grid.
    pub fn order(&self) -> usize {
        self.levels * self.levels
    }

    /// The `m`-th level of an axis with extreme `delta`. Written as
    /// `delta·(2m − (n−1))/(n−1)` so mirrored levels are exact negatives.
    pub fn level(&self, delta: f64, m: usize) -> f64 {
        let span = (self.levels - 1) as f64;
        delta * ((2.0 * m as f64 - span) / span)
    }

    pub fn axis_levels(&self, delta: f64) -> Vec<f64> {
        (0..self.levels).map(|m| self.level(delta, m)).collect()
    }

    fn snap(&self, x: f64, delta: f64) -> f64 {
        let n = self.levels;
        let t = (x + delta) * (n - 1) as f64 / (2.0 * delta);
        let centre = if t.is_nan() {
            0
        } else {
            t.round().clamp(0.0, (n - 1) as f64) as usize
        };
        let lo = centre.saturating_sub(1);
        let hi = (centre + 1).min(n - 1);
        let mut best = self.level(delta, lo);
        for m in lo + 1..=hi {
            let cand = self.level(delta, m);
            if prefer(x, cand, best, delta) {
                best = cand;
            }
        }
        best
    }

    pub fn quantize(&self, z: Complex) -> Complex {
        Complex::new(self.snap(z.re, self.delta_r), self.snap(z.im, self.delta_i))
    }
}

/// Whether level `cand` beats `best` for input `x`: strictly closer, or
/// equally close with smaller magnitude, or equal in both and positive.
///
/// Levels and midpoints are not exact in floating point, so distances within a
/// few ulps of each other count as equal.
fn prefer(x: f64, cand: f64, best: f64, delta: f64) -> bool {
    let dc = (x - cand).abs();
    let db = (x - best).abs();
    let tol = 8.0 * f64::EPSILON * delta.max(x.abs());
    if (dc - db).abs() > tol {
        return dc < db;
    }
    if cand.abs() != best.abs() {
        return cand.abs() < best.abs();
    }
    cand > best
}

pub fn qam_activate(x: &ComplexMatrix, c: &Constellation) -> ComplexMatrix {
    x.map(|z| c.quantize(z))
}

/// Straight-through gradient gated on the pre-quantization input, per axis.
pub fn qam_backward(
    x_pre: &ComplexMatrix,
    g_out: &ComplexMatrix,
    c: &Constellation,
) -> Result<ComplexMatrix> {
    if x_pre.shape() != g_out.shape() {
        return Err(Error::Shape {
            op: "qam_backward",
            left: x_pre.shape(),
            right: g_out.shape(),
        });
    }
    let data = x_pre
        .as_slice()
        .iter()
        .zip(g_out.as_slice())
        .map(|(x, g)| {
            let re = if x.re.abs() <= c.delta_r { g.re } else { 0.0 };
            let im = if x.im.abs() <= c.delta_i { g.im } else { 0.0 };
            Complex::new(re, im)
        })
        .collect();
    ComplexMatrix::from_vec(x_pre.rows(), x_pre.cols(), data)
}
