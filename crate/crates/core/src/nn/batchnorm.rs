//! Per-component batch normalization: real and imaginary parts are normalized
//! as independent real features.
//!
//! Features are grouped by channel; a batch matrix holds `channels × spatial`
//! rows per sample (channel-major), and statistics pool over batch and space.

use serde::{Deserialize, Serialize};

use crate::clinalg::{Complex, ComplexMatrix};
use crate::error::{invalid, Error, Result};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// Scale, shift and running statistics. Each complex entry packs the real-part
/// statistic in `re` and the imaginary-part statistic in `im`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNormState {
    pub channels: usize,
    pub spatial: usize,
    pub gamma: ComplexMatrix,
    pub beta: ComplexMatrix,
    pub running_mean: ComplexMatrix,
    pub running_var: ComplexMatrix,
}

/// What the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: ComplexMatrix,
    inv_std: Vec<Complex>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub g_x: ComplexMatrix,
    pub g_gamma: ComplexMatrix,
    pub g_beta: ComplexMatrix,
}

impl BatchNormState {
    pub fn new(channels: usize, spatial: usize) -> Self {
        let one = ComplexMatrix::from_fn(channels, 1, |_, _| Complex::new(1.0, 1.0));
        Self {
            channels,
            spatial,
            gamma: one.clone(),
            beta: ComplexMatrix::zeros(channels, 1),
            running_mean: ComplexMatrix::zeros(channels, 1),
            running_var: one,
        }
    }

    fn check(&self, x: &ComplexMatrix) -> Result<()> {
        if x.rows() != self.channels * self.spatial {
            return Err(Error::Shape {
                op: "batchnorm",
                left: (self.channels * self.spatial, x.cols()),
                right: x.shape(),
            });
        }
        Ok(())
    }

    fn moments(&self, x: &ComplexMatrix, ch: usize) -> (Complex, Complex) {
        let m = (self.spatial * x.cols()) as f64;
        let rows = ch * self.spatial..(ch + 1) * self.spatial;
        let mut sum = Complex::new(0.0, 0.0);
        for i in rows.clone() {
            sum += x.row(i).iter().sum::<Complex>();
        }
        let mean = sum / m;
        let mut var = Complex::new(0.0, 0.0);
        for i in rows {
            for z in x.row(i) {
                let d = z - mean;
                var += Complex::new(d.re * d.re, d.im * d.im);
            }
        }
        (mean, var / m)
    }

    /// Normalizes with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, x: &ComplexMatrix) -> Result<(ComplexMatrix, BatchNormCache)> {
        self.check(x)?;
        if x.cols() < 2 {
            return Err(invalid("batch normalization in training mode needs a batch of >= 2"));
        }
        let mut x_hat = ComplexMatrix::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(self.channels);
        for ch in 0..self.channels {
            let (mean, var) = self.moments(x, ch);
            let inv = Complex::new(1.0 / (var.re + BN_EPS).sqrt(), 1.0 / (var.im + BN_EPS).sqrt());
            for i in ch * self.spatial..(ch + 1) * self.spatial {
                for (o, z) in x_hat.row_mut(i).iter_mut().zip(x.row(i)) {
                    *o = Complex::new((z.re - mean.re) * inv.re, (z.im - mean.im) * inv.im);
                }
            }
            inv_std.push(inv);
            let rm = &mut self.running_mean[(ch, 0)];
            *rm = *rm * BN_MOMENTUM + mean * (1.0 - BN_MOMENTUM);
            let rv = &mut self.running_var[(ch, 0)];
            *rv = *rv * BN_MOMENTUM + var * (1.0 - BN_MOMENTUM);
        }
        let y = self.affine(&x_hat);
        Ok((y, BatchNormCache { x_hat, inv_std }))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check(x)?;
        let mut x_hat = x.clone();
        for ch in 0..self.channels {
            let mean = self.running_mean[(ch, 0)];
            let var = self.running_var[(ch, 0)];
            let inv = Complex::new(1.0 / (var.re + BN_EPS).sqrt(), 1.0 / (var.im + BN_EPS).sqrt());
            for i in ch * self.spatial..(ch + 1) * self.spatial {
                for z in x_hat.row_mut(i) {
                    *z = Complex::new((z.re - mean.re) * inv.re, (z.im - mean.im) * inv.im);
                }
            }
        }
        Ok(self.affine(&x_hat))
    }

    fn affine(&self, x_hat: &ComplexMatrix) -> ComplexMatrix {
        let mut y = x_hat.clone();
        for ch in 0..self.channels {
            let g = self.gamma[(ch, 0)];
            let b = self.beta[(ch, 0)];
            for i in ch * self.spatial..(ch + 1) * self.spatial {
                for z in y.row_mut(i) {
                    *z = Complex::new(z.re * g.re + b.re, z.im * g.im + b.im);
                }
            }
        }
        y
    }

    pub fn backward(&self, cache: &BatchNormCache, g_y: &ComplexMatrix) -> Result<BatchNormGrads> {
        if g_y.shape() != cache.x_hat.shape() {
            return Err(Error::Shape {
                op: "batchnorm_backward",
                left: cache.x_hat.shape(),
                right: g_y.shape(),
            });
        }
        let m = (self.spatial * g_y.cols()) as f64;
        let mut g_x = ComplexMatrix::zeros(g_y.rows(), g_y.cols());
        let mut g_gamma = ComplexMatrix::zeros(self.channels, 1);
        let mut g_beta = ComplexMatrix::zeros(self.channels, 1);
        for ch in 0..self.channels {
            let rows = ch * self.spatial..(ch + 1) * self.spatial;
            let gamma = self.gamma[(ch, 0)];
            // per component: Σg, Σg·x̂
            let (mut sg, mut sgx) = ([0.0; 2], [0.0; 2]);
            for i in rows.clone() {
                for (g, xh) in g_y.row(i).iter().zip(cache.x_hat.row(i)) {
                    sg[0] += g.re;
                    sg[1] += g.im;
                    sgx[0] += g.re * xh.re;
                    sgx[1] += g.im * xh.im;
                }
            }
            g_beta[(ch, 0)] = Complex::new(sg[0], sg[1]);
            g_gamma[(ch, 0)] = Complex::new(sgx[0], sgx[1]);
            let inv = cache.inv_std[ch];
            let scale = [gamma.re * inv.re / m, gamma.im * inv.im / m];
            for i in rows {
                for j in 0..g_y.cols() {
                    let g = g_y[(i, j)];
                    let xh = cache.x_hat[(i, j)];
                    g_x[(i, j)] = Complex::new(
                        scale[0] * (m * g.re - sg[0] - xh.re * sgx[0]),
                        scale[1] * (m * g.im - sg[1] - xh.im * sgx[1]),
                    );
                }
            }
        }
        Ok(BatchNormGrads {
            g_x,
            g_gamma,
            g_beta,
        })
    }

    pub fn is_valid(&self) -> bool {
        self.running_var.as_slice().iter().all(|v| v.re >= 0.0 && v.im >= 0.0)
    }
}
