//! Self-adaptive beamforming regularizers.
//!
//! The receiver estimates the covariance of what it hears, and the
//! transmitter the covariance of the gradients it gets back. Eigenvectors
//! past the nominal rank span the weak subchannels; the losses penalize
//! combiner energy (forward) and transmitted energy (backward) there. The
//! eigendecomposition is a stop-gradient boundary.

use crate::clinalg::{hermitian_eig, ComplexMatrix};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    dim: usize,
    sum_outer: ComplexMatrix,
    n_samples: usize,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sum_outer: ComplexMatrix::zeros(dim, dim),
            n_samples: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Adds `v·vᴴ` for every column of `v`.
    pub fn accumulate(&mut self, v: &ComplexMatrix) -> Result<()> {
        if v.rows() != self.dim {
            return Err(Error::Shape {
                op: "accumulate",
                left: (self.dim, 1),
                right: v.shape(),
            });
        }
        self.sum_outer.add_assign(&v.matmul_adjoint(v)?)?;
        self.n_samples += v.cols();
        Ok(())
    }

    pub fn mean(&self) -> Result<ComplexMatrix> {
        if self.n_samples == 0 {
            return Err(invalid("covariance accumulator is empty"));
        }
        Ok(self.sum_outer.scale_real(1.0 / self.n_samples as f64))
    }

    pub fn reset(&mut self) {
        self.sum_outer.fill_zero();
        self.n_samples = 0;
    }

    /// Eigenvectors `r..dim` of the mean covariance (the weakest directions).
    pub fn weak_subspace(&self, r: usize) -> Result<ComplexMatrix> {
        if r > self.dim {
            return Err(invalid(format!("rank {r} exceeds dimension {}", self.dim)));
        }
        Ok(hermitian_eig(&self.mean()?)?.trailing(r))
    }
}

/// `ℓ_f = ‖Cᴴ U_{r+1:}‖²_F` and its gradient `2·U_{r+1:}U_{r+1:}ᴴ C`.
pub fn forward_subspace_loss(
    c: &ComplexMatrix,
    acc: &CovarianceAccumulator,
    r: usize,
) -> Result<(f64, ComplexMatrix)> {
    if c.rows() != acc.dim() {
        return Err(Error::Shape {
            op: "forward_subspace_loss",
            left: (acc.dim(), acc.dim()),
            right: c.shape(),
        });
    }
    let weak = acc.weak_subspace(r)?;
    let proj = weak.adjoint_matmul(c)?;
    let loss = proj.norm_sqr();
    let grad = weak.matmul(&proj)?.scale_real(2.0);
    Ok((loss, grad))
}

/// `ℓ_b = mean over transmissions of ‖U′_{r+1:}ᴴ x_t‖²`, where `U′` comes from
/// the covariance of the returned gradients. Returns one gradient matrix per
/// input block, each `2/M · U′U′ᴴ x_t` with `M` the total column count.
pub fn backward_subspace_loss(
    acc_b: &CovarianceAccumulator,
    x_t: &[ComplexMatrix],
    r: usize,
) -> Result<(f64, Vec<ComplexMatrix>)> {
    let total: usize = x_t.iter().map(ComplexMatrix::cols).sum();
    if total == 0 {
        return Err(invalid("no transmitted signals"));
    }
    let weak = acc_b.weak_subspace(r)?;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(x_t.len());
    for block in x_t {
        if block.rows() != acc_b.dim() {
            return Err(Error::Shape {
                op: "backward_subspace_loss",
                left: (acc_b.dim(), block.cols()),
                right: block.shape(),
            });
        }
        let proj = weak.adjoint_matmul(block)?;
        loss += proj.norm_sqr();
        grads.push(weak.matmul(&proj)?.scale_real(2.0 / total as f64));
    }
    Ok((loss / total as f64, grads))
}

/// Task loss plus weighted subspace penalties.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBundle {
    pub task: f64,
    pub forward: f64,
    pub backward: f64,
    pub lambda_f: f64,
    pub lambda_b: f64,
    pub total: f64,
}

pub fn total_loss(task: f64, forward: f64, backward: f64, lambda_f: f64, lambda_b: f64) -> LossBundle {
    LossBundle {
        task,
        forward,
        backward,
        lambda_f,
        lambda_b,
        total: task + lambda_f * forward + lambda_b * backward,
    }
}
