//! Dense complex linear algebra used throughout the crate.

mod eig;
mod matrix;

use rand::Rng;
use rand_distr::StandardNormal;

pub use eig::{hermitian_eig, HermitianEig};
pub use matrix::{adjoint, matmul, ComplexMatrix};

use crate::error::{invalid, Result};

pub type Complex = num_complex::Complex64;

/// I.i.d. circularly symmetric complex Gaussian entries with the given
/// per-entry variance (each of re/im gets half).
pub fn random_complex_gaussian<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if !(variance >= 0.0) {
        return Err(invalid(format!("variance must be >= 0, got {variance}")));
    }
    let sd = (variance / 2.0).sqrt();
    Ok(ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * sd, im * sd)
    }))
}
