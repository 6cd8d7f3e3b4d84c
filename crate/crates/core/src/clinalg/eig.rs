//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.
//!
//! Every rotation first removes the phase of the pivot `a_pq`, which turns the
//! 2×2 pivot block into a real symmetric one, then applies the classic real
//! Jacobi rotation. The accumulated product of the unitary rotations is the
//! eigenvector matrix.

use super::{Complex, ComplexMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues sorted descending; column `j` of `eigenvectors` pairs with `eigenvalues[j]`.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Columns `start..` of the eigenvector matrix (the trailing subspace).
    pub fn trailing(&self, start: usize) -> ComplexMatrix {
        self.eigenvectors.col_block(start.min(self.dim()), self.dim())
    }

    /// Columns `..end` of the eigenvector matrix (the leading subspace).
    pub fn leading(&self, end: usize) -> ComplexMatrix {
        self.eigenvectors.col_block(0, end.min(self.dim()))
    }

    /// `U · diag(λ) · Uᴴ`
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.dim();
        let u = &self.eigenvectors;
        let scaled = ComplexMatrix::from_fn(n, n, |i, j| u[(i, j)] * self.eigenvalues[j]);
        scaled.matmul_adjoint(u).expect("square factors")
    }
}

pub fn hermitian_eig(r: &ComplexMatrix) -> Result<HermitianEig> {
    if !r.is_square() {
        return Err(Error::Shape {
            op: "hermitian_eig",
            left: r.shape(),
            right: (r.cols(), r.rows()),
        });
    }
    let n = r.rows();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            asym = asym.max((r[(i, j)] - r[(j, i)].conj()).norm());
        }
    }
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }

    let mut a = r.clone();
    for i in 0..n {
        a[(i, i)] = Complex::new(a[(i, i)].re, 0.0);
    }
    let mut v = ComplexMatrix::identity(n);
    // Scale the stopping threshold so large-norm inputs still terminate
    // before the sweep cap; unit-scale inputs get the absolute tolerance.
    let tol = OFF_DIAGONAL_TOL * r.frobenius().max(1.0);

    for _ in 0..MAX_SWEEPS {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].norm());
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let phase = apq / g;

    let tau = (aqq - app) / (2.0 * g);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // J = diag(1, conj(phase)) · [[c, s], [-s, c]]
    let j_pp = Complex::new(c, 0.0);
    let j_pq = Complex::new(s, 0.0);
    let j_qp = -phase.conj() * s;
    let j_qq = phase.conj() * c;

    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * j_pp + akq * j_qp;
        a[(k, q)] = akp * j_pq + akq * j_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = j_pp.conj() * apk + j_qp.conj() * aqk;
        a[(q, k)] = j_pq.conj() * apk + j_qq.conj() * aqk;
    }
    a[(p, q)] = Complex::new(0.0, 0.0);
    a[(q, p)] = Complex::new(0.0, 0.0);
    a[(p, p)] = Complex::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * j_pp + vkq * j_qp;
        v[(k, q)] = vkp * j_pq + vkq * j_qq;
    }
}
