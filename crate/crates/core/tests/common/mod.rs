#![allow(dead_code)]

use oac_split::clinalg::{Complex, ComplexMatrix};

/// Central-difference gradient `∂L/∂re + j∂L/∂im` of `loss` at every entry of `at`.
pub fn numeric_grad(at: &ComplexMatrix, h: f64, mut loss: impl FnMut(&ComplexMatrix) -> f64) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(at.rows(), at.cols());
    for k in 0..at.len() {
        let mut probe = |delta: Complex| {
            let mut m = at.clone();
            m.as_mut_slice()[k] += delta;
            loss(&m)
        };
        let re = (probe(Complex::new(h, 0.0)) - probe(Complex::new(-h, 0.0))) / (2.0 * h);
        let im = (probe(Complex::new(0.0, h)) - probe(Complex::new(0.0, -h))) / (2.0 * h);
        out.as_mut_slice()[k] = Complex::new(re, im);
    }
    out
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, floor)`.
pub fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix, floor: f64) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(floor);
    a.max_abs_diff(b) / scale
}

/// `½‖y − y0‖²` and its gradient `y − y0`.
pub fn quadratic(y: &ComplexMatrix, y0: &ComplexMatrix) -> (f64, ComplexMatrix) {
    let d = y.sub(y0).unwrap();
    (0.5 * d.norm_sqr(), d)
}
