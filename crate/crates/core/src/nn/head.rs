use crate::clinalg::{Complex, ComplexMatrix};
use crate::error::{invalid, Result};

/// Softmax cross-entropy on the real parts of complex logits (`classes × batch`).
///
/// Returns the batch-mean loss and its gradient, which lives entirely in the
/// real component: `(softmax(re z) − onehot) / batch`.
pub fn head_loss(z: &ComplexMatrix, labels: &[usize]) -> Result<(f64, ComplexMatrix)> {
    let (classes, batch) = z.shape();
    if labels.len() != batch {
        return Err(invalid(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(invalid("empty batch"));
    }
    let mut loss = 0.0;
    let mut grad = ComplexMatrix::zeros(classes, batch);
    for (j, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(invalid(format!("label {label} out of range for {classes} classes")));
        }
        let max = (0..classes).map(|i| z[(i, j)].re).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..classes).map(|i| (z[(i, j)].re - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - z[(label, j)].re;
        for i in 0..classes {
            let p = (z[(i, j)].re - log_sum).exp();
            let target = if i == label { 1.0 } else { 0.0 };
            grad[(i, j)] = Complex::new((p - target) / batch as f64, 0.0);
        }
    }
    Ok((loss / batch as f64, grad))
}

/// Predicted class per column: argmax of the real parts.
pub fn predict(z: &ComplexMatrix) -> Vec<usize> {
    (0..z.cols())
        .map(|j| {
            let mut best = 0;
            for i in 1..z.rows() {
                if z[(i, j)].re > z[(best, j)].re {
                    best = i;
                }
            }
            best
        })
        .collect()
}
