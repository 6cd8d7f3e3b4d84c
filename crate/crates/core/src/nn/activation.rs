use crate::clinalg::{Complex, ComplexMatrix};
use crate::error::{Error, Result};

/// Complex ReLU: `max(re, 0) + j·max(im, 0)`.
pub fn crelu(x: &ComplexMatrix) -> ComplexMatrix {
    x.map(|z| Complex::new(z.re.max(0.0), z.im.max(0.0)))
}

pub fn crelu_backward(x: &ComplexMatrix, g_out: &ComplexMatrix) -> Result<ComplexMatrix> {
    if x.shape() != g_out.shape() {
        return Err(Error::Shape {
            op: "crelu_backward",
            left: x.shape(),
            right: g_out.shape(),
        });
    }
    let data = x
        .as_slice()
        .iter()
        .zip(g_out.as_slice())
        .map(|(x, g)| {
            Complex::new(
                if x.re > 0.0 { g.re } else { 0.0 },
                if x.im > 0.0 { g.im } else { 0.0 },
            )
        })
        .collect();
    ComplexMatrix::from_vec(x.rows(), x.cols(), data)
}
