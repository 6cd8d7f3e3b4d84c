//! A QAM constellation as an activation: snap to the nearest grid point going
//! forward, pass the gradient straight through inside `±Δ` going back.
//!
//! ```bash
//! cargo run --example qam_activation
//! ```

use oac_split::clinalg::{Complex, ComplexMatrix};
use oac_split::nn::{qam_activate, qam_backward, Constellation};

fn main() -> oac_split::Result<()> {
    let qam16 = Constellation::default();
    println!("16QAM axis levels: {:?}", qam16.axis_levels(qam16.delta_r));

    let inputs = [
        Complex::new(0.2, 0.9),
        Complex::new(2.0 / 3.0, 0.0),
        Complex::new(-0.1, -0.4),
        Complex::new(1.7, 0.2),
    ];
    let x = ComplexMatrix::column(inputs.to_vec());
    let y = qam_activate(&x, &qam16);
    let g = qam_backward(&x, &ComplexMatrix::from_fn(4, 1, |_, _| Complex::new(2.0, 3.0)), &qam16)?;
    println!("{:>16} {:>16} {:>12}", "input", "output", "grad(2+3j)");
    for i in 0..4 {
        println!("{:>16.3} {:>16.3} {:>12}", x[(i, 0)], y[(i, 0)], g[(i, 0)]);
    }

    let bpsk = Constellation::square(2, 1.0)?;
    println!("BPSK(-0.1) = {}", bpsk.quantize(Complex::new(-0.1, 0.3)));
    Ok(())
}
