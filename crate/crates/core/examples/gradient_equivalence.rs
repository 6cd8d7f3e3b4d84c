//! Backpropagation over the reverse link equals backpropagation that reads H.
//!
//! The receiver sends `conj(C g)` through `Hᵀ` and the transmitter conjugates
//! what it hears. On a noiseless link this reproduces `Hᴴ C g` exactly; with
//! noise the two differ by a zero-mean perturbation.
//!
//! ```bash
//! cargo run --example gradient_equivalence
//! ```

use oac_split::channel::{gen_channel, PathParams};
use oac_split::clinalg::random_complex_gaussian;
use oac_split::oac::OacLinearLayer;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> oac_split::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n_i, n_o, n_t, n_r, r) = (16, 16, 16, 16, 4);
    let layer = OacLinearLayer::init(n_i, n_o, n_t, n_r, r, &mut rng)?;
    let mut link = gen_channel(&PathParams::default(), n_t, n_r, &mut rng)?;
    println!("{} rounds of {} streams over a {}x{} link", layer.k_rounds(), r, n_r, n_t);

    let x = random_complex_gaussian(n_i, 8, 1.0, &mut rng)?;
    let g_y = random_complex_gaussian(n_o, 8, 1.0, &mut rng)?;

    let (y, trace) = layer.forward(&mut link, &x, &mut rng)?;
    let direct = layer.effective_weight(&link.h)?.matmul(&x)?;
    println!("forward vs CᴴHPW̃x:       {:.2e}", y.max_abs_diff(&direct));

    let ideal = layer.backward_ideal(&link, &trace, &g_y)?;
    let ota = layer.backward_ota(&link, &trace, &g_y, &mut rng)?;
    println!("noiseless OTA vs ideal:   {:.2e}", ota.max_abs_diff(&ideal));

    let noisy = link.clone().with_noise_variance(1e-2);
    let ota = layer.backward_ota(&noisy, &trace, &g_y, &mut rng)?;
    println!("σ² = 1e-2 OTA vs ideal:   {:.2e}", ota.max_abs_diff(&ideal));
    Ok(())
}
