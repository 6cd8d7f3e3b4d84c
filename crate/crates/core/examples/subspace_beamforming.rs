//! The forward subspace loss pushes the combiner out of the weak eigenspace
//! of the received-signal covariance.
//!
//! Signals arrive through a rank-2 channel plus a little noise; a random
//! combiner starts with energy in the noise-only directions, and plain
//! gradient descent on `ℓ_f` drives it out.
//!
//! ```bash
//! cargo run --example subspace_beamforming
//! ```

use oac_split::beamform::{forward_subspace_loss, CovarianceAccumulator};
use oac_split::channel::{gen_channel, PathParams};
use oac_split::clinalg::random_complex_gaussian;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> oac_split::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = 2;
    let params = PathParams { n_paths: r, ..PathParams::default() };
    let mut link = gen_channel(&params, 8, 8, &mut rng)?.with_noise_variance(1e-3);

    let mut acc = CovarianceAccumulator::new(8);
    for _ in 0..20 {
        let x_t = random_complex_gaussian(8, 16, 1.0, &mut rng)?;
        acc.accumulate(&link.transmit_forward(&x_t, &mut rng)?)?;
    }

    let mut c = random_complex_gaussian(8, r, 1.0 / 8.0, &mut rng)?;
    let step = 0.25;
    for it in 0..=200 {
        let (loss, grad) = forward_subspace_loss(&c, &acc, r)?;
        if it % 40 == 0 {
            println!("step {it:>3}: ℓ_f = {loss:.3e}");
        }
        c.axpy(-step, &grad)?;
    }
    Ok(())
}
