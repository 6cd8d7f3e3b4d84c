//! An 8-path channel on a 64×64 array has rank 8: the spectrum of `HᴴH`
//! collapses after the eighth eigenvalue. Mixing in a fresh draw (mobility)
//! can at most double the rank.
//!
//! ```bash
//! cargo run --release --example channel_rank
//! ```

use oac_split::channel::{gen_channel, MobilityConfig, PathParams};
use oac_split::clinalg::hermitian_eig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> oac_split::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = PathParams::default();
    let link = gen_channel(&params, 64, 64, &mut rng)?;
    let gram = link.h.adjoint_matmul(&link.h)?;
    let eig = hermitian_eig(&gram)?;
    let top = eig.eigenvalues[0];
    println!("leading eigenvalues of HᴴH (relative to the largest):");
    for (i, v) in eig.eigenvalues.iter().take(12).enumerate() {
        println!("  {:>2}: {:.3e}", i + 1, v / top);
    }
    let rank = eig.eigenvalues.iter().filter(|v| **v > 1e-9 * top).count();
    println!("numerical rank: {rank}");

    let moved = link.evolved(&MobilityConfig { rho: 0.1, update_interval: 50 }, &params, &mut rng)?;
    let eig = hermitian_eig(&moved.h.adjoint_matmul(&moved.h)?)?;
    let top = eig.eigenvalues[0];
    let rank = eig.eigenvalues.iter().filter(|v| **v > 1e-9 * top).count();
    println!("after one ρ = 0.1 update: {rank}");
    Ok(())
}
