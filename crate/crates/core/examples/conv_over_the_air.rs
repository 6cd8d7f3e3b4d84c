//! A convolution over the air: every output location is one OAC transmission
//! of the flattened input patch, so a noiseless link reproduces the local
//! convolution with kernel `CᴴHPW̃`.
//!
//! ```bash
//! cargo run --example conv_over_the_air
//! ```

use oac_split::channel::{gen_channel, PathParams};
use oac_split::clinalg::random_complex_gaussian;
use oac_split::oac::{conv_rearrange_batch, conv_reassemble, ConvGeometry, FeatureShape, OacLinearLayer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> oac_split::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let input = FeatureShape::new(2, 6, 6);
    let geom = ConvGeometry::new(3, 3, 1, 1);
    let (oh, ow) = geom.output_hw(&input)?;
    let c_out = 4;

    let layer = OacLinearLayer::init(geom.patch_len(input.channels), c_out, 8, 8, 4, &mut rng)?;
    let mut link = gen_channel(&PathParams::default(), 8, 8, &mut rng)?;

    let batch = random_complex_gaussian(input.len(), 3, 1.0, &mut rng)?;
    let patches = conv_rearrange_batch(&batch, &input, &geom)?;
    println!("{} patches of length {} for a batch of 3", patches.cols(), patches.rows());

    let (y, _) = layer.forward(&mut link, &patches, &mut rng)?;
    let maps = conv_reassemble(&y, oh, ow)?;

    let kernel = layer.effective_weight(&link.h)?;
    let local = conv_reassemble(&kernel.matmul(&patches)?, oh, ow)?;
    println!("output maps {}x{}x{} per sample", c_out, oh, ow);
    println!("over-the-air vs local convolution: {:.2e}", maps.max_abs_diff(&local));
    Ok(())
}
