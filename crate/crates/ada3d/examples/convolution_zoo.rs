//! The convolution family on channels-last tensors: dense and grouped 1D/2D/3D
//! passes, bicubic upsampling, and sub-pixel (pixel-shuffle) upsampling.
//!
//! Run with `cargo run --example convolution_zoo`.

use ada3d::conv::{self, ConvSpec};
use ada3d::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn summary(name: &str, t: &Tensor) {
    println!("{name:<28} {:>14} mean {:+.6}", format!("{:?}", t.shape()), t.mean());
}

fn main() -> ada3d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // 1D over a band axis: [length, channels] with a [C_out, C_in, k] filter.
    let x1 = Tensor::uniform(&[8, 2], -1.0, 1.0, &mut rng);
    let w1 = Tensor::uniform(&[4, 2, 3], -0.5, 0.5, &mut rng);
    let b1 = Tensor::uniform(&[4], -0.1, 0.1, &mut rng);
    summary("conv1d 2→4 k=3", &conv::conv1d(&x1, &ConvSpec::new(2, 4, 3), &w1, Some(&b1))?);

    // 2D over an image: [H, W, channels] with a [C_out, C_in, k, k] filter.
    let x2 = Tensor::uniform(&[6, 6, 3], -1.0, 1.0, &mut rng);
    let w2 = Tensor::uniform(&[8, 3, 3, 3], -0.5, 0.5, &mut rng);
    summary("conv2d 3→8 k=3", &conv::conv2d(&x2, &ConvSpec::new(3, 8, 3), &w2, None)?);

    // 3D over a volume: [H, W, L, channels] with a [C_out, C_in, k, k, k]
    // filter; same-padding keeps the grid.
    let x3 = Tensor::uniform(&[4, 4, 4, 2], -1.0, 1.0, &mut rng);
    let w3 = Tensor::uniform(&[2, 2, 3, 3, 3], -0.3, 0.3, &mut rng);
    summary("conv3d 2→2 k=3", &conv::conv3d(&x3, &ConvSpec::new(2, 2, 3), &w3, None)?);

    // Depth-wise 3D: groups = channels, so each channel convolves alone and
    // the filter shrinks to [C, 1, k, k, k].
    let x4 = Tensor::uniform(&[4, 4, 4, 4], -1.0, 1.0, &mut rng);
    let w4 = Tensor::uniform(&[4, 1, 3, 3, 3], -0.3, 0.3, &mut rng);
    summary(
        "depth-wise conv3d 4→4 k=3",
        &conv::conv3d(&x4, &ConvSpec::grouped(4, 4, 3, 4), &w4, None)?,
    );

    // Bicubic upsampling interpolates each channel on a 4×4 neighborhood.
    let low = Tensor::uniform(&[4, 4, 2], 0.0, 1.0, &mut rng);
    summary("bicubic ×4", &conv::bicubic_upsample(&low, 4)?);

    // Pixel shuffle rearranges r²·C channels into an r-times finer grid.
    let packed = Tensor::uniform(&[4, 4, 8], -1.0, 1.0, &mut rng);
    summary("pixel shuffle r=2", &conv::pixel_shuffle(&packed, 2)?);

    // The learned upsampler is a 3×3 convolution into r²·C channels followed
    // by the shuffle.
    let wup = Tensor::uniform(&[32, 2, 3, 3], -0.2, 0.2, &mut rng);
    summary(
        "learned ×4 upsample",
        &conv::pixel_shuffle_upsample(&low, 4, &wup, None)?,
    );
    Ok(())
}
