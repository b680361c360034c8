//! Anatomy of one adaptive 3D convolution block: content-generated per-voxel
//! kernels (a spatial factor times a spectral factor), outer-product biases,
//! and the depth-wise per-voxel application.
//!
//! Run with `cargo run --example adaptive_block_anatomy`.

use ada3d::block::{
    self, Ada3dBlockConfig, Ada3dBlockWeights,
};
use ada3d::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ada3d::Result<()> {
    let cfg = Ada3dBlockConfig::new(8, 4, 3, 1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let weights = Ada3dBlockWeights::random(&cfg, &mut rng)?;

    // Inputs: a 2D spatial feature map F^a and a 3D spectral volume F^b.
    let (h, w, l) = (6, 6, 5);
    let fa = Tensor::uniform(&[h, w, cfg.c_spat], -1.0, 1.0, &mut rng);
    let fb = Tensor::uniform(&[h, w, l, cfg.c_spec], -1.0, 1.0, &mut rng);
    println!("spatial features  {:?}", fa.shape());
    println!("spectral volume   {:?}", fb.shape());

    // Each factor comes from its own two-layer generator.
    let ka = block::generate_spatial_kernels(&fa, &cfg, &weights.kgen_spatial_w1, &weights.kgen_spatial_w2)?;
    let kb = block::generate_spectral_kernels(&fb, &cfg, &weights.kgen_spectral_w1, &weights.kgen_spectral_w2)?;
    println!("spatial factor    {:?}", ka.shape());
    println!("spectral factor   {:?}", kb.shape());

    // Their per-voxel product is then normalized field by field to zero mean
    // and unit norm.
    let kernels = block::combine_kernels(&ka, &kb, cfg.kernel)?;
    let normalized = block::normalize_kernel_fields(&kernels.combined, cfg.field_len())?;
    println!("per-voxel kernels {:?}", normalized.shape());

    // The kernels really are adaptive: fields at different voxels differ.
    let f = cfg.field_len();
    let kd = normalized.data();
    let first = &kd[..f];
    let worst_gap = (1..h * w * l * cfg.c_spec)
        .map(|i| {
            kd[i * f..(i + 1) * f]
                .iter()
                .zip(first)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max);
    println!("largest field-to-field deviation: {worst_gap:.4}");

    // Biases factorize over position, band, and channel.
    let biases = block::generate_biases(&fa, &fb, &cfg, &weights)?;
    println!(
        "bias factors      {:?} ⊗ {:?} ⊗ {:?} → {:?}",
        biases.spatial.shape(),
        biases.spectral.shape(),
        biases.channel.shape(),
        biases.combined.shape()
    );

    // Depth-wise application of the per-voxel kernels plus biases equals the
    // packaged whole-block forward.
    let manual = block::ada3d_apply(&fb, &normalized, Some(&biases.combined), cfg.kernel)?;
    let packaged = block::block_forward(&fa, &fb, &cfg, &weights)?;
    let gap = manual
        .data()
        .iter()
        .zip(packaged.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("block output      {:?}", packaged.shape());
    println!("manual composition matches packaged forward to {gap:.1e}");
    Ok(())
}
