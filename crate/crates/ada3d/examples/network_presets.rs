//! The three network presets side by side: channel widths, block counts,
//! upsampler choice, and parameter budgets, plus a forward pass through each
//! to show the shared two-branch shape flow.
//!
//! Run with `cargo run --example network_presets`.

use ada3d::net::{FusionNet, FusionSample, NetworkConfig};
use ada3d::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ada3d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    println!(
        "{:<16} {:>7} {:>7} {:>5} {:>5} {:>12} {:>10}",
        "preset", "C_spat", "C_spec", "res", "ada", "upsampler", "params"
    );
    for (name, bands) in [("toy", 4), ("hyperspectral", 8), ("pansharpening", 4)] {
        let cfg = NetworkConfig::preset(name)?;
        let net = FusionNet::new(cfg, bands, 0)?;
        let cfg = net.config();
        println!(
            "{name:<16} {:>7} {:>7} {:>5} {:>5} {:>12} {:>10}",
            cfg.c_spat,
            cfg.c_spec,
            cfg.res_blocks,
            cfg.ada_blocks,
            cfg.upsampler.tag(),
            net.params().total_elements()
        );

        // One forward pass: a panchromatic image at full resolution plus a
        // band stack at 1/ratio resolution fuse into a full-resolution stack.
        let sample = FusionSample {
            pan: Tensor::uniform(&[16, 16], 0.0, 1.0, &mut rng),
            lr: Tensor::uniform(&[4, 4, bands], 0.0, 1.0, &mut rng),
            gt: None,
        };
        let fused = net.forward(&sample)?;
        println!(
            "{:<16} pan {:?} + lr {:?} → fused {:?}",
            "", sample.pan.shape(), sample.lr.shape(), fused.shape()
        );
    }
    Ok(())
}
