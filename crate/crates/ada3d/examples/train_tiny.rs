//! A complete miniature training run: synthesize data, fit the toy fusion
//! network with Adam on the L1 + relative-global-error objective, compare
//! against the bicubic baseline on a held-out sample, and roundtrip the
//! checkpoint.
//!
//! Takes roughly half a minute. Run with `cargo run --example train_tiny`.

use ada3d::conv;
use ada3d::data::{gen_synthetic_dataset, uniform_pan_weights, SyntheticDatasetSpec};
use ada3d::metrics::{psnr, ErgasConvention};
use ada3d::net::{FusionNet, NetworkConfig};
use ada3d::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticDatasetSpec {
        n_samples: 9,
        height: 24,
        width: 24,
        bands: 4,
        blur_sigma: 1.6,
        pan_weights: uniform_pan_weights(4),
        seed: 3,
    };
    let samples = gen_synthetic_dataset(&spec)?;
    let (train_set, held_out) = samples.split_at(8);

    let mut net = FusionNet::new(NetworkConfig::toy(), spec.bands, 0)?;
    println!(
        "toy network: {} parameters across {} tensors",
        net.params().total_elements(),
        net.params().len()
    );

    let tc = TrainConfig {
        epochs: 150,
        batch_size: 4,
        initial_lr: 1e-3,
        halving_epochs: vec![90, 130],
        lambda_ergas: 1e-4,
        convention: ErgasConvention::SquaredMean,
        seed: 0,
    };
    let report = train(&mut net, train_set, &tc)?;
    for (e, loss) in report.epoch_losses.iter().enumerate() {
        if e % 25 == 0 || e + 1 == report.epoch_losses.len() {
            println!("epoch {:>3}  loss {loss:.6}  lr {:.2e}", e + 1, report.lr_trace[e]);
        }
    }
    println!(
        "loss fell {:.1}× over {} epochs",
        report.epoch_losses[0] / report.final_loss(),
        tc.epochs
    );

    // Held-out comparison against plain bicubic upsampling.
    let sample = &held_out[0];
    let gt = sample.gt.as_ref().expect("ground truth");
    let fused = net.forward(sample)?;
    let bicubic = conv::bicubic_upsample(&sample.lr, net.config().ratio)?;
    println!(
        "held-out PSNR: fused {:.2} dB vs bicubic {:.2} dB",
        psnr(&fused, gt, 1.0)?,
        psnr(&bicubic, gt, 1.0)?
    );

    // Checkpoints restore the exact same function.
    let dir = tempfile::tempdir()?;
    net.save_checkpoint(dir.path())?;
    let restored = FusionNet::load_checkpoint(dir.path())?;
    let refused = restored.forward(sample)?;
    println!("checkpoint roundtrip reproduces the output: {}", refused.bit_eq(&fused));
    Ok(())
}
