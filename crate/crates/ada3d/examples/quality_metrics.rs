//! Full-reference quality metrics on a controlled degradation: peak
//! signal-to-noise ratio, correlation, structural similarity, spectral angle,
//! and the relative dimensionless global error with its two normalizer
//! conventions.
//!
//! Run with `cargo run --example quality_metrics`.

use ada3d::data::gaussian_blur_2d;
use ada3d::metrics::{ergas, ErgasConvention, MetricReport};
use ada3d::Tensor;

fn main() -> ada3d::Result<()> {
    // A smooth reference volume: band-dependent sinusoid ramps.
    let (h, w, l) = (32, 32, 4);
    let reference = Tensor::from_fn(&[h, w, l], |i| {
        let (y, x, b) = (i[0] as f64, i[1] as f64, i[2] as f64);
        0.5 + 0.25 * ((0.2 * x + 0.1 * b).sin() + (0.15 * y - 0.2 * b).cos()) / 2.0
    });

    // Degrade each band by a Gaussian blur — a mild, structured error.
    let mut bands = Vec::new();
    for b in 0..l {
        let band = Tensor::from_fn(&[h, w], |i| reference.get(&[i[0], i[1], b]));
        bands.push(gaussian_blur_2d(&band, 1.5)?);
    }
    let degraded = Tensor::from_fn(&[h, w, l], |i| bands[i[2]].get(&[i[0], i[1]]));

    let report = MetricReport::compute(&degraded, &reference, 4, ErgasConvention::SquaredMean)?;
    println!("blurred vs reference ({h}×{w}×{l}):");
    for (key, value) in report.record_fields() {
        println!("  {key:<14} {value}");
    }

    // A perfect prediction pins every metric to its ideal value.
    let ideal = MetricReport::compute(&reference, &reference, 4, ErgasConvention::SquaredMean)?;
    println!();
    println!(
        "self-comparison: psnr {} dB (capped), cc {}, ssim {}, sam {:.1e}°, ergas {}",
        ideal.psnr_db, ideal.cc, ideal.ssim, ideal.sam_degrees, ideal.ergas
    );

    // The two normalizer conventions differ once band means vary.
    println!();
    for convention in [ErgasConvention::SquaredMean, ErgasConvention::MeanSquare] {
        let value = ergas(&degraded, &reference, 4, convention)?;
        println!("relative global error, {convention} normalizer: {value:.6}");
    }
    Ok(())
}
