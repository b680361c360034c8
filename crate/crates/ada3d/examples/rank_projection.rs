//! Why 2D features cannot carry a full band stack: mixing L bands down to
//! C < L channels is a rank-deficient projection, and some pixels are lost
//! no matter how the reconstruction is chosen. A square, well-conditioned
//! mixing recovers everything.
//!
//! Run with `cargo run --example rank_projection`.

use ada3d::analysis::spectral_projection_demo;

fn main() -> ada3d::Result<()> {
    let (bands, pixels, trials) = (8, 64, 10);

    println!("compressing {bands} bands to 4 channels ({trials} random trials):");
    let lossy = spectral_projection_demo(bands, 4, pixels, trials, 0)?;
    for (i, t) in lossy.trials.iter().enumerate() {
        println!(
            "  trial {i}: rank(mixing) = {}, worst pixel error after best reconstruction = {:.4}",
            t.rank_a, t.worst_error
        );
    }
    println!(
        "  every trial lost information: worst-case errors span [{:.4}, {:.4}]",
        lossy.min_worst_error, lossy.max_worst_error
    );

    println!();
    println!("compressing {bands} bands to {bands} channels (square, well-conditioned):");
    let exact = spectral_projection_demo(bands, bands, pixels, trials, 0)?;
    println!(
        "  worst-case errors span [{:.3e}, {:.3e}] — recovery is exact to numerical precision",
        exact.min_worst_error, exact.max_worst_error
    );
    Ok(())
}
