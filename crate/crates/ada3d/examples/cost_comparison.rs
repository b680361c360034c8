//! Closed-form parameter and FLOP counts of the three convolution paradigms
//! on one reference volume, cross-checked against actually constructed
//! generator weights.
//!
//! Run with `cargo run --example cost_comparison`.

use ada3d::block::{self, Ada3dBlockConfig};
use ada3d::cost::{self, Paradigm};
use ada3d::params::ParamSet;

fn main() -> ada3d::Result<()> {
    let (h, w, l, c, k) = (64, 64, 8, 8, 3);
    let (alpha, beta) = (1.0, 1.0);

    println!("volume {h}×{w}×{l}, C = {c}, k = {k}, α = {alpha}, β = {beta}");
    println!(
        "{:<14} {:>12} {:>16} {:>14}",
        "paradigm", "params", "flops", "flops/param"
    );
    for p in Paradigm::ALL {
        let r = cost::cost_report(p, h, w, l, c, k, alpha, beta)?;
        println!(
            "{:<14} {:>12} {:>16} {:>14.1}",
            r.paradigm.tag(),
            r.params,
            r.flops,
            r.flops_per_param
        );
    }

    // The adaptive count is not just a formula: instantiate the kernel
    // generators and count their elements.
    let cfg = Ada3dBlockConfig::new(c, c, k, alpha, beta);
    let specs = block::kernel_generator_param_specs(&cfg, "gen.");
    let built = ParamSet::init(&specs, 0);
    let empirical = cost::empirical_param_count(built.iter().map(|(_, t)| t));
    let model = cost::count_params(Paradigm::Ada3d, c, k, alpha, beta)?;
    println!();
    println!("constructed generator weights: {empirical} elements (model says {model})");

    // Per-parameter work of the standard paradigm is the volume itself,
    // twice (one multiply + one add per tap and voxel).
    let std = cost::cost_report(Paradigm::Standard3d, h, w, l, c, k, alpha, beta)?;
    println!(
        "standard paradigm reuses every weight {} times = 2·{h}·{w}·{l}",
        std.flops_per_param
    );
    Ok(())
}
