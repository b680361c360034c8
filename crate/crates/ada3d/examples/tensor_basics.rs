//! Dense row-major tensors: construction, indexing, reshaping, and exact
//! mode-k unfolding/folding.
//!
//! Run with `cargo run --example tensor_basics`.

use ada3d::tensor::{mode_k_fold, mode_k_unfold};
use ada3d::Tensor;

fn main() -> ada3d::Result<()> {
    // Index-encoded entries make the layout visible: entry (i, j, k) holds
    // the value 100·i + 10·j + k.
    let t = Tensor::from_fn(&[2, 3, 4], |idx| (idx[0] * 100 + idx[1] * 10 + idx[2]) as f64);
    println!("volume {:?}, {} elements", t.shape(), t.len());
    println!("t[1,2,3] = {}", t.get(&[1, 2, 3]));
    println!("flat prefix = {:?}", &t.data()[..6]);

    // Mode-k unfolding (k counted from 1) flattens all axes but `k` into
    // columns; folding restores the original volume bit for bit.
    for mode in 1..=3 {
        let unfolded = mode_k_unfold(&t, mode)?;
        let refolded = mode_k_fold(&unfolded, t.shape(), mode)?;
        println!(
            "mode-{mode} unfolding {:?} → fold roundtrip exact: {}",
            unfolded.shape(),
            refolded.bit_eq(&t)
        );
    }

    // Reshape reinterprets the same flat buffer under a new shape.
    let r = t.reshape(&[6, 4])?;
    println!("reshape {:?} → {:?}, first row {:?}", t.shape(), r.shape(), &r.data()[..4]);

    // Elementwise arithmetic stays shape-checked.
    let doubled = t.add(&t)?;
    println!(
        "t + t peaks at {} (original peak {})",
        doubled.max_abs(),
        t.max_abs()
    );
    Ok(())
}
