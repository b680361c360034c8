//! Reverse-mode differentiation on the expression graph, cross-checked with
//! a central finite difference.
//!
//! Run with `cargo run --example autodiff_basics`.

use ada3d::autodiff::{Graph, NodeId};
use ada3d::Tensor;

/// Mean absolute deviation between `w ⊙ x` and a fixed target — a tiny
/// regression objective. Returns the loss node and the parameter node.
fn objective(
    g: &mut Graph,
    x: Tensor,
    w: Tensor,
    target: &Tensor,
) -> ada3d::Result<(NodeId, NodeId)> {
    let x = g.constant(x);
    let w = g.param(w);
    let t = g.constant(target.clone());
    let prod = g.mul(w, x)?;
    let diff = g.sub(prod, t)?;
    let absdiff = g.abs(diff);
    Ok((g.mean(absdiff), w))
}

fn main() -> ada3d::Result<()> {
    let x = Tensor::new(&[4], vec![0.5, -1.25, 2.0, 0.75])?;
    let w = Tensor::new(&[4], vec![1.0, 0.5, -0.25, 2.0])?;
    let target = Tensor::new(&[4], vec![0.2, -0.4, 0.6, 1.0])?;

    // Forward + reverse sweep.
    let mut g = Graph::new();
    let (loss, wid) = objective(&mut g, x.clone(), w.clone(), &target)?;
    println!("objective value   = {:.9}", g.value(loss).item());
    let grads = g.backward(loss)?;
    let analytic = grads.get(wid).expect("parameter gradient");
    println!("analytic d/dw     = {:?}", analytic.data());

    // Central finite difference, one coordinate at a time.
    let h = 1e-6;
    let mut fd = Vec::new();
    for j in 0..w.len() {
        let eval = |delta: f64| -> ada3d::Result<f64> {
            let mut wj = w.clone();
            wj.data_mut()[j] += delta;
            let mut g = Graph::new();
            let (loss, _) = objective(&mut g, x.clone(), wj, &target)?;
            Ok(g.value(loss).item())
        };
        fd.push((eval(h)? - eval(-h)?) / (2.0 * h));
    }
    println!("finite difference = {fd:?}");

    let worst = analytic
        .data()
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("worst deviation   = {worst:.3e}");
    Ok(())
}
