//! Shared helpers for the unit-test modules (compiled only under `cfg(test)`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_difference_grad, Graph, NodeId};
use crate::tensor::Tensor;

pub(crate) fn l2(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scale-free distance between two gradients: ‖a − b‖ / max(‖a‖, ‖b‖, ε).
pub(crate) fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / l2(a).max(l2(b)).max(1e-12)
}

pub(crate) fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, -1.0, 1.0, &mut rng)
}

/// Checks the analytic gradient of a scalar objective against central
/// finite differences (step 1e-5) for every input tensor.
///
/// `build` must construct the same scalar node from whatever leaves it is
/// given; it is re-invoked on perturbed inputs for the finite-difference
/// evaluations.
pub(crate) fn gradcheck(
    inputs: &[Tensor],
    tol: f64,
    build: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId,
) {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &ids);
    let grads = g.backward(out).expect("backward failed");

    for (i, x) in inputs.iter().enumerate() {
        let fd = finite_difference_grad(
            |probe| {
                let mut g2 = Graph::new();
                let ids2: Vec<NodeId> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| g2.constant(if j == i { probe.clone() } else { t.clone() }))
                    .collect();
                let out2 = build(&mut g2, &ids2);
                g2.value(out2).item()
            },
            x,
            1e-5,
        );
        let ad = grads.get(ids[i]).expect("missing gradient for input");
        let err = rel_err(ad, &fd);
        assert!(err < tol, "input {i}: gradient error {err} ≥ {tol}");
    }
}
