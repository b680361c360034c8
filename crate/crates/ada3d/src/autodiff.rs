//! Minimal reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! The engine is a flat tape: every operation appends a node holding its
//! eagerly computed value, so insertion order is already a topological
//! order and [`Graph::backward`] is a single reverse sweep with fixed,
//! deterministic accumulation order. The op set is intentionally closed —
//! exactly the primitives the convolution layers, the adaptive-kernel block
//! and the fusion network need, nothing speculative.
//!
//! Non-smooth points follow explicit subgradient conventions: `abs'(0) = 0`
//! and `relu'(0) = 0`. Gradients are only propagated into subgraphs that
//! contain a parameter leaf, so constants (inputs, reference images) cost
//! nothing in the backward pass.

use crate::block;
use crate::conv::{self, ConvSpec};
use crate::error::{Error, Result};
use crate::metrics::{ergas_parts, ErgasConvention};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Abs(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId),
    Concat {
        a: NodeId,
        b: NodeId,
        axis: usize,
    },
    MeanLeading {
        x: NodeId,
        n: usize,
    },
    PixelShuffle {
        x: NodeId,
        r: usize,
    },
    Conv {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        spec: ConvSpec,
        dims: usize,
    },
    CombineKernels {
        spatial: NodeId,
        spectral: NodeId,
    },
    CombineBiases {
        spatial: NodeId,
        spectral: NodeId,
        channel: NodeId,
    },
    NormalizeFields {
        x: NodeId,
        field_len: usize,
    },
    Ada3dApply {
        fb: NodeId,
        kernels: NodeId,
        biases: NodeId,
        kernel: usize,
    },
    Ergas {
        pred: NodeId,
        reference: NodeId,
        ratio: u32,
        convention: ErgasConvention,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`NodeId`].
/// Interior nodes are dropped during the sweep; leaf parameters keep theirs.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// A define-by-run computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value computed for a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Trainable leaf: gradients will be accumulated for it.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf (inputs, reference data, fixed weights).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).mul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let value = self.value(a).scale(s);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::abs);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Abs(a), rg)
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean of all elements, as a scalar node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).mean());
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(a).reshape(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Concatenates two tensors of equal order along `axis`.
    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        let value = concat_forward(self.value(a), self.value(b), axis)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Concat { a, b, axis }, rg))
    }

    /// Mean over the first `n` axes.
    pub fn mean_leading(&mut self, x: NodeId, n: usize) -> Result<NodeId> {
        let value = conv::mean_leading(self.value(x), n)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::MeanLeading { x, n }, rg))
    }

    pub fn pixel_shuffle(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let value = conv::pixel_shuffle(self.value(x), r)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::PixelShuffle { x, r }, rg))
    }

    pub fn conv1d(&mut self, x: NodeId, spec: ConvSpec, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        self.conv_nd(x, spec, w, b, 1)
    }

    pub fn conv2d(&mut self, x: NodeId, spec: ConvSpec, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        self.conv_nd(x, spec, w, b, 2)
    }

    pub fn conv3d(&mut self, x: NodeId, spec: ConvSpec, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        self.conv_nd(x, spec, w, b, 3)
    }

    fn conv_nd(
        &mut self,
        x: NodeId,
        spec: ConvSpec,
        w: NodeId,
        b: Option<NodeId>,
        dims: usize,
    ) -> Result<NodeId> {
        let value = conv::conv_nd_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            &spec,
            dims,
        )?;
        let mut ids = vec![x, w];
        ids.extend(b);
        let rg = self.any_grad(&ids);
        Ok(self.push(value, Op::Conv { x, w, b, spec, dims }, rg))
    }

    /// Per-voxel product of a spatial kernel field `[H, W, C, k³]` and a
    /// spectral kernel field `[L, C, k³]`, giving `[H, W, L, C, k³]`.
    pub fn combine_kernels(&mut self, spatial: NodeId, spectral: NodeId) -> Result<NodeId> {
        let value = block::combine_kernel_fields(self.value(spatial), self.value(spectral))?;
        let rg = self.any_grad(&[spatial, spectral]);
        Ok(self.push(value, Op::CombineKernels { spatial, spectral }, rg))
    }

    /// Outer product of per-position `[H, W]`, per-band `[L]` and per-channel
    /// `[C]` biases, giving `[H, W, L, C]`.
    pub fn combine_biases(&mut self, spatial: NodeId, spectral: NodeId, channel: NodeId) -> Result<NodeId> {
        let value =
            block::combine_bias_factors(self.value(spatial), self.value(spectral), self.value(channel))?;
        let rg = self.any_grad(&[spatial, spectral, channel]);
        Ok(self.push(
            value,
            Op::CombineBiases {
                spatial,
                spectral,
                channel,
            },
            rg,
        ))
    }

    /// Zero-mean / unit-norm normalization of consecutive `field_len`-element
    /// fields (see [`block::normalize_kernel_fields`]).
    pub fn normalize_fields(&mut self, x: NodeId, field_len: usize) -> Result<NodeId> {
        let value = block::normalize_fields_forward(self.value(x), field_len)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::NormalizeFields { x, field_len }, rg))
    }

    /// Depth-wise per-voxel adaptive convolution (see [`block::ada3d_apply`]).
    pub fn ada3d_apply(
        &mut self,
        fb: NodeId,
        kernels: NodeId,
        biases: NodeId,
        kernel: usize,
    ) -> Result<NodeId> {
        let value = block::ada3d_apply_raw(
            self.value(fb),
            self.value(kernels),
            Some(self.value(biases)),
            kernel,
        )?;
        let rg = self.any_grad(&[fb, kernels, biases]);
        Ok(self.push(
            value,
            Op::Ada3dApply {
                fb,
                kernels,
                biases,
                kernel,
            },
            rg,
        ))
    }

    /// Relative dimensionless global error between a prediction node and a
    /// constant reference volume, as a scalar node. Shares its numerical
    /// definition with the metric implementation, so the loss term and the
    /// reported metric agree bit for bit.
    pub fn ergas(
        &mut self,
        pred: NodeId,
        reference: NodeId,
        ratio: u32,
        convention: ErgasConvention,
    ) -> Result<NodeId> {
        if self.requires_grad(reference) {
            return Err(Error::Config(
                "ergas reference must be a constant node".into(),
            ));
        }
        let parts = ergas_parts(self.value(pred), self.value(reference), ratio, convention)?;
        let rg = self.any_grad(&[pred]);
        Ok(self.push(
            Tensor::scalar(parts.value),
            Op::Ergas {
                pred,
                reference,
                ratio,
                convention,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar output node. Returns the gradient map;
    /// only leaves retain gradients (interior ones are consumed in flight).
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out_node = &self.nodes[output.0];
        if out_node.value.len() != 1 {
            return Err(Error::NonScalarBackward {
                len: out_node.value.len(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !out_node.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(Tensor::filled(out_node.value.shape(), 1.0));

        for id in (0..=output.0).rev() {
            if grads[id].is_none() || !self.nodes[id].requires_grad {
                continue;
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue; // keep: this is a requested result
            }
            let g = grads[id].take().expect("checked above");
            self.propagate(id, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    /// Distributes the gradient `g` of node `id` onto its inputs.
    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let rg = |n: &NodeId| self.nodes[n.0].requires_grad;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if rg(a) {
                    add_grad(grads, *a, g.clone());
                }
                if rg(b) {
                    add_grad(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if rg(a) {
                    add_grad(grads, *a, g.clone());
                }
                if rg(b) {
                    add_grad(grads, *b, g.scale(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if rg(a) {
                    add_grad(grads, *a, g.mul(self.value(*b))?);
                }
                if rg(b) {
                    add_grad(grads, *b, g.mul(self.value(*a))?);
                }
            }
            Op::Scale(a, s) => {
                if rg(a) {
                    add_grad(grads, *a, g.scale(*s));
                }
            }
            Op::Relu(a) => {
                if rg(a) {
                    let da = self
                        .value(*a)
                        .zip_map(g, "relu'", |x, gi| if x > 0.0 { gi } else { 0.0 })?;
                    add_grad(grads, *a, da);
                }
            }
            Op::Abs(a) => {
                if rg(a) {
                    // sign(0) = 0 by convention.
                    let da = self.value(*a).zip_map(g, "abs'", |x, gi| gi * sign0(x))?;
                    add_grad(grads, *a, da);
                }
            }
            Op::Sum(a) => {
                if rg(a) {
                    add_grad(grads, *a, Tensor::filled(self.value(*a).shape(), g.item()));
                }
            }
            Op::Mean(a) => {
                if rg(a) {
                    let n = self.value(*a).len() as f64;
                    add_grad(grads, *a, Tensor::filled(self.value(*a).shape(), g.item() / n));
                }
            }
            Op::Reshape(a) => {
                if rg(a) {
                    add_grad(grads, *a, g.reshape(self.value(*a).shape())?);
                }
            }
            Op::Concat { a, b, axis } => {
                let (da, db) = concat_backward(g, self.value(*a), self.value(*b), *axis);
                if rg(a) {
                    add_grad(grads, *a, da);
                }
                if rg(b) {
                    add_grad(grads, *b, db);
                }
            }
            Op::MeanLeading { x, n } => {
                if rg(x) {
                    let xv = self.value(*x);
                    let lead: usize = xv.shape()[..*n].iter().product();
                    let rest = xv.len() / lead;
                    let mut dx = Tensor::zeros(xv.shape());
                    let inv = 1.0 / lead as f64;
                    for chunk in dx.data_mut().chunks_exact_mut(rest) {
                        for (d, &gi) in chunk.iter_mut().zip(g.data()) {
                            *d = gi * inv;
                        }
                    }
                    add_grad(grads, *x, dx);
                }
            }
            Op::PixelShuffle { x, r } => {
                if rg(x) {
                    add_grad(grads, *x, conv::pixel_unshuffle(g, *r)?);
                }
            }
            Op::Conv { x, w, b, spec, dims } => {
                let need_db = b.map(|b| rg(&b)).unwrap_or(false);
                let (dx, dw, db) = conv::conv_nd_backward(
                    self.value(*x),
                    self.value(*w),
                    spec,
                    *dims,
                    g,
                    rg(x),
                    rg(w),
                    need_db,
                )?;
                if let Some(dx) = dx {
                    add_grad(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    add_grad(grads, *w, dw);
                }
                if let (Some(db), Some(b)) = (db, b) {
                    add_grad(grads, *b, db);
                }
            }
            Op::CombineKernels { spatial, spectral } => {
                let (da, db) = block::combine_kernel_fields_backward(
                    self.value(*spatial),
                    self.value(*spectral),
                    g,
                    rg(spatial),
                    rg(spectral),
                );
                if let Some(da) = da {
                    add_grad(grads, *spatial, da);
                }
                if let Some(db) = db {
                    add_grad(grads, *spectral, db);
                }
            }
            Op::CombineBiases {
                spatial,
                spectral,
                channel,
            } => {
                let (da, db, dc) = block::combine_bias_factors_backward(
                    self.value(*spatial),
                    self.value(*spectral),
                    self.value(*channel),
                    g,
                );
                if rg(spatial) {
                    add_grad(grads, *spatial, da);
                }
                if rg(spectral) {
                    add_grad(grads, *spectral, db);
                }
                if rg(channel) {
                    add_grad(grads, *channel, dc);
                }
            }
            Op::NormalizeFields { x, field_len } => {
                if rg(x) {
                    let dx = block::normalize_fields_backward(self.value(*x), g, *field_len);
                    add_grad(grads, *x, dx);
                }
            }
            Op::Ada3dApply {
                fb,
                kernels,
                biases,
                kernel,
            } => {
                let (dfb, dk, dd) = block::ada3d_apply_backward(
                    self.value(*fb),
                    self.value(*kernels),
                    g,
                    *kernel,
                    rg(fb),
                    rg(kernels),
                );
                if let Some(dfb) = dfb {
                    add_grad(grads, *fb, dfb);
                }
                if let Some(dk) = dk {
                    add_grad(grads, *kernels, dk);
                }
                if rg(biases) {
                    add_grad(grads, *biases, dd);
                }
            }
            Op::Ergas {
                pred,
                reference,
                ratio,
                convention,
            } => {
                if rg(pred) {
                    let pv = self.value(*pred);
                    let rv = self.value(*reference);
                    let parts = ergas_parts(pv, rv, *ratio, *convention)?;
                    let mut dp = Tensor::zeros(pv.shape());
                    if parts.sqrt_arg > 0.0 {
                        // E = (100/r)·√S with S = Σ_l w_l·Σ_p(p−r)², so
                        // dE/dp = (100/r)·w_l·(p−r)/√S; the band weights
                        // already carry the 1/(L·HW·μ²) normalization.
                        let l = pv.shape()[2];
                        let scale =
                            g.item() * (100.0 / *ratio as f64) / parts.sqrt_arg.sqrt();
                        let dpd = dp.data_mut();
                        for (i, (&p, &r)) in pv.data().iter().zip(rv.data()).enumerate() {
                            let band = i % l;
                            dpd[i] = scale * parts.band_weights[band] * (p - r);
                        }
                    }
                    add_grad(grads, *pred, dp);
                }
            }
        }
        Ok(())
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_grad(grads: &mut [Option<Tensor>], id: NodeId, t: Tensor) {
    match &mut grads[id.0] {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(t),
    }
}

fn concat_forward(a: &Tensor, b: &Tensor, axis: usize) -> Result<Tensor> {
    if a.order() != b.order() || axis >= a.order() {
        return Err(Error::Shape {
            op: "concat",
            detail: format!("{:?} ++ {:?} along axis {axis}", a.shape(), b.shape()),
        });
    }
    for (d, (&ea, &eb)) in a.shape().iter().zip(b.shape()).enumerate() {
        if d != axis && ea != eb {
            return Err(Error::Shape {
                op: "concat",
                detail: format!("{:?} ++ {:?} along axis {axis}", a.shape(), b.shape()),
            });
        }
    }
    let mut shape = a.shape().to_vec();
    shape[axis] += b.shape()[axis];
    let inner: usize = a.shape()[axis + 1..].iter().product();
    let a_span = a.shape()[axis] * inner;
    let b_span = b.shape()[axis] * inner;
    let outer = a.len() / a_span;
    let mut out = Tensor::zeros(&shape);
    let od = out.data_mut();
    for o in 0..outer {
        let dst = o * (a_span + b_span);
        od[dst..dst + a_span].copy_from_slice(&a.data()[o * a_span..(o + 1) * a_span]);
        od[dst + a_span..dst + a_span + b_span]
            .copy_from_slice(&b.data()[o * b_span..(o + 1) * b_span]);
    }
    Ok(out)
}

fn concat_backward(g: &Tensor, a: &Tensor, b: &Tensor, axis: usize) -> (Tensor, Tensor) {
    let inner: usize = a.shape()[axis + 1..].iter().product();
    let a_span = a.shape()[axis] * inner;
    let b_span = b.shape()[axis] * inner;
    let outer = a.len() / a_span;
    let mut da = Tensor::zeros(a.shape());
    let mut db = Tensor::zeros(b.shape());
    for o in 0..outer {
        let src = o * (a_span + b_span);
        da.data_mut()[o * a_span..(o + 1) * a_span]
            .copy_from_slice(&g.data()[src..src + a_span]);
        db.data_mut()[o * b_span..(o + 1) * b_span]
            .copy_from_slice(&g.data()[src + a_span..src + a_span + b_span]);
    }
    (da, db)
}

/// Central finite-difference gradient of a scalar function at `x`,
/// perturbing one element at a time by ±`h`.
pub fn finite_difference_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    grad
}
