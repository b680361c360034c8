//! Dense multi-way arrays and mode-k matricization.
//!
//! [`Tensor`] is a dense, row-major, `f64` array of arbitrary order. It is
//! the single value type shared by the convolution kernels, the autodiff
//! engine, the network, the metrics and the analysis tools, so its contract
//! is kept deliberately small: positive extents, contiguous storage, and
//! explicit (fallible) shape changes.
//!
//! Mode-k unfolding follows the classical 1-based mapping: element
//! `(i_1, …, i_M)` of an `I_1 × … × I_M` tensor lands at row `i_k` and column
//!
//! ```text
//! j = 1 + Σ_{n≠k} (i_n − 1) · J_n,   J_n = Π_{m<n, m≠k} I_m
//! ```
//!
//! of the `I_k × (Π_{n≠k} I_n)` unfolding. Columns therefore enumerate the
//! remaining axes with the lowest-numbered axis varying fastest, which is
//! *not* the row-major storage order; the mapping here is index-exact, not a
//! reshape.

use crate::error::{Error, Result};
use rand::Rng;

/// Dense row-major tensor of `f64` values.
///
/// Invariants: every extent is at least 1 and `data.len()` equals the product
/// of the extents. An empty shape denotes a scalar holding one value.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and matching data buffer.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape {
                op: "Tensor::new",
                detail: format!("zero extent in shape {shape:?}"),
            });
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape {
                op: "Tensor::new",
                detail: format!(
                    "shape {shape:?} implies {len} elements, buffer holds {}",
                    data.len()
                ),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// All-zero tensor. Panics on a zero extent (a programming error, unlike
    /// data-dependent shape mismatches which are reported as [`Error`]s).
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    /// Constant-filled tensor.
    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(
            shape.iter().all(|&e| e > 0),
            "zero extent in shape {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Order-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for flat in 0..t.data.len() {
            t.data[flat] = f(&idx);
            step_index(shape, &mut idx);
        }
        t
    }

    /// Uniform random tensor on `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let mut t = Self::zeros(shape);
        for v in &mut t.data {
            *v = rng.gen_range(lo..hi);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of axes.
    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // extents are positive, so there is always at least one element
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor with {} elements", self.len());
        self.data[0]
    }

    /// Flat offset of a multi-index.
    pub(crate) fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (d, (&i, &e)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(i < e, "index {i} out of bounds for axis {d} (extent {e})");
            flat = flat * e + i;
        }
        flat
    }

    /// Value at a multi-index (bounds-checked; intended for tests and
    /// reference implementations, not hot loops).
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let flat = self.flat_index(idx);
        self.data[flat] = value;
    }

    /// Same data, new shape. The element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) || shape.iter().product::<usize>() != self.len() {
            return Err(Error::Shape {
                op: "reshape",
                detail: format!("cannot reshape {:?} into {shape:?}", self.shape),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Elementwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                op,
                detail: format!("operands {:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// Arithmetic mean of all elements.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Largest absolute element.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// True when every element of `self` and `other` has identical bits.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Row-major strides for a shape.
pub(crate) fn strides_for(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

/// Advances a multi-index in row-major order (last axis fastest). Returns
/// `false` after wrapping past the final index.
pub(crate) fn step_index(shape: &[usize], idx: &mut [usize]) -> bool {
    for d in (0..shape.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return true;
        }
        idx[d] = 0;
    }
    false
}

/// Mode-k unfolding (matricization) of a tensor, with `k` counted from 1.
///
/// Returns the `I_k × (Π_{n≠k} I_n)` matrix whose columns enumerate the
/// non-k axes with the lowest-numbered axis varying fastest (see the module
/// docs for the exact index mapping).
pub fn mode_k_unfold(t: &Tensor, k: usize) -> Result<Tensor> {
    let order = t.order();
    if k == 0 || k > order {
        return Err(Error::Axis {
            op: "mode_k_unfold",
            axis: k,
            order,
        });
    }
    let k0 = k - 1; // 0-based axis
    let rows = t.shape()[k0];
    let cols = t.len() / rows;
    let col_weights = unfold_col_weights(t.shape(), k0);

    let mut out = Tensor::zeros(&[rows, cols]);
    let mut idx = vec![0usize; order];
    for flat in 0..t.len() {
        let row = idx[k0];
        let col = unfold_col(&idx, k0, &col_weights);
        out.data[row * cols + col] = t.data[flat];
        step_index(t.shape(), &mut idx);
    }
    Ok(out)
}

/// Inverse of [`mode_k_unfold`]: reassembles a tensor of the given shape from
/// its mode-k unfolding. The matrix must be exactly `I_k × (Π_{n≠k} I_n)`.
pub fn mode_k_fold(m: &Tensor, shape: &[usize], k: usize) -> Result<Tensor> {
    let order = shape.len();
    if k == 0 || k > order {
        return Err(Error::Axis {
            op: "mode_k_fold",
            axis: k,
            order,
        });
    }
    let k0 = k - 1;
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::Shape {
            op: "mode_k_fold",
            detail: format!("zero extent in target shape {shape:?}"),
        });
    }
    let len: usize = shape.iter().product();
    let rows = shape[k0];
    let cols = len / rows;
    if m.order() != 2 || m.shape() != [rows, cols] {
        return Err(Error::Shape {
            op: "mode_k_fold",
            detail: format!(
                "expected a {rows}×{cols} matrix for shape {shape:?} mode {k}, got {:?}",
                m.shape()
            ),
        });
    }
    let col_weights = unfold_col_weights(shape, k0);

    let mut out = Tensor::zeros(shape);
    let mut idx = vec![0usize; order];
    for flat in 0..len {
        let row = idx[k0];
        let col = unfold_col(&idx, k0, &col_weights);
        out.data[flat] = m.data[row * cols + col];
        step_index(shape, &mut idx);
    }
    Ok(out)
}

/// Per-axis column weights `J_n = Π_{m<n, m≠k} I_m` of the unfolding map
/// (zero weight recorded for axis k itself, which never contributes).
fn unfold_col_weights(shape: &[usize], k0: usize) -> Vec<usize> {
    let mut weights = vec![0usize; shape.len()];
    let mut acc = 1usize;
    for (n, &extent) in shape.iter().enumerate() {
        if n == k0 {
            continue;
        }
        weights[n] = acc;
        acc *= extent;
    }
    weights
}

fn unfold_col(idx: &[usize], k0: usize, weights: &[usize]) -> usize {
    idx.iter()
        .enumerate()
        .filter(|&(n, _)| n != k0)
        .map(|(n, &i)| i * weights[n])
        .sum()
}
