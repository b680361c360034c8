//! Named parameter storage and weight initialization.
//!
//! Every learnable tensor in the network is registered under a stable
//! dotted name (`"ada0.kgen.spatial.w1"`, …). [`ParamSet`] keeps them in
//! declaration order, which fixes the initialization stream, the optimizer
//! update order and the checkpoint entry order — the three places where
//! ordering must be reproducible for bit-identical training runs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Declaration of one learnable tensor: its name, shape and the fan-in used
/// to scale its initialization.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], fan_in: usize) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            fan_in,
        }
    }

    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Uniform Kaiming initialization on `[−√(6/fan_in), +√(6/fan_in)]`, whose
/// variance is `2/fan_in`.
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    assert!(fan_in > 0, "kaiming_uniform requires a positive fan-in");
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}

/// Ordered, name-addressable set of learnable tensors.
#[derive(Debug, Clone)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamSet {
    /// Draws every parameter from the Kaiming uniform distribution using a
    /// single seeded stream, in declaration order.
    pub fn init(specs: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(specs, |spec| kaiming_uniform(&spec.shape, spec.fan_in, &mut rng))
    }

    /// All-zero parameters (useful for identity/baseline checks).
    pub fn zeros(specs: &[ParamSpec]) -> Self {
        Self::build(specs, |spec| Tensor::zeros(&spec.shape))
    }

    fn build(specs: &[ParamSpec], mut make: impl FnMut(&ParamSpec) -> Tensor) -> Self {
        let mut set = Self {
            names: Vec::with_capacity(specs.len()),
            tensors: Vec::with_capacity(specs.len()),
            index: BTreeMap::new(),
        };
        for spec in specs {
            let t = make(spec);
            set.push(spec.name.clone(), t);
        }
        set
    }

    /// Reassembles a set from named entries (e.g. a loaded checkpoint).
    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut set = Self {
            names: Vec::with_capacity(entries.len()),
            tensors: Vec::with_capacity(entries.len()),
            index: BTreeMap::new(),
        };
        for (name, t) in entries {
            if set.index.contains_key(&name) {
                return Err(Error::Config(format!("duplicate parameter name {name:?}")));
            }
            set.push(name, t);
        }
        Ok(set)
    }

    fn push(&mut self, name: String, t: Tensor) {
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    /// Total number of scalar parameters.
    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}
