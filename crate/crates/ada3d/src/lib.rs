//! Adaptive per-voxel 3D convolution engine for remote sensing image
//! fusion.
//!
//! This crate implements, from first principles and in pure Rust:
//!
//! - a dense row-major [`Tensor`] with exact mode-k unfolding/folding;
//! - grouped N-dimensional convolutions (1D/2D/3D) with hand-derived
//!   backward passes, bicubic and pixel-shuffle upsampling;
//! - a reverse-mode automatic differentiation tape ([`autodiff::Graph`])
//!   over a closed set of operations, validated against central finite
//!   differences;
//! - the adaptive 3D convolution block ([`block`]): per-voxel kernels
//!   factorized into a spatial and a spectral component, field
//!   normalization, and outer-product adaptive biases;
//! - a complete fusion network ([`net`]) joining a 2D spatial branch with a
//!   3D spectral branch, trained by Adam ([`train`]) on an L1 + relative
//!   global error objective;
//! - full-reference quality metrics ([`metrics`]);
//! - rank/solvability analysis utilities ([`analysis`]) and closed-form
//!   parameter/FLOP cost models ([`cost`]);
//! - a self-describing binary tensor container ([`container`]), synthetic
//!   dataset generation ([`data`]), and a scriptable CLI ([`cli`]).
//!
//! Everything is deterministic for a fixed seed and runs on the CPU with no
//! external numerical dependencies beyond linear-algebra routines used by
//! the analysis module.

pub mod analysis;
pub mod autodiff;
pub mod block;
pub mod cli;
pub mod config;
pub mod container;
pub mod conv;
pub mod cost;
pub mod data;
pub mod error;
pub mod metrics;
pub mod net;
pub mod params;
pub mod tensor;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{ContainerError, Error, Result};
pub use tensor::Tensor;
