//! Crate-wide error type.
//!
//! Every fallible operation in the library returns [`Result`]. Shape and
//! configuration problems are reported with enough context to identify the
//! offending call site; binary-container problems carry their own detailed
//! variant set ([`ContainerError`]) because the reader must map arbitrary
//! byte-level corruption onto typed errors instead of panicking.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not satisfy an operation's contract.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An axis argument lies outside the tensor order.
    #[error("axis {axis} out of range for tensor of order {order} in {op}")]
    Axis {
        op: &'static str,
        axis: usize,
        order: usize,
    },

    /// Invalid configuration value (network, training, dataset or CLI).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// `backward` was requested on a node that is not a scalar.
    #[error("backward requires a scalar output node, got {len} elements")]
    NonScalarBackward { len: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    /// Numerical routine failed to converge (e.g. SVD).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Binary tensor-container format violation.
    #[error("container format error: {0}")]
    Container(#[from] ContainerError),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Typed failures produced by the binary tensor-container reader.
///
/// The reader is exercised against random byte corruption, so every way a
/// byte stream can violate the format has a dedicated variant and none of
/// them panics.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("file shorter than the {expected}-byte header ({got} bytes)")]
    HeaderTooShort { expected: usize, got: usize },

    #[error("bad magic bytes {got:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("payload checksum mismatch: header says {expected:#010x}, computed {got:#010x}")]
    ChecksumMismatch { expected: u32, got: u32 },

    #[error("entry {index}: truncated while reading {what}")]
    Truncated { index: u32, what: &'static str },

    #[error("entry {index}: name is not valid UTF-8")]
    BadName { index: u32 },

    #[error("entry {index}: unknown dtype code {code}")]
    UnknownDtype { index: u32, code: u8 },

    #[error("entry {index}: dimension product overflows")]
    DimOverflow { index: u32 },

    #[error("entry {index}: zero extent in dims {dims:?}")]
    ZeroExtent { index: u32, dims: Vec<u32> },

    #[error("{0} trailing bytes after the last entry")]
    TrailingBytes(usize),
}
