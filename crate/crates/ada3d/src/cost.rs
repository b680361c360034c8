//! Closed-form parameter and FLOP accounting for three convolution
//! paradigms over a `[H, W, L, C]` feature volume with kernel extent `k`.
//!
//! Conventions: one multiply-accumulate counts as 2 FLOPs; biases are
//! excluded (the adaptive paradigm's kernel generators carry none by
//! design, which is what makes its closed form exact). The adaptive
//! paradigm's `α`/`β` enter through the rounded hidden widths
//! `round(α·C)` / `round(β·C)`, so all counts are exact integers.
//!
//! | paradigm    | params              | FLOPs                                     |
//! |-------------|---------------------|-------------------------------------------|
//! | standard 3D | `C²k³`              | `2HWLC²k³`                                |
//! | depth-wise  | `Ck³ + C²`          | `2HWLCk³ + 2HWLC²`                        |
//! | adaptive    | `3(3α+β)C²(k³+1)`   | `3HWLCk³ + 18αHWC²(k³+1) + 6βLC²(k³+1)`   |
//!
//! For the first two rows FLOPs/params reduces to `2HWL` identically.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Convolution paradigm being priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Paradigm {
    /// Dense 3D convolution, all channels mixed.
    Standard3d,
    /// Depth-wise 3D convolution followed by a 1×1×1 channel mix.
    DepthWise3d,
    /// Per-voxel adaptive 3D convolution (kernel generators + depth-wise
    /// application).
    Ada3d,
}

impl Paradigm {
    pub fn tag(&self) -> &'static str {
        match self {
            Paradigm::Standard3d => "standard3d",
            Paradigm::DepthWise3d => "depthwise3d",
            Paradigm::Ada3d => "ada3d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard3d" => Ok(Paradigm::Standard3d),
            "depthwise3d" => Ok(Paradigm::DepthWise3d),
            "ada3d" => Ok(Paradigm::Ada3d),
            other => Err(Error::Config(format!("unknown paradigm `{other}`"))),
        }
    }

    pub const ALL: [Paradigm; 3] = [Paradigm::Standard3d, Paradigm::DepthWise3d, Paradigm::Ada3d];
}

fn hidden_widths(c: usize, alpha: f64, beta: f64) -> Result<(u128, u128)> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::Config(format!(
            "width multipliers must be positive, got α = {alpha}, β = {beta}"
        )));
    }
    let ha = (alpha * c as f64).round() as u128;
    let hb = (beta * c as f64).round() as u128;
    if ha == 0 || hb == 0 {
        return Err(Error::Config(format!(
            "hidden widths round to zero for C = {c}, α = {alpha}, β = {beta}"
        )));
    }
    Ok((ha, hb))
}

fn check_ck(c: usize, k: usize) -> Result<()> {
    if c == 0 || k == 0 {
        return Err(Error::Config(format!(
            "channels and kernel must be positive, got C = {c}, k = {k}"
        )));
    }
    Ok(())
}

/// Learnable weight count of one layer of the paradigm. `alpha`/`beta` are
/// ignored outside the adaptive paradigm.
pub fn count_params(paradigm: Paradigm, c: usize, k: usize, alpha: f64, beta: f64) -> Result<u128> {
    check_ck(c, k)?;
    let c = c as u128;
    let k3 = (k as u128).pow(3);
    Ok(match paradigm {
        Paradigm::Standard3d => c * c * k3,
        Paradigm::DepthWise3d => c * k3 + c * c,
        Paradigm::Ada3d => {
            // 9αC²(k³+1) from the two spatial-generator convolutions plus
            // 3βC²(k³+1) from the two spectral ones, written with the
            // rounded widths so the count is exactly what gets built.
            let (ha, hb) = hidden_widths(c as usize, alpha, beta)?;
            3 * c * (k3 + 1) * (3 * ha + hb)
        }
    })
}

/// FLOPs of one application over an `H×W×L×C` volume (2 per
/// multiply-accumulate).
#[allow(clippy::too_many_arguments)]
pub fn count_flops(
    paradigm: Paradigm,
    h: usize,
    w: usize,
    l: usize,
    c: usize,
    k: usize,
    alpha: f64,
    beta: f64,
) -> Result<u128> {
    check_ck(c, k)?;
    if h == 0 || w == 0 || l == 0 {
        return Err(Error::Config(format!(
            "volume extents must be positive, got {h}×{w}×{l}"
        )));
    }
    let (h, w, l, c) = (h as u128, w as u128, l as u128, c as u128);
    let k3 = (k as u128).pow(3);
    Ok(match paradigm {
        Paradigm::Standard3d => 2 * h * w * l * c * c * k3,
        Paradigm::DepthWise3d => 2 * h * w * l * c * k3 + 2 * h * w * l * c * c,
        Paradigm::Ada3d => {
            let (ha, hb) = hidden_widths(c as usize, alpha, beta)?;
            // Application (3HWLCk³ as priced in the source analysis) plus
            // the spatial generators (2·9·HW·ha·C·(k³+1) = 18αHWC²(k³+1))
            // and spectral generators (2·3·L·hb·C·(k³+1) = 6βLC²(k³+1)).
            3 * h * w * l * c * k3 + 18 * h * w * ha * c * (k3 + 1) + 6 * l * hb * c * (k3 + 1)
        }
    })
}

/// One priced paradigm.
#[derive(Debug, Clone, Copy)]
pub struct CostReport {
    pub paradigm: Paradigm,
    pub params: u128,
    pub flops: u128,
    pub flops_per_param: f64,
}

/// Prices a paradigm on a concrete volume.
#[allow(clippy::too_many_arguments)]
pub fn cost_report(
    paradigm: Paradigm,
    h: usize,
    w: usize,
    l: usize,
    c: usize,
    k: usize,
    alpha: f64,
    beta: f64,
) -> Result<CostReport> {
    let params = count_params(paradigm, c, k, alpha, beta)?;
    let flops = count_flops(paradigm, h, w, l, c, k, alpha, beta)?;
    Ok(CostReport {
        paradigm,
        params,
        flops,
        flops_per_param: flops as f64 / params as f64,
    })
}

/// Total element count across a set of weight tensors.
pub fn empirical_param_count<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> u128 {
    tensors.into_iter().map(|t| t.len() as u128).sum()
}
