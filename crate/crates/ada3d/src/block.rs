//! The adaptive 3D convolution block.
//!
//! One block consumes a 2D spatial feature map `F^a` of shape
//! `[H, W, C_spat]` and a 3D spectral feature volume `F^b` of shape
//! `[H, W, L, C_spec]`, and produces a volume of the same shape as `F^b`:
//!
//! 1. a **spatial kernel generator** (two plain 3×3 convolutions,
//!    `C_spat → round(α·C_spec) → C_spec·k³`, no biases) turns `F^a` into a
//!    per-position kernel field `K^a ∈ [H, W, C_spec, k³]`;
//! 2. a **spectral kernel generator** (global spatial pooling of `F^b`
//!    followed by two kernel-3 1D convolutions,
//!    `C_spec → round(β·C_spec) → C_spec·k³`, no biases) produces a
//!    per-band field `K^b ∈ [L, C_spec, k³]`;
//! 3. the fields are multiplied per voxel, `K(h,w,l,c,·) = K^a(h,w,c,·) ⊙
//!    K^b(l,c,·)`, and every k³-element field is normalized to zero mean and
//!    unit Euclidean norm;
//! 4. a **bias generator** builds a per-position bias `D^a ∈ [H, W]`, a
//!    per-band bias `D^b ∈ [L]` and a per-channel bias `D^c ∈ [C_spec]`,
//!    combined as the outer product `D(h,w,l,c) = D^a·D^b·D^c`;
//! 5. the **adaptive application** computes, depth-wise per channel,
//!    `out(p, c) = D(p, c) + Σ_δ K(p, c, δ) · F^b(p − δ, c)` with zero
//!    padding of width `(k−1)/2` on all three axes.
//!
//! Offset convention: the k³ kernel entries enumerate the displacement
//! `δ = (dz, dy, dx)` in row-major order over `{−(k−1)/2, …, +(k−1)/2}³`,
//! where `dz` runs along the band axis, `dy` along image height and `dx`
//! along image width. The kernel entry at `δ` multiplies the source voxel
//! `(h − dy, w − dx, l − dz)`. The generators' flattened channel `c·k³ + o`
//! maps to channel `c`, offset `o` under this ordering.
//!
//! The two kernel-generator convolutions carry no bias terms, so the
//! learnable weight count of a block's generators is exactly
//! `9α·C²(k³+1) + 3β·C²(k³+1) = 3(3α+β)·C²(k³+1)` when
//! `C_spat = C_spec = C` and `αC`, `βC` are integral. The bias generator
//! adds `(9·C_spat + 1) + (3·C_spec + 1) + (C_spat + C_spec + 1)·C_spec`
//! parameters, which are accounted separately.

use rand::Rng;

use crate::autodiff::{Graph, NodeId};
use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::params::{kaiming_uniform, ParamSpec};
use crate::tensor::Tensor;

/// Division guard for the kernel-field normalization: fields are scaled by
/// `1/√(‖c‖² + ε²)`, so constant fields map to the zero field instead of
/// dividing by zero.
pub const NORM_EPSILON: f64 = 1e-8;

/// Hyper-parameters of one adaptive block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ada3dBlockConfig {
    /// Channels of the 2D spatial feature map `F^a`.
    pub c_spat: usize,
    /// Channels of the 3D spectral feature volume `F^b` (and of the
    /// generated kernels).
    pub c_spec: usize,
    /// Adaptive kernel extent `k` (odd).
    pub kernel: usize,
    /// Width multiplier of the spatial generator's hidden layer.
    pub alpha: f64,
    /// Width multiplier of the spectral generator's hidden layer.
    pub beta: f64,
}

impl Ada3dBlockConfig {
    pub fn new(c_spat: usize, c_spec: usize, kernel: usize, alpha: f64, beta: f64) -> Self {
        Self {
            c_spat,
            c_spec,
            kernel,
            alpha,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_spat == 0 || self.c_spec == 0 {
            return Err(Error::Config(format!(
                "block channels must be positive, got {self:?}"
            )));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "adaptive kernel extent must be odd, got {}",
                self.kernel
            )));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Config(format!(
                "width multipliers must be positive, got α = {}, β = {}",
                self.alpha, self.beta
            )));
        }
        if self.hidden_spatial() == 0 || self.hidden_spectral() == 0 {
            return Err(Error::Config(format!(
                "hidden widths round to zero for {self:?}"
            )));
        }
        Ok(())
    }

    /// Hidden width of the spatial kernel generator, `round(α·C_spec)`.
    pub fn hidden_spatial(&self) -> usize {
        (self.alpha * self.c_spec as f64).round() as usize
    }

    /// Hidden width of the spectral kernel generator, `round(β·C_spec)`.
    pub fn hidden_spectral(&self) -> usize {
        (self.beta * self.c_spec as f64).round() as usize
    }

    /// Elements per adaptive kernel field, `k³`.
    pub fn field_len(&self) -> usize {
        self.kernel * self.kernel * self.kernel
    }
}

/// Generated per-voxel kernels: the combined tensor and its two factors.
#[derive(Debug, Clone)]
pub struct Ada3dKernels {
    /// `[H, W, L, C, k, k, k]` — the per-voxel kernel fields.
    pub combined: Tensor,
    /// `[H, W, C, k³]` — spatial factor.
    pub spatial: Tensor,
    /// `[L, C, k³]` — spectral factor.
    pub spectral: Tensor,
}

/// Generated adaptive biases: the combined tensor and its three factors.
#[derive(Debug, Clone)]
pub struct AdaptiveBiases {
    /// `[H, W, L, C]` — the outer product of the three factors.
    pub combined: Tensor,
    /// `[H, W]` — per-position factor.
    pub spatial: Tensor,
    /// `[L]` — per-band factor.
    pub spectral: Tensor,
    /// `[C]` — per-channel factor.
    pub channel: Tensor,
}

// ---------------------------------------------------------------------------
// Raw kernels (forward + backward), shared with the autodiff engine.
// ---------------------------------------------------------------------------

/// `[H,W,C,F] ⊗ [L,C,F] → [H,W,L,C,F]` per-voxel kernel combination.
pub(crate) fn combine_kernel_fields(ka: &Tensor, kb: &Tensor) -> Result<Tensor> {
    if ka.order() != 4 || kb.order() != 3 || ka.shape()[2..] != kb.shape()[1..] {
        return Err(Error::Shape {
            op: "combine_kernels",
            detail: format!(
                "spatial factor {:?} incompatible with spectral factor {:?}",
                ka.shape(),
                kb.shape()
            ),
        });
    }
    let (h, w, c, f) = (ka.shape()[0], ka.shape()[1], ka.shape()[2], ka.shape()[3]);
    let l = kb.shape()[0];
    let cf = c * f;
    let mut out = Tensor::zeros(&[h, w, l, c, f]);
    let od = out.data_mut();
    for hw in 0..h * w {
        let a = &ka.data()[hw * cf..(hw + 1) * cf];
        for li in 0..l {
            let b = &kb.data()[li * cf..(li + 1) * cf];
            let dst = &mut od[(hw * l + li) * cf..(hw * l + li + 1) * cf];
            for ((d, &x), &y) in dst.iter_mut().zip(a).zip(b) {
                *d = x * y;
            }
        }
    }
    Ok(out)
}

pub(crate) fn combine_kernel_fields_backward(
    ka: &Tensor,
    kb: &Tensor,
    g: &Tensor,
    need_da: bool,
    need_db: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let (h, w, c, f) = (ka.shape()[0], ka.shape()[1], ka.shape()[2], ka.shape()[3]);
    let l = kb.shape()[0];
    let cf = c * f;
    let mut da = need_da.then(|| Tensor::zeros(ka.shape()));
    let mut db = need_db.then(|| Tensor::zeros(kb.shape()));
    for hw in 0..h * w {
        for li in 0..l {
            let gs = &g.data()[(hw * l + li) * cf..(hw * l + li + 1) * cf];
            if let Some(da) = da.as_mut() {
                let b = &kb.data()[li * cf..(li + 1) * cf];
                let dst = &mut da.data_mut()[hw * cf..(hw + 1) * cf];
                for ((d, &gi), &y) in dst.iter_mut().zip(gs).zip(b) {
                    *d += gi * y;
                }
            }
            if let Some(db) = db.as_mut() {
                let a = &ka.data()[hw * cf..(hw + 1) * cf];
                let dst = &mut db.data_mut()[li * cf..(li + 1) * cf];
                for ((d, &gi), &x) in dst.iter_mut().zip(gs).zip(a) {
                    *d += gi * x;
                }
            }
        }
    }
    (da, db)
}

/// `[H,W] ⊗ [L] ⊗ [C] → [H,W,L,C]` bias combination.
pub(crate) fn combine_bias_factors(da: &Tensor, db: &Tensor, dc: &Tensor) -> Result<Tensor> {
    if da.order() != 2 || db.order() != 1 || dc.order() != 1 {
        return Err(Error::Shape {
            op: "combine_biases",
            detail: format!(
                "expected [H,W] ⊗ [L] ⊗ [C], got {:?}, {:?}, {:?}",
                da.shape(),
                db.shape(),
                dc.shape()
            ),
        });
    }
    let (h, w) = (da.shape()[0], da.shape()[1]);
    let l = db.shape()[0];
    let c = dc.shape()[0];
    let mut out = Tensor::zeros(&[h, w, l, c]);
    let od = out.data_mut();
    let mut i = 0;
    for hw in 0..h * w {
        let a = da.data()[hw];
        for &b in db.data() {
            let ab = a * b;
            for &cc in dc.data() {
                od[i] = ab * cc;
                i += 1;
            }
        }
    }
    Ok(out)
}

pub(crate) fn combine_bias_factors_backward(
    da: &Tensor,
    db: &Tensor,
    dc: &Tensor,
    g: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (h, w) = (da.shape()[0], da.shape()[1]);
    let l = db.shape()[0];
    let c = dc.shape()[0];
    let mut ga = Tensor::zeros(da.shape());
    let mut gb = Tensor::zeros(db.shape());
    let mut gc = Tensor::zeros(dc.shape());
    let gd = g.data();
    let mut i = 0;
    for hw in 0..h * w {
        let a = da.data()[hw];
        for li in 0..l {
            let b = db.data()[li];
            let ab = a * b;
            // s = Σ_c g·dc feeds both the spatial and spectral factors.
            let mut s = 0.0;
            for ci in 0..c {
                let gv = gd[i];
                s += gv * dc.data()[ci];
                gc.data_mut()[ci] += gv * ab;
                i += 1;
            }
            ga.data_mut()[hw] += s * b;
            gb.data_mut()[li] += s * a;
        }
    }
    (ga, gb, gc)
}

/// Normalizes every run of `field_len` consecutive elements to zero mean and
/// (guarded) unit Euclidean norm: `y = c / √(‖c‖² + ε²)` with `c = x − x̄`.
/// Constant fields — including every field when `field_len == 1` — map to
/// the zero field.
pub(crate) fn normalize_fields_forward(x: &Tensor, field_len: usize) -> Result<Tensor> {
    if field_len == 0 || x.len() % field_len != 0 {
        return Err(Error::Shape {
            op: "normalize_fields",
            detail: format!(
                "field length {field_len} does not divide {} elements",
                x.len()
            ),
        });
    }
    let mut out = Tensor::zeros(x.shape());
    let eps2 = NORM_EPSILON * NORM_EPSILON;
    for (src, dst) in x
        .data()
        .chunks_exact(field_len)
        .zip(out.data_mut().chunks_exact_mut(field_len))
    {
        let mean = src.iter().sum::<f64>() / field_len as f64;
        let mut n2 = 0.0;
        for (&v, d) in src.iter().zip(dst.iter_mut()) {
            let c = v - mean;
            *d = c;
            n2 += c * c;
        }
        let s = 1.0 / (n2 + eps2).sqrt();
        for d in dst.iter_mut() {
            *d *= s;
        }
    }
    Ok(out)
}

pub(crate) fn normalize_fields_backward(x: &Tensor, g: &Tensor, field_len: usize) -> Tensor {
    let mut dx = Tensor::zeros(x.shape());
    let eps2 = NORM_EPSILON * NORM_EPSILON;
    let f = field_len as f64;
    let mut centered = vec![0.0f64; field_len];
    for ((src, gs), ds) in x
        .data()
        .chunks_exact(field_len)
        .zip(g.data().chunks_exact(field_len))
        .zip(dx.data_mut().chunks_exact_mut(field_len))
    {
        let mean = src.iter().sum::<f64>() / f;
        let mut n2 = 0.0;
        for (&v, c) in src.iter().zip(centered.iter_mut()) {
            *c = v - mean;
            n2 += *c * *c;
        }
        let s = 1.0 / (n2 + eps2).sqrt();
        let gmean = gs.iter().sum::<f64>() / f;
        let dot: f64 = centered.iter().zip(gs).map(|(&c, &gi)| c * gi).sum();
        let s3dot = s * s * s * dot;
        for ((d, &gi), &c) in ds.iter_mut().zip(gs).zip(centered.iter()) {
            *d = s * (gi - gmean) - s3dot * c;
        }
    }
    dx
}

/// Kernel-tap displacements `δ = (dz, dy, dx)` in field order.
fn tap_offsets(kernel: usize) -> Vec<(isize, isize, isize)> {
    let m = (kernel / 2) as isize;
    let mut taps = Vec::with_capacity(kernel * kernel * kernel);
    for dz in -m..=m {
        for dy in -m..=m {
            for dx in -m..=m {
                taps.push((dz, dy, dx));
            }
        }
    }
    taps
}

fn validate_apply(fb: &Tensor, k: &Tensor, d: Option<&Tensor>, kernel: usize) -> Result<usize> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::Config(format!(
            "adaptive kernel extent must be odd, got {kernel}"
        )));
    }
    let f = kernel * kernel * kernel;
    if fb.order() != 4 {
        return Err(Error::Shape {
            op: "ada3d_apply",
            detail: format!("feature volume must be [H,W,L,C], got {:?}", fb.shape()),
        });
    }
    let tail: usize = k.shape().get(4..).map(|s| s.iter().product()).unwrap_or(0);
    if k.order() < 5 || k.shape()[..4] != *fb.shape() || tail != f {
        return Err(Error::Shape {
            op: "ada3d_apply",
            detail: format!(
                "kernels {:?} do not match volume {:?} with k = {kernel}",
                k.shape(),
                fb.shape()
            ),
        });
    }
    if let Some(d) = d {
        if d.shape() != fb.shape() {
            return Err(Error::Shape {
                op: "ada3d_apply",
                detail: format!("biases {:?} must match volume {:?}", d.shape(), fb.shape()),
            });
        }
    }
    Ok(f)
}

/// Depth-wise per-voxel adaptive convolution:
///
/// `out(h,w,l,c) = D(h,w,l,c) + Σ_{(dz,dy,dx)} K(h,w,l,c,δ) ·
/// F^b(h−dy, w−dx, l−dz, c)`, with out-of-range sources treated as zero.
///
/// `kernels` may be shaped `[H,W,L,C,k³]` or `[H,W,L,C,k,k,k]`.
pub fn ada3d_apply(fb: &Tensor, kernels: &Tensor, biases: Option<&Tensor>, kernel: usize) -> Result<Tensor> {
    ada3d_apply_raw(fb, kernels, biases, kernel)
}

pub(crate) fn ada3d_apply_raw(
    fb: &Tensor,
    k: &Tensor,
    d: Option<&Tensor>,
    kernel: usize,
) -> Result<Tensor> {
    let f = validate_apply(fb, k, d, kernel)?;
    let (h, w, l, c) = (fb.shape()[0], fb.shape()[1], fb.shape()[2], fb.shape()[3]);
    let taps = tap_offsets(kernel);
    let mut out = match d {
        Some(d) => d.clone(),
        None => Tensor::zeros(fb.shape()),
    };
    let od = out.data_mut();
    let fbd = fb.data();
    let kd = k.data();
    let mut valid: Vec<(usize, usize)> = Vec::with_capacity(f);
    for hi in 0..h {
        for wi in 0..w {
            for li in 0..l {
                let pos = (hi * w + wi) * l + li;
                valid.clear();
                for (t, &(dz, dy, dx)) in taps.iter().enumerate() {
                    let y = hi as isize - dy;
                    let x = wi as isize - dx;
                    let z = li as isize - dz;
                    if y >= 0 && y < h as isize && x >= 0 && x < w as isize && z >= 0 && z < l as isize
                    {
                        let src = ((y as usize * w + x as usize) * l + z as usize) * c;
                        valid.push((t, src));
                    }
                }
                let ob = pos * c;
                let kb = pos * c * f;
                for ch in 0..c {
                    let field = &kd[kb + ch * f..kb + (ch + 1) * f];
                    let mut acc = od[ob + ch];
                    for &(t, src) in &valid {
                        acc += field[t] * fbd[src + ch];
                    }
                    od[ob + ch] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`ada3d_apply_raw`] with respect to the feature volume and
/// the kernels; the bias gradient is the output gradient itself and is
/// returned as a plain clone.
pub(crate) fn ada3d_apply_backward(
    fb: &Tensor,
    k: &Tensor,
    g: &Tensor,
    kernel: usize,
    need_dfb: bool,
    need_dk: bool,
) -> (Option<Tensor>, Option<Tensor>, Tensor) {
    let f = kernel * kernel * kernel;
    let (h, w, l, c) = (fb.shape()[0], fb.shape()[1], fb.shape()[2], fb.shape()[3]);
    let taps = tap_offsets(kernel);
    let mut dfb = need_dfb.then(|| Tensor::zeros(fb.shape()));
    let mut dk = need_dk.then(|| Tensor::zeros(k.shape()));
    let fbd = fb.data();
    let kd = k.data();
    let gd = g.data();
    let mut valid: Vec<(usize, usize)> = Vec::with_capacity(f);
    for hi in 0..h {
        for wi in 0..w {
            for li in 0..l {
                let pos = (hi * w + wi) * l + li;
                valid.clear();
                for (t, &(dz, dy, dx)) in taps.iter().enumerate() {
                    let y = hi as isize - dy;
                    let x = wi as isize - dx;
                    let z = li as isize - dz;
                    if y >= 0 && y < h as isize && x >= 0 && x < w as isize && z >= 0 && z < l as isize
                    {
                        let src = ((y as usize * w + x as usize) * l + z as usize) * c;
                        valid.push((t, src));
                    }
                }
                let ob = pos * c;
                let kb = pos * c * f;
                for ch in 0..c {
                    let gv = gd[ob + ch];
                    if gv == 0.0 {
                        continue;
                    }
                    if let Some(dk) = dk.as_mut() {
                        let dst = &mut dk.data_mut()[kb + ch * f..kb + (ch + 1) * f];
                        for &(t, src) in &valid {
                            dst[t] += gv * fbd[src + ch];
                        }
                    }
                    if let Some(dfb) = dfb.as_mut() {
                        let field = &kd[kb + ch * f..kb + (ch + 1) * f];
                        let dst = dfb.data_mut();
                        for &(t, src) in &valid {
                            dst[src + ch] += gv * field[t];
                        }
                    }
                }
            }
        }
    }
    (dfb, dk, g.clone())
}

// ---------------------------------------------------------------------------
// Block weights and parameter layout.
// ---------------------------------------------------------------------------

/// Shapes and fan-ins of the ten learnable tensors of one block, as
/// `(name suffix, shape, fan_in)`. The first four entries are the
/// kernel-generator weights (bias-free by design); the rest belong to the
/// bias generator.
fn weight_layout(cfg: &Ada3dBlockConfig) -> Vec<(&'static str, Vec<usize>, usize)> {
    let (cs, cc) = (cfg.c_spat, cfg.c_spec);
    let (ha, hb) = (cfg.hidden_spatial(), cfg.hidden_spectral());
    let f = cfg.field_len();
    vec![
        ("kgen.spatial.w1", vec![ha, cs, 3, 3], 9 * cs),
        ("kgen.spatial.w2", vec![cc * f, ha, 3, 3], 9 * ha),
        ("kgen.spectral.w1", vec![hb, cc, 3], 3 * cc),
        ("kgen.spectral.w2", vec![cc * f, hb, 3], 3 * hb),
        ("bias.spatial.w", vec![1, cs, 3, 3], 9 * cs),
        ("bias.spatial.b", vec![1], 9 * cs),
        ("bias.spectral.w", vec![1, cc, 3], 3 * cc),
        ("bias.spectral.b", vec![1], 3 * cc),
        ("bias.channel.w", vec![cc, cs + cc, 1], cs + cc),
        ("bias.channel.b", vec![cc], cs + cc),
    ]
}

/// Parameter declarations for a whole block, names prefixed with `prefix`.
pub fn block_param_specs(cfg: &Ada3dBlockConfig, prefix: &str) -> Vec<ParamSpec> {
    weight_layout(cfg)
        .into_iter()
        .map(|(suffix, shape, fan_in)| ParamSpec::new(format!("{prefix}{suffix}"), &shape, fan_in))
        .collect()
}

/// Parameter declarations for the kernel generators only (the subset whose
/// total element count obeys the closed-form `3(3α+β)C²(k³+1)`).
pub fn kernel_generator_param_specs(cfg: &Ada3dBlockConfig, prefix: &str) -> Vec<ParamSpec> {
    block_param_specs(cfg, prefix)
        .into_iter()
        .filter(|s| s.name.contains("kgen."))
        .collect()
}

/// Plain-tensor weights of one block, for use outside a parameter registry.
#[derive(Debug, Clone)]
pub struct Ada3dBlockWeights {
    pub kgen_spatial_w1: Tensor,
    pub kgen_spatial_w2: Tensor,
    pub kgen_spectral_w1: Tensor,
    pub kgen_spectral_w2: Tensor,
    pub bias_spatial_w: Tensor,
    pub bias_spatial_b: Tensor,
    pub bias_spectral_w: Tensor,
    pub bias_spectral_b: Tensor,
    pub bias_channel_w: Tensor,
    pub bias_channel_b: Tensor,
}

impl Ada3dBlockWeights {
    fn from_tensors(mut ts: Vec<Tensor>) -> Self {
        let bias_channel_b = ts.pop().unwrap();
        let bias_channel_w = ts.pop().unwrap();
        let bias_spectral_b = ts.pop().unwrap();
        let bias_spectral_w = ts.pop().unwrap();
        let bias_spatial_b = ts.pop().unwrap();
        let bias_spatial_w = ts.pop().unwrap();
        let kgen_spectral_w2 = ts.pop().unwrap();
        let kgen_spectral_w1 = ts.pop().unwrap();
        let kgen_spatial_w2 = ts.pop().unwrap();
        let kgen_spatial_w1 = ts.pop().unwrap();
        Self {
            kgen_spatial_w1,
            kgen_spatial_w2,
            kgen_spectral_w1,
            kgen_spectral_w2,
            bias_spatial_w,
            bias_spatial_b,
            bias_spectral_w,
            bias_spectral_b,
            bias_channel_w,
            bias_channel_b,
        }
    }

    /// Kaiming-initialized block weights.
    pub fn random(cfg: &Ada3dBlockConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let ts = weight_layout(cfg)
            .into_iter()
            .map(|(_, shape, fan_in)| kaiming_uniform(&shape, fan_in, rng))
            .collect();
        Ok(Self::from_tensors(ts))
    }

    /// All-zero block weights.
    pub fn zeros(cfg: &Ada3dBlockConfig) -> Result<Self> {
        cfg.validate()?;
        let ts = weight_layout(cfg)
            .into_iter()
            .map(|(_, shape, _)| Tensor::zeros(&shape))
            .collect();
        Ok(Self::from_tensors(ts))
    }
}

/// Graph node handles of one block's parameters, in the same roles as
/// [`Ada3dBlockWeights`].
#[derive(Debug, Clone, Copy)]
pub struct Ada3dBlockParams {
    pub kgen_spatial_w1: NodeId,
    pub kgen_spatial_w2: NodeId,
    pub kgen_spectral_w1: NodeId,
    pub kgen_spectral_w2: NodeId,
    pub bias_spatial_w: NodeId,
    pub bias_spatial_b: NodeId,
    pub bias_spectral_w: NodeId,
    pub bias_spectral_b: NodeId,
    pub bias_channel_w: NodeId,
    pub bias_channel_b: NodeId,
}

impl Ada3dBlockParams {
    /// Inserts the given weights as constants of `g` (used by the pure,
    /// non-training entry points).
    fn constants(g: &mut Graph, w: &Ada3dBlockWeights) -> Self {
        Self {
            kgen_spatial_w1: g.constant(w.kgen_spatial_w1.clone()),
            kgen_spatial_w2: g.constant(w.kgen_spatial_w2.clone()),
            kgen_spectral_w1: g.constant(w.kgen_spectral_w1.clone()),
            kgen_spectral_w2: g.constant(w.kgen_spectral_w2.clone()),
            bias_spatial_w: g.constant(w.bias_spatial_w.clone()),
            bias_spatial_b: g.constant(w.bias_spatial_b.clone()),
            bias_spectral_w: g.constant(w.bias_spectral_w.clone()),
            bias_spectral_b: g.constant(w.bias_spectral_b.clone()),
            bias_channel_w: g.constant(w.bias_channel_w.clone()),
            bias_channel_b: g.constant(w.bias_channel_b.clone()),
        }
    }
}

// ---------------------------------------------------------------------------
// Graph builders (the single source of truth for the block's wiring).
// ---------------------------------------------------------------------------

/// Builds the spatial kernel field `[H, W, C_spec, k³]` from `F^a`.
pub fn spatial_kernels_graph(
    g: &mut Graph,
    cfg: &Ada3dBlockConfig,
    fa: NodeId,
    w1: NodeId,
    w2: NodeId,
) -> Result<NodeId> {
    cfg.validate()?;
    let ha = cfg.hidden_spatial();
    let h1 = g.conv2d(fa, ConvSpec::new(cfg.c_spat, ha, 3), w1, None)?;
    let flat = g.conv2d(h1, ConvSpec::new(ha, cfg.c_spec * cfg.field_len(), 3), w2, None)?;
    let s = g.value(flat).shape().to_vec();
    g.reshape(flat, &[s[0], s[1], cfg.c_spec, cfg.field_len()])
}

/// Builds the spectral kernel field `[L, C_spec, k³]` from the pooled
/// `[L, C_spec]` band/channel matrix.
pub fn spectral_kernels_graph(
    g: &mut Graph,
    cfg: &Ada3dBlockConfig,
    pooled: NodeId,
    w1: NodeId,
    w2: NodeId,
) -> Result<NodeId> {
    cfg.validate()?;
    let hb = cfg.hidden_spectral();
    let h1 = g.conv1d(pooled, ConvSpec::new(cfg.c_spec, hb, 3), w1, None)?;
    let flat = g.conv1d(h1, ConvSpec::new(hb, cfg.c_spec * cfg.field_len(), 3), w2, None)?;
    let l = g.value(flat).shape()[0];
    g.reshape(flat, &[l, cfg.c_spec, cfg.field_len()])
}

/// Node handles of the generated bias factors and their combination.
pub struct BiasNodes {
    pub spatial: NodeId,
    pub spectral: NodeId,
    pub channel: NodeId,
    pub combined: NodeId,
}

/// Builds the three bias factors and their `[H, W, L, C]` combination.
/// `pooled` is the `[L, C_spec]` spatial average of `F^b` (shared with the
/// spectral kernel generator).
pub fn biases_graph(
    g: &mut Graph,
    cfg: &Ada3dBlockConfig,
    fa: NodeId,
    pooled: NodeId,
    p: &Ada3dBlockParams,
) -> Result<BiasNodes> {
    let fa_shape = g.value(fa).shape().to_vec();
    let (h, w) = (fa_shape[0], fa_shape[1]);
    let da_map = g.conv2d(
        fa,
        ConvSpec::new(cfg.c_spat, 1, 3),
        p.bias_spatial_w,
        Some(p.bias_spatial_b),
    )?;
    let spatial = g.reshape(da_map, &[h, w])?;

    let l = g.value(pooled).shape()[0];
    let db_map = g.conv1d(
        pooled,
        ConvSpec::new(cfg.c_spec, 1, 3),
        p.bias_spectral_w,
        Some(p.bias_spectral_b),
    )?;
    let spectral = g.reshape(db_map, &[l])?;

    // Channel factor: pooled descriptors of both inputs, concatenated and
    // passed through a linear (1×1) map.
    let pa = g.mean_leading(fa, 2)?; // [C_spat]
    let pb = g.mean_leading(pooled, 1)?; // [C_spec]
    let cat = g.concat(pa, pb, 0)?;
    let row = g.reshape(cat, &[1, cfg.c_spat + cfg.c_spec])?;
    let dc_map = g.conv1d(
        row,
        ConvSpec::new(cfg.c_spat + cfg.c_spec, cfg.c_spec, 1),
        p.bias_channel_w,
        Some(p.bias_channel_b),
    )?;
    let channel = g.reshape(dc_map, &[cfg.c_spec])?;

    let combined = g.combine_biases(spatial, spectral, channel)?;
    Ok(BiasNodes {
        spatial,
        spectral,
        channel,
        combined,
    })
}

/// Wires a whole block: kernel generation, combination, normalization, bias
/// generation and the adaptive application. Returns the `[H, W, L, C_spec]`
/// output node.
pub fn block_forward_graph(
    g: &mut Graph,
    cfg: &Ada3dBlockConfig,
    fa: NodeId,
    fb: NodeId,
    p: &Ada3dBlockParams,
) -> Result<NodeId> {
    cfg.validate()?;
    let fa_shape = g.value(fa).shape().to_vec();
    let fb_shape = g.value(fb).shape().to_vec();
    if fa_shape.len() != 3 || fa_shape[2] != cfg.c_spat {
        return Err(Error::Shape {
            op: "block_forward",
            detail: format!("spatial features {fa_shape:?}, expected [H, W, {}]", cfg.c_spat),
        });
    }
    if fb_shape.len() != 4
        || fb_shape[3] != cfg.c_spec
        || fb_shape[..2] != fa_shape[..2]
    {
        return Err(Error::Shape {
            op: "block_forward",
            detail: format!(
                "spectral volume {fb_shape:?}, expected [{}, {}, L, {}]",
                fa_shape[0], fa_shape[1], cfg.c_spec
            ),
        });
    }

    let ka = spatial_kernels_graph(g, cfg, fa, p.kgen_spatial_w1, p.kgen_spatial_w2)?;
    let pooled = g.mean_leading(fb, 2)?;
    let kb = spectral_kernels_graph(g, cfg, pooled, p.kgen_spectral_w1, p.kgen_spectral_w2)?;
    let combined = g.combine_kernels(ka, kb)?;
    let normalized = g.normalize_fields(combined, cfg.field_len())?;
    let biases = biases_graph(g, cfg, fa, pooled, p)?;
    g.ada3d_apply(fb, normalized, biases.combined, cfg.kernel)
}

// ---------------------------------------------------------------------------
// Pure entry points (scratch-graph wrappers around the builders above).
// ---------------------------------------------------------------------------

/// Generates the spatial kernel field `[H, W, C_spec, k³]` from `F^a`.
pub fn generate_spatial_kernels(
    fa: &Tensor,
    cfg: &Ada3dBlockConfig,
    w1: &Tensor,
    w2: &Tensor,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let fa = g.constant(fa.clone());
    let w1 = g.constant(w1.clone());
    let w2 = g.constant(w2.clone());
    let out = spatial_kernels_graph(&mut g, cfg, fa, w1, w2)?;
    Ok(g.value(out).clone())
}

/// Generates the spectral kernel field `[L, C_spec, k³]` from `F^b`
/// (pooling included).
pub fn generate_spectral_kernels(
    fb: &Tensor,
    cfg: &Ada3dBlockConfig,
    w1: &Tensor,
    w2: &Tensor,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let fb = g.constant(fb.clone());
    let w1 = g.constant(w1.clone());
    let w2 = g.constant(w2.clone());
    let pooled = g.mean_leading(fb, 2)?;
    let out = spectral_kernels_graph(&mut g, cfg, pooled, w1, w2)?;
    Ok(g.value(out).clone())
}

/// Combines the two kernel factors into per-voxel fields, returning the
/// product alongside the factors. `kernel` is the adaptive extent `k`.
pub fn combine_kernels(ka: &Tensor, kb: &Tensor, kernel: usize) -> Result<Ada3dKernels> {
    let f = kernel * kernel * kernel;
    if ka.order() != 4 || ka.shape()[3] != f {
        return Err(Error::Shape {
            op: "combine_kernels",
            detail: format!("spatial factor {:?} incompatible with k = {kernel}", ka.shape()),
        });
    }
    let flat = combine_kernel_fields(ka, kb)?;
    let s = flat.shape().to_vec();
    let combined = flat.reshape(&[s[0], s[1], s[2], s[3], kernel, kernel, kernel])?;
    Ok(Ada3dKernels {
        combined,
        spatial: ka.clone(),
        spectral: kb.clone(),
    })
}

/// Normalizes every `field_len`-element kernel field to zero mean and
/// guarded unit norm (pure form of the graph op).
pub fn normalize_kernel_fields(k: &Tensor, field_len: usize) -> Result<Tensor> {
    normalize_fields_forward(k, field_len)
}

/// Generates the adaptive biases (three factors and their combination).
pub fn generate_biases(
    fa: &Tensor,
    fb: &Tensor,
    cfg: &Ada3dBlockConfig,
    w: &Ada3dBlockWeights,
) -> Result<AdaptiveBiases> {
    cfg.validate()?;
    let mut g = Graph::new();
    let fa = g.constant(fa.clone());
    let fb = g.constant(fb.clone());
    let p = Ada3dBlockParams::constants(&mut g, w);
    let pooled = g.mean_leading(fb, 2)?;
    let nodes = biases_graph(&mut g, cfg, fa, pooled, &p)?;
    Ok(AdaptiveBiases {
        combined: g.value(nodes.combined).clone(),
        spatial: g.value(nodes.spatial).clone(),
        spectral: g.value(nodes.spectral).clone(),
        channel: g.value(nodes.channel).clone(),
    })
}

/// Runs a whole block on plain tensors.
pub fn block_forward(
    fa: &Tensor,
    fb: &Tensor,
    cfg: &Ada3dBlockConfig,
    w: &Ada3dBlockWeights,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let fa = g.constant(fa.clone());
    let fb = g.constant(fb.clone());
    let p = Ada3dBlockParams::constants(&mut g, w);
    let out = block_forward_graph(&mut g, cfg, fa, fb, &p)?;
    Ok(g.value(out).clone())
}
