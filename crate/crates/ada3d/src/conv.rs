//! Standard convolution operators and resampling primitives.
//!
//! All convolutions here are cross-correlations (no kernel flip) with stride
//! 1 and zero "same" padding, the only configuration the fusion network
//! uses. A single grouped N-dimensional core backs the 1D/2D/3D entry
//! points, so the grouped/depth-wise semantics and the hand-derived backward
//! pass exist exactly once.
//!
//! Layout conventions (channels last):
//!
//! * `conv1d`: input `[L, C_in]`, weights `[C_out, C_in/g, k]`
//! * `conv2d`: input `[H, W, C_in]`, weights `[C_out, C_in/g, k, k]`
//! * `conv3d`: input `[H, W, L, C_in]`, weights `[C_out, C_in/g, k, k, k]`
//!
//! Kernel taps enumerate the kernel axes in row-major order and are applied
//! at offsets `u − (k−1)/2`, so an odd kernel is centered on the output
//! position. Bias, when present, is one value per output channel.

use crate::error::{Error, Result};
use crate::tensor::{step_index, strides_for, Tensor};

/// Shape parameters of a grouped convolution.
///
/// `groups` must divide both channel counts; `groups == in_channels` (with
/// matching `out_channels`) gives a depth-wise convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Isotropic kernel extent; must be odd so "same" padding is symmetric.
    pub kernel: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            groups: 1,
        }
    }

    pub fn grouped(in_channels: usize, out_channels: usize, kernel: usize, groups: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            groups,
        }
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.groups == 0 {
            return Err(Error::Config(format!(
                "{op}: channel counts and groups must be positive, got {self:?}"
            )));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "{op}: kernel extent must be odd and positive, got {}",
                self.kernel
            )));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(Error::Config(format!(
                "{op}: groups {} must divide in_channels {} and out_channels {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        Ok(())
    }

    /// Expected weight shape for a `d`-dimensional convolution.
    fn weight_shape(&self, d: usize) -> Vec<usize> {
        let mut s = vec![self.out_channels, self.in_channels / self.groups];
        s.extend(std::iter::repeat(self.kernel).take(d));
        s
    }
}

/// Grouped N-dimensional correlation, stride 1, zero "same" padding.
pub(crate) fn conv_nd_forward(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    spec: &ConvSpec,
    d: usize,
) -> Result<Tensor> {
    let geo = Geometry::prepare("conv", x, w, b, spec, d)?;
    let wt = geo.transpose_weights(w.data());

    let mut out_shape = geo.spatial.clone();
    out_shape.push(spec.out_channels);
    let mut out = Tensor::zeros(&out_shape);
    let out_data = out.data_mut();
    let xd = x.data();

    let cig = geo.cig;
    let cog = geo.cog;
    let taps = geo.taps.len();
    let mut pos = vec![0usize; d];
    let mut pos_flat = 0usize; // spatial offset of the current position, in elements
    loop {
        let ob = pos_flat * spec.out_channels;
        if let Some(bias) = b {
            out_data[ob..ob + spec.out_channels].copy_from_slice(bias.data());
        }
        for (tap, off) in geo.taps.iter().enumerate() {
            let Some(src) = geo.source_offset(&pos, off) else {
                continue;
            };
            let xb = src * spec.in_channels;
            for g in 0..spec.groups {
                let xs = &xd[xb + g * cig..xb + (g + 1) * cig];
                for cl in 0..cog {
                    let co = g * cog + cl;
                    let wrow = &wt[(co * taps + tap) * cig..(co * taps + tap + 1) * cig];
                    out_data[ob + co] += dot(xs, wrow);
                }
            }
        }
        pos_flat += 1;
        if !step_index(&geo.spatial, &mut pos) {
            break;
        }
    }
    Ok(out)
}

/// Gradients of a grouped N-dimensional correlation. Only the requested
/// pieces are computed; omitted ones come back as `None`.
pub(crate) fn conv_nd_backward(
    x: &Tensor,
    w: &Tensor,
    spec: &ConvSpec,
    d: usize,
    gy: &Tensor,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
    let geo = Geometry::prepare("conv backward", x, w, None, spec, d)?;
    let mut expected = geo.spatial.clone();
    expected.push(spec.out_channels);
    if gy.shape() != expected.as_slice() {
        return Err(Error::Shape {
            op: "conv backward",
            detail: format!("output gradient {:?}, expected {:?}", gy.shape(), expected),
        });
    }

    let wt = geo.transpose_weights(w.data());
    let xd = x.data();
    let gd = gy.data();
    let cig = geo.cig;
    let cog = geo.cog;
    let taps = geo.taps.len();

    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    let mut dwt = need_dw.then(|| vec![0.0f64; w.len()]);
    let mut db = need_db.then(|| Tensor::zeros(&[spec.out_channels]));

    let mut pos = vec![0usize; d];
    let mut pos_flat = 0usize;
    loop {
        let ob = pos_flat * spec.out_channels;
        if let Some(db) = db.as_mut() {
            for (acc, &g) in db.data_mut().iter_mut().zip(&gd[ob..ob + spec.out_channels]) {
                *acc += g;
            }
        }
        if need_dx || need_dw {
            for (tap, off) in geo.taps.iter().enumerate() {
                let Some(src) = geo.source_offset(&pos, off) else {
                    continue;
                };
                let xb = src * spec.in_channels;
                for g in 0..spec.groups {
                    for cl in 0..cog {
                        let co = g * cog + cl;
                        let gv = gd[ob + co];
                        if gv == 0.0 {
                            continue;
                        }
                        let row = (co * taps + tap) * cig;
                        if let Some(dx) = dx.as_mut() {
                            let dst = &mut dx.data_mut()[xb + g * cig..xb + (g + 1) * cig];
                            axpy(gv, &wt[row..row + cig], dst);
                        }
                        if let Some(dwt) = dwt.as_mut() {
                            let xs = &xd[xb + g * cig..xb + (g + 1) * cig];
                            axpy(gv, xs, &mut dwt[row..row + cig]);
                        }
                    }
                }
            }
        }
        pos_flat += 1;
        if !step_index(&geo.spatial, &mut pos) {
            break;
        }
    }

    let dw = dwt.map(|dwt| {
        let mut dw = Tensor::zeros(w.shape());
        let dwd = dw.data_mut();
        for co in 0..spec.out_channels {
            for ci in 0..cig {
                for tap in 0..taps {
                    dwd[(co * cig + ci) * taps + tap] = dwt[(co * taps + tap) * cig + ci];
                }
            }
        }
        dw
    });
    Ok((dx, dw, db))
}

/// Validated geometry shared by the forward and backward passes.
struct Geometry {
    spatial: Vec<usize>,
    spatial_strides: Vec<usize>,
    taps: Vec<Vec<isize>>,
    cig: usize,
    cog: usize,
}

impl Geometry {
    fn prepare(
        op: &'static str,
        x: &Tensor,
        w: &Tensor,
        b: Option<&Tensor>,
        spec: &ConvSpec,
        d: usize,
    ) -> Result<Self> {
        spec.validate(op)?;
        if x.order() != d + 1 {
            return Err(Error::Shape {
                op: "conv",
                detail: format!("expected order-{} input, got {:?}", d + 1, x.shape()),
            });
        }
        if x.shape()[d] != spec.in_channels {
            return Err(Error::Shape {
                op: "conv",
                detail: format!(
                    "input {:?} has {} channels, spec says {}",
                    x.shape(),
                    x.shape()[d],
                    spec.in_channels
                ),
            });
        }
        if w.shape() != spec.weight_shape(d).as_slice() {
            return Err(Error::Shape {
                op: "conv",
                detail: format!(
                    "weights {:?}, expected {:?}",
                    w.shape(),
                    spec.weight_shape(d)
                ),
            });
        }
        if let Some(b) = b {
            if b.shape() != [spec.out_channels] {
                return Err(Error::Shape {
                    op: "conv",
                    detail: format!("bias {:?}, expected [{}]", b.shape(), spec.out_channels),
                });
            }
        }
        let spatial = x.shape()[..d].to_vec();
        // Strides over spatial positions only (channels excluded).
        let spatial_strides = strides_for(&spatial);
        let m = (spec.kernel / 2) as isize;
        let kdims = vec![spec.kernel; d];
        let mut taps = Vec::with_capacity(spec.kernel.pow(d as u32));
        let mut u = vec![0usize; d];
        loop {
            taps.push(u.iter().map(|&ui| ui as isize - m).collect());
            if !step_index(&kdims, &mut u) {
                break;
            }
        }
        Ok(Self {
            spatial,
            spatial_strides,
            taps,
            cig: spec.in_channels / spec.groups,
            cog: spec.out_channels / spec.groups,
        })
    }

    /// Spatial element offset of `pos + off`, or `None` when it falls into
    /// the zero padding.
    fn source_offset(&self, pos: &[usize], off: &[isize]) -> Option<usize> {
        let mut flat = 0usize;
        for ((&p, &o), (&e, &s)) in pos
            .iter()
            .zip(off)
            .zip(self.spatial.iter().zip(&self.spatial_strides))
        {
            let c = p as isize + o;
            if c < 0 || c >= e as isize {
                return None;
            }
            flat += c as usize * s;
        }
        Some(flat)
    }

    /// Copies weights from `[C_out, C_in/g, taps]` into `[C_out, taps,
    /// C_in/g]` so the innermost loops run over contiguous memory.
    fn transpose_weights(&self, wd: &[f64]) -> Vec<f64> {
        let (cig, taps) = (self.cig, self.taps.len());
        let mut wt = vec![0.0f64; wd.len()];
        for co in 0..wd.len() / (cig * taps) {
            for ci in 0..cig {
                for tap in 0..taps {
                    wt[(co * taps + tap) * cig + ci] = wd[(co * cig + ci) * taps + tap];
                }
            }
        }
        wt
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// 1D grouped correlation along the leading axis of an `[L, C_in]` input.
pub fn conv1d(x: &Tensor, spec: &ConvSpec, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    conv_nd_forward(x, w, b, spec, 1)
}

/// 2D grouped correlation over an `[H, W, C_in]` input.
pub fn conv2d(x: &Tensor, spec: &ConvSpec, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    conv_nd_forward(x, w, b, spec, 2)
}

/// 3D grouped correlation over an `[H, W, L, C_in]` input.
pub fn conv3d(x: &Tensor, spec: &ConvSpec, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    conv_nd_forward(x, w, b, spec, 3)
}

/// Mean over the first `n` axes, keeping the rest.
pub(crate) fn mean_leading(x: &Tensor, n: usize) -> Result<Tensor> {
    if n == 0 || n >= x.order() {
        return Err(Error::Shape {
            op: "mean_leading",
            detail: format!("cannot pool {n} leading axes of {:?}", x.shape()),
        });
    }
    let lead: usize = x.shape()[..n].iter().product();
    let rest_shape = x.shape()[n..].to_vec();
    let rest: usize = rest_shape.iter().product();
    let mut out = Tensor::zeros(&rest_shape);
    let od = out.data_mut();
    for chunk in x.data().chunks_exact(rest) {
        for (o, &v) in od.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    let inv = 1.0 / lead as f64;
    for o in od.iter_mut() {
        *o *= inv;
    }
    Ok(out)
}

/// Collapses the two spatial axes of an `[H, W, L, C]` feature volume by
/// averaging, leaving the `[L, C]` band/channel matrix.
pub fn global_avg_pool_spatial(x: &Tensor) -> Result<Tensor> {
    if x.order() != 4 {
        return Err(Error::Shape {
            op: "global_avg_pool_spatial",
            detail: format!("expected an [H, W, L, C] tensor, got {:?}", x.shape()),
        });
    }
    mean_leading(x, 2)
}

/// Keys cubic interpolation kernel with a = −1/2.
fn cubic_keys(x: f64) -> f64 {
    let t = x.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Per-axis sampling plan: four clamped source rows and their Keys weights
/// for every output coordinate. Output pixel centers are aligned with source
/// pixel centers (`src = (dst + 0.5)/r − 0.5`), so `r = 1` is the identity.
fn bicubic_axis_plan(src_len: usize, r: usize) -> Vec<([usize; 4], [f64; 4])> {
    let mut plan = Vec::with_capacity(src_len * r);
    for o in 0..src_len * r {
        let s = (o as f64 + 0.5) / r as f64 - 0.5;
        let base = s.floor();
        let t = s - base;
        let mut rows = [0usize; 4];
        let mut wts = [0.0f64; 4];
        for j in 0..4 {
            let src = base as isize + j as isize - 1;
            rows[j] = src.clamp(0, src_len as isize - 1) as usize;
            wts[j] = cubic_keys(t - (j as f64 - 1.0));
        }
        plan.push((rows, wts));
    }
    plan
}

/// Band-wise bicubic upsampling of an `[h, w, L]` volume by an integer
/// factor, using the Keys kernel (a = −1/2) with edge-clamped sampling.
pub fn bicubic_upsample(x: &Tensor, r: usize) -> Result<Tensor> {
    if r < 1 {
        return Err(Error::Config("bicubic_upsample: scale must be ≥ 1".into()));
    }
    if x.order() != 3 || x.shape()[0] < 2 || x.shape()[1] < 2 {
        return Err(Error::Shape {
            op: "bicubic_upsample",
            detail: format!("expected an [h≥2, w≥2, L] volume, got {:?}", x.shape()),
        });
    }
    let (h, w, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let row_len = w * l;

    // Rows first: [h, w, L] → [rh, w, L]; the inner axpy runs over whole
    // contiguous (w·L)-element rows.
    let rows_plan = bicubic_axis_plan(h, r);
    let mut tmp = Tensor::zeros(&[r * h, w, l]);
    for (oy, (rows, wts)) in rows_plan.iter().enumerate() {
        let (dst_from, dst_to) = (oy * row_len, (oy + 1) * row_len);
        for j in 0..4 {
            let src = &x.data()[rows[j] * row_len..(rows[j] + 1) * row_len];
            axpy(wts[j], src, &mut tmp.data_mut()[dst_from..dst_to]);
        }
    }

    // Columns second: [rh, w, L] → [rh, rw, L]; the inner axpy runs over
    // L-element band fibres.
    let cols_plan = bicubic_axis_plan(w, r);
    let mut out = Tensor::zeros(&[r * h, r * w, l]);
    for y in 0..r * h {
        let trow = &tmp.data()[y * row_len..(y + 1) * row_len];
        let orow = &mut out.data_mut()[y * r * row_len..(y + 1) * r * row_len];
        for (ox, (cols, wts)) in cols_plan.iter().enumerate() {
            for j in 0..4 {
                let src = &trow[cols[j] * l..(cols[j] + 1) * l];
                axpy(wts[j], src, &mut orow[ox * l..(ox + 1) * l]);
            }
        }
    }
    Ok(out)
}

/// Depth-to-space rearrangement: `[h, w, r²·C]` → `[rh, rw, C]` with
/// `out(y, x, c) = in(y/r, x/r, c·r² + (y mod r)·r + (x mod r))`, i.e. the
/// channel block of a source pixel is read channel-major, then sub-pixel
/// row-major.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    if r < 1 {
        return Err(Error::Config("pixel_shuffle: scale must be ≥ 1".into()));
    }
    if x.order() != 3 || x.shape()[2] % (r * r) != 0 {
        return Err(Error::Shape {
            op: "pixel_shuffle",
            detail: format!("expected [h, w, r²·C] with r = {r}, got {:?}", x.shape()),
        });
    }
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let c = cin / (r * r);
    let mut out = Tensor::zeros(&[r * h, r * w, c]);
    let od = out.data_mut();
    let xd = x.data();
    for y in 0..r * h {
        let (sy, py) = (y / r, y % r);
        for xo in 0..r * w {
            let (sx, px) = (xo / r, xo % r);
            let src = (sy * w + sx) * cin + py * r + px;
            let dst = (y * r * w + xo) * c;
            for ch in 0..c {
                od[dst + ch] = xd[src + ch * r * r];
            }
        }
    }
    Ok(out)
}

/// Inverse rearrangement of [`pixel_shuffle`], used by its backward pass.
pub(crate) fn pixel_unshuffle(g: &Tensor, r: usize) -> Result<Tensor> {
    if g.order() != 3 || g.shape()[0] % r != 0 || g.shape()[1] % r != 0 {
        return Err(Error::Shape {
            op: "pixel_unshuffle",
            detail: format!("expected [rh, rw, C] with r = {r}, got {:?}", g.shape()),
        });
    }
    let (hh, ww, c) = (g.shape()[0], g.shape()[1], g.shape()[2]);
    let (h, w) = (hh / r, ww / r);
    let cin = c * r * r;
    let mut out = Tensor::zeros(&[h, w, cin]);
    let od = out.data_mut();
    let gd = g.data();
    for y in 0..hh {
        let (sy, py) = (y / r, y % r);
        for xo in 0..ww {
            let (sx, px) = (xo / r, xo % r);
            let dst = (sy * w + sx) * cin + py * r + px;
            let src = (y * ww + xo) * c;
            for ch in 0..c {
                od[dst + ch * r * r] = gd[src + ch];
            }
        }
    }
    Ok(out)
}

/// Learned sub-pixel upsampling: a 3×3 convolution expands an `[h, w, L]`
/// volume to `r²·L` channels, then [`pixel_shuffle`] rearranges the result
/// into `[rh, rw, L]`.
pub fn pixel_shuffle_upsample(x: &Tensor, r: usize, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    if x.order() != 3 {
        return Err(Error::Shape {
            op: "pixel_shuffle_upsample",
            detail: format!("expected an [h, w, L] volume, got {:?}", x.shape()),
        });
    }
    let l = x.shape()[2];
    let spec = ConvSpec::new(l, r * r * l, 3);
    let expanded = conv2d(x, &spec, w, b)?;
    pixel_shuffle(&expanded, r)
}
