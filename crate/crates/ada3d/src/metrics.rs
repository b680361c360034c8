//! Full-reference quality metrics for fused image volumes.
//!
//! All metrics take a prediction and a reference of shape `[H, W, L]`
//! (bands last) and assume intensities in `[0, 1]` unless noted. Degenerate
//! slices (constant bands for the correlation coefficient, zero-norm pixels
//! for the spectral angle, near-zero band means for the relative error) are
//! excluded or guarded rather than producing NaN, and the guard counts are
//! reported.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which per-band statistic divides the band MSE inside the relative
/// dimensionless global error.
///
/// Both forms appear in practice: dividing by the squared mean of the
/// reference band (the classical definition) or by its mean square. The
/// default is [`ErgasConvention::SquaredMean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgasConvention {
    /// Divide each band's MSE by `mean(ref²)`.
    MeanSquare,
    /// Divide each band's MSE by `mean(ref)²` (classical).
    SquaredMean,
}

impl Default for ErgasConvention {
    fn default() -> Self {
        ErgasConvention::SquaredMean
    }
}

impl ErgasConvention {
    pub fn tag(&self) -> &'static str {
        match self {
            ErgasConvention::MeanSquare => "mean-square",
            ErgasConvention::SquaredMean => "squared-mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean-square" => Ok(ErgasConvention::MeanSquare),
            "squared-mean" => Ok(ErgasConvention::SquaredMean),
            other => Err(Error::Config(format!(
                "unknown normalizer convention `{other}` (expected squared-mean or mean-square)"
            ))),
        }
    }
}

impl std::fmt::Display for ErgasConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErgasConvention::MeanSquare => write!(f, "mean-square"),
            ErgasConvention::SquaredMean => write!(f, "squared-mean"),
        }
    }
}

/// Floor for the per-band normalizer `μ²` before division.
pub const ERGAS_MEAN_GUARD: f64 = 1e-12;

/// Intermediate quantities of the relative dimensionless global error,
/// shared between the metric and its training-loss counterpart so both are
/// bit-identical.
#[derive(Debug, Clone)]
pub struct ErgasParts {
    /// The metric value `(100/r)·√((1/L)·Σ_l MSE_l/μ²_l)`.
    pub value: f64,
    /// The argument of the square root (the band-mean of normalized MSEs).
    pub sqrt_arg: f64,
    /// Per-band weights `1/(L·HW·max(μ²_l, guard))`, i.e. the factor that
    /// multiplies `Σ_p (pred−ref)²` of band `l` inside `sqrt_arg`.
    pub band_weights: Vec<f64>,
    /// Number of bands whose normalizer hit the guard floor.
    pub guarded: usize,
}

fn check_pair(op: &'static str, pred: &Tensor, reference: &Tensor) -> Result<(usize, usize, usize)> {
    if pred.order() != 3 || pred.shape() != reference.shape() {
        return Err(Error::Shape {
            op,
            detail: format!(
                "expected matching [H,W,L] volumes, got {:?} and {:?}",
                pred.shape(),
                reference.shape()
            ),
        });
    }
    Ok((pred.shape()[0], pred.shape()[1], pred.shape()[2]))
}

/// Computes the relative dimensionless global error and its reusable
/// intermediates. `ratio` is the resolution ratio between the fused product
/// and the low-resolution input.
pub fn ergas_parts(
    pred: &Tensor,
    reference: &Tensor,
    ratio: u32,
    convention: ErgasConvention,
) -> Result<ErgasParts> {
    let (h, w, l) = check_pair("ergas", pred, reference)?;
    if ratio == 0 {
        return Err(Error::Config("resolution ratio must be positive".into()));
    }
    let hw = (h * w) as f64;
    let mut band_weights = vec![0.0f64; l];
    let mut band_sse = vec![0.0f64; l];
    let mut band_sum = vec![0.0f64; l];
    let mut band_sumsq = vec![0.0f64; l];
    for (p, r) in pred.data().chunks_exact(l).zip(reference.data().chunks_exact(l)) {
        for li in 0..l {
            let d = p[li] - r[li];
            band_sse[li] += d * d;
            band_sum[li] += r[li];
            band_sumsq[li] += r[li] * r[li];
        }
    }
    let mut guarded = 0usize;
    let mut sqrt_arg = 0.0f64;
    for li in 0..l {
        let mu2 = match convention {
            ErgasConvention::MeanSquare => band_sumsq[li] / hw,
            ErgasConvention::SquaredMean => {
                let m = band_sum[li] / hw;
                m * m
            }
        };
        let denom = if mu2 < ERGAS_MEAN_GUARD {
            guarded += 1;
            ERGAS_MEAN_GUARD
        } else {
            mu2
        };
        let wgt = 1.0 / (l as f64 * hw * denom);
        band_weights[li] = wgt;
        sqrt_arg += wgt * band_sse[li];
    }
    let value = (100.0 / ratio as f64) * sqrt_arg.sqrt();
    Ok(ErgasParts {
        value,
        sqrt_arg,
        band_weights,
        guarded,
    })
}

/// Relative dimensionless global error (lower is better, 0 is perfect).
pub fn ergas(pred: &Tensor, reference: &Tensor, ratio: u32, convention: ErgasConvention) -> Result<f64> {
    Ok(ergas_parts(pred, reference, ratio, convention)?.value)
}

/// Cap applied to a band's peak signal-to-noise ratio when its mean squared
/// error vanishes (keeps report tables finite).
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio in decibels: per band,
/// `10·log10(peak²/MSE_band)` capped at [`PSNR_CAP_DB`], averaged over
/// bands. Identical volumes report the cap.
pub fn psnr(pred: &Tensor, reference: &Tensor, peak: f64) -> Result<f64> {
    let (h, w, l) = check_pair("psnr", pred, reference)?;
    if !(peak > 0.0) {
        return Err(Error::Config(format!("psnr peak must be positive, got {peak}")));
    }
    let n = (h * w) as f64;
    let mut band_sse = vec![0.0f64; l];
    for (p, r) in pred.data().chunks_exact(l).zip(reference.data().chunks_exact(l)) {
        for li in 0..l {
            let d = p[li] - r[li];
            band_sse[li] += d * d;
        }
    }
    let total: f64 = band_sse
        .iter()
        .map(|&sse| {
            let mse = sse / n;
            if mse == 0.0 {
                PSNR_CAP_DB
            } else {
                (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
            }
        })
        .sum();
    Ok(total / l as f64)
}

/// Mean per-band Pearson correlation coefficient. Bands that are constant
/// in either volume carry no correlation information and are excluded; if
/// every band is excluded the result is an error.
pub fn cc(pred: &Tensor, reference: &Tensor) -> Result<f64> {
    let (h, w, l) = check_pair("cc", pred, reference)?;
    let n = (h * w) as f64;
    let mut sums = vec![[0.0f64; 5]; l]; // Σp, Σr, Σp², Σr², Σpr
    for (p, r) in pred.data().chunks_exact(l).zip(reference.data().chunks_exact(l)) {
        for li in 0..l {
            let s = &mut sums[li];
            s[0] += p[li];
            s[1] += r[li];
            s[2] += p[li] * p[li];
            s[3] += r[li] * r[li];
            s[4] += p[li] * r[li];
        }
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for s in &sums {
        let var_p = s[2] - s[0] * s[0] / n;
        let var_r = s[3] - s[1] * s[1] / n;
        if var_p <= 1e-24 || var_r <= 1e-24 {
            continue;
        }
        let cov = s[4] - s[0] * s[1] / n;
        total += cov / (var_p * var_r).sqrt();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Numerical(
            "correlation undefined: every band is constant".into(),
        ));
    }
    Ok(total / used as f64)
}

/// Mean spectral angle in degrees between per-pixel spectra. Pixels whose
/// spectrum has (near-)zero norm in either volume are excluded; if every
/// pixel is excluded the result is an error.
pub fn sam_degrees(pred: &Tensor, reference: &Tensor) -> Result<f64> {
    let (_, _, l) = check_pair("sam", pred, reference)?;
    let mut total = 0.0f64;
    let mut used = 0usize;
    for (p, r) in pred.data().chunks_exact(l).zip(reference.data().chunks_exact(l)) {
        let (mut dot, mut np, mut nr) = (0.0f64, 0.0f64, 0.0f64);
        for li in 0..l {
            dot += p[li] * r[li];
            np += p[li] * p[li];
            nr += r[li] * r[li];
        }
        if np <= 1e-24 || nr <= 1e-24 {
            continue;
        }
        let cos = (dot / (np.sqrt() * nr.sqrt())).clamp(-1.0, 1.0);
        total += cos.acos();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Numerical(
            "spectral angle undefined: every pixel has zero norm".into(),
        ));
    }
    Ok(total / used as f64 * 180.0 / std::f64::consts::PI)
}

/// SSIM window half-extent: the window is `11×11`.
const SSIM_HALF: isize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn ssim_window() -> Vec<f64> {
    let side = (2 * SSIM_HALF + 1) as usize;
    let mut w = vec![0.0f64; side * side];
    let mut sum = 0.0;
    for dy in -SSIM_HALF..=SSIM_HALF {
        for dx in -SSIM_HALF..=SSIM_HALF {
            let v = (-((dy * dy + dx * dx) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[((dy + SSIM_HALF) * (2 * SSIM_HALF + 1) + (dx + SSIM_HALF)) as usize] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity over all bands, using an 11×11 Gaussian
/// window (σ = 1.5) on fully interior ("valid") window positions, with
/// stabilizers `(k1·peak)²` and `(k2·peak)²`. Requires `H, W ≥ 11`.
pub fn ssim(pred: &Tensor, reference: &Tensor, peak: f64) -> Result<f64> {
    let (h, w, l) = check_pair("ssim", pred, reference)?;
    if !(peak > 0.0) {
        return Err(Error::Config(format!("ssim peak must be positive, got {peak}")));
    }
    let side = (2 * SSIM_HALF + 1) as usize;
    if h < side || w < side {
        return Err(Error::Shape {
            op: "ssim",
            detail: format!("spatial extents {h}×{w} smaller than the {side}×{side} window"),
        });
    }
    let win = ssim_window();
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);
    let mut total = 0.0f64;
    let mut count = 0usize;
    let half = SSIM_HALF as usize;
    for li in 0..l {
        for cy in half..h - half {
            for cx in half..w - half {
                let (mut mp, mut mr) = (0.0f64, 0.0f64);
                let (mut sp, mut sr, mut spr) = (0.0f64, 0.0f64, 0.0f64);
                let mut wi = 0usize;
                for dy in 0..side {
                    for dx in 0..side {
                        let y = cy + dy - half;
                        let x = cx + dx - half;
                        let i = (y * w + x) * l + li;
                        let pv = pred.data()[i];
                        let rv = reference.data()[i];
                        let wt = win[wi];
                        wi += 1;
                        mp += wt * pv;
                        mr += wt * rv;
                        sp += wt * pv * pv;
                        sr += wt * rv * rv;
                        spr += wt * pv * rv;
                    }
                }
                let vp = sp - mp * mp;
                let vr = sr - mr * mr;
                let cov = spr - mp * mr;
                let num = (2.0 * mp * mr + c1) * (2.0 * cov + c2);
                let den = (mp * mp + mr * mr + c1) * (vp + vr + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// A bundle of every metric for one prediction/reference pair.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub cc: f64,
    pub ssim: f64,
    pub sam_degrees: f64,
    pub ergas: f64,
    /// Bands whose relative-error normalizer hit the guard floor.
    pub ergas_guarded_bands: usize,
}

impl MetricReport {
    /// Evaluates all metrics at once, with peak intensity 1.0.
    pub fn compute(
        pred: &Tensor,
        reference: &Tensor,
        ratio: u32,
        convention: ErgasConvention,
    ) -> Result<Self> {
        let parts = ergas_parts(pred, reference, ratio, convention)?;
        Ok(Self {
            psnr_db: psnr(pred, reference, 1.0)?,
            cc: cc(pred, reference)?,
            ssim: ssim(pred, reference, 1.0)?,
            sam_degrees: sam_degrees(pred, reference)?,
            ergas: parts.value,
            ergas_guarded_bands: parts.guarded,
        })
    }

    /// Tab-separated `key=value` record fields, fixed order.
    pub fn record_fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("psnr_db", format!("{:.6}", self.psnr_db)),
            ("cc", format!("{:.6}", self.cc)),
            ("ssim", format!("{:.6}", self.ssim)),
            ("sam_deg", format!("{:.6}", self.sam_degrees)),
            ("ergas", format!("{:.6}", self.ergas)),
            ("ergas_guarded", self.ergas_guarded_bands.to_string()),
        ]
    }
}
