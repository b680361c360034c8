//! Synthetic fusion datasets via the reference-degradation protocol.
//!
//! Ground truth comes first: per band, a mix of one shared and one
//! band-specific smoothed noise field, min-max rescaled to `[0, 1]`. The
//! observed inputs are then *derived* from it — the low-resolution stack by
//! Gaussian blur and 4× box downsampling, the panchromatic image as a
//! convex band average — so the ground truth genuinely is the target the
//! fusion should recover.
//!
//! The blur uses a truncated Gaussian, renormalized per position at the
//! borders, so constant images pass through unchanged (up to rounding).
//! Real sensor degradations use instrument-specific transfer functions;
//! the configurable `blur_sigma` stands in for them here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::config;
use crate::container::{self, DType};
use crate::error::{Error, Result};
use crate::net::FusionSample;
use crate::tensor::Tensor;

/// Resolution ratio between ground truth and the low-resolution stack.
pub const RATIO: usize = 4;

/// Weight of the field shared across bands when synthesizing ground truth
/// (the remainder is band-specific), chosen so the band average retains
/// most of each band's spatial detail.
const SHARED_FIELD_WEIGHT: f64 = 0.7;

/// Smoothing applied to the raw noise fields of the ground truth.
const GT_SMOOTHING_SIGMA: f64 = 1.2;

/// Recipe for one synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub n_samples: usize,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    /// Standard deviation of the degradation blur.
    pub blur_sigma: f64,
    /// Convex weights of the panchromatic band average (length `bands`,
    /// nonnegative, summing to 1).
    pub pan_weights: Vec<f64>,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.bands == 0 {
            return Err(Error::Config(format!(
                "need positive sample and band counts, got {} / {}",
                self.n_samples, self.bands
            )));
        }
        if self.height == 0
            || self.width == 0
            || self.height % RATIO != 0
            || self.width % RATIO != 0
        {
            return Err(Error::Config(format!(
                "spatial extents must be positive multiples of {RATIO}, got {}×{}",
                self.height, self.width
            )));
        }
        if !(self.blur_sigma > 0.0) {
            return Err(Error::Config(format!(
                "blur sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if self.pan_weights.len() != self.bands {
            return Err(Error::Config(format!(
                "{} panchromatic weights for {} bands",
                self.pan_weights.len(),
                self.bands
            )));
        }
        if self.pan_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("panchromatic weights must be nonnegative".into()));
        }
        let sum: f64 = self.pan_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "panchromatic weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Equal panchromatic weights over `bands` bands.
pub fn uniform_pan_weights(bands: usize) -> Vec<f64> {
    vec![1.0 / bands as f64; bands]
}

/// Truncated normalized Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for d in -radius..=radius {
        let v = (-(d as f64 * d as f64) / (2.0 * sigma * sigma)).exp();
        taps.push(v);
        sum += v;
    }
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur of a `[H, W]` image. At the borders the kernel
/// is renormalized over the in-bounds taps, so constants are preserved.
pub fn gaussian_blur_2d(x: &Tensor, sigma: f64) -> Result<Tensor> {
    if x.order() != 2 {
        return Err(Error::Shape {
            op: "gaussian_blur",
            detail: format!("expected [H, W], got {:?}", x.shape()),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("blur sigma must be positive, got {sigma}")));
    }
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as isize;
    let (h, w) = (x.shape()[0], x.shape()[1]);

    let pass = |src: &Tensor, len: usize, stride_len: usize, vertical: bool| -> Tensor {
        let mut out = Tensor::zeros(src.shape());
        for a in 0..stride_len {
            for b in 0..len {
                let mut acc = 0.0;
                let mut weight = 0.0;
                for (i, &t) in taps.iter().enumerate() {
                    let o = b as isize + i as isize - radius;
                    if o < 0 || o >= len as isize {
                        continue;
                    }
                    let idx = if vertical {
                        [o as usize, a]
                    } else {
                        [a, o as usize]
                    };
                    acc += t * src.get(&idx);
                    weight += t;
                }
                let idx = if vertical { [b, a] } else { [a, b] };
                out.set(&idx, acc / weight);
            }
        }
        out
    };

    let vert = pass(x, h, w, true);
    Ok(pass(&vert, w, h, false))
}

/// Mean over non-overlapping `r×r` blocks of a `[H, W]` image.
pub fn box_downsample_2d(x: &Tensor, r: usize) -> Result<Tensor> {
    if x.order() != 2 {
        return Err(Error::Shape {
            op: "box_downsample",
            detail: format!("expected [H, W], got {:?}", x.shape()),
        });
    }
    let (h, w) = (x.shape()[0], x.shape()[1]);
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::Shape {
            op: "box_downsample",
            detail: format!("{h}×{w} not divisible into {r}×{r} blocks"),
        });
    }
    let inv = 1.0 / (r * r) as f64;
    Ok(Tensor::from_fn(&[h / r, w / r], |i| {
        let mut acc = 0.0;
        for dy in 0..r {
            for dx in 0..r {
                acc += x.get(&[i[0] * r + dy, i[1] * r + dx]);
            }
        }
        acc * inv
    }))
}

fn band(gt: &Tensor, l: usize) -> Tensor {
    let (h, w, bands) = (gt.shape()[0], gt.shape()[1], gt.shape()[2]);
    Tensor::from_fn(&[h, w], |i| gt.data()[(i[0] * w + i[1]) * bands + l])
}

/// Derives the observed pair from a ground-truth volume: the panchromatic
/// image as the `pan_weights` band average, the low-resolution stack as
/// per-band Gaussian blur followed by `RATIO`× box downsampling.
pub fn degrade_sample(
    gt: &Tensor,
    blur_sigma: f64,
    pan_weights: &[f64],
) -> Result<(Tensor, Tensor)> {
    if gt.order() != 3 {
        return Err(Error::Shape {
            op: "degrade",
            detail: format!("expected [H, W, L] ground truth, got {:?}", gt.shape()),
        });
    }
    let (h, w, bands) = (gt.shape()[0], gt.shape()[1], gt.shape()[2]);
    if pan_weights.len() != bands {
        return Err(Error::Config(format!(
            "{} panchromatic weights for {bands} bands",
            pan_weights.len()
        )));
    }
    if h % RATIO != 0 || w % RATIO != 0 {
        return Err(Error::Shape {
            op: "degrade",
            detail: format!("{h}×{w} not divisible by the ratio {RATIO}"),
        });
    }
    let mut pan = Tensor::zeros(&[h, w]);
    for (l, &weight) in pan_weights.iter().enumerate() {
        let b = band(gt, l);
        for (p, v) in pan.data_mut().iter_mut().zip(b.data()) {
            *p += weight * v;
        }
    }
    let mut lr = Tensor::zeros(&[h / RATIO, w / RATIO, bands]);
    for l in 0..bands {
        let blurred = gaussian_blur_2d(&band(gt, l), blur_sigma)?;
        let small = box_downsample_2d(&blurred, RATIO)?;
        let (lh, lw) = (h / RATIO, w / RATIO);
        for y in 0..lh {
            for x in 0..lw {
                lr.data_mut()[(y * lw + x) * bands + l] = small.get(&[y, x]);
            }
        }
    }
    Ok((pan, lr))
}

fn smoothed_field(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let noise = Tensor::uniform(&[h, w], 0.0, 1.0, rng);
    gaussian_blur_2d(&noise, GT_SMOOTHING_SIGMA)
}

fn synth_ground_truth(h: usize, w: usize, bands: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let shared = smoothed_field(h, w, rng)?;
    let mut gt = Tensor::zeros(&[h, w, bands]);
    for l in 0..bands {
        let own = smoothed_field(h, w, rng)?;
        // Mix, then stretch the band to exactly [0, 1].
        let mixed: Vec<f64> = shared
            .data()
            .iter()
            .zip(own.data())
            .map(|(&s, &o)| SHARED_FIELD_WEIGHT * s + (1.0 - SHARED_FIELD_WEIGHT) * o)
            .collect();
        let lo = mixed.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mixed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (i, &v) in mixed.iter().enumerate() {
            gt.data_mut()[i * bands + l] = (v - lo) / span;
        }
    }
    Ok(gt)
}

/// Generates `n_samples` fusion samples, deterministically per seed.
pub fn gen_synthetic_dataset(spec: &SyntheticDatasetSpec) -> Result<Vec<FusionSample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let gt = synth_ground_truth(spec.height, spec.width, spec.bands, &mut rng)?;
        let (pan, lr) = degrade_sample(&gt, spec.blur_sigma, &spec.pan_weights)?;
        out.push(FusionSample {
            pan,
            lr,
            gt: Some(gt),
        });
    }
    Ok(out)
}

/// Writes a dataset as `dataset.atns` (entries `sample{i}.pan/lr/gt`) plus
/// a `dataset.cfg` manifest under `dir`.
pub fn save_dataset(dir: &Path, samples: &[FusionSample], spec: &SyntheticDatasetSpec) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries: Vec<(String, &Tensor)> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        entries.push((format!("sample{i}.pan"), &s.pan));
        entries.push((format!("sample{i}.lr"), &s.lr));
        if let Some(gt) = &s.gt {
            entries.push((format!("sample{i}.gt"), gt));
        }
    }
    container::write_tensors(&dir.join("dataset.atns"), &entries, DType::F64)?;
    let weights = spec
        .pan_weights
        .iter()
        .map(|w| format!("{w}"))
        .collect::<Vec<_>>()
        .join(",");
    let manifest: Vec<(String, String)> = vec![
        ("bands".into(), spec.bands.to_string()),
        ("blur_sigma".into(), format!("{}", spec.blur_sigma)),
        ("height".into(), spec.height.to_string()),
        ("n_samples".into(), spec.n_samples.to_string()),
        ("pan_weights".into(), weights),
        ("seed".into(), spec.seed.to_string()),
        ("width".into(), spec.width.to_string()),
    ];
    config::save(&dir.join("dataset.cfg"), &manifest)?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(Vec<FusionSample>, SyntheticDatasetSpec)> {
    let manifest = config::load(&dir.join("dataset.cfg"))?;
    let spec = SyntheticDatasetSpec {
        n_samples: config::get_usize(&manifest, "n_samples")?,
        height: config::get_usize(&manifest, "height")?,
        width: config::get_usize(&manifest, "width")?,
        bands: config::get_usize(&manifest, "bands")?,
        blur_sigma: config::get_f64(&manifest, "blur_sigma")?,
        pan_weights: config::get_str(&manifest, "pan_weights")?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad panchromatic weight `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?,
        seed: config::get_usize(&manifest, "seed")? as u64,
    };
    spec.validate()?;
    let entries = container::read_tensors(&dir.join("dataset.atns"))?;
    let mut by_name: std::collections::BTreeMap<String, Tensor> = entries.into_iter().collect();
    let mut samples = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let pan = by_name
            .remove(&format!("sample{i}.pan"))
            .ok_or_else(|| Error::Config(format!("dataset is missing sample{i}.pan")))?;
        let lr = by_name
            .remove(&format!("sample{i}.lr"))
            .ok_or_else(|| Error::Config(format!("dataset is missing sample{i}.lr")))?;
        let gt = by_name.remove(&format!("sample{i}.gt"));
        let sample = FusionSample { pan, lr, gt };
        sample.validate(RATIO)?;
        samples.push(sample);
    }
    Ok((samples, spec))
}
