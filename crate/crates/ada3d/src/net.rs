//! The two-branch fusion network.
//!
//! Inputs are a high-resolution panchromatic image `PAN ∈ [H, W]` and a
//! low-resolution band stack `LR ∈ [H/r, W/r, L]` with `r = 4`. The
//! low-resolution stack is upsampled to `B^U ∈ [H, W, L]` (bicubic or a
//! learned sub-pixel shuffle), then:
//!
//! - the **spatial branch** concatenates `PAN` and `B^U` along channels,
//!   lifts to `C_spat` channels with a 3×3 convolution, and refines through
//!   a chain of residual blocks, keeping every stage output;
//! - the **spectral branch** treats `B^U` as a one-channel voxel volume,
//!   lifts it to `C_spec` channels with a k³ convolution, passes it through
//!   `n` adaptive 3D blocks — block `j` consumes the spatial stage output
//!   `j mod n_res`, cycling when the counts differ — and projects back to
//!   one channel with a k³ convolution;
//! - the projected volume is added to `B^U`, so an all-zero trunk realizes
//!   the identity on the upsampled input.
//!
//! The training objective is `mean |Õ − O| + λ · ERGAS(Õ, O)`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::autodiff::{Graph, NodeId};
use crate::block::{self, Ada3dBlockConfig, Ada3dBlockParams};
use crate::config;
use crate::container;
use crate::conv::{self, ConvSpec};
use crate::error::{Error, Result};
use crate::metrics::{ergas_parts, ErgasConvention};
use crate::params::{ParamSet, ParamSpec};
use crate::tensor::Tensor;

/// How the low-resolution stack is brought to the output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsampler {
    /// Fixed Catmull-Rom interpolation, parameter-free.
    Bicubic,
    /// A learned 3×3 convolution to `r²·L` channels followed by sub-pixel
    /// rearrangement.
    PixelShuffle,
}

impl Upsampler {
    pub fn tag(&self) -> &'static str {
        match self {
            Upsampler::Bicubic => "bicubic",
            Upsampler::PixelShuffle => "pixelshuffle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bicubic" => Ok(Upsampler::Bicubic),
            "pixelshuffle" => Ok(Upsampler::PixelShuffle),
            other => Err(Error::Config(format!("unknown upsampler `{other}`"))),
        }
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// Channels of the spatial branch.
    pub c_spat: usize,
    /// Channels of the spectral branch (and of the adaptive kernels).
    pub c_spec: usize,
    /// Adaptive kernel extent.
    pub kernel: usize,
    /// Spatial kernel-generator width multiplier.
    pub alpha: f64,
    /// Spectral kernel-generator width multiplier.
    pub beta: f64,
    /// Residual blocks in the spatial branch.
    pub res_blocks: usize,
    /// Adaptive 3D blocks in the spectral branch.
    pub ada_blocks: usize,
    /// Upsampling factor between the low-resolution stack and the output.
    pub ratio: usize,
    pub upsampler: Upsampler,
}

impl NetworkConfig {
    /// Hyperspectral fusion preset: 32/8 channels, 3 residual and 6
    /// adaptive blocks, fixed bicubic upsampling.
    pub fn hyperspectral() -> Self {
        Self {
            c_spat: 32,
            c_spec: 8,
            kernel: 3,
            alpha: 1.0,
            beta: 1.0,
            res_blocks: 3,
            ada_blocks: 6,
            ratio: 4,
            upsampler: Upsampler::Bicubic,
        }
    }

    /// Multispectral pansharpening preset: 48/48 channels with slim
    /// generators (α = β = 1/4), 4 residual and 8 adaptive blocks, learned
    /// sub-pixel upsampling.
    pub fn pansharpening() -> Self {
        Self {
            c_spat: 48,
            c_spec: 48,
            kernel: 3,
            alpha: 0.25,
            beta: 0.25,
            res_blocks: 4,
            ada_blocks: 8,
            ratio: 4,
            upsampler: Upsampler::PixelShuffle,
        }
    }

    /// Desk-scale preset for tests and demos: 8/4 channels, 2 residual and
    /// 2 adaptive blocks.
    pub fn toy() -> Self {
        Self {
            c_spat: 8,
            c_spec: 4,
            kernel: 3,
            alpha: 1.0,
            beta: 1.0,
            res_blocks: 2,
            ada_blocks: 2,
            ratio: 4,
            upsampler: Upsampler::Bicubic,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "hyperspectral" => Ok(Self::hyperspectral()),
            "pansharpening" => Ok(Self::pansharpening()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected hyperspectral, pansharpening or toy)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.block_config().validate()?;
        if self.res_blocks == 0 || self.ada_blocks == 0 {
            return Err(Error::Config(format!(
                "need at least one residual and one adaptive block, got {} / {}",
                self.res_blocks, self.ada_blocks
            )));
        }
        if self.ratio != 4 {
            return Err(Error::Config(format!(
                "the upsampling ratio is fixed at 4, got {}",
                self.ratio
            )));
        }
        Ok(())
    }

    /// The per-block configuration shared by all adaptive blocks.
    pub fn block_config(&self) -> Ada3dBlockConfig {
        Ada3dBlockConfig::new(self.c_spat, self.c_spec, self.kernel, self.alpha, self.beta)
    }
}

/// One fusion instance: panchromatic image, low-resolution band stack, and
/// (for training/evaluation) the ground-truth volume.
#[derive(Debug, Clone)]
pub struct FusionSample {
    /// `[H, W]`, intensities in `[0, 1]`.
    pub pan: Tensor,
    /// `[H/r, W/r, L]`, intensities in `[0, 1]`.
    pub lr: Tensor,
    /// `[H, W, L]`; optional at inference.
    pub gt: Option<Tensor>,
}

impl FusionSample {
    /// Checks the `H = r·h`, `W = r·w` relations and tensor orders.
    pub fn validate(&self, ratio: usize) -> Result<()> {
        if self.pan.order() != 2 || self.lr.order() != 3 {
            return Err(Error::Shape {
                op: "fusion_sample",
                detail: format!(
                    "expected pan [H,W] and lr [h,w,L], got {:?} and {:?}",
                    self.pan.shape(),
                    self.lr.shape()
                ),
            });
        }
        let (h, w) = (self.lr.shape()[0], self.lr.shape()[1]);
        if self.pan.shape() != [h * ratio, w * ratio] {
            return Err(Error::Shape {
                op: "fusion_sample",
                detail: format!(
                    "pan {:?} is not {ratio}× the low-resolution grid {:?}",
                    self.pan.shape(),
                    &self.lr.shape()[..2]
                ),
            });
        }
        if let Some(gt) = &self.gt {
            let want = [h * ratio, w * ratio, self.lr.shape()[2]];
            if gt.shape() != want {
                return Err(Error::Shape {
                    op: "fusion_sample",
                    detail: format!("gt {:?}, expected {want:?}", gt.shape()),
                });
            }
        }
        Ok(())
    }

    pub fn bands(&self) -> usize {
        self.lr.shape()[2]
    }
}

/// Parameter declarations for the whole network, in registration order.
pub fn param_specs(cfg: &NetworkConfig, bands: usize) -> Result<Vec<ParamSpec>> {
    cfg.validate()?;
    if bands == 0 {
        return Err(Error::Config("need at least one spectral band".into()));
    }
    let mut specs = Vec::new();
    if cfg.upsampler == Upsampler::PixelShuffle {
        let out = cfg.ratio * cfg.ratio * bands;
        specs.push(ParamSpec::new("up.w", &[out, bands, 3, 3], 9 * bands));
        specs.push(ParamSpec::new("up.b", &[out], 9 * bands));
    }
    let c = cfg.c_spat;
    specs.push(ParamSpec::new(
        "spat.head.w",
        &[c, bands + 1, 3, 3],
        9 * (bands + 1),
    ));
    specs.push(ParamSpec::new("spat.head.b", &[c], 9 * (bands + 1)));
    for i in 0..cfg.res_blocks {
        for conv in ["c1", "c2"] {
            specs.push(ParamSpec::new(
                format!("spat.res{i}.{conv}.w"),
                &[c, c, 3, 3],
                9 * c,
            ));
            specs.push(ParamSpec::new(format!("spat.res{i}.{conv}.b"), &[c], 9 * c));
        }
    }
    let k = cfg.kernel;
    let kv = k * k * k;
    specs.push(ParamSpec::new("spec.head.w", &[cfg.c_spec, 1, k, k, k], kv));
    specs.push(ParamSpec::new("spec.head.b", &[cfg.c_spec], kv));
    for j in 0..cfg.ada_blocks {
        specs.extend(block::block_param_specs(
            &cfg.block_config(),
            &format!("ada{j}."),
        ));
    }
    specs.push(ParamSpec::new(
        "spec.tail.w",
        &[1, cfg.c_spec, k, k, k],
        kv * cfg.c_spec,
    ));
    specs.push(ParamSpec::new("spec.tail.b", &[1], kv * cfg.c_spec));
    Ok(specs)
}

/// The fusion network: a configuration plus its parameter registry.
#[derive(Debug, Clone)]
pub struct FusionNet {
    cfg: NetworkConfig,
    bands: usize,
    params: ParamSet,
}

/// Graph handles of all bound parameters, aligned with the registry order.
pub struct BoundParams {
    ids: Vec<NodeId>,
}

impl BoundParams {
    /// Node handles in parameter-registry order.
    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }
}

/// The two graph nodes a forward pass exposes.
pub struct ForwardNodes {
    /// `[H, W, L]` fused output.
    pub output: NodeId,
    /// `[H, W, L]` upsampled input `B^U` (the residual base).
    pub upsampled: NodeId,
}

impl FusionNet {
    /// Builds a network with Kaiming-uniform initialization of every
    /// learnable tensor, drawn from one seeded stream in registry order.
    pub fn new(cfg: NetworkConfig, bands: usize, seed: u64) -> Result<Self> {
        let params = ParamSet::init(&param_specs(&cfg, bands)?, seed);
        Ok(Self { cfg, bands, params })
    }

    /// Builds a network with every parameter zeroed.
    pub fn zeros(cfg: NetworkConfig, bands: usize) -> Result<Self> {
        let params = ParamSet::zeros(&param_specs(&cfg, bands)?);
        Ok(Self { cfg, bands, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Mutable access to the registry, e.g. for external optimizers or
    /// finite-difference probing. Callers must keep every tensor's shape.
    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Inserts every parameter into `g`, as trainable leaves or constants.
    pub fn bind_params(&self, g: &mut Graph, trainable: bool) -> BoundParams {
        let ids = self
            .params
            .iter()
            .map(|(_, t)| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        BoundParams { ids }
    }

    fn node(&self, bp: &BoundParams, name: &str) -> NodeId {
        bp.ids[self
            .params
            .position(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from registry"))]
    }

    fn block_params(&self, bp: &BoundParams, j: usize) -> Ada3dBlockParams {
        let n = |suffix: &str| self.node(bp, &format!("ada{j}.{suffix}"));
        Ada3dBlockParams {
            kgen_spatial_w1: n("kgen.spatial.w1"),
            kgen_spatial_w2: n("kgen.spatial.w2"),
            kgen_spectral_w1: n("kgen.spectral.w1"),
            kgen_spectral_w2: n("kgen.spectral.w2"),
            bias_spatial_w: n("bias.spatial.w"),
            bias_spatial_b: n("bias.spatial.b"),
            bias_spectral_w: n("bias.spectral.w"),
            bias_spectral_b: n("bias.spectral.b"),
            bias_channel_w: n("bias.channel.w"),
            bias_channel_b: n("bias.channel.b"),
        }
    }

    /// Upsamples the low-resolution stack to the output grid with the
    /// configured upsampler (no graph involved).
    pub fn upsample_input(&self, lr: &Tensor) -> Result<Tensor> {
        match self.cfg.upsampler {
            Upsampler::Bicubic => conv::bicubic_upsample(lr, self.cfg.ratio),
            Upsampler::PixelShuffle => {
                let w = self.params.get("up.w").ok_or_else(|| {
                    Error::Config("network has no learned-upsampler weights".into())
                })?;
                conv::pixel_shuffle_upsample(lr, self.cfg.ratio, w, self.params.get("up.b"))
            }
        }
    }

    fn upsample_graph(&self, g: &mut Graph, sample: &FusionSample, bp: &BoundParams) -> Result<NodeId> {
        match self.cfg.upsampler {
            Upsampler::Bicubic => {
                let bu = conv::bicubic_upsample(&sample.lr, self.cfg.ratio)?;
                Ok(g.constant(bu))
            }
            Upsampler::PixelShuffle => {
                let lr = g.constant(sample.lr.clone());
                let spec = ConvSpec::new(self.bands, self.cfg.ratio * self.cfg.ratio * self.bands, 3);
                let lifted = g.conv2d(lr, spec, self.node(bp, "up.w"), Some(self.node(bp, "up.b")))?;
                g.pixel_shuffle(lifted, self.cfg.ratio)
            }
        }
    }

    /// Wires the full forward pass for one sample into `g`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        sample: &FusionSample,
        bp: &BoundParams,
    ) -> Result<ForwardNodes> {
        sample.validate(self.cfg.ratio)?;
        if sample.bands() != self.bands {
            return Err(Error::Shape {
                op: "forward",
                detail: format!(
                    "sample has {} bands but the network was built for {}",
                    sample.bands(),
                    self.bands
                ),
            });
        }
        let (h, w, l) = (
            sample.pan.shape()[0],
            sample.pan.shape()[1],
            self.bands,
        );
        let cfg = &self.cfg;

        let bu = self.upsample_graph(g, sample, bp)?;

        // Spatial branch.
        let pan = g.constant(sample.pan.reshape(&[h, w, 1])?);
        let cat = g.concat(pan, bu, 2)?;
        let mut fa = g.conv2d(
            cat,
            ConvSpec::new(l + 1, cfg.c_spat, 3),
            self.node(bp, "spat.head.w"),
            Some(self.node(bp, "spat.head.b")),
        )?;
        let mut stages = Vec::with_capacity(cfg.res_blocks);
        for i in 0..cfg.res_blocks {
            fa = resblock_graph(
                g,
                fa,
                cfg.c_spat,
                self.node(bp, &format!("spat.res{i}.c1.w")),
                self.node(bp, &format!("spat.res{i}.c1.b")),
                self.node(bp, &format!("spat.res{i}.c2.w")),
                self.node(bp, &format!("spat.res{i}.c2.b")),
            )?;
            stages.push(fa);
        }

        // Spectral branch.
        let vol = g.reshape(bu, &[h, w, l, 1])?;
        let mut fb = g.conv3d(
            vol,
            ConvSpec::new(1, cfg.c_spec, cfg.kernel),
            self.node(bp, "spec.head.w"),
            Some(self.node(bp, "spec.head.b")),
        )?;
        let block_cfg = cfg.block_config();
        for j in 0..cfg.ada_blocks {
            let fa_stage = stages[j % cfg.res_blocks];
            let p = self.block_params(bp, j);
            fb = block::block_forward_graph(g, &block_cfg, fa_stage, fb, &p)?;
        }
        let proj = g.conv3d(
            fb,
            ConvSpec::new(cfg.c_spec, 1, cfg.kernel),
            self.node(bp, "spec.tail.w"),
            Some(self.node(bp, "spec.tail.b")),
        )?;
        let flat = g.reshape(proj, &[h, w, l])?;
        let output = g.add(flat, bu)?;
        Ok(ForwardNodes {
            output,
            upsampled: bu,
        })
    }

    /// Runs the network on plain tensors.
    pub fn forward(&self, sample: &FusionSample) -> Result<Tensor> {
        let mut g = Graph::new();
        let bp = self.bind_params(&mut g, false);
        let nodes = self.forward_graph(&mut g, sample, &bp)?;
        Ok(g.value(nodes.output).clone())
    }

    /// Writes `weights.atns` (one named entry per parameter) and
    /// `manifest.cfg` (the architecture fields) under `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let entries: Vec<(String, &Tensor)> = self
            .params
            .iter()
            .map(|(name, t)| (name.to_string(), t))
            .collect();
        container::write_tensors(&dir.join("weights.atns"), &entries, container::DType::F64)?;
        let cfg = &self.cfg;
        let manifest: Vec<(String, String)> = vec![
            ("ada_blocks".into(), cfg.ada_blocks.to_string()),
            ("alpha".into(), format!("{}", cfg.alpha)),
            ("bands".into(), self.bands.to_string()),
            ("beta".into(), format!("{}", cfg.beta)),
            ("c_spat".into(), cfg.c_spat.to_string()),
            ("c_spec".into(), cfg.c_spec.to_string()),
            ("kernel".into(), cfg.kernel.to_string()),
            ("ratio".into(), cfg.ratio.to_string()),
            ("res_blocks".into(), cfg.res_blocks.to_string()),
            ("upsampler".into(), cfg.upsampler.tag().to_string()),
        ];
        config::save(&dir.join("manifest.cfg"), &manifest)?;
        Ok(())
    }

    /// Restores a network from [`FusionNet::save_checkpoint`] output.
    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let manifest = config::load(&dir.join("manifest.cfg"))?;
        let cfg = NetworkConfig {
            c_spat: config::get_usize(&manifest, "c_spat")?,
            c_spec: config::get_usize(&manifest, "c_spec")?,
            kernel: config::get_usize(&manifest, "kernel")?,
            alpha: config::get_f64(&manifest, "alpha")?,
            beta: config::get_f64(&manifest, "beta")?,
            res_blocks: config::get_usize(&manifest, "res_blocks")?,
            ada_blocks: config::get_usize(&manifest, "ada_blocks")?,
            ratio: config::get_usize(&manifest, "ratio")?,
            upsampler: Upsampler::parse(config::get_str(&manifest, "upsampler")?)?,
        };
        let bands = config::get_usize(&manifest, "bands")?;
        let entries = container::read_tensors(&dir.join("weights.atns"))?;
        let mut by_name: BTreeMap<String, Tensor> = entries.into_iter().collect();
        let specs = param_specs(&cfg, bands)?;
        let mut ordered = Vec::with_capacity(specs.len());
        for spec in &specs {
            let t = by_name.remove(&spec.name).ok_or_else(|| {
                Error::Config(format!("checkpoint is missing parameter `{}`", spec.name))
            })?;
            if t.shape() != &spec.shape[..] {
                return Err(Error::Config(format!(
                    "checkpoint parameter `{}` has shape {:?}, expected {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
            ordered.push((spec.name.clone(), t));
        }
        if let Some((name, _)) = by_name.into_iter().next() {
            return Err(Error::Config(format!(
                "checkpoint contains unexpected parameter `{name}`"
            )));
        }
        Ok(Self {
            cfg,
            bands,
            params: ParamSet::from_entries(ordered)?,
        })
    }
}

/// Residual block: `x + conv(relu(conv(x)))`, both convolutions 3×3 with
/// biases. Zero weights realize the identity.
pub fn resblock_graph(
    g: &mut Graph,
    x: NodeId,
    channels: usize,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
) -> Result<NodeId> {
    let spec = ConvSpec::new(channels, channels, 3);
    let h1 = g.conv2d(x, spec, w1, Some(b1))?;
    let a1 = g.relu(h1);
    let h2 = g.conv2d(a1, spec, w2, Some(b2))?;
    g.add(x, h2)
}

/// Plain-tensor residual block.
pub fn resblock(
    x: &Tensor,
    channels: usize,
    w1: &Tensor,
    b1: &Tensor,
    w2: &Tensor,
    b2: &Tensor,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let w1 = g.constant(w1.clone());
    let b1 = g.constant(b1.clone());
    let w2 = g.constant(w2.clone());
    let b2 = g.constant(b2.clone());
    let out = resblock_graph(&mut g, xn, channels, w1, b1, w2, b2)?;
    Ok(g.value(out).clone())
}

/// Wires the training objective `mean |pred − reference| + λ·ERGAS` into
/// `g`. `reference` must be a constant node.
pub fn loss_graph(
    g: &mut Graph,
    pred: NodeId,
    reference: NodeId,
    ratio: u32,
    lambda_ergas: f64,
    convention: ErgasConvention,
) -> Result<NodeId> {
    if lambda_ergas < 0.0 {
        return Err(Error::Config(format!(
            "λ must be nonnegative, got {lambda_ergas}"
        )));
    }
    let diff = g.sub(pred, reference)?;
    let absdiff = g.abs(diff);
    let l1 = g.mean(absdiff);
    if lambda_ergas == 0.0 {
        return Ok(l1);
    }
    let e = g.ergas(pred, reference, ratio, convention)?;
    let weighted = g.scale(e, lambda_ergas);
    g.add(l1, weighted)
}

/// The objective value and its two terms, evaluated without a graph but
/// bit-identical to [`loss_graph`].
#[derive(Debug, Clone, Copy)]
pub struct LossReport {
    pub total: f64,
    pub l1: f64,
    pub ergas: f64,
    /// Bands whose relative-error normalizer hit the guard floor.
    pub guarded: usize,
}

/// Evaluates the training objective on plain tensors.
pub fn loss_report(
    pred: &Tensor,
    reference: &Tensor,
    ratio: u32,
    lambda_ergas: f64,
    convention: ErgasConvention,
) -> Result<LossReport> {
    if lambda_ergas < 0.0 {
        return Err(Error::Config(format!(
            "λ must be nonnegative, got {lambda_ergas}"
        )));
    }
    if pred.shape() != reference.shape() {
        return Err(Error::Shape {
            op: "loss",
            detail: format!("{:?} vs {:?}", pred.shape(), reference.shape()),
        });
    }
    let l1 = pred
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / pred.len() as f64;
    if lambda_ergas == 0.0 {
        return Ok(LossReport {
            total: l1,
            l1,
            ergas: 0.0,
            guarded: 0,
        });
    }
    let parts = ergas_parts(pred, reference, ratio, convention)?;
    Ok(LossReport {
        total: l1 + parts.value * lambda_ergas,
        l1,
        ergas: parts.value,
        guarded: parts.guarded,
    })
}
