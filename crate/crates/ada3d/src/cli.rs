//! Command-line surface over the library.
//!
//! Six subcommands: `gen-data` writes a synthetic dataset, `train` fits a
//! network and writes a checkpoint, `eval` scores a checkpoint against
//! ground truth (optionally dumping per-band PGM images), `bench` prices
//! the convolution paradigms, and `demo-rank` / `demo-solve` run the two
//! linear-algebra demonstrations.
//!
//! Machine-readable output is one record per line: tab-separated
//! `key=value` pairs, the first always `event=…`. Every seeded run prints
//! byte-identical records across invocations. Failures exit with a code
//! identifying the error class (see [`exit_code`]).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis;
use crate::block::{block_forward, Ada3dBlockConfig, Ada3dBlockWeights};
use crate::container::tensor_fingerprint;
use crate::conv::{conv3d, ConvSpec};
use crate::cost::{cost_report, Paradigm};
use crate::data::{self, SyntheticDatasetSpec};
use crate::error::{Error, Result};
use crate::metrics::{ErgasConvention, MetricReport};
use crate::net::{FusionNet, NetworkConfig};
use crate::tensor::Tensor;
use crate::train::{train, TrainConfig};

/// Process exit codes, one per failure class.
pub mod exit_code {
    pub const OK: i32 = 0;
    /// Unknown flags or malformed invocations.
    pub const USAGE: i32 = 2;
    /// Filesystem failures.
    pub const IO: i32 = 3;
    /// Malformed tensor containers.
    pub const CONTAINER: i32 = 4;
    /// Invalid configuration values or files.
    pub const CONFIG: i32 = 5;
    /// Tensor shape or axis mismatches.
    pub const SHAPE: i32 = 6;
    /// Numerical failures, including training divergence.
    pub const NUMERIC: i32 = 7;
}

/// Maps an error to its exit code.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => exit_code::IO,
        Error::Container(_) => exit_code::CONTAINER,
        Error::Config(_) => exit_code::CONFIG,
        Error::Shape { .. } | Error::Axis { .. } | Error::NonScalarBackward { .. } => {
            exit_code::SHAPE
        }
        Error::Divergence { .. } | Error::Numerical(_) => exit_code::NUMERIC,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "ada3d",
    version,
    about = "Adaptive 3D convolution toolkit for image fusion",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic fusion dataset (reference-degradation protocol)
    GenData(GenDataArgs),
    /// Train a fusion network on a generated dataset
    Train(TrainArgs),
    /// Score a checkpoint against dataset ground truth
    Eval(EvalArgs),
    /// Price convolution paradigms: parameters, FLOPs, wall-clock
    Bench(BenchArgs),
    /// Show that spectral compression below the band count loses pixels
    DemoRank(DemoRankArgs),
    /// Compare one shared kernel against per-position kernels on a window system
    DemoSolve(DemoSolveArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Number of samples
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Ground-truth height and width (square, divisible by 4)
    #[arg(long, default_value_t = 32)]
    hw: usize,
    /// Spectral band count
    #[arg(long, default_value_t = 8)]
    bands: usize,
    /// Degradation blur standard deviation
    #[arg(long, default_value_t = 1.0)]
    blur_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = "dataset")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory (from gen-data)
    #[arg(long, default_value = "dataset")]
    data: PathBuf,
    /// Architecture preset: toy, hyperspectral or pansharpening
    #[arg(long, default_value = "toy")]
    preset: String,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    /// Initial learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Comma-separated 1-based epochs at whose start the rate halves
    #[arg(long, default_value = "")]
    halve_at: String,
    /// Weight of the relative-global-error loss term
    #[arg(long, default_value_t = 1e-4)]
    lambda_ergas: f64,
    /// Error normalizer: squared-mean or mean-square
    #[arg(long, default_value = "squared-mean")]
    convention: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint output directory
    #[arg(long, default_value = "checkpoint")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, default_value = "checkpoint")]
    checkpoint: PathBuf,
    #[arg(long, default_value = "dataset")]
    data: PathBuf,
    /// Error normalizer: squared-mean or mean-square
    #[arg(long, default_value = "squared-mean")]
    convention: String,
    /// Also score the plain upsampled input (the no-op baseline)
    #[arg(long)]
    baseline: bool,
    /// Directory for 8-bit per-band PGM dumps of each prediction
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Paradigm: standard3d, depthwise3d, ada3d or all
    #[arg(long, default_value = "all")]
    paradigm: String,
    /// Channel count C
    #[arg(long, default_value_t = 8)]
    c: usize,
    /// Kernel extent k
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Spatial width multiplier of the kernel generators
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Spectral width multiplier of the kernel generators
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Spatial extent of the priced volume
    #[arg(long, default_value_t = 64)]
    hw: usize,
    /// Band count of the priced volume
    #[arg(long, default_value_t = 8)]
    bands: usize,
    /// Spatial extent of the (smaller) timed volume
    #[arg(long, default_value_t = 16)]
    time_hw: usize,
    /// Timing repetitions; the fastest is reported
    #[arg(long, default_value_t = 3)]
    reps: usize,
}

#[derive(Args, Debug)]
struct DemoRankArgs {
    /// Band count L of the uncompressed signal
    #[arg(long, default_value_t = 8)]
    l: usize,
    /// Channel count C of the compressed representation
    #[arg(long, default_value_t = 4)]
    c: usize,
    /// Pixels per trial matrix
    #[arg(long, default_value_t = 64)]
    pixels: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DemoSolveArgs {
    /// Image height and width
    #[arg(long, default_value_t = 8)]
    hw: usize,
    /// Kernel extent
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Parses `args` (including the program name) and runs the command,
/// writing all output to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit_code::OK,
                _ => exit_code::USAGE,
            };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.cmd, out) {
        Ok(()) => exit_code::OK,
        Err(err) => {
            let code = exit_code_for(&err);
            let msg: String = err
                .to_string()
                .chars()
                .map(|c| if c == '\n' || c == '\t' { ' ' } else { c })
                .collect();
            let _ = writeln!(out, "event=error\tcode={code}\tmessage={msg}");
            code
        }
    }
}

fn dispatch(cmd: Cmd, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Cmd::GenData(a) => run_gen_data(&a, out),
        Cmd::Train(a) => run_train(&a, out),
        Cmd::Eval(a) => run_eval(&a, out),
        Cmd::Bench(a) => run_bench(&a, out),
        Cmd::DemoRank(a) => run_demo_rank(&a, out),
        Cmd::DemoSolve(a) => run_demo_solve(&a, out),
    }
}

/// Writes one tab-separated `key=value` record.
fn record(out: &mut dyn Write, pairs: &[(&str, String)]) -> Result<()> {
    let mut line = String::new();
    for (i, (k, v)) in pairs.iter().enumerate() {
        if i > 0 {
            line.push('\t');
        }
        line.push_str(k);
        line.push('=');
        line.push_str(v);
    }
    writeln!(out, "{line}")?;
    Ok(())
}

/// Writes a `[H, W]` tensor as an 8-bit binary PGM, clamping to `[0, 1]`.
pub fn write_pgm(path: &Path, img: &Tensor) -> Result<()> {
    if img.order() != 2 {
        return Err(Error::Shape {
            op: "write_pgm",
            detail: format!("expected [H, W], got {:?}", img.shape()),
        });
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(
        img.data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    std::fs::write(path, bytes)?;
    Ok(())
}

fn band_image(vol: &Tensor, l: usize) -> Tensor {
    let (h, w, bands) = (vol.shape()[0], vol.shape()[1], vol.shape()[2]);
    Tensor::from_fn(&[h, w], |i| vol.data()[(i[0] * w + i[1]) * bands + l])
}

fn run_gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SyntheticDatasetSpec {
        n_samples: a.n,
        height: a.hw,
        width: a.hw,
        bands: a.bands,
        blur_sigma: a.blur_sigma,
        pan_weights: data::uniform_pan_weights(a.bands),
        seed: a.seed,
    };
    record(
        out,
        &[
            ("event", "gen-data".into()),
            ("n", a.n.to_string()),
            ("height", a.hw.to_string()),
            ("width", a.hw.to_string()),
            ("bands", a.bands.to_string()),
            ("blur_sigma", format!("{}", a.blur_sigma)),
            ("seed", a.seed.to_string()),
            ("out", a.out.display().to_string()),
        ],
    )?;
    let samples = data::gen_synthetic_dataset(&spec)?;
    for (i, s) in samples.iter().enumerate() {
        record(
            out,
            &[
                ("event", "sample".into()),
                ("index", i.to_string()),
                ("pan_fp", format!("{:016x}", tensor_fingerprint(&s.pan))),
                ("lr_fp", format!("{:016x}", tensor_fingerprint(&s.lr))),
                (
                    "gt_fp",
                    format!("{:016x}", tensor_fingerprint(s.gt.as_ref().expect("generated"))),
                ),
            ],
        )?;
    }
    data::save_dataset(&a.out, &samples, &spec)?;
    record(out, &[("event", "done".into()), ("samples", samples.len().to_string())])
}

fn parse_epoch_list(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad epoch `{p}` in halving list")))
        })
        .collect()
}

fn run_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let (samples, _) = data::load_dataset(&a.data)?;
    let bands = samples
        .first()
        .map(|s| s.lr.shape()[2])
        .ok_or_else(|| Error::Config("dataset is empty".into()))?;
    let cfg = NetworkConfig::preset(&a.preset)?;
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        initial_lr: a.lr,
        halving_epochs: parse_epoch_list(&a.halve_at)?,
        lambda_ergas: a.lambda_ergas,
        convention: ErgasConvention::parse(&a.convention)?,
        seed: a.seed,
    };
    let mut net = FusionNet::new(cfg, bands, a.seed)?;
    record(
        out,
        &[
            ("event", "train".into()),
            ("preset", a.preset.clone()),
            ("samples", samples.len().to_string()),
            ("bands", bands.to_string()),
            ("params", net.params().total_elements().to_string()),
            ("epochs", a.epochs.to_string()),
            ("batch_size", a.batch_size.to_string()),
            ("lr", format!("{}", a.lr)),
            ("lambda_ergas", format!("{}", a.lambda_ergas)),
            ("convention", tc.convention.tag().into()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    let report = train(&mut net, &samples, &tc)?;
    for (i, (&loss, &lr)) in report.epoch_losses.iter().zip(&report.lr_trace).enumerate() {
        record(
            out,
            &[
                ("event", "epoch".into()),
                ("epoch", (i + 1).to_string()),
                ("loss", format!("{loss:.12e}")),
                ("lr", format!("{lr}")),
            ],
        )?;
    }
    net.save_checkpoint(&a.out)?;
    record(out, &[("event", "checkpoint".into()), ("dir", a.out.display().to_string())])?;
    record(
        out,
        &[
            ("event", "done".into()),
            ("final_loss", format!("{:.12e}", report.final_loss())),
            ("guarded_bands", report.guarded_bands.to_string()),
        ],
    )
}

fn run_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let net = FusionNet::load_checkpoint(&a.checkpoint)?;
    let (samples, _) = data::load_dataset(&a.data)?;
    let convention = ErgasConvention::parse(&a.convention)?;
    let ratio = net.config().ratio as u32;
    if let Some(dir) = &a.dump {
        std::fs::create_dir_all(dir)?;
    }
    record(
        out,
        &[
            ("event", "eval".into()),
            ("checkpoint", a.checkpoint.display().to_string()),
            ("samples", samples.len().to_string()),
            ("convention", convention.tag().into()),
        ],
    )?;
    let mut psnr_sum = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let gt = s.gt.as_ref().ok_or_else(|| {
            Error::Config(format!("sample {i} has no ground truth to score against"))
        })?;
        let pred = net.forward(s)?;
        let m = MetricReport::compute(&pred, gt, ratio, convention)?;
        psnr_sum += m.psnr_db;
        let mut pairs: Vec<(&str, String)> =
            vec![("event", "metrics".into()), ("sample", i.to_string())];
        pairs.extend(m.record_fields());
        record(out, &pairs)?;
        if a.baseline {
            let up = net.upsample_input(&s.lr)?;
            let b = MetricReport::compute(&up, gt, ratio, convention)?;
            let mut pairs: Vec<(&str, String)> =
                vec![("event", "baseline".into()), ("sample", i.to_string())];
            pairs.extend(b.record_fields());
            record(out, &pairs)?;
        }
        if let Some(dir) = &a.dump {
            let bands = pred.shape()[2];
            for l in 0..bands {
                write_pgm(&dir.join(format!("sample{i}_band{l}.pgm")), &band_image(&pred, l))?;
            }
            record(
                out,
                &[
                    ("event", "dump".into()),
                    ("sample", i.to_string()),
                    ("files", bands.to_string()),
                    ("dir", dir.display().to_string()),
                ],
            )?;
        }
    }
    record(
        out,
        &[
            ("event", "done".into()),
            ("samples", samples.len().to_string()),
            ("mean_psnr_db", format!("{:.6}", psnr_sum / samples.len().max(1) as f64)),
        ],
    )
}

/// Runs one real application of the paradigm on a small volume and returns
/// the fastest wall-clock over `reps` repetitions plus an output checksum.
fn time_paradigm(
    paradigm: Paradigm,
    hw: usize,
    bands: usize,
    c: usize,
    k: usize,
    alpha: f64,
    beta: f64,
    reps: usize,
) -> Result<(u128, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xbe_c4);
    let x = Tensor::uniform(&[hw, hw, bands, c], -1.0, 1.0, &mut rng);
    let mut best = u128::MAX;
    let mut checksum = 0.0;
    match paradigm {
        Paradigm::Standard3d => {
            let w = Tensor::uniform(&[c, c, k, k, k], -0.1, 0.1, &mut rng);
            for _ in 0..reps.max(1) {
                let t0 = Instant::now();
                let y = conv3d(&x, &ConvSpec::new(c, c, k), &w, None)?;
                best = best.min(t0.elapsed().as_micros());
                checksum = y.data().iter().sum();
            }
        }
        Paradigm::DepthWise3d => {
            let wd = Tensor::uniform(&[c, 1, k, k, k], -0.1, 0.1, &mut rng);
            let wm = Tensor::uniform(&[c, c, 1, 1, 1], -0.1, 0.1, &mut rng);
            for _ in 0..reps.max(1) {
                let t0 = Instant::now();
                let y = conv3d(&x, &ConvSpec::grouped(c, c, k, c), &wd, None)?;
                let y = conv3d(&y, &ConvSpec::new(c, c, 1), &wm, None)?;
                best = best.min(t0.elapsed().as_micros());
                checksum = y.data().iter().sum();
            }
        }
        Paradigm::Ada3d => {
            let cfg = Ada3dBlockConfig {
                c_spat: c,
                c_spec: c,
                kernel: k,
                alpha,
                beta,
            };
            let weights = Ada3dBlockWeights::random(&cfg, &mut rng)?;
            let fa = Tensor::uniform(&[hw, hw, c], -1.0, 1.0, &mut rng);
            for _ in 0..reps.max(1) {
                let t0 = Instant::now();
                let y = block_forward(&fa, &x, &cfg, &weights)?;
                best = best.min(t0.elapsed().as_micros());
                checksum = y.data().iter().sum();
            }
        }
    }
    Ok((best, checksum))
}

fn run_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let paradigms: Vec<Paradigm> = if a.paradigm == "all" {
        Paradigm::ALL.to_vec()
    } else {
        vec![Paradigm::parse(&a.paradigm)?]
    };
    for &p in &paradigms {
        let r = cost_report(p, a.hw, a.hw, a.bands, a.c, a.k, a.alpha, a.beta)?;
        record(
            out,
            &[
                ("event", "cost".into()),
                ("paradigm", p.tag().into()),
                ("c", a.c.to_string()),
                ("k", a.k.to_string()),
                ("alpha", format!("{}", a.alpha)),
                ("beta", format!("{}", a.beta)),
                ("h", a.hw.to_string()),
                ("w", a.hw.to_string()),
                ("l", a.bands.to_string()),
                ("params", r.params.to_string()),
                ("flops", r.flops.to_string()),
                ("flops_per_param", format!("{:.3}", r.flops_per_param)),
            ],
        )?;
    }
    for &p in &paradigms {
        let (micros, checksum) =
            time_paradigm(p, a.time_hw, a.bands, a.c, a.k, a.alpha, a.beta, a.reps)?;
        record(
            out,
            &[
                ("event", "wallclock".into()),
                ("paradigm", p.tag().into()),
                ("volume", format!("{0}x{0}x{1}x{2}", a.time_hw, a.bands, a.c)),
                ("reps", a.reps.to_string()),
                ("best_micros", micros.to_string()),
                ("checksum", format!("{checksum:.6}")),
            ],
        )?;
    }
    Ok(())
}

fn run_demo_rank(a: &DemoRankArgs, out: &mut dyn Write) -> Result<()> {
    let report = analysis::spectral_projection_demo(a.l, a.c, a.pixels, a.trials, a.seed)?;
    record(
        out,
        &[
            ("event", "rank-demo".into()),
            ("bands", a.l.to_string()),
            ("channels", a.c.to_string()),
            ("pixels", a.pixels.to_string()),
            ("trials", a.trials.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    for (i, t) in report.trials.iter().enumerate() {
        record(
            out,
            &[
                ("event", "trial".into()),
                ("index", i.to_string()),
                ("rank", t.rank_a.to_string()),
                ("worst_err", format!("{:.6e}", t.worst_error)),
            ],
        )?;
    }
    record(
        out,
        &[
            ("event", "done".into()),
            ("min_worst_err", format!("{:.6e}", report.min_worst_error)),
            ("max_worst_err", format!("{:.6e}", report.max_worst_error)),
        ],
    )
}

fn run_demo_solve(a: &DemoSolveArgs, out: &mut dyn Write) -> Result<()> {
    let r = analysis::conv_solvability_demo(a.hw, a.hw, a.k, a.seed)?;
    record(
        out,
        &[
            ("event", "solve-demo".into()),
            ("hw", a.hw.to_string()),
            ("k", a.k.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    record(
        out,
        &[
            ("event", "result".into()),
            ("positions", (a.hw * a.hw).to_string()),
            ("taps", (a.k * a.k).to_string()),
            ("standard_residual", format!("{:.6e}", r.standard_residual)),
            ("adaptive_residual", format!("{:.6e}", r.adaptive_residual)),
            ("rank", r.rank_a.to_string()),
            ("rank_augmented", r.rank_augmented.to_string()),
            ("zero_rows", r.zero_rows.to_string()),
        ],
    )
}
