//! Executable linear-algebra demonstrations behind the adaptive design.
//!
//! Two claims motivate per-voxel kernels, and both are checkable with dense
//! numerics:
//!
//! 1. **Spectral projection loss** — pushing an `L`-band spectrum through a
//!    fixed `C×L` channel mixing with `C < L` has a nontrivial null space,
//!    so some spectra cannot be recovered by any linear readout
//!    ([`spectral_projection_demo`]).
//! 2. **Shared-kernel solvability** — a single convolution kernel must
//!    satisfy one linear equation per output position; stacking the
//!    (zero-padded) input windows into a matrix `A` generically makes
//!    `A·x = b` inconsistent, whereas a per-position kernel solves each row
//!    independently ([`conv_solvability_demo`]).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative singular-value cutoff used by all rank computations here.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Numerical rank: the number of singular values above `tol·σ_max`.
pub fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    if m.is_empty() {
        return Err(Error::Numerical("rank of an empty matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("rank tolerance must be positive, got {tol}")));
    }
    let svs = m.clone().singular_values();
    let sigma_max = svs.iter().cloned().fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return Ok(0);
    }
    Ok(svs.iter().filter(|&&s| s > tol * sigma_max).count())
}

/// Least-squares solve `min ‖Ax − b‖` via SVD; returns `(x, residual)`.
fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(b, RANK_TOLERANCE)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// Worst-entry error of recovering `x` from `y = a·x` with the
/// pseudo-inverse of `a`.
pub fn projection_roundtrip_error(a: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() != x.nrows() {
        return Err(Error::Shape {
            op: "projection",
            detail: format!("{}×{} map applied to {} rows", a.nrows(), a.ncols(), x.nrows()),
        });
    }
    let y = a * x;
    let pinv = a
        .clone()
        .svd(true, true)
        .pseudo_inverse(RANK_TOLERANCE)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
    let back = pinv * y;
    let mut worst = 0.0f64;
    for (got, want) in back.iter().zip(x.iter()) {
        worst = worst.max((got - want).abs());
    }
    Ok(worst)
}

/// One trial of the projection demonstration.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionTrial {
    pub rank_a: usize,
    /// Worst-entry ("worst-pixel") reconstruction error of the trial.
    pub worst_error: f64,
}

/// Aggregate of [`spectral_projection_demo`].
#[derive(Debug, Clone)]
pub struct SpectralProjectionReport {
    pub bands: usize,
    pub channels: usize,
    pub trials: Vec<ProjectionTrial>,
    pub min_worst_error: f64,
    pub max_worst_error: f64,
}

/// Draws random band matrices `X ∈ L×P` and channel mixings `A ∈ C×L`,
/// compresses `Y = A·X`, reconstructs with the pseudo-inverse, and records
/// the worst-entry error per trial.
///
/// With `C < L`, `rank(A) ≤ C` forces a nontrivial null space, so every
/// generic trial loses information. With `C ≥ L`, `A` is redrawn until well
/// conditioned (smallest singular value above `1e-3·σ_max`), making the
/// recovery exact to numerical precision.
pub fn spectral_projection_demo(
    bands: usize,
    channels: usize,
    pixels: usize,
    trials: usize,
    seed: u64,
) -> Result<SpectralProjectionReport> {
    if bands == 0 || channels == 0 || pixels == 0 || trials == 0 {
        return Err(Error::Config(
            "projection demo needs positive bands/channels/pixels/trials".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let a = loop {
            let cand = DMatrix::from_fn(channels, bands, |_, _| rng.gen_range(-1.0..1.0));
            if channels < bands {
                break cand;
            }
            let svs = cand.clone().singular_values();
            let (lo, hi) = svs
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
            if lo > 1e-3 * hi {
                break cand;
            }
        };
        let x = DMatrix::from_fn(bands, pixels, |_, _| rng.gen_range(0.0..1.0));
        out.push(ProjectionTrial {
            rank_a: matrix_rank(&a, RANK_TOLERANCE)?,
            worst_error: projection_roundtrip_error(&a, &x)?,
        });
    }
    let min = out.iter().map(|t| t.worst_error).fold(f64::INFINITY, f64::min);
    let max = out.iter().map(|t| t.worst_error).fold(0.0f64, f64::max);
    Ok(SpectralProjectionReport {
        bands,
        channels,
        trials: out,
        min_worst_error: min,
        max_worst_error: max,
    })
}

/// The stacked-window system of a shared-kernel convolution.
#[derive(Debug, Clone)]
pub struct WindowMatrix {
    /// One row per output position; row `p`, column `t` holds the input
    /// value that kernel tap `t` multiplies when producing position `p`
    /// (zero where the tap falls into padding).
    pub a: DMatrix<f64>,
    /// Window extent `k`.
    pub k: usize,
}

/// Builds the window matrix of a 2D (`[H, W]` → rows `HW`, columns `k²`) or
/// 3D (`[H, W, L]` → rows `HWL`, columns `k³`) single-channel input with
/// zero padding `(k−1)/2`. Column order follows the adaptive-kernel tap
/// convention: row-major `(dy, dx)` (2D) or `(dz, dy, dx)` (3D), with tap
/// `δ` reading the source position `p − δ`.
pub fn build_window_matrix(x: &Tensor, k: usize) -> Result<WindowMatrix> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Config(format!("window extent must be odd, got {k}")));
    }
    let m = (k / 2) as isize;
    match x.order() {
        2 => {
            let (h, w) = (x.shape()[0], x.shape()[1]);
            let mut a = DMatrix::zeros(h * w, k * k);
            for hi in 0..h {
                for wi in 0..w {
                    let row = hi * w + wi;
                    let mut col = 0;
                    for dy in -m..=m {
                        for dx in -m..=m {
                            let y = hi as isize - dy;
                            let xx = wi as isize - dx;
                            if y >= 0 && y < h as isize && xx >= 0 && xx < w as isize {
                                a[(row, col)] = x.get(&[y as usize, xx as usize]);
                            }
                            col += 1;
                        }
                    }
                }
            }
            Ok(WindowMatrix { a, k })
        }
        3 => {
            let (h, w, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let mut a = DMatrix::zeros(h * w * l, k * k * k);
            for hi in 0..h {
                for wi in 0..w {
                    for li in 0..l {
                        let row = (hi * w + wi) * l + li;
                        let mut col = 0;
                        for dz in -m..=m {
                            for dy in -m..=m {
                                for dx in -m..=m {
                                    let y = hi as isize - dy;
                                    let xx = wi as isize - dx;
                                    let z = li as isize - dz;
                                    if y >= 0
                                        && y < h as isize
                                        && xx >= 0
                                        && xx < w as isize
                                        && z >= 0
                                        && z < l as isize
                                    {
                                        a[(row, col)] =
                                            x.get(&[y as usize, xx as usize, z as usize]);
                                    }
                                    col += 1;
                                }
                            }
                        }
                    }
                }
            }
            Ok(WindowMatrix { a, k })
        }
        other => Err(Error::Shape {
            op: "window_matrix",
            detail: format!("expected a 2D or 3D input, got order {other}"),
        }),
    }
}

/// Outcome of the shared-vs-adaptive solvability experiment.
#[derive(Debug, Clone)]
pub struct SolvabilityReport {
    /// `min_x ‖A·x − b‖₂` over a single shared kernel.
    pub standard_residual: f64,
    /// `‖A_rows·x_rows − b‖₂` with an independent minimum-norm kernel per
    /// row (zero whenever the row is nonzero).
    pub adaptive_residual: f64,
    pub rank_a: usize,
    /// Rank of the augmented matrix `(A|b)`.
    pub rank_augmented: usize,
    /// Rows of `A` that are identically zero (their targets are
    /// unreachable for any kernel).
    pub zero_rows: usize,
}

/// Builds the window system of a random `h×w` image with window `k`, draws
/// a generic target, and compares the best shared kernel against per-row
/// adaptive kernels (each the minimum-norm solution of its own
/// one-equation system).
pub fn conv_solvability_demo(h: usize, w: usize, k: usize, seed: u64) -> Result<SolvabilityReport> {
    if h * w <= k * k {
        return Err(Error::Config(format!(
            "need more output positions than kernel taps, got {h}×{w} with k = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = Tensor::uniform(&[h, w], 0.0, 1.0, &mut rng);
    let b = DMatrix::from_fn(h * w, 1, |_, _| rng.gen_range(-1.0..1.0));
    solvability_from_system(&build_window_matrix(&img, k)?.a, &b)
}

/// The comparison of [`conv_solvability_demo`] on an explicit system.
pub fn solvability_from_system(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SolvabilityReport> {
    if b.nrows() != a.nrows() || b.ncols() != 1 {
        return Err(Error::Shape {
            op: "solvability",
            detail: format!("target {}×{} for a {}-row system", b.nrows(), b.ncols(), a.nrows()),
        });
    }
    let (_, standard_residual) = lstsq(a, b)?;
    let mut augmented = DMatrix::zeros(a.nrows(), a.ncols() + 1);
    augmented.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    augmented.view_mut((0, a.ncols()), (a.nrows(), 1)).copy_from(b);

    // Per-row minimum-norm kernels: x_i = b_i·a_i / ‖a_i‖², evaluated
    // honestly (the residual is measured, not assumed).
    let mut sq_residual = 0.0f64;
    let mut zero_rows = 0usize;
    for i in 0..a.nrows() {
        let row = a.row(i);
        let n2: f64 = row.iter().map(|v| v * v).sum();
        if n2 == 0.0 {
            zero_rows += 1;
            sq_residual += b[(i, 0)] * b[(i, 0)];
            continue;
        }
        let scale = b[(i, 0)] / n2;
        let achieved: f64 = row.iter().map(|v| v * (v * scale)).sum();
        let r = achieved - b[(i, 0)];
        sq_residual += r * r;
    }
    Ok(SolvabilityReport {
        standard_residual,
        adaptive_residual: sq_residual.sqrt(),
        rank_a: matrix_rank(a, RANK_TOLERANCE)?,
        rank_augmented: matrix_rank(&augmented, RANK_TOLERANCE)?,
        zero_rows,
    })
}

/// Converts a 2D tensor into a dense matrix (row-major).
pub fn tensor_to_matrix(t: &Tensor) -> Result<DMatrix<f64>> {
    if t.order() != 2 {
        return Err(Error::Shape {
            op: "to_matrix",
            detail: format!("expected order 2, got {:?}", t.shape()),
        });
    }
    Ok(DMatrix::from_row_slice(t.shape()[0], t.shape()[1], t.data()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Row-reduction rank oracle: Gaussian elimination with partial
    /// pivoting, counting pivots above an absolute threshold.
    fn rank_oracle(m: &DMatrix<f64>, tol: f64) -> usize {
        let mut a = m.clone();
        let (rows, cols) = (a.nrows(), a.ncols());
        let mut rank = 0;
        let mut row = 0;
        for col in 0..cols {
            let (mut best, mut best_abs) = (row, 0.0f64);
            for r in row..rows {
                if a[(r, col)].abs() > best_abs {
                    best = r;
                    best_abs = a[(r, col)].abs();
                }
            }
            if best_abs <= tol {
                continue;
            }
            a.swap_rows(row, best);
            for r in (row + 1)..rows {
                let f = a[(r, col)] / a[(row, col)];
                for c in col..cols {
                    a[(r, c)] -= f * a[(row, c)];
                }
            }
            rank += 1;
            row += 1;
            if row == rows {
                break;
            }
        }
        rank
    }

    #[test]
    fn rank_of_identity_outer_product_and_duplicates() {
        let id = DMatrix::<f64>::identity(5, 5);
        assert_eq!(matrix_rank(&id, RANK_TOLERANCE).unwrap(), 5);

        let u = DMatrix::from_row_slice(4, 1, &[1.0, -2.0, 0.5, 3.0]);
        let v = DMatrix::from_row_slice(1, 3, &[2.0, 0.1, -1.0]);
        let outer = &u * &v;
        assert_eq!(matrix_rank(&outer, RANK_TOLERANCE).unwrap(), 1);

        // 6×4 random with two duplicated columns → rank 3, matching the
        // row-reduction oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0f64));
        for r in 0..6 {
            m[(r, 3)] = m[(r, 0)];
        }
        assert_eq!(matrix_rank(&m, RANK_TOLERANCE).unwrap(), 3);
        assert_eq!(rank_oracle(&m, 1e-10), 3);

        let zero = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(matrix_rank(&zero, RANK_TOLERANCE).unwrap(), 0);
        assert!(matrix_rank(&DMatrix::<f64>::zeros(0, 0), RANK_TOLERANCE).is_err());
        assert!(matrix_rank(&id, 0.0).is_err());
    }

    #[test]
    fn rank_agrees_with_row_reduction_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let rows = 2 + trial % 5;
            let cols = 2 + (trial / 2) % 5;
            let inner = 1 + trial % 3;
            // Product of thin factors forces rank ≤ inner.
            let p = DMatrix::from_fn(rows, inner, |_, _| rng.gen_range(-1.0..1.0f64));
            let q = DMatrix::from_fn(inner, cols, |_, _| rng.gen_range(-1.0..1.0f64));
            let m = &p * &q;
            let got = matrix_rank(&m, RANK_TOLERANCE).unwrap();
            assert_eq!(got, rank_oracle(&m, 1e-9), "trial {trial}");
            assert!(got <= inner.min(rows).min(cols));
        }
    }

    #[test]
    fn projection_identity_recovers_exactly() {
        let a = DMatrix::<f64>::identity(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(4, 10, |_, _| rng.gen_range(0.0..1.0f64));
        let err = projection_roundtrip_error(&a, &x).unwrap();
        assert!(err <= 1e-12, "identity roundtrip error {err}");
    }

    #[test]
    fn projection_with_dropped_band_loses_information() {
        // A removes the last band: recovery must miss it for generic X.
        let mut a = DMatrix::<f64>::zeros(3, 4);
        for i in 0..3 {
            a[(i, i)] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(4, 6, |_, _| rng.gen_range(0.1..1.0f64));
        let err = projection_roundtrip_error(&a, &x).unwrap();
        assert!(err > 0.05, "expected visible loss, got {err}");
    }

    #[test]
    fn projection_demo_separates_compressive_from_square() {
        let narrow = spectral_projection_demo(8, 4, 32, 25, 5).unwrap();
        assert_eq!(narrow.trials.len(), 25);
        for t in &narrow.trials {
            assert_eq!(t.rank_a, 4);
            assert!(t.worst_error > 0.0);
        }
        assert!(narrow.min_worst_error > 0.0);

        let square = spectral_projection_demo(8, 8, 32, 10, 6).unwrap();
        for t in &square.trials {
            assert_eq!(t.rank_a, 8);
            assert!(t.worst_error <= 1e-8, "square-case error {}", t.worst_error);
        }
        assert!(spectral_projection_demo(0, 1, 1, 1, 0).is_err());
    }

    #[test]
    fn window_matrix_k1_is_the_flattened_input() {
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let wm = build_window_matrix(&x, 1).unwrap();
        assert_eq!(wm.a.nrows(), 6);
        assert_eq!(wm.a.ncols(), 1);
        for i in 0..6 {
            assert_eq!(wm.a[(i, 0)], x.data()[i]);
        }
    }

    #[test]
    fn window_matrix_center_row_matches_manual_enumeration() {
        // 3×3 input with k = 3: the row of the center position (1,1) covers
        // the full image. Tap (dy,dx) reads source (1−dy, 1−dx), so the
        // row, in tap order, is the 180°-rotated image.
        let x = Tensor::new(
            &[3, 3],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let wm = build_window_matrix(&x, 3).unwrap();
        let center = 1 * 3 + 1;
        let want = [9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        for (t, &v) in want.iter().enumerate() {
            assert_eq!(wm.a[(center, t)], v, "tap {t}");
        }
        // Corner position (0,0): taps with positive displacement read into
        // the padding and stay zero.
        assert_eq!(wm.a[(0, 8)], 0.0); // (dy,dx) = (+1,+1) reads (−1,−1): padding
        assert_eq!(wm.a[(0, 4)], 1.0); // center tap reads (0,0)
        assert_eq!(wm.a[(0, 0)], 5.0); // (dy,dx) = (−1,−1) reads (1,1)
    }

    #[test]
    fn window_matrix_reproduces_convolution() {
        // A·vec(kernel) applies the kernel with the adaptive tap convention
        // (source p−δ); the correlation operator reads p+δ, so the same
        // numbers come out of conv2d with the axis-reversed kernel.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::uniform(&[4, 5], -1.0, 1.0, &mut rng);
        let kernel = Tensor::uniform(&[1, 1, 3, 3], -1.0, 1.0, &mut rng);
        let flipped = Tensor::new(
            &[1, 1, 3, 3],
            kernel.data().iter().rev().cloned().collect(),
        )
        .unwrap();
        let spec = crate::conv::ConvSpec::new(1, 1, 3);
        let img = x.reshape(&[4, 5, 1]).unwrap();
        let conv_out = crate::conv::conv2d(&img, &spec, &flipped, None).unwrap();
        let wm = build_window_matrix(&x, 3).unwrap();
        let kvec = DMatrix::from_column_slice(9, 1, kernel.data());
        let sys_out = &wm.a * kvec;
        for i in 0..20 {
            assert!((sys_out[(i, 0)] - conv_out.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn window_matrix_constant_input_has_identical_interior_rows() {
        let x = Tensor::filled(&[5, 5], 0.7);
        let wm = build_window_matrix(&x, 3).unwrap();
        let interior = 2 * 5 + 2;
        for hi in 1..4usize {
            for wi in 1..4usize {
                let row = hi * 5 + wi;
                for t in 0..9 {
                    assert_eq!(wm.a[(row, t)], wm.a[(interior, t)]);
                }
            }
        }
        assert!(build_window_matrix(&x, 2).is_err());
        assert!(build_window_matrix(&Tensor::zeros(&[2, 2, 2, 2]), 3).is_err());
    }

    #[test]
    fn window_matrix_3d_matches_adaptive_application() {
        // With every voxel given the same kernel field, the adaptive
        // application must equal A·vec(kernel).
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Tensor::uniform(&[3, 3, 2], -1.0, 1.0, &mut rng);
        let field = Tensor::uniform(&[27], -1.0, 1.0, &mut rng);
        let wm = build_window_matrix(&x, 3).unwrap();
        let kvec = DMatrix::from_column_slice(27, 1, field.data());
        let sys_out = &wm.a * kvec;

        let vol = x.reshape(&[3, 3, 2, 1]).unwrap();
        let mut kernels = Tensor::zeros(&[3, 3, 2, 1, 27]);
        for v in 0..18 {
            kernels.data_mut()[v * 27..(v + 1) * 27].copy_from_slice(field.data());
        }
        let out = crate::block::ada3d_apply(&vol, &kernels, None, 3).unwrap();
        for i in 0..18 {
            assert!((sys_out[(i, 0)] - out.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn consistent_systems_have_tiny_standard_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = Tensor::uniform(&[6, 6], 0.0, 1.0, &mut rng);
        let wm = build_window_matrix(&img, 3).unwrap();
        let x0 = DMatrix::from_fn(9, 1, |_, _| rng.gen_range(-1.0..1.0f64));
        let b = &wm.a * &x0;
        let report = solvability_from_system(&wm.a, &b).unwrap();
        assert!(report.standard_residual <= 1e-9, "{}", report.standard_residual);
        assert_eq!(report.rank_a, report.rank_augmented);
        assert_eq!(report.zero_rows, 0);
    }

    #[test]
    fn generic_targets_defeat_the_shared_kernel_but_not_adaptive_ones() {
        for seed in 0..10u64 {
            let report = conv_solvability_demo(8, 8, 3, seed).unwrap();
            assert!(report.adaptive_residual <= 1e-10, "{}", report.adaptive_residual);
            assert!(report.standard_residual > 1e-3, "{}", report.standard_residual);
            assert!(report.adaptive_residual <= report.standard_residual);
            assert_eq!(report.zero_rows, 0);
            // Augmented rank exceeding rank(A) is exactly inconsistency.
            assert_eq!(report.rank_augmented, report.rank_a + 1);
        }
        assert!(conv_solvability_demo(2, 2, 3, 0).is_err());
    }

    #[test]
    fn standard_residual_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = Tensor::uniform(&[8, 8], 0.0, 1.0, &mut rng);
        let wm = build_window_matrix(&img, 3).unwrap();
        let b = DMatrix::from_fn(64, 1, |_, _| rng.gen_range(-1.0..1.0f64));
        let report = solvability_from_system(&wm.a, &b).unwrap();

        // Normal equations: (AᵀA)x = Aᵀb, solved by Cholesky (A has full
        // column rank for a generic image).
        let ata = wm.a.transpose() * &wm.a;
        let atb = wm.a.transpose() * &b;
        let chol = ata.cholesky().expect("full-rank system");
        let x = chol.solve(&atb);
        let oracle_res = (&wm.a * x - &b).norm();
        assert!(
            (report.standard_residual - oracle_res).abs() <= 1e-6 * oracle_res.max(1.0),
            "svd {} vs cholesky {}",
            report.standard_residual,
            oracle_res
        );
    }

    #[test]
    fn zero_rows_are_counted_and_priced() {
        // A 2-row system whose second row is zero: the adaptive residual
        // must equal |b₂| exactly and the row must be counted.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[3.0, -0.7]);
        let report = solvability_from_system(&a, &b).unwrap();
        assert_eq!(report.zero_rows, 1);
        assert!((report.adaptive_residual - 0.7).abs() < 1e-12);
    }

    #[test]
    fn tensor_to_matrix_roundtrip() {
        let t = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let m = tensor_to_matrix(&t).unwrap();
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(1, 0)], 4.0);
        assert!(tensor_to_matrix(&Tensor::zeros(&[2, 2, 2])).is_err());
    }
}
