//! Euclidean projections onto the three constraint sets, plus the dual
//! update.
//!
//! Each projection maps a weight view to the closest member (Frobenius
//! distance) of its constraint set:
//!
//! * **structured** — at most `ceil(alpha * cols)` nonzero columns and
//!   `ceil(beta * rows)` nonzero rows; the kept ones are those with the
//!   largest L2 norm, so zeroing the rest is the closest feasible point.
//! * **polarize** — inside each fragment, all nonzero weights share the
//!   fragment's stored sign; clamping opposite-sign entries to zero is the
//!   orthant projection.
//! * **quantize** — every magnitude is an integer multiple of the step
//!   `delta`, at most `2^quant_bits - 1` steps; nearest-step rounding with a
//!   top clip is the closest grid point.
//!
//! All three are idempotent for fixed parameters.

use crate::compress::layout::{FragmentLayout, Sign};
use crate::model::tensor::Matrix;

/// Indices of the `keep` largest values (ties keep the lower index).
fn top_k(norms: &[f64], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..norms.len()).collect();
    idx.sort_by(|&a, &b| {
        norms[b]
            .partial_cmp(&norms[a])
            .expect("norms are finite")
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = idx.into_iter().take(keep).collect();
    kept.sort_unstable();
    kept
}

/// Ceiling of `frac * n` with a small slack against representation noise
/// (so `0.3 * 10` counts as 3, not 4), clamped into `[1, n]`.
#[must_use]
pub fn ceil_fraction(frac: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let t = frac * n as f64;
    let k = (t * (1.0 - 1e-9)).ceil() as usize;
    k.clamp(1, n)
}

/// Kept column/row index sets for structured pruning.
///
/// Columns: the `ceil(alpha * cols)` with largest L2 norm. Rows: the
/// `ceil(beta * rows)` with largest L2 norm — rounded up to a multiple of
/// `fragment_size` when `crossbar_aware` is set, so pruning removes whole
/// fragments. Both rankings are computed on the input matrix.
#[must_use]
pub fn select_structured(
    view: &Matrix,
    alpha: f64,
    beta: f64,
    fragment_size: usize,
    crossbar_aware: bool,
) -> (Vec<usize>, Vec<usize>) {
    let col_norms: Vec<f64> = (0..view.cols()).map(|c| view.col_l2(c)).collect();
    let row_norms: Vec<f64> = (0..view.rows()).map(|r| view.row_l2(r)).collect();
    let keep_cols = ceil_fraction(alpha, view.cols());
    let mut keep_rows = ceil_fraction(beta, view.rows());
    if crossbar_aware && fragment_size > 0 {
        keep_rows = keep_rows.div_ceil(fragment_size) * fragment_size;
        keep_rows = keep_rows.min(view.rows());
    }
    (top_k(&col_norms, keep_cols), top_k(&row_norms, keep_rows))
}

/// Zero everything outside `kept_cols x kept_rows`; kept entries unchanged.
#[must_use]
pub fn apply_structured(view: &Matrix, kept_cols: &[usize], kept_rows: &[usize]) -> Matrix {
    let mut col_ok = vec![false; view.cols()];
    let mut row_ok = vec![false; view.rows()];
    for &c in kept_cols {
        col_ok[c] = true;
    }
    for &r in kept_rows {
        row_ok[r] = true;
    }
    let mut out = Matrix::zeros(view.rows(), view.cols());
    for r in 0..view.rows() {
        if !row_ok[r] {
            continue;
        }
        for c in 0..view.cols() {
            if col_ok[c] {
                out.set(r, c, view.get(r, c));
            }
        }
    }
    out
}

/// Projection onto the structured-sparsity set; also returns the kept sets.
#[must_use]
pub fn project_structured(
    view: &Matrix,
    alpha: f64,
    beta: f64,
    fragment_size: usize,
    crossbar_aware: bool,
) -> (Matrix, Vec<usize>, Vec<usize>) {
    let (cols, rows) = select_structured(view, alpha, beta, fragment_size, crossbar_aware);
    (apply_structured(view, &cols, &rows), cols, rows)
}

/// Projection onto the polarization set defined by `layout`'s stored signs:
/// entries whose sign opposes their fragment sign become zero.
#[must_use]
pub fn project_polarize(view: &Matrix, layout: &FragmentLayout) -> Matrix {
    let mut out = view.clone();
    let fpc = layout.frags_per_col();
    for (slot, &col) in layout.kept_cols.iter().enumerate() {
        for frag in 0..fpc {
            let sign = layout.sign(slot, frag);
            for &row in layout.fragment_rows(frag) {
                let v = out.get(row, col);
                let opposes = match sign {
                    Sign::Plus => v < 0.0,
                    Sign::Minus => v > 0.0,
                };
                if opposes {
                    out.set(row, col, 0.0);
                }
            }
        }
    }
    out
}

/// Largest representable step index for `quant_bits`.
#[must_use]
pub fn max_level(quant_bits: u32) -> u32 {
    if quant_bits >= 32 {
        u32::MAX
    } else {
        (1u32 << quant_bits) - 1
    }
}

/// Quantization step for a matrix: `max|w| / (2^quant_bits - 1)`.
///
/// Zero when the matrix is all-zero (every weight already sits on the grid).
#[must_use]
pub fn quant_delta(view: &Matrix, quant_bits: u32) -> f32 {
    view.max_abs() / max_level(quant_bits) as f32
}

/// Projection onto the quantization grid `{0, ±delta, ..., ±max_level*delta}`:
/// nearest-step rounding of each magnitude, clipped at the top level.
///
/// `delta` is a parameter so the operation is idempotent for a fixed grid;
/// the training loop recomputes it from the projection input each time.
#[must_use]
pub fn project_quantize(view: &Matrix, quant_bits: u32, delta: f32) -> Matrix {
    let mut out = Matrix::zeros(view.rows(), view.cols());
    if delta <= 0.0 {
        return out;
    }
    let max_k = max_level(quant_bits) as f32;
    for r in 0..view.rows() {
        for c in 0..view.cols() {
            let v = view.get(r, c);
            let k = (v.abs() / delta).round().min(max_k);
            out.set(r, c, (k * delta).copysign(v));
        }
    }
    out
}

/// Scaled dual ascent: `u += w - z` elementwise.
pub fn dual_update(u: &mut Matrix, w: &Matrix, z: &Matrix) {
    for ((uv, &wv), &zv) in u
        .as_mut_slice()
        .iter_mut()
        .zip(w.as_slice())
        .zip(z.as_slice())
    {
        *uv += wv - zv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::config::PolarizationOrder;
    use crate::compress::layout::FragmentLayout;
    use crate::model::tensor::WeightShape;
    use proptest::prelude::*;

    fn mat(rows: usize, cols: usize, vals: &[f32]) -> Matrix {
        Matrix::from_vec(rows, cols, vals.to_vec()).unwrap()
    }

    /// Brute-force structured projection: try every kept-column subset of
    /// the target size and pick the closest feasible point.
    fn brute_force_column_projection(view: &Matrix, keep: usize) -> Matrix {
        let cols = view.cols();
        let mut best: Option<(f64, Matrix)> = None;
        for mask in 0u32..(1 << cols) {
            if mask.count_ones() as usize != keep {
                continue;
            }
            let kept: Vec<usize> = (0..cols).filter(|&c| mask & (1 << c) != 0).collect();
            let all_rows: Vec<usize> = (0..view.rows()).collect();
            let candidate = apply_structured(view, &kept, &all_rows);
            let d = view.frobenius_dist_sq(&candidate).unwrap();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, candidate));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn structured_keeps_top_columns_by_l2() {
        // 4x4, alpha=0.5: columns 1 and 3 have the largest norms
        #[rustfmt::skip]
        let view = mat(4, 4, &[
            0.1, 2.0, 0.2, -3.0,
            0.1, 2.0, 0.2, -3.0,
            0.1, 2.0, 0.2, -3.0,
            0.1, 2.0, 0.2, -3.0,
        ]);
        let (out, cols, rows) = project_structured(&view, 0.5, 1.0, 4, false);
        assert_eq!(cols, vec![1, 3]);
        assert_eq!(rows.len(), 4);
        // matches the exhaustive minimum-distance projection
        let oracle = brute_force_column_projection(&view, 2);
        assert_eq!(out, oracle);
        // kept values unchanged
        assert_eq!(out.get(0, 1), 2.0);
        assert_eq!(out.get(3, 3), -3.0);
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn structured_matches_brute_force_on_random_matrices() {
        for seed in 0..30u64 {
            let vals: Vec<f32> = (0..20)
                .map(|i| (((seed * 31 + i * 17) % 41) as f32 - 20.0) / 7.0)
                .collect();
            let view = mat(4, 5, &vals);
            let (out, _, _) = project_structured(&view, 0.6, 1.0, 4, false);
            let oracle = brute_force_column_projection(&view, 3);
            let d_ours = view.frobenius_dist_sq(&out).unwrap();
            let d_oracle = view.frobenius_dist_sq(&oracle).unwrap();
            assert!(
                (d_ours - d_oracle).abs() < 1e-9,
                "seed {seed}: {d_ours} vs {d_oracle}"
            );
        }
    }

    #[test]
    fn ceil_fraction_examples() {
        // alpha = 0.57 on 100 filters keeps ceil(57) = 57
        assert_eq!(ceil_fraction(0.57, 100), 57);
        // representation noise must not push over the integer
        assert_eq!(ceil_fraction(0.3, 10), 3);
        // genuine fractions round up
        assert_eq!(ceil_fraction(0.5, 9), 5);
        assert_eq!(ceil_fraction(1.0, 7), 7);
    }

    #[test]
    fn crossbar_aware_snapping_rounds_rows_up_to_fragment_multiple() {
        let view = Matrix::from_vec(9, 2, (0..18).map(|i| i as f32 + 1.0).collect()).unwrap();
        let (_, rows) = select_structured(&view, 1.0, 0.5, 4, true);
        // ceil(0.5*9)=5, snapped up to 8
        assert_eq!(rows.len(), 8);
        let (_, rows) = select_structured(&view, 1.0, 0.5, 4, false);
        assert_eq!(rows.len(), 5);
        // snapping never exceeds the row count
        let (_, rows) = select_structured(&view, 1.0, 0.99, 4, true);
        assert_eq!(rows.len(), 9);
    }

    fn layout_for(view: &Matrix, m: usize) -> FragmentLayout {
        let shape = WeightShape::Conv {
            filters: view.cols(),
            channels: 1,
            height: view.rows(),
            width: 1,
        };
        FragmentLayout::full(view, &shape, PolarizationOrder::WMajor, m).unwrap()
    }

    #[test]
    fn polarize_zeroes_opposite_sign_entries() {
        // fragment [3, -1, 2, -0.5] sums to 3.5 -> Plus; negatives go to 0
        let view = mat(4, 1, &[3.0, -1.0, 2.0, -0.5]);
        let layout = layout_for(&view, 4);
        assert_eq!(layout.sign(0, 0), Sign::Plus);
        let out = project_polarize(&view, &layout);
        assert_eq!(out.as_slice(), &[3.0, 0.0, 2.0, 0.0]);

        // fragment [-3, 1, -2, 0.5] -> Minus; positives go to 0
        let view = mat(4, 1, &[-3.0, 1.0, -2.0, 0.5]);
        let layout = layout_for(&view, 4);
        assert_eq!(layout.sign(0, 0), Sign::Minus);
        let out = project_polarize(&view, &layout);
        assert_eq!(out.as_slice(), &[-3.0, 0.0, -2.0, 0.0]);
    }

    /// Brute force: enumerate all zero/keep subsets of a fragment that leave
    /// only stored-sign entries, take the closest.
    fn brute_force_polarize(frag: &[f32], sign: Sign) -> Vec<f32> {
        let m = frag.len();
        let mut best: Option<(f64, Vec<f32>)> = None;
        for mask in 0u32..(1 << m) {
            let candidate: Vec<f32> = frag
                .iter()
                .enumerate()
                .map(|(i, &v)| if mask & (1 << i) != 0 { v } else { 0.0 })
                .collect();
            let feasible = candidate.iter().all(|&v| match sign {
                Sign::Plus => v >= 0.0,
                Sign::Minus => v <= 0.0,
            });
            if !feasible {
                continue;
            }
            let d: f64 = frag
                .iter()
                .zip(&candidate)
                .map(|(&a, &b)| {
                    let d = f64::from(a - b);
                    d * d
                })
                .sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, candidate));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn polarize_matches_brute_force_on_fragments_up_to_four() {
        for seed in 0..40u64 {
            let m = 2 + (seed as usize % 3); // 2..=4
            let frag: Vec<f32> = (0..m)
                .map(|i| (((seed * 13 + i as u64 * 7) % 19) as f32 - 9.0) / 4.0)
                .collect();
            let view = mat(m, 1, &frag);
            let layout = layout_for(&view, m);
            let ours = project_polarize(&view, &layout);
            let oracle = brute_force_polarize(&frag, layout.sign(0, 0));
            assert_eq!(ours.as_slice(), &oracle[..], "seed {seed} frag {frag:?}");
        }
    }

    #[test]
    fn quantize_snaps_to_grid() {
        // delta = 0.01: 0.13 is exactly 13 steps
        let view = mat(1, 1, &[0.13]);
        let out = project_quantize(&view, 8, 0.01);
        assert_eq!(out.get(0, 0), 13.0f32 * 0.01);
        // sign is preserved
        let out = project_quantize(&mat(1, 1, &[-0.13]), 8, 0.01);
        assert_eq!(out.get(0, 0), -(13.0f32 * 0.01));
    }

    #[test]
    fn quantize_clips_at_top_level() {
        // 8-bit: magnitude 300*delta clips to 255*delta
        let delta = 0.5f32;
        let view = mat(1, 1, &[300.0 * delta]);
        let out = project_quantize(&view, 8, delta);
        assert_eq!(out.get(0, 0), 255.0 * delta);
    }

    #[test]
    fn quant_delta_uses_max_abs() {
        let view = mat(1, 3, &[0.5, -2.55, 1.0]);
        let d = quant_delta(&view, 8);
        assert_eq!(d, 2.55f32 / 255.0);
        // all-zero matrix has a zero step and projects to itself
        let z = Matrix::zeros(2, 2);
        assert_eq!(quant_delta(&z, 8), 0.0);
        assert_eq!(project_quantize(&z, 8, 0.0), z);
    }

    #[test]
    fn dual_update_accumulates_residual() {
        let mut u = mat(1, 1, &[0.1]);
        dual_update(&mut u, &mat(1, 1, &[0.5]), &mat(1, 1, &[0.3]));
        // 0.1 + (0.5 - 0.3)
        assert!((u.get(0, 0) - 0.3).abs() < 1e-7);
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..6, 1usize..6)
            .prop_flat_map(|(r, c)| {
                proptest::collection::vec(-10.0f32..10.0, r * c)
                    .prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn structured_projection_is_idempotent(view in arb_matrix(),
                                               alpha in 0.2f64..1.0,
                                               beta in 0.2f64..1.0) {
            let (once, cols, rows) = project_structured(&view, alpha, beta, 4, true);
            let twice = apply_structured(&once, &cols, &rows);
            prop_assert_eq!(&once, &twice);
            // re-selecting on the projected matrix also reproduces it: the
            // zeroed rows/cols have zero norm and lose every tie
            let (again, _, _) = project_structured(&once, alpha, beta, 4, true);
            prop_assert_eq!(once, again);
        }

        #[test]
        fn polarize_projection_is_idempotent(view in arb_matrix(), m in 1usize..5) {
            let layout = layout_for(&view, m.min(view.rows()));
            let once = project_polarize(&view, &layout);
            let twice = project_polarize(&once, &layout);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn quantize_projection_is_idempotent(view in arb_matrix(), bits in 2u32..9) {
            let delta = quant_delta(&view, bits);
            let once = project_quantize(&view, bits, delta);
            let twice = project_quantize(&once, bits, delta);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn quantized_magnitudes_stay_in_range(view in arb_matrix(), bits in 2u32..9) {
            let delta = quant_delta(&view, bits);
            let out = project_quantize(&view, bits, delta);
            if delta > 0.0 {
                let max_k = max_level(bits) as f32;
                for &v in out.as_slice() {
                    let k = (v.abs() / delta).round();
                    prop_assert!(k <= max_k);
                    prop_assert_eq!(v.abs(), k * delta);
                }
            }
        }
    }
}
