//! Fragment geometry and signs.
//!
//! A *fragment* is a run of `m` consecutive weights in one column of the 2-D
//! weight view, taken in a configurable row traversal order. Every fragment
//! carries a single sign: positive when the sum of its weights is
//! non-negative (ties go positive), negative otherwise. Fragments are formed
//! over the rows that survive pruning; the trailing fragment of a column is
//! padded with structural zeros that never train.

use serde::{Deserialize, Serialize};

use crate::compress::config::PolarizationOrder;
use crate::error::{Error, Result};
use crate::model::tensor::{Matrix, WeightShape};

/// Fragment sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    /// Non-negative weight sum.
    Plus,
    /// Negative weight sum.
    Minus,
}

impl Sign {
    /// `+1.0` or `-1.0`.
    #[must_use]
    pub fn factor(self) -> f32 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// Bitmap encoding: `Plus` = 0, `Minus` = 1.
    #[must_use]
    pub fn bit(self) -> u8 {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    /// Inverse of [`Sign::bit`].
    #[must_use]
    pub fn from_bit(bit: u8) -> Sign {
        if bit == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// Sign of a fragment: positive iff the sum of its weights is `>= 0`.
///
/// The sum accumulates in `f64`; an all-zero fragment sums to 0 and is
/// therefore positive.
#[must_use]
pub fn fragment_sign(values: &[f32]) -> Sign {
    let sum: f64 = values.iter().map(|&v| f64::from(v)).sum();
    if sum >= 0.0 {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Row traversal permutation for a weight shape: `perm[new] = old` where
/// `old` is the natural view-row index (`c`-major, then `h`, then `w`).
///
/// * `WMajor` walks each kernel row left to right (the natural order).
/// * `HMajor` walks each kernel column top to bottom.
/// * `CMajor` visits the same kernel position across all channels before
///   moving to the next position.
///
/// Dense shapes have `h = w = 1`, so all three orders coincide.
#[must_use]
pub fn row_permutation(shape: &WeightShape, order: PolarizationOrder) -> Vec<usize> {
    let (c_n, h_n, w_n) = match *shape {
        WeightShape::Conv {
            channels,
            height,
            width,
            ..
        } => (channels, height, width),
        WeightShape::Dense { inputs, .. } => (inputs, 1, 1),
    };
    let natural = |c: usize, h: usize, w: usize| (c * h_n + h) * w_n + w;
    let mut perm = Vec::with_capacity(c_n * h_n * w_n);
    match order {
        PolarizationOrder::WMajor => {
            for c in 0..c_n {
                for h in 0..h_n {
                    for w in 0..w_n {
                        perm.push(natural(c, h, w));
                    }
                }
            }
        }
        PolarizationOrder::HMajor => {
            for c in 0..c_n {
                for w in 0..w_n {
                    for h in 0..h_n {
                        perm.push(natural(c, h, w));
                    }
                }
            }
        }
        PolarizationOrder::CMajor => {
            for h in 0..h_n {
                for w in 0..w_n {
                    for c in 0..c_n {
                        perm.push(natural(c, h, w));
                    }
                }
            }
        }
    }
    perm
}

/// Fragment partition of one layer's weight view.
///
/// `kept_rows` lists the surviving view rows in traversal order; fragments
/// are consecutive `fragment_size`-chunks of that list, per kept column. The
/// final chunk may be shorter — its missing tail is structural zero padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentLayout {
    /// Fragment size `m`.
    pub fragment_size: usize,
    /// Traversal order the rows were taken in.
    pub order: PolarizationOrder,
    /// Surviving view-row indices in traversal order.
    pub kept_rows: Vec<usize>,
    /// Surviving view-column indices, ascending.
    pub kept_cols: Vec<usize>,
    /// One sign per fragment, column-major:
    /// `signs[slot * frags_per_col + frag]` for kept-column slot `slot`.
    pub signs: Vec<Sign>,
}

impl FragmentLayout {
    /// Build a layout (signs computed from `view`).
    pub fn build(
        view: &Matrix,
        shape: &WeightShape,
        order: PolarizationOrder,
        fragment_size: usize,
        kept_rows_set: &[bool],
        kept_cols_set: &[bool],
    ) -> Result<FragmentLayout> {
        if kept_rows_set.len() != view.rows() || kept_cols_set.len() != view.cols() {
            return Err(Error::LayoutMismatch(format!(
                "kept sets ({}, {}) vs view {}x{}",
                kept_rows_set.len(),
                kept_cols_set.len(),
                view.rows(),
                view.cols()
            )));
        }
        let kept_rows: Vec<usize> = row_permutation(shape, order)
            .into_iter()
            .filter(|&r| kept_rows_set[r])
            .collect();
        let kept_cols: Vec<usize> = (0..view.cols()).filter(|&c| kept_cols_set[c]).collect();
        let mut layout = FragmentLayout {
            fragment_size,
            order,
            kept_rows,
            kept_cols,
            signs: Vec::new(),
        };
        layout.update_signs(view);
        Ok(layout)
    }

    /// Layout covering the whole matrix (no pruning).
    pub fn full(
        view: &Matrix,
        shape: &WeightShape,
        order: PolarizationOrder,
        fragment_size: usize,
    ) -> Result<FragmentLayout> {
        FragmentLayout::build(
            view,
            shape,
            order,
            fragment_size,
            &vec![true; view.rows()],
            &vec![true; view.cols()],
        )
    }

    /// Fragments per kept column (the trailing one may be partial).
    #[must_use]
    pub fn frags_per_col(&self) -> usize {
        self.kept_rows.len().div_ceil(self.fragment_size)
    }

    /// Total fragment count (kept columns x fragments per column).
    #[must_use]
    pub fn fragment_count(&self) -> usize {
        self.kept_cols.len() * self.frags_per_col()
    }

    /// Kept row count rounded up to whole fragments (crossbar rows occupied).
    #[must_use]
    pub fn padded_rows(&self) -> usize {
        self.frags_per_col() * self.fragment_size
    }

    /// The view-row indices of fragment `frag` (may be shorter than `m` for
    /// the trailing fragment).
    #[must_use]
    pub fn fragment_rows(&self, frag: usize) -> &[usize] {
        let lo = frag * self.fragment_size;
        let hi = (lo + self.fragment_size).min(self.kept_rows.len());
        &self.kept_rows[lo..hi]
    }

    /// Stored sign of `(kept-column slot, fragment index)`.
    #[must_use]
    pub fn sign(&self, col_slot: usize, frag: usize) -> Sign {
        self.signs[col_slot * self.frags_per_col() + frag]
    }

    /// Recompute every fragment sign from the current weights.
    pub fn update_signs(&mut self, view: &Matrix) {
        let fpc = self.frags_per_col();
        let mut signs = Vec::with_capacity(self.kept_cols.len() * fpc);
        let mut buf = Vec::with_capacity(self.fragment_size);
        for &col in &self.kept_cols {
            for frag in 0..fpc {
                buf.clear();
                for &row in self.fragment_rows(frag) {
                    buf.push(view.get(row, col));
                }
                signs.push(fragment_sign(&buf));
            }
        }
        self.signs = signs;
    }
}
