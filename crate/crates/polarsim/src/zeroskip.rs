//! Zero-skipping bit-serial input scheduling.
//!
//! Inputs stream into the arrays one bit-plane per cycle, least-significant
//! bit first. A group of inputs only needs as many cycles as the position of
//! the highest set bit across the group — its *effective input cycles*
//! (EIC). All-zero groups are skipped entirely. The scheduler works at
//! fragment granularity: the inputs feeding one fragment row-group share a
//! skip decision, so smaller fragments skip more.

use serde::{Deserialize, Serialize};

use crate::compress::layout::FragmentLayout;
use crate::error::{Error, Result};

/// Cycles needed to stream `x` bit-serially, LSB first: the position of the
/// highest set bit (zero for zero).
#[must_use]
pub fn effective_bits(x: u16) -> u32 {
    u16::BITS - x.leading_zeros()
}

/// Effective input cycles of a fragment: the maximum [`effective_bits`] over
/// its member inputs (zero for an empty or all-zero fragment).
#[must_use]
pub fn fragment_eic(inputs: &[u16]) -> u32 {
    inputs.iter().copied().map(effective_bits).max().unwrap_or(0)
}

/// The bit-serial schedule for one fragment's inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipSchedule {
    /// Cycles the fragment is active.
    pub eic: u32,
    /// One plane per cycle, LSB first; `planes[b][i]` is bit `b` of input
    /// `i` (0 or 1).
    pub planes: Vec<Vec<u8>>,
}

/// Build the bit-plane schedule for a fragment.
///
/// Exactly `eic` planes are emitted; every higher plane would be all-zero.
/// Inputs must fit in `input_bits`.
pub fn skip_schedule(inputs: &[u16], input_bits: u32) -> Result<SkipSchedule> {
    if input_bits == 0 || input_bits > u16::BITS {
        return Err(Error::Range(format!("input_bits {input_bits} out of range")));
    }
    let limit = if input_bits == u16::BITS {
        u16::MAX
    } else {
        (1u16 << input_bits) - 1
    };
    if let Some(&bad) = inputs.iter().find(|&&x| x > limit) {
        return Err(Error::Range(format!(
            "input {bad} does not fit in {input_bits} bits"
        )));
    }
    let eic = fragment_eic(inputs);
    let planes = (0..eic)
        .map(|b| inputs.iter().map(|&x| ((x >> b) & 1) as u8).collect())
        .collect();
    Ok(SkipSchedule { eic, planes })
}

/// Per-fragment EICs for one input vector under a fragment layout.
///
/// `input` is indexed by view row; entry `g` covers the rows of fragment
/// row-group `g` (shared by every kept column).
#[must_use]
pub fn group_eics(input: &[u16], layout: &FragmentLayout) -> Vec<u32> {
    (0..layout.frags_per_col())
        .map(|g| {
            fragment_eic(
                &layout
                    .fragment_rows(g)
                    .iter()
                    .map(|&r| input[r])
                    .collect::<Vec<u16>>(),
            )
        })
        .collect()
}

/// Running EIC statistics over many fragments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EicStats {
    /// Bit width inputs are streamed at (the no-skip cycle count).
    pub input_bits: u32,
    /// `histogram[e]` counts fragments with EIC `e`, for `e in 0..=input_bits`.
    pub histogram: Vec<u64>,
    /// Total fragments recorded.
    pub fragments: u64,
    /// Sum of recorded EICs.
    pub total_eic: u64,
}

impl EicStats {
    /// Empty statistics for a given input bit width.
    #[must_use]
    pub fn new(input_bits: u32) -> Self {
        EicStats {
            input_bits,
            histogram: vec![0; input_bits as usize + 1],
            fragments: 0,
            total_eic: 0,
        }
    }

    /// Record one fragment's EIC.
    pub fn record(&mut self, eic: u32) {
        let e = eic.min(self.input_bits);
        self.histogram[e as usize] += 1;
        self.fragments += 1;
        self.total_eic += u64::from(e);
    }

    /// Fold another set of statistics (same bit width) into this one.
    pub fn merge(&mut self, other: &EicStats) {
        debug_assert_eq!(self.input_bits, other.input_bits);
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
        self.fragments += other.fragments;
        self.total_eic += other.total_eic;
    }

    /// Mean EIC over all recorded fragments (zero when empty).
    #[must_use]
    pub fn avg_eic(&self) -> f64 {
        if self.fragments == 0 {
            0.0
        } else {
            self.total_eic as f64 / self.fragments as f64
        }
    }

    /// Fraction of input cycles skipped: `1 - avg_eic / input_bits`.
    #[must_use]
    pub fn savings(&self) -> f64 {
        1.0 - self.avg_eic() / f64::from(self.input_bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::config::PolarizationOrder;
    use crate::model::tensor::{Matrix, WeightShape};
    use proptest::prelude::*;

    #[test]
    fn effective_bits_is_highest_set_bit_position() {
        assert_eq!(effective_bits(0), 0);
        assert_eq!(effective_bits(1), 1);
        assert_eq!(effective_bits(2), 2);
        assert_eq!(effective_bits(3), 2);
        assert_eq!(effective_bits(4), 3);
        assert_eq!(effective_bits(255), 8);
        assert_eq!(effective_bits(256), 9);
        assert_eq!(effective_bits(0x8000), 16);
        assert_eq!(effective_bits(u16::MAX), 16);
    }

    #[test]
    fn fragment_eic_is_max_over_members() {
        assert_eq!(fragment_eic(&[]), 0);
        assert_eq!(fragment_eic(&[0, 0, 0, 0]), 0);
        assert_eq!(fragment_eic(&[0, 1, 0, 0]), 1);
        assert_eq!(fragment_eic(&[3, 4]), 3);
        assert_eq!(fragment_eic(&[5, 2, 9, 1]), 4);
    }

    #[test]
    fn schedule_emits_exactly_eic_planes_lsb_first() {
        let s = skip_schedule(&[5, 2], 16).unwrap();
        assert_eq!(s.eic, 3);
        assert_eq!(s.planes, vec![vec![1, 0], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn all_zero_fragment_is_skipped_entirely() {
        let s = skip_schedule(&[0, 0, 0, 0], 16).unwrap();
        assert_eq!(s.eic, 0);
        assert!(s.planes.is_empty());
    }

    #[test]
    fn oversized_input_is_rejected() {
        let err = skip_schedule(&[256], 8).unwrap_err();
        assert!(matches!(err, Error::Range(_)), "{err}");
        assert!(skip_schedule(&[255], 8).is_ok());
        assert!(skip_schedule(&[u16::MAX], 16).is_ok());
    }

    #[test]
    fn group_eics_follow_the_layout_row_groups() {
        let view = Matrix::zeros(8, 1);
        let shape = WeightShape::Conv {
            filters: 1,
            channels: 1,
            height: 8,
            width: 1,
        };
        let layout = FragmentLayout::full(&view, &shape, PolarizationOrder::WMajor, 4).unwrap();
        let input = [0, 0, 0, 0, 1, 2, 4, 8];
        assert_eq!(group_eics(&input, &layout), vec![0, 4]);
    }

    #[test]
    fn stats_track_average_and_savings() {
        let mut stats = EicStats::new(16);
        stats.record(7);
        stats.record(3);
        assert_eq!(stats.avg_eic(), 5.0);
        assert!((stats.savings() - (1.0 - 5.0 / 16.0)).abs() < 1e-12);
        assert_eq!(stats.histogram[7], 1);
        assert_eq!(stats.histogram[3], 1);
        assert_eq!(stats.fragments, 2);
    }

    #[test]
    fn all_zero_inputs_save_everything() {
        let mut stats = EicStats::new(16);
        stats.record(0);
        stats.record(0);
        assert_eq!(stats.savings(), 1.0);
    }

    #[test]
    fn merge_is_additive() {
        let mut a = EicStats::new(16);
        a.record(4);
        let mut b = EicStats::new(16);
        b.record(8);
        b.record(2);
        a.merge(&b);
        assert_eq!(a.fragments, 3);
        assert_eq!(a.total_eic, 14);
        assert_eq!(a.histogram[8], 1);
    }

    fn avg_eic_at_size(values: &[u16], m: usize) -> f64 {
        let mut stats = EicStats::new(16);
        for chunk in values.chunks(m) {
            stats.record(fragment_eic(chunk));
        }
        stats.avg_eic()
    }

    proptest! {
        /// Reconstruction: planes recombine to the inputs, and the top plane
        /// is never all-zero.
        #[test]
        fn planes_reconstruct_inputs(inputs in proptest::collection::vec(0u16..=u16::MAX, 1..32)) {
            let s = skip_schedule(&inputs, 16).unwrap();
            for (i, &x) in inputs.iter().enumerate() {
                let mut acc = 0u32;
                for (b, plane) in s.planes.iter().enumerate() {
                    acc += u32::from(plane[i]) << b;
                }
                prop_assert_eq!(acc, u32::from(x));
            }
            if s.eic > 0 {
                prop_assert!(s.planes[s.eic as usize - 1].iter().any(|&b| b == 1));
            }
        }

        /// Average EIC is monotone nondecreasing over nested fragment sizes:
        /// coarser groups can only skip less.
        #[test]
        fn avg_eic_monotone_over_nested_sizes(values in proptest::collection::vec(0u16..512, 256)) {
            let sizes = [4usize, 8, 16, 128];
            let avgs: Vec<f64> = sizes.iter().map(|&m| avg_eic_at_size(&values, m)).collect();
            for pair in avgs.windows(2) {
                prop_assert!(pair[0] <= pair[1] + 1e-12, "avgs {:?}", avgs);
            }
        }
    }
}
