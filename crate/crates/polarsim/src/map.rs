//! Mapping compressed weights onto crossbar arrays.
//!
//! A quantized weight magnitude (a level `k` on the layer's grid) is split
//! into `quant_bits / cell_bits` cell codes, least-significant slice first,
//! and each slice occupies one physical column. Fragment signs live in the
//! layout, not in the cells, so a polarized layer needs a single array per
//! weight column. The *unpolarized* baseline needs a differential pair
//! (positive and negative arrays), which the placement planner accounts for
//! with a column split factor of two without ever materializing the images.

use serde::{Deserialize, Serialize};

use crate::compress::project::max_level;
use crate::compress::{CompressedLayer, FragmentLayout, Sign};
use crate::error::{Error, Result};
use crate::model::tensor::Matrix;
use crate::model::{Layer, ModelGraph};

/// Physical crossbar array dimensions and cell resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossbarSpec {
    /// Word lines (inputs) per array.
    pub rows: usize,
    /// Bit lines (outputs) per array.
    pub cols: usize,
    /// Bits stored per cell.
    pub cell_bits: u32,
}

impl Default for CrossbarSpec {
    fn default() -> Self {
        CrossbarSpec {
            rows: 128,
            cols: 128,
            cell_bits: 2,
        }
    }
}

impl CrossbarSpec {
    /// Cells per array.
    #[must_use]
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

/// Number of cell slices for a weight resolution.
pub fn slices_for(quant_bits: u32, cell_bits: u32) -> Result<usize> {
    if cell_bits == 0 || quant_bits == 0 || quant_bits % cell_bits != 0 {
        return Err(Error::Config(format!(
            "quant_bits {quant_bits} must be a positive multiple of cell_bits {cell_bits}"
        )));
    }
    Ok((quant_bits / cell_bits) as usize)
}

/// Split a quantization level into cell codes, least-significant first.
///
/// Each code is a base-`2^cell_bits` digit; `level` must fit in
/// `quant_bits`.
#[must_use]
pub fn bit_slice(level: u32, quant_bits: u32, cell_bits: u32) -> Vec<u8> {
    let slices = (quant_bits / cell_bits) as usize;
    let base = 1u32 << cell_bits;
    let mut digits = Vec::with_capacity(slices);
    let mut rest = level;
    for _ in 0..slices {
        digits.push((rest % base) as u8);
        rest /= base;
    }
    debug_assert_eq!(rest, 0, "level {level} does not fit in {quant_bits} bits");
    digits
}

/// Inverse of [`bit_slice`]: recombine cell codes into the level.
#[must_use]
pub fn unslice(digits: &[u8], cell_bits: u32) -> u32 {
    let mut level = 0u32;
    for (i, &d) in digits.iter().enumerate() {
        level += u32::from(d) << (cell_bits as usize * i);
    }
    level
}

/// How a weight matrix tiles onto physical arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementPlan {
    /// Array tiles along the row (input) dimension.
    pub row_tiles: usize,
    /// Array tiles along the column (output) dimension.
    pub col_tiles: usize,
    /// Total arrays = `row_tiles * col_tiles`.
    pub crossbars: usize,
    /// Physical columns occupied (`weight_cols * slices * split`).
    pub physical_cols: usize,
}

/// Plan the tiling of `rows x weight_cols` weights onto arrays.
///
/// `split` is 1 for polarized layers and 2 for the differential baseline.
#[must_use]
pub fn plan_placement(
    rows: usize,
    weight_cols: usize,
    slices: usize,
    split: usize,
    xb: &CrossbarSpec,
) -> PlacementPlan {
    let physical_cols = weight_cols * slices * split;
    let row_tiles = rows.div_ceil(xb.rows).max(1);
    let col_tiles = physical_cols.div_ceil(xb.cols).max(1);
    PlacementPlan {
        row_tiles,
        col_tiles,
        crossbars: row_tiles * col_tiles,
        physical_cols,
    }
}

/// Bit width of the uncompressed dense reference weights.
pub const BASELINE_WEIGHT_BITS: u32 = 32;

/// Array-count reduction of one layer versus the dense 32-bit differential
/// baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionReport {
    /// Layer name.
    pub layer: String,
    /// Arrays the dense baseline needs.
    pub baseline_crossbars: usize,
    /// Arrays the compressed layer needs.
    pub compressed_crossbars: usize,
    /// `baseline / compressed`.
    pub reduction: f64,
}

/// Reduction for explicit dimensions (no mapped layer required).
///
/// `full_*` are the dense view dimensions, `kept_rows` the physical
/// (padding-included) retained row count, `kept_cols` the retained columns.
pub fn reduction_for_dims(
    layer: &str,
    full_rows: usize,
    full_cols: usize,
    kept_rows: usize,
    kept_cols: usize,
    quant_bits: u32,
    xb: &CrossbarSpec,
) -> Result<ReductionReport> {
    let base_slices = slices_for(BASELINE_WEIGHT_BITS, xb.cell_bits)?;
    let comp_slices = slices_for(quant_bits, xb.cell_bits)?;
    let base = plan_placement(full_rows, full_cols, base_slices, 2, xb);
    let comp = plan_placement(kept_rows, kept_cols, comp_slices, 1, xb);
    Ok(ReductionReport {
        layer: layer.to_string(),
        baseline_crossbars: base.crossbars,
        compressed_crossbars: comp.crossbars,
        reduction: base.crossbars as f64 / comp.crossbars as f64,
    })
}

/// Hand-derived reduction reference cases for the default 128x128 2-bit
/// array at 8-bit weights: `(full_rows, full_cols, kept_rows, kept_cols,
/// expected_reduction)`.
///
/// Dense and retained dimensions are array multiples, so the reduction
/// factors exactly into `prune * (32/8) * 2`: the weight-count ratio times
/// the slice-count ratio times the retired differential column. The
/// self-test and the acceptance suite both check
/// [`reduction_for_dims`] against this table.
#[must_use]
pub fn reduction_reference_cases() -> [(usize, usize, usize, usize, f64); 10] {
    [
        (512, 9272, 128, 1600, 185.44),
        (1024, 824, 128, 160, 329.6),
        (512, 8136, 128, 640, 406.8),
        (512, 1064, 128, 640, 53.2),
        (512, 3672, 128, 1600, 73.44),
        (512, 1304, 128, 640, 65.2),
        (256, 2672, 256, 1600, 13.36),
        (256, 256, 128, 256, 16.0),
        (128, 1376, 128, 640, 17.2),
        (128, 11744, 128, 3200, 29.36),
    ]
}

/// One layer's cell images plus everything needed to run it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MappedLayer {
    /// Layer name.
    pub name: String,
    /// Index into the source model's layer list.
    pub layer_index: usize,
    /// Fragment geometry and signs.
    pub layout: FragmentLayout,
    /// Weight resolution in bits.
    pub quant_bits: u32,
    /// Bits per cell.
    pub cell_bits: u32,
    /// Quantization step of this layer.
    pub quant_scale: f32,
    /// Cell slices per weight column.
    pub slices: usize,
    /// Dense view rows of the source layer.
    pub full_rows: usize,
    /// Dense view columns of the source layer.
    pub full_cols: usize,
    /// Physical rows per column strip (kept rows padded to a fragment
    /// multiple).
    pub padded_rows: usize,
    /// Bias vector, applied digitally after the analog dot products.
    pub bias: Vec<f32>,
    /// Cell codes, indexed `[(slot * slices + slice) * padded_rows + row]`.
    pub cells: Vec<u8>,
    /// Array tiling of this layer.
    pub plan: PlacementPlan,
}

impl MappedLayer {
    /// Cell code at (kept-column `slot`, `slice`, padded row `prow`).
    #[must_use]
    pub fn cell(&self, slot: usize, slice: usize, prow: usize) -> u8 {
        self.cells[(slot * self.slices + slice) * self.padded_rows + prow]
    }

    /// Contiguous cell codes of one `(slot, slice)` column strip.
    #[must_use]
    pub fn column_cells(&self, slot: usize, slice: usize) -> &[u8] {
        let start = (slot * self.slices + slice) * self.padded_rows;
        &self.cells[start..start + self.padded_rows]
    }

    /// Signed weight value stored at (slot, padded row).
    #[must_use]
    pub fn weight_at(&self, slot: usize, prow: usize) -> f32 {
        let digits: Vec<u8> = (0..self.slices).map(|s| self.cell(slot, s, prow)).collect();
        let level = unslice(&digits, self.cell_bits);
        let sign = self.layout.sign(slot, prow / self.layout.fragment_size);
        sign.factor() * (level as f32 * self.quant_scale)
    }

    /// Rebuild the dense weight view from the cells (inverse of mapping).
    ///
    /// Values compare equal to the source weights; zero entries may differ
    /// in floating-point sign bit only.
    #[must_use]
    pub fn reconstruct_view(&self) -> Matrix {
        let mut out = Matrix::zeros(self.full_rows, self.full_cols);
        for (slot, &col) in self.layout.kept_cols.iter().enumerate() {
            for (prow, &row) in self.layout.kept_rows.iter().enumerate() {
                out.set(row, col, self.weight_at(slot, prow));
            }
        }
        out
    }

    /// Cells holding actual weights (excludes fragment padding).
    #[must_use]
    pub fn active_cells(&self) -> usize {
        self.layout.kept_rows.len() * self.layout.kept_cols.len() * self.slices
    }

    /// Reduction versus the dense 32-bit differential baseline.
    pub fn reduction(&self, xb: &CrossbarSpec) -> Result<ReductionReport> {
        reduction_for_dims(
            &self.name,
            self.full_rows,
            self.full_cols,
            self.padded_rows,
            self.layout.kept_cols.len(),
            self.quant_bits,
            xb,
        )
    }
}

/// Map one compressed layer's weights to cell images.
///
/// Requires the layer to be polarized and quantized; off-grid or
/// sign-inconsistent weights are rejected.
pub fn map_layer(
    view: &Matrix,
    bias: &[f32],
    meta: &CompressedLayer,
    xb: &CrossbarSpec,
) -> Result<MappedLayer> {
    if !meta.polarized {
        return Err(Error::StageOrder(format!(
            "layer {}: mapping requires a polarized model",
            meta.name
        )));
    }
    let delta = meta.quant_scale.ok_or_else(|| {
        Error::StageOrder(format!("layer {}: mapping requires a quantized model", meta.name))
    })?;
    let slices = slices_for(meta.quant_bits, xb.cell_bits)?;
    let layout = &meta.layout;
    let padded_rows = layout.padded_rows();
    let slots = layout.kept_cols.len();
    let max_k = max_level(meta.quant_bits);

    let mut cells = vec![0u8; slots * slices * padded_rows];
    for (slot, &col) in layout.kept_cols.iter().enumerate() {
        for (prow, &row) in layout.kept_rows.iter().enumerate() {
            let v = view.get(row, col);
            if v == 0.0 {
                continue;
            }
            let sign = layout.sign(slot, prow / layout.fragment_size);
            if (v < 0.0) != (sign == Sign::Minus) {
                return Err(Error::Range(format!(
                    "layer {}: weight {v} at ({row},{col}) opposes its fragment sign",
                    meta.name
                )));
            }
            if delta <= 0.0 {
                return Err(Error::Range(format!(
                    "layer {}: nonzero weight with zero quantization scale",
                    meta.name
                )));
            }
            let k = (v.abs() / delta).round();
            if k > max_k as f32 || v.abs() != k * delta {
                return Err(Error::Range(format!(
                    "layer {}: weight {v} at ({row},{col}) is off the quantization grid",
                    meta.name
                )));
            }
            for (s, d) in bit_slice(k as u32, meta.quant_bits, xb.cell_bits)
                .into_iter()
                .enumerate()
            {
                cells[(slot * slices + s) * padded_rows + prow] = d;
            }
        }
    }

    let plan = plan_placement(padded_rows, slots, slices, 1, xb);
    Ok(MappedLayer {
        name: meta.name.clone(),
        layer_index: meta.layer_index,
        layout: meta.layout.clone(),
        quant_bits: meta.quant_bits,
        cell_bits: xb.cell_bits,
        quant_scale: delta,
        slices,
        full_rows: view.rows(),
        full_cols: view.cols(),
        padded_rows,
        bias: bias.to_vec(),
        cells,
        plan,
    })
}

/// A fully mapped model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MappedModel {
    /// Array geometry the mapping targets.
    pub xb: CrossbarSpec,
    /// Mapped layers, in model order.
    pub layers: Vec<MappedLayer>,
}

impl MappedModel {
    /// Total arrays across all layers.
    #[must_use]
    pub fn total_crossbars(&self) -> usize {
        self.layers.iter().map(|l| l.plan.crossbars).sum()
    }

    /// Per-layer reductions versus the dense baseline.
    pub fn reductions(&self) -> Result<Vec<ReductionReport>> {
        self.layers.iter().map(|l| l.reduction(&self.xb)).collect()
    }

    /// Fraction of cells in use across all allocated arrays.
    #[must_use]
    pub fn utilization(&self) -> f64 {
        let used: usize = self.layers.iter().map(MappedLayer::active_cells).sum();
        let total: usize = self
            .layers
            .iter()
            .map(|l| l.plan.crossbars * self.xb.cells())
            .sum();
        used as f64 / total.max(1) as f64
    }
}

/// Map every compressed layer of a model.
pub fn map_model(
    model: &ModelGraph,
    metas: &[CompressedLayer],
    xb: &CrossbarSpec,
) -> Result<MappedModel> {
    let mut layers = Vec::with_capacity(metas.len());
    for meta in metas {
        let (view, bias) = match model.layers.get(meta.layer_index) {
            Some(Layer::Conv { weights, bias, .. }) | Some(Layer::Dense { weights, bias, .. }) => {
                (weights.to_view(), bias.clone())
            }
            _ => {
                return Err(Error::LayoutMismatch(format!(
                    "layer index {} is not a weighted layer",
                    meta.layer_index
                )))
            }
        };
        layers.push(map_layer(&view, &bias, meta, xb)?);
    }
    Ok(MappedModel { xb: *xb, layers })
}
