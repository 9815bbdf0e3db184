//! Training-time compression: alternating-direction weight optimization with
//! structured pruning, fragment sign polarization, and uniform quantization.
//!
//! The pipeline runs three sequential phases, each a short retraining under a
//! quadratic penalty that pulls weights toward the nearest point of the
//! current constraint set, followed by a hard projection onto that set:
//!
//! 1. **prune** – keep the strongest columns and row groups;
//! 2. **polarize** – force every weight fragment to a single sign;
//! 3. **quantize** – snap magnitudes to a uniform per-layer grid.
//!
//! The final model satisfies all three constraints exactly (bit-level), which
//! [`verify::verify_constraints`] checks.

pub mod admm;
pub mod config;
pub mod layout;
pub mod project;
pub mod verify;

use serde::{Deserialize, Serialize};

pub use admm::{compress_model, CompressionOutcome};
pub use config::{CompressionConfig, LayerCompression, PhaseKind, PolarizationOrder};
pub use layout::{FragmentLayout, Sign};
pub use verify::{verify_constraints, VerifyReport};

/// Compression metadata for one weighted layer.
///
/// Everything needed to check feasibility and to map the layer onto
/// crossbars: which rows/columns survived pruning, the fragment geometry and
/// stored signs, and the quantization grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressedLayer {
    /// Layer name (unique within the model).
    pub name: String,
    /// Index into [`crate::model::ModelGraph::layers`].
    pub layer_index: usize,
    /// Kept rows/columns, fragment geometry, and per-fragment signs.
    pub layout: FragmentLayout,
    /// True once the polarize phase has run; only then are the stored signs
    /// a constraint on the weights.
    pub polarized: bool,
    /// Weight resolution in bits.
    pub quant_bits: u32,
    /// Quantization step; `None` until the quantize phase has run.
    pub quant_scale: Option<f32>,
    /// Column keep fraction this layer was pruned with.
    pub alpha: f64,
    /// Row keep fraction this layer was pruned with.
    pub beta: f64,
    /// Penalty strength used during retraining.
    pub rho: f64,
}
