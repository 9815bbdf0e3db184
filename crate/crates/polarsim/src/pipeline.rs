//! Experiment pipeline: staged artifacts, manifests, and report emission.
//!
//! One [`ExperimentConfig`] drives five sequential stages — `compress` →
//! `map` → `simulate` → `eic` → `report` — each independently rerunnable
//! from the artifacts of its upstream stages. Artifacts live in a directory
//! named by the first 16 hex digits of the configuration's SHA-256, so
//! sweeps over configs are cache-friendly and a changed knob can never be
//! confused with an old run. Every stage writes an [`ExperimentManifest`]
//! recording the checksums of what it read and wrote; downstream stages
//! refuse to run when an upstream manifest is missing (stage-order
//! violation) or an artifact no longer matches its recorded hash (corrupt
//! artifact).
//!
//! All outputs are byte-stable for a fixed config and tool version: maps are
//! ordered, floats are serialized in shortest round-trip form, and nothing
//! nondeterministic (timestamps, absolute paths) enters an artifact. Stage
//! wall-clock timings are recorded in the manifest for operators but are
//! excluded from determinism claims.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compress::admm::{compress_model, PhaseReport};
use crate::compress::config::{CompressionConfig, PhaseKind};
use crate::compress::{verify_constraints, CompressedLayer, FragmentLayout, Sign};
use crate::container::{
    read_cells, read_signs, read_tensors, write_cells, write_signs, write_tensors, CellMatrix,
    NamedTensor, SignBitmap,
};
use crate::error::{Error, Result};
use crate::map::{
    bit_slice, map_layer, map_model, reduction_for_dims, reduction_reference_cases, unslice,
    CrossbarSpec, MappedLayer, MappedModel, PlacementPlan,
};
use crate::model::data::generate;
use crate::model::tensor::{Matrix, WeightShape, WeightTensor};
use crate::model::train::train_plain;
use crate::model::{build_model, Layer, ModelGraph};
use crate::perf::{
    cycle_time_ns, pooling_flags, published_throughput_table, sim_report, speedup_compare,
    HardwareSpec, NetworkWorkload, OptimizationToggles, PerfConfig, SimReport, ThroughputRow,
};
use crate::rng::{stream, StreamKind};
use crate::sim::{
    perturb, reference_mvm, simulate_accuracy, simulate_mvm, LayerSimStats, Perturbation,
    SimOptions, SimStats,
};
use crate::zeroskip::effective_bits;

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

fn default_baseline() -> String {
    "isaac".into()
}

/// Top-level experiment configuration; one JSON file drives every stage.
///
/// Unknown keys are rejected with the offending key named. Command-line
/// flags override individual fields via [`ExperimentConfig::apply`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model, dataset, and compression schedule.
    #[serde(default)]
    pub compression: CompressionConfig,
    /// Bit-serial simulation options (`sim.seed` keys the cell-variation
    /// streams, independent of the training seed).
    #[serde(default)]
    pub sim: SimOptions,
    /// Hardware constants for the performance report. When omitted the
    /// polarized preset matching `compression.fragment_size` is used, which
    /// requires a fragment size in {4, 8, 16}; other sizes must spell the
    /// constants out here.
    #[serde(default)]
    pub hardware: Option<HardwareSpec>,
    /// Baseline design the report compares against: `isaac` or
    /// `polarized-m{4,8,16}`.
    #[serde(default = "default_baseline")]
    pub baseline: String,
    /// Cap on simulated test images (`null` = the full test split).
    #[serde(default)]
    pub eval_limit: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            compression: CompressionConfig::default(),
            sim: SimOptions::default(),
            hardware: None,
            baseline: default_baseline(),
            eval_limit: None,
        }
    }
}

/// Look up a named hardware design.
pub fn hardware_by_name(name: &str) -> Result<HardwareSpec> {
    match name {
        "isaac" => Ok(HardwareSpec::isaac()),
        "polarized-m4" => HardwareSpec::polarized(4),
        "polarized-m8" => HardwareSpec::polarized(8),
        "polarized-m16" => HardwareSpec::polarized(16),
        other => Err(Error::Config(format!(
            "unknown design {other:?} (expected isaac or polarized-m{{4,8,16}})"
        ))),
    }
}

impl ExperimentConfig {
    /// Parse and validate from a JSON string.
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize to pretty JSON (the byte string the config hash covers).
    #[must_use]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Check every knob, including cross-section consistency.
    pub fn validate(&self) -> Result<()> {
        self.compression.validate()?;
        if self.sim.sigma < 0.0 || !self.sim.sigma.is_finite() {
            return Err(Error::Config(format!(
                "sim.sigma {} must be finite and >= 0",
                self.sim.sigma
            )));
        }
        if self.sim.adc_bits == 0 || self.sim.adc_bits > 31 {
            return Err(Error::Config(format!(
                "sim.adc_bits {} outside 1..=31",
                self.sim.adc_bits
            )));
        }
        if self.sim.requant.bits == 0 || self.sim.requant.bits > 16 {
            return Err(Error::Config(format!(
                "sim.requant.bits {} outside 1..=16",
                self.sim.requant.bits
            )));
        }
        if self.eval_limit == Some(0) {
            return Err(Error::Config("eval_limit must be >= 1 when set".into()));
        }
        hardware_by_name(&self.baseline)?;
        let hw = self.hardware()?;
        if hw.cell_bits != self.compression.cell_bits {
            return Err(Error::Config(format!(
                "hardware stores {} bits per cell but compression targets {}",
                hw.cell_bits, self.compression.cell_bits
            )));
        }
        if hw.fragment_size as usize != self.compression.fragment_size {
            return Err(Error::Config(format!(
                "hardware fragment size {} differs from compression fragment size {}",
                hw.fragment_size, self.compression.fragment_size
            )));
        }
        Ok(())
    }

    /// The hardware constants this run is priced on.
    pub fn hardware(&self) -> Result<HardwareSpec> {
        match &self.hardware {
            Some(spec) => {
                spec.validate()?;
                Ok(spec.clone())
            }
            None => HardwareSpec::polarized(self.compression.fragment_size as u32).map_err(
                |e| match e {
                    Error::Config(msg) => Error::Config(format!(
                        "{msg} (spell constants out in a `hardware` section for other sizes)"
                    )),
                    other => other,
                },
            ),
        }
    }

    /// Array geometry the mapper targets (hardware dims, compression cells).
    pub fn crossbar(&self) -> Result<CrossbarSpec> {
        let hw = self.hardware()?;
        Ok(CrossbarSpec {
            rows: hw.crossbar_rows as usize,
            cols: hw.crossbar_cols as usize,
            cell_bits: self.compression.cell_bits,
        })
    }

    /// Which of the four optimizations this configuration exercises.
    #[must_use]
    pub fn toggles(&self) -> OptimizationToggles {
        let has = |k: PhaseKind| self.compression.phases.contains(&k);
        OptimizationToggles {
            pruning: has(PhaseKind::Prune),
            quantization: has(PhaseKind::Quantize),
            polarization: has(PhaseKind::Polarize),
            zero_skip: self.sim.zero_skip,
        }
    }

    /// Apply command-line overrides; `--seed` moves both the training seed
    /// and the variation seed.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.compression.seed = seed;
            self.sim.seed = seed;
        }
        if let Some(m) = o.fragment_size {
            self.compression.fragment_size = m;
        }
        if let Some(qb) = o.quant_bits {
            self.compression.quant_bits = qb;
        }
        if let Some(ab) = o.adc_bits {
            self.sim.adc_bits = ab;
        }
        if o.no_skip {
            self.sim.zero_skip = false;
        }
        if let Some(sigma) = o.sigma {
            self.sim.sigma = sigma;
        }
        if let Some(baseline) = &o.baseline {
            self.baseline = baseline.clone();
        }
    }
}

/// Flag-level overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// Replaces both the training and the variation seed.
    pub seed: Option<u64>,
    /// Replaces `compression.fragment_size`.
    pub fragment_size: Option<usize>,
    /// Replaces `compression.quant_bits`.
    pub quant_bits: Option<u32>,
    /// Replaces `sim.adc_bits`.
    pub adc_bits: Option<u32>,
    /// Disables input zero-skipping.
    pub no_skip: bool,
    /// Replaces `sim.sigma`.
    pub sigma: Option<f64>,
    /// Replaces the comparison baseline name.
    pub baseline: Option<String>,
}

/// Load a config file (or the defaults), apply overrides, and validate.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Hashing and manifests
// ---------------------------------------------------------------------------

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// SHA-256 over the canonical JSON form of the config: the identity of an
/// experiment. Covers every knob that affects results.
#[must_use]
pub fn config_hash(config: &ExperimentConfig) -> String {
    sha256_hex(config.to_json().as_bytes())
}

/// Directory all stages of one experiment share: `out/<first 16 hash hex>`.
#[must_use]
pub fn experiment_dir(out_root: &Path, config: &ExperimentConfig) -> PathBuf {
    out_root.join(&config_hash(config)[..16])
}

/// A pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Train, run the compression phases, verify constraints.
    Compress,
    /// Place compressed weights onto arrays.
    Map,
    /// Bit-serial inference over the test split.
    Simulate,
    /// Effective-input-cycle histogram export.
    Eic,
    /// Performance, energy, and comparison report.
    Report,
}

impl Stage {
    /// Every stage, in pipeline order.
    pub const ALL: [Stage; 5] =
        [Stage::Compress, Stage::Map, Stage::Simulate, Stage::Eic, Stage::Report];

    /// Stable lowercase name (subcommand, manifest file).
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Stage::Compress => "compress",
            Stage::Map => "map",
            Stage::Simulate => "simulate",
            Stage::Eic => "eic",
            Stage::Report => "report",
        }
    }

    /// Manifest file this stage writes.
    #[must_use]
    pub fn manifest_file(self) -> String {
        format!("manifest-{}.json", self.name())
    }

    /// Stages whose artifacts must exist (and verify) before this one runs.
    #[must_use]
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Compress => &[],
            Stage::Map => &[Stage::Compress],
            Stage::Simulate => &[Stage::Compress, Stage::Map],
            Stage::Eic => &[Stage::Map, Stage::Simulate],
            Stage::Report => &[Stage::Compress, Stage::Map, Stage::Simulate],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Record of one stage run: what went in, what came out, and the checksums
/// that tie them together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// Toolkit version that produced the artifacts.
    pub tool_version: String,
    /// Stage this manifest records.
    pub stage: Stage,
    /// Full SHA-256 of the canonical config JSON.
    pub config_hash: String,
    /// Training seed of the run.
    pub seed: u64,
    /// Weight container this stage consumed (`None` for `compress`).
    pub input_model: Option<String>,
    /// Upstream artifacts verified before running: file name → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Artifacts this stage wrote: file name → SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock section timings, informational only (not covered by the
    /// determinism guarantee).
    pub timings_ms: BTreeMap<String, u64>,
}

fn read_manifest(dir: &Path, stage: Stage) -> Result<ExperimentManifest> {
    let path = dir.join(stage.manifest_file());
    let text = fs::read_to_string(&path).map_err(|_| {
        Error::StageOrder(format!(
            "stage `{stage}` has not produced artifacts in {} yet; run it first",
            dir.display()
        ))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Artifact(format!("manifest {} is corrupt: {e}", path.display())))
}

/// Verify the upstream stages of `stage` ran for this config and that every
/// artifact they recorded still matches its checksum. Returns the combined
/// name → hash map of the verified inputs.
fn require_upstream(
    dir: &Path,
    stage: Stage,
    config_hash: &str,
) -> Result<BTreeMap<String, String>> {
    let mut inputs = BTreeMap::new();
    for &up in stage.upstream() {
        let manifest = read_manifest(dir, up)?;
        if manifest.config_hash != config_hash {
            return Err(Error::StageOrder(format!(
                "artifacts in {} were produced by a different configuration",
                dir.display()
            )));
        }
        for (name, recorded) in &manifest.outputs {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(Error::Artifact(format!(
                    "artifact {name} recorded by stage `{up}` is missing"
                )));
            }
            let actual = file_sha256(&path)?;
            if &actual != recorded {
                return Err(Error::Artifact(format!(
                    "artifact {name} failed its checksum (expected {}, found {})",
                    &recorded[..16.min(recorded.len())],
                    &actual[..16]
                )));
            }
            inputs.insert(name.clone(), actual);
        }
    }
    Ok(inputs)
}

// ---------------------------------------------------------------------------
// Artifact names
// ---------------------------------------------------------------------------

/// Resolved configuration (the hash source), written by `compress`.
pub const CONFIG_FILE: &str = "config.json";
/// Compressed weight container, written by `compress`.
pub const MODEL_FILE: &str = "model.wts";
/// Fragment-sign sidecar of the compressed model, written by `compress`.
pub const SIGNS_FILE: &str = "signs.sgn";
/// Compression summary (metadata, phase curves, accuracies).
pub const COMPRESS_SUMMARY_FILE: &str = "compress.json";
/// Mapped-model JSON manifest (placement, slice map, layout).
pub const MAPPED_META_FILE: &str = "mapped.json";
/// Mapped-model binary cell matrices.
pub const MAPPED_CELLS_FILE: &str = "mapped.cells";
/// Mapped-model sign bitmap.
pub const MAPPED_SIGNS_FILE: &str = "mapped.sgn";
/// Per-layer array-reduction table.
pub const REDUCTIONS_FILE: &str = "reductions.csv";
/// Raw per-layer simulation counters.
pub const STATS_FILE: &str = "stats.json";
/// Distilled throughput-model workload.
pub const WORKLOAD_FILE: &str = "workload.json";
/// Simulation summary (accuracy and options).
pub const SIM_SUMMARY_FILE: &str = "sim.json";
/// Effective-input-cycle histogram export.
pub const EIC_FILE: &str = "eic.csv";
/// Full report bundle as JSON.
pub const REPORT_JSON_FILE: &str = "report.json";
/// Report scalar summary as CSV rows.
pub const REPORT_CSV_FILE: &str = "report.csv";
/// Cross-design table as CSV.
pub const THROUGHPUT_CSV_FILE: &str = "throughput.csv";
/// Human-readable report rendering.
pub const REPORT_TEXT_FILE: &str = "report.txt";
/// Divergence snapshot the compression loop leaves behind on failure.
pub const DIVERGED_FILE: &str = "diverged.wts";

// ---------------------------------------------------------------------------
// Model <-> container
// ---------------------------------------------------------------------------

/// Capture every weighted layer as `<name>/weights` (2-D view) and
/// `<name>/bias` tensors.
#[must_use]
pub fn model_tensors(model: &ModelGraph) -> Vec<NamedTensor> {
    let mut tensors = Vec::new();
    for (index, name) in model.weighted_layers() {
        if let Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } =
            &model.layers[index]
        {
            let view = weights.to_view();
            tensors.push(NamedTensor::from_matrix(&format!("{name}/weights"), &view));
            tensors.push(NamedTensor {
                name: format!("{name}/bias"),
                dims: vec![bias.len() as u32],
                data: bias.clone(),
            });
        }
    }
    tensors
}

/// Overwrite a freshly built model's weights and biases from container
/// tensors produced by [`model_tensors`].
pub fn load_weights(model: &mut ModelGraph, tensors: &[NamedTensor]) -> Result<()> {
    let by_name: BTreeMap<&str, &NamedTensor> =
        tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    for (index, name) in model.weighted_layers() {
        let w = by_name
            .get(format!("{name}/weights").as_str())
            .ok_or_else(|| Error::Artifact(format!("container lacks tensor {name}/weights")))?;
        let b = by_name
            .get(format!("{name}/bias").as_str())
            .ok_or_else(|| Error::Artifact(format!("container lacks tensor {name}/bias")))?;
        let view = w.to_matrix()?;
        if let Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } =
            &mut model.layers[index]
        {
            if b.data.len() != bias.len() {
                return Err(Error::ShapeMismatch(format!(
                    "bias {name}: container has {} entries, model needs {}",
                    b.data.len(),
                    bias.len()
                )));
            }
            *weights = WeightTensor::from_view(weights.shape, &view)?;
            *bias = b.data.clone();
        }
    }
    Ok(())
}

/// Build the configured architecture with its deterministic initialization.
pub fn build_configured_model(config: &CompressionConfig) -> Result<ModelGraph> {
    let d = &config.dataset;
    build_model(
        &config.model,
        (d.channels, d.height, d.width),
        d.classes,
        config.seed,
    )
}

// ---------------------------------------------------------------------------
// Stage summaries
// ---------------------------------------------------------------------------

/// Serializable snapshot of one compression phase's training curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    /// Which phase.
    pub phase: PhaseKind,
    /// Mean task loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Total penalty value per epoch.
    pub penalties: Vec<f64>,
    /// Total primal residual per epoch.
    pub residuals: Vec<f64>,
    /// Fragment-sign recomputations performed.
    pub sign_updates: usize,
}

impl From<&PhaseReport> for PhaseSummary {
    fn from(r: &PhaseReport) -> Self {
        PhaseSummary {
            phase: r.phase,
            epoch_losses: r.epoch_losses.clone(),
            penalties: r.penalties.clone(),
            residuals: r.residuals.clone(),
            sign_updates: r.sign_updates,
        }
    }
}

/// Everything the `compress` stage learned, persisted as `compress.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressSummary {
    /// Per-layer compression metadata (consumed by `map`).
    pub layers: Vec<CompressedLayer>,
    /// Training curves of each phase that ran.
    pub phases: Vec<PhaseSummary>,
    /// Mean task loss per pretraining epoch.
    pub pretrain_losses: Vec<f64>,
    /// Dense float accuracy on the test split after pretraining.
    pub baseline_accuracy: f64,
    /// Compressed float accuracy on the test split (before any hardware
    /// effects).
    pub compressed_accuracy: f64,
    /// Constraint violations found by verification; the stage fails unless
    /// this is zero.
    pub violations: usize,
}

/// Outcome of the `simulate` stage, persisted as `sim.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    /// Bit-serial accuracy over the simulated images.
    pub accuracy: f64,
    /// Images simulated (one frame each).
    pub samples: usize,
    /// Dense float accuracy carried from the compress stage.
    pub baseline_accuracy: f64,
    /// Compressed float accuracy carried from the compress stage.
    pub compressed_accuracy: f64,
    /// Options the simulation ran with.
    pub options: SimOptions,
}

// ---------------------------------------------------------------------------
// Mapped-model dump
// ---------------------------------------------------------------------------

/// Everything [`MappedLayer`] carries except the cell payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MappedLayerMeta {
    /// Layer name.
    pub name: String,
    /// Index into the source model's layer list.
    pub layer_index: usize,
    /// Fragment geometry, kept rows/columns, and signs.
    pub layout: FragmentLayout,
    /// Weight resolution in bits.
    pub quant_bits: u32,
    /// Bits per cell.
    pub cell_bits: u32,
    /// Quantization step.
    pub quant_scale: f32,
    /// Cell slices per weight column.
    pub slices: usize,
    /// Dense view rows of the source layer.
    pub full_rows: usize,
    /// Dense view columns of the source layer.
    pub full_cols: usize,
    /// Physical rows per column strip.
    pub padded_rows: usize,
    /// Digital bias vector.
    pub bias: Vec<f32>,
    /// Array tiling.
    pub plan: PlacementPlan,
}

/// JSON half of the mapped-model dump; cells and signs ride in binary
/// sidecars.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MappedMeta {
    /// Array geometry the mapping targets.
    pub xb: CrossbarSpec,
    /// Per-layer placement metadata.
    pub layers: Vec<MappedLayerMeta>,
}

/// Write a mapped model as JSON manifest + binary cell matrices + sign
/// bitmap.
pub fn write_mapped(dir: &Path, mapped: &MappedModel) -> Result<()> {
    let meta = MappedMeta {
        xb: mapped.xb,
        layers: mapped
            .layers
            .iter()
            .map(|ml| MappedLayerMeta {
                name: ml.name.clone(),
                layer_index: ml.layer_index,
                layout: ml.layout.clone(),
                quant_bits: ml.quant_bits,
                cell_bits: ml.cell_bits,
                quant_scale: ml.quant_scale,
                slices: ml.slices,
                full_rows: ml.full_rows,
                full_cols: ml.full_cols,
                padded_rows: ml.padded_rows,
                bias: ml.bias.clone(),
                plan: ml.plan,
            })
            .collect(),
    };
    write_json(&dir.join(MAPPED_META_FILE), &meta)?;
    let cells: Vec<CellMatrix> = mapped
        .layers
        .iter()
        .map(|ml| CellMatrix {
            name: format!("{}/cells", ml.name),
            dims: vec![
                ml.layout.kept_cols.len() as u32,
                ml.slices as u32,
                ml.padded_rows as u32,
            ],
            data: ml.cells.clone(),
        })
        .collect();
    write_cells(&dir.join(MAPPED_CELLS_FILE), &cells)?;
    let signs: Vec<SignBitmap> = mapped
        .layers
        .iter()
        .map(|ml| SignBitmap::from_layout(&ml.name, &ml.layout))
        .collect();
    write_signs(&dir.join(MAPPED_SIGNS_FILE), &signs)
}

/// Reassemble a mapped model from its three-artifact dump, cross-checking
/// the binary sidecars against the JSON manifest.
pub fn read_mapped(dir: &Path) -> Result<MappedModel> {
    let meta: MappedMeta = read_json(&dir.join(MAPPED_META_FILE))?;
    let cells = read_cells(&dir.join(MAPPED_CELLS_FILE))?;
    let signs = read_signs(&dir.join(MAPPED_SIGNS_FILE))?;
    if cells.len() != meta.layers.len() || signs.len() != meta.layers.len() {
        return Err(Error::Artifact(format!(
            "mapped dump disagrees: {} layers vs {} cell matrices vs {} sign bitmaps",
            meta.layers.len(),
            cells.len(),
            signs.len()
        )));
    }
    let mut layers = Vec::with_capacity(meta.layers.len());
    for ((m, c), s) in meta.layers.into_iter().zip(cells).zip(&signs) {
        let want_dims = [
            m.layout.kept_cols.len() as u32,
            m.slices as u32,
            m.padded_rows as u32,
        ];
        if c.dims != want_dims {
            return Err(Error::Artifact(format!(
                "cell matrix {} has dims {:?}, manifest implies {want_dims:?}",
                c.name, c.dims
            )));
        }
        if !s.matches(&m.layout) {
            return Err(Error::Artifact(format!(
                "sign bitmap for {} disagrees with the mapped layout",
                m.name
            )));
        }
        layers.push(MappedLayer {
            name: m.name,
            layer_index: m.layer_index,
            layout: m.layout,
            quant_bits: m.quant_bits,
            cell_bits: m.cell_bits,
            quant_scale: m.quant_scale,
            slices: m.slices,
            full_rows: m.full_rows,
            full_cols: m.full_cols,
            padded_rows: m.padded_rows,
            bias: m.bias,
            cells: c.data,
            plan: m.plan,
        });
    }
    Ok(MappedModel { xb: meta.xb, layers })
}

// ---------------------------------------------------------------------------
// Report bundle and emission
// ---------------------------------------------------------------------------

/// Output format of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    /// Whole bundle as pretty JSON.
    Json,
    /// Scalar summary, reduction table, and cross-design table as CSV.
    Csv,
    /// Aligned human-readable tables.
    TextTable,
}

/// One row of the per-layer array-reduction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    /// Layer name.
    pub layer: String,
    /// Weight-count ratio of the dense view to the retained (physical)
    /// weights.
    pub prune_ratio: f64,
    /// Fragment size the layer was polarized with.
    pub fragment_size: usize,
    /// Arrays the dense 32-bit differential baseline needs.
    pub baseline_crossbars: usize,
    /// Arrays the compressed layer needs.
    pub compressed_crossbars: usize,
    /// `baseline / compressed`.
    pub crossbar_reduction: f64,
}

/// Everything [`emit_report`] renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    /// Rolled-up run report.
    pub report: SimReport,
    /// Per-layer array reductions.
    pub reductions: Vec<ReductionRow>,
    /// Cross-design table of carried published constants.
    pub throughput: Vec<ThroughputRow>,
}

/// Per-layer reduction rows of a mapped model.
pub fn reduction_rows(mapped: &MappedModel) -> Result<Vec<ReductionRow>> {
    mapped
        .layers
        .iter()
        .map(|ml| {
            let r = ml.reduction(&mapped.xb)?;
            let kept = (ml.padded_rows * ml.layout.kept_cols.len()).max(1);
            Ok(ReductionRow {
                layer: ml.name.clone(),
                prune_ratio: (ml.full_rows * ml.full_cols) as f64 / kept as f64,
                fragment_size: ml.layout.fragment_size,
                baseline_crossbars: r.baseline_crossbars,
                compressed_crossbars: r.compressed_crossbars,
                crossbar_reduction: r.reduction,
            })
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Header of the reduction CSV.
pub const REDUCTION_CSV_HEADER: &str =
    "layer,prune_ratio,fragment_size,baseline_crossbars,compressed_crossbars,crossbar_reduction";

fn reductions_csv(rows: &[ReductionRow]) -> String {
    let mut out = String::from(REDUCTION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&r.layer),
            r.prune_ratio,
            r.fragment_size,
            r.baseline_crossbars,
            r.compressed_crossbars,
            r.crossbar_reduction
        ));
    }
    out
}

fn throughput_csv(rows: &[ThroughputRow]) -> String {
    let mut out = String::from("design,gops_per_s_mm2,gops_per_w,constant_driven,note\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(&r.design),
            r.gops_per_s_mm2,
            r.gops_per_w,
            r.constant_driven,
            csv_field(&r.note)
        ));
    }
    out
}

fn summary_csv(r: &SimReport) -> String {
    let mut out = String::from("metric,value\n");
    let mut push = |k: &str, v: String| {
        out.push_str(&format!("{k},{}\n", csv_field(&v)));
    };
    push("design", r.design.clone());
    push("frames", r.frames.to_string());
    push("total_cycles", r.total_cycles.to_string());
    push("wall_time_s", r.wall_time_s.to_string());
    push("frame_latency_s", r.frame_latency_s.to_string());
    push("fps", r.fps.to_string());
    push("energy_static_j", r.energy.static_j.to_string());
    push("energy_dynamic_j", r.energy.dynamic_j.to_string());
    push("energy_mcu_j", r.energy.mcu_j.to_string());
    push("energy_digital_j", r.energy.digital_j.to_string());
    push("energy_link_j", r.energy.link_j.to_string());
    push("energy_total_j", r.energy.total_j().to_string());
    push("power_w", r.power_w.to_string());
    push("area_mm2", r.area_mm2.to_string());
    push("gops_per_s", r.throughput.gops_per_s.to_string());
    push("gops_per_s_mm2", r.throughput.gops_per_s_mm2.to_string());
    push("gops_per_w", r.throughput.gops_per_w.to_string());
    if let Some(s) = &r.speedup {
        push("speedup_baseline", s.baseline.clone());
        push("speedup_pruning", s.pruning.to_string());
        push("speedup_quantization", s.quantization.to_string());
        push("speedup_polarization", s.polarization.to_string());
        push("speedup_zero_skip", s.zero_skip.to_string());
        push("speedup_hardware", s.hardware.to_string());
        push("speedup_total", s.total.to_string());
    }
    push("notes", r.notes.join("; "));
    out
}

fn text_row(out: &mut String, k: &str, v: String) {
    out.push_str(&format!("  {k:<18} {v}\n"));
}

fn report_text(bundle: &ReportBundle) -> String {
    let r = &bundle.report;
    let mut out = String::new();
    out.push_str(&format!("run report: {}\n", r.design));
    out.push_str("==========\n");
    text_row(&mut out, "design", r.design.clone());
    text_row(&mut out, "frames", r.frames.to_string());
    text_row(&mut out, "total_cycles", r.total_cycles.to_string());
    text_row(&mut out, "wall_time_s", format!("{:.6e}", r.wall_time_s));
    text_row(&mut out, "frame_latency_s", format!("{:.6e}", r.frame_latency_s));
    text_row(&mut out, "fps", format!("{:.4}", r.fps));
    text_row(&mut out, "power_w", format!("{:.4}", r.power_w));
    text_row(&mut out, "area_mm2", format!("{:.4}", r.area_mm2));

    out.push_str("\nenergy (J)\n----------\n");
    text_row(&mut out, "static_j", format!("{:.6e}", r.energy.static_j));
    text_row(&mut out, "dynamic_j", format!("{:.6e}", r.energy.dynamic_j));
    text_row(&mut out, "mcu_j", format!("{:.6e}", r.energy.mcu_j));
    text_row(&mut out, "digital_j", format!("{:.6e}", r.energy.digital_j));
    text_row(&mut out, "link_j", format!("{:.6e}", r.energy.link_j));
    text_row(&mut out, "total_j", format!("{:.6e}", r.energy.total_j()));

    out.push_str("\nthroughput\n----------\n");
    text_row(&mut out, "gops_per_s", format!("{:.4}", r.throughput.gops_per_s));
    text_row(&mut out, "gops_per_s_mm2", format!("{:.4}", r.throughput.gops_per_s_mm2));
    text_row(&mut out, "gops_per_w", format!("{:.4}", r.throughput.gops_per_w));

    if let Some(s) = &r.speedup {
        out.push_str(&format!("\nspeedup: {} vs {}\n-------\n", s.optimized, s.baseline));
        text_row(&mut out, "pruning", format!("{:.4}", s.pruning));
        text_row(&mut out, "quantization", format!("{:.4}", s.quantization));
        text_row(&mut out, "polarization", format!("{:.4}", s.polarization));
        text_row(&mut out, "zero_skip", format!("{:.4}", s.zero_skip));
        text_row(&mut out, "hardware", format!("{:.4}", s.hardware));
        text_row(&mut out, "total", format!("{:.4}", s.total));
    }

    out.push_str("\nnotes\n-----\n");
    for n in &r.notes {
        out.push_str(&format!("  - {n}\n"));
    }

    out.push_str("\narray reductions\n----------------\n");
    out.push_str(&format!(
        "  {:<10} {:>12} {:>14} {:>10} {:>11} {:>10}\n",
        "layer", "prune_ratio", "fragment_size", "baseline", "compressed", "reduction"
    ));
    for row in &bundle.reductions {
        out.push_str(&format!(
            "  {:<10} {:>12.3} {:>14} {:>10} {:>11} {:>9.2}x\n",
            row.layer,
            row.prune_ratio,
            row.fragment_size,
            row.baseline_crossbars,
            row.compressed_crossbars,
            row.crossbar_reduction
        ));
    }

    out.push_str("\ncross-design table (isaac = 1, carried constants)\n");
    out.push_str("-------------------------------------------------\n");
    out.push_str(&format!(
        "  {:<36} {:>14} {:>10}\n",
        "design", "gops_per_s_mm2", "gops_per_w"
    ));
    for row in &bundle.throughput {
        out.push_str(&format!(
            "  {:<36} {:>14.2} {:>10.2}\n",
            row.design, row.gops_per_s_mm2, row.gops_per_w
        ));
    }
    out
}

/// Render a report bundle into `dir`, returning the files written.
///
/// `Json` writes the whole bundle; `Csv` writes the scalar summary, the
/// per-layer reduction table, and the cross-design table (an empty table
/// yields a header-only CSV); `TextTable` writes an aligned rendering of
/// every report field.
pub fn emit_report(bundle: &ReportBundle, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Json => {
            let path = dir.join(REPORT_JSON_FILE);
            write_json(&path, bundle)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let summary = dir.join(REPORT_CSV_FILE);
            fs::write(&summary, summary_csv(&bundle.report))?;
            let reductions = dir.join(REDUCTIONS_FILE);
            fs::write(&reductions, reductions_csv(&bundle.reductions))?;
            let throughput = dir.join(THROUGHPUT_CSV_FILE);
            fs::write(&throughput, throughput_csv(&bundle.throughput))?;
            Ok(vec![summary, reductions, throughput])
        }
        ReportFormat::TextTable => {
            let path = dir.join(REPORT_TEXT_FILE);
            fs::write(&path, report_text(bundle))?;
            Ok(vec![path])
        }
    }
}

// ---------------------------------------------------------------------------
// Stage execution
// ---------------------------------------------------------------------------

/// Artifacts and manifest of one executed stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    /// Experiment directory the stage ran in.
    pub dir: PathBuf,
    /// The manifest that was written.
    pub manifest: ExperimentManifest,
    /// Path of the manifest file.
    pub manifest_path: PathBuf,
}

struct StageRun {
    artifacts: Vec<&'static str>,
    inputs: BTreeMap<String, String>,
    input_model: Option<String>,
    timings_ms: BTreeMap<String, u64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Artifact(format!("{} is corrupt: {e}", path.display())))
}

fn ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Run one pipeline stage for `config`, placing artifacts in the
/// content-addressed experiment directory under `out_root`.
///
/// Downstream stages verify their upstream manifests and artifact checksums
/// first; outputs are byte-stable given an identical config and tool
/// version.
pub fn run_stage(stage: Stage, config: &ExperimentConfig, out_root: &Path) -> Result<StageOutcome> {
    config.validate()?;
    let hash = config_hash(config);
    let dir = experiment_dir(out_root, config);
    fs::create_dir_all(&dir)?;
    let total = Instant::now();
    let mut run = match stage {
        Stage::Compress => run_compress(config, &dir)?,
        Stage::Map => run_map(config, &dir, &hash)?,
        Stage::Simulate => run_simulate(config, &dir, &hash)?,
        Stage::Eic => run_eic(config, &dir, &hash)?,
        Stage::Report => run_report(config, &dir, &hash)?,
    };
    run.timings_ms.insert("total".into(), ms(total));

    let mut outputs = BTreeMap::new();
    for name in &run.artifacts {
        outputs.insert((*name).to_string(), file_sha256(&dir.join(name))?);
    }
    let manifest = ExperimentManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        stage,
        config_hash: hash,
        seed: config.compression.seed,
        input_model: run.input_model,
        inputs: run.inputs,
        outputs,
        timings_ms: run.timings_ms,
    };
    let manifest_path = dir.join(stage.manifest_file());
    write_json(&manifest_path, &manifest)?;
    Ok(StageOutcome { dir, manifest, manifest_path })
}

fn run_compress(config: &ExperimentConfig, dir: &Path) -> Result<StageRun> {
    let cc = &config.compression;
    fs::write(dir.join(CONFIG_FILE), config.to_json() + "\n")?;

    let data = generate(&cc.dataset, cc.seed);
    let mut model = build_configured_model(cc)?;

    let t = Instant::now();
    let pretrain = train_plain(
        &mut model,
        &data.train,
        cc.pretrain_epochs,
        cc.lr as f32,
        cc.batch_size,
        cc.seed,
    )?;
    let pretrain_ms = ms(t);
    let baseline_accuracy = model.accuracy(&data.test)?;

    let t = Instant::now();
    let snapshot = dir.join(DIVERGED_FILE);
    let outcome = compress_model(&mut model, &data.train, cc, Some(snapshot.as_path()))?;
    let compress_ms = ms(t);
    let compressed_accuracy = model.accuracy(&data.test)?;

    // A violation here is a stage failure (exit class 3), not a report line.
    let report = verify_constraints(&model, &outcome.layers)?;
    let violations = report.violations.len();
    report.into_result()?;

    write_tensors(&dir.join(MODEL_FILE), &model_tensors(&model))?;
    let signs: Vec<SignBitmap> = outcome
        .layers
        .iter()
        .map(|l| SignBitmap::from_layout(&l.name, &l.layout))
        .collect();
    write_signs(&dir.join(SIGNS_FILE), &signs)?;
    let summary = CompressSummary {
        layers: outcome.layers,
        phases: outcome.phases.iter().map(PhaseSummary::from).collect(),
        pretrain_losses: pretrain.epoch_losses,
        baseline_accuracy,
        compressed_accuracy,
        violations,
    };
    write_json(&dir.join(COMPRESS_SUMMARY_FILE), &summary)?;

    Ok(StageRun {
        artifacts: vec![CONFIG_FILE, MODEL_FILE, SIGNS_FILE, COMPRESS_SUMMARY_FILE],
        inputs: BTreeMap::new(),
        input_model: None,
        timings_ms: BTreeMap::from([
            ("pretrain".into(), pretrain_ms),
            ("compress".into(), compress_ms),
        ]),
    })
}

fn run_map(config: &ExperimentConfig, dir: &Path, hash: &str) -> Result<StageRun> {
    let inputs = require_upstream(dir, Stage::Map, hash)?;
    let summary: CompressSummary = read_json(&dir.join(COMPRESS_SUMMARY_FILE))?;
    let tensors = read_tensors(&dir.join(MODEL_FILE))?;
    let mut model = build_configured_model(&config.compression)?;
    load_weights(&mut model, &tensors)?;

    let t = Instant::now();
    let mapped = map_model(&model, &summary.layers, &config.crossbar()?)?;
    let map_ms = ms(t);
    write_mapped(dir, &mapped)?;
    fs::write(dir.join(REDUCTIONS_FILE), reductions_csv(&reduction_rows(&mapped)?))?;

    Ok(StageRun {
        artifacts: vec![MAPPED_META_FILE, MAPPED_CELLS_FILE, MAPPED_SIGNS_FILE, REDUCTIONS_FILE],
        inputs,
        input_model: Some(MODEL_FILE.into()),
        timings_ms: BTreeMap::from([("map".into(), map_ms)]),
    })
}

fn run_simulate(config: &ExperimentConfig, dir: &Path, hash: &str) -> Result<StageRun> {
    let inputs = require_upstream(dir, Stage::Simulate, hash)?;
    let summary: CompressSummary = read_json(&dir.join(COMPRESS_SUMMARY_FILE))?;
    let tensors = read_tensors(&dir.join(MODEL_FILE))?;
    let mut model = build_configured_model(&config.compression)?;
    load_weights(&mut model, &tensors)?;
    let mapped = read_mapped(dir)?;

    let data = generate(&config.compression.dataset, config.compression.seed);
    let opts = config.sim;
    let perturbation = if opts.sigma > 0.0 {
        perturb(&mapped, opts.sigma, opts.seed)
    } else {
        Perturbation::ideal()
    };

    let t = Instant::now();
    let run = simulate_accuracy(&model, &mapped, &data.test, config.eval_limit, &perturbation, &opts)?;
    let sim_ms = ms(t);

    let workload = NetworkWorkload::from_run(&mapped, &run.stats, run.samples as u64)?;
    write_json(&dir.join(STATS_FILE), &run.stats)?;
    write_json(&dir.join(WORKLOAD_FILE), &workload)?;
    write_json(
        &dir.join(SIM_SUMMARY_FILE),
        &SimSummary {
            accuracy: run.accuracy,
            samples: run.samples,
            baseline_accuracy: summary.baseline_accuracy,
            compressed_accuracy: summary.compressed_accuracy,
            options: opts,
        },
    )?;

    Ok(StageRun {
        artifacts: vec![STATS_FILE, WORKLOAD_FILE, SIM_SUMMARY_FILE],
        inputs,
        input_model: Some(MODEL_FILE.into()),
        timings_ms: BTreeMap::from([("simulate".into(), sim_ms)]),
    })
}

/// Header of the EIC histogram CSV.
pub const EIC_CSV_HEADER: &str = "layer,fragment_size,eic,count";

fn run_eic(_config: &ExperimentConfig, dir: &Path, hash: &str) -> Result<StageRun> {
    let inputs = require_upstream(dir, Stage::Eic, hash)?;
    let meta: MappedMeta = read_json(&dir.join(MAPPED_META_FILE))?;
    let stats: SimStats = read_json(&dir.join(STATS_FILE))?;
    if meta.layers.len() != stats.layers.len() {
        return Err(Error::Artifact(format!(
            "{} mapped layers vs {} stat entries",
            meta.layers.len(),
            stats.layers.len()
        )));
    }
    let mut out = String::from(EIC_CSV_HEADER);
    out.push('\n');
    for (ml, ls) in meta.layers.iter().zip(&stats.layers) {
        for (eic, &count) in ls.eic.histogram.iter().enumerate() {
            if count > 0 {
                out.push_str(&format!(
                    "{},{},{eic},{count}\n",
                    csv_field(&ml.name),
                    ml.layout.fragment_size
                ));
            }
        }
    }
    fs::write(dir.join(EIC_FILE), out)?;

    Ok(StageRun {
        artifacts: vec![EIC_FILE],
        inputs,
        input_model: None,
        timings_ms: BTreeMap::new(),
    })
}

fn run_report(config: &ExperimentConfig, dir: &Path, hash: &str) -> Result<StageRun> {
    let inputs = require_upstream(dir, Stage::Report, hash)?;
    let mapped = read_mapped(dir)?;
    let stats: SimStats = read_json(&dir.join(STATS_FILE))?;
    let workload: NetworkWorkload = read_json(&dir.join(WORKLOAD_FILE))?;
    // structure only: pooling flags don't depend on the trained weights
    let model = build_configured_model(&config.compression)?;

    let hw = config.hardware()?;
    let optimized = PerfConfig { hardware: hw.clone(), toggles: config.toggles() };
    let baseline = PerfConfig {
        hardware: hardware_by_name(&config.baseline)?,
        toggles: OptimizationToggles::NONE,
    };
    let speedup = speedup_compare(&baseline, &optimized, &workload);
    let report = sim_report(
        &mapped,
        &stats,
        &pooling_flags(&model),
        &hw,
        workload.frames,
        Some(speedup),
    )?;
    let bundle = ReportBundle {
        report,
        reductions: reduction_rows(&mapped)?,
        throughput: published_throughput_table(),
    };
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::TextTable] {
        emit_report(&bundle, format, dir)?;
    }

    Ok(StageRun {
        artifacts: vec![REPORT_JSON_FILE, REPORT_CSV_FILE, REDUCTIONS_FILE, THROUGHPUT_CSV_FILE, REPORT_TEXT_FILE],
        inputs,
        input_model: None,
        timings_ms: BTreeMap::new(),
    })
}

// ---------------------------------------------------------------------------
// Self-test
// ---------------------------------------------------------------------------

/// One passed self-test check.
#[derive(Debug, Clone, Serialize)]
pub struct SelftestCheck {
    /// Suite name.
    pub name: &'static str,
    /// What was verified.
    pub detail: String,
}

fn selftest_err(name: &str, detail: String) -> Error {
    Error::OracleMismatch(format!("{name}: {detail}"))
}

/// Random single-layer fixture: a feasible polarized+quantized mapped layer
/// plus an input vector, drawn from the deterministic stream `(seed, index)`.
fn random_mapped_layer(
    seed: u64,
    index: u64,
    max_dim: usize,
    m: usize,
    quant_bits: u32,
) -> Result<(MappedLayer, Vec<u16>)> {
    use rand::Rng as _;
    let mut rng = stream(seed, StreamKind::Init, index, m as u64);
    let rows = rng.gen_range(1..=max_dim);
    let cols = rng.gen_range(1..=max_dim);
    let delta = 0.25f32;
    let max_level = (1u32 << (quant_bits - 1)) - 1;
    let groups = rows.div_ceil(m);
    // per (column, fragment) sign, then on-grid magnitudes with that sign
    let signs: Vec<Sign> = (0..cols * groups)
        .map(|_| if rng.gen_bool(0.5) { Sign::Minus } else { Sign::Plus })
        .collect();
    let mut vals = vec![0.0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let sign = signs[c * groups + r / m];
            let level = rng.gen_range(0..=max_level);
            vals[r * cols + c] = sign.factor() * level as f32 * delta;
        }
    }
    let view = Matrix::from_vec(rows, cols, vals)?;
    let shape = WeightShape::Dense { outputs: cols, inputs: rows };
    let mut layout = FragmentLayout::full(&view, &shape, Default::default(), m)?;
    layout.signs = signs;
    let meta = CompressedLayer {
        name: "random".into(),
        layer_index: 0,
        layout,
        polarized: true,
        quant_bits,
        quant_scale: Some(delta),
        alpha: 1.0,
        beta: 1.0,
        rho: 1e-2,
    };
    let bias = vec![0.0f32; cols];
    let ml = map_layer(&view, &bias, &meta, &CrossbarSpec::default())?;
    let codes: Vec<u16> = (0..rows).map(|_| rng.gen_range(0..=u16::MAX)).collect();
    Ok((ml, codes))
}

/// Run the invariant suites against their oracles.
///
/// Each suite recomputes its expected values independently of the code under
/// test; any disagreement is an oracle-equivalence failure (exit class 4).
pub fn selftest() -> Result<Vec<SelftestCheck>> {
    let mut checks = Vec::new();

    // 1. Cell slicing round-trips every 8-bit level.
    for level in 0u32..=255 {
        let back = unslice(&bit_slice(level, 8, 2), 2);
        if back != level {
            return Err(selftest_err("bit-slicing", format!("{level} decoded as {back}")));
        }
    }
    checks.push(SelftestCheck {
        name: "bit-slicing",
        detail: "256 8-bit levels slice and reassemble exactly".into(),
    });

    // 2. Array-reduction arithmetic on the hand-derived reference table.
    let xb = CrossbarSpec::default();
    for (fr, fc, kr, kc, expect) in reduction_reference_cases() {
        let got = reduction_for_dims("ref", fr, fc, kr, kc, 8, &xb)?.reduction;
        if (got - expect).abs() > 1e-9 {
            return Err(selftest_err(
                "reduction",
                format!("({fr},{fc})->({kr},{kc}): got {got}, want {expect}"),
            ));
        }
    }
    checks.push(SelftestCheck {
        name: "reduction",
        detail: "10 reference layers reproduce their array reductions exactly".into(),
    });

    // 3. Cycle-time design points.
    for (cols, ghz, want) in [(32.0, 2.1, 15.24), (128.0, 1.2, 106.67)] {
        let got = cycle_time_ns(cols, ghz);
        if (got - want).abs() > 0.1 {
            return Err(selftest_err(
                "cycle-time",
                format!("{cols} cols/ADC at {ghz} GHz: got {got} ns, want {want} ns"),
            ));
        }
    }
    checks.push(SelftestCheck {
        name: "cycle-time",
        detail: "both design points within 0.1 ns of their published values".into(),
    });

    // 4. Bit-serial simulation equals the integer oracle on random layers.
    let opts = SimOptions { adc_bits: 16, sigma: 0.0, ..SimOptions::default() };
    let no_skip = SimOptions { zero_skip: false, ..opts };
    let mut layers = 0u32;
    for index in 0..60u64 {
        let m = [4usize, 8, 16][(index % 3) as usize];
        let (ml, codes) = random_mapped_layer(7, index, 32, m, 8)?;
        let oracle = reference_mvm(&ml, &codes);
        let mut stats = LayerSimStats::new("random", opts.requant.bits);
        let skipped = simulate_mvm(&ml, &codes, None, &opts, &mut stats)?;
        if skipped != oracle {
            return Err(selftest_err("oracle", format!("layer {index}: skip-enabled mismatch")));
        }
        let mut stats_full = LayerSimStats::new("random", opts.requant.bits);
        let full = simulate_mvm(&ml, &codes, None, &no_skip, &mut stats_full)?;
        if full != oracle {
            return Err(selftest_err("oracle", format!("layer {index}: full-stream mismatch")));
        }
        // cycles saved by skipping = sum over fragments of (input_bits - EIC)
        let saved: u64 = codes
            .chunks(m)
            .map(|frag| {
                let eic = frag.iter().map(|&c| u64::from(effective_bits(c))).max().unwrap_or(0);
                u64::from(opts.requant.bits) - eic
            })
            .sum();
        if stats_full.fragment_cycles - stats.fragment_cycles != saved {
            return Err(selftest_err(
                "oracle",
                format!("layer {index}: skip saved {} cycles, expected {saved}",
                    stats_full.fragment_cycles - stats.fragment_cycles),
            ));
        }
        layers += 1;
    }
    checks.push(SelftestCheck {
        name: "oracle",
        detail: format!(
            "{layers} random layers bit-identical to the integer oracle, with and without skipping"
        ),
    });

    // 5. Container formats round-trip bit-exactly.
    let tensors = vec![NamedTensor {
        name: "t".into(),
        dims: vec![2, 3],
        data: vec![1.5, -2.0, 0.0, -0.0, f32::MIN_POSITIVE, 3.25],
    }];
    let back = crate::container::decode_tensors(&crate::container::encode_tensors(&tensors))?;
    let same = back.len() == 1
        && back[0].name == tensors[0].name
        && back[0].dims == tensors[0].dims
        && back[0]
            .data
            .iter()
            .zip(&tensors[0].data)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    if !same {
        return Err(selftest_err("container", "tensor round-trip altered payload".into()));
    }
    let cells = vec![CellMatrix { name: "c".into(), dims: vec![4], data: vec![0, 1, 2, 3] }];
    if crate::container::decode_cells(&crate::container::encode_cells(&cells))? != cells {
        return Err(selftest_err("container", "cell round-trip altered payload".into()));
    }
    checks.push(SelftestCheck {
        name: "container",
        detail: "tensor and cell containers round-trip bit-exactly".into(),
    });

    // 6. Chip budget rows and energy identities.
    let hw = HardwareSpec::polarized(8)?;
    let chip_mw = hw.chip_power_mw();
    if (chip_mw - 66360.8).abs() > 1e-6 {
        return Err(selftest_err("budget", format!("chip power {chip_mw} mW, want 66360.8")));
    }
    let tile = hw.budget.mcu_block.power_mw + hw.digital_unit.power_mw;
    if (tile - hw.budget.tile.power_mw).abs() > 1e-9 {
        return Err(selftest_err(
            "budget",
            format!("tile row {} != MAC block + digital unit {tile}", hw.budget.tile.power_mw),
        ));
    }
    checks.push(SelftestCheck {
        name: "budget",
        detail: "power budget rows sum exactly across the hierarchy".into(),
    });

    Ok(checks)
}
