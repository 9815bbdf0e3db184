//! Analytical timing, energy, area, and throughput model.
//!
//! Everything here is arithmetic over two kinds of inputs: measured run
//! statistics ([`crate::sim::SimStats`]) and hardware constant tables
//! ([`HardwareSpec`]). No weights or activations are touched — the
//! cycle-level work happens in [`crate::sim`]; this module prices it.
//!
//! Three views are produced:
//!
//! * **Latency** — bit-plane cycles per layer ([`layer_latency`]) priced at
//!   the ADC-sharing cycle time ([`cycle_time_ns`]), plus a fixed pipeline
//!   fill per frame (22 stages, 26 when the layer feeds a pooling step).
//! * **Energy** — component power constants split into a static share
//!   charged for wall time and a dynamic share scaled by activity
//!   ([`energy_estimate`]); skipped input planes contribute no dynamic
//!   drive or conversion energy.
//! * **Throughput** — a fluid steady-state model in units of ADC
//!   conversions: each optimization (pruning, quantization, polarization,
//!   zero-skipping) scales the conversion count multiplicatively, so frame
//!   rate ratios decompose exactly into per-optimization factors
//!   ([`speedup_compare`]).
//!
//! The published cross-design comparison figures (normalized
//! GOPs/(s·mm²) and GOPs/W for isaac, puma, dadiannao, …) are carried as a
//! constants table ([`published_throughput_table`]) and flagged
//! `constant_driven`: this simulator checks their internal ratio arithmetic
//! but does not re-measure them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{MappedModel, BASELINE_WEIGHT_BITS};
use crate::model::{Layer, ModelGraph};
use crate::sim::{LayerSimStats, SimStats};

// ---------------------------------------------------------------------------
// Hardware constants
// ---------------------------------------------------------------------------

/// One catalog row: instance count per enclosing unit and the cost of all
/// instances together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    /// Instances per enclosing unit (MAC unit, tile, or chip).
    pub count: u32,
    /// Power of all `count` instances together, in mW.
    pub power_mw: f64,
    /// Area of all `count` instances together, in mm².
    pub area_mm2: f64,
    /// Clock in GHz; 0 for unclocked components.
    pub freq_ghz: f64,
}

impl ComponentSpec {
    /// Catalog row.
    #[must_use]
    pub const fn new(count: u32, power_mw: f64, area_mm2: f64, freq_ghz: f64) -> Self {
        ComponentSpec { count, power_mw, area_mm2, freq_ghz }
    }

    /// Zero row for a component a design does not have.
    #[must_use]
    pub const fn absent() -> Self {
        ComponentSpec { count: 0, power_mw: 0.0, area_mm2: 0.0, freq_ghz: 0.0 }
    }
}

/// One aggregate budget row (power + area) taken as given.
///
/// The source figures round component entries, so aggregate *area* rows do
/// not reproduce by summing parts (e.g. a tile's area row is smaller than
/// its MAC block plus digital unit); power rows do sum. Both are therefore
/// stored verbatim rather than derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    /// Power in mW.
    pub power_mw: f64,
    /// Area in mm².
    pub area_mm2: f64,
}

/// Aggregate chip budget rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipBudget {
    /// All MAC units of one tile together.
    pub mcu_block: BudgetRow,
    /// One tile: MAC-unit block plus its digital unit.
    pub tile: BudgetRow,
    /// All tiles of the chip (excludes off-chip links).
    pub tile_array: BudgetRow,
}

/// Hardware description: per-component constants, hierarchy counts, and
/// aggregate budget rows. Loadable from a config file so the constants can
/// be overridden per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareSpec {
    /// Design name used in reports.
    pub name: String,
    /// ADC resolution in bits.
    pub adc_bits: u32,
    /// ADC conversion rate in GHz.
    pub adc_freq_ghz: f64,
    /// ADCs per MAC unit.
    pub adc: ComponentSpec,
    /// Input drivers per MAC unit.
    pub dac: ComponentSpec,
    /// Sample-and-hold circuits per MAC unit.
    pub sample_hold: ComponentSpec,
    /// Crossbar arrays per MAC unit.
    pub crossbar_array: ComponentSpec,
    /// Shift-and-add units per MAC unit.
    pub shift_add: ComponentSpec,
    /// Input zero-skipping logic per MAC unit (zero row when absent).
    pub skip_logic: ComponentSpec,
    /// Fragment sign store per MAC unit (zero row when absent).
    pub sign_indicator: ComponentSpec,
    /// Per-tile digital unit (buffers, bus, activation and pooling logic;
    /// the tile's local memory cost is folded into this given row).
    pub digital_unit: ComponentSpec,
    /// Separate per-tile memory row for designs that report one (zero row
    /// when the digital-unit row already covers it).
    pub edram: ComponentSpec,
    /// Off-chip links, one row per chip.
    pub links: ComponentSpec,
    /// Crossbar arrays per MAC unit.
    pub crossbars_per_mcu: u32,
    /// MAC units per tile.
    pub mcus_per_tile: u32,
    /// Tiles per chip.
    pub tiles: u32,
    /// Crossbar rows.
    pub crossbar_rows: u32,
    /// Crossbar columns.
    pub crossbar_cols: u32,
    /// Bits stored per cell.
    pub cell_bits: u32,
    /// Tile-local activation memory in KB.
    pub edram_kb_per_tile: u32,
    /// Rows summed per analog conversion (the fragment size the ADC
    /// resolution was chosen for; a full column when fragments are not
    /// used).
    pub fragment_size: u32,
    /// Physical columns per logical weight column: 2.0 when signed weights
    /// need a differential/offset column pair, 1.0 when per-fragment signs
    /// are held in the sign-indicator array.
    pub column_occupancy: f64,
    /// Fraction of every component's power charged for full wall time; the
    /// remainder scales with activity.
    pub static_fraction: f64,
    /// Aggregate budget rows taken as given.
    pub budget: ChipBudget,
}

impl HardwareSpec {
    /// Fragment-polarized design point at fragment size `m` in {4, 8, 16}
    /// (ADC resolution 3/4/5 bits respectively).
    ///
    /// The component table is published for the `m = 8` point (4-bit ADCs at
    /// 2.1 GHz, 32 per MAC unit); the other sizes reuse it with only the ADC
    /// resolution and conversion-group size adjusted.
    pub fn polarized(fragment_size: u32) -> Result<Self> {
        let adc_bits = match fragment_size {
            4 => 3,
            8 => 4,
            16 => 5,
            other => {
                return Err(Error::Config(format!(
                    "no ADC sizing for fragment size {other}; supported: 4, 8, 16"
                )))
            }
        };
        Ok(HardwareSpec {
            name: format!("polarized-m{fragment_size}"),
            adc_bits,
            adc_freq_ghz: 2.1,
            adc: ComponentSpec::new(32, 15.2, 0.0091, 2.1),
            dac: ComponentSpec::new(8 * 128, 4.0, 0.00017, 0.0),
            sample_hold: ComponentSpec::new(8 * 128, 0.0055, 0.000_023, 0.0),
            crossbar_array: ComponentSpec::new(8, 2.44, 0.00024, 0.0),
            shift_add: ComponentSpec::new(4, 0.2, 0.000_024, 0.0),
            skip_logic: ComponentSpec::new(1, 0.01, 0.000_000_1, 0.0),
            sign_indicator: ComponentSpec::new(1, 0.012, 0.000_003_1, 0.0),
            digital_unit: ComponentSpec::new(1, 53.05, 0.25, 0.0),
            edram: ComponentSpec::absent(),
            links: ComponentSpec::new(4, 10400.0, 22.88, 1.6),
            crossbars_per_mcu: 8,
            mcus_per_tile: 12,
            tiles: 168,
            crossbar_rows: 128,
            crossbar_cols: 128,
            cell_bits: 2,
            edram_kb_per_tile: 128,
            fragment_size,
            column_occupancy: 1.0,
            static_fraction: 0.5,
            budget: ChipBudget {
                mcu_block: BudgetRow { power_mw: 280.05, area_mm2: 0.152 },
                tile: BudgetRow { power_mw: 333.1, area_mm2: 0.39 },
                tile_array: BudgetRow { power_mw: 55960.8, area_mm2: 66.27 },
            },
        })
    }

    /// Whole-column baseline design: one 8-bit 1.2 GHz ADC per crossbar,
    /// signed weights mapped as a 2x column-occupancy offset pair, no input
    /// skipping.
    #[must_use]
    pub fn isaac() -> Self {
        HardwareSpec {
            name: "isaac".into(),
            adc_bits: 8,
            adc_freq_ghz: 1.2,
            adc: ComponentSpec::new(8, 16.0, 0.0096, 1.2),
            dac: ComponentSpec::new(8 * 128, 4.0, 0.00017, 0.0),
            sample_hold: ComponentSpec::new(8 * 128, 0.01, 0.00004, 0.0),
            crossbar_array: ComponentSpec::new(8, 2.43, 0.00023, 0.0),
            shift_add: ComponentSpec::new(4, 0.2, 0.000_024, 0.0),
            skip_logic: ComponentSpec::absent(),
            sign_indicator: ComponentSpec::absent(),
            digital_unit: ComponentSpec::new(1, 40.85, 0.213, 0.0),
            edram: ComponentSpec::absent(),
            links: ComponentSpec::new(4, 10400.0, 22.88, 1.6),
            crossbars_per_mcu: 8,
            mcus_per_tile: 12,
            tiles: 168,
            crossbar_rows: 128,
            crossbar_cols: 128,
            cell_bits: 2,
            edram_kb_per_tile: 64,
            fragment_size: 128,
            column_occupancy: 2.0,
            static_fraction: 0.5,
            budget: ChipBudget {
                mcu_block: BudgetRow { power_mw: 288.96, area_mm2: 0.1580 },
                tile: BudgetRow { power_mw: 329.81, area_mm2: 0.370 },
                tile_array: BudgetRow { power_mw: 55408.08, area_mm2: 62.21 },
            },
        }
    }

    /// Check that every constant is in range.
    pub fn validate(&self) -> Result<()> {
        let components = [
            ("adc", &self.adc),
            ("dac", &self.dac),
            ("sample_hold", &self.sample_hold),
            ("crossbar_array", &self.crossbar_array),
            ("shift_add", &self.shift_add),
            ("skip_logic", &self.skip_logic),
            ("sign_indicator", &self.sign_indicator),
            ("digital_unit", &self.digital_unit),
            ("edram", &self.edram),
            ("links", &self.links),
        ];
        for (name, c) in components {
            if !(c.power_mw >= 0.0 && c.area_mm2 >= 0.0 && c.freq_ghz >= 0.0) {
                return Err(Error::Config(format!("{name}: negative constant")));
            }
        }
        let rows = [
            ("mcu_block", self.budget.mcu_block),
            ("tile", self.budget.tile),
            ("tile_array", self.budget.tile_array),
        ];
        for (name, r) in rows {
            if !(r.power_mw >= 0.0 && r.area_mm2 >= 0.0) {
                return Err(Error::Config(format!("budget {name}: negative constant")));
            }
        }
        if self.adc.count == 0 || self.adc_freq_ghz <= 0.0 {
            return Err(Error::Config("ADC count and frequency must be positive".into()));
        }
        if self.crossbars_per_mcu == 0
            || self.mcus_per_tile == 0
            || self.tiles == 0
            || self.crossbar_rows == 0
            || self.crossbar_cols == 0
            || self.fragment_size == 0
        {
            return Err(Error::Config("hierarchy counts must be positive".into()));
        }
        if !(self.column_occupancy >= 1.0) {
            return Err(Error::Config("column occupancy must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.static_fraction) {
            return Err(Error::Config("static fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Columns each ADC serves per bit plane.
    #[must_use]
    pub fn cols_per_adc(&self) -> f64 {
        f64::from(self.crossbars_per_mcu * self.crossbar_cols) / f64::from(self.adc.count)
    }

    /// Bit-plane cycle time in ns.
    #[must_use]
    pub fn cycle_time_ns(&self) -> f64 {
        cycle_time_ns(self.cols_per_adc(), self.adc_freq_ghz)
    }

    /// Bit-plane cycle time in seconds.
    #[must_use]
    pub fn cycle_time_s(&self) -> f64 {
        self.cycle_time_ns() * 1e-9
    }

    /// Chip power: tile-array row plus links row, in mW.
    #[must_use]
    pub fn chip_power_mw(&self) -> f64 {
        self.budget.tile_array.power_mw + self.links.power_mw
    }

    /// Chip area: tile-array row plus links row, in mm².
    #[must_use]
    pub fn chip_area_mm2(&self) -> f64 {
        self.budget.tile_array.area_mm2 + self.links.area_mm2
    }

    /// ADC conversions per second of one MAC unit.
    #[must_use]
    pub fn mcu_conversions_per_s(&self) -> f64 {
        f64::from(self.adc.count) * self.adc_freq_ghz * 1e9
    }

    /// ADC conversions per second of the whole chip.
    #[must_use]
    pub fn chip_conversions_per_s(&self) -> f64 {
        self.mcu_conversions_per_s() * f64::from(self.mcus_per_tile) * f64::from(self.tiles)
    }

    /// Sum of the per-MAC-unit component power rows (used only to split the
    /// given MAC-block budget row into activity classes).
    #[must_use]
    pub fn mcu_component_power_mw(&self) -> f64 {
        self.adc.power_mw
            + self.dac.power_mw
            + self.sample_hold.power_mw
            + self.crossbar_array.power_mw
            + self.shift_add.power_mw
            + self.skip_logic.power_mw
            + self.sign_indicator.power_mw
    }

    /// Fraction of MAC-unit power on the drive path (input drivers,
    /// sample-and-hold, crossbar arrays, skip logic).
    #[must_use]
    pub fn drive_fraction(&self) -> f64 {
        (self.dac.power_mw
            + self.sample_hold.power_mw
            + self.crossbar_array.power_mw
            + self.skip_logic.power_mw)
            / self.mcu_component_power_mw()
    }

    /// Fraction of MAC-unit power on the conversion path (ADCs,
    /// shift-and-add, sign indicators).
    #[must_use]
    pub fn convert_fraction(&self) -> f64 {
        (self.adc.power_mw + self.shift_add.power_mw + self.sign_indicator.power_mw)
            / self.mcu_component_power_mw()
    }
}

/// Bit-plane cycle time in ns: one ADC multiplexed over `cols_per_adc`
/// columns at `adc_freq_ghz` conversions per ns.
///
/// `(32, 2.1) -> 15.24 ns`; `(128, 1.2) -> 106.67 ns`.
#[must_use]
pub fn cycle_time_ns(cols_per_adc: f64, adc_freq_ghz: f64) -> f64 {
    cols_per_adc / adc_freq_ghz
}

// ---------------------------------------------------------------------------
// Latency
// ---------------------------------------------------------------------------

/// Pipeline depth in stages for a layer without pooling.
pub const PIPELINE_STAGES: u32 = 22;
/// Pipeline depth when a pooling step follows the layer.
pub const PIPELINE_STAGES_POOLING: u32 = 26;

/// Cycle and time cost of one layer's recorded activation stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Bit-plane compute cycles (sum over waves of the slowest row-group).
    pub compute_cycles: u64,
    /// One-off pipeline fill in cycles.
    pub fill_cycles: u64,
    /// `compute_cycles + fill_cycles`.
    pub total_cycles: u64,
}

impl LatencyReport {
    /// Wall time at the given cycle time.
    #[must_use]
    pub fn seconds(&self, spec: &HardwareSpec) -> f64 {
        self.total_cycles as f64 * spec.cycle_time_s()
    }
}

/// Latency of one layer over the stream its stats were recorded from, plus
/// one pipeline fill (22 stages, 26 when `pooling`).
///
/// The stats' wave cycles already reflect whether skipping was enabled
/// during the run; callers accounting for multiple frames charge one fill
/// per frame.
#[must_use]
pub fn layer_latency(stats: &LayerSimStats, pooling: bool, _spec: &HardwareSpec) -> LatencyReport {
    let fill = u64::from(if pooling { PIPELINE_STAGES_POOLING } else { PIPELINE_STAGES });
    LatencyReport {
        compute_cycles: stats.wave_cycles,
        fill_cycles: fill,
        total_cycles: stats.wave_cycles + fill,
    }
}

/// For each weighted layer, whether a pooling step runs before the next
/// weighted layer (those layers carry the deeper pipeline).
#[must_use]
pub fn pooling_flags(model: &ModelGraph) -> Vec<bool> {
    let mut flags = Vec::new();
    for (idx, layer) in model.layers.iter().enumerate() {
        if !matches!(layer, Layer::Conv { .. } | Layer::Dense { .. }) {
            continue;
        }
        let pooled = model.layers[idx + 1..]
            .iter()
            .take_while(|l| !matches!(l, Layer::Conv { .. } | Layer::Dense { .. }))
            .any(|l| matches!(l, Layer::MaxPool { .. }));
        flags.push(pooled);
    }
    flags
}

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

/// Time each hardware class spends busy, plus how much hardware is held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    /// Wall-clock seconds covered.
    pub wall_s: f64,
    /// Fractional tiles' worth of MAC-unit capacity allocated.
    pub mcu_tiles: f64,
    /// Seconds the drive path (input drivers, sample-and-hold, arrays, skip
    /// logic) is busy. Skipped planes do not count.
    pub drive_s: f64,
    /// Seconds the conversion path (ADCs, shift-and-add, sign indicators)
    /// is busy; scales with conversions performed.
    pub convert_s: f64,
    /// Seconds the digital units and links are busy.
    pub digital_s: f64,
}

/// Energy split two ways: static/dynamic and by hardware block. The two
/// partitions cover the same total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Energy charged for wall time regardless of activity, in J.
    pub static_j: f64,
    /// Activity-scaled energy, in J.
    pub dynamic_j: f64,
    /// MAC-unit blocks (arrays, converters, drivers), in J.
    pub mcu_j: f64,
    /// Tile digital units, in J.
    pub digital_j: f64,
    /// Off-chip link share, in J.
    pub link_j: f64,
}

impl EnergyBreakdown {
    /// Total energy in J.
    #[must_use]
    pub fn total_j(&self) -> f64 {
        self.static_j + self.dynamic_j
    }
}

/// Price an activity profile against a hardware spec.
///
/// Each block's power is the given budget row scaled by the allocation
/// (`mcu_tiles` tiles' worth; links are charged their chip fraction). Of
/// that power, `static_fraction` runs for the wall time and the remainder
/// scales with the block's busy time — the MAC block's dynamic share is
/// further split between the drive and conversion paths in proportion to
/// the component power rows. Zero activity therefore costs zero dynamic
/// energy, and skipped input planes (absent from `drive_s`/`convert_s`)
/// cost nothing.
#[must_use]
pub fn energy_estimate(spec: &HardwareSpec, activity: &ActivityProfile) -> EnergyBreakdown {
    let sf = spec.static_fraction;
    let dyn_f = 1.0 - sf;

    // Allocated power per block, in watts.
    let p_mcu = spec.budget.mcu_block.power_mw * activity.mcu_tiles * 1e-3;
    let p_dig = spec.digital_unit.power_mw * activity.mcu_tiles * 1e-3;
    let p_edram = spec.edram.power_mw * activity.mcu_tiles * 1e-3;
    let p_link = spec.links.power_mw * (activity.mcu_tiles / f64::from(spec.tiles)) * 1e-3;

    let mcu_active = spec.drive_fraction() * activity.drive_s
        + spec.convert_fraction() * activity.convert_s;
    let mcu_static = p_mcu * sf * activity.wall_s;
    let mcu_dyn = p_mcu * dyn_f * mcu_active;
    let digital_static = (p_dig + p_edram) * sf * activity.wall_s;
    let digital_dyn = (p_dig + p_edram) * dyn_f * activity.digital_s;
    let link_static = p_link * sf * activity.wall_s;
    let link_dyn = p_link * dyn_f * activity.digital_s;

    EnergyBreakdown {
        static_j: mcu_static + digital_static + link_static,
        dynamic_j: mcu_dyn + digital_dyn + link_dyn,
        mcu_j: mcu_static + mcu_dyn,
        digital_j: digital_static + digital_dyn,
        link_j: link_static + link_dyn,
    }
}

// ---------------------------------------------------------------------------
// Throughput metrics
// ---------------------------------------------------------------------------

/// Rate metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputMetrics {
    /// Billions of operations per second (2 ops per MAC).
    pub gops_per_s: f64,
    /// Area efficiency.
    pub gops_per_s_mm2: f64,
    /// Power efficiency.
    pub gops_per_w: f64,
}

/// Straight ratios: `ops` over `seconds`, normalized by area and power.
pub fn throughput_metrics(
    ops: f64,
    seconds: f64,
    power_w: f64,
    area_mm2: f64,
) -> Result<ThroughputMetrics> {
    if !(ops > 0.0) {
        return Err(Error::Range(format!("op count must be positive, got {ops}")));
    }
    if !(seconds > 0.0) {
        return Err(Error::Range(format!("duration must be positive, got {seconds}")));
    }
    if !(power_w > 0.0) || !(area_mm2 > 0.0) {
        return Err(Error::Range(format!(
            "power ({power_w} W) and area ({area_mm2} mm²) must be positive"
        )));
    }
    let gops_per_s = ops / seconds / 1e9;
    Ok(ThroughputMetrics {
        gops_per_s,
        gops_per_s_mm2: gops_per_s / area_mm2,
        gops_per_w: gops_per_s / power_w,
    })
}

// ---------------------------------------------------------------------------
// Workload and speedup composition
// ---------------------------------------------------------------------------

/// Which optimizations a priced configuration applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizationToggles {
    /// Structured pruning (kept rows/columns instead of dense dims).
    pub pruning: bool,
    /// Reduced-precision weights (fewer cell slices than the 32-bit
    /// baseline).
    pub quantization: bool,
    /// Fragment signs in an indicator array (single column occupancy)
    /// instead of a differential column pair.
    pub polarization: bool,
    /// Input bit planes cut to each fragment's effective input cycles.
    pub zero_skip: bool,
}

impl OptimizationToggles {
    /// Everything on.
    pub const ALL: Self = OptimizationToggles {
        pruning: true,
        quantization: true,
        polarization: true,
        zero_skip: true,
    };
    /// Everything off (dense 32-bit differential mapping, full bit waves).
    pub const NONE: Self = OptimizationToggles {
        pruning: false,
        quantization: false,
        polarization: false,
        zero_skip: false,
    };
}

/// Per-layer work ingredients distilled from a mapped model and a simulated
/// run: enough to price any toggle combination without re-simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWork {
    /// Layer name.
    pub name: String,
    /// Matrix-vector products in the recorded stream.
    pub waves: u64,
    /// Kept fragment row-groups per column.
    pub kept_groups: u64,
    /// Row-groups of the dense layer.
    pub full_groups: u64,
    /// Kept weight columns.
    pub kept_cols: u64,
    /// Dense weight columns.
    pub full_cols: u64,
    /// Kept weight rows (for MAC counting).
    pub kept_rows: u64,
    /// Σ effective input cycles over all recorded `(wave, group)` pairs.
    pub total_eic: u64,
    /// Recorded `(wave, group)` pairs.
    pub fragments: u64,
    /// Input bit width.
    pub input_bits: u32,
    /// Quantized weight width in bits.
    pub quant_bits: u32,
    /// Bits per cell.
    pub cell_bits: u32,
}

/// Workload distilled from one simulated run.
///
/// Effective-input-cycle stats record true values whether or not skipping
/// was enabled during the run, so the same workload prices both settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWorkload {
    /// Frames the stats cover.
    pub frames: u64,
    /// Per-layer ingredients.
    pub layers: Vec<LayerWork>,
}

impl NetworkWorkload {
    /// Distill a run: `mapped` supplies geometry, `stats` the measured
    /// stream, `frames` how many inputs the stats accumulate.
    pub fn from_run(mapped: &MappedModel, stats: &SimStats, frames: u64) -> Result<Self> {
        if mapped.layers.len() != stats.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} mapped layers vs {} stat entries",
                mapped.layers.len(),
                stats.layers.len()
            )));
        }
        if frames == 0 {
            return Err(Error::Config("workload must cover at least one frame".into()));
        }
        let layers = mapped
            .layers
            .iter()
            .zip(&stats.layers)
            .map(|(ml, ls)| LayerWork {
                name: ml.name.clone(),
                waves: ls.waves,
                kept_groups: ml.layout.frags_per_col() as u64,
                full_groups: ml.full_rows.div_ceil(ml.layout.fragment_size) as u64,
                kept_cols: ml.layout.kept_cols.len() as u64,
                full_cols: ml.full_cols as u64,
                kept_rows: ml.layout.kept_rows.len() as u64,
                total_eic: ls.eic.total_eic,
                fragments: ls.eic.fragments,
                input_bits: ls.eic.input_bits,
                quant_bits: ml.quant_bits,
                cell_bits: ml.cell_bits,
            })
            .collect();
        Ok(NetworkWorkload { frames, layers })
    }

    /// Operations in the recorded stream (2 per MAC on kept weights).
    #[must_use]
    pub fn ops(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| 2.0 * l.waves as f64 * l.kept_rows as f64 * l.kept_cols as f64)
            .sum()
    }

    /// ADC conversions to process the recorded stream under `toggles`.
    ///
    /// Per layer: `plane_cycles × columns × slices × occupancy`, where each
    /// toggle controls exactly one factor — pruning the group/column counts,
    /// quantization the slice count (off = 32-bit), polarization the
    /// occupancy (off = differential pair), zero-skipping the plane count
    /// (off = full input width; on = measured effective cycles, scaled to
    /// dense row-groups when pruning is off). Composition across toggles is
    /// therefore exactly multiplicative.
    #[must_use]
    pub fn conversions(&self, toggles: &OptimizationToggles) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                let groups =
                    if toggles.pruning { l.kept_groups } else { l.full_groups } as f64;
                let cols = if toggles.pruning { l.kept_cols } else { l.full_cols } as f64;
                let bits = if toggles.quantization { l.quant_bits } else { BASELINE_WEIGHT_BITS };
                let slices = f64::from(bits.div_ceil(l.cell_bits));
                let occupancy = if toggles.polarization { 1.0 } else { 2.0 };
                let plane_cycles = if toggles.zero_skip {
                    if l.kept_groups == 0 {
                        0.0
                    } else {
                        l.total_eic as f64 * (groups / l.kept_groups as f64)
                    }
                } else {
                    l.waves as f64 * groups * f64::from(l.input_bits)
                };
                plane_cycles * cols * slices * occupancy
            })
            .sum()
    }
}

/// A named hardware + optimization configuration to price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfConfig {
    /// Hardware constants.
    pub hardware: HardwareSpec,
    /// Optimizations applied.
    pub toggles: OptimizationToggles,
}

/// Steady-state frames per second of the fluid throughput model: chip
/// conversion capacity over conversions per frame. Assumes ideal
/// interconnect bandwidth.
#[must_use]
pub fn steady_state_fps(workload: &NetworkWorkload, config: &PerfConfig) -> f64 {
    let per_frame = workload.conversions(&config.toggles) / workload.frames as f64;
    config.hardware.chip_conversions_per_s() / per_frame
}

/// Frame-rate ratio between two configurations, decomposed per
/// optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupBreakdown {
    /// Baseline design name.
    pub baseline: String,
    /// Optimized design name.
    pub optimized: String,
    /// Work reduction from structured pruning.
    pub pruning: f64,
    /// Work reduction from weight quantization.
    pub quantization: f64,
    /// Work reduction from single-column signed mapping.
    pub polarization: f64,
    /// Cycle reduction from input zero-skipping.
    pub zero_skip: f64,
    /// Conversion-rate ratio of the two chips (1 on shared hardware).
    pub hardware: f64,
    /// Product of all factors; equals the steady-state fps ratio.
    pub total: f64,
}

/// Compare two configurations on one workload.
///
/// Factors are measured by toggling one optimization at a time, walking
/// from the baseline's toggles to the optimized ones in pipeline order
/// (pruning, quantization, polarization, zero-skipping); `total` is defined
/// as the product of the factors, and because consecutive work ratios
/// telescope it also equals the end-to-end fps ratio. Identical
/// configurations yield all-ones.
#[must_use]
pub fn speedup_compare(
    baseline: &PerfConfig,
    optimized: &PerfConfig,
    workload: &NetworkWorkload,
) -> SpeedupBreakdown {
    // Walk from the baseline's toggles to the optimized ones, one field per
    // step in pipeline order; each factor is the work ratio of consecutive
    // steps, so unchanged fields contribute exactly 1.
    let target = optimized.toggles;
    let mut cur = baseline.toggles;
    let mut states = [cur; 5];
    cur.pruning = target.pruning;
    states[1] = cur;
    cur.quantization = target.quantization;
    states[2] = cur;
    cur.polarization = target.polarization;
    states[3] = cur;
    cur.zero_skip = target.zero_skip;
    states[4] = cur;
    let works = states.map(|t| workload.conversions(&t));
    let factor = |i: usize| if states[i - 1] == states[i] { 1.0 } else { works[i - 1] / works[i] };
    let (pruning, quantization, polarization, zero_skip) =
        (factor(1), factor(2), factor(3), factor(4));
    let hardware =
        optimized.hardware.chip_conversions_per_s() / baseline.hardware.chip_conversions_per_s();
    SpeedupBreakdown {
        baseline: baseline.hardware.name.clone(),
        optimized: optimized.hardware.name.clone(),
        pruning,
        quantization,
        polarization,
        zero_skip,
        hardware,
        total: pruning * quantization * polarization * zero_skip * hardware,
    }
}

// ---------------------------------------------------------------------------
// Run report
// ---------------------------------------------------------------------------

/// Rolled-up report of one simulated run on one hardware configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Hardware design name.
    pub design: String,
    /// Frames processed.
    pub frames: u64,
    /// Compute plus pipeline-fill cycles.
    pub total_cycles: u64,
    /// Wall time of the run in seconds.
    pub wall_time_s: f64,
    /// Wall time per frame; `fps` is its reciprocal.
    pub frame_latency_s: f64,
    /// Frames per second.
    pub fps: f64,
    /// Energy breakdown.
    pub energy: EnergyBreakdown,
    /// Mean power (total energy over wall time), in W.
    pub power_w: f64,
    /// Allocated area (tiles held by the mapping plus their link share),
    /// in mm².
    pub area_mm2: f64,
    /// Rate metrics over the run.
    pub throughput: ThroughputMetrics,
    /// Optional comparison against a named baseline.
    pub speedup: Option<SpeedupBreakdown>,
    /// Modeling caveats attached to the report.
    pub notes: Vec<String>,
}

/// Roll one run up into a report.
///
/// `pooling` flags which mapped layers feed a pooling step (see
/// [`pooling_flags`]); each frame is charged one pipeline fill per layer.
/// Cycle counts view the run as executing serially on the allocated arrays;
/// the activity-based energy model and fluid throughput metrics follow from
/// that wall time.
pub fn sim_report(
    mapped: &MappedModel,
    stats: &SimStats,
    pooling: &[bool],
    spec: &HardwareSpec,
    frames: u64,
    speedup: Option<SpeedupBreakdown>,
) -> Result<SimReport> {
    spec.validate()?;
    if pooling.len() != mapped.layers.len() || mapped.layers.len() != stats.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} mapped layers vs {} stat entries vs {} pooling flags",
            mapped.layers.len(),
            stats.layers.len(),
            pooling.len()
        )));
    }
    if frames == 0 {
        return Err(Error::Config("report needs at least one frame".into()));
    }

    let compute_cycles: u64 = stats.layers.iter().map(|l| l.wave_cycles).sum();
    let fill_per_frame: u64 = pooling
        .iter()
        .map(|&p| u64::from(if p { PIPELINE_STAGES_POOLING } else { PIPELINE_STAGES }))
        .sum();
    let total_cycles = compute_cycles + frames * fill_per_frame;
    if total_cycles == 0 {
        return Err(Error::Config("empty run: no cycles recorded".into()));
    }
    let wall_s = total_cycles as f64 * spec.cycle_time_s();

    // Allocation and activity.
    let alloc_mcus =
        mapped.total_crossbars() as f64 / f64::from(spec.crossbars_per_mcu);
    let mcu_tiles = alloc_mcus / f64::from(spec.mcus_per_tile);
    let conversions: f64 = stats.layers.iter().map(|l| l.adc_samples as f64).sum();
    let busy_s = (conversions / (alloc_mcus * spec.mcu_conversions_per_s())).min(wall_s);
    let activity = ActivityProfile {
        wall_s,
        mcu_tiles,
        drive_s: busy_s,
        convert_s: busy_s,
        digital_s: wall_s,
    };
    let energy = energy_estimate(spec, &activity);
    let power_w = energy.total_j() / wall_s;
    let area_mm2 = spec.budget.tile.area_mm2 * mcu_tiles
        + spec.links.area_mm2 * (mcu_tiles / f64::from(spec.tiles));

    let macs: f64 = mapped
        .layers
        .iter()
        .zip(&stats.layers)
        .map(|(ml, ls)| {
            ls.waves as f64 * ml.layout.kept_rows.len() as f64 * ml.layout.kept_cols.len() as f64
        })
        .sum();
    let throughput = throughput_metrics(2.0 * macs, wall_s, power_w, area_mm2)?;

    Ok(SimReport {
        design: spec.name.clone(),
        frames,
        total_cycles,
        wall_time_s: wall_s,
        frame_latency_s: wall_s / frames as f64,
        fps: frames as f64 / wall_s,
        energy,
        power_w,
        area_mm2,
        throughput,
        speedup,
        notes: vec![
            "fluid throughput model: ideal interconnect bandwidth assumed".into(),
            "cross-design table rows are carried published constants, not re-measured".into(),
        ],
    })
}

// ---------------------------------------------------------------------------
// Published cross-design constants
// ---------------------------------------------------------------------------

/// One row of the cross-design comparison table, normalized to the isaac
/// baseline. `constant_driven` rows are carried published figures: the
/// toolkit checks their ratio arithmetic, it does not re-measure them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    /// Design name.
    pub design: String,
    /// Normalized area efficiency (GOPs/(s·mm²), isaac = 1).
    pub gops_per_s_mm2: f64,
    /// Normalized power efficiency (GOPs/W, isaac = 1).
    pub gops_per_w: f64,
    /// True when the row is a carried constant rather than a measurement.
    pub constant_driven: bool,
    /// Caveats.
    pub note: String,
}

impl ThroughputRow {
    fn constant(design: &str, mm2: f64, w: f64, note: &str) -> Self {
        ThroughputRow {
            design: design.into(),
            gops_per_s_mm2: mm2,
            gops_per_w: w,
            constant_driven: true,
            note: note.into(),
        }
    }
}

/// Published peak-throughput comparison, normalized to isaac.
///
/// The pruned/quantized rows presuppose ideal interconnect bandwidth; the
/// polarized rows correspond to this toolkit's design at fragment sizes 8
/// and 16.
#[must_use]
pub fn published_throughput_table() -> Vec<ThroughputRow> {
    vec![
        ThroughputRow::constant("isaac", 1.0, 1.0, "normalization baseline"),
        ThroughputRow::constant("dadiannao", 0.13, 0.45, "digital design"),
        ThroughputRow::constant("puma", 0.70, 0.79, ""),
        ThroughputRow::constant("tpu", 0.08, 0.48, "commercial digital design"),
        ThroughputRow::constant("wax", 0.33, 2.3, "trades throughput for efficiency at 0.2 GHz"),
        ThroughputRow::constant(
            "simba",
            0.34,
            2.5,
            "power efficiency published as a 0.08-2.5 range over voltage/frequency scaling; \
             upper end carried",
        ),
        ThroughputRow::constant("polarized-m8 (polarization only)", 0.54, 0.61, ""),
        ThroughputRow::constant("polarized-m16 (polarization only)", 0.77, 0.84, ""),
        ThroughputRow::constant(
            "pruned/quantized isaac",
            26.4,
            26.61,
            "assumes interconnect bandwidth headroom",
        ),
        ThroughputRow::constant(
            "pruned/quantized puma",
            18.67,
            21.07,
            "assumes interconnect bandwidth headroom",
        ),
        ThroughputRow::constant("polarized-m8 (full optimization)", 36.02, 27.73, ""),
        ThroughputRow::constant("polarized-m16 (full optimization)", 39.48, 51.26, ""),
    ]
}

/// Ratio of two table rows as `(area-efficiency ratio, power-efficiency
/// ratio)`; `None` when either design is missing.
#[must_use]
pub fn throughput_ratio(
    table: &[ThroughputRow],
    design: &str,
    baseline: &str,
) -> Option<(f64, f64)> {
    let find = |name: &str| table.iter().find(|r| r.design == name);
    let (d, b) = (find(design)?, find(baseline)?);
    Some((d.gops_per_s_mm2 / b.gops_per_s_mm2, d.gops_per_w / b.gops_per_w))
}
