//! Compression run configuration (JSON).
//!
//! Per-layer knobs select how much structure survives pruning and how
//! strongly the penalty pulls weights toward the constraint set; global knobs
//! fix fragment geometry, quantization, schedule, and seed. Unknown keys are
//! rejected with the offending key named, and numeric ranges are validated by
//! [`CompressionConfig::validate`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::data::DatasetSpec;
use crate::model::ModelSpec;

/// Per-layer compression knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCompression {
    /// Fraction of filters (weight-view columns) to keep, `(0, 1]`.
    pub alpha: f64,
    /// Fraction of filter positions (weight-view rows) to keep, `(0, 1]`.
    pub beta: f64,
    /// Penalty strength for this layer's constraint terms.
    pub rho: f64,
}

impl Default for LayerCompression {
    fn default() -> Self {
        // keep everything, moderate pull: layers absent from the config are
        // polarized and quantized but not pruned
        LayerCompression {
            alpha: 1.0,
            beta: 1.0,
            rho: 1e-2,
        }
    }
}

/// Row traversal order used to form fragments (and to wire inputs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PolarizationOrder {
    /// Width fastest: consecutive weights along each kernel row.
    #[default]
    #[serde(rename = "w-major")]
    WMajor,
    /// Height fastest: consecutive weights down each kernel column.
    #[serde(rename = "h-major")]
    HMajor,
    /// Channel fastest: the same kernel position across all channels.
    #[serde(rename = "c-major")]
    CMajor,
}

/// One compression phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    /// Structured pruning of filters and filter positions.
    Prune,
    /// Fragment polarization (single sign per fragment).
    Polarize,
    /// Uniform magnitude quantization.
    Quantize,
}

fn default_phases() -> Vec<PhaseKind> {
    vec![PhaseKind::Prune, PhaseKind::Polarize, PhaseKind::Quantize]
}

fn default_cell_bits() -> u32 {
    2
}

fn default_batch() -> usize {
    32
}

fn default_pretrain() -> usize {
    10
}

fn default_true() -> bool {
    true
}

/// Full compression configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionConfig {
    /// Per-layer `{alpha, beta, rho}` keyed by layer name; absent layers use
    /// [`LayerCompression::default`].
    #[serde(default)]
    pub layers: BTreeMap<String, LayerCompression>,
    /// Fragment size `m` (rows of a crossbar sub-array).
    pub fragment_size: usize,
    /// Row traversal order for fragments.
    #[serde(default)]
    pub polarization_order: PolarizationOrder,
    /// Weight magnitude bits after quantization.
    pub quant_bits: u32,
    /// Bits stored per ReRAM cell.
    #[serde(default = "default_cell_bits")]
    pub cell_bits: u32,
    /// Retraining epochs per compression phase.
    pub epochs: usize,
    /// Fragment signs are recomputed at the end of every
    /// `sign_update_interval` epochs of the polarization phase; must be
    /// between 1 and `epochs`.
    pub sign_update_interval: usize,
    /// SGD learning rate.
    pub lr: f64,
    /// Master seed for init, shuffling, and the dataset.
    pub seed: u64,
    /// Minibatch size.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Plain-SGD epochs before compression starts (dense baseline).
    #[serde(default = "default_pretrain")]
    pub pretrain_epochs: usize,
    /// Snap the retained row count up to a multiple of `fragment_size` so
    /// pruning removes whole fragments.
    #[serde(default = "default_true")]
    pub crossbar_aware: bool,
    /// Which phases run, in order. An empty list degrades to plain SGD.
    #[serde(default = "default_phases")]
    pub phases: Vec<PhaseKind>,
    /// Model architecture to build/train.
    #[serde(default)]
    pub model: ModelSpec,
    /// Synthetic dataset parameters.
    #[serde(default)]
    pub dataset: DatasetSpec,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        CompressionConfig {
            layers: BTreeMap::new(),
            fragment_size: 4,
            polarization_order: PolarizationOrder::WMajor,
            quant_bits: 8,
            cell_bits: 2,
            epochs: 8,
            sign_update_interval: 2,
            lr: 0.05,
            seed: 42,
            batch_size: 32,
            pretrain_epochs: 10,
            crossbar_aware: true,
            phases: default_phases(),
            model: ModelSpec::default(),
            dataset: DatasetSpec::default(),
        }
    }
}

impl CompressionConfig {
    /// Parse and validate from a JSON string.
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: CompressionConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize to pretty JSON.
    #[must_use]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Knobs for a layer (default when absent).
    #[must_use]
    pub fn layer(&self, name: &str) -> LayerCompression {
        self.layers.get(name).copied().unwrap_or_default()
    }

    /// Check numeric ranges and schedule consistency.
    pub fn validate(&self) -> Result<()> {
        if self.fragment_size == 0 {
            return Err(Error::Config("fragment_size must be >= 1".into()));
        }
        if self.cell_bits == 0 || self.cell_bits > 8 {
            return Err(Error::Config(format!(
                "cell_bits {} outside 1..=8",
                self.cell_bits
            )));
        }
        if self.quant_bits == 0 || self.quant_bits > 32 {
            return Err(Error::Config(format!(
                "quant_bits {} outside 1..=32",
                self.quant_bits
            )));
        }
        if self.quant_bits % self.cell_bits != 0 {
            return Err(Error::Config(format!(
                "quant_bits {} must be a multiple of cell_bits {}",
                self.quant_bits, self.cell_bits
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.sign_update_interval == 0 || self.sign_update_interval > self.epochs {
            return Err(Error::Config(format!(
                "sign_update_interval {} outside 1..=epochs ({})",
                self.sign_update_interval, self.epochs
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        for (name, lc) in &self.layers {
            for (label, v) in [("alpha", lc.alpha), ("beta", lc.beta)] {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::Config(format!(
                        "layer {name}: {label} {v} outside (0, 1]"
                    )));
                }
            }
            if lc.rho < 0.0 {
                return Err(Error::Config(format!(
                    "layer {name}: rho {} must be >= 0",
                    lc.rho
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let mut cfg = CompressionConfig::default();
        cfg.layers.insert(
            "conv1".into(),
            LayerCompression {
                alpha: 0.5,
                beta: 0.5,
                rho: 5e-3,
            },
        );
        let json = cfg.to_json();
        let back = CompressionConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let json = r#"{
            "fragment_size": 4, "quant_bits": 8, "epochs": 4,
            "sign_update_interval": 2, "lr": 0.05, "seed": 1,
            "typo_key": true
        }"#;
        let err = CompressionConfig::from_json(json).unwrap_err();
        assert!(
            err.to_string().contains("typo_key"),
            "error should name the key: {err}"
        );
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let mut cfg = CompressionConfig::default();
        cfg.quant_bits = 7; // not a multiple of cell_bits=2
        assert!(cfg.validate().is_err());

        let mut cfg = CompressionConfig::default();
        cfg.sign_update_interval = cfg.epochs + 1; // M > N
        assert!(cfg.validate().is_err());

        let mut cfg = CompressionConfig::default();
        cfg.layers.insert(
            "x".into(),
            LayerCompression {
                alpha: 0.0,
                beta: 0.5,
                rho: 1e-2,
            },
        );
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn polarization_order_uses_hyphenated_names() {
        let json = serde_json::to_string(&PolarizationOrder::CMajor).unwrap();
        assert_eq!(json, "\"c-major\"");
    }
}
