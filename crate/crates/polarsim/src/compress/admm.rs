//! The alternating-direction compression loop.
//!
//! Each enabled phase retrains the model for `epochs` epochs under an
//! augmented loss `task_loss + sum_l rho/2 ||W_l - Z_l + U_l||_F^2`, with the
//! per-epoch updates
//!
//! ```text
//! W  <- SGD step on the augmented loss
//! Z  <- projection of (W + U) onto the phase's constraint set
//! U  <- U + W - Z
//! ```
//!
//! and ends with a hard projection of `W` itself, so the constraint holds
//! exactly from then on. Zeros created by pruning and polarization are frozen
//! (masked out of SGD updates) for all later phases. The quantize phase's
//! hard projection re-applies the stored fragment signs first, which makes
//! the final weights satisfy all three constraints jointly and bit-exactly.
//!
//! During the polarization phase, fragment signs are recomputed from the
//! projection input `W + U` at the end of every `sign_update_interval`
//! epochs and frozen in between.

use std::path::Path;

use crate::compress::config::{CompressionConfig, PhaseKind};
use crate::compress::layout::FragmentLayout;
use crate::compress::project::{
    dual_update, project_polarize, project_structured, project_quantize, quant_delta,
};
use crate::compress::CompressedLayer;
use crate::container::{write_tensors, NamedTensor};
use crate::error::{Error, Result};
use crate::model::data::Split;
use crate::model::tensor::{Matrix, WeightShape, WeightTensor};
use crate::model::train::{penalty_grad_into, penalty_value, run_epoch_masked};
use crate::model::{Layer, ModelGraph};

/// Progress record for one compression phase.
#[derive(Debug, Clone)]
pub struct PhaseReport {
    /// Which phase this records.
    pub phase: PhaseKind,
    /// Mean task loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Total penalty value per epoch (after the dual update).
    pub penalties: Vec<f64>,
    /// Total primal residual `sum_l ||W_l - Z_l||_F` per epoch.
    pub residuals: Vec<f64>,
    /// Number of fragment-sign recomputations performed.
    pub sign_updates: usize,
}

/// Result of the full compression loop.
#[derive(Debug, Clone)]
pub struct CompressionOutcome {
    /// Final per-layer compression metadata, in layer order.
    pub layers: Vec<CompressedLayer>,
    /// One report per phase that ran.
    pub phases: Vec<PhaseReport>,
}

impl CompressionOutcome {
    /// True when the quantize phase ran for every layer.
    #[must_use]
    pub fn quantized(&self) -> bool {
        !self.layers.is_empty() && self.layers.iter().all(|l| l.quant_scale.is_some())
    }
}

/// Per-layer optimization state.
struct LayerState {
    index: usize,
    name: String,
    shape: WeightShape,
    alpha: f64,
    beta: f64,
    rho: f32,
    layout: FragmentLayout,
    z: Matrix,
    u: Matrix,
    /// `false` entries are structural zeros frozen by earlier phases.
    mask: Option<Vec<bool>>,
    quant_scale: Option<f32>,
    polarized: bool,
}

fn view_of(model: &ModelGraph, index: usize) -> Matrix {
    match &model.layers[index] {
        Layer::Conv { weights, .. } | Layer::Dense { weights, .. } => weights.to_view(),
        _ => unreachable!("state indices always point at weighted layers"),
    }
}

fn set_view(model: &mut ModelGraph, index: usize, view: &Matrix) -> Result<()> {
    match &mut model.layers[index] {
        Layer::Conv { weights, .. } | Layer::Dense { weights, .. } => {
            *weights = WeightTensor::from_view(weights.shape, view)?;
            Ok(())
        }
        _ => unreachable!("state indices always point at weighted layers"),
    }
}

fn add_views(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (o, &v) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *o += v;
    }
    out
}

/// Phases must appear in prune -> polarize -> quantize order (any subset).
fn validate_phase_order(phases: &[PhaseKind]) -> Result<()> {
    let rank = |p: PhaseKind| match p {
        PhaseKind::Prune => 0,
        PhaseKind::Polarize => 1,
        PhaseKind::Quantize => 2,
    };
    for pair in phases.windows(2) {
        if rank(pair[1]) <= rank(pair[0]) {
            return Err(Error::Config(format!(
                "phases must be a subset of prune -> polarize -> quantize in order, got {phases:?}"
            )));
        }
    }
    Ok(())
}

fn snapshot_states(model: &ModelGraph, states: &[LayerState], path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    for st in states {
        let w = view_of(model, st.index);
        tensors.push(NamedTensor::from_matrix(&format!("{}/w", st.name), &w));
        tensors.push(NamedTensor::from_matrix(&format!("{}/z", st.name), &st.z));
        tensors.push(NamedTensor::from_matrix(&format!("{}/u", st.name), &st.u));
    }
    write_tensors(path, &tensors)
}

fn weights_finite(model: &ModelGraph, states: &[LayerState]) -> bool {
    states.iter().all(|st| {
        view_of(model, st.index)
            .as_slice()
            .iter()
            .all(|v| v.is_finite())
    })
}

/// Run the configured compression phases on a (pre)trained model.
///
/// On divergence (non-finite loss or weight) the current `W`/`Z`/`U` state of
/// every layer is written to `snapshot_path` (if given) and
/// [`Error::Diverged`] is returned.
pub fn compress_model(
    model: &mut ModelGraph,
    train: &Split,
    config: &CompressionConfig,
    snapshot_path: Option<&Path>,
) -> Result<CompressionOutcome> {
    config.validate()?;
    validate_phase_order(&config.phases)?;

    let m = config.fragment_size;
    let order = config.polarization_order;
    let mut states: Vec<LayerState> = Vec::new();
    let mut state_of: Vec<Option<usize>> = vec![None; model.layers.len()];
    for (index, name) in model.weighted_layers() {
        let shape = match &model.layers[index] {
            Layer::Conv { weights, .. } | Layer::Dense { weights, .. } => weights.shape,
            _ => unreachable!(),
        };
        let view = view_of(model, index);
        let cfg = config.layer(&name);
        state_of[index] = Some(states.len());
        states.push(LayerState {
            index,
            name,
            shape,
            alpha: cfg.alpha,
            beta: cfg.beta,
            rho: cfg.rho as f32,
            layout: FragmentLayout::full(&view, &shape, order, m)?,
            z: Matrix::zeros(view.rows(), view.cols()),
            u: Matrix::zeros(view.rows(), view.cols()),
            mask: None,
            quant_scale: None,
            polarized: false,
        });
    }

    let mut phases = Vec::new();
    // continue the shuffle-stream epoch numbering where pretraining left off
    let mut global_epoch = config.pretrain_epochs as u64;

    for &phase in &config.phases {
        // fresh scaled-dual start for each phase: Z = projection(W), U = 0
        for st in &mut states {
            let w = view_of(model, st.index);
            if phase == PhaseKind::Polarize {
                st.layout.update_signs(&w);
            }
            st.z = phase_projection(phase, &w, st, config);
            st.u = Matrix::zeros(w.rows(), w.cols());
        }

        let mut report = PhaseReport {
            phase,
            epoch_losses: Vec::with_capacity(config.epochs),
            penalties: Vec::with_capacity(config.epochs),
            residuals: Vec::with_capacity(config.epochs),
            sign_updates: 0,
        };

        for epoch in 0..config.epochs {
            let loss = {
                let states_ref = &states;
                let mut augment = |idx: usize, grad: &mut Matrix, view: &Matrix| {
                    if let Some(si) = state_of[idx] {
                        let st = &states_ref[si];
                        penalty_grad_into(grad, view, &st.z, &st.u, st.rho);
                    }
                };
                run_epoch_masked(
                    model,
                    train,
                    config.lr as f32,
                    config.batch_size,
                    config.seed,
                    global_epoch,
                    &mut augment,
                    |idx| state_of[idx].and_then(|si| states_ref[si].mask.clone()),
                )?
            };
            global_epoch += 1;

            if !loss.is_finite() || !weights_finite(model, &states) {
                if let Some(path) = snapshot_path {
                    snapshot_states(model, &states, path)?;
                }
                return Err(Error::Diverged(format!(
                    "non-finite loss or weight in {phase:?} epoch {epoch}"
                )));
            }

            // scheduled sign recomputation at the end of each interval
            if phase == PhaseKind::Polarize
                && (epoch + 1) % config.sign_update_interval == 0
            {
                for st in &mut states {
                    let v = add_views(&view_of(model, st.index), &st.u);
                    st.layout.update_signs(&v);
                }
                report.sign_updates += 1;
            }

            let mut penalty = 0.0f64;
            let mut residual = 0.0f64;
            for st in &mut states {
                let w = view_of(model, st.index);
                let v = add_views(&w, &st.u);
                st.z = phase_projection(phase, &v, st, config);
                dual_update(&mut st.u, &w, &st.z);
                penalty += penalty_value(&w, &st.z, &st.u, st.rho);
                residual += w.frobenius_dist_sq(&st.z)?.sqrt();
            }
            report.epoch_losses.push(loss);
            report.penalties.push(penalty);
            report.residuals.push(residual);
        }

        // hard projection: make the phase's constraint hold exactly
        for st in &mut states {
            let w = view_of(model, st.index);
            match phase {
                PhaseKind::Prune => {
                    let (proj, cols, rows) =
                        project_structured(&w, st.alpha, st.beta, m, config.crossbar_aware);
                    let mut row_set = vec![false; w.rows()];
                    let mut col_set = vec![false; w.cols()];
                    for &r in &rows {
                        row_set[r] = true;
                    }
                    for &c in &cols {
                        col_set[c] = true;
                    }
                    st.layout = FragmentLayout::build(&proj, &st.shape, order, m, &row_set, &col_set)?;
                    let mut mask = vec![false; w.rows() * w.cols()];
                    for r in 0..w.rows() {
                        for c in 0..w.cols() {
                            mask[r * w.cols() + c] = row_set[r] && col_set[c];
                        }
                    }
                    st.mask = Some(mask);
                    set_view(model, st.index, &proj)?;
                }
                PhaseKind::Polarize => {
                    let proj = project_polarize(&w, &st.layout);
                    st.polarized = true;
                    // freeze the polarized-away zeros for later phases
                    let mut mask = st
                        .mask
                        .take()
                        .unwrap_or_else(|| vec![true; w.rows() * w.cols()]);
                    for (mk, &v) in mask.iter_mut().zip(proj.as_slice()) {
                        *mk = *mk && v != 0.0;
                    }
                    st.mask = Some(mask);
                    set_view(model, st.index, &proj)?;
                }
                PhaseKind::Quantize => {
                    // re-apply stored signs first so the final weights satisfy
                    // every constraint jointly
                    let pol = if st.polarized {
                        project_polarize(&w, &st.layout)
                    } else {
                        w
                    };
                    let delta = quant_delta(&pol, config.quant_bits);
                    let q = project_quantize(&pol, config.quant_bits, delta);
                    st.quant_scale = Some(delta);
                    set_view(model, st.index, &q)?;
                }
            }
        }
        phases.push(report);
    }

    let layers = states
        .into_iter()
        .map(|st| CompressedLayer {
            name: st.name,
            layer_index: st.index,
            layout: st.layout,
            polarized: st.polarized,
            quant_bits: config.quant_bits,
            quant_scale: st.quant_scale,
            alpha: st.alpha,
            beta: st.beta,
            rho: f64::from(st.rho),
        })
        .collect();
    Ok(CompressionOutcome { layers, phases })
}

fn phase_projection(
    phase: PhaseKind,
    v: &Matrix,
    st: &LayerState,
    config: &CompressionConfig,
) -> Matrix {
    match phase {
        PhaseKind::Prune => {
            project_structured(v, st.alpha, st.beta, config.fragment_size, config.crossbar_aware).0
        }
        PhaseKind::Polarize => project_polarize(v, &st.layout),
        PhaseKind::Quantize => {
            let delta = quant_delta(v, config.quant_bits);
            project_quantize(v, config.quant_bits, delta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::config::LayerCompression;
    use crate::compress::verify::verify_constraints;
    use crate::model::data::{generate, DatasetSpec};
    use crate::model::train::train_plain;
    use crate::model::{build_model, ModelSpec};

    fn small_config() -> CompressionConfig {
        let mut config = CompressionConfig {
            fragment_size: 4,
            quant_bits: 8,
            epochs: 2,
            sign_update_interval: 1,
            lr: 0.05,
            seed: 9,
            batch_size: 16,
            pretrain_epochs: 1,
            model: ModelSpec::Mlp { hidden: 8 },
            dataset: DatasetSpec {
                train: 80,
                test: 20,
                ..DatasetSpec::default()
            },
            ..CompressionConfig::default()
        };
        config.layers.insert(
            "fc1".into(),
            LayerCompression {
                alpha: 0.5,
                beta: 0.5,
                rho: 1e-2,
            },
        );
        config
    }

    fn trained_setup(config: &CompressionConfig) -> (ModelGraph, crate::model::data::Dataset) {
        let data = generate(&config.dataset, config.seed);
        let mut model = build_model(&config.model, (1, 8, 8), config.dataset.classes, config.seed)
            .unwrap();
        train_plain(
            &mut model,
            &data.train,
            config.pretrain_epochs,
            config.lr as f32,
            config.batch_size,
            config.seed,
        )
        .unwrap();
        (model, data)
    }

    #[test]
    fn full_pipeline_yields_jointly_feasible_weights() {
        let config = small_config();
        let (mut model, data) = trained_setup(&config);
        let outcome = compress_model(&mut model, &data.train, &config, None).unwrap();
        assert!(outcome.quantized());
        assert_eq!(outcome.phases.len(), 3);
        let report = verify_constraints(&model, &outcome.layers).unwrap();
        assert!(report.is_clean(), "violations: {:?}", report.violations);
        assert!(report.quantized);
    }

    #[test]
    fn pruning_keeps_the_configured_fractions() {
        let mut config = small_config();
        config.phases = vec![PhaseKind::Prune];
        let (mut model, data) = trained_setup(&config);
        let outcome = compress_model(&mut model, &data.train, &config, None).unwrap();
        let fc1 = outcome.layers.iter().find(|l| l.name == "fc1").unwrap();
        // fc1 view is 64x8: alpha=0.5 -> 4 cols; beta=0.5 -> 32 rows (already
        // a multiple of the fragment size)
        assert_eq!(fc1.layout.kept_cols.len(), 4);
        assert_eq!(fc1.layout.kept_rows.len(), 32);
        // default layer keeps everything
        let fc2 = outcome.layers.iter().find(|l| l.name == "fc2").unwrap();
        assert_eq!(fc2.layout.kept_cols.len(), 10);
        assert_eq!(fc2.layout.kept_rows.len(), 8);
    }

    #[test]
    fn structural_zeros_stay_zero_through_later_phases() {
        let config = small_config();
        let (mut model, data) = trained_setup(&config);
        let outcome = compress_model(&mut model, &data.train, &config, None).unwrap();
        let fc1 = outcome.layers.iter().find(|l| l.name == "fc1").unwrap();
        let view = view_of(&model, fc1.layer_index);
        let kept_r: std::collections::BTreeSet<_> = fc1.layout.kept_rows.iter().collect();
        let kept_c: std::collections::BTreeSet<_> = fc1.layout.kept_cols.iter().collect();
        for r in 0..view.rows() {
            for c in 0..view.cols() {
                if !kept_r.contains(&r) || !kept_c.contains(&c) {
                    assert_eq!(view.get(r, c), 0.0, "pruned entry ({r},{c}) resurrected");
                }
            }
        }
    }

    #[test]
    fn sign_updates_run_once_per_interval() {
        let mut config = small_config();
        config.epochs = 4;
        config.sign_update_interval = 2;
        config.phases = vec![PhaseKind::Polarize];
        let (mut model, data) = trained_setup(&config);
        let outcome = compress_model(&mut model, &data.train, &config, None).unwrap();
        assert_eq!(outcome.phases[0].sign_updates, 2);

        config.sign_update_interval = 4;
        let (mut model, data) = trained_setup(&config);
        let outcome = compress_model(&mut model, &data.train, &config, None).unwrap();
        assert_eq!(outcome.phases[0].sign_updates, 1);
    }

    #[test]
    fn compression_is_bitwise_deterministic() {
        let config = small_config();
        let run = || {
            let (mut model, data) = trained_setup(&config);
            compress_model(&mut model, &data.train, &config, None).unwrap();
            model
        };
        let a = run();
        let b = run();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            if let (Layer::Dense { weights: wa, .. }, Layer::Dense { weights: wb, .. }) = (la, lb)
            {
                let abits: Vec<u32> = wa.data.iter().map(|v| v.to_bits()).collect();
                let bbits: Vec<u32> = wb.data.iter().map(|v| v.to_bits()).collect();
                assert_eq!(abits, bbits);
            }
        }
    }

    #[test]
    fn out_of_order_phases_are_rejected() {
        let mut config = small_config();
        config.phases = vec![PhaseKind::Polarize, PhaseKind::Prune];
        let (mut model, data) = trained_setup(&config);
        let err = compress_model(&mut model, &data.train, &config, None).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn empty_phase_list_leaves_weights_untouched() {
        let mut config = small_config();
        config.phases = Vec::new();
        let (mut model, data) = trained_setup(&config);
        let (idx, _) = model.weighted_layers()[0];
        let before = view_of(&model, idx);
        let outcome = compress_model(&mut model, &data.train, &config, None).unwrap();
        assert!(outcome.phases.is_empty());
        assert!(!outcome.quantized());
        let after = view_of(&model, idx);
        assert_eq!(before.as_slice(), after.as_slice());
    }

    #[test]
    fn divergence_aborts_with_a_snapshot() {
        let mut config = small_config();
        config.lr = 1e18;
        let (mut model, data) = trained_setup(&config);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diverged.wts");
        let err = compress_model(&mut model, &data.train, &config, Some(&path)).unwrap_err();
        assert!(matches!(err, Error::Diverged(_)), "{err}");
        let tensors = crate::container::read_tensors(&path).unwrap();
        // w, z, u for each of the two dense layers
        assert_eq!(tensors.len(), 6);
        assert!(tensors.iter().any(|t| t.name == "fc1/u"));
    }

    #[test]
    fn quantized_weights_share_one_grid_per_layer() {
        let config = small_config();
        let (mut model, data) = trained_setup(&config);
        let outcome = compress_model(&mut model, &data.train, &config, None).unwrap();
        for meta in &outcome.layers {
            let delta = meta.quant_scale.unwrap();
            if delta == 0.0 {
                continue;
            }
            let view = view_of(&model, meta.layer_index);
            let max_k = crate::compress::project::max_level(meta.quant_bits) as f32;
            for &v in view.as_slice() {
                if v == 0.0 {
                    continue;
                }
                let k = (v.abs() / delta).round();
                assert!(k <= max_k);
                assert_eq!(v.abs(), k * delta, "off-grid weight {v}");
            }
        }
    }
}
