//! Plain SGD training plus the augmented-loss pieces used by the compression
//! loop.
//!
//! The augmented objective is the task loss plus, per constrained layer,
//! `rho/2 * ||W - Z + U||_F^2`; its weight gradient adds `rho * (W - Z + U)`
//! elementwise. Updates are plain SGD without momentum.

use rand::seq::SliceRandom;

use crate::error::Result;
use crate::model::data::Split;
use crate::model::tensor::Matrix;
use crate::model::{softmax_cross_entropy, Layer, ModelGraph};
use crate::rng::{stream, StreamKind};

/// `rho/2 * ||W - Z + U||_F^2`, accumulated in `f64`.
#[must_use]
pub fn penalty_value(w: &Matrix, z: &Matrix, u: &Matrix, rho: f32) -> f64 {
    let mut s = 0.0f64;
    for ((&wv, &zv), &uv) in w.as_slice().iter().zip(z.as_slice()).zip(u.as_slice()) {
        let d = f64::from(wv) - f64::from(zv) + f64::from(uv);
        s += d * d;
    }
    0.5 * f64::from(rho) * s
}

/// Add `rho * (W - Z + U)` into `grad` elementwise.
pub fn penalty_grad_into(grad: &mut Matrix, w: &Matrix, z: &Matrix, u: &Matrix, rho: f32) {
    for (((g, &wv), &zv), &uv) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(w.as_slice())
        .zip(z.as_slice())
        .zip(u.as_slice())
    {
        *g += rho * (wv - zv + uv);
    }
}

/// One plain-SGD weight update: `w -= lr * g`.
///
/// Entries where `mask` is `false` are left untouched (used to freeze
/// structural zeros established by earlier compression phases).
pub fn sgd_step(view: &mut Matrix, grad: &Matrix, lr: f32, mask: Option<&[bool]>) {
    let n = view.as_slice().len();
    debug_assert_eq!(n, grad.as_slice().len());
    for i in 0..n {
        if let Some(m) = mask {
            if !m[i] {
                continue;
            }
        }
        view.as_mut_slice()[i] -= lr * grad.as_slice()[i];
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// One mean cross-entropy value per epoch, in order.
    pub epoch_losses: Vec<f64>,
}

/// Train with plain SGD (no compression) for `epochs` epochs.
///
/// Minibatches are shuffled with a stream derived from `(seed, epoch)`;
/// gradients are averaged over the batch. Deterministic for fixed inputs.
pub fn train_plain(
    model: &mut ModelGraph,
    split: &Split,
    epochs: usize,
    lr: f32,
    batch: usize,
    seed: u64,
) -> Result<TrainReport> {
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let loss = run_epoch(model, split, lr, batch, seed, epoch as u64, |_, _, _| {})?;
        epoch_losses.push(loss);
    }
    Ok(TrainReport { epoch_losses })
}

/// Run one epoch of minibatch SGD, returning the mean loss.
///
/// `augment(layer_idx, grad, current_view)` is called once per weighted layer
/// per batch after gradient averaging and before the update, letting the
/// compression loop add its penalty term (which needs the current weights).
pub(crate) fn run_epoch<F>(
    model: &mut ModelGraph,
    split: &Split,
    lr: f32,
    batch: usize,
    seed: u64,
    epoch: u64,
    mut augment: F,
) -> Result<f64>
where
    F: FnMut(usize, &mut Matrix, &Matrix),
{
    run_epoch_masked(model, split, lr, batch, seed, epoch, &mut augment, |_| None)
}

/// Like [`run_epoch`] but with per-layer update masks (`false` = frozen).
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_epoch_masked<F, M>(
    model: &mut ModelGraph,
    split: &Split,
    lr: f32,
    batch: usize,
    seed: u64,
    epoch: u64,
    augment: &mut F,
    mask_of: M,
) -> Result<f64>
where
    F: FnMut(usize, &mut Matrix, &Matrix),
    M: Fn(usize) -> Option<Vec<bool>>,
{
    let mut order: Vec<usize> = (0..split.len()).collect();
    let mut rng = stream(seed, StreamKind::Shuffle, epoch, 0);
    order.shuffle(&mut rng);

    let mut total_loss = 0.0f64;
    let batch = batch.max(1);

    for chunk in order.chunks(batch) {
        let mut acc: Vec<Option<crate::model::LayerGrad>> =
            model.layers.iter().map(|_| None).collect();
        for &i in chunk {
            let (logits, trace) = model.forward_sample(split.image(i))?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, split.labels[i]);
            total_loss += loss;
            let grads = model.backward(&trace, &dlogits)?;
            for (slot, g) in acc.iter_mut().zip(grads) {
                match (slot.as_mut(), g) {
                    (Some(a), Some(b)) => a.add(&b),
                    (None, Some(b)) => *slot = Some(b),
                    _ => {}
                }
            }
        }
        let scale = 1.0 / chunk.len() as f32;
        for (idx, slot) in acc.iter_mut().enumerate() {
            let Some(grad) = slot else { continue };
            grad.scale(scale);
            let mask = mask_of(idx);
            match &mut model.layers[idx] {
                Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                    let mut view = weights.to_view();
                    augment(idx, &mut grad.dview, &view);
                    sgd_step(&mut view, &grad.dview, lr, mask.as_deref());
                    *weights =
                        crate::model::tensor::WeightTensor::from_view(weights.shape, &view)?;
                    for (b, g) in bias.iter_mut().zip(&grad.dbias) {
                        *b -= lr * g;
                    }
                }
                _ => {}
            }
        }
    }
    Ok(total_loss / split.len().max(1) as f64)
}
