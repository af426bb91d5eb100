//! Aggregated head: element-wise mixing of the client's previous head with
//! the current global head,
//!
//! ```text
//! h_agg = h_prev + (h_global - h_prev) ⊙ W,    every w in W within [0, 1]
//! ```
//!
//! `W` is learned per client by SGD on the local loss of
//! `{r_global, h_agg(W)}` with the extractor and both heads frozen. Since
//! `∂h_agg/∂W = h_global - h_prev`, the weight gradient is the head gradient
//! times that difference, element by element. Each step is followed by
//! clipping every weight back into `[0, 1]`.

use alloc::vec::Vec;

use crate::client::ClientState;
use crate::error::{Error, Result};
use crate::federation::RoundConfig;
use crate::nn::{ensure_same_shape, loss_and_grads, Batch, Dense, Freeze, ModelParams};
use crate::rng::stream;

use super::{epoch_batches, train_phase, LocalUpdateReport, Observer, Phase, PhaseLoss, Upload};

/// One mixing weight per head entry (weights and bias), shaped like the head.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights(Dense);

impl AggregationWeights {
    pub fn filled(head: &Dense, value: f64) -> Self {
        Self(head.filled_like(value.clamp(0.0, 1.0)))
    }

    /// Wraps `weights`, rejecting entries outside `[0, 1]`.
    pub fn from_dense(weights: Dense) -> Result<Self> {
        if weights.values().all(|w| (0.0..=1.0).contains(&w)) {
            Ok(Self(weights))
        } else {
            Err(Error::config("aggregation weights must lie in [0, 1]"))
        }
    }

    pub fn as_dense(&self) -> &Dense {
        &self.0
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.values()
    }

    pub fn within_unit_interval(&self) -> bool {
        self.values().all(|w| (0.0..=1.0).contains(&w))
    }
}

#[inline]
fn mix(prev: f64, global: f64, w: f64) -> f64 {
    // (1 - w) * prev + w * global is the same map but hits both endpoints
    // exactly; the clamp absorbs rounding inside the interval.
    let v = (1.0 - w) * prev + w * global;
    v.clamp(prev.min(global), prev.max(global))
}

/// `h_prev + (h_global - h_prev) ⊙ W`.
pub fn build_aggregated_head(
    prev: &Dense,
    global: &Dense,
    weights: &AggregationWeights,
) -> Result<Dense> {
    ensure_same_shape(prev, global, "previous vs global head")?;
    ensure_same_shape(prev, weights.as_dense(), "head vs aggregation weights")?;
    let mut out = prev.clone();
    for ((o, g), w) in out
        .tensors_mut()
        .into_iter()
        .zip(global.tensors())
        .zip(weights.as_dense().tensors())
    {
        for ((o, &g), &w) in o.iter_mut().zip(g).zip(w) {
            *o = mix(*o, g, w);
        }
    }
    Ok(out)
}

/// Loss of `{scratch.extractor, h_agg(W)}` on `batch` and its gradient with
/// respect to `W`. Leaves the assembled head in `scratch.head`.
fn weight_loss_and_grad(
    scratch: &mut ModelParams,
    prev: &Dense,
    global: &Dense,
    weights: &AggregationWeights,
    batch: &Batch,
) -> Result<(f64, Dense)> {
    scratch.head = build_aggregated_head(prev, global, weights)?;
    let (loss, grads) = loss_and_grads(scratch, batch, Freeze::EXTRACTOR)?;
    let mut grad_w = grads.head;
    for ((gw, p), g) in grad_w
        .tensors_mut()
        .into_iter()
        .zip(prev.tensors())
        .zip(global.tensors())
    {
        for ((gw, p), g) in gw.iter_mut().zip(p).zip(g) {
            *gw *= g - p;
        }
    }
    Ok((loss, grad_w))
}

/// Loss and `∂L/∂W` for the model `{extractor, h_agg(W)}` on one batch.
pub fn weight_gradient(
    extractor: &[Dense],
    prev: &Dense,
    global: &Dense,
    weights: &AggregationWeights,
    batch: &Batch,
) -> Result<(f64, Dense)> {
    let mut scratch = ModelParams {
        extractor: extractor.to_vec(),
        head: prev.clone(),
    };
    scratch.validate()?;
    weight_loss_and_grad(&mut scratch, prev, global, weights, batch)
}

/// Learns the client's mixing weights starting from its persisted ones
/// (all `cfg.weight_init` on first use), over `local_epochs` passes of
/// seeded mini-batches. The result is stored back into the client.
pub fn fedah_learn_weights(
    client: &mut ClientState,
    global: &ModelParams,
    cfg: &RoundConfig,
    seed: u64,
    observer: &dyn Observer,
) -> Result<(AggregationWeights, Option<PhaseLoss>)> {
    let prev = &client.prev_head;
    ensure_same_shape(prev, &global.head, "previous vs global head")?;
    let mut weights = client
        .agg_weights
        .take()
        .unwrap_or_else(|| AggregationWeights::filled(&global.head, cfg.weight_init));
    ensure_same_shape(prev, weights.as_dense(), "head vs aggregation weights")?;

    let lr = cfg.weight_lr();
    let mut scratch = global.clone();
    let mut total = 0.0;
    let mut batches = 0usize;
    let train = &client.split.train;
    for indices in epoch_batches(train.len(), cfg, seed, stream::PHASE_WEIGHTS) {
        let batch = train.batch(&indices);
        let (loss, grad) =
            weight_loss_and_grad(&mut scratch, prev, &global.head, &weights, &batch)?;
        observer.aggregated_head(client.id, prev, &global.head, &scratch.head);
        for (w, g) in weights.0.tensors_mut().into_iter().zip(grad.tensors()) {
            for (w, g) in w.iter_mut().zip(g) {
                *w = (*w - lr * g).clamp(0.0, 1.0);
            }
        }
        observer.weight_step(client.id, &weights);
        total += loss;
        batches += 1;
    }
    if weights.values().any(f64::is_nan) {
        return Err(Error::usage("aggregation weights became NaN"));
    }
    client.agg_weights = Some(weights.clone());
    let phase = (batches > 0).then(|| PhaseLoss {
        phase: Phase::Weights,
        mean_loss: total / batches as f64,
    });
    Ok((weights, phase))
}

/// Full aggregated-head update: learn `W`, build the aggregated head, train
/// the head with the extractor frozen, then the extractor with the new head
/// frozen. The whole model is uploaded and the trained head is retained.
pub fn fedah_update(
    client: &mut ClientState,
    global: &ModelParams,
    cfg: &RoundConfig,
    seed: u64,
    observer: &dyn Observer,
) -> Result<LocalUpdateReport> {
    let mut phases = Vec::with_capacity(3);
    let (weights, weight_phase) = fedah_learn_weights(client, global, cfg, seed, observer)?;
    phases.extend(weight_phase);

    let head = build_aggregated_head(&client.prev_head, &global.head, &weights)?;
    observer.aggregated_head(client.id, &client.prev_head, &global.head, &head);
    let mut model = global.with_head(head)?;
    let train = &client.split.train;
    phases.extend(train_phase(
        &mut model,
        train,
        Freeze::EXTRACTOR,
        Phase::Head,
        cfg,
        seed,
    )?);
    phases.extend(train_phase(
        &mut model,
        train,
        Freeze::HEAD,
        Phase::Extractor,
        cfg,
        seed,
    )?);

    client.prev_head = model.head.clone();
    client.local_model = model.clone();
    Ok(LocalUpdateReport::new(client, Upload::Full(model), phases))
}
