//! Client-side update rules of the federated methods.
//!
//! All methods share the same skeleton: receive the global model, assemble a
//! starting model from it and the client's retained state, train on the
//! client's training split, and return what gets uploaded. They differ in how
//! the head is initialised, which parameters each phase trains, and whether
//! the head travels back to the server.

mod aggregated_head;
mod baselines;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::client::ClientState;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::federation::RoundConfig;
use crate::nn::{loss_and_grads, sgd_step_in_place, Dense, Freeze, ModelParams};
use crate::rng::{rng_from, stream};

pub use aggregated_head::{
    build_aggregated_head, fedah_learn_weights, fedah_update, weight_gradient, AggregationWeights,
};
pub use baselines::{fedavg_update, fedper_update, fedrep_update};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    FedAvg,
    FedPer,
    FedRep,
    FedAh,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::FedAvg,
        Method::FedPer,
        Method::FedRep,
        Method::FedAh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FedAvg => "fedavg",
            Method::FedPer => "fedper",
            Method::FedRep => "fedrep",
            Method::FedAh => "fedah",
        }
    }

    /// Whether the head is sent back to the server along with the extractor.
    pub fn uploads_head(self) -> bool {
        matches!(self, Method::FedAvg | Method::FedAh)
    }

    /// Parameters moved in one direction for one client per round.
    pub fn transmitted_params(self, model: &ModelParams) -> usize {
        if self.uploads_head() {
            model.param_count()
        } else {
            model.extractor_param_count()
        }
    }

    /// Runs this method's local update for one sampled client.
    ///
    /// On a client's first participation its retained head is set to the
    /// received global head (and, for the aggregated head, the mixing
    /// weights to `cfg.weight_init`).
    pub fn local_update(
        self,
        client: &mut ClientState,
        global: &ModelParams,
        cfg: &RoundConfig,
        seed: u64,
        observer: &dyn Observer,
    ) -> Result<LocalUpdateReport> {
        let id = client.id;
        let run = |client: &mut ClientState| -> Result<LocalUpdateReport> {
            if !global.same_shape(&client.local_model) {
                return Err(Error::shape(
                    "global model differs in shape from the client's",
                ));
            }
            if !client.participated {
                client.prev_head = global.head.clone();
                if self == Method::FedAh {
                    client.agg_weights =
                        Some(AggregationWeights::filled(&global.head, cfg.weight_init));
                }
                client.participated = true;
            }
            match self {
                Method::FedAvg => fedavg_update(client, global, cfg, seed),
                Method::FedPer => fedper_update(client, global, cfg, seed),
                Method::FedRep => fedrep_update(client, global, cfg, seed),
                Method::FedAh => fedah_update(client, global, cfg, seed, observer),
            }
        };
        run(client).map_err(|e| e.in_client(id))
    }

    /// The model a client is evaluated with: its local extractor and head
    /// (for FedAvg, the global model after local training).
    pub fn personalized_model(self, client: &ClientState) -> &ModelParams {
        &client.local_model
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::config(alloc::format!(
                    "unknown method `{s}` (expected fedavg, fedper, fedrep or fedah)"
                ))
            })
    }
}

/// What a client sends to the server.
#[derive(Debug, Clone, PartialEq)]
pub enum Upload {
    Full(ModelParams),
    Extractor(Vec<Dense>),
}

impl Upload {
    pub fn param_count(&self) -> usize {
        match self {
            Upload::Full(m) => m.param_count(),
            Upload::Extractor(layers) => layers.iter().map(Dense::param_count).sum(),
        }
    }

    pub fn extractor(&self) -> &[Dense] {
        match self {
            Upload::Full(m) => &m.extractor,
            Upload::Extractor(layers) => layers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Learning the head-mixing weights.
    Weights,
    /// Head only, extractor frozen.
    Head,
    /// Extractor only, head frozen.
    Extractor,
    /// Extractor and head together.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLoss {
    pub phase: Phase,
    /// Mean of the per-batch losses (each taken before its step).
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdateReport {
    pub client_id: usize,
    pub upload: Upload,
    pub transmitted: usize,
    pub train_samples: usize,
    /// Phases in the order they ran. Phases with zero epochs are omitted.
    pub phases: Vec<PhaseLoss>,
}

impl LocalUpdateReport {
    /// Mean loss over the model-training phases, if any ran.
    pub fn train_loss(&self) -> Option<f64> {
        let losses: Vec<f64> = self
            .phases
            .iter()
            .filter(|p| p.phase != Phase::Weights)
            .map(|p| p.mean_loss)
            .collect();
        (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
    }

    pub(crate) fn new(
        client: &ClientState,
        upload: Upload,
        phases: Vec<PhaseLoss>,
    ) -> LocalUpdateReport {
        LocalUpdateReport {
            client_id: client.id,
            transmitted: upload.param_count(),
            upload,
            train_samples: client.train_size(),
            phases,
        }
    }
}

/// Hooks for watching the aggregated-head computation. All methods default
/// to doing nothing.
pub trait Observer: Sync {
    /// Called whenever an aggregated head is assembled.
    fn aggregated_head(&self, _client: usize, _prev: &Dense, _global: &Dense, _built: &Dense) {}
    /// Called after every clipped weight step.
    fn weight_step(&self, _client: usize, _weights: &AggregationWeights) {}
}

/// Observer that ignores everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct Silent;

impl Observer for Silent {}

/// Seeded shuffles of `0..n` in chunks of `batch_size`, one shuffle per epoch.
pub(crate) fn epoch_batches(
    n: usize,
    cfg: &RoundConfig,
    seed: u64,
    phase_tag: u64,
) -> impl Iterator<Item = Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut rng = rng_from(seed, &[phase_tag]);
    let batch_size = cfg.batch_size.max(1);
    (0..cfg.local_epochs).flat_map(move |_| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
            .chunks(batch_size)
            .map(<[usize]>::to_vec)
            .collect::<Vec<_>>()
    })
}

/// SGD over `local_epochs` passes of `data`, updating only unfrozen groups.
pub(crate) fn train_phase(
    model: &mut ModelParams,
    data: &LabeledDataset,
    freeze: Freeze,
    phase: Phase,
    cfg: &RoundConfig,
    seed: u64,
) -> Result<Option<PhaseLoss>> {
    let tag = match phase {
        Phase::Joint => stream::PHASE_JOINT,
        Phase::Head => stream::PHASE_HEAD,
        Phase::Extractor => stream::PHASE_EXTRACTOR,
        Phase::Weights => stream::PHASE_WEIGHTS,
    };
    let mut total = 0.0;
    let mut batches = 0usize;
    for indices in epoch_batches(data.len(), cfg, seed, tag) {
        let batch = data.batch(&indices);
        let (loss, grads) = loss_and_grads(model, &batch, freeze)?;
        sgd_step_in_place(model, &grads, cfg.local_lr, freeze)?;
        total += loss;
        batches += 1;
    }
    if !model.is_finite() {
        return Err(Error::usage(
            "training produced non-finite parameters; lower the learning rate",
        ));
    }
    Ok((batches > 0).then(|| PhaseLoss {
        phase,
        mean_loss: total / batches as f64,
    }))
}
