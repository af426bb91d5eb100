//! Per-client state carried across rounds.

use crate::data::LabeledDataset;
use crate::nn::{Dense, ModelParams};
use crate::strategy::AggregationWeights;

/// A client's local data divided into disjoint train and test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSplit {
    pub client_id: usize,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl ClientSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.test.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub split: ClientSplit,
    /// `{r_i, h_i}`: the client's current personalized model.
    pub local_model: ModelParams,
    /// Head kept from the previous round the client took part in.
    pub prev_head: Dense,
    /// Learned head-mixing weights; `None` until the first aggregated-head
    /// update bootstraps them.
    pub agg_weights: Option<AggregationWeights>,
    pub participated: bool,
}

impl ClientState {
    /// Client initialised with the server's starting model.
    pub fn new(split: ClientSplit, initial: &ModelParams) -> Self {
        Self {
            id: split.client_id,
            split,
            local_model: initial.clone(),
            prev_head: initial.head.clone(),
            agg_weights: None,
            participated: false,
        }
    }

    /// Size used for the server's data-proportional weighting.
    pub fn train_size(&self) -> usize {
        self.split.train.len()
    }
}
