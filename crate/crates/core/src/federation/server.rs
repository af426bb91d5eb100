use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::client::{ClientSplit, ClientState};
use crate::data::{partition, split_train_test, LabeledDataset, PartitionSpec};
use crate::error::{Error, Result};
use crate::nn::{accuracy, init_model, ModelParams};
use crate::rng::{derive_seed, rng_from, stream, SimRng};
use crate::strategy::{LocalUpdateReport, Method, Observer, Silent, Upload};

use super::aggregate::{aggregate, aggregate_layers};
use super::{EvalRecord, Executor, JoinRatio, MetricsLog, RoundConfig, RoundRecord, Sequential};

/// Everything needed to run one experiment on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Extractor layer widths after the input; the last one is the
    /// representation size fed to the head.
    pub hidden: Vec<usize>,
    pub partition: PartitionSpec,
    pub rounds: RoundConfig,
    pub test_fraction: f64,
}

impl ExperimentSpec {
    pub fn extractor_dims(&self, input_dim: usize) -> Vec<usize> {
        core::iter::once(input_dim)
            .chain(self.hidden.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub method: Method,
    pub config: RoundConfig,
    /// `{r^t, h^t}`.
    pub global_model: ModelParams,
    /// Rounds completed so far.
    pub round: usize,
    pub clients: Vec<ClientState>,
    pub metrics: MetricsLog,
}

impl ServerState {
    pub fn new(
        method: Method,
        config: RoundConfig,
        global_model: ModelParams,
        splits: Vec<ClientSplit>,
    ) -> Result<Self> {
        config.validate()?;
        global_model.validate()?;
        if splits.is_empty() {
            return Err(Error::config("no clients"));
        }
        let clients: Vec<ClientState> = splits
            .into_iter()
            .map(|s| ClientState::new(s, &global_model))
            .collect();
        if clients.iter().enumerate().any(|(i, c)| c.id != i) {
            return Err(Error::config("client ids must be 0..N in order"));
        }
        let metrics = MetricsLog::new(method, config.master_seed, clients.len());
        Ok(Self {
            method,
            config,
            global_model,
            round: 0,
            clients,
            metrics,
        })
    }

    pub fn finished(&self) -> bool {
        self.round >= self.config.total_rounds || self.metrics.stopped_early
    }

    fn evaluation_due(&self, round: usize) -> bool {
        round.is_multiple_of(self.config.eval_every) || round == self.config.total_rounds
    }

    /// Test accuracy of every client's personalized model.
    pub fn evaluate(&self) -> Result<EvalRecord> {
        let client_accuracies = self
            .clients
            .iter()
            .map(|c| {
                let model = self.method.personalized_model(c);
                accuracy(model, &c.split.test.features, &c.split.test.labels)
                    .map_err(|e| e.in_client(c.id))
            })
            .collect::<Result<Vec<_>>>()?;
        let mean_accuracy = client_accuracies.iter().sum::<f64>() / client_accuracies.len() as f64;
        Ok(EvalRecord {
            client_accuracies,
            mean_accuracy,
        })
    }
}

/// Draws the participants of one round: `ceil(rho * N)` distinct clients,
/// with `rho` first drawn uniformly when a range is configured. Never empty;
/// ids come back ascending.
pub fn sample_clients(n_clients: usize, join_ratio: JoinRatio, rng: &mut SimRng) -> Vec<usize> {
    if n_clients == 0 {
        return Vec::new();
    }
    let rho = match join_ratio {
        JoinRatio::Fixed(r) => r,
        JoinRatio::Range { low, high } if low < high => rng.random_range(low..=high),
        JoinRatio::Range { low, .. } => low,
    };
    // Tolerance so products like 0.1 * 30 do not round up to an extra client.
    let count = (libm::ceil(rho * n_clients as f64 - 1e-9) as usize).clamp(1, n_clients);
    if count == n_clients {
        return (0..n_clients).collect();
    }
    let mut ids = index::sample(rng, n_clients, count).into_vec();
    ids.sort_unstable();
    ids
}

fn apply_uploads(global: &mut ModelParams, reports: &[LocalUpdateReport]) -> Result<()> {
    let sizes: Vec<usize> = reports.iter().map(|r| r.train_samples).collect();
    let full: Vec<&ModelParams> = reports
        .iter()
        .filter_map(|r| match &r.upload {
            Upload::Full(m) => Some(m),
            Upload::Extractor(_) => None,
        })
        .collect();
    if full.len() == reports.len() {
        *global = aggregate(&full, &sizes)?;
    } else if full.is_empty() {
        let stacks: Vec<&[crate::nn::Dense]> =
            reports.iter().map(|r| r.upload.extractor()).collect();
        global.extractor = aggregate_layers(&stacks, &sizes)?;
    } else {
        return Err(Error::usage(
            "a round mixed full and extractor-only uploads",
        ));
    }
    Ok(())
}

/// One round: sample, broadcast, local updates, aggregation over the
/// sampled clients, bookkeeping and (when due) evaluation of all clients.
pub fn run_round<E: Executor>(
    state: &mut ServerState,
    executor: &E,
    observer: &dyn Observer,
) -> Result<()> {
    if state.finished() {
        return Err(Error::usage("experiment already finished"));
    }
    let t = state.round + 1;
    let master = state.config.master_seed;
    let mut sampling_rng = rng_from(master, &[stream::CLIENT_SAMPLING, t as u64]);
    let sampled = sample_clients(
        state.clients.len(),
        state.config.join_ratio,
        &mut sampling_rng,
    );

    let method = state.method;
    let cfg = &state.config;
    let global = &state.global_model;
    let jobs: Vec<&mut ClientState> = state
        .clients
        .iter_mut()
        .filter(|c| sampled.binary_search(&c.id).is_ok())
        .collect();
    let reports = executor
        .map(jobs, |client| {
            let seed = derive_seed(master, &[stream::LOCAL_UPDATE, t as u64, client.id as u64]);
            method.local_update(client, global, cfg, seed, observer)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    apply_uploads(&mut state.global_model, &reports)?;

    // Each participant downloads and uploads the shared part once.
    let transmitted: usize = reports.iter().map(|r| 2 * r.transmitted).sum();
    let losses: Vec<f64> = reports
        .iter()
        .filter_map(LocalUpdateReport::train_loss)
        .collect();
    let mean_train_loss =
        (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
    let cumulative = state.metrics.params_transmitted_total() + transmitted;

    state.round = t;
    let eval = if state.evaluation_due(t) {
        Some(state.evaluate()?)
    } else {
        None
    };
    let evaluated = eval.is_some();
    let improved = state.metrics.push(RoundRecord {
        round: t,
        sampled,
        mean_train_loss,
        params_transmitted: transmitted,
        params_transmitted_cumulative: cumulative,
        eval,
    });

    if let (Some(patience), true, false) = (state.config.early_stop_patience, evaluated, improved) {
        let best = state.metrics.best_round.unwrap_or(0);
        let stale = state
            .metrics
            .evaluations()
            .filter(|(r, _)| r.round > best)
            .count();
        if stale >= patience {
            state.metrics.stopped_early = true;
        }
    }
    Ok(())
}

/// Partitions `ds` and splits each client's share into train and test.
pub fn prepare_clients(
    ds: &LabeledDataset,
    partition_spec: &PartitionSpec,
    test_fraction: f64,
) -> Result<Vec<ClientSplit>> {
    partition(ds, partition_spec)?
        .iter()
        .enumerate()
        .map(|(id, data)| {
            let seed = derive_seed(partition_spec.seed, &[id as u64]);
            split_train_test(id, data, test_fraction, seed)
        })
        .collect()
}

/// Builds the server state for `spec` without running any round.
pub fn setup_experiment(
    ds: &LabeledDataset,
    spec: &ExperimentSpec,
    method: Method,
) -> Result<ServerState> {
    spec.rounds.validate()?;
    if spec.hidden.is_empty() {
        return Err(Error::config("model needs at least one extractor layer"));
    }
    let splits = prepare_clients(ds, &spec.partition, spec.test_fraction)?;
    let seed = derive_seed(spec.rounds.master_seed, &[stream::MODEL_INIT]);
    let global = init_model(&spec.extractor_dims(ds.dim()), ds.n_classes, seed)
        .map_err(|e| Error::config(format!("model: {e}")))?;
    ServerState::new(method, spec.rounds.clone(), global, splits)
}

/// Runs `spec.rounds.total_rounds` rounds (fewer if early stopping fires).
/// Deterministic for a fixed master seed regardless of executor.
pub fn run_experiment_with<E: Executor>(
    ds: &LabeledDataset,
    spec: &ExperimentSpec,
    method: Method,
    executor: &E,
    observer: &dyn Observer,
) -> Result<MetricsLog> {
    let mut state = setup_experiment(ds, spec, method)?;
    while !state.finished() {
        run_round(&mut state, executor, observer)?;
    }
    Ok(state.metrics)
}

pub fn run_experiment(
    ds: &LabeledDataset,
    spec: &ExperimentSpec,
    method: Method,
) -> Result<MetricsLog> {
    run_experiment_with(ds, spec, method, &Sequential, &Silent)
}
