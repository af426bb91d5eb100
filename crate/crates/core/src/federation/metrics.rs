use alloc::vec;
use alloc::vec::Vec;

use crate::strategy::Method;

/// Test accuracy of every client's personalized model at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Indexed by client id.
    pub client_accuracies: Vec<f64>,
    /// Unweighted mean over clients.
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Ascending client ids.
    pub sampled: Vec<usize>,
    /// Mean over sampled clients of their local training loss.
    pub mean_train_loss: Option<f64>,
    /// Parameters moved this round, download plus upload.
    pub params_transmitted: usize,
    pub params_transmitted_cumulative: usize,
    pub eval: Option<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub method: Method,
    pub master_seed: u64,
    pub rounds: Vec<RoundRecord>,
    /// Highest mean accuracy over evaluated rounds (0 before any evaluation).
    pub best_mean_accuracy: f64,
    /// First round reaching `best_mean_accuracy`.
    pub best_round: Option<usize>,
    /// Each client's highest accuracy over evaluated rounds.
    pub per_client_best: Vec<f64>,
    pub stopped_early: bool,
}

impl MetricsLog {
    pub fn new(method: Method, master_seed: u64, n_clients: usize) -> Self {
        Self {
            method,
            master_seed,
            rounds: Vec::new(),
            best_mean_accuracy: 0.0,
            best_round: None,
            per_client_best: vec![0.0; n_clients],
            stopped_early: false,
        }
    }

    /// Appends a round; returns true if its evaluation set a new best.
    pub fn push(&mut self, record: RoundRecord) -> bool {
        let mut improved = false;
        if let Some(eval) = &record.eval {
            if self.best_round.is_none() || eval.mean_accuracy > self.best_mean_accuracy {
                self.best_mean_accuracy = eval.mean_accuracy;
                self.best_round = Some(record.round);
                improved = true;
            }
            for (best, &acc) in self.per_client_best.iter_mut().zip(&eval.client_accuracies) {
                *best = best.max(acc);
            }
        }
        self.rounds.push(record);
        improved
    }

    pub fn evaluations(&self) -> impl Iterator<Item = (&RoundRecord, &EvalRecord)> {
        self.rounds
            .iter()
            .filter_map(|r| r.eval.as_ref().map(|e| (r, e)))
    }

    /// `(round, mean accuracy)` for every evaluated round.
    pub fn accuracy_curve(&self) -> Vec<(usize, f64)> {
        self.evaluations()
            .map(|(r, e)| (r.round, e.mean_accuracy))
            .collect()
    }

    /// Mean of the per-client best accuracies.
    pub fn mean_per_client_best(&self) -> f64 {
        if self.per_client_best.is_empty() {
            return 0.0;
        }
        self.per_client_best.iter().sum::<f64>() / self.per_client_best.len() as f64
    }

    pub fn params_transmitted_total(&self) -> usize {
        self.rounds
            .last()
            .map_or(0, |r| r.params_transmitted_cumulative)
    }
}
