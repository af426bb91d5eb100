//! Server side of the simulation: client sampling, broadcast, weighted
//! aggregation, evaluation and metric logging.

mod aggregate;
mod config;
mod executor;
mod metrics;
mod server;

pub use aggregate::{aggregate, aggregate_layers, aggregation_coefficients};
pub use config::{JoinRatio, RoundConfig};
pub use executor::{Executor, Sequential};
pub use metrics::{EvalRecord, MetricsLog, RoundRecord};
pub use server::{
    prepare_clients, run_experiment, run_experiment_with, run_round, sample_clients,
    setup_experiment, ExperimentSpec, ServerState,
};
