//! Deterministic simulation engine for personalized federated learning with
//! element-wise aggregated heads.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the dense network
//! engine, dataset generation and partitioning, the per-client update rules of
//! each federated method and the server round loop. File IO, configuration
//! parsing and the command line live in the companion `fedah` crate.
//!
//! Models are split into a feature extractor (a stack of ReLU dense layers)
//! and a head (the final fully connected layer). The aggregated-head method
//! mixes a client's previous head with the current global head through a
//! learned, clipped element-wise weight tensor before fine-tuning.

#![no_std]

extern crate alloc;

pub mod client;
pub mod data;
pub mod error;
pub mod federation;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod strategy;

pub use client::{ClientSplit, ClientState};
pub use data::{LabeledDataset, PartitionMode, PartitionSpec};
pub use error::{Error, Result};
pub use federation::{
    aggregate, run_experiment, run_experiment_with, run_round, sample_clients, Executor,
    ExperimentSpec, JoinRatio, MetricsLog, RoundConfig, Sequential, ServerState,
};
pub use matrix::Matrix;
pub use nn::{Batch, Dense, Freeze, Gradients, ModelParams};
pub use strategy::{AggregationWeights, LocalUpdateReport, Method, Observer, Silent, Upload};
