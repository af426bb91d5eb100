//! Labeled datasets, their generation and their division across clients.

mod dataset;
pub mod idx;
mod partition;
mod split;

pub use dataset::{generate_synthetic, LabeledDataset};
pub use partition::{
    partition, partition_dirichlet, partition_pathological, PartitionMode, PartitionSpec,
    DEFAULT_MIN_SAMPLES, PARTITION_RETRIES,
};
pub use split::{split_train_test, DEFAULT_TEST_FRACTION};
