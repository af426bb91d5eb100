use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::client::ClientSplit;
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

use super::LabeledDataset;

pub const DEFAULT_TEST_FRACTION: f64 = 0.25;

/// Seeded uniform shuffle, then the first `round(n * test_fraction)` samples
/// (clamped so both sides are non-empty) become the test set.
pub fn split_train_test(
    client_id: usize,
    data: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<ClientSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.len();
    if n < 4 {
        return Err(Error::config(format!(
            "client {client_id} has {n} samples; at least 4 are needed for a train/test split"
        )));
    }
    let n_test = (libm::round(n as f64 * test_fraction) as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed, &[stream::TRAIN_TEST_SPLIT]));
    let (test, train) = order.split_at(n_test);
    let mut test = test.to_vec();
    let mut train = train.to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(ClientSplit {
        client_id,
        train: data.subset(&train),
        test: data.subset(&test),
    })
}
