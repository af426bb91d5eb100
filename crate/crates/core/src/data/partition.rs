//! Label-skewed division of a dataset across clients.
//!
//! Two regimes are supported. In the pathological regime every client owns a
//! fixed number of classes; classes are dealt round-robin over a seeded
//! shuffle and a class shared by several clients is split among them by
//! Dir(1) proportions, so owners get unequal shares. In the Dirichlet regime
//! each class is split over all clients by a Dir(beta) draw.
//!
//! Both regimes resample the whole partition (fresh sub-seed per attempt)
//! until every client holds at least `min_samples_per_client` samples.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng::{rng_from, stream, SimRng};

use super::LabeledDataset;

pub const DEFAULT_MIN_SAMPLES: usize = 8;
pub const PARTITION_RETRIES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionMode {
    Pathological { classes_per_client: usize },
    Dirichlet { beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub n_clients: usize,
    pub min_samples_per_client: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::config("need at least one client"));
        }
        if self.min_samples_per_client == 0 {
            return Err(Error::config("min_samples_per_client must be at least 1"));
        }
        match self.mode {
            PartitionMode::Dirichlet { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::config(format!("beta must be positive, got {beta}")))
            }
            PartitionMode::Pathological {
                classes_per_client: k,
            } if k == 0 || k > n_classes => Err(Error::config(format!(
                "classes_per_client must be in 1..={n_classes}, got {k}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Dispatches on `spec.mode`.
pub fn partition(ds: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<LabeledDataset>> {
    match spec.mode {
        PartitionMode::Pathological { .. } => partition_pathological(ds, spec),
        PartitionMode::Dirichlet { .. } => partition_dirichlet(ds, spec),
    }
}

/// Splits `total` into integer parts proportional to `weights` (largest
/// remainder; ties go to the lower index).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| libm::floor(*e) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - libm::floor(exact[a]);
        let fb = exact[b] - libm::floor(exact[b]);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn sample_dirichlet(rng: &mut SimRng, concentration: f64, n: usize) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::config(format!("Dirichlet concentration {concentration}: {e}")))?;
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        for d in &mut draws {
            *d /= sum;
        }
    } else {
        // Every Gamma draw underflowed (tiny beta): all mass on one client.
        draws.fill(0.0);
        draws[rng.random_range(0..n)] = 1.0;
    }
    Ok(draws)
}

fn deal(class_indices: &[usize], owners: &[usize], counts: &[usize], out: &mut [Vec<usize>]) {
    let mut start = 0;
    for (&client, &count) in owners.iter().zip(counts) {
        out[client].extend_from_slice(&class_indices[start..start + count]);
        start += count;
    }
}

fn finish(
    ds: &LabeledDataset,
    spec: &PartitionSpec,
    mut assignments: Vec<Vec<usize>>,
) -> Option<Vec<LabeledDataset>> {
    if assignments
        .iter()
        .any(|a| a.len() < spec.min_samples_per_client)
    {
        return None;
    }
    Some(
        assignments
            .iter_mut()
            .map(|a| {
                a.sort_unstable();
                ds.subset(a)
            })
            .collect(),
    )
}

fn exhausted(spec: &PartitionSpec, hint: &str) -> Error {
    Error::config(format!(
        "could not give each of {} clients at least {} samples in {PARTITION_RETRIES} attempts; {hint}",
        spec.n_clients, spec.min_samples_per_client
    ))
}

fn check_capacity(ds: &LabeledDataset, spec: &PartitionSpec) -> Result<()> {
    if spec.n_clients * spec.min_samples_per_client > ds.len() {
        return Err(Error::config(format!(
            "{} samples cannot give {} clients {} samples each",
            ds.len(),
            spec.n_clients,
            spec.min_samples_per_client
        )));
    }
    Ok(())
}

/// Every client ends up with samples from exactly `classes_per_client`
/// classes; no sample is given to two clients.
pub fn partition_pathological(
    ds: &LabeledDataset,
    spec: &PartitionSpec,
) -> Result<Vec<LabeledDataset>> {
    let PartitionMode::Pathological { classes_per_client } = spec.mode else {
        return Err(Error::config("partition spec is not pathological"));
    };
    spec.validate(ds.n_classes)?;
    check_capacity(ds, spec)?;
    let n_classes = ds.n_classes;
    let by_class = ds.indices_by_class();

    for attempt in 0..PARTITION_RETRIES {
        let mut rng = rng_from(spec.seed, &[stream::PARTITION_ATTEMPT, attempt]);
        let mut order: Vec<usize> = (0..n_classes).collect();
        order.shuffle(&mut rng);
        let mut owners = vec![Vec::new(); n_classes];
        for client in 0..spec.n_clients {
            for j in 0..classes_per_client {
                owners[order[(client * classes_per_client + j) % n_classes]].push(client);
            }
        }
        let mut assignments = vec![Vec::new(); spec.n_clients];
        for (class, class_owners) in owners.iter().enumerate() {
            if class_owners.is_empty() {
                continue;
            }
            let mut indices = by_class[class].clone();
            if indices.len() < class_owners.len() {
                return Err(Error::config(format!(
                    "class {class} has {} samples but {} clients need it",
                    indices.len(),
                    class_owners.len()
                )));
            }
            indices.shuffle(&mut rng);
            let shares = sample_dirichlet(&mut rng, 1.0, class_owners.len())?;
            let mut counts = apportion(indices.len() - class_owners.len(), &shares);
            for c in &mut counts {
                *c += 1;
            }
            deal(&indices, class_owners, &counts, &mut assignments);
        }
        if let Some(parts) = finish(ds, spec, assignments) {
            return Ok(parts);
        }
    }
    Err(exhausted(
        spec,
        "lower min_samples_per_client or use fewer clients",
    ))
}

/// Each class is split over all clients by its own Dir(beta) draw.
pub fn partition_dirichlet(
    ds: &LabeledDataset,
    spec: &PartitionSpec,
) -> Result<Vec<LabeledDataset>> {
    let PartitionMode::Dirichlet { beta } = spec.mode else {
        return Err(Error::config("partition spec is not Dirichlet"));
    };
    spec.validate(ds.n_classes)?;
    check_capacity(ds, spec)?;
    let by_class = ds.indices_by_class();
    let everyone: Vec<usize> = (0..spec.n_clients).collect();

    for attempt in 0..PARTITION_RETRIES {
        let mut rng = rng_from(spec.seed, &[stream::PARTITION_ATTEMPT, attempt]);
        let mut assignments = vec![Vec::new(); spec.n_clients];
        for class_indices in &by_class {
            let mut indices = class_indices.clone();
            indices.shuffle(&mut rng);
            let proportions = sample_dirichlet(&mut rng, beta, spec.n_clients)?;
            let counts = apportion(indices.len(), &proportions);
            deal(&indices, &everyone, &counts, &mut assignments);
        }
        if let Some(parts) = finish(ds, spec, assignments) {
            return Ok(parts);
        }
    }
    Err(exhausted(
        spec,
        "raise beta or lower min_samples_per_client",
    ))
}
