use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Batch;
use crate::rng::{rng_from, stream};

/// Feature rows with class labels. `ids` carries each sample's index in the
/// dataset it was originally drawn from, so subsets stay traceable.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub ids: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::config("dataset has no samples"));
        }
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::config(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        let ids = (0..labels.len()).collect();
        Ok(Self {
            features,
            labels,
            n_classes,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows at `indices` (positions in this dataset), keeping original ids.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Positions of the samples of each class, in dataset order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }
}

/// Gaussian blobs: class `c` is centred at `separation * u_c` for a seeded
/// random unit vector `u_c`, with unit isotropic noise. Samples are laid out
/// class by class.
pub fn generate_synthetic(
    n_classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_classes < 2 {
        return Err(Error::config("synthetic data needs at least two classes"));
    }
    if dim == 0 || per_class == 0 {
        return Err(Error::config(
            "synthetic data needs dim >= 1 and per_class >= 1",
        ));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::config("separation must be positive"));
    }
    let mut rng = rng_from(seed, &[stream::SYNTHETIC]);
    let mut centers = Vec::with_capacity(n_classes);
    while centers.len() < n_classes {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 1e-12 {
            centers.push(
                v.into_iter()
                    .map(|x| separation * x / norm)
                    .collect::<Vec<_>>(),
            );
        }
    }
    let n = n_classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in center {
                let noise: f64 = StandardNormal.sample(&mut rng);
                data.push(mu + noise);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(Matrix::from_vec(n, dim, data)?, labels, n_classes)
}
