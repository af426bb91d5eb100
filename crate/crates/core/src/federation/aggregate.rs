use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{Dense, ModelParams};

/// `k_i = n_i / Σ n_j` over the given clients.
pub fn aggregation_coefficients(data_sizes: &[usize]) -> Result<Vec<f64>> {
    let total: usize = data_sizes.iter().sum();
    if data_sizes.is_empty() || total == 0 {
        return Err(Error::usage(
            "aggregation needs at least one client with data",
        ));
    }
    Ok(data_sizes
        .iter()
        .map(|&n| n as f64 / total as f64)
        .collect())
}

fn weighted_sum_into(out: &mut Dense, sources: &[&Dense], coefficients: &[f64]) {
    for t in out.tensors_mut() {
        t.fill(0.0);
    }
    // Fixed client order keeps the floating-point sum reproducible.
    for (src, &k) in sources.iter().zip(coefficients) {
        for (o, s) in out.tensors_mut().into_iter().zip(src.tensors()) {
            for (o, s) in o.iter_mut().zip(s) {
                *o += k * s;
            }
        }
    }
}

/// Entry-wise `Σ k_i · layer_i` for stacks of layers with identical shapes.
pub fn aggregate_layers(stacks: &[&[Dense]], data_sizes: &[usize]) -> Result<Vec<Dense>> {
    if stacks.len() != data_sizes.len() {
        return Err(Error::shape(format!(
            "{} parameter sets but {} data sizes",
            stacks.len(),
            data_sizes.len()
        )));
    }
    let coefficients = aggregation_coefficients(data_sizes)?;
    let first = stacks[0];
    for s in stacks {
        if s.len() != first.len() || s.iter().zip(first).any(|(a, b)| !a.same_shape(b)) {
            return Err(Error::shape("cannot aggregate differently shaped models"));
        }
    }
    Ok((0..first.len())
        .map(|l| {
            let sources: Vec<&Dense> = stacks.iter().map(|s| &s[l]).collect();
            let mut out = first[l].zeros_like();
            weighted_sum_into(&mut out, &sources, &coefficients);
            out
        })
        .collect())
}

/// Data-size-weighted average of whole models.
pub fn aggregate(models: &[&ModelParams], data_sizes: &[usize]) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::usage("nothing to aggregate"));
    }
    let stacks: Vec<Vec<Dense>> = models
        .iter()
        .map(|m| m.layers().cloned().collect())
        .collect();
    let refs: Vec<&[Dense]> = stacks.iter().map(Vec::as_slice).collect();
    let mut layers = aggregate_layers(&refs, data_sizes)?;
    let head = layers.pop().expect("models have a head");
    Ok(ModelParams {
        extractor: layers,
        head,
    })
}
