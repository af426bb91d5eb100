//! Dense network engine: ReLU feature extractor plus one linear head,
//! softmax cross-entropy and hand-written backpropagation.
//!
//! Layer weights are stored `in_dim x out_dim`, so a layer maps a batch `X`
//! (`batch x in_dim`) to `X · W + b`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::matrix::{matmul_acc, Matrix};
use crate::rng::SimRng;

/// One fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.out_dim())
    }

    /// Same shape as `self`, every entry set to `value`.
    pub fn filled_like(&self, value: f64) -> Self {
        let mut d = self.zeros_like();
        for t in d.tensors_mut() {
            t.fill(value);
        }
        d
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    pub fn same_shape(&self, other: &Dense) -> bool {
        self.weights.shape() == other.weights.shape() && self.bias.len() == other.bias.len()
    }

    /// Weight entries then bias entries.
    pub fn tensors(&self) -> [&[f64]; 2] {
        [self.weights.data(), &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.data_mut(), &mut self.bias]
    }

    /// All entries, weights first, in row-major order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.data().iter().chain(&self.bias).copied()
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows(), self.out_dim());
        for r in 0..z.rows() {
            z.row_mut(r).copy_from_slice(&self.bias);
        }
        matmul_acc(x, &self.weights, &mut z);
        z
    }

    fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn ensure_same_shape(a: &Dense, b: &Dense, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{what}: {}x{} layer vs {}x{} layer",
            a.in_dim(),
            a.out_dim(),
            b.in_dim(),
            b.out_dim()
        )))
    }
}

/// Backbone split into a ReLU feature extractor and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub extractor: Vec<Dense>,
    pub head: Dense,
}

/// Per-parameter gradients, shaped like the [`ModelParams`] they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub extractor: Vec<Dense>,
    pub head: Dense,
}

fn layers<'a>(extractor: &'a [Dense], head: &'a Dense) -> impl Iterator<Item = &'a Dense> {
    extractor.iter().chain(core::iter::once(head))
}

fn same_structure(a: (&[Dense], &Dense), b: (&[Dense], &Dense)) -> bool {
    a.0.len() == b.0.len()
        && layers(a.0, a.1)
            .zip(layers(b.0, b.1))
            .all(|(x, y)| x.same_shape(y))
}

impl ModelParams {
    pub fn input_dim(&self) -> usize {
        self.extractor
            .first()
            .map_or(self.head.in_dim(), Dense::in_dim)
    }

    pub fn representation_dim(&self) -> usize {
        self.head.in_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.head.out_dim()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        layers(&self.extractor, &self.head)
    }

    pub fn extractor_param_count(&self) -> usize {
        self.extractor.iter().map(Dense::param_count).sum()
    }

    pub fn param_count(&self) -> usize {
        self.extractor_param_count() + self.head.param_count()
    }

    /// Share of parameters living in the feature extractor.
    pub fn extractor_fraction(&self) -> f64 {
        self.extractor_param_count() as f64 / self.param_count() as f64
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        same_structure(
            (&self.extractor, &self.head),
            (&other.extractor, &other.head),
        )
    }

    /// Checks that consecutive layer dimensions chain.
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<usize> = None;
        for layer in self.layers() {
            if let Some(p) = prev {
                if p != layer.in_dim() {
                    return Err(Error::shape(format!(
                        "layer expects {} inputs but previous layer yields {p}",
                        layer.in_dim()
                    )));
                }
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape("bias length differs from layer width"));
            }
            prev = Some(layer.out_dim());
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            extractor: self.extractor.iter().map(Dense::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(Dense::is_finite)
    }

    /// `{extractor, head}` with the head swapped out.
    pub fn with_head(&self, head: Dense) -> Result<ModelParams> {
        ensure_same_shape(&self.head, &head, "replacement head")?;
        Ok(ModelParams {
            extractor: self.extractor.clone(),
            head,
        })
    }
}

impl Gradients {
    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        layers(&self.extractor, &self.head)
    }
}

/// Inputs with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Which parameter groups receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Freeze {
    pub extractor: bool,
    pub head: bool,
}

impl Freeze {
    pub const NONE: Freeze = Freeze {
        extractor: false,
        head: false,
    };
    pub const EXTRACTOR: Freeze = Freeze {
        extractor: true,
        head: false,
    };
    pub const HEAD: Freeze = Freeze {
        extractor: false,
        head: true,
    };
}

/// Activations kept by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each extractor layer; the last entry is the representation
    /// fed to the head.
    pub layer_inputs: Vec<Matrix>,
    /// Pre-ReLU output of each extractor layer.
    pub pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn representation(&self) -> &Matrix {
        self.layer_inputs
            .last()
            .expect("cache holds the input at least")
    }
}

/// Glorot-uniform weights, zero biases. `extractor_dims` is `[D, h1, ..., K]`.
pub fn init_model(extractor_dims: &[usize], n_classes: usize, seed: u64) -> Result<ModelParams> {
    if extractor_dims.len() < 2 {
        return Err(Error::config(
            "extractor needs an input dimension and at least one layer width",
        ));
    }
    if extractor_dims.contains(&0) {
        return Err(Error::config("layer dimensions must be at least 1"));
    }
    if n_classes < 2 {
        return Err(Error::config("need at least two classes"));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let mut glorot = |fan_in: usize, fan_out: usize| -> Result<Dense> {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let dist = Uniform::new_inclusive(-limit, limit)
            .map_err(|e| Error::config(format!("init range: {e}")))?;
        let weights = Matrix::from_fn(fan_in, fan_out, |_, _| dist.sample(&mut rng));
        Ok(Dense {
            weights,
            bias: vec![0.0; fan_out],
        })
    };
    let extractor = extractor_dims
        .windows(2)
        .map(|w| glorot(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    let head = glorot(*extractor_dims.last().unwrap(), n_classes)?;
    Ok(ModelParams { extractor, head })
}

/// Extractor output (post-ReLU) with the cache needed by backprop.
fn forward_extractor(model: &ModelParams, inputs: &Matrix) -> Result<ForwardCache> {
    if inputs.cols() != model.input_dim() {
        return Err(Error::shape(format!(
            "model expects {} features, batch has {}",
            model.input_dim(),
            inputs.cols()
        )));
    }
    let mut layer_inputs = Vec::with_capacity(model.extractor.len() + 1);
    let mut pre_activations = Vec::with_capacity(model.extractor.len());
    layer_inputs.push(inputs.clone());
    for layer in &model.extractor {
        let z = layer.forward(layer_inputs.last().unwrap());
        let mut a = z.clone();
        for v in a.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        pre_activations.push(z);
        layer_inputs.push(a);
    }
    Ok(ForwardCache {
        layer_inputs,
        pre_activations,
    })
}

pub fn forward(model: &ModelParams, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
    let cache = forward_extractor(model, inputs)?;
    let logits = model.head.forward(cache.representation());
    Ok((logits, cache))
}

/// Row-wise softmax.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    p
}

/// Mean softmax cross-entropy of `logits` against `labels`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
        total += lse - row[y];
    }
    total / labels.len() as f64
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= n_classes) {
        Some(y) => Err(Error::shape(format!(
            "label {y} out of range for {n_classes} classes"
        ))),
        None => Ok(()),
    }
}

/// Mean cross-entropy loss and its gradients. Frozen groups get all-zero
/// gradients; the loss does not depend on `freeze`.
pub fn loss_and_grads(
    model: &ModelParams,
    batch: &Batch,
    freeze: Freeze,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::usage("loss of an empty batch"));
    }
    check_labels(&batch.labels, model.n_classes())?;
    let (logits, cache) = forward(model, &batch.inputs)?;
    let loss = cross_entropy(&logits, &batch.labels);
    let mut grads = model.zero_gradients();
    if freeze.extractor && freeze.head {
        return Ok((loss, grads));
    }

    // dL/dlogits = (softmax - onehot) / B
    let scale = 1.0 / batch.len() as f64;
    let mut delta = softmax(&logits);
    for (r, &y) in batch.labels.iter().enumerate() {
        let row = delta.row_mut(r);
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }

    if !freeze.head {
        grads.head.weights = cache.representation().t_matmul(&delta)?;
        grads.head.bias = delta.column_sums();
    }
    if freeze.extractor {
        return Ok((loss, grads));
    }

    let mut upstream = delta.matmul_t(&model.head.weights)?;
    for (i, layer) in model.extractor.iter().enumerate().rev() {
        let pre = &cache.pre_activations[i];
        for (g, &z) in upstream.data_mut().iter_mut().zip(pre.data()) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        grads.extractor[i].weights = cache.layer_inputs[i].t_matmul(&upstream)?;
        grads.extractor[i].bias = upstream.column_sums();
        if i > 0 {
            upstream = upstream.matmul_t(&layer.weights)?;
        }
    }
    Ok((loss, grads))
}

fn ensure_congruent(model: &ModelParams, grads: &Gradients) -> Result<()> {
    if same_structure(
        (&model.extractor, &model.head),
        (&grads.extractor, &grads.head),
    ) {
        Ok(())
    } else {
        Err(Error::shape("gradients do not match model structure"))
    }
}

fn step_layer(layer: &mut Dense, grad: &Dense, lr: f64) {
    for (p, g) in layer.tensors_mut().into_iter().zip(grad.tensors()) {
        for (p, g) in p.iter_mut().zip(g) {
            *p -= lr * g;
        }
    }
}

/// In-place `p <- p - lr * g`, leaving frozen groups untouched.
pub fn sgd_step_in_place(
    model: &mut ModelParams,
    grads: &Gradients,
    lr: f64,
    freeze: Freeze,
) -> Result<()> {
    ensure_congruent(model, grads)?;
    if !freeze.extractor {
        for (layer, g) in model.extractor.iter_mut().zip(&grads.extractor) {
            step_layer(layer, g, lr);
        }
    }
    if !freeze.head {
        step_layer(&mut model.head, &grads.head, lr);
    }
    Ok(())
}

pub fn sgd_step(model: &ModelParams, grads: &Gradients, lr: f64) -> Result<ModelParams> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::config(
            "learning rate must be finite and non-negative",
        ));
    }
    let mut next = model.clone();
    sgd_step_in_place(&mut next, grads, lr, Freeze::NONE)?;
    Ok(next)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ModelParams, inputs: &Matrix) -> Result<Vec<usize>> {
    let (logits, _) = forward(model, inputs)?;
    Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
}

/// Fraction of samples whose predicted class equals the label.
pub fn accuracy(model: &ModelParams, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::usage("accuracy of an empty dataset"));
    }
    if inputs.rows() != labels.len() {
        return Err(Error::shape("inputs and labels differ in length"));
    }
    let predicted = predict(model, inputs)?;
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / labels.len() as f64)
}
