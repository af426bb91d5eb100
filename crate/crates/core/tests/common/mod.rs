//! Reference implementations used as oracles. Written with plain nested
//! loops and no engine internals beyond the parameter containers.
#![allow(dead_code, clippy::needless_range_loop)]

use fedah_core::nn::{loss_and_grads, Batch, Dense, Freeze, ModelParams};
use fedah_core::strategy::{weight_gradient, AggregationWeights};
use fedah_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn layer(x: &[Vec<f64>], d: &Dense, relu: bool) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..d.out_dim())
                .map(|j| {
                    let mut s = d.bias[j];
                    for (k, &xk) in row.iter().enumerate() {
                        s += xk * d.weights.get(k, j);
                    }
                    if relu && s < 0.0 {
                        0.0
                    } else {
                        s
                    }
                })
                .collect()
        })
        .collect()
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn logits(model: &ModelParams, x: &Matrix) -> Vec<Vec<f64>> {
    let mut h = rows(x);
    for l in &model.extractor {
        h = layer(&h, l, true);
    }
    layer(&h, &model.head, false)
}

pub fn loss(model: &ModelParams, x: &Matrix, labels: &[usize]) -> f64 {
    let z = logits(model, x);
    let mut total = 0.0;
    for (row, &y) in z.iter().zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// `h_prev + (h_global - h_prev) * w` entry by entry.
pub fn mixed_head(prev: &Dense, global: &Dense, w: &Dense) -> Dense {
    let mut out = prev.clone();
    let n = prev.weights.data().len();
    for i in 0..n {
        let p = prev.weights.data()[i];
        out.weights.data_mut()[i] = p + (global.weights.data()[i] - p) * w.weights.data()[i];
    }
    for i in 0..prev.bias.len() {
        let p = prev.bias[i];
        out.bias[i] = p + (global.bias[i] - p) * w.bias[i];
    }
    out
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

pub fn random_dense(rng: &mut ChaCha8Rng, i: usize, o: usize, scale: f64) -> Dense {
    Dense {
        weights: random_matrix(rng, i, o, scale),
        bias: (0..o).map(|_| rng.random_range(-scale..scale)).collect(),
    }
}

/// Random model with non-zero biases and a random batch.
pub fn random_instance(
    seed: u64,
    dims: &[usize],
    c: usize,
    batch: usize,
) -> (ModelParams, Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extractor = dims
        .windows(2)
        .map(|w| random_dense(&mut rng, w[0], w[1], 1.0))
        .collect();
    let head = random_dense(&mut rng, *dims.last().unwrap(), c, 1.0);
    let x = random_matrix(&mut rng, batch, dims[0], 2.0);
    let labels = (0..batch).map(|_| rng.random_range(0..c)).collect();
    (ModelParams { extractor, head }, x, labels)
}

pub fn random_weights(rng: &mut ChaCha8Rng, like: &Dense) -> AggregationWeights {
    let mut d = like.clone();
    for v in d.weights.data_mut() {
        *v = rng.random_range(0.05..0.95);
    }
    for v in d.bias.iter_mut() {
        *v = rng.random_range(0.05..0.95);
    }
    AggregationWeights::from_dense(d).unwrap()
}

/// Double-double number `hi + lo`, about 32 significant digits. Used so the
/// finite-difference oracle is not limited by round-off in the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn new(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Layer parameters held as double-doubles.
#[derive(Debug, Clone)]
pub struct DdDense {
    /// `in x out`.
    pub weights: Vec<Vec<Dd>>,
    pub bias: Vec<Dd>,
}

impl DdDense {
    pub fn from_dense(d: &Dense) -> DdDense {
        DdDense {
            weights: (0..d.in_dim())
                .map(|k| {
                    (0..d.out_dim())
                        .map(|j| Dd::new(d.weights.get(k, j)))
                        .collect()
                })
                .collect(),
            bias: d.bias.iter().map(|&b| Dd::new(b)).collect(),
        }
    }

    /// `prev + (global - prev) * w` without rounding to f64.
    pub fn mixed(prev: &Dense, global: &Dense, w: &Dense) -> DdDense {
        let f = |p: f64, g: f64, w: f64| Dd::new(p).add(Dd::new(g).sub(Dd::new(p)).mul(Dd::new(w)));
        DdDense {
            weights: (0..prev.in_dim())
                .map(|k| {
                    (0..prev.out_dim())
                        .map(|j| {
                            f(
                                prev.weights.get(k, j),
                                global.weights.get(k, j),
                                w.weights.get(k, j),
                            )
                        })
                        .collect()
                })
                .collect(),
            bias: (0..prev.out_dim())
                .map(|j| f(prev.bias[j], global.bias[j], w.bias[j]))
                .collect(),
        }
    }
}

fn dd_layer(x: &[Vec<Dd>], d: &DdDense, relu: bool) -> Vec<Vec<Dd>> {
    x.iter()
        .map(|row| {
            (0..d.bias.len())
                .map(|j| {
                    let mut s = d.bias[j];
                    for (k, &xk) in row.iter().enumerate() {
                        s = s.add(xk.mul(d.weights[k][j]));
                    }
                    if relu && s.hi < 0.0 {
                        Dd::ZERO
                    } else {
                        s
                    }
                })
                .collect()
        })
        .collect()
}

pub fn dd_logits(extractor: &[DdDense], head: &DdDense, x: &Matrix) -> Vec<Vec<Dd>> {
    let mut h: Vec<Vec<Dd>> = rows(x)
        .into_iter()
        .map(|r| r.into_iter().map(Dd::new).collect())
        .collect();
    for l in extractor {
        h = dd_layer(&h, l, true);
    }
    dd_layer(&h, head, false)
}

pub fn dd_model(model: &ModelParams) -> (Vec<DdDense>, DdDense) {
    (
        model.extractor.iter().map(DdDense::from_dense).collect(),
        DdDense::from_dense(&model.head),
    )
}

/// Mean cross-entropy at logits `plus` minus the one at `minus`, computed as
/// `log(sum_j p_j exp(d_j)) - d_y` with `p = softmax(minus)` and
/// `d = plus - minus`, so nothing large cancels.
pub fn loss_difference(plus: &[Vec<Dd>], minus: &[Vec<Dd>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for ((zp, zm), &y) in plus.iter().zip(minus).zip(labels) {
        let d: Vec<f64> = zp.iter().zip(zm).map(|(a, b)| a.sub(*b).to_f64()).collect();
        let zm: Vec<f64> = zm.iter().map(|v| v.to_f64()).collect();
        let m = zm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = zm.iter().map(|v| (v - m).exp()).collect();
        let norm: f64 = e.iter().sum();
        let s: f64 = e.iter().zip(&d).map(|(e, d)| e / norm * d.exp_m1()).sum();
        total += s.ln_1p() - d[y];
    }
    total / labels.len() as f64
}

/// `|a - n| / max(|a|, |n|)`, with pairs below `floor` in magnitude compared
/// against `floor` instead (round-off dominates there).
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Small synthetic federation: 3 classes in 6 dimensions, split across
/// `n_clients` by a Dirichlet(0.5) partition.
pub fn small_setup(
    n_clients: usize,
    rounds: fedah_core::RoundConfig,
) -> (fedah_core::LabeledDataset, fedah_core::ExperimentSpec) {
    use fedah_core::data::generate_synthetic;
    use fedah_core::{ExperimentSpec, PartitionMode, PartitionSpec};
    let ds = generate_synthetic(3, 6, 40, 3.0, 5).unwrap();
    let spec = ExperimentSpec {
        hidden: vec![8, 5],
        partition: PartitionSpec {
            mode: PartitionMode::Dirichlet { beta: 0.5 },
            n_clients,
            min_samples_per_client: 8,
            seed: 9,
        },
        rounds,
        test_fraction: 0.25,
    };
    (ds, spec)
}

// Finite-difference checks.

/// Central-difference step.
pub const STEP: f64 = 1e-6;
/// Largest accepted relative error.
pub const TOL: f64 = 1e-6;
/// Magnitude below which errors are measured absolutely. Only exact zeros
/// (dead units, frozen groups) get near it.
pub const FLOOR: f64 = 1e-8;

pub fn layer_mut(model: &mut ModelParams, l: usize) -> &mut Dense {
    if l < model.extractor.len() {
        &mut model.extractor[l]
    } else {
        &mut model.head
    }
}

/// Central difference of the loss along one parameter. The perturbed models
/// are evaluated in double-double so round-off does not swamp small entries;
/// the divisor is the step actually taken after rounding `p ± STEP`.
fn central_difference(
    plus: (&[DdDense], &DdDense),
    minus: (&[DdDense], &DdDense),
    taken: f64,
    x: &Matrix,
    labels: &[usize],
) -> f64 {
    let zp = dd_logits(plus.0, plus.1, x);
    let zm = dd_logits(minus.0, minus.1, x);
    loss_difference(&zp, &zm, labels) / taken
}

fn taken_step(p: f64) -> f64 {
    Dd::new(p + STEP).sub(Dd::new(p - STEP)).to_f64()
}

/// Worst relative error between the analytic gradient of every parameter and
/// its central difference.
pub fn worst_model_error(seed: u64, dims: &[usize], c: usize, batch: usize) -> f64 {
    let (model, x, labels) = random_instance(seed, dims, c, batch);
    let b = Batch::new(x.clone(), labels.clone()).unwrap();
    let (_, grads) = loss_and_grads(&model, &b, Freeze::NONE).unwrap();
    let analytic: Vec<&Dense> = grads.layers().collect();
    let mut worst = 0.0f64;
    for l in 0..=model.extractor.len() {
        for t in 0..2 {
            let len = model.layers().nth(l).unwrap().tensors()[t].len();
            for i in 0..len {
                let p = model.layers().nth(l).unwrap().tensors()[t][i];
                let mut plus = model.clone();
                layer_mut(&mut plus, l).tensors_mut()[t][i] = p + STEP;
                let mut minus = model.clone();
                layer_mut(&mut minus, l).tensors_mut()[t][i] = p - STEP;
                let (pe, ph) = dd_model(&plus);
                let (me, mh) = dd_model(&minus);
                let numeric =
                    central_difference((&pe, &ph), (&me, &mh), taken_step(p), &x, &labels);
                let a = analytic[l].tensors()[t][i];
                worst = worst.max(rel_err(a, numeric, FLOOR));
            }
        }
    }
    worst
}

/// Worst relative error of the mixing-weight gradient against central
/// differences of the loss as a function of `W`.
pub fn worst_weight_error(seed: u64, dims: &[usize], c: usize, batch: usize) -> f64 {
    let (model, x, labels) = random_instance(seed, dims, c, batch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let prev = random_dense(&mut rng, model.head.in_dim(), c, 1.0);
    let global = random_dense(&mut rng, model.head.in_dim(), c, 1.0);
    let w = random_weights(&mut rng, &model.head);
    let b = Batch::new(x.clone(), labels.clone()).unwrap();
    let (l, grad) = weight_gradient(&model.extractor, &prev, &global, &w, &b).unwrap();
    let base = w.as_dense().clone();
    let reference = ModelParams {
        extractor: model.extractor.clone(),
        head: mixed_head(&prev, &global, &base),
    };
    assert!((l - loss(&reference, &x, &labels)).abs() < 1e-12);
    let (ext, _) = dd_model(&model);
    let mut worst = 0.0f64;
    for t in 0..2 {
        for i in 0..base.tensors()[t].len() {
            let wv = base.tensors()[t][i];
            let mut plus = base.clone();
            plus.tensors_mut()[t][i] = wv + STEP;
            let mut minus = base.clone();
            minus.tensors_mut()[t][i] = wv - STEP;
            let ph = DdDense::mixed(&prev, &global, &plus);
            let mh = DdDense::mixed(&prev, &global, &minus);
            let numeric = central_difference((&ext, &ph), (&ext, &mh), taken_step(wv), &x, &labels);
            worst = worst.max(rel_err(grad.tensors()[t][i], numeric, FLOOR));
        }
    }
    worst
}
