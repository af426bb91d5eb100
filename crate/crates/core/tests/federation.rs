mod common;

use std::sync::Mutex;

use common::small_setup;
use fedah_core::federation::{aggregation_coefficients, setup_experiment};
use fedah_core::nn::{init_model, Dense};
use fedah_core::rng::rng_from;
use fedah_core::{
    aggregate, run_experiment, run_experiment_with, run_round, sample_clients, AggregationWeights,
    Executor, JoinRatio, Matrix, Method, ModelParams, Observer, RoundConfig, Sequential, Silent,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rounds(total: usize) -> RoundConfig {
    RoundConfig {
        total_rounds: total,
        batch_size: 5,
        local_lr: 0.05,
        master_seed: 3,
        ..RoundConfig::default()
    }
}

#[test]
fn full_participation_takes_everyone() {
    let mut rng = rng_from(1, &[0]);
    for _ in 0..5 {
        assert_eq!(
            sample_clients(20, JoinRatio::Fixed(1.0), &mut rng),
            (0..20).collect::<Vec<_>>()
        );
    }
}

#[test]
fn tenth_of_twenty_is_two() {
    let mut rng = rng_from(1, &[0]);
    for _ in 0..20 {
        let s = sample_clients(20, JoinRatio::Fixed(0.1), &mut rng);
        assert_eq!(s.len(), 2);
        assert!(s[0] < s[1] && s[1] < 20);
    }
    assert_eq!(sample_clients(30, JoinRatio::Fixed(0.1), &mut rng).len(), 3);
    assert_eq!(sample_clients(3, JoinRatio::Fixed(0.01), &mut rng).len(), 1);
}

#[test]
fn ranged_sampling_replays_under_a_seed() {
    let draw = || {
        let mut rng = rng_from(77, &[2]);
        (0..30)
            .map(|_| {
                sample_clients(
                    20,
                    JoinRatio::Range {
                        low: 0.1,
                        high: 1.0,
                    },
                    &mut rng,
                )
            })
            .collect::<Vec<_>>()
    };
    let a = draw();
    assert_eq!(a, draw());
    let sizes: Vec<usize> = a.iter().map(Vec::len).collect();
    assert!(sizes.iter().all(|&n| (2..=20).contains(&n)));
    assert!(sizes.iter().min() != sizes.iter().max());
}

fn scalar_model(v: f64) -> ModelParams {
    let d = |v| Dense {
        weights: Matrix::from_vec(1, 1, vec![v]).unwrap(),
        bias: vec![v],
    };
    ModelParams {
        extractor: vec![d(v)],
        head: d(v),
    }
}

#[test]
fn sizes_thirty_and_seventy() {
    let k = aggregation_coefficients(&[30, 70]).unwrap();
    assert!((k[0] - 0.3).abs() < 1e-12 && (k[1] - 0.7).abs() < 1e-12);
    let (a, b) = (scalar_model(0.0), scalar_model(1.0));
    let agg = aggregate(&[&a, &b], &[30, 70]).unwrap();
    for v in agg.layers().flat_map(Dense::values) {
        assert!((v - 0.7).abs() < 1e-12);
    }
}

#[test]
fn aggregation_matches_per_entry_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..10 {
        let n = 1 + trial % 5;
        let models: Vec<ModelParams> = (0..n)
            .map(|i| init_model(&[4, 6, 3], 5, 100 + trial as u64 * 10 + i as u64).unwrap())
            .collect();
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..200)).collect();
        let refs: Vec<&ModelParams> = models.iter().collect();
        let agg = aggregate(&refs, &sizes).unwrap();
        let total: usize = sizes.iter().sum();
        let k = aggregation_coefficients(&sizes).unwrap();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let layers: Vec<Vec<f64>> = agg.layers().map(|l| l.values().collect()).collect();
        for (l, got) in layers.iter().enumerate() {
            for (e, g) in got.iter().enumerate() {
                let mut expected = 0.0;
                for (m, &size) in models.iter().zip(&sizes) {
                    let v: Vec<f64> = m.layers().nth(l).unwrap().values().collect();
                    expected += size as f64 / total as f64 * v[e];
                }
                assert!((g - expected).abs() < 1e-12);
            }
        }
    }
    let single = init_model(&[4, 6], 3, 1).unwrap();
    assert_eq!(aggregate(&[&single], &[17]).unwrap(), single);
    let other = init_model(&[4, 5], 3, 1).unwrap();
    assert!(matches!(
        aggregate(&[&single, &other], &[1, 1]),
        Err(fedah_core::Error::Shape(_))
    ));
}

#[test]
fn transmitted_counts_follow_sharing_contract() {
    for method in Method::ALL {
        let mut cfg = rounds(4);
        cfg.join_ratio = JoinRatio::Range {
            low: 0.2,
            high: 1.0,
        };
        let (ds, spec) = small_setup(6, cfg);
        let mut state = setup_experiment(&ds, &spec, method).unwrap();
        let sigma = state.global_model.param_count();
        let extractor = state.global_model.extractor_param_count();
        let mut cumulative = 0;
        while !state.finished() {
            run_round(&mut state, &Sequential, &Silent).unwrap();
            let r = state.metrics.rounds.last().unwrap();
            let per_client = if matches!(method, Method::FedAvg | Method::FedAh) {
                sigma
            } else {
                extractor
            };
            assert_eq!(
                r.params_transmitted,
                2 * per_client * r.sampled.len(),
                "{method}"
            );
            cumulative += r.params_transmitted;
            assert_eq!(r.params_transmitted_cumulative, cumulative);
        }
        let alpha = state.global_model.extractor_fraction();
        assert!(alpha > 0.0 && alpha < 1.0);
    }
}

#[test]
fn non_sampled_clients_are_untouched() {
    let mut cfg = rounds(6);
    cfg.join_ratio = JoinRatio::Fixed(0.4);
    for method in Method::ALL {
        let (ds, spec) = small_setup(5, cfg.clone());
        let mut state = setup_experiment(&ds, &spec, method).unwrap();
        while !state.finished() {
            let before = state.clients.clone();
            run_round(&mut state, &Sequential, &Silent).unwrap();
            let sampled = &state.metrics.rounds.last().unwrap().sampled;
            assert_eq!(sampled.len(), 2);
            for (b, a) in before.iter().zip(&state.clients) {
                if !sampled.contains(&b.id) {
                    assert_eq!(b, a);
                }
            }
        }
    }
}

#[test]
fn single_round_two_clients() {
    for method in Method::ALL {
        let (ds, spec) = small_setup(2, rounds(1));
        let log = run_experiment(&ds, &spec, method).unwrap();
        assert_eq!(log.rounds.len(), 1);
        let eval = log.rounds[0].eval.as_ref().unwrap();
        assert_eq!(eval.client_accuracies.len(), 2);
        assert_eq!(log.best_mean_accuracy, eval.mean_accuracy);
        assert_eq!(log.best_round, Some(1));
    }
}

#[test]
fn evaluation_schedule_and_best_is_running_max() {
    let mut cfg = rounds(7);
    cfg.eval_every = 3;
    let (ds, spec) = small_setup(4, cfg);
    let log = run_experiment(&ds, &spec, Method::FedAh).unwrap();
    let evaluated: Vec<usize> = log.evaluations().map(|(r, _)| r.round).collect();
    assert_eq!(evaluated, vec![3, 6, 7]);
    let best = log
        .accuracy_curve()
        .iter()
        .map(|p| p.1)
        .fold(f64::MIN, f64::max);
    assert_eq!(log.best_mean_accuracy, best);
    assert!(log.mean_per_client_best() >= log.best_mean_accuracy - 1e-12);
}

#[test]
fn reruns_are_bit_identical() {
    let mut cfg = rounds(5);
    cfg.join_ratio = JoinRatio::Range {
        low: 0.3,
        high: 1.0,
    };
    for method in Method::ALL {
        let (ds, spec) = small_setup(5, cfg.clone());
        assert_eq!(
            run_experiment(&ds, &spec, method).unwrap(),
            run_experiment(&ds, &spec, method).unwrap()
        );
    }
}

/// Runs jobs back to front, to show results do not depend on order.
struct Reversed;

impl Executor for Reversed {
    fn map<T: Send, R: Send, F: Fn(T) -> R + Sync>(&self, items: Vec<T>, f: F) -> Vec<R> {
        let mut out: Vec<R> = items.into_iter().rev().map(f).collect();
        out.reverse();
        out
    }
}

#[test]
fn schedule_does_not_change_results() {
    let mut cfg = rounds(5);
    cfg.join_ratio = JoinRatio::Fixed(0.6);
    for method in Method::ALL {
        let (ds, spec) = small_setup(5, cfg.clone());
        let a = run_experiment_with(&ds, &spec, method, &Sequential, &Silent).unwrap();
        let b = run_experiment_with(&ds, &spec, method, &Reversed, &Silent).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn zero_weights_without_learning_reduce_to_fedrep() {
    let mut cfg = rounds(5);
    cfg.weight_lr = Some(0.0);
    cfg.weight_init = 0.0;
    let (ds, spec) = small_setup(4, cfg);
    let rep = run_experiment(&ds, &spec, Method::FedRep).unwrap();
    let ah = run_experiment(&ds, &spec, Method::FedAh).unwrap();
    for (r, a) in rep.rounds.iter().zip(&ah.rounds) {
        let (r, a) = (r.eval.as_ref().unwrap(), a.eval.as_ref().unwrap());
        for (x, y) in r.client_accuracies.iter().zip(&a.client_accuracies) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[derive(Default)]
struct Invariants {
    violations: Mutex<Vec<String>>,
    heads: Mutex<usize>,
    steps: Mutex<usize>,
}

impl Observer for Invariants {
    fn aggregated_head(&self, client: usize, prev: &Dense, global: &Dense, built: &Dense) {
        *self.heads.lock().unwrap() += 1;
        for ((p, g), b) in prev.values().zip(global.values()).zip(built.values()) {
            if b < p.min(g) || b > p.max(g) {
                self.violations
                    .lock()
                    .unwrap()
                    .push(format!("client {client}: {b} outside [{p}, {g}]"));
            }
        }
    }

    fn weight_step(&self, client: usize, weights: &AggregationWeights) {
        *self.steps.lock().unwrap() += 1;
        if !weights.within_unit_interval() {
            self.violations
                .lock()
                .unwrap()
                .push(format!("client {client}: weight left [0, 1]"));
        }
    }
}

#[test]
fn interpolation_and_clipping_hold_at_every_step() {
    let mut cfg = rounds(12);
    // A large weight step forces clipping on both ends.
    cfg.weight_lr = Some(50.0);
    cfg.join_ratio = JoinRatio::Range {
        low: 0.3,
        high: 1.0,
    };
    let (ds, spec) = small_setup(5, cfg);
    let obs = Invariants::default();
    let mut state = setup_experiment(&ds, &spec, Method::FedAh).unwrap();
    let mut saw_zero = false;
    let mut saw_one = false;
    while !state.finished() {
        run_round(&mut state, &Sequential, &obs).unwrap();
        for c in &state.clients {
            if let Some(w) = &c.agg_weights {
                saw_zero |= w.values().any(|v| v == 0.0);
                saw_one |= w.values().any(|v| v == 1.0);
            }
        }
    }
    assert!(
        obs.violations.lock().unwrap().is_empty(),
        "{:?}",
        obs.violations.lock().unwrap()
    );
    assert!(*obs.heads.lock().unwrap() > 0 && *obs.steps.lock().unwrap() > 0);
    assert!(saw_zero && saw_one);
}

#[test]
fn early_stopping_cuts_the_run_short() {
    let mut cfg = rounds(200);
    cfg.early_stop_patience = Some(2);
    cfg.local_lr = 1e-9;
    let (ds, spec) = small_setup(3, cfg);
    let log = run_experiment(&ds, &spec, Method::FedAvg).unwrap();
    assert!(log.stopped_early);
    assert!(log.rounds.len() < 200);
}

#[test]
fn client_errors_carry_the_client_id() {
    let mut cfg = rounds(1);
    cfg.local_lr = 1e300;
    let (ds, spec) = small_setup(3, cfg);
    let err = run_experiment(&ds, &spec, Method::FedAvg).unwrap_err();
    assert!(
        matches!(err, fedah_core::Error::Client { client: 0, .. }),
        "{err}"
    );
}
