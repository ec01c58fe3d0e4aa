mod common;

use iotprint::classify::{
    fit, open_set_accuracy, run_experiment2, search_threshold, verdict_from_posterior, DatasetBundle, Decision,
    ExperimentConfig, OpenSetTask, ThresholdGrid,
};
use iotprint::dataset::{split, SplitPolicy};
use iotprint::nn::{InitSpec, TrainingConfig};
use ndarray::{Array2, ArrayView1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn random_posteriors(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut p = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.0f64..1.0).powi(4));
    for mut r in p.rows_mut() {
        if rng.random_bool(0.3) {
            // quantized rows put max probabilities exactly on grid points
            let k = rng.random_range(0..cols);
            r.fill(0.0);
            let top = f64::from(rng.random_range(30..=100u32)) / 100.0;
            r[k] = top;
            if cols > 1 {
                r[(k + 1) % cols] = 1.0 - top;
            }
        } else {
            let s = r.sum();
            r.mapv_inplace(|v| v / s);
        }
    }
    p
}

/// Accuracy at every k/100 by direct counting; best keeps the larger
/// threshold on ties.
fn exhaustive(post: &Array2<f64>, truth: &[usize], excluded: usize, known_to_full: &[usize]) -> (f64, f64, Vec<f64>) {
    let mut accs = Vec::new();
    let mut best = (0.0, -1.0);
    for k in 1..100u32 {
        let t = f64::from(k) / 100.0;
        let mut correct = 0;
        for (r, &y) in post.rows().into_iter().zip(truth) {
            let mut arg = 0;
            for j in 1..r.len() {
                if r[j] > r[arg] {
                    arg = j;
                }
            }
            let pred = if r[arg] > t { known_to_full[arg] } else { excluded };
            if pred == y {
                correct += 1;
            }
        }
        let acc = correct as f64 / truth.len() as f64;
        accs.push(acc);
        if acc >= best.1 {
            best = (t, acc);
        }
    }
    (best.0, best.1, accs)
}

#[test]
fn grid_search_matches_exhaustive_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let full = rng.random_range(3..=9);
        let excluded = rng.random_range(0..full);
        let task = OpenSetTask::new(full, excluded);
        let rows = rng.random_range(5..200);
        let post = random_posteriors(&mut rng, rows, full - 1);
        let mut truth: Vec<usize> = (0..rows).map(|_| rng.random_range(0..full)).collect();
        truth[0] = excluded;
        let got = search_threshold(&post, &truth, &task, &ThresholdGrid::default()).unwrap();
        let (t, acc, accs) = exhaustive(&post, &truth, excluded, &task.known_to_full);
        assert_eq!(got.threshold, t);
        assert_eq!(got.accuracy, acc);
        assert_eq!(got.sweep.iter().map(|g| g.accuracy).collect::<Vec<_>>(), accs);
    }
}

#[test]
fn search_needs_unknown_examples() {
    let post = Array2::from_elem((3, 2), 0.5);
    let task = OpenSetTask::new(3, 2);
    assert!(search_threshold(&post, &[0, 1, 0], &task, &ThresholdGrid::default()).is_err());
}

#[test]
fn grid_steps_must_divide_one() {
    assert_eq!(ThresholdGrid::from_step(0.01).unwrap().values().count(), 99);
    assert_eq!(ThresholdGrid::from_step(0.25).unwrap().values().collect::<Vec<_>>(), vec![0.25, 0.5, 0.75]);
    assert!(ThresholdGrid::from_step(0.03).is_err());
    assert!(ThresholdGrid::from_step(0.0).is_err());
}

proptest! {
    #[test]
    fn verdicts_are_consistent_and_monotone(seed in any::<u64>(), cols in 1usize..10, t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let post = random_posteriors(&mut rng, 1, cols);
        let row = post.row(0);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = verdict_from_posterior(row, lo);
        let b = verdict_from_posterior(row, hi);
        let max = row.fold(0.0f64, |m, &v| m.max(v));
        prop_assert_eq!(a.max_prob, max);
        match a.decision {
            Decision::Known(k) => {
                prop_assert!(max > lo);
                prop_assert_eq!(row[k], max);
            }
            Decision::Unknown => prop_assert!(max <= lo),
        }
        // raising the threshold can only turn Known into Unknown
        if a.decision == Decision::Unknown {
            prop_assert_eq!(b.decision, Decision::Unknown);
        } else if b.decision != Decision::Unknown {
            prop_assert_eq!(a.decision, b.decision);
        }
    }

    #[test]
    fn unknown_count_grows_with_threshold(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let post = random_posteriors(&mut rng, 50, 4);
        let mut last = 0;
        for t in ThresholdGrid::default().values() {
            let n = post.rows().into_iter().filter(|r| verdict_from_posterior(r.view(), t).decision == Decision::Unknown).count();
            prop_assert!(n >= last);
            last = n;
        }
    }
}

#[test]
fn single_row_accuracy_is_zero_or_one() {
    let post = ndarray::array![[0.7, 0.3]];
    let task = OpenSetTask::new(3, 0);
    assert_eq!(open_set_accuracy(&post, &[1], &task, 0.5), 1.0);
    assert_eq!(open_set_accuracy(&post, &[0], &task, 0.5), 0.0);
    assert_eq!(open_set_accuracy(&post, &[0], &task, 0.7), 1.0);
    let v = verdict_from_posterior(ArrayView1::from(&[0.5, 0.5]), 0.5);
    assert_eq!(v.decision, Decision::Unknown);
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        hidden_width: 32,
        init: InitSpec { seed: 3, ..InitSpec::default() },
        training: TrainingConfig { epochs: 3, batch_size: 50, shuffle_seed: 5, ..TrainingConfig::default() },
        selection_epochs: None,
        strict: false,
        threshold_grid_step: 0.01,
    }
}

#[test]
fn checkpointed_selection_equals_retraining() {
    let ds = synthetic_dataset(4, 150, 2);
    let (tr, va, _) = split(&ds, &SplitPolicy::with_seed(1)).unwrap();
    let selecting = ExperimentConfig { selection_epochs: Some(6), ..small_config() };
    let picked = fit(&tr, &va, &selecting).unwrap();
    assert_eq!(picked.history.len(), 6);
    let retrain = ExperimentConfig {
        training: TrainingConfig { epochs: picked.epochs, ..small_config().training },
        ..small_config()
    };
    let again = fit(&tr, &va, &retrain).unwrap();
    assert_eq!(again.epochs, picked.epochs);
    assert_eq!(again.model, picked.model);
}

#[test]
fn held_out_device_is_never_trained_on() {
    let ds = synthetic_dataset(4, 150, 4);
    let (tr, va, te) = split(&ds, &SplitPolicy::with_seed(2)).unwrap();
    let bundle = DatasetBundle::new(tr, va, te).unwrap();
    let held = bundle.label_names()[1].clone();
    let out = run_experiment2(&bundle, &held, &small_config()).unwrap();
    assert_eq!(out.shared_with_training, 0);
    assert!(!out.profile.known_labels.contains(&held));
    assert_eq!(out.profile.known_labels.len(), 3);
    assert_eq!(out.confusion.size(), 4);
    assert!(out.confusion.class_names[1].ends_with("(unknown)"));
    assert_eq!(out.confusion.total() as usize, bundle.test.len());
    assert!(run_experiment2(&bundle, "no such device", &small_config()).is_err());
}
