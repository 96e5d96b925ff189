use cmqe_core::embedding::FeatureMatrix;
use cmqe_core::gbdt::{
    argmax, decode_model, encode_model, fit, fit_with_history, load_model, save_model,
    BoostedEnsemble, Node, RegressionTree, TrainConfig,
};
use cmqe_core::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(
    seed: u64,
    per_class: usize,
    centers: &[(f64, f64)],
    spread: f64,
) -> (FeatureMatrix, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (k, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..per_class {
            rows.push(vec![
                cx + rng.random_range(-spread..spread),
                cy + rng.random_range(-spread..spread),
            ]);
            y.push(Label::from(k as i64));
        }
    }
    (FeatureMatrix::from_rows(&rows), y)
}

fn accuracy(m: &BoostedEnsemble, x: &FeatureMatrix, y: &[Label]) -> f64 {
    let hits = (0..x.n_rows())
        .filter(|&i| m.predict_class(x.row(i)).unwrap() == y[i])
        .count();
    hits as f64 / y.len() as f64
}

#[test]
fn separable_blobs_fit_perfectly() {
    let (x, y) = blobs(11, 100, &[(-2.0, -2.0), (2.0, 2.0)], 1.5);
    let m = fit(&x, &y, &TrainConfig::default()).unwrap();
    assert_eq!(accuracy(&m, &x, &y), 1.0);

    let (x, y) = blobs(
        12,
        60,
        &[(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (5.0, 5.0)],
        2.0,
    );
    let m = fit(&x, &y, &TrainConfig::default()).unwrap();
    assert_eq!(accuracy(&m, &x, &y), 1.0);
}

#[test]
fn training_never_ends_worse_than_priors() {
    let datasets = [
        blobs(1, 50, &[(0.0, 0.0), (1.0, 1.0)], 2.0),
        blobs(2, 30, &[(0.0, 0.0), (0.5, 0.0), (0.0, 0.5)], 3.0),
        blobs(3, 20, &[(0.0, 0.0), (0.0, 0.0)], 1.0),
    ];
    for (x, y) in &datasets {
        let (_, hist) = fit_with_history(x, y, &TrainConfig::default()).unwrap();
        assert!(
            hist.last().unwrap() <= &hist[0],
            "{} > {}",
            hist.last().unwrap(),
            hist[0]
        );
    }
}

#[test]
fn training_is_bit_reproducible() {
    let (x, y) = blobs(5, 40, &[(0.0, 0.0), (1.0, 0.5), (0.3, 1.0)], 1.0);
    let a = encode_model(&fit(&x, &y, &TrainConfig::default()).unwrap());
    let b = encode_model(&fit(&x, &y, &TrainConfig::default()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn training_scores_equal_prediction_path() {
    // predictions replayed through predict_proba reproduce the final training logloss
    let (x, y) = blobs(6, 30, &[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], 1.2);
    let cfg = TrainConfig {
        iterations: 25,
        ..Default::default()
    };
    let (m, hist) = fit_with_history(&x, &y, &cfg).unwrap();
    let targets: Vec<usize> = y
        .iter()
        .map(|l| m.class_labels.binary_search(l).unwrap())
        .collect();
    let probs = m.predict_proba_matrix(&x).unwrap();
    assert_eq!(
        cmqe_core::gbdt::logloss(&probs, &targets),
        *hist.last().unwrap()
    );
}

fn random_model(seed: u64) -> BoostedEnsemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..90)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let y: Vec<Label> = (0..90)
        .map(|_| Label::from(rng.random_range(1..=3)))
        .collect();
    let cfg = TrainConfig {
        iterations: 15,
        max_depth: 3,
        min_samples_leaf: 3,
        ..Default::default()
    };
    fit(&FeatureMatrix::from_rows(&rows), &y, &cfg).unwrap()
}

/// Walks every tree by hand and applies exp/normalise directly.
fn oracle_proba(m: &BoostedEnsemble, x: &[f64]) -> Vec<f64> {
    fn walk(t: &RegressionTree, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match t.nodes()[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    }
                }
            }
        }
    }
    let k = m.n_classes();
    let mut s = m.base_scores.clone();
    for (i, t) in m.trees.iter().enumerate() {
        s[i % k] += m.config.learning_rate * walk(t, x);
    }
    let e: Vec<f64> = s.iter().map(|v| v.exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

#[test]
fn proba_matches_direct_softmax() {
    let m = random_model(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
        let p = m.predict_proba(&x).unwrap();
        for (a, b) in p.iter().zip(oracle_proba(&m, &x)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn predict_class_is_argmax_of_proba() {
    let m = random_model(10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = m.predict_proba(&x).unwrap();
        assert_eq!(m.predict_class(&x).unwrap(), m.class_labels[argmax(&p)]);
    }
}

#[test]
fn saved_model_predicts_identically() {
    let m = random_model(12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cmqm");
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = m.predict_proba(&x).unwrap();
        let b = back.predict_proba(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
    let path2 = dir.path().join("m2.cmqm");
    save_model(&back, &path2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
    assert!(decode_model(&std::fs::read(&path).unwrap()[..20]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_are_a_distribution(x in prop::collection::vec(-1e6f64..1e6, 4), seed in 0u64..4) {
        let m = random_model(seed);
        let p = m.predict_proba(&x).unwrap();
        prop_assert_eq!(p.len(), 3);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
