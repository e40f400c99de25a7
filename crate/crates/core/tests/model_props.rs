use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgaae::model::{
    decode_rates, encode, log_rates, loss_and_gradients, memberships, sample_training_pairs, train, train_with,
    DecoderForm, EncoderInputs, ModelParameters, PairBatch, TrainConfig,
};
use sgaae::spectral::{node_features, FeatureConfig, NodeFeatures};
use sgaae::{NodeRepresentation, SignedGraph};

mod common;
use common::random_signed_graph;

fn features(g: &SignedGraph, dim: usize) -> NodeFeatures {
    node_features(g, &FeatureConfig { dim, seed: 1, ..Default::default() }).unwrap()
}

fn random_simplex(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, k), |_| -rng.random::<f64>().ln());
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

fn random_representation(n: usize, k: usize, seed: u64) -> NodeRepresentation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((k, k), |_| rng.random_range(-2.0..2.0));
    let z = random_simplex(n, k, &mut rng);
    let w = random_simplex(n, k, &mut rng);
    let gamma = (0..n).map(|_| rng.random_range(-3.0..1.0)).collect();
    let delta = (0..n).map(|_| rng.random_range(-3.0..1.0)).collect();
    NodeRepresentation::from_parts(z, w, gamma, delta, &a)
}

fn assert_simplex(m: &Array2<f64>) {
    for row in m.rows() {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.sum() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn relabeling_nodes_permutes_every_output_row() {
    let g = random_signed_graph(40, 0.15, 3);
    let feats = features(&g, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = ModelParameters::init(6, 8, 4, &mut rng);
    params.temperature = 0.3;
    let base = encode(&g, &feats, &params).unwrap();

    let order: Vec<usize> = (0..40).map(|i| (i * 17 + 3) % 40).collect();
    let moved_graph = g.permuted(&order).unwrap();
    let mut moved_feats = feats.clone();
    moved_feats.matrix = Array2::from_shape_fn(feats.matrix.dim(), |(r, c)| feats.matrix[[order[r], c]]);
    let moved = encode(&moved_graph, &moved_feats, &params).unwrap();
    for (new, &old) in order.iter().enumerate() {
        for k in 0..4 {
            assert!((moved.z[[new, k]] - base.z[[old, k]]).abs() < 1e-12);
            assert!((moved.w[[new, k]] - base.w[[old, k]]).abs() < 1e-12);
        }
        assert!((moved.gamma[new] - base.gamma[old]).abs() < 1e-12);
        assert!((moved.delta[new] - base.delta[old]).abs() < 1e-12);
    }
}

#[test]
fn without_negative_edges_w_ignores_the_positive_ties() {
    let g = SignedGraph::new(6, [(0, 1, 1), (1, 2, 1), (3, 4, 1), (4, 5, 1), (0, 5, 1)]).unwrap();
    let empty = SignedGraph::new(6, []).unwrap();
    let feats = features(&g, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = ModelParameters::init(3, 5, 3, &mut rng);
    let a = encode(&g, &feats, &params).unwrap();
    let b = encode(&empty, &feats, &params).unwrap();
    assert_eq!(a.w, b.w);
    assert_eq!(a.delta, b.delta);
    assert_ne!(a.z, b.z);
}

#[test]
fn memberships_stay_on_the_simplex_throughout_training() {
    let g = random_signed_graph(50, 0.12, 8);
    let feats = features(&g, 8);
    let cfg = TrainConfig { archetypes: 4, hidden: 16, epochs: 150, block: Some(30), seed: 2, ..Default::default() };
    let mut steps = 0;
    let fit = train_with(&g, &feats, &cfg, |_, params, _| {
        let rep = encode(&g, &feats, params).unwrap();
        assert_simplex(&rep.z);
        assert_simplex(&rep.w);
        steps += 1;
    })
    .unwrap();
    assert_eq!(steps, 150);
    assert_simplex(&fit.representation.z);
    assert_simplex(&fit.representation.w);
}

#[test]
fn full_batch_smoke_run_settles() {
    let g = random_signed_graph(12, 0.4, 21);
    let feats = features(&g, 4);
    // Small steps: with the default rate Adam overshoots on a problem this small.
    let cfg = TrainConfig { archetypes: 3, hidden: 8, epochs: 400, block: Some(12), lr: 0.001, seed: 1, ..Default::default() };
    let fit = train(&g, &feats, &cfg).unwrap();
    let trace = &fit.loss_trace;
    assert!(trace[399] < 0.9 * trace[0]);
    for e in 51..trace.len() {
        assert!(trace[e] <= trace[e - 1] + 1e-6, "epoch {e}: {} after {}", trace[e], trace[e - 1]);
    }
    let again = train(&g, &feats, &cfg).unwrap();
    assert_eq!(fit.loss_trace, again.loss_trace);
    assert_eq!(fit.params, again.params);
}

#[test]
fn scaled_block_loss_is_unbiased() {
    let g = random_signed_graph(40, 0.2, 5);
    let feats = features(&g, 5);
    let inputs = EncoderInputs::new(&g, &feats).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = ModelParameters::init(5, 8, 3, &mut rng);
    let full = loss_and_gradients(&inputs, &params, 0.5, &PairBatch::full(&g), DecoderForm::Direct).unwrap().0;
    let losses: Vec<f64> = (0..500)
        .map(|_| {
            let batch = sample_training_pairs(&g, 12, &mut rng).unwrap();
            loss_and_gradients(&inputs, &params, 0.5, &batch, DecoderForm::Direct).unwrap().0
        })
        .collect();
    let mean = losses.iter().sum::<f64>() / 500.0;
    let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 499.0;
    let se = (var / 500.0).sqrt();
    assert!((mean - full).abs() <= 2.0 * se, "mean {mean} full {full} se {se}");
}

#[test]
fn block_extremes() {
    let g = random_signed_graph(9, 0.5, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let all = sample_training_pairs(&g, 9, &mut rng).unwrap();
    assert_eq!(all, PairBatch::full(&g));
    let one = sample_training_pairs(&g, 2, &mut rng).unwrap();
    assert_eq!((one.len(), one.scale), (1, 36.0));
    assert!(sample_training_pairs(&g, 1, &mut rng).is_err());
    assert!(sample_training_pairs(&g, 10, &mut rng).is_err());
}

#[test]
fn decoder_forms_agree_on_ten_thousand_pairs() {
    let rep = random_representation(300, 6, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pairs: Vec<(usize, usize)> = (0..10_000).map(|_| (rng.random_range(0..300), rng.random_range(0..300))).collect();
    let (dp, dn) = log_rates(&rep, &pairs, DecoderForm::Direct);
    let (pp, pn) = log_rates(&rep, &pairs, DecoderForm::Polarization);
    for k in 0..pairs.len() {
        assert!((dp[k] - pp[k]).abs() <= 1e-10);
        assert!((dn[k] - pn[k]).abs() <= 1e-10);
    }
}

#[test]
fn one_hot_rows_select_archetype_columns() {
    let a = ndarray::array![[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0], [0.5, 1.5, -2.0]];
    let z = ndarray::array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let rep = NodeRepresentation::from_parts(z.clone(), z, vec![0.0; 2], vec![0.0; 2], &a);
    let rates = decode_rates(&rep, &[(0, 1)], DecoderForm::Direct);
    let cols = a.column(1).dot(&a.column(2));
    assert!((rates.lambda_pos[0] - cols.exp()).abs() < 1e-12);
    let zero = NodeRepresentation::from_parts(Array2::zeros((2, 3)), Array2::zeros((2, 3)), vec![0.0; 2], vec![0.0; 2], &a);
    assert_eq!(decode_rates(&zero, &[(0, 1)], DecoderForm::Direct).lambda_pos, vec![1.0]);
}

proptest! {
    #[test]
    fn lowering_temperature_sharpens_the_maximum(
        logits in prop::collection::vec(-5.0f64..5.0, 12),
        t_hi in 0.2f64..3.0,
        shrink in 0.05f64..1.0,
    ) {
        let m = Array2::from_shape_vec((3, 4), logits).unwrap();
        let hi = memberships(&m, t_hi);
        let lo = memberships(&m, t_hi * shrink);
        for r in 0..3 {
            let max_hi = hi.row(r).iter().cloned().fold(0.0, f64::max);
            let max_lo = lo.row(r).iter().cloned().fold(0.0, f64::max);
            prop_assert!(max_lo >= max_hi - 1e-15);
        }
        assert_simplex(&lo);
    }

    #[test]
    fn rates_are_positive(seed in 0u64..1000) {
        let rep = random_representation(20, 4, seed);
        let pairs: Vec<(usize, usize)> = (0..20).flat_map(|i| (i + 1..20).map(move |j| (i, j))).collect();
        let rates = decode_rates(&rep, &pairs, DecoderForm::Direct);
        prop_assert!(rates.lambda_pos.iter().chain(&rates.lambda_neg).all(|&l| l > 0.0 && l.is_finite()));
    }
}
