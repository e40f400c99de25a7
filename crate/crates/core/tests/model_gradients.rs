use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgaae::model::{loss_and_gradients, DecoderForm, EncoderInputs, ModelParameters, PairBatch};
use sgaae::spectral::{node_features, FeatureConfig};
use sgaae::synth::GeneratorConfig;

mod common;

fn check(form: DecoderForm) {
    let planted = GeneratorConfig::polarized(24, 2, 2, 0.5, 3).generate().unwrap();
    let g = &planted.graph;
    let feats = node_features(g, &FeatureConfig { dim: 4, seed: 3, ..Default::default() }).unwrap();
    let inputs = EncoderInputs::new(g, &feats).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = ModelParameters::init(4, 5, 3, &mut rng);
    let batch = PairBatch::full(g);
    let t = 0.7;
    let (_, grads) = loss_and_gradients(&inputs, &params, t, &batch, form).unwrap();
    let h = 1e-6;
    for (slot, grad) in grads.iter().enumerate() {
        for idx in [0usize, grad.len() / 2, grad.len() - 1] {
            let shape = grad.dim();
            let at = (idx / shape.1, idx % shape.1);
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[slot][at] += delta;
                loss_and_gradients(&inputs, &p, t, &batch, form).unwrap().0
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = grad[at];
            assert!(
                (numeric - analytic).abs() <= 1e-5 * (1.0 + numeric.abs()),
                "tensor {slot} entry {at:?}: numeric {numeric} analytic {analytic}"
            );
        }
    }
}

#[test]
fn direct_decoder_gradients_match_finite_differences() {
    check(DecoderForm::Direct);
}

#[test]
fn polarization_decoder_gradients_match_finite_differences() {
    check(DecoderForm::Polarization);
}

#[test]
fn twelve_node_graph_two_hundred_coordinates() {
    let g = common::random_signed_graph(12, 0.35, 12);
    for form in [DecoderForm::Direct, DecoderForm::Polarization] {
        let worst = common::worst_model_gradient_error(&g, form, 200, 1e-5, 12);
        assert!(worst <= 1e-4, "{form}: worst relative error {worst}");
    }
}
