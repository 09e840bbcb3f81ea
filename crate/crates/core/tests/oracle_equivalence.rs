mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relnet::model::{forward, HyperParams, Rollout};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn configs() -> Vec<(HyperParams, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..24)
        .map(|i| {
            let mut h = common::micro_hyper(
                rng.random_range(1..7),
                rng.random_range(1..5),
                rng.random_range(1..6),
                rng.random_range(3..15),
            );
            h.normalize_relations = i % 4 == 3;
            (h, 7000 + i)
        })
        .collect()
}

#[test]
fn logits_match_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for (h, seed) in configs() {
        let params = common::perturbed_params(&h, seed);
        for _ in 0..3 {
            let ex = common::random_example(&h, rng.random_range(0..5), &mut rng);
            let (logits, trace) = forward(&params, &h, &ex).unwrap();
            let oracle = common::oracle::forward(&params, &h, &ex);
            worst = worst.max(max_diff(logits.data(), &oracle.logits));

            assert_eq!(trace.steps.len(), oracle.gates.len());
            for (step, (gm, gr)) in trace.steps.iter().zip(&oracle.gates) {
                assert!(max_diff(&step.g_m, gm) <= 1e-10);
                for (a, b) in step.g_r.iter().zip(gr) {
                    assert!(max_diff(a, b) <= 1e-10);
                }
            }
            for (a, b) in trace.attention.iter().zip(&oracle.attention) {
                assert!(max_diff(a, b) <= 1e-10);
            }
        }
    }
    assert!(worst <= 1e-10, "worst logit difference {worst:e}");
}

#[test]
fn final_entities_match_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (h, seed) in configs().into_iter().take(8) {
        let params = common::perturbed_params(&h, seed);
        let ex = common::random_example(&h, 3, &mut rng);
        let mut r = Rollout::inference(&params, &h);
        let (state, _) = r.read_document(&ex.sentences).unwrap();
        let ours = r.value(state.entities).data().to_vec();
        let oracle: Vec<f64> = common::oracle::forward(&params, &h, &ex).entities.concat();
        assert!(max_diff(&ours, &oracle) <= 1e-10);
    }
}
