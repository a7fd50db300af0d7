mod common;

use common::gradcheck;
use hmg_core::forecaster::{ModelConfig, ParamSet, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(cfg: &ModelConfig, n: usize, rng: &mut impl Rng) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample {
            inputs: (0..cfg.window).map(|_| (0..cfg.features.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            target: rng.gen_range(-1.0..1.0),
        })
        .collect()
}

fn run(cfg: &ModelConfig, seed: u64) -> gradcheck::GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ParamSet::random(cfg, &mut rng);
    let b = batch(cfg, 3, &mut rng);
    gradcheck::check(&params, &b, 1e-5, 1e-8)
}

#[test]
fn blstm_gradients_match_finite_differences() {
    let cfg = ModelConfig { hidden: 8, depth: 2, bidirectional: true, window: 14, ..Default::default() };
    let r = run(&cfg, 11);
    eprintln!("checked {} worst {} at {}", r.checked, r.max_relative_error, r.worst_parameter);
    assert!(r.max_relative_error < 1e-4, "{} at {}", r.max_relative_error, r.worst_parameter);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let cfg = ModelConfig { hidden: 5, depth: 2, bidirectional: false, window: 6, ..Default::default() };
    let r = run(&cfg, 12);
    assert!(r.max_relative_error < 1e-4, "{} at {}", r.max_relative_error, r.worst_parameter);
}
