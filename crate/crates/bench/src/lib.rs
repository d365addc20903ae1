//! Shared fixtures for the benchmarks.

use qifnet::codec::{EncodingSpec, TargetAffine};
use qifnet::models::{MlpModel, PhaseInit};
use qifnet::qif::NeuronParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Initialized regression network with the training defaults.
pub fn regression_model(n_in: usize, hidden: &[usize], seed: u64) -> MlpModel {
    let t = 2.0;
    let params = NeuronParams::with_period(1.0, 2.0 * t).expect("positive period");
    let enc = vec![EncodingSpec::direct(-1.0, 1.0, t); n_in];
    let mut m = MlpModel::new(enc, hidden, 1, params, t).expect("valid sizes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    m.init_weights(&mut rng, 3.0);
    m.init_phases(&mut rng, PhaseInit::Uniform { lo: 0.0, hi: 0.5 });
    m.target_affine = vec![TargetAffine::for_trial(0.0, 1.0, t)];
    m
}
