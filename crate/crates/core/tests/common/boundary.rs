//! Sweeps across the ordinary/pseudospike transition of an output neuron.

use qifnet::engine::{run_trial, NetworkSpec};
use qifnet::grad::decoded_gradient;
use qifnet::qif::NeuronParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    net: NetworkSpec,
    inputs: Vec<Vec<f64>>,
    layer: usize,
    pre: usize,
}

impl Case {
    fn with_weight(&self, w: f64) -> NetworkSpec {
        let mut n = self.net.clone();
        n.weights[self.layer][[0, self.pre]] = w;
        n
    }

    fn pseudo(&self, w: f64) -> bool {
        run_trial(&self.with_weight(w), &self.inputs).unwrap().first_spike_is_pseudo[0]
    }

    /// Decoded output and its derivative in the swept weight.
    fn value_grad(&self, w: f64) -> (f64, f64) {
        let r = run_trial(&self.with_weight(w), &self.inputs).unwrap();
        let g = decoded_gradient(&r, 0).unwrap();
        (r.decoded[0], g.d_weights[self.layer][[0, self.pre]])
    }
}

pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n_in = rng.gen_range(1..=2);
    let hidden = rng.gen_range(0..=1);
    let mut sizes = vec![n_in];
    if hidden == 1 {
        sizes.push(rng.gen_range(2..=4));
    }
    sizes.push(2);
    let period = rng.gen_range(0.8..1.5);
    let p = NeuronParams::with_period(1.0, period).unwrap();
    let mut net = NetworkSpec::zeros(&sizes, p, period * rng.gen_range(0.6..1.8)).unwrap();
    for w in &mut net.weights {
        w.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    }
    for l in &mut net.initial_phase {
        l.iter_mut().for_each(|x| *x = rng.gen_range(0.05..0.8) * period);
    }
    let inputs = (0..n_in).map(|_| vec![rng.gen_range(0.05..0.5) * net.trial_t]).collect();
    let layer = net.weights.len() - 1;
    let pre = rng.gen_range(0..sizes[layer]);
    Case { net, inputs, layer, pre }
}

/// Bisects a sign change of the pseudo flag inside `[lo, hi]`.
pub fn transition(case: &Case, mut lo: f64, mut hi: f64) -> f64 {
    let flag_lo = case.pseudo(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if case.pseudo(mid) == flag_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Worst value and gradient jumps over `n_cases` transitions.
pub struct BoundaryReport {
    pub cases: usize,
    pub worst_value: f64,
    pub worst_grad: f64,
}

/// Finds `n_cases` weights at which an output's first spike crosses the
/// trial end and compares both sides of a `delta` step around each.
pub fn sweep_transitions(n_cases: usize, seed: u64, delta: f64) -> BoundaryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = 0;
    let (mut worst_v, mut worst_g) = (0.0f64, 0.0f64);
    let mut attempts = 0;
    while found < n_cases {
        attempts += 1;
        assert!(attempts < 5000, "could not construct enough transitions");
        let case = random_case(&mut rng);
        let grid: Vec<f64> = (0..=80).map(|k| -2.0 + 0.05 * k as f64).collect();
        let flags: Vec<bool> = grid.iter().map(|&w| case.pseudo(w)).collect();
        let Some(k) = (0..grid.len() - 1).find(|&k| flags[k] != flags[k + 1]) else { continue };
        let w_star = transition(&case, grid[k], grid[k + 1]);
        let (below, above) = (w_star - 0.5 * delta, w_star + 0.5 * delta);
        if case.pseudo(below) == case.pseudo(above) {
            continue;
        }
        // the swept neuron must be the only one changing branch
        let rb = run_trial(&case.with_weight(below), &case.inputs).unwrap();
        let ra = run_trial(&case.with_weight(above), &case.inputs).unwrap();
        if rb.first_spike_is_pseudo[1] != ra.first_spike_is_pseudo[1] {
            continue;
        }
        let (vb, gb) = case.value_grad(below);
        let (va, ga) = case.value_grad(above);
        worst_v = worst_v.max((va - vb).abs());
        worst_g = worst_g.max((ga - gb).abs());
        found += 1;
    }
    BoundaryReport { cases: found, worst_value: worst_v, worst_grad: worst_g }
}
