//! Single-neuron cases with closed-form gradient products.

use ndarray::Array2;
use qifnet::engine::{run_trial, NetworkSpec};
use qifnet::grad::backward;
use qifnet::qif::{ptc_jump, NeuronParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Single neuron driven by `m` inputs on separate channels, one spike each,
/// all arriving before its first emission.
pub fn single_neuron_case(rng: &mut ChaCha8Rng, m: usize) -> (NetworkSpec, Vec<Vec<f64>>, f64) {
    let p = NeuronParams::default();
    let mut net = NetworkSpec::zeros(&[m, 2], p, 6.0).unwrap();
    let phi0 = rng.gen_range(0.05..0.4);
    net.initial_phase[0] = vec![phi0, 0.0];
    let mut w = Array2::zeros((2, m));
    for j in 0..m {
        w[[0, j]] = rng.gen_range(-0.6..0.6);
    }
    net.weights[0] = w;
    let mut times: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.2)).collect();
    times.sort_by(f64::total_cmp);
    (net, times.iter().map(|&t| vec![t]).collect(), phi0)
}

/// Largest absolute difference between tape gradients and the explicit
/// products of PTC partials, over `n_cases` cases with one to five inputs.
pub fn closed_form_worst(n_cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let p = NeuronParams::default();
    let mut cases = 0;
    while cases < n_cases {
        let m = rng.gen_range(1..=5);
        let (net, inputs, phi0) = single_neuron_case(&mut rng, m);
        let times: Vec<f64> = inputs.iter().map(|c| c[0]).collect();
        let w: Vec<f64> = (0..m).map(|j| net.weights[0][[0, j]]).collect();

        // forward recursion xi_k, psi_k with A_k, B_k
        let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
        let mut psi = 0.0;
        for k in 0..m {
            let xi = if k == 0 { phi0 + times[0] } else { psi + times[k] - times[k - 1] };
            let j = ptc_jump(xi, w[k], &p);
            a[k] = j.d_phase;
            b[k] = j.d_weight;
            psi = j.phase;
        }
        let t_sp = times[m - 1] + p.phi_theta() - psi;

        let r = run_trial(&net, &inputs).unwrap();
        let first = r.spikes[1].iter().find(|s| s.neuron == 0);
        let Some(first) = first else { continue };
        if first.time <= times[m - 1] {
            continue;
        }
        worst = worst.max((first.time - t_sp).abs());

        let g = backward(&r, &[(r.first_spike_node[0], 1.0)]).unwrap();
        let prod = |from: usize| -> f64 { a[from.min(m)..].iter().product() };
        for k in 0..m {
            let dw = -prod(k + 1) * b[k];
            let next = if k + 1 < m { prod(k + 2) * a[k + 1] } else { 0.0 };
            let dpsi_dt = prod(k + 1) * a[k] - next;
            let dt = if k + 1 == m { 1.0 } else { 0.0 } - dpsi_dt;
            worst = worst.max((g.d_weights[0][[0, k]] - dw).abs());
            worst = worst.max((g.d_input_times[k][0] - dt).abs());
        }
        cases += 1;
    }
    worst
}
