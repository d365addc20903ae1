//! Direct numerical integration of `tau V' = V (V - 1) + I0` with
//! delta-coupled voltage jumps.

use std::f64::consts::PI;

use qifnet::engine::{run_trial, NetworkSpec};
use qifnet::qif::NeuronParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Voltage beyond which the trajectory is closed with the asymptotic tail
/// `tau / (V - 1/2)`.
const V_PEAK: f64 = 400.0;

pub struct Qif {
    pub tau: f64,
    pub i0: f64,
}

impl Qif {
    fn rhs(&self, v: f64) -> f64 {
        (v * (v - 1.0) + self.i0) / self.tau
    }

    fn rk4(&self, v: f64, h: f64) -> f64 {
        let k1 = self.rhs(v);
        let k2 = self.rhs(v + 0.5 * h * k1);
        let k3 = self.rhs(v + 0.5 * h * k2);
        let k4 = self.rhs(v + h * k3);
        v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    fn tail(&self, v: f64) -> f64 {
        self.tau / (v.abs() - 0.5)
    }

    /// Spike times in `[0, t_end]` of a neuron starting at `v0` (`None`
    /// means just reset) and receiving `(time, weight)` arrivals. Returns
    /// `None` when an arrival lands inside the unresolved tail.
    pub fn simulate(&self, v0: Option<f64>, arrivals: &[(f64, f64)], t_end: f64) -> Option<Vec<f64>> {
        let mut spikes = Vec::new();
        // in the tail: v is None and `resume` is when the trajectory
        // re-enters at -V_PEAK
        let mut t = 0.0;
        let mut v = v0;
        let mut resume = if v0.is_none() { self.tail(-V_PEAK) } else { 0.0 };
        let mut k = 0;
        while t < t_end {
            match v {
                None => {
                    if k < arrivals.len() && arrivals[k].0 < resume {
                        return None;
                    }
                    t = resume;
                    v = Some(-V_PEAK);
                }
                Some(x) => {
                    let next_in = arrivals.get(k).map_or(f64::INFINITY, |a| a.0);
                    let h = (1e-3 / (1.0 + x * x / 4.0)).min(next_in - t).min(t_end - t + 1e-12);
                    let nx = self.rk4(x, h);
                    t += h;
                    if nx >= V_PEAK || !nx.is_finite() {
                        let ts = t + self.tail(nx.max(V_PEAK));
                        if k < arrivals.len() && arrivals[k].0 < ts + self.tail(-V_PEAK) {
                            return None;
                        }
                        spikes.push(ts);
                        v = None;
                        resume = ts + self.tail(-V_PEAK);
                        continue;
                    }
                    let mut nv = nx;
                    while k < arrivals.len() && arrivals[k].0 <= t {
                        nv += arrivals[k].1;
                        k += 1;
                    }
                    v = Some(nv);
                }
            }
        }
        Some(spikes.into_iter().filter(|&s| s <= t_end).collect())
    }
}

pub fn initial_voltage(phi0: f64, p: &NeuronParams) -> Option<f64> {
    if phi0 <= 0.0 {
        return None;
    }
    let s = (p.i0 - 0.25).sqrt();
    Some(0.5 + s * (s * phi0 / p.tau_m - PI / 2.0).tan())
}

pub fn random_case(rng: &mut ChaCha8Rng) -> (NetworkSpec, Vec<Vec<f64>>) {
    let n_in = rng.gen_range(1..=3);
    let mut sizes = vec![n_in];
    for _ in 0..rng.gen_range(1..=2) {
        sizes.push(rng.gen_range(1..=4));
    }
    sizes.push(2);
    let period = rng.gen_range(0.8..1.6);
    let p = NeuronParams::with_period(rng.gen_range(0.6..1.5), period).unwrap();
    let mut net = NetworkSpec::zeros(&sizes, p, period * rng.gen_range(1.0..2.5)).unwrap();
    for w in &mut net.weights {
        w.mapv_inplace(|_| rng.gen_range(-1.5..1.5));
    }
    for l in &mut net.initial_phase {
        l.iter_mut().for_each(|x| *x = rng.gen_range(0.05..0.9) * period);
    }
    let inputs = (0..n_in)
        .map(|_| {
            let mut v: Vec<f64> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(0.0..net.trial_t)).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    (net, inputs)
}

/// Outcome of comparing engine spike times with dense integration.
pub struct DenseReport {
    pub networks: usize,
    pub spikes: usize,
    pub worst: f64,
}

/// Compares `n_nets` random networks; networks whose inputs land inside an
/// unresolved tail, or whose spike counts differ only at the trial end,
/// are redrawn.
pub fn compare_dense(n_nets: usize, seed: u64) -> DenseReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut compared, mut worst, mut spikes) = (0, 0.0f64, 0);
    while compared < n_nets {
        let (net, inputs) = random_case(&mut rng);
        let p = net.params;
        let q = Qif { tau: p.tau_m, i0: p.i0 };
        let r = run_trial(&net, &inputs).unwrap();
        // presynaptic spike trains of the layer being simulated
        let mut pre: Vec<Vec<f64>> = inputs.clone();
        let mut ok = true;
        'layers: for (l, w) in net.weights.iter().enumerate() {
            let mut out = Vec::with_capacity(w.nrows());
            for i in 0..w.nrows() {
                let mut arrivals: Vec<(f64, f64)> = pre
                    .iter()
                    .enumerate()
                    .flat_map(|(j, ts)| ts.iter().map(move |&t| (t, w[[i, j]])))
                    .collect();
                arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
                let Some(ts) = q.simulate(initial_voltage(net.initial_phase[l][i], &p), &arrivals, net.trial_t) else {
                    ok = false;
                    break 'layers;
                };
                let engine: Vec<f64> = r.spikes[l + 1].iter().filter(|s| s.neuron == i).map(|s| s.time).collect();
                // spikes within the integration error of the trial end may
                // legitimately land on either side of it
                let near_end = |v: &[f64]| v.iter().any(|&t| (t - net.trial_t).abs() < 1e-3);
                if engine.len() != ts.len() {
                    if near_end(&engine) || near_end(&ts) {
                        ok = false;
                        break 'layers;
                    }
                    panic!("layer {l} neuron {i}: engine {engine:?}, oracle {ts:?}");
                }
                for (a, b) in engine.iter().zip(&ts) {
                    worst = worst.max((a - b).abs());
                }
                spikes += ts.len();
                out.push(engine);
            }
            pre = out;
        }
        if ok {
            compared += 1;
        }
    }
    DenseReport { networks: compared, spikes, worst }
}
