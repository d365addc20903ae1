//! Exact reverse-mode gradients of spike times, and a finite-difference
//! checker for them.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::Encoded;
use crate::engine::{run_trial, NetworkSpec, TrialResult};
use crate::error::{Error, Result};
use crate::qif::NeuronParams;
use crate::tape::NodeId;

/// Gradients with the shapes of the forward structures.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_weights: Vec<Array2<f64>>,
    pub d_input_times: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(result: &TrialResult) -> Self {
        Self {
            d_weights: result
                .weight_shapes
                .iter()
                .map(|&s| Array2::zeros(s))
                .collect(),
            d_input_times: result.input_nodes.iter().map(|c| vec![0.0; c.len()]).collect(),
        }
    }

    pub fn flat_weights(&self) -> Vec<f64> {
        self.d_weights.iter().flat_map(|w| w.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.d_input_times.iter().flatten().all(|x| x.is_finite())
    }
}

/// Reverse accumulation of `sum seed_adjoint * seed_node` over the tape.
pub fn backward(result: &TrialResult, seeds: &[(NodeId, f64)]) -> Result<GradientSet> {
    let n_w: usize = result.weight_shapes.iter().map(|(r, c)| r * c).sum();
    let mut flat = vec![0.0; n_w];
    let d_inputs = backward_flat(result, seeds, &mut flat)?;
    let mut d_weights = Vec::with_capacity(result.weight_shapes.len());
    let mut off = 0;
    for &(r, c) in &result.weight_shapes {
        d_weights.push(
            Array2::from_shape_vec((r, c), flat[off..off + r * c].to_vec())
                .expect("shape matches block length"),
        );
        off += r * c;
    }
    Ok(GradientSet {
        d_weights,
        d_input_times: d_inputs,
    })
}

/// Like [`backward`], accumulating weight gradients into a flat row-major
/// buffer. Returns input-time gradients per channel.
pub fn backward_flat(
    result: &TrialResult,
    seeds: &[(NodeId, f64)],
    d_weights: &mut [f64],
) -> Result<Vec<Vec<f64>>> {
    let leaf_adj = result.tape.accumulate(seeds, d_weights)?;
    let mut d_inputs: Vec<Vec<f64>> =
        result.input_nodes.iter().map(|c| vec![0.0; c.len()]).collect();
    for (&(ch, k), a) in result.tape.input_leaves().iter().zip(leaf_adj) {
        d_inputs[ch as usize][k as usize] = a;
    }
    Ok(d_inputs)
}

/// Gradient of decoded output `k`.
pub fn decoded_gradient(result: &TrialResult, k: usize) -> Result<GradientSet> {
    let mut d = vec![0.0; result.decoded.len()];
    d[k] = 1.0;
    backward(result, &result.decoded_seeds(&d))
}

/// `du_k / dX_d` for every decoded value `k` and input dimension `d`.
pub fn input_sensitivity(result: &TrialResult, encoded: &Encoded) -> Result<Vec<Vec<f64>>> {
    let jac = encoded
        .dt_dx
        .as_ref()
        .ok_or_else(|| Error::NoInputDerivative("encoding carries no dt/dX".into()))?;
    let n_dims = encoded.n_dims;
    let mut out = Vec::with_capacity(result.decoded.len());
    let mut scratch = vec![0.0; result.weight_shapes.iter().map(|(r, c)| r * c).sum()];
    for k in 0..result.decoded.len() {
        let mut d = vec![0.0; result.decoded.len()];
        d[k] = 1.0;
        let d_inputs = backward_flat(result, &result.decoded_seeds(&d), &mut scratch)?;
        let mut row = vec![0.0; n_dims];
        for (ch, times) in d_inputs.iter().enumerate() {
            let dim = encoded.channel_dim[ch];
            for (s, du_dt) in times.iter().enumerate() {
                row[dim] += du_dt * jac[ch][s];
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Which scalar a gradient entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GradParam {
    Weight { layer: usize, post: usize, pre: usize },
    InputTime { channel: usize, spike: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradEntry {
    pub param: GradParam,
    pub output: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Perturbations that changed the event order and were skipped.
    pub excluded: usize,
    pub max_rel_err: f64,
    pub worst: Option<GradEntry>,
    /// Worst checked entry per weight layer.
    pub worst_per_layer: Vec<Option<GradEntry>>,
    pub worst_input: Option<GradEntry>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.excluded += other.excluded;
        if self.worst_per_layer.len() < other.worst_per_layer.len() {
            self.worst_per_layer.resize(other.worst_per_layer.len(), None);
        }
        for (mine, theirs) in self.worst_per_layer.iter_mut().zip(&other.worst_per_layer) {
            keep_worse(mine, theirs);
        }
        keep_worse(&mut self.worst_input, &other.worst_input);
        keep_worse(&mut self.worst, &other.worst);
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.passed = self.max_rel_err <= self.tolerance;
    }
}

fn keep_worse(mine: &mut Option<GradEntry>, theirs: &Option<GradEntry>) {
    if let Some(t) = theirs {
        if mine.map_or(true, |m| t.rel_err > m.rel_err) {
            *mine = Some(*t);
        }
    }
}

/// Denominator floor for relative errors of near-zero gradients.
pub const REL_ERR_FLOOR: f64 = 1e-4;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Compares tape gradients with symmetric differences for every weight and
/// input spike time, for every decoded output.
///
/// A perturbation whose `+step` or `-step` trial has a different event
/// signature than the base trial straddles an event-order change; it is
/// counted as excluded rather than compared.
pub fn grad_check(
    net: &NetworkSpec,
    inputs: &[Vec<f64>],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let base = run_trial(net, inputs)?;
    let n_out = base.decoded.len();
    let grads: Vec<GradientSet> = (0..n_out)
        .map(|k| decoded_gradient(&base, k))
        .collect::<Result<_>>()?;

    let mut report = GradCheckReport {
        worst_per_layer: vec![None; net.weights.len()],
        tolerance: tol,
        ..Default::default()
    };

    let compare = |param: GradParam,
                       plus: &TrialResult,
                       minus: &TrialResult,
                       analytic: &dyn Fn(usize) -> f64,
                       report: &mut GradCheckReport| {
        if plus.signature != base.signature || minus.signature != base.signature {
            report.excluded += 1;
            return;
        }
        for k in 0..n_out {
            let numeric = (plus.decoded[k] - minus.decoded[k]) / (2.0 * step);
            let a = analytic(k);
            let entry = GradEntry {
                param,
                output: k,
                analytic: a,
                numeric,
                rel_err: relative_error(a, numeric),
            };
            report.checked += 1;
            let slot = match param {
                GradParam::Weight { layer, .. } => &mut report.worst_per_layer[layer],
                GradParam::InputTime { .. } => &mut report.worst_input,
            };
            keep_worse(slot, &Some(entry));
            keep_worse(&mut report.worst, &Some(entry));
            report.max_rel_err = report.max_rel_err.max(entry.rel_err);
        }
    };

    let mut work = net.clone();
    for layer in 0..net.weights.len() {
        let (rows, cols) = net.weights[layer].dim();
        for post in 0..rows {
            for pre in 0..cols {
                let w0 = net.weights[layer][[post, pre]];
                work.weights[layer][[post, pre]] = w0 + step;
                let plus = run_trial(&work, inputs)?;
                work.weights[layer][[post, pre]] = w0 - step;
                let minus = run_trial(&work, inputs)?;
                work.weights[layer][[post, pre]] = w0;
                compare(
                    GradParam::Weight { layer, post, pre },
                    &plus,
                    &minus,
                    &|k| grads[k].d_weights[layer][[post, pre]],
                    &mut report,
                );
            }
        }
    }

    let mut shifted = inputs.to_vec();
    for channel in 0..inputs.len() {
        for spike in 0..inputs[channel].len() {
            let t0 = inputs[channel][spike];
            let lo = if spike > 0 { inputs[channel][spike - 1] } else { 0.0 };
            let hi = inputs[channel].get(spike + 1).copied().unwrap_or(net.trial_t);
            if t0 - step < lo || t0 + step > hi {
                report.excluded += 1;
                continue;
            }
            shifted[channel][spike] = t0 + step;
            let plus = run_trial(net, &shifted)?;
            shifted[channel][spike] = t0 - step;
            let minus = run_trial(net, &shifted)?;
            shifted[channel][spike] = t0;
            compare(
                GradParam::InputTime { channel, spike },
                &plus,
                &minus,
                &|k| grads[k].d_input_times[channel][spike],
                &mut report,
            );
        }
    }
    report.passed = report.max_rel_err <= tol;
    Ok(report)
}

/// Shape of the randomized networks used for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomNetConfig {
    pub max_inputs: usize,
    pub max_hidden_layers: usize,
    pub max_width: usize,
    pub max_input_spikes: usize,
    pub weight_scale: f64,
}

impl Default for RandomNetConfig {
    fn default() -> Self {
        Self {
            max_inputs: 3,
            max_hidden_layers: 2,
            max_width: 8,
            max_input_spikes: 4,
            weight_scale: 1.5,
        }
    }
}

/// Draws a small random network and input spike pattern.
///
/// Threshold phase, trial length, initial phases and weights are all random,
/// so outputs mix ordinary spikes and pseudospikes.
pub fn random_network(rng: &mut impl Rng, cfg: &RandomNetConfig) -> (NetworkSpec, Vec<Vec<f64>>) {
    let n_in = rng.gen_range(1..=cfg.max_inputs.max(1));
    let n_hidden = rng.gen_range(0..=cfg.max_hidden_layers);
    let mut sizes = vec![n_in];
    for _ in 0..n_hidden {
        sizes.push(rng.gen_range(1..=cfg.max_width.max(1)));
    }
    sizes.push(2 * rng.gen_range(1..=(cfg.max_width / 2).clamp(1, 2)));
    let period = rng.gen_range(0.6..1.4);
    let params = NeuronParams::with_period(rng.gen_range(0.5..2.0), period)
        .expect("positive period");
    let trial_t = period * rng.gen_range(0.2..2.0);
    let mut net = NetworkSpec::zeros(&sizes, params, trial_t).expect("valid sizes");
    for w in &mut net.weights {
        w.mapv_inplace(|_| rng.gen_range(-cfg.weight_scale..cfg.weight_scale));
    }
    for layer in &mut net.initial_phase {
        for ph in layer.iter_mut() {
            *ph = rng.gen_range(0.0..0.95 * period);
        }
    }
    let n_spikes = rng.gen_range(1..=cfg.max_input_spikes.max(1));
    let mut inputs = vec![Vec::new(); n_in];
    for _ in 0..n_spikes {
        let ch = rng.gen_range(0..n_in);
        inputs[ch].push(rng.gen_range(0.0..trial_t));
    }
    for ch in &mut inputs {
        ch.sort_by(f64::total_cmp);
    }
    (net, inputs)
}
