//! Time-stepped leaky integrate-and-fire MLP trained with surrogate
//! gradients.
//!
//! Inputs are injected as constant currents (the input normalized to
//! `[0, 1]`) on every step. A presynaptic spike kicks the synaptic current
//! of its targets by `w`, which then decays with `tau_s`, so the charge a
//! spike delivers does not depend on the step count. Hidden layers spike
//! and hard-reset; the last layer does not spike and the readout is its
//! time-averaged membrane potential.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::TargetAffine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifParams {
    pub tau_m: f64,
    /// Synaptic current time constant.
    pub tau_s: f64,
    pub lambda: f64,
    pub v_rest: f64,
    pub v_th: f64,
    pub n_steps: usize,
    /// Simulated duration; `dt = duration / n_steps`.
    pub duration: f64,
    pub surrogate_slope: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau_m: 0.25,
            tau_s: 0.05,
            lambda: 1.0,
            v_rest: 0.0,
            v_th: 1.0,
            n_steps: 128,
            duration: 1.0,
            surrogate_slope: 2.0,
        }
    }
}

impl LifParams {
    pub fn with_steps(n_steps: usize) -> Self {
        Self { n_steps, ..Self::default() }
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.n_steps as f64
    }

    /// Per-step decay of the synaptic current.
    pub fn syn_decay(&self) -> f64 {
        (-self.dt() / self.tau_s).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) {
            return Err(Error::invalid("tau_m", "must be positive"));
        }
        if !(self.tau_s > 0.0) {
            return Err(Error::invalid("tau_s", "must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", "must be non-negative"));
        }
        if !(self.v_th > self.v_rest) {
            return Err(Error::invalid("v_th", "must exceed v_rest"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be positive"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::invalid("duration", "must be positive"));
        }
        if !(self.surrogate_slope >= 0.0) {
            return Err(Error::invalid("surrogate_slope", "must be non-negative"));
        }
        Ok(())
    }

    /// Arctan surrogate of the spike derivative at pre-reset potential `v`.
    #[inline]
    pub fn surrogate(&self, v: f64) -> f64 {
        let z = PI * self.surrogate_slope * (v - self.v_th);
        self.surrogate_slope / (1.0 + z * z)
    }
}

/// Benchmark step counts.
pub const LIF_STEP_COUNTS: [usize; 3] = [32, 64, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifModel {
    pub layer_sizes: Vec<usize>,
    /// `[post][pre]` per layer.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub params: LifParams,
    /// Per input dimension `(x_min, x_max)` mapped to `[0, 1]`.
    pub input_range: Vec<(f64, f64)>,
    pub target_affine: Vec<TargetAffine>,
}

impl LifModel {
    pub fn new(input_range: Vec<(f64, f64)>, hidden: &[usize], n_out: usize, params: LifParams) -> Result<Self> {
        params.validate()?;
        let mut sizes = vec![input_range.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(n_out);
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layer_sizes", "layers must be non-empty"));
        }
        let weights = sizes.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_sizes: sizes,
            weights,
            biases,
            params,
            input_range,
            target_affine: vec![TargetAffine::default(); n_out],
        })
    }

    /// Uniform weights in `[-a, a]`, `a = gain / sqrt(fan_in)`, and biases
    /// uniform in `[0, bias_hi]` for spiking layers.
    pub fn init(&mut self, rng: &mut impl Rng, gain: f64, bias_hi: f64) {
        let n = self.weights.len();
        for (l, (w, b)) in self.weights.iter_mut().zip(&mut self.biases).enumerate() {
            let a = gain / (w.ncols() as f64).sqrt();
            w.mapv_inplace(|_| rng.gen_range(-a..=a));
            for x in b.iter_mut() {
                *x = if l + 1 < n && bias_hi > 0.0 { rng.gen_range(0.0..bias_hi) } else { 0.0 };
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Weights then biases, layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend(w.iter());
            v.extend(b);
        }
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for x in w.iter_mut() {
                *x = flat[k];
                k += 1;
            }
            for x in b.iter_mut() {
                *x = flat[k];
                k += 1;
            }
        }
    }

    /// Normalized input currents.
    pub fn input_currents(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_range.len() {
            return Err(Error::Dimension(format!("{} inputs for {} channels", x.len(), self.input_range.len())));
        }
        Ok(x.iter()
            .zip(&self.input_range)
            .map(|(&v, &(a, b))| ((v - a) / (b - a)).clamp(0.0, 1.0))
            .collect())
    }
}

/// Forward trace kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LifTrace {
    pub input: Vec<f64>,
    /// `pre[l][t * n_l + i]`: potential after integration, before reset.
    pub pre: Vec<Vec<f64>>,
    /// `spikes[l][t * n_l + i]` for spiking layers.
    pub spikes: Vec<Vec<bool>>,
    /// Time-averaged readout potential before the target map.
    pub readout: Vec<f64>,
    pub y: Vec<f64>,
}

impl LifTrace {
    pub fn spike_count(&self) -> usize {
        self.spikes.iter().flatten().filter(|&&s| s).count()
    }
}

/// Runs `n_steps` explicit-Euler steps from `v_rest`.
pub fn lif_forward(model: &LifModel, x: &[f64]) -> Result<LifTrace> {
    let p = &model.params;
    let a = p.dt() / p.tau_m;
    let d_s = p.syn_decay();
    let n_steps = p.n_steps;
    let n_layers = model.weights.len();
    let input = model.input_currents(x)?;
    let mut pre: Vec<Vec<f64>> = model.layer_sizes[1..].iter().map(|&n| vec![0.0; n * n_steps]).collect();
    let mut spikes: Vec<Vec<bool>> = model.layer_sizes[1..n_layers]
        .iter()
        .map(|&n| vec![false; n * n_steps])
        .collect();
    let mut v: Vec<Vec<f64>> = model.layer_sizes[1..].iter().map(|&n| vec![p.v_rest; n]).collect();
    let mut syn: Vec<Vec<f64>> = model.layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
    let n_out = model.layer_sizes[n_layers];
    let mut acc = vec![0.0; n_out];
    let mut current = Vec::new();
    for t in 0..n_steps {
        for l in 0..n_layers {
            let w = &model.weights[l];
            let n = w.nrows();
            current.clear();
            current.extend_from_slice(&model.biases[l]);
            if l == 0 {
                for (i, c) in current.iter_mut().enumerate() {
                    *c += w.row(i).iter().zip(&input).map(|(w, x)| w * x).sum::<f64>();
                }
            } else {
                let m = model.layer_sizes[l];
                let s_prev = &spikes[l - 1][t * m..(t + 1) * m];
                let sl = &mut syn[l];
                sl.iter_mut().for_each(|c| *c *= d_s);
                for (j, _) in s_prev.iter().enumerate().filter(|(_, &s)| s) {
                    for (i, c) in sl.iter_mut().enumerate() {
                        *c += w[[i, j]];
                    }
                }
                current.iter_mut().zip(sl.iter()).for_each(|(c, s)| *c += s);
            }
            let vl = &mut v[l];
            for i in 0..n {
                let pv = vl[i] + a * (-p.lambda * (vl[i] - p.v_rest) + current[i]);
                pre[l][t * n + i] = pv;
                if l + 1 < n_layers {
                    let s = pv >= p.v_th;
                    spikes[l][t * n + i] = s;
                    vl[i] = if s { p.v_rest } else { pv };
                } else {
                    vl[i] = pv;
                    acc[i] += pv;
                }
            }
        }
    }
    let readout: Vec<f64> = acc.iter().map(|s| s / n_steps as f64).collect();
    let y = readout
        .iter()
        .zip(&model.target_affine)
        .map(|(&r, m)| m.to_physical(r))
        .collect();
    Ok(LifTrace { input, pre, spikes, readout, y })
}

/// Backpropagation through time with the arctan surrogate and a detached
/// reset. Adds `sum_k d_y[k] dy_k/dtheta` into `grad` (flat layout).
pub fn lif_backward(model: &LifModel, trace: &LifTrace, d_y: &[f64], grad: &mut [f64]) -> Result<()> {
    if grad.len() != model.n_params() {
        return Err(Error::Dimension(format!("gradient has {} entries, model {}", grad.len(), model.n_params())));
    }
    let p = &model.params;
    let a = p.dt() / p.tau_m;
    let decay = 1.0 - a * p.lambda;
    let d_s = p.syn_decay();
    let n_steps = p.n_steps;
    let n_layers = model.weights.len();
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for w in &model.weights {
        offsets.push(off);
        off += w.len() + w.nrows();
    }
    // adjoint of the post-reset potential carried backward in time
    let mut g_v: Vec<Vec<f64>> = model.layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
    let out_seed: Vec<f64> = d_y
        .iter()
        .zip(&model.target_affine)
        .map(|(g, m)| g * m.scale / n_steps as f64)
        .collect();
    let mut g_s: Vec<Vec<f64>> = model.layer_sizes[1..n_layers].iter().map(|&n| vec![0.0; n]).collect();
    // adjoint of the synaptic current, accumulated backward in time
    let mut g_syn: Vec<Vec<f64>> = model.layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
    let mut g_i = Vec::new();
    for t in (0..n_steps).rev() {
        for l in (0..n_layers).rev() {
            let w = &model.weights[l];
            let (n, m) = w.dim();
            g_i.clear();
            g_i.resize(n, 0.0);
            for i in 0..n {
                let g_pre = if l + 1 == n_layers {
                    g_v[l][i] + out_seed[i]
                } else {
                    let s = trace.spikes[l][t * n + i];
                    let through = if s { 0.0 } else { g_v[l][i] };
                    let gs = std::mem::take(&mut g_s[l][i]);
                    through + gs * p.surrogate(trace.pre[l][t * n + i])
                };
                g_v[l][i] = g_pre * decay;
                g_i[i] = g_pre * a;
            }
            let base = offsets[l];
            for i in 0..n {
                grad[base + w.len() + i] += g_i[i];
            }
            if l == 0 {
                for i in 0..n {
                    for j in 0..m {
                        grad[base + i * m + j] += g_i[i] * trace.input[j];
                    }
                }
            } else {
                let gy = &mut g_syn[l];
                for i in 0..n {
                    gy[i] = g_i[i] + d_s * gy[i];
                }
                let s_prev = &trace.spikes[l - 1][t * m..(t + 1) * m];
                for j in 0..m {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += w[[i, j]] * gy[i];
                    }
                    g_s[l - 1][j] = acc;
                    if s_prev[j] {
                        for i in 0..n {
                            grad[base + i * m + j] += gy[i];
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Convenience wrapper returning only the mapped outputs.
pub fn lif_predict(model: &LifModel, x: &[f64]) -> Result<Vec<f64>> {
    Ok(lif_forward(model, x)?.y)
}
