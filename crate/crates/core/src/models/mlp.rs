//! Spiking MLP regressor: encode, run a trial, decode, undo the target map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode, Encoded, EncodingSpec, TargetAffine};
use crate::engine::{run_trial, NetworkSpec, TrialResult};
use crate::error::{Error, Result};
use crate::grad::{backward_flat, input_sensitivity};
use crate::qif::NeuronParams;

/// How network neurons start the trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseInit {
    /// Every neuron starts at reset.
    Zero,
    /// Uniform in `[lo, hi) * phi_theta`, drawn once at construction.
    Uniform { lo: f64, hi: f64 },
}

impl Default for PhaseInit {
    fn default() -> Self {
        PhaseInit::Zero
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub net: NetworkSpec,
    pub encoding: Vec<EncodingSpec>,
    /// One map per decoded value.
    pub target_affine: Vec<TargetAffine>,
}

/// Forward pass result kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpOutput {
    pub y: Vec<f64>,
    pub trial: TrialResult,
    pub encoded: Encoded,
}

impl MlpModel {
    /// Zero-weight model with `hidden` layer widths and `n_values` decoded
    /// outputs (two output neurons each).
    pub fn new(
        encoding: Vec<EncodingSpec>,
        hidden: &[usize],
        n_values: usize,
        params: NeuronParams,
        trial_t: f64,
    ) -> Result<Self> {
        for e in &encoding {
            e.validate()?;
        }
        let n_in: usize = encoding.iter().map(|e| e.channels()).sum();
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * n_values);
        let net = NetworkSpec::zeros(&sizes, params, trial_t)?;
        Ok(Self {
            net,
            encoding,
            target_affine: vec![TargetAffine::default(); n_values],
        })
    }

    pub fn n_values(&self) -> usize {
        self.net.decode_pairs.len()
    }

    /// Uniform weights in `[-a, a]`, `a = gain / sqrt(fan_in)`.
    pub fn init_weights(&mut self, rng: &mut impl Rng, gain: f64) {
        for w in &mut self.net.weights {
            let a = gain / (w.ncols() as f64).sqrt();
            w.mapv_inplace(|_| rng.gen_range(-a..=a));
        }
    }

    pub fn init_phases(&mut self, rng: &mut impl Rng, init: PhaseInit) {
        let th = self.net.params.phi_theta();
        for layer in &mut self.net.initial_phase {
            for ph in layer.iter_mut() {
                *ph = match init {
                    PhaseInit::Zero => 0.0,
                    PhaseInit::Uniform { lo, hi } => rng.gen_range(lo..hi) * th,
                };
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let n_in: usize = self.encoding.iter().map(|e| e.channels()).sum();
        if n_in != self.net.n_inputs() {
            return Err(Error::Dimension(format!(
                "encodings need {n_in} channels, network has {}",
                self.net.n_inputs()
            )));
        }
        if self.target_affine.len() != self.n_values() {
            return Err(Error::Dimension("one target map per decoded value".into()));
        }
        Ok(())
    }
}

/// Encode, simulate, decode and map back to physical units.
pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> Result<MlpOutput> {
    let encoded = encode(x, &model.encoding)?;
    let trial = run_trial(&model.net, &encoded.times)?;
    let y = trial
        .decoded
        .iter()
        .zip(&model.target_affine)
        .map(|(&d, a)| a.to_physical(d))
        .collect();
    Ok(MlpOutput { y, trial, encoded })
}

/// Adds `sum_k d_y[k] * dy_k/dw` into the flat weight gradient.
pub fn mlp_backward(model: &MlpModel, out: &MlpOutput, d_y: &[f64], d_w: &mut [f64]) -> Result<()> {
    let d_decoded: Vec<f64> = d_y
        .iter()
        .zip(&model.target_affine)
        .map(|(g, a)| g * a.scale)
        .collect();
    backward_flat(&out.trial, &out.trial.decoded_seeds(&d_decoded), d_w)?;
    Ok(())
}

/// `dy/dx_dim` of every output through the exact spike-time gradients.
pub fn exact_first_derivative(model: &MlpModel, x: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim >= x.len() {
        return Err(Error::Dimension(format!("dimension {dim} of {}", x.len())));
    }
    let out = mlp_forward(model, x)?;
    let sens = input_sensitivity(&out.trial, &out.encoded)?;
    Ok(sens
        .iter()
        .zip(&model.target_affine)
        .map(|(row, a)| a.scale * row[dim])
        .collect())
}
