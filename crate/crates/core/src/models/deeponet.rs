//! Spiking DeepONet: `G(f)(y) = sum_i B_i(f) T_i(y)`.

use serde::{Deserialize, Serialize};

use super::mlp::{mlp_backward, mlp_forward, MlpModel, MlpOutput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetModel {
    pub branch: MlpModel,
    pub trunk: MlpModel,
    pub p: usize,
}

impl DeepOnetModel {
    pub fn new(branch: MlpModel, trunk: MlpModel) -> Result<Self> {
        let p = branch.n_values();
        let m = Self { branch, trunk, p };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        self.trunk.validate()?;
        if self.branch.n_values() != self.p || self.trunk.n_values() != self.p {
            return Err(Error::Dimension(format!(
                "branch gives {}, trunk gives {}, latent width is {}",
                self.branch.n_values(),
                self.trunk.n_values(),
                self.p
            )));
        }
        Ok(())
    }

    /// Branch weights first, then trunk weights.
    pub fn flat_weights(&self) -> Vec<f64> {
        let mut w = self.branch.net.flat_weights();
        w.extend(self.trunk.net.flat_weights());
        w
    }

    pub fn set_flat_weights(&mut self, w: &[f64]) {
        let nb = self.branch.net.n_weights();
        self.branch.net.set_flat_weights(&w[..nb]);
        self.trunk.net.set_flat_weights(&w[nb..]);
    }

    pub fn n_weights(&self) -> usize {
        self.branch.net.n_weights() + self.trunk.net.n_weights()
    }
}

/// `sum_i b_i t_i`.
pub fn combine(b: &[f64], t: &[f64]) -> f64 {
    b.iter().zip(t).map(|(x, y)| x * y).sum()
}

/// Operator value at coordinate `y` for sensor samples `g`.
pub fn deeponet_forward(model: &DeepOnetModel, g: &[f64], y: &[f64]) -> Result<f64> {
    if g.len() != model.branch.encoding.len() {
        return Err(Error::Dimension(format!(
            "{} sensor values for a branch with {} inputs",
            g.len(),
            model.branch.encoding.len()
        )));
    }
    let b = mlp_forward(&model.branch, g)?;
    let t = mlp_forward(&model.trunk, y)?;
    Ok(combine(&b.y, &t.y))
}

/// Branch outputs for several functions and trunk outputs for several
/// coordinates, kept for the backward pass.
pub struct DeepOnetBatch {
    pub branch: Vec<MlpOutput>,
    pub trunk: Vec<MlpOutput>,
}

impl DeepOnetBatch {
    /// Prediction matrix `[function][coordinate]`.
    pub fn predictions(&self) -> Vec<Vec<f64>> {
        self.branch
            .iter()
            .map(|b| self.trunk.iter().map(|t| combine(&b.y, &t.y)).collect())
            .collect()
    }
}

/// Backward pass given `d_pred[function][coordinate]`; adds into the flat
/// gradient (branch block first).
pub fn deeponet_backward(
    model: &DeepOnetModel,
    batch: &DeepOnetBatch,
    d_pred: &[Vec<f64>],
    d_w: &mut [f64],
) -> Result<()> {
    let nb = model.branch.net.n_weights();
    let (d_branch, d_trunk) = d_w.split_at_mut(nb);
    for (b, row) in batch.branch.iter().zip(d_pred) {
        let d_b: Vec<f64> = (0..model.p)
            .map(|i| row.iter().zip(&batch.trunk).map(|(g, t)| g * t.y[i]).sum())
            .collect();
        mlp_backward(&model.branch, b, &d_b, d_branch)?;
    }
    for (j, t) in batch.trunk.iter().enumerate() {
        let d_t: Vec<f64> = (0..model.p)
            .map(|i| batch.branch.iter().zip(d_pred).map(|(b, row)| row[j] * b.y[i]).sum())
            .collect();
        mlp_backward(&model.trunk, t, &d_t, d_trunk)?;
    }
    Ok(())
}
