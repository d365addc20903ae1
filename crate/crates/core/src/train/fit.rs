//! Mini-batch training loops.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::data::{OperatorData, PinnData, Samples};
use super::metrics::{compute_metrics, Metrics};
use crate::error::{Error, Result};
use crate::lif::{lif_backward, lif_forward, LifModel};
use crate::models::deeponet::{deeponet_backward, DeepOnetBatch, DeepOnetModel};
use crate::models::mlp::{mlp_backward, mlp_forward, MlpModel};
use crate::models::pinn::{data_loss_grad, pinn_value, residual_loss_grad, PinnProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fractions of `epochs` after which the rate is multiplied by
    /// `lr_decay_factor`.
    pub lr_decay_at: Vec<f64>,
    pub lr_decay_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            epochs: 100,
            batch_size: 10,
            learning_rate: a.learning_rate,
            seed: 0,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            lr_decay_at: vec![0.6, 0.85],
            lr_decay_factor: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta1/beta2", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        if self.lr_decay_at.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("lr_decay_at", "fractions must lie in [0, 1]"));
        }
        if !(self.lr_decay_factor > 0.0) {
            return Err(Error::invalid("lr_decay_factor", "must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Step size in effect during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let n = self
            .lr_decay_at
            .iter()
            .filter(|&&f| epoch as f64 >= f * self.epochs as f64)
            .count();
        self.learning_rate * self.lr_decay_factor.powi(n as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub wallclock: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub records: Vec<EpochRecord>,
}

impl LossHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "loss", "wallclock"])?;
        for r in &self.records {
            out.write_record([r.epoch.to_string(), format!("{:.16e}", r.loss), format!("{:.6}", r.wallclock)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Trailing moving average with the given window.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= w {
            acc -= values[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Generic driver: shuffles `n_items` indices each epoch, asks `batch` for
/// the summed loss and summed gradient over each chunk, and applies Adam to
/// the mean gradient. `on_epoch` sees the epoch, its mean loss and the
/// current parameters.
pub fn optimize(
    params: &mut [f64],
    n_items: usize,
    cfg: &TrainConfig,
    mut batch: impl FnMut(usize, &[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
    mut on_epoch: impl FnMut(usize, f64, &[f64]) -> Result<()>,
) -> Result<LossHistory> {
    cfg.validate()?;
    if n_items == 0 {
        return Err(Error::invalid("data", "no training samples"));
    }
    let adam = cfg.adam();
    let mut state = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut history = LossHistory::default();
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate_at(epoch);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, mut grad) = batch(epoch, params, chunk)?;
            let inv = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam_step(params, &grad, &mut state, &adam, lr);
            total += loss;
        }
        let mean = total / n_items as f64;
        history.records.push(EpochRecord {
            epoch,
            loss: mean,
            wallclock: start.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch} loss {mean:.6e} lr {lr:.3e}");
        on_epoch(epoch, mean, params)?;
    }
    Ok(history)
}

/// Runs `f` for every index in parallel, each writing into its own
/// gradient buffer, then reduces losses and gradients in index order so the
/// result does not depend on the thread count.
pub fn par_loss_grad(
    indices: &[usize],
    n_params: usize,
    epoch: usize,
    f: impl Fn(usize, &mut [f64]) -> Result<f64> + Sync,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<(f64, Vec<f64>)> = indices
        .par_iter()
        .map(|&i| {
            let mut g = vec![0.0; n_params];
            let l = f(i, &mut g)?;
            if !l.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { epoch, sample: i });
            }
            Ok((l, g))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}

/// A trainable point-wise regressor.
pub trait Regressor: Clone + Send + Sync {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, w: &[f64]);
    fn predict(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Squared error against `y`; adds its parameter gradient into `grad`.
    fn loss_grad(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> Result<f64>;
}

impl Regressor for MlpModel {
    fn params(&self) -> Vec<f64> {
        self.net.flat_weights()
    }

    fn set_params(&mut self, w: &[f64]) {
        self.net.set_flat_weights(w);
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(mlp_forward(self, x)?.y)
    }

    fn loss_grad(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> Result<f64> {
        let out = mlp_forward(self, x)?;
        let err: Vec<f64> = out.y.iter().zip(y).map(|(p, t)| p - t).collect();
        let d_y: Vec<f64> = err.iter().map(|e| 2.0 * e).collect();
        mlp_backward(self, &out, &d_y, grad)?;
        Ok(err.iter().map(|e| e * e).sum())
    }
}

impl Regressor for LifModel {
    fn params(&self) -> Vec<f64> {
        self.flat_params()
    }

    fn set_params(&mut self, w: &[f64]) {
        self.set_flat_params(w);
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(lif_forward(self, x)?.y)
    }

    fn loss_grad(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> Result<f64> {
        let tr = lif_forward(self, x)?;
        let err: Vec<f64> = tr.y.iter().zip(y).map(|(p, t)| p - t).collect();
        let d_y: Vec<f64> = err.iter().map(|e| 2.0 * e).collect();
        lif_backward(self, &tr, &d_y, grad)?;
        Ok(err.iter().map(|e| e * e).sum())
    }
}

/// Test-set predictions and metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub inputs: Vec<Vec<f64>>,
    pub predictions: Vec<Vec<f64>>,
    pub references: Vec<Vec<f64>>,
    pub metrics: Metrics,
}

impl Evaluation {
    pub fn new(inputs: Vec<Vec<f64>>, predictions: Vec<Vec<f64>>, references: Vec<Vec<f64>>) -> Result<Self> {
        let p: Vec<f64> = predictions.iter().flatten().copied().collect();
        let r: Vec<f64> = references.iter().flatten().copied().collect();
        let metrics = compute_metrics(&p, &r)?;
        Ok(Self { inputs, predictions, references, metrics })
    }

    /// Per-component metrics, e.g. `u` and `v` of a flow field.
    pub fn component_metrics(&self) -> Result<Vec<Metrics>> {
        let n = self.references.first().map_or(0, Vec::len);
        (0..n)
            .map(|k| {
                let p: Vec<f64> = self.predictions.iter().map(|v| v[k]).collect();
                let r: Vec<f64> = self.references.iter().map(|v| v[k]).collect();
                compute_metrics(&p, &r)
            })
            .collect()
    }

    /// Header, then inputs, predictions and references per row, 17
    /// significant digits.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n_in = self.inputs.first().map_or(0, Vec::len);
        let n_out = self.references.first().map_or(0, Vec::len);
        let mut header: Vec<String> = (0..n_in).map(|i| format!("x{i}")).collect();
        header.extend((0..n_out).map(|k| format!("pred{k}")));
        header.extend((0..n_out).map(|k| format!("ref{k}")));
        out.write_record(&header)?;
        for ((x, p), r) in self.inputs.iter().zip(&self.predictions).zip(&self.references) {
            let row: Vec<String> = x.iter().chain(p).chain(r).map(|v| format!("{v:.16e}")).collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a predictions file back into `(inputs, predictions,
    /// references)`.
    pub fn read_csv(r: impl std::io::Read) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let n_in = headers.iter().filter(|h| h.starts_with('x')).count();
        let n_out = headers.iter().filter(|h| h.starts_with("pred")).count();
        let (mut xs, mut ps, mut rs) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            let v = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::invalid("predictions", e.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            if v.len() != n_in + 2 * n_out {
                return Err(Error::invalid("predictions", "ragged row"));
            }
            xs.push(v[..n_in].to_vec());
            ps.push(v[n_in..n_in + n_out].to_vec());
            rs.push(v[n_in + n_out..].to_vec());
        }
        Self::new(xs, ps, rs)
    }
}

pub fn evaluate<M: Regressor>(model: &M, test: &Samples) -> Result<Evaluation> {
    let preds = test
        .inputs
        .par_iter()
        .map(|x| model.predict(x))
        .collect::<Result<Vec<_>>>()?;
    Evaluation::new(test.inputs.clone(), preds, test.targets.clone())
}

/// Mean squared error training of a point-wise regressor.
pub fn fit_regressor<M: Regressor>(
    model: &mut M,
    train: &Samples,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &M) -> Result<()>,
) -> Result<LossHistory> {
    let mut w = model.params();
    let n = w.len();
    let mut work = model.clone();
    let history = optimize(
        &mut w,
        train.len(),
        cfg,
        |epoch, params, idx| {
            work.set_params(params);
            let m = &work;
            par_loss_grad(idx, n, epoch, |i, g| m.loss_grad(&train.inputs[i], &train.targets[i], g))
        },
        |epoch, loss, params| {
            let mut m = model.clone();
            m.set_params(params);
            on_epoch(epoch, loss, &m)
        },
    )?;
    model.set_params(&w);
    Ok(history)
}

/// Mean squared error over the solution grid, batched over functions; every
/// step evaluates the trunk once per grid point.
pub fn fit_deeponet(
    model: &mut DeepOnetModel,
    data: &OperatorData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &DeepOnetModel) -> Result<()>,
) -> Result<LossHistory> {
    let mut w = model.flat_weights();
    let n = w.len();
    let mut work = model.clone();
    let coords: Vec<Vec<f64>> = data.grid.iter().map(|&y| vec![y]).collect();
    let n_grid = coords.len() as f64;
    let history = optimize(
        &mut w,
        data.train_g.len(),
        cfg,
        |epoch, params, idx| {
            work.set_flat_weights(params);
            let m = &work;
            let branch = idx
                .par_iter()
                .map(|&i| mlp_forward(&m.branch, &data.train_g[i]))
                .collect::<Result<Vec<_>>>()?;
            let trunk = coords
                .par_iter()
                .map(|y| mlp_forward(&m.trunk, y))
                .collect::<Result<Vec<_>>>()?;
            let batch = DeepOnetBatch { branch, trunk };
            let pred = batch.predictions();
            let mut loss = 0.0;
            let mut d_pred = Vec::with_capacity(idx.len());
            for (row, &i) in pred.iter().zip(idx) {
                let mut d = Vec::with_capacity(row.len());
                for (p, t) in row.iter().zip(&data.train_u[i]) {
                    let e = p - t;
                    loss += e * e / n_grid;
                    d.push(2.0 * e / n_grid);
                }
                d_pred.push(d);
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite { epoch, sample: idx[0] });
            }
            let mut grad = vec![0.0; n];
            deeponet_backward(m, &batch, &d_pred, &mut grad)?;
            Ok((loss, grad))
        },
        |epoch, loss, params| {
            let mut m = model.clone();
            m.set_flat_weights(params);
            on_epoch(epoch, loss, &m)
        },
    )?;
    model.set_flat_weights(&w);
    Ok(history)
}

pub fn evaluate_deeponet(model: &DeepOnetModel, g: &[Vec<f64>], u: &[Vec<f64>], grid: &[f64]) -> Result<Evaluation> {
    let coords: Vec<Vec<f64>> = grid.iter().map(|&y| vec![y]).collect();
    let trunk = coords
        .par_iter()
        .map(|y| mlp_forward(&model.trunk, y))
        .collect::<Result<Vec<_>>>()?;
    let branch = g
        .par_iter()
        .map(|g| mlp_forward(&model.branch, g))
        .collect::<Result<Vec<_>>>()?;
    let pred = DeepOnetBatch { branch, trunk }.predictions();
    let mut inputs = Vec::new();
    let mut preds = Vec::new();
    let mut refs = Vec::new();
    for (f, (row, urow)) in pred.iter().zip(u).enumerate() {
        for ((p, r), &y) in row.iter().zip(urow).zip(grid) {
            inputs.push(vec![f as f64, y]);
            preds.push(vec![*p]);
            refs.push(vec![*r]);
        }
    }
    Evaluation::new(inputs, preds, refs)
}

/// Physics loss: mean squared residual over collocation points plus the
/// penalty-weighted mean squared initial/boundary mismatch. Each item is
/// either a collocation point or a penalty point.
pub fn fit_pinn(
    model: &mut MlpModel,
    problem: &PinnProblem,
    data: &PinnData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &MlpModel) -> Result<()>,
) -> Result<LossHistory> {
    problem.validate()?;
    let mut w = model.net.flat_weights();
    let n = w.len();
    let n_col = data.collocation.len();
    let n_items = n_col + data.boundary.len();
    // penalty terms are averaged over their own count
    let b_weight = if data.boundary.is_empty() {
        0.0
    } else {
        problem.penalty_weight * n_col.max(1) as f64 / data.boundary.len() as f64
    };
    let mut work = model.clone();
    let history = optimize(
        &mut w,
        n_items,
        cfg,
        |epoch, params, idx| {
            work.net.set_flat_weights(params);
            let m = &work;
            par_loss_grad(idx, n, epoch, |i, g| {
                if i < n_col {
                    residual_loss_grad(m, problem, &data.collocation[i], 1.0, g)
                } else {
                    let (x, t) = &data.boundary[i - n_col];
                    Ok(b_weight * data_loss_grad(m, problem, x, t, b_weight, g)?)
                }
            })
        },
        |epoch, loss, params| {
            let mut m = model.clone();
            m.net.set_flat_weights(params);
            on_epoch(epoch, loss, &m)
        },
    )?;
    model.net.set_flat_weights(&w);
    Ok(history)
}

pub fn evaluate_pinn(model: &MlpModel, problem: &PinnProblem, test: &Samples) -> Result<Evaluation> {
    let preds = test
        .inputs
        .par_iter()
        .map(|x| {
            let v = pinn_value(model, problem, x)?;
            Ok(v[..test.targets[0].len()].to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Evaluation::new(test.inputs.clone(), preds, test.targets.clone())
}
