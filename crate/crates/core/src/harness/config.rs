//! Experiment configuration files.
//!
//! A config names a task and a model; every other section is optional and
//! overrides the task defaults field by field.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lif::LifParams;
use crate::models::PhaseInit;
use crate::train::{TaskId, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Qif,
    LifDirect,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Qif => "qif",
            ModelKind::LifDirect => "lif_direct",
        }
    }
}

/// Input coding of every scalar input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncodingChoice {
    Direct,
    Grf { m: usize, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QifSettings {
    pub hidden: Vec<usize>,
    pub trial_t: f64,
    /// Free period `phi_theta` as a multiple of `trial_t`.
    pub period_factor: f64,
    pub tau_m: f64,
    pub eps_guard: f64,
    /// Weights uniform in `±init_gain / sqrt(fan_in)`.
    pub init_gain: f64,
    pub phase_init: PhaseInit,
    pub encoding: EncodingChoice,
}

impl Default for QifSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64; 4],
            trial_t: 2.0,
            period_factor: 2.0,
            tau_m: 1.0,
            eps_guard: crate::qif::DEFAULT_EPS_GUARD,
            init_gain: 3.0,
            phase_init: PhaseInit::Uniform { lo: 0.0, hi: 0.5 },
            encoding: EncodingChoice::Direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifSettings {
    pub hidden: Vec<usize>,
    pub params: LifParams,
    pub init_gain: f64,
    /// Spiking-layer biases start uniform in `[0, bias_hi]`.
    pub bias_hi: f64,
}

impl Default for LifSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64; 4],
            params: LifParams::default(),
            init_gain: 3.0,
            bias_hi: 0.5,
        }
    }
}

/// Data set sizes. For 2D field tasks the counts are points per axis; for
/// the operator task they count functions; for physics-informed tasks
/// `n_train` counts collocation points and `n_test` test points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSettings {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepOnetSettings {
    pub n_sensors: usize,
    pub p: usize,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    /// Branch outputs are scaled so that `sum_i B_i T_i` spans
    /// `output_scale * max|u|` when all `p` terms agree in sign.
    pub output_scale: f64,
}

impl Default for DeepOnetSettings {
    fn default() -> Self {
        Self {
            n_sensors: 51,
            p: 128,
            branch_hidden: vec![64, 64],
            trunk_hidden: vec![64, 64],
            output_scale: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinnSettings {
    pub n_boundary: usize,
    pub penalty_weight: f64,
    pub fd_rel_step: f64,
    /// Expected range of each raw network output, used for the target map.
    pub output_range: Vec<(f64, f64)>,
}

impl Default for PinnSettings {
    fn default() -> Self {
        Self {
            n_boundary: 0,
            penalty_weight: 1.0,
            fd_rel_step: 1e-3,
            output_range: vec![(0.0, 8.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub task: TaskId,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub qif: QifSettings,
    pub lif: LifSettings,
    pub data: DataSettings,
    pub deeponet: DeepOnetSettings,
    pub pinn: PinnSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Task defaults for the given model.
    pub fn defaults(task: TaskId, model: ModelKind) -> Self {
        let mut c = Self {
            version: CONFIG_VERSION,
            task,
            model,
            train: TrainConfig::default(),
            qif: QifSettings::default(),
            lif: LifSettings::default(),
            data: DataSettings { n_train: 100, n_test: 1000, seed: 0 },
            deeponet: DeepOnetSettings::default(),
            pinn: PinnSettings::default(),
            output_dir: None,
        };
        match task {
            TaskId::Parabola => {
                c.train.epochs = 10_000;
            }
            TaskId::Ricker => {
                c.train.epochs = 1000;
                c.data.n_train = 20;
                c.data.n_test = 50;
            }
            TaskId::Ripple => {
                c.train.epochs = 1000;
                c.data.n_train = 30;
                c.data.n_test = 50;
            }
            TaskId::DeeponetPoisson => {
                c.train.epochs = 1500;
                c.train.batch_size = 50;
                c.qif.trial_t = 3.0;
                c.data.n_train = 800;
                c.data.n_test = 800;
            }
            TaskId::PinnPoisson => {
                c.train.epochs = 500;
                c.train.batch_size = 50;
                c.qif.hidden = vec![64; 2];
                c.data.n_train = 1000;
                c.data.n_test = 101;
                c.pinn.penalty_weight = 0.0;
                // a wider stencil averages over event-order kinks in the network value
                c.pinn.fd_rel_step = 1e-2;
            }
            TaskId::PinnBurgers => {
                c.train.epochs = 15_000;
                c.train.batch_size = 50;
                c.qif.hidden = vec![64; 6];
                c.data.n_train = 6579;
                c.data.n_test = 101;
                c.pinn.n_boundary = 400;
                c.pinn.output_range = vec![(-1.0, 1.0)];
            }
            TaskId::PinnBeltrami => {
                c.train.epochs = 10;
                c.train.batch_size = 50;
                c.qif.hidden = vec![32; 2];
                c.data.n_train = 200;
                c.data.n_test = 11;
                c.pinn.n_boundary = 100;
                c.pinn.output_range = vec![(-1.0, 1.0); 3];
            }
        }
        c
    }

    /// Parses a config, filling absent fields from the task defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        Self::from_value(user)
    }

    pub fn from_value(user: Value) -> Result<Self> {
        let Value::Object(map) = &user else {
            return Err(Error::invalid("config", "must be a JSON object"));
        };
        let task: TaskId = match map.get("task") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::invalid("task", e.to_string()))?,
            None => return Err(Error::invalid("task", "missing")),
        };
        let model: ModelKind = match map.get("model") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::invalid("model", e.to_string()))?,
            None => ModelKind::Qif,
        };
        if let Some(v) = map.get("version") {
            if v.as_u64() != Some(CONFIG_VERSION as u64) {
                return Err(Error::invalid("version", format!("expected {CONFIG_VERSION}, found {v}")));
            }
        }
        let mut merged = serde_json::to_value(Self::defaults(task, model))?;
        merge(&mut merged, user);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::invalid("version", format!("expected {CONFIG_VERSION}")));
        }
        if self.task.is_pinn() && self.model == ModelKind::LifDirect {
            return Err(Error::invalid(
                "model",
                "lif_direct has no exact input derivatives and cannot drive a physics-informed task",
            ));
        }
        if self.task == TaskId::DeeponetPoisson && self.model == ModelKind::LifDirect {
            return Err(Error::invalid("model", "the operator task is implemented for qif only"));
        }
        self.train.validate()?;
        let q = &self.qif;
        if q.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("qif.hidden", "layers must be non-empty"));
        }
        if !(q.trial_t > 0.0) || !(q.period_factor > 0.0) {
            return Err(Error::invalid("qif.trial_t/period_factor", "must be positive"));
        }
        if !(q.init_gain >= 0.0) {
            return Err(Error::invalid("qif.init_gain", "must be non-negative"));
        }
        if let PhaseInit::Uniform { lo, hi } = q.phase_init {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(Error::invalid("qif.phase_init", "need 0 <= lo < hi <= 1"));
            }
        }
        self.neuron_params()?;
        self.lif.params.validate()?;
        if self.lif.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("lif.hidden", "layers must be non-empty"));
        }
        if self.data.n_train < 2 || self.data.n_test < 2 {
            return Err(Error::invalid("data", "need at least two train and test points"));
        }
        if !(self.deeponet.output_scale > 0.0) {
            return Err(Error::invalid("deeponet.output_scale", "must be positive"));
        }
        if self.deeponet.p == 0 || self.deeponet.n_sensors < 3 {
            return Err(Error::invalid("deeponet", "need p >= 1 and at least three sensors"));
        }
        if self.task.is_pinn() {
            let problem = self.pinn_problem()?;
            problem.validate()?;
            if self.pinn.output_range.len() != problem.n_outputs() {
                return Err(Error::invalid(
                    "pinn.output_range",
                    format!("need {} ranges", problem.n_outputs()),
                ));
            }
        }
        Ok(())
    }

    pub fn neuron_params(&self) -> Result<crate::qif::NeuronParams> {
        let q = &self.qif;
        let mut p = crate::qif::NeuronParams::with_period(q.tau_m, q.period_factor * q.trial_t)?;
        p.eps_guard = q.eps_guard;
        p.validate()?;
        Ok(p)
    }

    pub fn pinn_problem(&self) -> Result<crate::models::PinnProblem> {
        use crate::models::PinnProblem;
        let mut p = match self.task {
            TaskId::PinnPoisson => PinnProblem::poisson1d(),
            TaskId::PinnBurgers => PinnProblem::burgers(),
            TaskId::PinnBeltrami => PinnProblem::beltrami(),
            _ => return Err(Error::invalid("task", "not a physics-informed task")),
        };
        p.fd_rel_step = self.pinn.fd_rel_step;
        p.penalty_weight = self.pinn.penalty_weight;
        Ok(p)
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, anything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && !is_tagged(slot) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

// Tagged enums are replaced wholesale so that switching variants does not
// inherit fields of the old one.
fn is_tagged(v: &Value) -> bool {
    v.get("kind").map_or(false, Value::is_string)
}
