//! Training runs and their on-disk artifacts.
//!
//! A run directory holds `config.json`, `loss.csv`, `predictions.csv`,
//! `metrics.json` and the trained model (`model.ckpt` for spiking QIF
//! models, `model.json` for LIF baselines).

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EncodingChoice, ExperimentConfig, ModelKind};
use crate::codec::{EncodingSpec, TargetAffine};
use crate::error::{Error, Result};
use crate::lif::LifModel;
use crate::models::{exact_first_derivative, load_checkpoint, save_checkpoint, Checkpoint, DeepOnetModel, MlpModel};
use crate::train::data::{field_split, parabola_split, pinn_data, poisson_operator_data, OperatorData, PinnData, Split};
use crate::train::fit::{evaluate_deeponet, evaluate_pinn};
use crate::train::{compute_metrics, evaluate, fit_deeponet, fit_pinn, fit_regressor, Evaluation, LossHistory, Metrics, TaskId};

pub const CONFIG_FILE: &str = "config.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LIF_MODEL_FILE: &str = "model.json";

/// Points where the physics-informed Poisson derivative is compared.
pub const DERIVATIVE_POINTS: usize = 11;

/// A trained (or freshly initialized) model of any task.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Qif(MlpModel),
    Lif(LifModel),
    DeepOnet(DeepOnetModel),
}

/// Task data regenerated deterministically from a config.
#[derive(Debug, Clone)]
pub enum TaskData {
    Regression(Split),
    Operator(OperatorData),
    Pinn(PinnData),
}

pub fn task_data(cfg: &ExperimentConfig) -> Result<TaskData> {
    let d = &cfg.data;
    Ok(match cfg.task {
        TaskId::Parabola => TaskData::Regression(parabola_split(d.n_train, d.n_test)),
        TaskId::Ricker | TaskId::Ripple => TaskData::Regression(field_split(cfg.task, d.n_train, d.n_test)?),
        TaskId::DeeponetPoisson => {
            TaskData::Operator(poisson_operator_data(cfg.deeponet.n_sensors, d.n_train, d.n_test, d.seed)?)
        }
        TaskId::PinnPoisson | TaskId::PinnBurgers | TaskId::PinnBeltrami => {
            let problem = cfg.pinn_problem()?;
            TaskData::Pinn(pinn_data(&problem, d.n_train, cfg.pinn.n_boundary, d.n_test, d.seed))
        }
    })
}

fn encodings(cfg: &ExperimentConfig, domain: &[(f64, f64)]) -> Vec<EncodingSpec> {
    let t = cfg.qif.trial_t;
    domain
        .iter()
        .map(|&(lo, hi)| match cfg.qif.encoding {
            EncodingChoice::Direct => EncodingSpec::direct(lo, hi, t),
            EncodingChoice::Grf { m, beta } => EncodingSpec::grf(lo, hi, t, m, beta),
        })
        .collect()
}

fn qif_mlp(
    cfg: &ExperimentConfig,
    enc: Vec<EncodingSpec>,
    hidden: &[usize],
    n_values: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MlpModel> {
    let q = &cfg.qif;
    let mut m = MlpModel::new(enc, hidden, n_values, cfg.neuron_params()?, q.trial_t)?;
    m.init_weights(rng, q.init_gain);
    m.init_phases(rng, q.phase_init);
    Ok(m)
}

/// Builds the initial model; target maps and input ranges come from the
/// training data.
pub fn build_model(cfg: &ExperimentConfig, data: &TaskData) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let t = cfg.qif.trial_t;
    match (data, cfg.model) {
        (TaskData::Regression(split), ModelKind::Qif) => {
            let mut m = qif_mlp(cfg, encodings(cfg, &split.domain), &cfg.qif.hidden, 1, &mut rng)?;
            let (lo, hi) = split.train.target_range();
            m.target_affine = vec![TargetAffine::for_trial(lo, hi, t)];
            Ok(TrainedModel::Qif(m))
        }
        (TaskData::Regression(split), ModelKind::LifDirect) => {
            let l = &cfg.lif;
            let mut m = LifModel::new(split.domain.clone(), &l.hidden, 1, l.params)?;
            m.init(&mut rng, l.init_gain, l.bias_hi);
            let (lo, hi) = split.train.target_range();
            m.target_affine = vec![TargetAffine::fit(lo, hi, 0.5)];
            Ok(TrainedModel::Lif(m))
        }
        (TaskData::Operator(op), ModelKind::Qif) => {
            let d = &cfg.deeponet;
            let (g_lo, g_hi) = span(op.train_g.iter().flatten());
            let branch_enc = vec![EncodingSpec::direct(g_lo, g_hi, t); d.n_sensors];
            let trunk_enc = vec![EncodingSpec::direct(-1.0, 1.0, t)];
            let mut branch = qif_mlp(cfg, branch_enc, &d.branch_hidden, d.p, &mut rng)?;
            let mut trunk = qif_mlp(cfg, trunk_enc, &d.trunk_hidden, d.p, &mut rng)?;
            // freshly initialized outputs are strongly correlated, so the
            // p products add coherently
            let (u_lo, u_hi) = span(op.train_u.iter().flatten());
            let u_scale = u_lo.abs().max(u_hi.abs()).max(1e-12);
            let half = 0.4 * t;
            let scale = d.output_scale * u_scale / (d.p as f64 * half);
            branch.target_affine = vec![TargetAffine { scale, offset: 0.0 }; d.p];
            trunk.target_affine = vec![TargetAffine { scale: 1.0 / half, offset: 0.0 }; d.p];
            Ok(TrainedModel::DeepOnet(DeepOnetModel::new(branch, trunk)?))
        }
        (TaskData::Pinn(_), ModelKind::Qif) => {
            let problem = cfg.pinn_problem()?;
            let mut m = qif_mlp(cfg, problem.encodings(t), &cfg.qif.hidden, problem.n_outputs(), &mut rng)?;
            m.target_affine = cfg.pinn.output_range.iter().map(|&(lo, hi)| TargetAffine::for_trial(lo, hi, t)).collect();
            Ok(TrainedModel::Qif(m))
        }
        _ => Err(Error::invalid("model", format!("{} is not available for {}", cfg.model.name(), cfg.task.name()))),
    }
}

fn span<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Test-set evaluation of a model on regenerated data.
pub fn evaluate_model(cfg: &ExperimentConfig, data: &TaskData, model: &TrainedModel) -> Result<Evaluation> {
    match (data, model) {
        (TaskData::Regression(s), TrainedModel::Qif(m)) => evaluate(m, &s.test),
        (TaskData::Regression(s), TrainedModel::Lif(m)) => evaluate(m, &s.test),
        (TaskData::Operator(op), TrainedModel::DeepOnet(m)) => evaluate_deeponet(m, &op.test_g, &op.test_u, &op.grid),
        (TaskData::Pinn(p), TrainedModel::Qif(m)) => evaluate_pinn(m, &cfg.pinn_problem()?, &p.test),
        _ => Err(Error::invalid("model", "model does not match the task")),
    }
}

/// Relative L2 error (percent) of the network's exact input derivative
/// against `2 pi cos(pi x)` at interior points of the unit interval.
pub fn poisson_derivative_rel_l2(cfg: &ExperimentConfig, model: &MlpModel) -> Result<f64> {
    let problem = cfg.pinn_problem()?;
    let xs: Vec<f64> = (1..=DERIVATIVE_POINTS).map(|i| i as f64 / (DERIVATIVE_POINTS + 1) as f64).collect();
    let mut pred = Vec::with_capacity(xs.len());
    for &x in &xs {
        pred.push(crate::models::pinn_exact_derivative(model, &problem, &[x], 0)?[0]);
    }
    let reference: Vec<f64> = xs.iter().map(|x| 2.0 * std::f64::consts::PI * (std::f64::consts::PI * x).cos()).collect();
    Ok(compute_metrics(&pred, &reference)?.rel_l2)
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub task: TaskId,
    pub model: ModelKind,
    /// Row label, e.g. `QIF` or `LIF-128 (direct)`.
    pub label: String,
    pub seed: u64,
    pub epochs: usize,
    pub metrics: Metrics,
    /// Per output component when there is more than one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative_rel_l2: Option<f64>,
    pub final_loss: f64,
}

pub fn model_label(cfg: &ExperimentConfig) -> String {
    match cfg.model {
        ModelKind::Qif => "QIF".into(),
        ModelKind::LifDirect => format!("LIF-{} (direct)", cfg.lif.params.n_steps),
    }
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub model: TrainedModel,
    pub history: LossHistory,
    pub evaluation: Evaluation,
    pub metrics: RunMetrics,
}

/// Trains according to `cfg`. `progress` sees each epoch and its mean loss.
pub fn train(cfg: &ExperimentConfig, mut progress: impl FnMut(usize, f64)) -> Result<RunOutcome> {
    let data = task_data(cfg)?;
    let mut model = build_model(cfg, &data)?;
    let mut cb = |e: usize, l: f64| -> Result<()> {
        progress(e, l);
        Ok(())
    };
    let history = match (&data, &mut model) {
        (TaskData::Regression(s), TrainedModel::Qif(m)) => fit_regressor(m, &s.train, &cfg.train, |e, l, _| cb(e, l))?,
        (TaskData::Regression(s), TrainedModel::Lif(m)) => fit_regressor(m, &s.train, &cfg.train, |e, l, _| cb(e, l))?,
        (TaskData::Operator(op), TrainedModel::DeepOnet(m)) => fit_deeponet(m, op, &cfg.train, |e, l, _| cb(e, l))?,
        (TaskData::Pinn(p), TrainedModel::Qif(m)) => {
            fit_pinn(m, &cfg.pinn_problem()?, p, &cfg.train, |e, l, _| cb(e, l))?
        }
        _ => return Err(Error::invalid("model", "model does not match the task")),
    };
    let evaluation = evaluate_model(cfg, &data, &model)?;
    let metrics = summarize(cfg, &model, &evaluation, &history)?;
    Ok(RunOutcome { config: cfg.clone(), model, history, evaluation, metrics })
}

fn summarize(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    evaluation: &Evaluation,
    history: &LossHistory,
) -> Result<RunMetrics> {
    let components = if evaluation.references.first().map_or(0, Vec::len) > 1 {
        evaluation.component_metrics()?
    } else {
        Vec::new()
    };
    let derivative_rel_l2 = match (cfg.task, model) {
        (TaskId::PinnPoisson, TrainedModel::Qif(m)) => Some(poisson_derivative_rel_l2(cfg, m)?),
        _ => None,
    };
    Ok(RunMetrics {
        task: cfg.task,
        model: cfg.model,
        label: model_label(cfg),
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
        metrics: evaluation.metrics,
        components,
        derivative_rel_l2,
        final_loss: history.records.last().map_or(f64::NAN, |r| r.loss),
    })
}

/// Writes every artifact of `outcome` into `dir`.
pub fn write_run(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), outcome.config.to_json()?)?;
    outcome.history.write_csv(fs::File::create(dir.join(LOSS_FILE))?)?;
    outcome.evaluation.write_csv(fs::File::create(dir.join(PREDICTIONS_FILE))?)?;
    fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(&outcome.metrics)?)?;
    let extra = serde_json::json!({ "task": outcome.config.task, "seed": outcome.config.train.seed });
    match &outcome.model {
        TrainedModel::Qif(m) => save_checkpoint(&dir.join(CHECKPOINT_FILE), &Checkpoint::Mlp(m.clone()), &extra)?,
        TrainedModel::DeepOnet(m) => {
            save_checkpoint(&dir.join(CHECKPOINT_FILE), &Checkpoint::DeepOnet(m.clone()), &extra)?
        }
        TrainedModel::Lif(m) => fs::write(dir.join(LIF_MODEL_FILE), serde_json::to_string(m)?)?,
    }
    Ok(())
}

/// Trains and writes the artifacts; returns the run directory contents.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, progress: impl FnMut(usize, f64)) -> Result<RunOutcome> {
    let outcome = train(cfg, progress)?;
    write_run(dir, &outcome)?;
    Ok(outcome)
}

pub fn read_config(dir: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&fs::read_to_string(dir.join(CONFIG_FILE))?)
}

pub fn read_metrics(dir: &Path) -> Result<RunMetrics> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(METRICS_FILE))?)?)
}

/// Loads the stored model of a run directory.
pub fn load_model(dir: &Path, cfg: &ExperimentConfig) -> Result<TrainedModel> {
    if cfg.model == ModelKind::LifDirect {
        let path = dir.join(LIF_MODEL_FILE);
        let text = fs::read_to_string(&path).map_err(|e| missing(&path, e))?;
        return Ok(TrainedModel::Lif(serde_json::from_str(&text)?));
    }
    let path = dir.join(CHECKPOINT_FILE);
    if !path.exists() {
        return Err(missing(&path, std::io::ErrorKind::NotFound.into()));
    }
    Ok(match load_checkpoint(&path)?.0 {
        Checkpoint::Mlp(m) => TrainedModel::Qif(m),
        Checkpoint::DeepOnet(m) => TrainedModel::DeepOnet(m),
    })
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Result of re-evaluating a stored run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub stored: RunMetrics,
    pub recomputed: Metrics,
    /// Largest relative difference between stored and recomputed metrics.
    pub max_rel_diff: f64,
}

/// Reloads config and model from `dir`, regenerates the test data and
/// recomputes the metrics.
pub fn eval_run(dir: &Path) -> Result<EvalReport> {
    let cfg = read_config(dir)?;
    let model = load_model(dir, &cfg)?;
    let stored = read_metrics(dir)?;
    let data = task_data(&cfg)?;
    let recomputed = evaluate_model(&cfg, &data, &model)?.metrics;
    let max_rel_diff = metric_diff(&stored.metrics, &recomputed);
    Ok(EvalReport { stored, recomputed, max_rel_diff })
}

/// Largest relative difference over the metric fields.
pub fn metric_diff(a: &Metrics, b: &Metrics) -> f64 {
    let pairs = [(a.mae, b.mae), (a.mean_abs, b.mean_abs), (a.rmse, b.rmse), (a.rel_l2, b.rel_l2), (a.r2, b.r2)];
    pairs
        .iter()
        .map(|&(x, y)| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()).max(1e-300) })
        .fold(0.0, f64::max)
}

/// Default output directory: `$QIFNET_OUTPUT_DIR` or `runs`, then
/// `<task>_<model>_seed<seed>`.
pub fn default_run_dir(cfg: &ExperimentConfig) -> PathBuf {
    let root = cfg
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let model = match cfg.model {
        ModelKind::Qif => "qif".to_string(),
        ModelKind::LifDirect => format!("lif{}", cfg.lif.params.n_steps),
    };
    root.join(format!("{}_{}_seed{}", cfg.task.name(), model, cfg.train.seed))
}

pub const OUTPUT_DIR_ENV: &str = "QIFNET_OUTPUT_DIR";

/// Exact input derivative of a trained regression model, exposed for
/// figure data.
pub fn model_derivative(model: &TrainedModel, x: &[f64], dim: usize) -> Result<Vec<f64>> {
    match model {
        TrainedModel::Qif(m) => exact_first_derivative(m, x, dim),
        _ => Err(Error::NoInputDerivative("only spiking QIF regressors have exact input derivatives".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(task: &str, extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"{{"task": "{task}", "train": {{"epochs": 2, "batch_size": 4}},
                "qif": {{"hidden": [6]}}, "lif": {{"hidden": [6], "params": {{"n_steps": 16,
                "tau_m": 0.25, "lambda": 1.0, "v_rest": 0.0, "v_th": 1.0, "duration": 1.0,
                "surrogate_slope": 2.0}}}} {extra}}}"#
        );
        ExperimentConfig::from_json(&text).unwrap()
    }

    #[test]
    fn parabola_run_writes_reloadable_artifacts() {
        let mut cfg = tiny("parabola", "");
        cfg.data.n_train = 12;
        cfg.data.n_test = 30;
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path(), |_, _| {}).unwrap();
        for f in [CONFIG_FILE, LOSS_FILE, PREDICTIONS_FILE, METRICS_FILE, CHECKPOINT_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(out.history.records.len(), 2);
        let ev = eval_run(dir.path()).unwrap();
        assert!(ev.max_rel_diff <= 1e-9, "{}", ev.max_rel_diff);
        assert_eq!(read_config(dir.path()).unwrap(), cfg);
    }

    #[test]
    fn lif_run_round_trips() {
        let mut cfg = tiny("parabola", r#", "model": "lif_direct""#);
        cfg.data.n_train = 10;
        cfg.data.n_test = 20;
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path(), |_, _| {}).unwrap();
        assert_eq!(out.metrics.label, "LIF-16 (direct)");
        assert!(dir.path().join(LIF_MODEL_FILE).exists());
        assert_eq!(eval_run(dir.path()).unwrap().max_rel_diff, 0.0);
    }

    #[test]
    fn missing_model_file_is_an_error() {
        let mut cfg = tiny("parabola", "");
        cfg.data.n_train = 5;
        cfg.data.n_test = 5;
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir.path(), |_, _| {}).unwrap();
        fs::remove_file(dir.path().join(CHECKPOINT_FILE)).unwrap();
        let e = eval_run(dir.path()).unwrap_err();
        assert!(e.to_string().contains(CHECKPOINT_FILE), "{e}");
    }

    #[test]
    fn deeponet_and_pinn_models_build() {
        let mut cfg = tiny("deeponet_poisson", r#", "deeponet": {"p": 3, "branch_hidden": [4], "trunk_hidden": [4], "n_sensors": 7}"#);
        cfg.data.n_train = 4;
        cfg.data.n_test = 2;
        let data = task_data(&cfg).unwrap();
        let TrainedModel::DeepOnet(m) = build_model(&cfg, &data).unwrap() else { panic!() };
        assert_eq!(m.p, 3);
        let ev = evaluate_model(&cfg, &data, &TrainedModel::DeepOnet(m)).unwrap();
        assert_eq!(ev.predictions.len(), 2 * 7);

        let mut cfg = tiny("pinn_poisson", "");
        cfg.data.n_train = 6;
        cfg.data.n_test = 9;
        let out = train(&cfg, |_, _| {}).unwrap();
        assert!(out.metrics.derivative_rel_l2.unwrap().is_finite());
        assert_eq!(out.evaluation.inputs.len(), 9);
    }

    #[test]
    fn metric_diff_is_relative() {
        let m = Metrics { mae: 1.0, mean_abs: 0.5, rmse: 0.7, rel_l2: 2.0, r2: 0.9 };
        assert_eq!(metric_diff(&m, &m), 0.0);
        let n = Metrics { rel_l2: 2.2, ..m };
        assert!((metric_diff(&m, &n) - 0.2 / 2.2).abs() < 1e-15);
    }

    #[test]
    fn run_dir_names() {
        let cfg = ExperimentConfig::defaults(TaskId::Ricker, ModelKind::LifDirect);
        let d = default_run_dir(&ExperimentConfig { output_dir: Some("out".into()), ..cfg });
        assert_eq!(d, PathBuf::from("out/ricker_lif128_seed0"));
    }
}
