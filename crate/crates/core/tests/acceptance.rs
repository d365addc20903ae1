//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Criteria that need long training runs re-evaluate recorded runs from
//! their checkpoints under `acceptance_runs/` (or `$QIFNET_ACCEPTANCE_DIR`).
//! With `QIFNET_ACCEPTANCE=full` missing runs are trained first; without
//! it they are reported as SKIP.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use qifnet::codec::{decode_direct, encode_direct, EncodingSpec};
use qifnet::engine::decode_pair;
use qifnet::harness::run::{load_model, poisson_derivative_rel_l2, read_config};
use qifnet::harness::{
    eval_run, run_experiment, run_gradcheck, train, ExperimentConfig, GradcheckConfig, ModelKind, TrainedModel,
};
use qifnet::models::deeponet::combine;
use qifnet::models::{exact_first_derivative, mlp_forward};
use qifnet::qif::{phi_of_v, ptc, v_of_phi, NeuronParams};
use qifnet::train::fit::smoothed;
use qifnet::train::{compute_metrics, TaskId};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: u32,
    status: Status,
    gating: bool,
    text: String,
}

fn line(id: u32, ok: bool, text: String) -> Line {
    Line { id, status: if ok { Status::Pass } else { Status::Fail }, gating: true, text }
}

fn skip(id: u32, text: String) -> Line {
    Line { id, status: Status::Skip, gating: true, text }
}

fn runs_root() -> PathBuf {
    std::env::var_os("QIFNET_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../acceptance_runs"))
}

fn full_mode() -> bool {
    std::env::var("QIFNET_ACCEPTANCE").map_or(false, |v| v == "full")
}

fn config(task: TaskId, model: ModelKind, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(task, model);
    c.train.seed = seed;
    c
}

/// Re-evaluated test metrics of a recorded run, training it first in full
/// mode. `None` when no matching run exists.
fn recorded(name: &str, cfg: &ExperimentConfig) -> Result<Option<(PathBuf, qifnet::train::Metrics)>, String> {
    let dir = runs_root().join(name);
    let matches = read_config(&dir).map_or(false, |c| c == *cfg);
    if !matches {
        if !full_mode() {
            return Ok(None);
        }
        let start = Instant::now();
        let every = (cfg.train.epochs / 10).max(1);
        eprintln!("training {name} ({} epochs)", cfg.train.epochs);
        run_experiment(cfg, &dir, |e, l| {
            if e % every == 0 {
                eprintln!("  {name} epoch {e} loss {l:.4e} ({:.0} s)", start.elapsed().as_secs_f64());
            }
        })
        .map_err(|e| format!("{name}: {e}"))?;
    }
    let ev = eval_run(&dir).map_err(|e| format!("{name}: {e}"))?;
    if ev.max_rel_diff > 1e-9 {
        return Err(format!("{name}: stored metrics differ from checkpoint by {:.2e}", ev.max_rel_diff));
    }
    Ok(Some((dir, ev.recomputed)))
}

fn c1_gradcheck() -> Line {
    let cfg = GradcheckConfig::default();
    match run_gradcheck(&cfg) {
        Err(e) => line(1, false, format!("gradcheck error: {e}")),
        Ok(s) => {
            let r = &s.report;
            let ok = s.n_nets >= 100
                && r.max_rel_err <= 1e-5
                && s.excluded_fraction < 0.05
                && s.seconds <= 60.0
                && s.pseudo_outputs > 0
                && s.ordinary_outputs > 0;
            line(
                1,
                ok,
                format!(
                    "gradient check: {} nets, max rel err {:.2e} (<= 1e-5), excluded {:.2}% (< 5%), outputs {} ordinary / {} pseudo, {:.1} s (<= 60 s)",
                    s.n_nets,
                    r.max_rel_err,
                    100.0 * s.excluded_fraction,
                    s.ordinary_outputs,
                    s.pseudo_outputs,
                    s.seconds
                ),
            )
        }
    }
}

fn c2_closed_form() -> Line {
    let worst = common::closed_form::closed_form_worst(200, 11);
    line(2, worst <= 1e-12, format!("closed-form products: worst difference {worst:.2e} over 200 single-neuron cases (<= 1e-12)"))
}

fn c3_forward_oracle() -> Line {
    let r = common::dense::compare_dense(50, 31);
    line(
        3,
        r.worst <= 1e-4 && r.networks >= 50,
        format!("forward oracle: {} nets, {} spikes, worst |dt| {:.2e} vs dense integration (<= 1e-4)", r.networks, r.spikes, r.worst),
    )
}

fn c4_boundary() -> Line {
    let r = common::boundary::sweep_transitions(20, 404, 1e-8);
    line(
        4,
        r.cases >= 20 && r.worst_value <= 1e-6 && r.worst_grad <= 1e-3,
        format!(
            "trial-boundary continuity: {} transitions, value jump {:.2e} (<= 1e-6), gradient jump {:.2e} (<= 1e-3)",
            r.cases, r.worst_value, r.worst_grad
        ),
    )
}

/// Training wallclock in seconds from the last row of a run's loss history.
fn train_seconds(dir: &Path) -> Option<f64> {
    let text = fs::read_to_string(dir.join("loss.csv")).ok()?;
    text.lines().last()?.split(',').nth(2)?.parse().ok()
}

/// Best rel L2 over seeds; in full mode training stops at the first seed
/// meeting `target`. With `max_seconds`, the best run must also have
/// trained within that wallclock.
fn best_of_seeds(
    id: u32,
    task: TaskId,
    seeds: &[u64],
    target: f64,
    max_seconds: Option<f64>,
    spot: Option<fn(&Path, &ExperimentConfig) -> (bool, String)>,
    what: &str,
) -> Line {
    let mut results = Vec::new();
    for &seed in seeds {
        let cfg = config(task, ModelKind::Qif, seed);
        match recorded(&format!("{}_qif_seed{seed}", task.name()), &cfg) {
            Err(e) => return line(id, false, e),
            Ok(None) => {}
            Ok(Some((dir, m))) => {
                results.push((seed, m.rel_l2, train_seconds(&dir).unwrap_or(f64::NAN), dir));
                if m.rel_l2 <= target {
                    break;
                }
            }
        }
    }
    let Some((seed, best, secs, dir)) = results.iter().min_by(|a, b| a.1.total_cmp(&b.1)) else {
        return skip(id, format!("{what}: no recorded run (set QIFNET_ACCEPTANCE=full)"));
    };
    let (seed, best, secs) = (*seed, *best, *secs);
    let list: Vec<String> = results.iter().map(|(s, r, _, _)| format!("seed {s}: {r:.3}%")).collect();
    let mut text = format!("{what}: best rel L2 {best:.3}% (seed {seed}; {}) (<= {target}%)", list.join(", "));
    let fast = match max_seconds {
        Some(limit) => {
            text.push_str(&format!(", trained in {:.1} min (<= {:.0} min)", secs / 60.0, limit / 60.0));
            secs <= limit
        }
        None => true,
    };
    let spot_ok = match spot {
        Some(f) => {
            let (ok, msg) = f(dir, &config(task, ModelKind::Qif, seed));
            text.push_str(&format!("; {msg}"));
            ok
        }
        None => true,
    };
    line(id, best <= target && fast && spot_ok, text)
}

/// Point values and slope of a trained parabola model.
fn parabola_spot_checks(dir: &Path, cfg: &ExperimentConfig) -> (bool, String) {
    let Ok(TrainedModel::Qif(m)) = load_model(dir, cfg) else {
        return (false, "checkpoint unreadable".into());
    };
    let value = |x: f64| mlp_forward(&m, &[x]).map(|o| o.y[0]).unwrap_or(f64::NAN);
    let (y0, y1) = (value(0.0), value(1.0));
    let slope = exact_first_derivative(&m, &[0.5], 0).map(|d| d[0]).unwrap_or(f64::NAN);
    let ok = (y0 - 0.0).abs() <= 0.01 && (y1 - 1.0).abs() <= 0.02 && (slope - 1.0).abs() <= 0.05;
    (ok, format!("u(0) = {y0:.4} (+-0.01), u(1) = {y1:.4} (1 +-0.02), u'(0.5) = {slope:.4} (1 +-5%)"))
}

fn single_run(id: u32, task: TaskId, target: f64, what: &str) -> Line {
    let cfg = config(task, ModelKind::Qif, 0);
    match recorded(&format!("{}_qif_seed0", task.name()), &cfg) {
        Err(e) => line(id, false, e),
        Ok(None) => skip(id, format!("{what}: no recorded run (set QIFNET_ACCEPTANCE=full)")),
        Ok(Some((_, m))) => line(id, m.rel_l2 <= target, format!("{what}: rel L2 {:.3}% (<= {target}%)", m.rel_l2)),
    }
}

fn c9_pinn_poisson() -> Line {
    let cfg = config(TaskId::PinnPoisson, ModelKind::Qif, 0);
    match recorded("pinn_poisson_qif_seed0", &cfg) {
        Err(e) => line(9, false, e),
        Ok(None) => skip(9, "PINN Poisson: no recorded run (set QIFNET_ACCEPTANCE=full)".into()),
        Ok(Some((dir, m))) => {
            let d = match load_model(&dir, &cfg) {
                Ok(TrainedModel::Qif(model)) => poisson_derivative_rel_l2(&cfg, &model).unwrap_or(f64::NAN),
                _ => f64::NAN,
            };
            line(
                9,
                m.rel_l2 <= 2.0 && d <= 10.0,
                format!("PINN Poisson: rel L2 {:.3}% (<= 2%), exact u' at 11 points rel L2 {d:.3}% (<= 10%)", m.rel_l2),
            )
        }
    }
}

/// Epoch budget shared by the three models of the ordering criterion.
const ORDERING_EPOCHS: usize = 2000;

fn c10_ordering() -> Line {
    let mut results = Vec::new();
    for (name, model, steps) in [("lif32", ModelKind::LifDirect, 32), ("lif128", ModelKind::LifDirect, 128), ("qif", ModelKind::Qif, 0)] {
        let mut cfg = config(TaskId::Parabola, model, 0);
        cfg.train.epochs = ORDERING_EPOCHS;
        if model == ModelKind::LifDirect {
            cfg.lif.params.n_steps = steps;
        }
        match recorded(&format!("ordering_parabola_{name}"), &cfg) {
            Err(e) => return line(10, false, e),
            Ok(None) => return skip(10, format!("baseline ordering: no recorded {name} run (set QIFNET_ACCEPTANCE=full)")),
            Ok(Some((_, m))) => results.push(m.rel_l2),
        }
    }
    let (l32, l128, q) = (results[0], results[1], results[2]);
    line(
        10,
        l32 >= l128 && l128 >= q && l128 <= 6.0,
        format!(
            "baseline ordering at {ORDERING_EPOCHS} epochs: LIF-32 {l32:.3}% >= LIF-128 {l128:.3}% >= QIF {q:.3}%, LIF-128 <= 6%"
        ),
    )
}

fn c11_burgers_beltrami() -> Line {
    let mut smoke = config(TaskId::PinnBeltrami, ModelKind::Qif, 0);
    smoke.train.epochs = 10;
    let beltrami = match train(&smoke, |_, _| {}) {
        Ok(o) => {
            let finite = o.history.losses().iter().all(|l| l.is_finite()) && o.metrics.metrics.rel_l2.is_finite();
            (finite, format!("Beltrami 10-epoch smoke {}", if finite { "finite" } else { "NON-FINITE" }))
        }
        Err(e) => (false, format!("Beltrami smoke error: {e}")),
    };
    let cfg = config(TaskId::PinnBurgers, ModelKind::Qif, 0);
    let dir = runs_root().join("pinn_burgers_qif_seed0");
    let burgers = match read_config(&dir) {
        Ok(c) if c == cfg => match eval_run(&dir) {
            Ok(ev) => format!(
                "Burgers rel L2 {:.3}% ({}, non-gating, target <= 6%)",
                ev.recomputed.rel_l2,
                if ev.recomputed.rel_l2 <= 6.0 { "met" } else { "not met" }
            ),
            Err(e) => format!("Burgers re-evaluation error: {e}"),
        },
        _ => "Burgers not run (non-gating long run)".into(),
    };
    line(11, beltrami.0, format!("{}; {burgers}", beltrami.1))
}

/// Kendall's tau of `v` against its index and the Mann-Kendall z score
/// (no tie correction).
fn mann_kendall(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += match v[j].partial_cmp(&v[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let nf = n as f64;
    let pairs = nf * (nf - 1.0) / 2.0;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = match s {
        0 => 0.0,
        s if s > 0 => (s - 1) as f64 / var.sqrt(),
        s => (s + 1) as f64 / var.sqrt(),
    };
    (s as f64 / pairs, z)
}

fn property<S: Strategy>(runner: &mut TestRunner, s: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    runner.run(&s, f).map_err(|e| e.to_string())
}

fn c12_properties() -> Line {
    let mut runner = TestRunner::new(Config { cases: 512, failure_persistence: None, ..Config::default() });
    let p = NeuronParams::with_period(1.0, 4.0).unwrap();
    let th = p.phi_theta();
    let mut failures = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };
    check(
        "phase round trip",
        property(&mut runner, 1e-3 * th..(1.0 - 1e-3) * th, |phi| {
            let back = phi_of_v(v_of_phi(phi, &p), &p);
            prop_assert!((back - phi).abs() <= 1e-9 * th);
            Ok(())
        }),
    );
    check(
        "PTC composition",
        property(&mut runner, (0.05 * th..0.95 * th, -2.0f64..2.0, -2.0f64..2.0), |(phi, a, b)| {
            let two = ptc(ptc(phi, a, &p), b, &p);
            let one = ptc(phi, a + b, &p);
            prop_assert!((two - one).abs() <= 1e-8 * th);
            Ok(())
        }),
    );
    check(
        "direct codec round trip",
        property(&mut runner, -1.0f64..1.0, |x| {
            let spec = EncodingSpec::direct(-1.0, 1.0, 2.0);
            prop_assert!((decode_direct(encode_direct(x, &spec).time, &spec) - x).abs() <= 1e-12);
            Ok(())
        }),
    );
    check(
        "pair decode antisymmetry",
        property(&mut runner, (-5.0f64..5.0, -5.0f64..5.0), |(a, b)| {
            prop_assert_eq!(decode_pair(a, b), -decode_pair(b, a));
            Ok(())
        }),
    );
    check(
        "metric identities",
        property(&mut runner, (prop::collection::vec((-5.0f64..5.0, 0.5f64..5.0), 2..40), 0.1f64..10.0), |(v, c)| {
            let (p, r): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let m = compute_metrics(&p, &r).unwrap();
            prop_assert!(m.mae >= 0.0 && m.mae >= m.mean_abs && m.rmse >= m.mean_abs - 1e-12);
            prop_assert!(m.rel_l2 >= 0.0 && m.r2 <= 1.0);
            let ps: Vec<f64> = p.iter().map(|x| c * x).collect();
            let rs: Vec<f64> = r.iter().map(|x| c * x).collect();
            prop_assert!((compute_metrics(&ps, &rs).unwrap().rel_l2 - m.rel_l2).abs() <= 1e-9 * (1.0 + m.rel_l2));
            Ok(())
        }),
    );
    check(
        "DeepONet bilinearity",
        property(&mut runner, (prop::collection::vec(-2.0f64..2.0, 8), prop::collection::vec(-2.0f64..2.0, 8), -3.0f64..3.0), |(b, t, a)| {
            let scaled: Vec<f64> = b.iter().map(|x| a * x).collect();
            prop_assert!((combine(&scaled, &t) - a * combine(&b, &t)).abs() <= 1e-12 * (1.0 + combine(&b, &t).abs() * a.abs()));
            Ok(())
        }),
    );

    // seed determinism on a tiny parabola run
    let mut tiny = config(TaskId::Parabola, ModelKind::Qif, 5);
    tiny.train.epochs = 5;
    tiny.qif.hidden = vec![8, 8];
    tiny.data.n_train = 20;
    tiny.data.n_test = 20;
    let a = train(&tiny, |_, _| {}).map(|o| o.history.losses());
    let b = train(&tiny, |_, _| {}).map(|o| o.history.losses());
    match (a, b) {
        (Ok(a), Ok(b)) => {
            if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs()) {
                failures.push("seed determinism: loss traces differ".into());
            }
        }
        _ => failures.push("seed determinism: run failed".into()),
    }

    // config round trip
    for task in TaskId::ALL {
        let c = ExperimentConfig::defaults(task, ModelKind::Qif);
        if ExperimentConfig::from_json(&c.to_json().unwrap()).ok().as_ref() != Some(&c) {
            failures.push(format!("config round trip: {}", task.name()));
        }
    }

    // smoothed parabola loss over the final 80% of the recorded run
    let mut smooth_note = "smoothed-loss trend: no recorded parabola run".to_string();
    let loss_csv = runs_root().join("parabola_qif_seed0/loss.csv");
    if let Ok(text) = fs::read_to_string(&loss_csv) {
        let losses: Vec<f64> = text.lines().skip(1).filter_map(|l| l.split(',').nth(1)?.parse().ok()).collect();
        let s = smoothed(&losses, 50);
        let tail = &s[s.len() / 5..];
        let rises = tail.windows(2).filter(|w| w[1] > w[0]).count();
        let (tau, z) = mann_kendall(tail);
        smooth_note = format!(
            "smoothed-loss Mann-Kendall trend over the final {} epochs: tau {tau:.3}, z {z:.1} (< -2.576), {rises} single-epoch increases",
            tail.len()
        );
        if !(z < -2.576) {
            failures.push(smooth_note.clone());
        }
    }

    let ok = failures.is_empty();
    let text = if ok {
        format!("property suites: phase, PTC, codec, metrics, bilinearity, determinism, config round trip pass; {smooth_note}")
    } else {
        format!("property suites: {}", failures.join("; "))
    };
    line(12, ok, text)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and filters come through here too
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let criteria: Vec<fn() -> Line> = vec![
        c1_gradcheck,
        c2_closed_form,
        c3_forward_oracle,
        c4_boundary,
        || best_of_seeds(5, TaskId::Parabola, &[0, 1, 2], 2.0, Some(1800.0), Some(parabola_spot_checks), "parabola"),
        || best_of_seeds(6, TaskId::Ricker, &[0, 1, 2], 5.0, None, None, "Ricker wavelet"),
        || single_run(7, TaskId::Ripple, 5.0, "ripple"),
        || single_run(8, TaskId::DeeponetPoisson, 6.0, "DeepONet Poisson operator"),
        c9_pinn_poisson,
        c10_ordering,
        c11_burgers_beltrami,
        c12_properties,
    ];
    let mut failed = false;
    for c in criteria {
        let start = Instant::now();
        let l = c();
        let tag = match l.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("criterion {:>2} {tag} {} [{:.1} s]", l.id, l.text, start.elapsed().as_secs_f64());
        failed |= l.gating && l.status == Status::Fail;
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
