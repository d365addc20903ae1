//! Gradient checks over batches of random networks.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::run_trial;
use crate::error::{Error, Result};
use crate::grad::{grad_check, random_network, GradCheckReport, GradEntry, GradParam, RandomNetConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub n_nets: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub net: RandomNetConfig,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            n_nets: 100,
            seed: 0,
            step: 1e-5,
            tolerance: 1e-5,
            net: RandomNetConfig {
                max_hidden_layers: 3,
                ..RandomNetConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckSummary {
    pub n_nets: usize,
    pub report: GradCheckReport,
    /// Perturbations attempted (weights plus input spike times).
    pub perturbations: usize,
    pub excluded_fraction: f64,
    pub ordinary_outputs: usize,
    pub pseudo_outputs: usize,
    pub seconds: f64,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.report.passed
    }
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckSummary> {
    if cfg.n_nets == 0 {
        return Err(Error::invalid("n_nets", "must be positive"));
    }
    if !(cfg.tolerance >= 0.0) {
        return Err(Error::invalid("tolerance", "must be non-negative"));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cases: Vec<_> = (0..cfg.n_nets).map(|_| random_network(&mut rng, &cfg.net)).collect();
    let parts = cases
        .par_iter()
        .map(|(net, inputs)| {
            let r = grad_check(net, inputs, cfg.step, cfg.tolerance)?;
            let base = run_trial(net, inputs)?;
            let pseudo = base.first_spike_is_pseudo.iter().filter(|&&p| p).count();
            let n_pert = net.n_weights() + inputs.iter().map(Vec::len).sum::<usize>();
            Ok((r, n_pert, pseudo, base.first_spike_is_pseudo.len() - pseudo))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = GradCheckReport { tolerance: cfg.tolerance, passed: true, ..Default::default() };
    let (mut perturbations, mut pseudo, mut ordinary) = (0, 0, 0);
    for (r, n, p, o) in &parts {
        report.merge(r);
        perturbations += n;
        pseudo += p;
        ordinary += o;
    }
    Ok(GradcheckSummary {
        n_nets: cfg.n_nets,
        excluded_fraction: report.excluded as f64 / perturbations.max(1) as f64,
        report,
        perturbations,
        ordinary_outputs: ordinary,
        pseudo_outputs: pseudo,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn describe(e: &Option<GradEntry>) -> String {
    match e {
        None => "none checked".into(),
        Some(e) => {
            let what = match e.param {
                GradParam::Weight { layer, post, pre } => format!("w[{layer}][{post},{pre}]"),
                GradParam::InputTime { channel, spike } => format!("t_in[{channel}][{spike}]"),
            };
            format!(
                "{what} output {} rel err {:.3e} (tape {:.9e}, fd {:.9e})",
                e.output, e.rel_err, e.analytic, e.numeric
            )
        }
    }
}

/// Human-readable report, one fact per line.
pub fn format_summary(s: &GradcheckSummary) -> String {
    let r = &s.report;
    let mut out = String::new();
    let _ = writeln!(out, "networks:          {}", s.n_nets);
    let _ = writeln!(out, "outputs:           {} ordinary, {} pseudo", s.ordinary_outputs, s.pseudo_outputs);
    let _ = writeln!(out, "entries checked:   {}", r.checked);
    let _ = writeln!(
        out,
        "excluded:          {} of {} perturbations ({:.2}%)",
        r.excluded,
        s.perturbations,
        100.0 * s.excluded_fraction
    );
    let _ = writeln!(out, "max relative err:  {:.3e} (tolerance {:.1e})", r.max_rel_err, r.tolerance);
    for (l, w) in r.worst_per_layer.iter().enumerate() {
        let _ = writeln!(out, "worst layer {l}:     {}", describe(w));
    }
    let _ = writeln!(out, "worst input time:  {}", describe(&r.worst_input));
    let _ = writeln!(out, "elapsed:           {:.2} s", s.seconds);
    let _ = writeln!(out, "result:            {}", if s.passed() { "PASS" } else { "FAIL" });
    out
}
