use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qifnet::harness::{
    self, collect_rows, default_run_dir, eval_run, format_summary, generate_data, run_experiment, run_gradcheck,
    ExperimentConfig, GradcheckConfig,
};
use qifnet::Error;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Exit codes.
mod code {
    pub const FAILURE: u8 = 1;
    pub const INVALID_CONFIG: u8 = 3;
    pub const NON_FINITE: u8 = 4;
    pub const GRADCHECK_FAILED: u8 = 5;
    pub const EVAL_MISMATCH: u8 = 6;
}

#[derive(Parser)]
#[command(name = "qifnet", version, about = "Event-driven QIF spiking network experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded, fixed-order reductions.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Run directory; defaults to `<output root>/<task>_<model>_seed<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output root when `--out` and `output_dir` are absent.
        #[arg(long, env = harness::OUTPUT_DIR_ENV)]
        output_root: Option<PathBuf>,
    },
    /// Reload a run's model and recompute its test metrics.
    Eval {
        run_dir: PathBuf,
        /// Largest accepted relative difference to the stored metrics.
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Compare tape gradients with finite differences on random networks.
    Gradcheck {
        /// JSON file with `n_nets`, `seed`, `step`, `tolerance`, `net`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        nets: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Aggregate run directories into a comparison table.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the Markdown table here instead of stdout.
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Write the task's datasets as CSV.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Invalid { .. } | Error::Json(_) => code::INVALID_CONFIG,
            Error::NonFinite { .. } => code::NON_FINITE,
            _ => code::FAILURE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: code::INVALID_CONFIG,
        message: format!("{}: {e}", path.display()),
    })?;
    ExperimentConfig::from_json(&text).map_err(|e| Failure {
        code: code::INVALID_CONFIG,
        message: format!("{}: {e}", path.display()),
    })
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { config, seed, epochs, out, output_root } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if cfg.output_dir.is_none() {
                cfg.output_dir = output_root;
            }
            cfg.validate()?;
            let dir = out.unwrap_or_else(|| default_run_dir(&cfg));
            let every = (cfg.train.epochs / 20).max(1);
            let last = cfg.train.epochs - 1;
            let outcome = run_experiment(&cfg, &dir, |e, l| {
                if e % every == 0 || e == last {
                    log::info!("epoch {e} loss {l:.6e}");
                }
            })?;
            let m = &outcome.metrics.metrics;
            println!("run dir: {}", dir.display());
            println!(
                "{} {}: rel_l2 {:.4}% mae {:.4e} rmse {:.4e} r2 {:.6}",
                cfg.task.name(),
                outcome.metrics.label,
                m.rel_l2,
                m.mae,
                m.rmse,
                m.r2
            );
            if let Some(d) = outcome.metrics.derivative_rel_l2 {
                println!("exact derivative rel_l2 {d:.4}%");
            }
        }
        Cmd::Eval { run_dir, tolerance } => {
            let r = eval_run(&run_dir)?;
            println!(
                "stored rel_l2 {:.12}%, recomputed {:.12}%, max relative difference {:.3e}",
                r.stored.metrics.rel_l2, r.recomputed.rel_l2, r.max_rel_diff
            );
            if !(r.max_rel_diff <= tolerance) {
                return Err(Failure {
                    code: code::EVAL_MISMATCH,
                    message: format!("metrics differ by {:.3e} > {tolerance:.1e}", r.max_rel_diff),
                });
            }
        }
        Cmd::Gradcheck { config, nets, tolerance, seed, json } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?).map_err(|e| Failure {
                    code: code::INVALID_CONFIG,
                    message: format!("{}: {e}", p.display()),
                })?,
                None => GradcheckConfig::default(),
            };
            if let Some(n) = nets {
                cfg.n_nets = n;
            }
            if let Some(t) = tolerance {
                cfg.tolerance = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let s = run_gradcheck(&cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&s).map_err(Error::from)?);
            } else {
                print!("{}", format_summary(&s));
            }
            if !s.passed() {
                return Err(Failure {
                    code: code::GRADCHECK_FAILED,
                    message: format!(
                        "max relative error {:.3e} exceeds {:.1e}",
                        s.report.max_rel_err, s.report.tolerance
                    ),
                });
            }
        }
        Cmd::Report { run_dirs, csv, markdown } => {
            let rows = collect_rows(&run_dirs)?;
            for r in &rows {
                if let Some(d) = r.recompute_diff {
                    if d > 1e-9 {
                        log::warn!("{}: predictions disagree with metrics.json by {d:.3e}", r.dir.display());
                    }
                }
            }
            let md = harness::report::markdown(&rows);
            match markdown {
                Some(p) => fs::write(p, md)?,
                None => print!("{md}"),
            }
            if let Some(p) = csv {
                fs::write(p, harness::report::csv(&rows)?)?;
            }
        }
        Cmd::GenData { config, out } => {
            let cfg = load_config(&config)?;
            for f in generate_data(&cfg, &out)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(code::FAILURE);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
