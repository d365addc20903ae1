//! Experiment configuration, runs, reports and dataset export.

pub mod config;
pub mod gendata;
pub mod gradcheck;
pub mod report;
pub mod run;

pub use config::{EncodingChoice, ExperimentConfig, ModelKind, CONFIG_VERSION};
pub use gendata::generate_data;
pub use gradcheck::{format_summary, run_gradcheck, GradcheckConfig, GradcheckSummary};
pub use report::{collect_rows, ReportRow};
pub use run::{
    default_run_dir, eval_run, run_experiment, train, EvalReport, RunMetrics, RunOutcome, TaskData, TrainedModel,
    OUTPUT_DIR_ENV,
};
