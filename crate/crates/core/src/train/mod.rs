//! Losses, optimizer, metrics, data oracles and training loops.

pub mod adam;
pub mod data;
pub mod fit;
pub mod metrics;
pub mod oracles;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use data::{Samples, Split, TaskId};
pub use fit::{
    evaluate, fit_deeponet, fit_pinn, fit_regressor, optimize, Evaluation, LossHistory, Regressor, TrainConfig,
};
pub use metrics::{compute_metrics, mse_loss, Metrics};
pub use oracles::{burgers_reference, poisson_solve_oracle, sample_grf_source, BurgersReference, GrfSampler};
