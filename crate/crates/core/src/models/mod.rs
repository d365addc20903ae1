//! Task-level compositions of the spiking engine.

pub mod checkpoint;
pub mod deeponet;
pub mod mlp;
pub mod pinn;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use deeponet::{deeponet_backward, deeponet_forward, DeepOnetBatch, DeepOnetModel};
pub use mlp::{exact_first_derivative, mlp_backward, mlp_forward, MlpModel, MlpOutput, PhaseInit};
pub use pinn::{
    pinn_exact_derivative, pinn_residual_burgers, pinn_residual_poisson1d, pinn_value, PdeKind, PinnProblem,
};
