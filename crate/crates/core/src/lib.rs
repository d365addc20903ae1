//! Event-driven spiking networks of oscillatory quadratic integrate-and-fire
//! neurons with exact spike-time gradients.

pub mod codec;
pub mod engine;
pub mod error;
pub mod grad;
pub mod harness;
pub mod lif;
pub mod qif;
pub mod tape;

pub use codec::{DecodeSpec, Encoded, EncodingKind, EncodingSpec, TargetAffine};
pub use engine::{run_trial, NetworkSpec, SpikeEvent, TrialResult};
pub use error::{Error, Result};
pub use grad::{backward, grad_check, GradCheckReport, GradientSet};
pub use qif::NeuronParams;
pub use tape::{EventTape, NodeId, NodeKind};
pub mod models;
pub mod train;
