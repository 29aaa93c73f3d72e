//! Dense-network numerics with hand-written backward passes.

pub mod adam;
pub mod dense;
pub mod gradcheck;
pub mod lstm;
pub mod params;
pub mod softmax;

pub use adam::AdamState;
pub use dense::{Activation, DenseLayer, DenseTape};
pub use gradcheck::grad_check;
pub use lstm::{LstmCellParams, LstmTape};
pub use params::{clip_global_norm, global_norm, Parameters};
pub use softmax::{entropy, log_softmax, softmax};
