//! Minimal f64 neural-network substrate: autodiff tape, parameter store,
//! checkpoints and the optimizer. Double precision keeps every gradient
//! checkable against central finite differences.

pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tape;

pub use gradcheck::check_against_finite_differences;
pub use optim::AdamW;
pub use params::{load_checkpoint, save_checkpoint, CheckpointError, ParamStore, TapeVars};
pub use tape::{Gradients, Tape, TensorId};
