//! Small differentiable building blocks: dense layers, GRU cells, a parameter
//! store with gradient slots, optimizers and checkpoints.
//!
//! Backward passes are closed-form: every forward call that may be
//! differentiated returns a trace value, and the matching `backward` consumes
//! it. There is no global tape.

pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod ops;
pub mod optim;
pub mod params;

pub use dense::{Activation, Dense, DenseTrace, Mlp, MlpTrace};
pub use gru::{GruCell, GruTrace};
pub use optim::{squared_error, Optimizer, OptimizerConfig};
pub use params::{sync_target, Init, ParamId, ParamStore};
