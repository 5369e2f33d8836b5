//! Minimal neural-network toolkit: matrices, a differentiation tape,
//! recurrent layers, an optimizer and checkpoint files.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod mat;
pub mod tape;

pub use adam::{clip_global_norm, Adam};
pub use checkpoint::Checkpoint;
pub use gradcheck::gradient_error;
pub use layers::{uniform_mat, Dense, Gru, Lstm};
pub use mat::Mat;
pub use tape::{ParamId, Params, Tape, Var};
