//! Differentiable computation over dense `f64` vectors and matrices.
//!
//! Everything the training loops need and nothing more: a parameter store,
//! an eagerly-evaluated computation graph with reverse-mode gradients, a
//! dense feedforward network builder, an adaptive-moment optimizer and a
//! binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod mlp;
pub mod params;

pub use adam::Adam;
pub use graph::{Graph, NodeId};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use params::{ParamId, ParamStore};
