//! Minimal differentiable numerics for the pgfn toolkit: dense `f64` arrays,
//! a reverse-mode tape, ReLU MLPs, Adam and a binary checkpoint format.

pub mod array;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod prob;
pub mod tape;

pub use array::{cosine, dot, l2_norm, Tensor};
pub use checkpoint::{Checkpoint, LoadError};
pub use error::{Result, TensorError};
pub use gradcheck::{check_gradients, GradCheck};
pub use nn::{mlp_forward, Activation, LayerSpec, Mlp};
pub use params::{Adam, Gradients, ParamId, ParamStore};
pub use prob::{categorical_sample, log_softmax};
pub use tape::{logsumexp, sigmoid, softplus, Tape, Var};
