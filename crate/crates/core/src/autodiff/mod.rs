//! Minimal reverse-mode differentiation engine.
//!
//! Dense row-major `f64` tensors, a Wengert tape that records forward
//! operations and replays them in reverse, stacked fully-connected layers
//! with ReLU, the Adam optimizer, straight-through Gumbel-Softmax sampling
//! and mixture-density (Gaussian mixture) helpers.

mod adam;
mod gradcheck;
mod gumbel;
mod mdn;
mod nn;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, AdamState};
pub use gradcheck::{check_gradients, finite_diff_grad, max_rel_err};
pub use gumbel::{gumbel_noise, gumbel_softmax, GumbelSample};
pub use mdn::{mdn_nll, MdnOutput, HALF_LN_TWO_PI, VAR_FLOOR};
pub use nn::{xavier_uniform, BoundMlp, MlpParams};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
