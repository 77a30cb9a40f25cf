//! Desk-scale laboratory for causal return decomposition.
//!
//! The crate learns a generative model of a factored MDP from trajectories
//! that expose only a trajectory-wise return: binary causal masks over every
//! candidate edge, a reward network trained under the return-equivalence
//! constraint, and a mixture-density dynamics network. The decomposed
//! per-step rewards and a compact masked state representation then drive a
//! soft actor-critic. Everything is checked against synthetic factored MDPs
//! whose ground-truth structure and Markovian rewards are known.
//!
//! Modules map onto the moving parts:
//!
//! * [`autodiff`] — minimal reverse-mode engine: dense tensors, a Wengert
//!   tape, stacked fully-connected layers, Adam, Gumbel-Softmax sampling and
//!   mixture-density helpers.
//! * [`env`] — synthetic factored-MDP simulators with known causal graphs,
//!   a ground-truth reward oracle and configurable delayed observation.
//! * [`masks`] — free Bernoulli-logit parameters per candidate causal edge,
//!   stochastic/deterministic sampling, the sparsity penalty and the compact
//!   state representation.
//! * [`model`] — reward network (return-equivalence loss) and MDN dynamics
//!   network (masked likelihood loss).
//! * [`policy`] — soft actor-critic on decomposed rewards.
//! * [`trainer`] — replay buffer, joint training loop, reward relabeling,
//!   evaluation and metrics.
//! * [`score`] / [`viz`] — structure-recovery scoring, sparsity rate,
//!   reward correlation, SVG heatmaps and learning curves.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod masks;
pub mod metrics;
pub mod model;
pub mod par;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod score;
pub mod trainer;
pub mod viz;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
