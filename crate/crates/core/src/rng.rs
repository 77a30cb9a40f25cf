//! Deterministic stream splitting: one run seed fans out into named,
//! independent generators so consumers never perturb each other's draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named top-level streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Environment dynamics/reward noise and initial states.
    Env,
    /// Gumbel-Softmax mask sampling during training.
    Gumbel,
    /// Policy action sampling and reparameterization noise.
    Policy,
    /// Network parameter initialization.
    Init,
    /// Evaluation rollouts and metric batches.
    Eval,
    /// Replay-buffer minibatch sampling.
    Batch,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Env => 1,
            Stream::Gumbel => 2,
            Stream::Policy => 3,
            Stream::Init => 4,
            Stream::Eval => 5,
            Stream::Batch => 6,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive an independent generator from a seed and a tag path.
///
/// Equal `(seed, tags)` always yield the same stream; distinct tag paths
/// yield streams that never share state.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut acc = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        acc = splitmix64(acc ^ splitmix64(t));
    }
    ChaCha8Rng::seed_from_u64(acc)
}

/// Generator for a named stream, optionally sub-indexed (e.g. one per
/// evaluation rollout).
pub fn stream_rng(seed: u64, stream: Stream, sub: &[u64]) -> ChaCha8Rng {
    let mut tags = vec![stream.tag()];
    tags.extend_from_slice(sub);
    derive_rng(seed, &tags)
}
