//! Synthetic factored-MDP simulators with a known ground-truth causal graph.
//!
//! Each state dimension is generated from masked parents plus Gaussian
//! noise; the scalar Markovian reward reads only its masked parents. The
//! observed reward stream is configurable: dense, episodic (all reward mass
//! on the final step) or bundled every k steps — always preserving the
//! discounted-return identity with the underlying Markovian rewards.

mod io;
mod presets;
mod spec;

pub use io::{dump_trajectory, load_spec, save_spec};
pub use presets::{chain_preset, desk_linear, desk_sparse_episodic, preset_by_name};
pub use spec::{
    generate_spec, DynamicsKind, DynamicsParams, EnvSpec, ObserveMode, RewardParams, TinyMlp,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    /// Observed (possibly delayed) reward.
    pub observed_reward: f64,
    pub done: bool,
}

/// A completed episode: `horizon + 1` states, `horizon` actions, observed
/// rewards, oracle-only true rewards and the stored return.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub observed: Vec<f64>,
    /// Realized Markovian rewards; excluded from learner-visible views.
    pub true_rewards: Vec<f64>,
    /// Discounted sum of observed rewards, exactly as stored.
    pub ret: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Live environment instance; owns a copy of its [`EnvSpec`] so it can
/// persist across training iterations.
pub struct Env {
    spec: EnvSpec,
    state: Vec<f64>,
    t: usize,
    /// Discounted true-reward mass not yet surfaced as an observation.
    pending: f64,
    done: bool,
}

impl Env {
    pub fn new<R: Rng>(spec: &EnvSpec, rng: &mut R) -> Self {
        let state = spec.sample_initial_state(rng);
        Env { spec: spec.clone(), state, t: 0, pending: 0.0, done: false }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Begin a fresh episode in place.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) {
        self.state = self.spec.sample_initial_state(rng);
        self.t = 0;
        self.pending = 0.0;
        self.done = false;
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Advance one step. Actions are clipped to `[-1, 1]` by the
    /// environment. The observed reward follows the spec's observation
    /// mode; the realized Markovian reward is returned alongside for
    /// oracle-side bookkeeping.
    pub fn step<R: Rng>(&mut self, action: &[f64], rng: &mut R) -> Result<(StepResult, f64)> {
        if self.done {
            return Err(Error::usage("step called on a finished episode".to_string()));
        }
        if action.len() != self.spec.d_a {
            return Err(Error::config(format!(
                "action width {} does not match d_a {}",
                action.len(),
                self.spec.d_a
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::numeric("policy emitted a non-finite action".to_string()));
        }
        let clipped: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();

        // Realized Markovian reward: masked mean plus observation noise.
        let mut r_t = self.spec.oracle_reward(&self.state, &clipped);
        if self.spec.noise_std_reward > 0.0 {
            let eps: f64 = StandardNormal.sample(rng);
            r_t += self.spec.noise_std_reward * eps;
        }

        let next = self.spec.next_state(&self.state, &clipped, rng);

        let t1 = self.t + 1; // 1-based step index of this transition
        let done = t1 == self.spec.horizon;
        let gamma = self.spec.gamma;
        self.pending += gamma.powi(t1 as i32 - 1) * r_t;
        let observed = if self.spec.emits_observation(t1) {
            let o = self.pending / gamma.powi(t1 as i32 - 1);
            self.pending = 0.0;
            o
        } else {
            0.0
        };

        self.state = next.clone();
        self.t = t1;
        self.done = done;
        Ok((StepResult { next_state: next, observed_reward: observed, done }, r_t))
    }
}

/// Roll a full episode with `policy`, returning the stored trajectory.
pub fn rollout<R, P>(spec: &EnvSpec, policy: &mut P, rng: &mut R) -> Result<Trajectory>
where
    R: Rng,
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let mut env = Env::new(spec, rng);
    let mut states = Vec::with_capacity(spec.horizon + 1);
    let mut actions = Vec::with_capacity(spec.horizon);
    let mut observed = Vec::with_capacity(spec.horizon);
    let mut true_rewards = Vec::with_capacity(spec.horizon);
    states.push(env.state().to_vec());
    while !env.is_done() {
        let action = policy(env.state());
        let (step, r_t) = env.step(&action, rng)?;
        actions.push(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect());
        observed.push(step.observed_reward);
        true_rewards.push(r_t);
        states.push(step.next_state);
    }
    let ret = observed
        .iter()
        .enumerate()
        .map(|(i, o)| spec.gamma.powi(i as i32) * o)
        .sum();
    Ok(Trajectory { states, actions, observed, true_rewards, ret })
}

/// Uniform random policy over the action box.
pub fn random_policy<R: Rng>(d_a: usize, rng: &mut R) -> Vec<f64> {
    (0..d_a).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}
