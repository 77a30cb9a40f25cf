//! Trajectory replay buffer with step-capacity FIFO eviction and the two
//! minibatch views used by training: whole trajectories (return-level
//! supervision) and order-free transitions.

use std::collections::VecDeque;

use rand::Rng;

use crate::env::Trajectory;
use crate::{Error, Result};

/// One `(s_t, a_t, s_{t+1})` sample plus the bookkeeping the relabeling and
/// policy updates need.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    /// Stored return of the source trajectory (uniform redistribution).
    pub ret: f64,
    /// Horizon of the source trajectory.
    pub horizon: usize,
    /// Whether this is the final step of its episode.
    pub is_last: bool,
}

/// Ring of completed trajectories. Capacity counts steps; eviction is FIFO
/// by whole trajectory, and only completed trajectories are stored.
pub struct ReplayBuffer {
    trajectories: VecDeque<Trajectory>,
    capacity_steps: usize,
    warmup_steps: usize,
    stored_steps: usize,
}

impl ReplayBuffer {
    pub fn new(capacity_steps: usize, warmup_steps: usize) -> Self {
        ReplayBuffer {
            trajectories: VecDeque::new(),
            capacity_steps,
            warmup_steps,
            stored_steps: 0,
        }
    }

    pub fn push(&mut self, traj: Trajectory) {
        self.stored_steps += traj.len();
        self.trajectories.push_back(traj);
        while self.stored_steps > self.capacity_steps {
            if let Some(old) = self.trajectories.pop_front() {
                self.stored_steps -= old.len();
            } else {
                break;
            }
        }
    }

    pub fn len_steps(&self) -> usize {
        self.stored_steps
    }

    pub fn len_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_warm(&self) -> bool {
        self.stored_steps >= self.warmup_steps
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter()
    }

    /// Sample `m` whole trajectories, uniform without replacement; falls
    /// back to with-replacement when fewer than `m` are stored.
    pub fn sample_trajectories<R: Rng>(&self, m: usize, rng: &mut R) -> Result<Vec<&Trajectory>> {
        let n = self.trajectories.len();
        if n == 0 {
            return Err(Error::usage("sampling from an empty buffer".to_string()));
        }
        if n < m {
            return Ok((0..m)
                .map(|_| &self.trajectories[rng.gen_range(0..n)])
                .collect());
        }
        // Partial Fisher-Yates over indices.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        Ok(idx[..m].iter().map(|&i| &self.trajectories[i]).collect())
    }

    /// Sample `n` transitions uniformly over all stored steps, breaking
    /// trajectory order.
    pub fn sample_transitions<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.stored_steps == 0 {
            return Err(Error::usage("sampling from an empty buffer".to_string()));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut flat = rng.gen_range(0..self.stored_steps);
            for traj in &self.trajectories {
                if flat < traj.len() {
                    out.push(Transition {
                        state: traj.states[flat].clone(),
                        action: traj.actions[flat].clone(),
                        next_state: traj.states[flat + 1].clone(),
                        ret: traj.ret,
                        horizon: traj.len(),
                        is_last: flat + 1 == traj.len(),
                    });
                    break;
                }
                flat -= traj.len();
            }
        }
        Ok(out)
    }
}
