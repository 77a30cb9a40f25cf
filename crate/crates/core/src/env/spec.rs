use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Family of ground-truth dynamics generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Linear,
    RandomMlp,
}

/// Observation mode for the reward channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObserveMode {
    /// `o_t = r_t` every step.
    Dense,
    /// `o_{1..T-1} = 0`; the final observation carries the full
    /// discounted reward mass.
    Episodic,
    /// Reward mass surfaces every k steps (and at the horizon).
    EveryK(usize),
}

/// One-hidden-layer tanh network used by the `random-mlp` dynamics, one per
/// output dimension. The output is bounded by the L1 norm of `w_out`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TinyMlp {
    pub w_in: Vec<Vec<f64>>, // [in][hidden]
    pub b_in: Vec<f64>,      // [hidden]
    pub w_out: Vec<f64>,     // [hidden]
    pub b_out: f64,
}

impl TinyMlp {
    pub fn eval(&self, input: &[f64]) -> f64 {
        let hidden = self.b_in.len();
        let mut acc = self.b_out;
        for h in 0..hidden {
            let mut z = self.b_in[h];
            for (i, &x) in input.iter().enumerate() {
                z += self.w_in[i][h] * x;
            }
            acc += self.w_out[h] * z.tanh();
        }
        acc
    }
}

/// Ground-truth dynamics parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DynamicsParams {
    /// `s_{j,t+1} = Σ_i w_ss[i][j]·m_ss[i][j]·s_i + Σ_k w_as[k][j]·m_as[k][j]·a_k`
    Linear { w_ss: Vec<Vec<f64>>, w_as: Vec<Vec<f64>> },
    /// Per-output tanh network over the masked inputs.
    RandomMlp { per_dim: Vec<TinyMlp> },
}

/// Ground-truth reward: weighted sum of masked state dims plus an optional
/// linear action term minus a quadratic cost, both on masked action dims.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardParams {
    pub state_weights: Vec<f64>,
    pub action_cost: f64,
    /// Per-action linear coefficients; empty means all zero.
    #[serde(default)]
    pub action_linear: Vec<f64>,
}

/// A complete synthetic factored-MDP definition. Every generator reads only
/// the inputs its mask permits, so masked-input invariance is testable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSpec {
    pub d_s: usize,
    pub d_a: usize,
    /// `mask_ss[i][j] = 1` iff state dim i feeds state dim j at t+1.
    pub mask_ss: Vec<Vec<u8>>,
    /// `mask_as[k][j] = 1` iff action dim k feeds state dim j at t+1.
    pub mask_as: Vec<Vec<u8>>,
    /// State dims feeding the reward.
    pub mask_sr: Vec<u8>,
    /// Action dims feeding the reward.
    pub mask_ar: Vec<u8>,
    pub dynamics: DynamicsParams,
    pub reward: RewardParams,
    pub noise_std_state: f64,
    pub noise_std_reward: f64,
    pub horizon: usize,
    pub observe_mode: ObserveMode,
    pub gamma: f64,
    pub init_std: f64,
}

impl EnvSpec {
    /// Validate mask shapes and the reward-relevance invariant.
    pub fn validate(&self) -> Result<()> {
        if self.d_s == 0 || self.d_a == 0 {
            return Err(Error::config("dimensions must be >= 1".to_string()));
        }
        if self.mask_ss.len() != self.d_s
            || self.mask_ss.iter().any(|r| r.len() != self.d_s)
            || self.mask_as.len() != self.d_a
            || self.mask_as.iter().any(|r| r.len() != self.d_s)
            || self.mask_sr.len() != self.d_s
            || self.mask_ar.len() != self.d_a
        {
            return Err(Error::config("mask shapes do not match dimensions".to_string()));
        }
        let any_reward_parent = self.mask_sr.iter().any(|&m| m == 1)
            || self.mask_ar.iter().any(|&m| m == 1);
        if !any_reward_parent {
            return Err(Error::config(
                "at least one reward-mask entry must be set".to_string(),
            ));
        }
        if !(0.0 < self.gamma && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive".to_string()));
        }
        if let ObserveMode::EveryK(k) = self.observe_mode {
            if k == 0 {
                return Err(Error::config("every-k interval must be positive".to_string()));
            }
        }
        Ok(())
    }

    pub fn sample_initial_state<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.d_s)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.init_std * z
            })
            .collect()
    }

    /// Whether 1-based step `t` surfaces the pending reward mass.
    pub fn emits_observation(&self, t: usize) -> bool {
        match self.observe_mode {
            ObserveMode::Dense => true,
            ObserveMode::Episodic => t == self.horizon,
            ObserveMode::EveryK(k) => t % k == 0 || t == self.horizon,
        }
    }

    /// Deterministic ground-truth mean reward; evaluation-side only.
    pub fn oracle_reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut r = 0.0;
        for i in 0..self.d_s {
            if self.mask_sr[i] == 1 {
                r += self.reward.state_weights[i] * state[i];
            }
        }
        for k in 0..self.d_a {
            if self.mask_ar[k] == 1 {
                let lin = self.reward.action_linear.get(k).copied().unwrap_or(0.0);
                r += lin * action[k] - self.reward.action_cost * action[k] * action[k];
            }
        }
        r
    }

    /// Mean next state (no noise); each output reads only masked inputs.
    pub fn mean_next_state(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        match &self.dynamics {
            DynamicsParams::Linear { w_ss, w_as } => (0..self.d_s)
                .map(|j| {
                    let mut z = 0.0;
                    for i in 0..self.d_s {
                        if self.mask_ss[i][j] == 1 {
                            z += w_ss[i][j] * state[i];
                        }
                    }
                    for k in 0..self.d_a {
                        if self.mask_as[k][j] == 1 {
                            z += w_as[k][j] * action[k];
                        }
                    }
                    z
                })
                .collect(),
            DynamicsParams::RandomMlp { per_dim } => (0..self.d_s)
                .map(|j| {
                    let mut input = Vec::with_capacity(self.d_s + self.d_a);
                    for i in 0..self.d_s {
                        input.push(if self.mask_ss[i][j] == 1 { state[i] } else { 0.0 });
                    }
                    for k in 0..self.d_a {
                        input.push(if self.mask_as[k][j] == 1 { action[k] } else { 0.0 });
                    }
                    per_dim[j].eval(&input)
                })
                .collect(),
        }
    }

    pub fn next_state<R: Rng>(&self, state: &[f64], action: &[f64], rng: &mut R) -> Vec<f64> {
        let mut next = self.mean_next_state(state, action);
        if self.noise_std_state > 0.0 {
            for v in next.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += self.noise_std_state * z;
            }
        }
        next
    }
}

/// Draw a random factored MDP: masks per-edge Bernoulli(`edge_density`)
/// (action-to-reward edges are all present, matching the quadratic action
/// cost read by the reward), generator weights from `seed`, fully
/// deterministic given the arguments.
pub fn generate_spec(
    d_s: usize,
    d_a: usize,
    edge_density: f64,
    kind: DynamicsKind,
    seed: u64,
) -> Result<EnvSpec> {
    if d_s == 0 || d_a == 0 {
        return Err(Error::config("dimensions must be >= 1".to_string()));
    }
    if !(0.0 < edge_density && edge_density <= 1.0) {
        return Err(Error::config(format!(
            "edge density must be in (0, 1], got {edge_density}"
        )));
    }
    let mut rng = crate::rng::derive_rng(seed, &[0x5eed]);

    let draw_mask = |rng: &mut rand_chacha::ChaCha8Rng| -> u8 {
        if rng.gen_range(0.0..1.0) < edge_density {
            1
        } else {
            0
        }
    };

    // Parent sets are drawn per output dim. Two constraints keep the family
    // identifiable at desk scale: every dim gets at least one action parent
    // (stable zero-noise dynamics drive unexcited dims to zero, whose edges
    // then carry no signal), and parent-set signatures are distinct across
    // dims where the density allows (the dynamics head is shared across
    // dims and can only tell them apart by their masked-input patterns).
    let mut mask_ss: Vec<Vec<u8>> = vec![vec![0; d_s]; d_s];
    let mut mask_as: Vec<Vec<u8>> = vec![vec![0; d_a]; d_s ];
    let mut signatures: Vec<Vec<u8>> = Vec::with_capacity(d_s);
    for j in 0..d_s {
        let mut column = (vec![0u8; d_s], vec![0u8; d_a]);
        for _attempt in 0..64 {
            let s_col: Vec<u8> = (0..d_s).map(|_| draw_mask(&mut rng)).collect();
            let mut a_col: Vec<u8> = (0..d_a).map(|_| draw_mask(&mut rng)).collect();
            if a_col.iter().all(|&m| m == 0) {
                a_col[rng.gen_range(0..d_a)] = 1;
            }
            let sig: Vec<u8> =
                s_col.iter().chain(a_col.iter()).copied().collect();
            column = (s_col, a_col);
            if !signatures.contains(&sig) {
                break;
            }
        }
        let sig: Vec<u8> =
            column.0.iter().chain(column.1.iter()).copied().collect();
        signatures.push(sig);
        for i in 0..d_s {
            mask_ss[i][j] = column.0[i];
        }
        for k in 0..d_a {
            mask_as[k][j] = column.1[k];
        }
    }
    let mask_as: Vec<Vec<u8>> = (0..d_a)
        .map(|k| (0..d_s).map(|j| mask_as[k][j]).collect())
        .collect();

    // The reward must have at least one state parent; re-draw a bounded
    // number of times before giving up.
    let mut mask_sr: Vec<u8> = Vec::new();
    let mut ok = false;
    for _ in 0..64 {
        mask_sr = (0..d_s).map(|_| draw_mask(&mut rng)).collect();
        if mask_sr.iter().any(|&m| m == 1) {
            ok = true;
            break;
        }
    }
    if !ok {
        return Err(Error::config(
            "could not draw a nonempty reward-parent set; raise edge density".to_string(),
        ));
    }
    // Every action dim enters the quadratic cost, mirroring control-cost
    // reward designs, so all action-to-reward edges exist.
    let mask_ar: Vec<u8> = vec![1; d_a];

    let dynamics = match kind {
        DynamicsKind::Linear => {
            // Masked affine map; incoming state weights are scaled so each
            // output's masked L1 row norm stays <= 0.95 for stability.
            let mut w_ss: Vec<Vec<f64>> = (0..d_s)
                .map(|_| (0..d_s).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect();
            for j in 0..d_s {
                let norm: f64 =
                    (0..d_s).map(|i| (mask_ss[i][j] as f64) * w_ss[i][j].abs()).sum();
                if norm > 0.95 {
                    let scale = 0.95 / norm;
                    for row in w_ss.iter_mut() {
                        row[j] *= scale;
                    }
                }
            }
            let mut w_as: Vec<Vec<f64>> = (0..d_a)
                .map(|_| (0..d_s).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect();
            for j in 0..d_s {
                let norm: f64 =
                    (0..d_a).map(|k| (mask_as[k][j] as f64) * w_as[k][j].abs()).sum();
                if norm > 1.0 {
                    let scale = 1.0 / norm;
                    for row in w_as.iter_mut() {
                        row[j] *= scale;
                    }
                }
            }
            DynamicsParams::Linear { w_ss, w_as }
        }
        DynamicsKind::RandomMlp => {
            let hidden = 16;
            let per_dim = (0..d_s)
                .map(|_| {
                    let fan_in = d_s + d_a;
                    let scale = (1.0 / fan_in as f64).sqrt();
                    let w_in: Vec<Vec<f64>> = (0..fan_in)
                        .map(|_| {
                            (0..hidden).map(|_| rng.gen_range(-scale..=scale)).collect()
                        })
                        .collect();
                    let b_in: Vec<f64> =
                        (0..hidden).map(|_| rng.gen_range(-0.1..=0.1)).collect();
                    let mut w_out: Vec<f64> =
                        (0..hidden).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    let norm: f64 = w_out.iter().map(|w| w.abs()).sum();
                    if norm > 1.0 {
                        for w in w_out.iter_mut() {
                            *w /= norm;
                        }
                    }
                    TinyMlp { w_in, b_in, w_out, b_out: 0.0 }
                })
                .collect();
            DynamicsParams::RandomMlp { per_dim }
        }
    };

    let mut state_weights: Vec<f64> = (0..d_s)
        .map(|_| {
            let mag = rng.gen_range(0.5..=1.5);
            if rng.gen_range(0.0..1.0f64) < 0.5 {
                mag
            } else {
                -mag
            }
        })
        .collect();
    // Fix the masked weight budget so return scale is comparable across
    // randomly drawn families.
    let budget: f64 = (0..d_s)
        .map(|i| (mask_sr[i] as f64) * state_weights[i].abs())
        .sum();
    if budget > 0.0 {
        for w in state_weights.iter_mut() {
            *w *= 2.0 / budget;
        }
    }
    let action_cost = rng.gen_range(0.2..=0.5);

    let spec = EnvSpec {
        d_s,
        d_a,
        mask_ss,
        mask_as,
        mask_sr,
        mask_ar,
        dynamics,
        reward: RewardParams { state_weights, action_cost, action_linear: Vec::new() },
        noise_std_state: 0.0,
        noise_std_reward: 0.0,
        horizon: 64,
        observe_mode: ObserveMode::Episodic,
        gamma: 1.0,
        init_std: 0.5,
    };
    spec.validate()?;
    Ok(spec)
}
