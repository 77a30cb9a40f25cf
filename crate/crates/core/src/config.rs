//! Experiment configuration: TOML `key = value` files with sections, named
//! presets, validation, and the content hash stamped into run manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{preset_by_name, EnvSpec};
use crate::masks::Closure;
use crate::{Error, Result};

/// Training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Full method: learned decomposition plus compact-representation
    /// policy inputs.
    Grd,
    /// Learned decomposition, but the policy sees the full state.
    GrdNoCr,
    /// Uniform redistribution `r̃ = R / T`; no generative-model training.
    UniformBaseline,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "grd" => Ok(Variant::Grd),
            "grd_no_cr" => Ok(Variant::GrdNoCr),
            "uniform_baseline" => Ok(Variant::UniformBaseline),
            other => Err(Error::config(format!("unknown variant '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Grd => "grd",
            Variant::GrdNoCr => "grd_no_cr",
            Variant::UniformBaseline => "uniform_baseline",
        }
    }
}

/// `[env]` section: a named preset or an on-disk spec file, plus optional
/// overrides.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub spec_file: Option<String>,
    /// Seed for randomly generated environment families; defaults to the
    /// run seed so different seeds exercise different structures.
    #[serde(default)]
    pub env_seed: Option<u64>,
    #[serde(default)]
    pub noise_std_state: Option<f64>,
    #[serde(default)]
    pub noise_std_reward: Option<f64>,
    #[serde(default)]
    pub horizon: Option<usize>,
}

/// `[model]` section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width of every network; 256 at paper scale, 32 on a desk.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Gumbel-Softmax temperature.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_closure")]
    pub closure: Closure,
}

/// `[policy]` section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub twin_critic: bool,
    #[serde(default = "default_init_alpha")]
    pub init_alpha: f64,
    #[serde(default = "default_polyak_rho")]
    pub polyak_rho: f64,
    /// Whether the critic bootstraps through the horizon cutoff
    /// (time-limit semantics) or treats it as terminal.
    #[serde(default = "default_true")]
    pub bootstrap_on_horizon: bool,
}

/// `[losses]` section: sparsity weights.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default)]
    pub lambda1: f64,
    #[serde(default)]
    pub lambda2: f64,
    #[serde(default)]
    pub lambda3: f64,
    #[serde(default)]
    pub lambda4: f64,
    #[serde(default)]
    pub lambda5: f64,
}

impl LossConfig {
    pub fn lambdas(&self) -> [f64; 5] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5]
    }
}

/// `[training]` section: loop counts, batch sizes, cadence and seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_one")]
    pub epochs: usize,
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_steps_per_iteration")]
    pub steps_per_iteration: usize,
    /// Gradient batches per iteration; when absent it is
    /// `round(update_ratio · steps_per_iteration)`.
    #[serde(default)]
    pub train_batches: Option<usize>,
    /// Gradient batches per collected env step.
    #[serde(default = "default_update_ratio")]
    pub update_ratio: f64,
    /// Trajectories per return-supervision minibatch.
    #[serde(default = "default_m")]
    pub m_trajectories: usize,
    /// Transitions per dynamics/policy minibatch.
    #[serde(default = "default_n")]
    pub n_transitions: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_buffer_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_eval_rollouts")]
    pub eval_rollouts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_hidden() -> usize {
    32
}
fn default_tau() -> f64 {
    1.0
}
fn default_closure() -> Closure {
    Closure::OneStep
}
fn default_init_alpha() -> f64 {
    0.2
}
fn default_polyak_rho() -> f64 {
    0.0005
}
fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}
fn default_cycles() -> usize {
    20
}
fn default_iterations() -> usize {
    25
}
fn default_steps_per_iteration() -> usize {
    100
}
fn default_update_ratio() -> f64 {
    1.0
}
fn default_m() -> usize {
    4
}
fn default_n() -> usize {
    64
}
fn default_lr() -> f64 {
    3e-4
}
fn default_gamma() -> f64 {
    1.0
}
fn default_buffer_capacity() -> usize {
    100_000
}
fn default_warmup() -> usize {
    2_500
}
fn default_eval_rollouts() -> usize {
    10
}
fn default_variant() -> Variant {
    Variant::Grd
}

/// Complete experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    #[serde(default = "ModelConfig::default")]
    pub model: ModelConfig,
    #[serde(default = "PolicyConfig::default")]
    pub policy: PolicyConfig,
    #[serde(default = "LossConfig::default")]
    pub losses: LossConfig,
    pub training: TrainingConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: default_hidden(), tau: default_tau(), closure: default_closure() }
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            twin_critic: false,
            init_alpha: default_init_alpha(),
            polyak_rho: default_polyak_rho(),
            bootstrap_on_horizon: default_true(),
        }
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda1: 0.0, lambda2: 0.0, lambda3: 0.0, lambda4: 0.0, lambda5: 0.0 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.epochs == 0
            || t.cycles == 0
            || t.iterations == 0
            || t.steps_per_iteration == 0
            || t.m_trajectories == 0
            || t.n_transitions == 0
            || t.eval_rollouts == 0
        {
            return Err(Error::config("all loop and batch counts must be positive".to_string()));
        }
        if t.update_ratio <= 0.0 && t.train_batches.is_none() {
            return Err(Error::config("update ratio must be positive".to_string()));
        }
        if !(0.0 < t.gamma && t.gamma <= 1.0) {
            return Err(Error::config(format!("gamma must be in (0, 1], got {}", t.gamma)));
        }
        if t.learning_rate <= 0.0 {
            return Err(Error::config("learning rate must be positive".to_string()));
        }
        if self.model.tau <= 0.0 {
            return Err(Error::config("gumbel temperature must be positive".to_string()));
        }
        if self.losses.lambdas().iter().any(|&l| l < 0.0) {
            return Err(Error::config("sparsity weights must be non-negative".to_string()));
        }
        if self.env.preset.is_none() && self.env.spec_file.is_none() {
            return Err(Error::config("env needs a preset or a spec_file".to_string()));
        }
        if self.env.preset.is_some() && self.env.spec_file.is_some() {
            return Err(Error::config("env preset and spec_file are mutually exclusive".to_string()));
        }
        Ok(())
    }

    /// Total environment steps of the full loop.
    pub fn total_env_steps(&self) -> usize {
        let t = &self.training;
        t.epochs * t.cycles * t.iterations * t.steps_per_iteration
    }

    /// Env steps between evaluation points (one validation per cycle).
    pub fn eval_every_steps(&self) -> usize {
        let t = &self.training;
        t.iterations * t.steps_per_iteration
    }

    /// Gradient batches run after each iteration's collection.
    pub fn batches_per_iteration(&self) -> usize {
        let t = &self.training;
        t.train_batches
            .unwrap_or_else(|| (t.update_ratio * t.steps_per_iteration as f64).round() as usize)
    }

    /// Materialize the environment; the run seed feeds generated families
    /// unless `env_seed` pins one.
    pub fn build_env(&self) -> Result<EnvSpec> {
        let seed = self.env.env_seed.unwrap_or(self.training.seed);
        let mut spec = if let Some(name) = &self.env.preset {
            preset_by_name(name, seed)?
        } else {
            crate::env::load_spec(Path::new(self.env.spec_file.as_ref().unwrap()))?
        };
        if let Some(v) = self.env.noise_std_state {
            spec.noise_std_state = v;
        }
        if let Some(v) = self.env.noise_std_reward {
            spec.noise_std_reward = v;
        }
        if let Some(v) = self.env.horizon {
            spec.horizon = v;
        }
        spec.gamma = self.training.gamma;
        spec.validate()?;
        Ok(spec)
    }

    /// Content hash of the canonical TOML serialization (hex, 12 chars).
    pub fn hash(&self) -> String {
        let text = self.to_toml().unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// Desk-scale structure-recovery preset: zero-noise linear episodic
    /// env, 50k steps, one evaluation per cycle.
    pub fn desk(seed: u64) -> RunConfig {
        RunConfig {
            env: EnvConfig {
                preset: Some("desk-linear".to_string()),
                spec_file: None,
                env_seed: None,
                noise_std_state: None,
                noise_std_reward: None,
                horizon: None,
            },
            model: ModelConfig::default(),
            policy: PolicyConfig { bootstrap_on_horizon: false, ..PolicyConfig::default() },
            losses: LossConfig {
                lambda1: 4e-2,
                lambda2: 1e-3,
                lambda3: 1e-2,
                lambda4: 2e-3,
                lambda5: 3e-3,
            },
            training: TrainingConfig { seed, ..desk_training() },
        }
    }

    /// Desk-scale policy-benefit preset on the sparse episodic env.
    pub fn desk_sparse(seed: u64) -> RunConfig {
        let mut cfg = Self::desk(seed);
        cfg.env.preset = Some("desk-sparse-episodic".to_string());
        cfg
    }

    /// Paper-scale loop constants; hours of compute, never exercised by
    /// the test suite.
    pub fn paper_scale(seed: u64) -> RunConfig {
        RunConfig {
            env: EnvConfig {
                preset: Some("desk-linear".to_string()),
                spec_file: None,
                env_seed: None,
                noise_std_state: None,
                noise_std_reward: None,
                horizon: None,
            },
            model: ModelConfig { hidden: 256, ..ModelConfig::default() },
            policy: PolicyConfig::default(),
            losses: LossConfig {
                lambda1: 1e-5,
                lambda2: 1e-5,
                lambda3: 1e-6,
                lambda4: 1e-6,
                lambda5: 1e-7,
            },
            training: TrainingConfig {
                epochs: 3,
                cycles: 100,
                iterations: 100,
                steps_per_iteration: 100,
                train_batches: Some(100),
                update_ratio: 1.0,
                m_trajectories: 4,
                n_transitions: 256,
                learning_rate: 3e-4,
                gamma: 1.0,
                buffer_capacity: 1_000_000,
                warmup_steps: 10_000,
                eval_rollouts: 10,
                seed,
                variant: Variant::Grd,
            },
        }
    }

    /// Resolve a run-config preset by name.
    pub fn preset(name: &str, seed: u64) -> Result<RunConfig> {
        match name {
            "desk" => Ok(Self::desk(seed)),
            "desk-sparse" => Ok(Self::desk_sparse(seed)),
            "paper" => Ok(Self::paper_scale(seed)),
            other => Err(Error::config(format!("unknown run preset '{other}'"))),
        }
    }
}

fn desk_training() -> TrainingConfig {
    TrainingConfig {
        epochs: 1,
        cycles: 20,
        iterations: 25,
        steps_per_iteration: 100,
        train_batches: None,
        update_ratio: 0.5,
        m_trajectories: 4,
        n_transitions: 64,
        learning_rate: 3e-4,
        gamma: 1.0,
        buffer_capacity: 100_000,
        warmup_steps: 2_500,
        eval_rollouts: 10,
        seed: 0,
        variant: Variant::Grd,
    }
}
