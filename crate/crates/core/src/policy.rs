//! Soft actor-critic on decomposed rewards.
//!
//! The actor is a tanh-squashed Gaussian over masked compact-representation
//! inputs; the critic estimates Q on `concat(s_min, a)` with a Polyak-
//! averaged target copy; the entropy temperature is learned against a
//! target entropy of `-d_a`. A twin-critic minimum is available behind a
//! flag; the default is a single critic.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{AdamState, MlpParams, NodeId, Tape, Tensor};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LN_2: f64 = std::f64::consts::LN_2;
const HALF_LN_TWO_PI: f64 = crate::autodiff::HALF_LN_TWO_PI;

/// Action selection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Mean,
}

/// Squashed-Gaussian actor: `[d_s, hidden, hidden, 2·d_a]`, emitting
/// per-dimension mean and log-std.
#[derive(Clone, Debug)]
pub struct ActorNet {
    pub mlp: MlpParams,
    pub d_a: usize,
}

impl ActorNet {
    pub fn new<R: Rng>(d_s: usize, d_a: usize, hidden: usize, rng: &mut R) -> Self {
        ActorNet { mlp: MlpParams::new(&[d_s, hidden, hidden, 2 * d_a], rng), d_a }
    }

    /// Mean and clamped log-std rows for a batch of masked states.
    fn heads(&self, s_min: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.mlp.forward_plain(s_min)?;
        let n = out.rows();
        let d_a = self.d_a;
        let mut mean = Vec::with_capacity(n * d_a);
        let mut log_std = Vec::with_capacity(n * d_a);
        for r in 0..n {
            let row = out.row(r);
            mean.extend_from_slice(&row[..d_a]);
            for &v in &row[d_a..] {
                log_std.push(v.clamp(LOG_STD_MIN, LOG_STD_MAX));
            }
        }
        Ok((mean, log_std))
    }

    /// One action for one masked state. Stochastic mode samples the
    /// tanh-squashed Gaussian; mean mode returns `tanh(μ)`.
    pub fn act<R: Rng>(&self, s_min: &[f64], mode: ActMode, rng: &mut R) -> Result<Vec<f64>> {
        let input = Tensor::matrix(1, s_min.len(), s_min.to_vec());
        let (mean, log_std) = self.heads(&input)?;
        let action: Vec<f64> = match mode {
            ActMode::Mean => mean.iter().map(|m| m.tanh()).collect(),
            ActMode::Stochastic => mean
                .iter()
                .zip(&log_std)
                .map(|(m, ls)| {
                    let xi: f64 = StandardNormal.sample(rng);
                    (m + ls.exp() * xi).tanh()
                })
                .collect(),
        };
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::numeric("actor produced a non-finite action".to_string()));
        }
        Ok(action)
    }

    /// Batched stochastic sample with per-sample log-probability under the
    /// tanh-squashed Gaussian (no recording).
    pub fn sample_plain<R: Rng>(
        &self,
        s_min_rows: &[&[f64]],
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let input = Tensor::from_rows(s_min_rows);
        let (mean, log_std) = self.heads(&input)?;
        let n = s_min_rows.len();
        let d_a = self.d_a;
        let mut actions = Vec::with_capacity(n);
        let mut log_pi = Vec::with_capacity(n);
        for r in 0..n {
            let mut a = Vec::with_capacity(d_a);
            let mut lp = 0.0;
            for d in 0..d_a {
                let m = mean[r * d_a + d];
                let ls = log_std[r * d_a + d];
                let xi: f64 = StandardNormal.sample(rng);
                let u = m + ls.exp() * xi;
                a.push(u.tanh());
                // N(u; m, σ) density minus the tanh volume correction,
                // ln(1 - tanh(u)²) = 2(ln 2 - u - softplus(-2u)).
                lp += -HALF_LN_TWO_PI - ls - 0.5 * xi * xi;
                lp -= 2.0 * (LN_2 - u - stable_softplus(-2.0 * u));
            }
            actions.push(a);
            log_pi.push(lp);
        }
        Ok((actions, log_pi))
    }
}

fn stable_softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// One or two Q networks plus their Polyak-averaged target copies.
#[derive(Clone, Debug)]
pub struct CriticEnsemble {
    pub nets: Vec<MlpParams>,
}

impl CriticEnsemble {
    pub fn new<R: Rng>(d_s: usize, d_a: usize, hidden: usize, twin: bool, rng: &mut R) -> Self {
        let n = if twin { 2 } else { 1 };
        let nets =
            (0..n).map(|_| MlpParams::new(&[d_s + d_a, hidden, hidden, 1], rng)).collect();
        CriticEnsemble { nets }
    }

    /// Minimum Q over the ensemble for `concat(s, a)` rows (no recording).
    pub fn q_min_plain(&self, s_rows: &[&[f64]], a_rows: &[&[f64]]) -> Result<Vec<f64>> {
        let n = s_rows.len();
        let width = s_rows[0].len() + a_rows[0].len();
        let mut data = Vec::with_capacity(n * width);
        for (s, a) in s_rows.iter().zip(a_rows) {
            data.extend_from_slice(s);
            data.extend_from_slice(a);
        }
        let input = Tensor::matrix(n, width, data);
        let mut qmin: Option<Vec<f64>> = None;
        for net in &self.nets {
            let q = net.forward_plain(&input)?;
            qmin = Some(match qmin {
                None => q.data().to_vec(),
                Some(prev) => {
                    prev.iter().zip(q.data()).map(|(a, b)| a.min(*b)).collect()
                }
            });
        }
        Ok(qmin.unwrap())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.nets.iter().flat_map(|n| n.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.nets.iter_mut().flat_map(|n| n.params_mut()).collect()
    }
}

/// Learnable entropy temperature with target entropy `-d_a`.
#[derive(Clone, Debug)]
pub struct EntropyTemp {
    pub log_alpha: Tensor,
    pub target_entropy: f64,
}

impl EntropyTemp {
    pub fn new(d_a: usize, init_alpha: f64) -> Self {
        EntropyTemp {
            log_alpha: Tensor::scalar(init_alpha.ln()),
            target_entropy: -(d_a as f64),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.item().exp()
    }
}

/// Relabeled minibatch consumed by the SAC updates: masked states, buffer
/// actions, decomposed rewards and episode-end flags.
#[derive(Debug, Clone, Default)]
pub struct SacBatch {
    pub s_min: Vec<Vec<f64>>,
    pub action: Vec<Vec<f64>>,
    pub next_s_min: Vec<Vec<f64>>,
    pub reward: Vec<f64>,
    pub is_last: Vec<bool>,
}

impl SacBatch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// Bellman backup on the critic: MSE against
/// `y = r̃ + γ (Q_target(s', a') − α log π(a'|s'))` with `a'` resampled
/// from the actor. Horizon-end steps drop the bootstrap term unless
/// `bootstrap_on_horizon` keeps time-limit semantics.
#[allow(clippy::too_many_arguments)]
pub fn critic_update<R: Rng>(
    batch: &SacBatch,
    critics: &mut CriticEnsemble,
    critic_adam: &mut AdamState,
    targets: &CriticEnsemble,
    actor: &ActorNet,
    alpha: f64,
    gamma: f64,
    lr: f64,
    bootstrap_on_horizon: bool,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::usage("critic update on an empty batch".to_string()));
    }
    if batch.reward.len() != batch.s_min.len() {
        return Err(Error::usage("batch is missing relabeled rewards".to_string()));
    }
    let n = batch.len();

    // Targets, computed without recording.
    let next_rows: Vec<&[f64]> = batch.next_s_min.iter().map(|s| s.as_slice()).collect();
    let (next_actions, next_logpi) = actor.sample_plain(&next_rows, rng)?;
    let na_rows: Vec<&[f64]> = next_actions.iter().map(|a| a.as_slice()).collect();
    let q_next = targets.q_min_plain(&next_rows, &na_rows)?;
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let bootstrap = if batch.is_last[i] && !bootstrap_on_horizon {
            0.0
        } else {
            gamma * (q_next[i] - alpha * next_logpi[i])
        };
        y.push(batch.reward[i] + bootstrap);
    }

    // Recorded pass: sum of per-critic MSE.
    let mut tape = Tape::new();
    let s_rows: Vec<&[f64]> = batch.s_min.iter().map(|s| s.as_slice()).collect();
    let a_rows: Vec<&[f64]> = batch.action.iter().map(|a| a.as_slice()).collect();
    let s_mat = tape.input(Tensor::from_rows(&s_rows));
    let a_mat = tape.input(Tensor::from_rows(&a_rows));
    let input = tape.concat_cols(s_mat, a_mat);
    let y_node = tape.input(Tensor::vector(y));

    let bounds: Vec<_> = critics.nets.iter().map(|c| c.bind(&mut tape)).collect();
    let mut loss: Option<NodeId> = None;
    for b in &bounds {
        let q = b.forward(&mut tape, input)?;
        let res = tape.sub(q, y_node);
        let sq = tape.mul(res, res);
        let mse = tape.mean(sq);
        loss = Some(match loss {
            Some(l) => tape.add(l, mse),
            None => mse,
        });
    }
    let loss = loss.unwrap();
    let value = tape.value(loss).item();
    tape.backward(loss)?;
    let grads: Vec<Vec<f64>> = bounds.iter().flat_map(|b| b.grads(&tape)).collect();
    critic_adam.apply(&mut critics.params_mut(), &grads, lr)?;
    Ok(value)
}

/// Policy improvement: minimize `E[α log π(a|s) − Q(s, a)]` with
/// reparameterized actions; only the actor receives an update.
/// Returns the loss and the mean log-probability (reused by temperature
/// diagnostics).
pub fn actor_update<R: Rng>(
    batch: &SacBatch,
    actor: &mut ActorNet,
    actor_adam: &mut AdamState,
    critics: &CriticEnsemble,
    alpha: f64,
    lr: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::usage("actor update on an empty batch".to_string()));
    }
    let n = batch.len();
    let d_a = actor.d_a;

    let mut tape = Tape::new();
    let s_rows: Vec<&[f64]> = batch.s_min.iter().map(|s| s.as_slice()).collect();
    let s_mat = tape.input(Tensor::from_rows(&s_rows));
    let bound_actor = actor.mlp.bind(&mut tape);
    let heads = bound_actor.forward(&mut tape, s_mat)?;
    let mean = tape.slice_cols(heads, 0, d_a);
    let log_std_raw = tape.slice_cols(heads, d_a, d_a);
    let log_std = tape.clamp(log_std_raw, LOG_STD_MIN, LOG_STD_MAX);
    let std = tape.exp(log_std);

    let xi_vals: Vec<f64> = (0..n * d_a).map(|_| StandardNormal.sample(rng)).collect();
    let xi = tape.input(Tensor::matrix(n, d_a, xi_vals.clone()));
    let noise = tape.mul(std, xi);
    let u = tape.add(mean, noise);
    let action = tape.tanh(u);

    // log π rows: Σ_d [ -log σ - 0.5 ξ² - 0.5 ln 2π - ln(1 - tanh(u)²) ]
    // with the stable identity ln(1 - tanh(u)²) = 2(ln2 - u - softplus(-2u)).
    let neg_log_std = tape.affine(log_std, -1.0, 0.0);
    let xi_term_vals: Vec<f64> =
        xi_vals.iter().map(|x| -0.5 * x * x - HALF_LN_TWO_PI - 2.0 * LN_2).collect();
    let xi_term = tape.input(Tensor::matrix(n, d_a, xi_term_vals));
    let two_u = tape.affine(u, 2.0, 0.0);
    let neg_two_u = tape.affine(u, -2.0, 0.0);
    let sp = tape.softplus(neg_two_u);
    let two_sp = tape.affine(sp, 2.0, 0.0);
    let mut lp = tape.add(neg_log_std, xi_term);
    lp = tape.add(lp, two_u);
    lp = tape.add(lp, two_sp);
    let log_pi = tape.row_sum(lp); // [n]

    // Q(s, a) with reparameterized a; critic parameters are bound so the
    // gradient can flow through them to the action, but their updates are
    // discarded.
    let critic_bounds: Vec<_> = critics.nets.iter().map(|c| c.bind(&mut tape)).collect();
    let q_input = tape.concat_cols(s_mat, action);
    let mut q_min: Option<NodeId> = None;
    for b in &critic_bounds {
        let q = b.forward(&mut tape, q_input)?;
        q_min = Some(match q_min {
            None => q,
            Some(prev) => tape.min(prev, q),
        });
    }
    let q_min = q_min.unwrap();

    let alpha_logpi = tape.affine(log_pi, alpha, 0.0);
    let gap = tape.sub(alpha_logpi, q_min);
    let loss = tape.mean(gap);
    let loss_value = tape.value(loss).item();
    let mean_logpi =
        tape.value(log_pi).data().iter().sum::<f64>() / n as f64;
    tape.backward(loss)?;
    let grads = bound_actor.grads(&tape);
    actor_adam.apply(&mut actor.mlp.params_mut(), &grads, lr)?;
    Ok((loss_value, mean_logpi))
}

/// Dual update of the entropy temperature: one gradient step on
/// `E[-α (log π(a|s) + H*)]` with `log π` held fixed.
pub fn temperature_update<R: Rng>(
    batch: &SacBatch,
    actor: &ActorNet,
    temp: &mut EntropyTemp,
    temp_adam: &mut AdamState,
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::usage("temperature update on an empty batch".to_string()));
    }
    let rows: Vec<&[f64]> = batch.s_min.iter().map(|s| s.as_slice()).collect();
    let (_, log_pi) = actor.sample_plain(&rows, rng)?;
    let mean_logpi: f64 = log_pi.iter().sum::<f64>() / log_pi.len() as f64;
    let c = mean_logpi + temp.target_entropy;

    let mut tape = Tape::new();
    let log_alpha = tape.param(&temp.log_alpha);
    let alpha = tape.exp(log_alpha);
    let loss = tape.affine(alpha, -c, 0.0);
    let value = tape.value(loss).item();
    tape.backward(loss)?;
    let grad = tape.grad_or_zeros(log_alpha);
    temp_adam.apply(&mut [&mut temp.log_alpha], &[grad], lr)?;
    Ok(value)
}

/// Polyak blend: `target ← (1 − ρ) target + ρ online`.
pub fn polyak_update(target: &mut CriticEnsemble, online: &CriticEnsemble, rho: f64) {
    for (t, o) in target.nets.iter_mut().zip(&online.nets) {
        for (tp, op) in t.params_mut().into_iter().zip(o.params()) {
            for (tv, ov) in tp.data_mut().iter_mut().zip(op.data()) {
                *tv = (1.0 - rho) * *tv + rho * ov;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    fn zeroed_actor(d_s: usize, d_a: usize) -> ActorNet {
        let mut rng = derive_rng(0, &[0]);
        let mut actor = ActorNet::new(d_s, d_a, 8, &mut rng);
        for p in actor.mlp.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        actor
    }

    #[test]
    fn mean_mode_at_zero_mu_is_zero() {
        let actor = zeroed_actor(2, 2);
        let mut rng = derive_rng(0, &[1]);
        let a = actor.act(&[0.3, -0.4], ActMode::Mean, &mut rng).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn large_mean_saturates_to_one() {
        let mut actor = zeroed_actor(1, 1);
        // Last-layer bias: mean head large positive.
        let n = actor.mlp.params().len();
        actor.mlp.params_mut()[n - 1].data_mut()[0] = 50.0;
        let mut rng = derive_rng(0, &[2]);
        let a = actor.act(&[0.0], ActMode::Mean, &mut rng).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stochastic_mean_close_to_squashed_mean_for_small_sigma() {
        let mut actor = zeroed_actor(1, 1);
        let n = actor.mlp.params().len();
        // mean = 0.5, log_std = -4 (σ ≈ 0.018)
        actor.mlp.params_mut()[n - 1].data_mut()[0] = 0.5;
        actor.mlp.params_mut()[n - 1].data_mut()[1] = -4.0;
        let mut rng = derive_rng(0, &[3]);
        let draws = 10_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            sum += actor.act(&[0.0], ActMode::Stochastic, &mut rng).unwrap()[0];
        }
        let emp = sum / draws as f64;
        let expect = 0.5f64.tanh();
        assert!((emp - expect).abs() < 0.005, "{emp} vs {expect}");
    }

    #[test]
    fn actions_respect_bounds() {
        let mut rng = derive_rng(0, &[4]);
        let actor = ActorNet::new(3, 2, 8, &mut rng);
        for _ in 0..200 {
            let s: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = actor.act(&s, ActMode::Stochastic, &mut rng).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    fn tiny_batch(n: usize, d_s: usize, d_a: usize, reward: f64) -> SacBatch {
        let mut rng = derive_rng(7, &[0]);
        SacBatch {
            s_min: (0..n)
                .map(|_| (0..d_s).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            action: (0..n)
                .map(|_| (0..d_a).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            next_s_min: (0..n)
                .map(|_| (0..d_s).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            reward: vec![reward; n],
            is_last: vec![false; n],
        }
    }

    #[test]
    fn gamma_zero_targets_equal_reward() {
        // Constant-zero critic, r̃ = 1, γ = 0 → targets are 1, MSE = 1.
        let mut rng = derive_rng(1, &[0]);
        let actor = ActorNet::new(2, 1, 8, &mut rng);
        let mut critics = CriticEnsemble::new(2, 1, 8, false, &mut rng);
        for p in critics.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let targets = critics.clone();
        let mut adam = AdamState::new(&critics.params());
        let batch = tiny_batch(16, 2, 1, 1.0);
        let loss = critic_update(
            &batch,
            &mut critics,
            &mut adam,
            &targets,
            &actor,
            0.2,
            0.0,
            0.0, // lr 0: inspect the loss only
            true,
            &mut rng,
        )
        .unwrap();
        assert!((loss - 1.0).abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn terminal_steps_drop_bootstrap() {
        let mut rng = derive_rng(1, &[1]);
        let actor = ActorNet::new(2, 1, 8, &mut rng);
        // Critic with constant output 5 → bootstrap changes targets unless
        // terminal handling removes it.
        let mut critics = CriticEnsemble::new(2, 1, 8, false, &mut rng);
        for p in critics.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let idx = critics.nets[0].params().len() - 1;
        critics.nets[0].params_mut()[idx].data_mut()[0] = 5.0;
        let targets = critics.clone();
        let mut adam = AdamState::new(&critics.params());
        let mut batch = tiny_batch(8, 2, 1, 0.0);
        batch.is_last = vec![true; 8];
        // α = 0 isolates the Q bootstrap.
        let loss_terminal = critic_update(
            &batch, &mut critics, &mut adam, &targets, &actor, 0.0, 1.0, 0.0, false,
            &mut rng,
        )
        .unwrap();
        // y = 0 everywhere, q = 5 → MSE = 25.
        assert!((loss_terminal - 25.0).abs() < 1e-9, "loss {loss_terminal}");
        let loss_bootstrap = critic_update(
            &batch, &mut critics, &mut adam, &targets, &actor, 0.0, 1.0, 0.0, true,
            &mut rng,
        )
        .unwrap();
        // y = 0 + 1·5 = 5 = q → MSE 0.
        assert!(loss_bootstrap < 1e-9, "loss {loss_bootstrap}");
    }

    #[test]
    fn missing_rewards_is_usage_error() {
        let mut rng = derive_rng(1, &[2]);
        let actor = ActorNet::new(2, 1, 8, &mut rng);
        let mut critics = CriticEnsemble::new(2, 1, 8, false, &mut rng);
        let targets = critics.clone();
        let mut adam = AdamState::new(&critics.params());
        let mut batch = tiny_batch(4, 2, 1, 1.0);
        batch.reward.pop();
        let res = critic_update(
            &batch, &mut critics, &mut adam, &targets, &actor, 0.2, 0.9, 1e-3, true,
            &mut rng,
        );
        assert!(matches!(res, Err(Error::Usage(_))));
    }

    /// Critic computing `Q(s, a) = -|a - peak|` exactly, via
    /// `|x| = relu(x) + relu(-x)` in the first hidden layer.
    fn v_shaped_critic(peak: f64) -> CriticEnsemble {
        let mut rng = derive_rng(2, &[9]);
        let mut critics = CriticEnsemble::new(1, 1, 8, false, &mut rng);
        for p in critics.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let mut params = critics.nets[0].params_mut();
        // Input layout: [s, a]; hidden0 = relu(a - peak), hidden1 = relu(peak - a).
        params[0].data_mut()[8] = 1.0; // a → hidden0
        params[0].data_mut()[8 + 1] = -1.0; // a → hidden1
        params[1].data_mut()[0] = -peak;
        params[1].data_mut()[1] = peak;
        // Second hidden layer passes the two units through.
        params[2].data_mut()[0] = 1.0; // hidden0 → unit0
        params[2].data_mut()[8 + 1] = 1.0; // hidden1 → unit1
        let last = params.len() - 2;
        params[last].data_mut()[0] = -1.0;
        params[last].data_mut()[1] = -1.0;
        drop(params);
        critics
    }

    #[test]
    fn v_critic_computes_distance_to_peak() {
        let critics = v_shaped_critic(0.5);
        for a in [-1.0, -0.2, 0.5, 0.9] {
            let q = critics.q_min_plain(&[&[0.3]], &[&[a]]).unwrap()[0];
            assert!((q + (a - 0.5f64).abs()).abs() < 1e-12, "a={a} q={q}");
        }
    }

    #[test]
    fn actor_moves_toward_synthetic_q_peak() {
        // Q peaked at a* = 0.5: a few hundred updates pull tanh(μ) within
        // 0.1 of the peak.
        let mut rng = derive_rng(2, &[0]);
        let mut actor = ActorNet::new(1, 1, 16, &mut rng);
        let critics = v_shaped_critic(0.5);
        let mut adam = AdamState::new(&actor.mlp.params());
        let batch = tiny_batch(32, 1, 1, 0.0);
        for _ in 0..300 {
            actor_update(&batch, &mut actor, &mut adam, &critics, 0.01, 1e-2, &mut rng)
                .unwrap();
        }
        let mean_inputs: Vec<f64> = batch
            .s_min
            .iter()
            .map(|s| actor.act(s, ActMode::Mean, &mut rng).unwrap()[0])
            .collect();
        let avg = mean_inputs.iter().sum::<f64>() / mean_inputs.len() as f64;
        assert!((avg - 0.5).abs() < 0.1, "mean action {avg} not near 0.5");
    }

    #[test]
    fn larger_alpha_widens_learned_sigma() {
        // Paired runs on the same toy objective: a heavier entropy weight
        // must end with a wider policy.
        let final_sigma = |alpha: f64| -> f64 {
            let mut rng = derive_rng(2, &[1]);
            let mut actor = ActorNet::new(1, 1, 16, &mut rng);
            let critics = v_shaped_critic(0.0);
            let mut adam = AdamState::new(&actor.mlp.params());
            let batch = tiny_batch(32, 1, 1, 0.0);
            for _ in 0..300 {
                actor_update(&batch, &mut actor, &mut adam, &critics, alpha, 1e-2, &mut rng)
                    .unwrap();
            }
            // Probe the learned log-std head on the batch states.
            let rows: Vec<&[f64]> = batch.s_min.iter().map(|s| s.as_slice()).collect();
            let out = actor.mlp.forward_plain(&Tensor::from_rows(&rows)).unwrap();
            let mut acc = 0.0;
            for r in 0..out.rows() {
                acc += out.row(r)[1].clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
            acc / out.rows() as f64
        };
        let narrow = final_sigma(0.001);
        let wide = final_sigma(0.5);
        assert!(wide > narrow + 0.3, "sigma did not widen: {narrow} vs {wide}");
    }

    #[test]
    fn temperature_rises_when_entropy_below_target() {
        // Tight policy: log π ≈ +8 per dim, entropy far below H* = -1, so
        // the dual update raises α to restore exploration pressure.
        let mut rng = derive_rng(3, &[0]);
        let mut actor = zeroed_actor(1, 1);
        let n = actor.mlp.params().len();
        actor.mlp.params_mut()[n - 1].data_mut()[1] = -8.0; // tiny σ
        let mut temp = EntropyTemp::new(1, 0.5);
        let mut adam = AdamState::new(&[&temp.log_alpha]);
        let batch = tiny_batch(16, 1, 1, 0.0);
        let a0 = temp.alpha();
        for _ in 0..50 {
            temperature_update(&batch, &actor, &mut temp, &mut adam, 1e-2, &mut rng)
                .unwrap();
        }
        assert!(temp.alpha() > a0, "alpha {} -> {}", a0, temp.alpha());
    }

    #[test]
    fn temperature_falls_when_entropy_above_target() {
        // Unit-σ squashed Gaussian has entropy ≈ +0.3 per dim, above the
        // -1 target, so α decays toward zero yet stays positive.
        let mut rng = derive_rng(3, &[1]);
        let actor = zeroed_actor(1, 1); // μ = 0, log σ = 0
        let mut temp = EntropyTemp::new(1, 0.5);
        let mut adam = AdamState::new(&[&temp.log_alpha]);
        let batch = tiny_batch(16, 1, 1, 0.0);
        let a0 = temp.alpha();
        for _ in 0..200 {
            temperature_update(&batch, &actor, &mut temp, &mut adam, 1e-2, &mut rng)
                .unwrap();
        }
        assert!(temp.alpha() < a0);
        assert!(temp.alpha() > 0.0);
    }

    #[test]
    fn polyak_blend_values() {
        let mut rng = derive_rng(4, &[0]);
        let online = CriticEnsemble::new(1, 1, 4, false, &mut rng);
        // ρ = 1 → copy
        let mut target = CriticEnsemble::new(1, 1, 4, false, &mut rng);
        polyak_update(&mut target, &online, 1.0);
        for (t, o) in target.params().iter().zip(online.params()) {
            assert_eq!(t.data(), o.data());
        }
        // ρ = 0 → unchanged
        let before: Vec<Vec<f64>> =
            target.params().iter().map(|p| p.data().to_vec()).collect();
        let other = CriticEnsemble::new(1, 1, 4, false, &mut rng);
        polyak_update(&mut target, &other, 0.0);
        for (t, b) in target.params().iter().zip(&before) {
            assert_eq!(t.data(), b.as_slice());
        }
        // ρ = 0.5, target 0, online 2 → 1
        let mut zeroed = CriticEnsemble::new(1, 1, 4, false, &mut rng);
        for p in zeroed.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let mut twos = CriticEnsemble::new(1, 1, 4, false, &mut rng);
        for p in twos.params_mut() {
            for v in p.data_mut() {
                *v = 2.0;
            }
        }
        polyak_update(&mut zeroed, &twos, 0.5);
        for p in zeroed.params() {
            assert!(p.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn polyak_distance_non_increasing_under_frozen_online() {
        let mut rng = derive_rng(4, &[1]);
        let online = CriticEnsemble::new(2, 1, 4, false, &mut rng);
        let mut target = CriticEnsemble::new(2, 1, 4, false, &mut rng);
        let dist = |t: &CriticEnsemble, o: &CriticEnsemble| -> f64 {
            t.params()
                .iter()
                .zip(o.params())
                .flat_map(|(a, b)| {
                    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y))
                })
                .sum::<f64>()
                .sqrt()
        };
        let mut prev = dist(&target, &online);
        for _ in 0..100 {
            polyak_update(&mut target, &online, 0.05);
            let d = dist(&target, &online);
            assert!(d <= prev + 1e-12);
            prev = d;
        }
    }

    #[test]
    fn twin_critic_q_min() {
        let mut rng = derive_rng(5, &[0]);
        let mut critics = CriticEnsemble::new(1, 1, 4, true, &mut rng);
        assert_eq!(critics.nets.len(), 2);
        for p in critics.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        // Net 0 constant 3, net 1 constant -2 → min is -2.
        let i0 = critics.nets[0].params().len() - 1;
        critics.nets[0].params_mut()[i0].data_mut()[0] = 3.0;
        let i1 = critics.nets[1].params().len() - 1;
        critics.nets[1].params_mut()[i1].data_mut()[0] = -2.0;
        let q = critics.q_min_plain(&[&[0.5]], &[&[0.1]]).unwrap();
        assert_eq!(q, vec![-2.0]);
    }
}
