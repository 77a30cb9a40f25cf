//! Joint training loop: environment interaction, replay, two-view
//! minibatch sampling, reward relabeling, per-group optimization and
//! periodic evaluation.
//!
//! Per gradient batch, the generative terms (return-equivalence, masked
//! dynamics likelihood, sparsity) are evaluated on one tape; the reward
//! net, dynamics net and mask logits each take an Adam step from exactly
//! the loss components that touch them. The policy trains on relabeled
//! transitions via its own critic/actor/temperature tapes.

use std::path::Path;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{clip_global_norm, AdamState, Tape};
use crate::checkpoint::{self, ModelBundle};
use crate::config::{RunConfig, Variant};
use crate::env::{random_policy, rollout, Env, EnvSpec, Trajectory};
use crate::masks::{compact_representation, mask_state, sparsity_loss_value, MaskSample};
use crate::metrics::{to_csv, MetricsRecord};
use crate::model::{discount_weights, dynamics_loss, reward_loss, transition_nll};
use crate::par::{map_indexed, Parallelism};
use crate::policy::{
    actor_update, critic_update, polyak_update, temperature_update, ActMode, SacBatch,
};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{stream_rng, Stream};
use crate::score::{pearson, sparsity_rate, structure_score};
use crate::{Error, Result};

/// Everything a finished run hands back.
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub models: ModelBundle,
    pub env: EnvSpec,
    pub csv: String,
}

/// Evaluation summary: mean discounted oracle return over the rollouts,
/// reward correlation, and the first rollout's reward traces for plotting.
pub struct EvalReport {
    pub avg_return: f64,
    pub pearson_r: Option<f64>,
    pub decomposed: Vec<f64>,
    pub grounded: Vec<f64>,
}

/// Relabel transitions with decomposed rewards and masked policy inputs.
///
/// `grd`: `r̃` from the reward net under deterministic masks and
/// `s_min = c̃_π ⊙ s`; `grd_no_cr`: same rewards, full state; the uniform
/// baseline assigns `r̃ = R / T` from each transition's source trajectory.
pub fn relabel(
    transitions: &[Transition],
    bundle: &ModelBundle,
    det: &MaskSample,
    c_pi: &[u8],
    variant: Variant,
) -> Result<SacBatch> {
    let mut batch = SacBatch::default();
    for tr in transitions {
        let r = match variant {
            Variant::UniformBaseline => tr.ret / tr.horizon as f64,
            _ => bundle.reward_net.predict(&tr.state, &tr.action, &det.c_sr, &det.c_ar)?,
        };
        let (s_min, next_s_min) = match variant {
            Variant::Grd => (mask_state(c_pi, &tr.state), mask_state(c_pi, &tr.next_state)),
            _ => (tr.state.clone(), tr.next_state.clone()),
        };
        batch.s_min.push(s_min);
        batch.next_s_min.push(next_s_min);
        batch.action.push(tr.action.clone());
        batch.reward.push(r);
        batch.is_last.push(tr.is_last);
    }
    Ok(batch)
}

/// Mean discounted oracle return over `n_rollouts` mean-action rollouts.
/// Performance is always judged against the environment's true rewards,
/// never the relabeled ones.
pub fn evaluate(
    spec: &EnvSpec,
    bundle: &ModelBundle,
    c_pi: &[u8],
    variant: Variant,
    n_rollouts: usize,
    seed: u64,
    eval_idx: u64,
) -> Result<EvalReport> {
    let det = bundle.mask_logits.sample_deterministic();
    let results: Vec<Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>)>> =
        map_indexed(n_rollouts, Parallelism::default(), |k| {
            let mut rng = stream_rng(seed, Stream::Eval, &[eval_idx, k as u64]);
            let mut act_rng = stream_rng(seed, Stream::Policy, &[eval_idx, k as u64]);
            let mut policy = |s: &[f64]| {
                let s_in = if variant == Variant::Grd {
                    mask_state(c_pi, s)
                } else {
                    s.to_vec()
                };
                bundle
                    .actor
                    .act(&s_in, ActMode::Mean, &mut act_rng)
                    .unwrap_or_else(|_| vec![f64::NAN; spec.d_a])
            };
            let traj = rollout(spec, &mut policy, &mut rng)?;
            let grounded: Vec<f64> = (0..traj.len())
                .map(|t| spec.oracle_reward(&traj.states[t], &traj.actions[t]))
                .collect();
            let w = discount_weights(spec.gamma, traj.len());
            let ret: f64 = grounded.iter().zip(&w).map(|(r, wi)| r * wi).sum();
            let decomposed: Vec<f64> = match variant {
                Variant::UniformBaseline => {
                    vec![traj.ret / traj.len() as f64; traj.len()]
                }
                _ => (0..traj.len())
                    .map(|t| {
                        bundle
                            .reward_net
                            .predict(&traj.states[t], &traj.actions[t], &det.c_sr, &det.c_ar)
                            .unwrap_or(f64::NAN)
                    })
                    .collect(),
            };
            Ok((ret, decomposed, grounded, traj.true_rewards))
        });

    let mut returns = Vec::with_capacity(n_rollouts);
    let mut all_dec = Vec::new();
    let mut all_gnd = Vec::new();
    let mut first: Option<(Vec<f64>, Vec<f64>)> = None;
    for r in results {
        let (ret, dec, gnd, _) = r?;
        returns.push(ret);
        if first.is_none() {
            first = Some((dec.clone(), gnd.clone()));
        }
        all_dec.extend(dec);
        all_gnd.extend(gnd);
    }
    let avg = returns.iter().sum::<f64>() / returns.len() as f64;
    let (decomposed, grounded) = first.unwrap_or_default();
    Ok(EvalReport {
        avg_return: avg,
        pearson_r: pearson(&all_dec, &all_gnd),
        decomposed,
        grounded,
    })
}

/// Mean discounted oracle return of a uniform-random policy; the floor
/// reference for policy-benefit comparisons.
pub fn evaluate_random_policy(spec: &EnvSpec, n_rollouts: usize, seed: u64) -> Result<f64> {
    let returns: Vec<Result<f64>> = map_indexed(n_rollouts, Parallelism::default(), |k| {
        let mut rng = stream_rng(seed, Stream::Eval, &[u64::MAX, k as u64]);
        let mut action_rng = stream_rng(seed, Stream::Policy, &[u64::MAX, k as u64]);
        let mut policy = |_: &[f64]| random_policy(spec.d_a, &mut action_rng);
        let traj = rollout(spec, &mut policy, &mut rng)?;
        let w = discount_weights(spec.gamma, traj.len());
        Ok((0..traj.len())
            .map(|t| spec.oracle_reward(&traj.states[t], &traj.actions[t]) * w[t])
            .sum())
    });
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in returns {
        sum += r?;
        n += 1;
    }
    Ok(sum / n as f64)
}

struct Optimizers {
    rew: AdamState,
    dynamics: AdamState,
    cau: AdamState,
    actor: AdamState,
    critic: AdamState,
    temp: AdamState,
}

impl Optimizers {
    fn new(bundle: &ModelBundle) -> Self {
        Optimizers {
            rew: AdamState::new(&bundle.reward_net.mlp.params()),
            dynamics: AdamState::new(&bundle.dyn_net.mlp.params()),
            cau: AdamState::new(&bundle.mask_logits.params()),
            actor: AdamState::new(&bundle.actor.mlp.params()),
            critic: AdamState::new(&bundle.critics.params()),
            temp: AdamState::new(&[&bundle.temp.log_alpha]),
        }
    }
}

/// One generative-model batch: evaluates the three loss terms on a single
/// tape and steps each parameter group from its own components. Returns
/// `(l_rew, l_dyn, l_sp)`.
fn model_update(
    bundle: &mut ModelBundle,
    opt: &mut Optimizers,
    d1: &[&Trajectory],
    d2: &[Transition],
    lambdas: &[f64; 5],
    gamma: f64,
    tau: f64,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, f64)> {
    let mut tape = Tape::new();
    let b_rew = bundle.reward_net.mlp.bind(&mut tape);
    let b_dyn = bundle.dyn_net.mlp.bind(&mut tape);
    let b_cau = bundle.mask_logits.bind(&mut tape);

    let l_rew = reward_loss(&mut tape, &b_rew, &b_cau, d1, gamma, tau, rng)?;
    let l_dyn = dynamics_loss(&mut tape, &b_dyn, &b_cau, d2, tau, rng)?;
    let l_sp = b_cau.sparsity_loss(&mut tape, lambdas);

    let v_rew = tape.value(l_rew).item();
    let v_dyn = tape.value(l_dyn).item();
    let v_sp = tape.value(l_sp).item();

    let mut total = tape.add(l_rew, l_dyn);
    total = tape.add(total, l_sp);
    tape.backward(total)?;

    // The reward net appears only in the return-equivalence term and the
    // dynamics net only in the likelihood term, so gradients of the summed
    // objective equal each group's own-loss gradients; the mask logits
    // collect all three. Clipping tames the likelihood spikes that occur
    // when a straight-through sample drops a true parent.
    let mut g_rew = b_rew.grads(&tape);
    clip_global_norm(&mut g_rew, 100.0);
    opt.rew.apply(&mut bundle.reward_net.mlp.params_mut(), &g_rew, lr)?;
    let mut g_dyn = b_dyn.grads(&tape);
    clip_global_norm(&mut g_dyn, 100.0);
    opt.dynamics.apply(&mut bundle.dyn_net.mlp.params_mut(), &g_dyn, lr)?;
    let mut g_cau = b_cau.grads(&tape);
    clip_global_norm(&mut g_cau, 1.0);
    opt.cau.apply(&mut bundle.mask_logits.params_mut(), &g_cau, lr)?;

    Ok((v_rew, v_dyn, v_sp))
}

/// Metric-side loss estimates under deterministic masks on freshly sampled
/// evaluation batches; NaN before any data exists.
fn metric_losses(
    bundle: &ModelBundle,
    buffer: &ReplayBuffer,
    det: &MaskSample,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    if buffer.len_trajectories() == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = buffer.len_trajectories().min(16);
    let l_rew = match buffer.sample_trajectories(m, rng) {
        Ok(trajs) => {
            let mut acc = 0.0;
            let mut ok = true;
            for traj in &trajs {
                let states: Vec<&[f64]> =
                    traj.states[..traj.len()].iter().map(|s| s.as_slice()).collect();
                let actions: Vec<&[f64]> =
                    traj.actions.iter().map(|a| a.as_slice()).collect();
                match bundle.reward_net.predict_batch(&states, &actions, &det.c_sr, &det.c_ar)
                {
                    Ok(preds) => {
                        let w = discount_weights(gamma, traj.len());
                        let pred_sum: f64 =
                            preds.iter().zip(&w).map(|(p, wi)| p * wi).sum();
                        let obs_sum: f64 =
                            traj.observed.iter().zip(&w).map(|(o, wi)| o * wi).sum();
                        acc += (obs_sum - pred_sum) * (obs_sum - pred_sum);
                    }
                    Err(_) => ok = false,
                }
            }
            if ok {
                acc / trajs.len() as f64
            } else {
                f64::NAN
            }
        }
        Err(_) => f64::NAN,
    };
    let l_dyn = match buffer.sample_transitions(128, rng) {
        Ok(batch) => {
            let mut acc = 0.0;
            let mut n = 0usize;
            for tr in &batch {
                if let Ok(v) = transition_nll(&bundle.dyn_net, tr, &det.c_ss, &det.c_as) {
                    acc += v;
                    n += 1;
                }
            }
            if n > 0 {
                acc / n as f64
            } else {
                f64::NAN
            }
        }
        Err(_) => f64::NAN,
    };
    (l_rew, l_dyn)
}

/// Run the full joint loop. With `out_dir` set, writes `metrics.csv`,
/// `env.json`, `manifest.json` and the final checkpoint (`ckpt.bin/json`);
/// on divergence the last evaluation-point snapshot is written instead and
/// the error is surfaced.
pub fn run_training(config: &RunConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    config.validate()?;
    let spec = config.build_env()?;
    let started = Instant::now();
    let seed = config.training.seed;
    let variant = config.training.variant;
    let gamma = config.training.gamma;
    let tau = config.model.tau;
    let lr = config.training.learning_rate;
    let lambdas = config.losses.lambdas();

    let mut init_rng = stream_rng(seed, Stream::Init, &[]);
    let mut bundle = ModelBundle::new(
        spec.d_s,
        spec.d_a,
        config.model.hidden,
        config.policy.twin_critic,
        config.policy.init_alpha,
        &mut init_rng,
    );
    let mut opt = Optimizers::new(&bundle);
    let mut buffer =
        ReplayBuffer::new(config.training.buffer_capacity, config.training.warmup_steps);

    let mut env_rng = stream_rng(seed, Stream::Env, &[]);
    let mut policy_rng = stream_rng(seed, Stream::Policy, &[]);
    let mut gumbel_rng = stream_rng(seed, Stream::Gumbel, &[]);
    let mut batch_rng = stream_rng(seed, Stream::Batch, &[]);
    let mut eval_rng = stream_rng(seed, Stream::Eval, &[0x6d65]);

    let mut env = Env::new(&spec, &mut env_rng);
    let mut partial_states: Vec<Vec<f64>> = vec![env.state().to_vec()];
    let mut partial_actions: Vec<Vec<f64>> = Vec::new();
    let mut partial_observed: Vec<f64> = Vec::new();
    let mut partial_true: Vec<f64> = Vec::new();

    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut env_steps = 0u64;
    let mut eval_idx = 0u64;

    let push_eval = |bundle: &ModelBundle,
                         buffer: &ReplayBuffer,
                         env_steps: u64,
                         eval_idx: &mut u64,
                         eval_rng: &mut ChaCha8Rng,
                         records: &mut Vec<MetricsRecord>|
     -> Result<()> {
        let det = bundle.mask_logits.sample_deterministic();
        let c_pi = compact_representation(&det.c_ss, &det.c_sr, config.model.closure);
        let report = evaluate(
            &spec,
            bundle,
            &c_pi,
            variant,
            config.training.eval_rollouts,
            seed,
            *eval_idx,
        )?;
        let (l_rew, l_dyn) = if variant == Variant::UniformBaseline {
            (f64::NAN, f64::NAN)
        } else {
            metric_losses(bundle, buffer, &det, gamma, eval_rng)
        };
        let probs = bundle.mask_logits.edge_probabilities();
        let l_sp = sparsity_loss_value(&probs, &lambdas);
        let score = structure_score(
            &probs,
            &spec.mask_ss,
            &spec.mask_as,
            &spec.mask_sr,
            &spec.mask_ar,
            0.5,
        )?;
        let stoch = bundle.mask_logits.sample_training_plain(tau, eval_rng)?;
        records.push(MetricsRecord {
            step: env_steps,
            avg_return: report.avg_return,
            l_rew,
            l_dyn,
            l_sp,
            s_zr: sparsity_rate(&det.c_sr)?,
            f1_sr: score.reward_masks.f1,
            f1_ss: score.dynamics_masks.f1,
            pearson_r: report.pearson_r.unwrap_or(f64::NAN),
            s_zr_stochastic: sparsity_rate(&stoch.c_sr)?,
            precision_reward: score.reward_masks.precision,
            recall_reward: score.reward_masks.recall,
            shd_overall: score.overall.shd as u64,
            wall_clock_s: started.elapsed().as_secs_f64(),
        });
        *eval_idx += 1;
        Ok(())
    };

    // Baseline metrics before any interaction.
    push_eval(&bundle, &buffer, 0, &mut eval_idx, &mut eval_rng, &mut records)?;
    let mut last_good: ModelBundle = bundle.clone();

    let train_result = (|| -> Result<()> {
        for _epoch in 0..config.training.epochs {
            for _cycle in 0..config.training.cycles {
                for _iter in 0..config.training.iterations {
                    // Collect one iteration of environment steps.
                    let det = bundle.mask_logits.sample_deterministic();
                    let c_pi =
                        compact_representation(&det.c_ss, &det.c_sr, config.model.closure);
                    for _ in 0..config.training.steps_per_iteration {
                        let action = if !buffer.is_warm() {
                            random_policy(spec.d_a, &mut policy_rng)
                        } else {
                            let s_in = if variant == Variant::Grd {
                                mask_state(&c_pi, env.state())
                            } else {
                                env.state().to_vec()
                            };
                            bundle.actor.act(&s_in, ActMode::Stochastic, &mut policy_rng)?
                        };
                        partial_actions
                            .push(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect());
                        let (step, r_t) = env.step(&action, &mut env_rng)?;
                        partial_observed.push(step.observed_reward);
                        partial_true.push(r_t);
                        partial_states.push(step.next_state);
                        env_steps += 1;
                        if step.done {
                            let w = discount_weights(gamma, partial_observed.len());
                            let ret = partial_observed
                                .iter()
                                .zip(&w)
                                .map(|(o, wi)| o * wi)
                                .sum();
                            buffer.push(Trajectory {
                                states: std::mem::take(&mut partial_states),
                                actions: std::mem::take(&mut partial_actions),
                                observed: std::mem::take(&mut partial_observed),
                                true_rewards: std::mem::take(&mut partial_true),
                                ret,
                            });
                            env.reset(&mut env_rng);
                            partial_states.push(env.state().to_vec());
                        }
                    }

                    if !buffer.is_warm() {
                        continue;
                    }
                    for _ in 0..config.batches_per_iteration() {
                        let d2 = buffer
                            .sample_transitions(config.training.n_transitions, &mut batch_rng)?;

                        if variant != Variant::UniformBaseline {
                            let d1 = buffer.sample_trajectories(
                                config.training.m_trajectories,
                                &mut batch_rng,
                            )?;
                            model_update(
                                &mut bundle,
                                &mut opt,
                                &d1,
                                &d2,
                                &lambdas,
                                gamma,
                                tau,
                                lr,
                                &mut gumbel_rng,
                            )?;
                        }

                        let det = bundle.mask_logits.sample_deterministic();
                        let c_pi = compact_representation(
                            &det.c_ss,
                            &det.c_sr,
                            config.model.closure,
                        );
                        let sac_batch = relabel(&d2, &bundle, &det, &c_pi, variant)?;
                        let alpha = bundle.temp.alpha();
                        critic_update(
                            &sac_batch,
                            &mut bundle.critics,
                            &mut opt.critic,
                            &bundle.target_critics,
                            &bundle.actor,
                            alpha,
                            gamma,
                            lr,
                            config.policy.bootstrap_on_horizon,
                            &mut policy_rng,
                        )?;
                        actor_update(
                            &sac_batch,
                            &mut bundle.actor,
                            &mut opt.actor,
                            &bundle.critics,
                            alpha,
                            lr,
                            &mut policy_rng,
                        )?;
                        temperature_update(
                            &sac_batch,
                            &bundle.actor,
                            &mut bundle.temp,
                            &mut opt.temp,
                            lr,
                            &mut policy_rng,
                        )?;
                        polyak_update(
                            &mut bundle.target_critics,
                            &bundle.critics,
                            config.policy.polyak_rho,
                        );
                    }
                }
                // One validation per cycle.
                push_eval(
                    &bundle,
                    &buffer,
                    env_steps,
                    &mut eval_idx,
                    &mut eval_rng,
                    &mut records,
                )?;
                last_good = bundle.clone();
            }
        }
        Ok(())
    })();

    if let Err(e) = train_result {
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            checkpoint::save(&last_good, &config.hash(), &dir.join("ckpt-lastgood"))?;
            return Err(Error::numeric(format!(
                "training aborted ({e}); last-good checkpoint written to {}",
                dir.join("ckpt-lastgood").display()
            )));
        }
        return Err(e);
    }

    let csv = to_csv(&records);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), &csv)?;
        crate::env::save_spec(&spec, &dir.join("env.json"))?;
        checkpoint::save(&bundle, &config.hash(), &dir.join("ckpt"))?;
        let manifest = serde_json::json!({
            "config_hash": config.hash(),
            "seed": seed,
            "variant": variant.name(),
            "total_env_steps": env_steps,
            "config": config,
        });
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
    }

    Ok(RunOutput { records, models: bundle, env: spec, csv })
}
