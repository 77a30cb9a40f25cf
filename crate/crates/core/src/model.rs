//! Learnable generative model: a reward network trained under the
//! return-equivalence constraint and a mixture-density dynamics network
//! trained by masked per-dimension likelihood. Both consume masked inputs,
//! so outputs are exactly invariant to masked-out coordinates, and both
//! losses route gradients into the mask logits through the straight-through
//! samples.

use rand::Rng;

use crate::autodiff::{mdn_nll, BoundMlp, MdnOutput, MlpParams, NodeId, Tape, Tensor};
use crate::autodiff::{HALF_LN_TWO_PI, VAR_FLOOR};
use crate::env::Trajectory;
use crate::masks::BoundMaskLogits;
use crate::replay::Transition;
use crate::{Error, Result};

/// Reward network: `[d_s + d_a, hidden, hidden, 1]` over masked inputs.
#[derive(Clone, Debug)]
pub struct RewardNet {
    pub mlp: MlpParams,
    d_s: usize,
    d_a: usize,
}

impl RewardNet {
    pub fn new<R: Rng>(d_s: usize, d_a: usize, hidden: usize, rng: &mut R) -> Self {
        RewardNet { mlp: MlpParams::new(&[d_s + d_a, hidden, hidden, 1], rng), d_s, d_a }
    }

    pub fn from_mlp(mlp: MlpParams, d_s: usize, d_a: usize) -> Self {
        RewardNet { mlp, d_s, d_a }
    }

    /// Predicted Markovian reward from masked inputs (no recording).
    pub fn predict(&self, state: &[f64], action: &[f64], c_sr: &[u8], c_ar: &[u8]) -> Result<f64> {
        if c_sr.len() != self.d_s || c_ar.len() != self.d_a {
            return Err(Error::config("reward mask widths do not match network".to_string()));
        }
        let mut input = Vec::with_capacity(self.d_s + self.d_a);
        for i in 0..self.d_s {
            input.push(if c_sr[i] == 1 { state[i] } else { 0.0 });
        }
        for k in 0..self.d_a {
            input.push(if c_ar[k] == 1 { action[k] } else { 0.0 });
        }
        let out = self.mlp.forward_plain(&Tensor::matrix(1, self.d_s + self.d_a, input))?;
        Ok(out.item())
    }

    /// Batched plain prediction over `(s, a)` rows with shared masks.
    pub fn predict_batch(
        &self,
        states: &[&[f64]],
        actions: &[&[f64]],
        c_sr: &[u8],
        c_ar: &[u8],
    ) -> Result<Vec<f64>> {
        let n = states.len();
        let width = self.d_s + self.d_a;
        let mut data = Vec::with_capacity(n * width);
        for (s, a) in states.iter().zip(actions) {
            for i in 0..self.d_s {
                data.push(if c_sr[i] == 1 { s[i] } else { 0.0 });
            }
            for k in 0..self.d_a {
                data.push(if c_ar[k] == 1 { a[k] } else { 0.0 });
            }
        }
        let out = self.mlp.forward_plain(&Tensor::matrix(n, width, data))?;
        Ok(out.data().to_vec())
    }
}

/// Dynamics network: one MLP `[d_s + d_a, hidden, hidden, 9]` whose
/// parameters are shared across the predictions of all state dimensions,
/// decoding to three Gaussian cores per queried dimension.
#[derive(Clone, Debug)]
pub struct DynNet {
    pub mlp: MlpParams,
    d_s: usize,
    d_a: usize,
}

impl DynNet {
    pub fn new<R: Rng>(d_s: usize, d_a: usize, hidden: usize, rng: &mut R) -> Self {
        DynNet { mlp: MlpParams::new(&[d_s + d_a, hidden, hidden, 9], rng), d_s, d_a }
    }

    pub fn from_mlp(mlp: MlpParams, d_s: usize, d_a: usize) -> Self {
        DynNet { mlp, d_s, d_a }
    }

    /// Mixture parameters for state dim `dim` from column-masked inputs.
    pub fn predict(
        &self,
        state: &[f64],
        action: &[f64],
        mask_ss_col: &[u8],
        mask_as_col: &[u8],
        dim: usize,
    ) -> Result<MdnOutput> {
        if dim >= self.d_s {
            return Err(Error::config(format!("dim {dim} out of {}", self.d_s)));
        }
        let mut input = Vec::with_capacity(self.d_s + self.d_a);
        for i in 0..self.d_s {
            input.push(if mask_ss_col[i] == 1 { state[i] } else { 0.0 });
        }
        for k in 0..self.d_a {
            input.push(if mask_as_col[k] == 1 { action[k] } else { 0.0 });
        }
        let raw = self.mlp.forward_plain(&Tensor::matrix(1, self.d_s + self.d_a, input))?;
        Ok(MdnOutput::decode(raw.data()))
    }
}

/// Discount weights `γ^{t-1}` for `t = 1..=len`.
pub fn discount_weights(gamma: f64, len: usize) -> Vec<f64> {
    (0..len).map(|t| gamma.powi(t as i32)).collect()
}

/// Return-equivalence loss over a trajectory minibatch: mean squared gap
/// between the discounted observed-reward sum and the discounted predicted
/// sum, with one fresh straight-through mask sample per trajectory.
/// Gradients reach both the reward net and the reward-side mask logits.
pub fn reward_loss<R: Rng>(
    tape: &mut Tape,
    bound_net: &BoundMlp,
    bound_masks: &BoundMaskLogits,
    batch: &[&Trajectory],
    gamma: f64,
    tau: f64,
    rng: &mut R,
) -> Result<NodeId> {
    if batch.is_empty() {
        return Err(Error::usage("reward_loss on an empty batch".to_string()));
    }
    let mut acc: Option<NodeId> = None;
    for traj in batch {
        let t_len = traj.len();
        let states: Vec<&[f64]> = traj.states[..t_len].iter().map(|s| s.as_slice()).collect();
        let actions: Vec<&[f64]> = traj.actions.iter().map(|a| a.as_slice()).collect();
        let s_mat = tape.input(Tensor::from_rows(&states));
        let a_mat = tape.input(Tensor::from_rows(&actions));

        let m_sr = bound_masks.sample_sr(tape, 1, tau, rng)?;
        let m_ar = bound_masks.sample_ar(tape, 1, tau, rng)?;
        let ms = tape.mul_row_vec(s_mat, m_sr);
        let ma = tape.mul_row_vec(a_mat, m_ar);
        let input = tape.concat_cols(ms, ma);
        let pred = bound_net.forward(tape, input)?;

        let w = discount_weights(gamma, t_len);
        let pred_sum = tape.dot_const(pred, &w);
        let observed_sum: f64 = traj.observed.iter().zip(&w).map(|(o, wi)| o * wi).sum();
        let residual = tape.affine(pred_sum, -1.0, observed_sum);
        let sq = tape.mul(residual, residual);
        acc = Some(match acc {
            Some(a) => tape.add(a, sq),
            None => sq,
        });
    }
    Ok(tape.affine(acc.unwrap(), 1.0 / batch.len() as f64, 0.0))
}

/// Masked-likelihood dynamics loss over a transition minibatch: for each
/// state dimension, straight-through mask columns are sampled per batch
/// element, the shared head runs on the masked inputs, and per-dimension
/// negative log-likelihoods are summed then averaged over the batch.
pub fn dynamics_loss<R: Rng>(
    tape: &mut Tape,
    bound_net: &BoundMlp,
    bound_masks: &BoundMaskLogits,
    batch: &[Transition],
    tau: f64,
    rng: &mut R,
) -> Result<NodeId> {
    if batch.is_empty() {
        return Err(Error::usage("dynamics_loss on an empty batch".to_string()));
    }
    let n = batch.len();
    let d_s = bound_masks.d_s;
    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let actions: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
    let s_mat = tape.input(Tensor::from_rows(&states));
    let a_mat = tape.input(Tensor::from_rows(&actions));

    let mut nll_acc: Option<NodeId> = None;
    for dim in 0..d_s {
        let m_s = bound_masks.sample_ss_column(tape, dim, n, tau, rng)?;
        let m_a = bound_masks.sample_as_column(tape, dim, n, tau, rng)?;
        let ms = tape.mul(s_mat, m_s);
        let ma = tape.mul(a_mat, m_a);
        let input = tape.concat_cols(ms, ma);
        let raw = bound_net.forward(tape, input)?; // [n, 9]

        let targets: Vec<f64> = batch.iter().map(|t| t.next_state[dim]).collect();
        let nll = mdn_nll_rows(tape, raw, &targets);
        nll_acc = Some(match nll_acc {
            Some(a) => tape.add(a, nll),
            None => nll,
        });
    }
    Ok(tape.mean(nll_acc.unwrap()))
}

/// Per-row mixture NLL from a raw `[n, 9]` head against scalar targets.
/// Decoding matches [`MdnOutput::decode`]: softmax weights, softplus plus
/// floor variances, all via log-sum-exp for stability.
pub fn mdn_nll_rows(tape: &mut Tape, raw: NodeId, targets: &[f64]) -> NodeId {
    let w_logits = tape.slice_cols(raw, 0, 3);
    let means = tape.slice_cols(raw, 3, 3);
    let scales = tape.slice_cols(raw, 6, 3);

    let w_lse = tape.row_logsumexp(w_logits);
    let log_w = tape.sub_col_vec(w_logits, w_lse);

    let sp = tape.softplus(scales);
    let var = tape.affine(sp, 1.0, VAR_FLOOR);
    let log_var = tape.ln(var);

    let t = tape.input(Tensor::vector(targets.to_vec()));
    let diff = tape.sub_col_vec(means, t);
    let sq = tape.mul(diff, diff);
    let quad = tape.div(sq, var);

    // log w_k - 0.5 ln 2π - 0.5 ln σ²_k - 0.5 (x-μ_k)²/σ²_k per core
    let half_lv = tape.affine(log_var, -0.5, 0.0);
    let half_quad = tape.affine(quad, -0.5, 0.0);
    let mut expo = tape.add(log_w, half_lv);
    expo = tape.add(expo, half_quad);
    let expo = tape.affine(expo, 1.0, -HALF_LN_TWO_PI);

    let lse = tape.row_logsumexp(expo);
    tape.affine(lse, -1.0, 0.0)
}

/// Plain dynamics NLL for one transition with fixed masks; evaluation-side
/// counterpart of [`dynamics_loss`].
pub fn transition_nll(
    net: &DynNet,
    tr: &Transition,
    c_ss: &[Vec<u8>],
    c_as: &[Vec<u8>],
) -> Result<f64> {
    let d_s = tr.state.len();
    let mut total = 0.0;
    for dim in 0..d_s {
        let ss_col: Vec<u8> = (0..d_s).map(|i| c_ss[i][dim]).collect();
        let as_col: Vec<u8> = (0..tr.action.len()).map(|k| c_as[k][dim]).collect();
        let out = net.predict(&tr.state, &tr.action, &ss_col, &as_col, dim)?;
        total += mdn_nll(&out, tr.next_state[dim])?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::AdamState;
    use crate::masks::MaskLogits;
    use crate::rng::derive_rng;

    fn ones(n: usize) -> Vec<u8> {
        vec![1; n]
    }

    #[test]
    fn fully_masked_reward_is_constant() {
        let mut rng = derive_rng(1, &[0]);
        let net = RewardNet::new(2, 1, 8, &mut rng);
        let zero_s = vec![0u8; 2];
        let zero_a = vec![0u8; 1];
        let base = net.predict(&[0.0, 0.0], &[0.0], &zero_s, &zero_a).unwrap();
        for (s, a) in [([1.0, -4.0], [0.7]), ([100.0, 3.0], [-1.0])] {
            let r = net.predict(&s, &a, &zero_s, &zero_a).unwrap();
            assert_eq!(r, base);
        }
    }

    #[test]
    fn reward_invariant_to_masked_dim() {
        let mut rng = derive_rng(1, &[1]);
        let net = RewardNet::new(3, 1, 8, &mut rng);
        let c_sr = vec![1, 0, 1];
        let a = net.predict(&[0.3, 5.0, -0.2], &[0.5], &c_sr, &ones(1)).unwrap();
        let b = net.predict(&[0.3, -77.0, -0.2], &[0.5], &c_sr, &ones(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_matches_forward_oracle() {
        // Masks all ones → prediction equals the bare MLP forward pass.
        let mut rng = derive_rng(0, &[2]);
        let net = RewardNet::new(2, 1, 8, &mut rng);
        let direct = net
            .mlp
            .forward_plain(&Tensor::matrix(1, 3, vec![1.0, 1.0, 1.0]))
            .unwrap()
            .item();
        let masked = net.predict(&[1.0, 1.0], &[1.0], &ones(2), &ones(1)).unwrap();
        assert_eq!(direct, masked);
    }

    fn make_traj(observed: Vec<f64>, d_s: usize, d_a: usize) -> Trajectory {
        let t = observed.len();
        Trajectory {
            states: vec![vec![0.5; d_s]; t + 1],
            actions: vec![vec![0.1; d_a]; t],
            true_rewards: observed.clone(),
            ret: observed.iter().sum(),
            observed,
        }
    }

    #[test]
    fn reward_loss_hand_value() {
        // γ=1, T=2, o=(0,3), predictions forced to (1,1) → (3-2)² = 1.
        let mut rng = derive_rng(2, &[3]);
        let mut net = RewardNet::new(2, 1, 4, &mut rng);
        for p in net.mlp.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        // Bias of the last layer = 1 → constant prediction 1.
        let n_params = net.mlp.params().len();
        net.mlp.params_mut()[n_params - 1].data_mut()[0] = 1.0;

        // Saturate mask logits so sampling is all-ones with certainty.
        let mut logits = MaskLogits::new(2, 1);
        for p in logits.params_mut() {
            for (i, v) in p.data_mut().iter_mut().enumerate() {
                *v = if i % 2 == 0 { 40.0 } else { -40.0 };
            }
        }

        let traj = make_traj(vec![0.0, 3.0], 2, 1);
        let mut tape = Tape::new();
        let bn = net.mlp.bind(&mut tape);
        let bm = logits.bind(&mut tape);
        let mut grng = derive_rng(2, &[4]);
        let loss = reward_loss(&mut tape, &bn, &bm, &[&traj], 1.0, 1.0, &mut grng).unwrap();
        assert!((tape.value(loss).item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reward_loss_zero_when_predictions_match() {
        let mut rng = derive_rng(2, &[5]);
        let mut net = RewardNet::new(2, 1, 4, &mut rng);
        for p in net.mlp.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let n_params = net.mlp.params().len();
        net.mlp.params_mut()[n_params - 1].data_mut()[0] = 2.0;
        let logits = MaskLogits::new(2, 1);
        let traj = make_traj(vec![2.0, 2.0, 2.0], 2, 1);
        let mut tape = Tape::new();
        let bn = net.mlp.bind(&mut tape);
        let bm = logits.bind(&mut tape);
        let mut grng = derive_rng(2, &[6]);
        let loss = reward_loss(&mut tape, &bn, &bm, &[&traj], 1.0, 1.0, &mut grng).unwrap();
        assert!(tape.value(loss).item() < 1e-12);
    }

    #[test]
    fn stored_return_equals_discounted_observed_sum() {
        // The two forms of the return-equivalence target agree by the
        // trajectory invariant.
        let traj = make_traj(vec![0.0, 0.0, 4.0], 2, 1);
        let w = discount_weights(1.0, 3);
        let from_obs: f64 = traj.observed.iter().zip(&w).map(|(o, wi)| o * wi).sum();
        assert_eq!(traj.ret, from_obs);
    }

    #[test]
    fn reward_loss_empty_batch_is_usage_error() {
        let mut rng = derive_rng(2, &[7]);
        let net = RewardNet::new(2, 1, 4, &mut rng);
        let logits = MaskLogits::new(2, 1);
        let mut tape = Tape::new();
        let bn = net.mlp.bind(&mut tape);
        let bm = logits.bind(&mut tape);
        let mut grng = derive_rng(2, &[8]);
        let res = reward_loss(&mut tape, &bn, &bm, &[], 1.0, 1.0, &mut grng);
        assert!(matches!(res, Err(Error::Usage(_))));
    }

    #[test]
    fn dyn_predict_masked_column_invariance() {
        let mut rng = derive_rng(3, &[0]);
        let net = DynNet::new(3, 2, 8, &mut rng);
        let ss_col = vec![1, 0, 1];
        let as_col = vec![0, 1];
        let a = net.predict(&[0.1, 9.0, -0.3], &[0.5, 0.2], &ss_col, &as_col, 1).unwrap();
        // Perturb masked-out state dim 1 and masked-out action dim 0.
        let b = net.predict(&[0.1, -2.0, -0.3], &[-0.9, 0.2], &ss_col, &as_col, 1).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.means, b.means);
        assert_eq!(a.variances, b.variances);
        let wsum: f64 = a.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_columns_give_identical_output() {
        let mut rng = derive_rng(3, &[1]);
        let net = DynNet::new(2, 1, 8, &mut rng);
        let a = net.predict(&[1.0, 2.0], &[0.3], &[0, 0], &[0], 0).unwrap();
        let b = net.predict(&[-5.0, 0.1], &[-0.8], &[0, 0], &[0], 0).unwrap();
        assert_eq!(a.means, b.means);
    }

    fn fixed_transitions(n: usize) -> Vec<Transition> {
        // Deterministic 2-dim linear system: s' = [0.5 s0 + a, 0.25 s1].
        use rand::Rng as _;
        let mut rng = derive_rng(4, &[0]);
        (0..n)
            .map(|_| {
                let s = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let a = vec![rng.gen_range(-1.0..1.0f64)];
                let ns = vec![0.5 * s[0] + a[0], 0.25 * s[1]];
                Transition {
                    state: s,
                    action: a,
                    next_state: ns,
                    ret: 0.0,
                    horizon: 8,
                    is_last: false,
                }
            })
            .collect()
    }

    #[test]
    fn dynamics_loss_decreases_with_training() {
        let mut rng = derive_rng(4, &[1]);
        let mut net = DynNet::new(2, 1, 16, &mut rng);
        let logits = MaskLogits::new(2, 1);
        let batch = fixed_transitions(32);
        let mut adam = AdamState::new(&net.mlp.params());
        let mut first = None;
        let mut last = 0.0;
        for step in 0..500u64 {
            let mut tape = Tape::new();
            let bn = net.mlp.bind(&mut tape);
            let bm = logits.bind(&mut tape);
            let mut grng = derive_rng(4, &[2, step]);
            let loss = dynamics_loss(&mut tape, &bn, &bm, &batch, 1.0, &mut grng).unwrap();
            last = tape.value(loss).item();
            if first.is_none() {
                first = Some(last);
            }
            tape.backward(loss).unwrap();
            let grads = bn.grads(&tape);
            adam.apply(&mut net.mlp.params_mut(), &grads, 3e-3).unwrap();
        }
        let first = first.unwrap();
        assert!(last < first - 1.0, "dynamics loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn mdn_rows_match_plain_nll() {
        // Tape-side decode + NLL equals the plain MdnOutput path.
        use rand::Rng as _;
        let mut rng = derive_rng(4, &[3]);
        let raw_vals: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let targets = [0.3, -0.9];
        let mut tape = Tape::new();
        let raw = tape.input(Tensor::matrix(2, 9, raw_vals.clone()));
        let nll = mdn_nll_rows(&mut tape, raw, &targets);
        for r in 0..2 {
            let out = MdnOutput::decode(&raw_vals[r * 9..(r + 1) * 9]);
            let expect = mdn_nll(&out, targets[r]).unwrap();
            let got = tape.value(nll).data()[r];
            assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
        }
    }

    #[test]
    fn dynamics_loss_empty_batch_is_usage_error() {
        let mut rng = derive_rng(4, &[4]);
        let net = DynNet::new(2, 1, 8, &mut rng);
        let logits = MaskLogits::new(2, 1);
        let mut tape = Tape::new();
        let bn = net.mlp.bind(&mut tape);
        let bm = logits.bind(&mut tape);
        let mut grng = derive_rng(4, &[5]);
        let res = dynamics_loss(&mut tape, &bn, &bm, &[], 1.0, &mut grng);
        assert!(matches!(res, Err(Error::Usage(_))));
    }

    #[test]
    fn prefit_deterministic_env_approaches_variance_floor() {
        // On a deterministic 1-dim system the NLL floor is
        // -ln N(0; 0, VAR_FLOOR) = 0.5 ln(2π · 1e-4) ≈ -3.6862.
        let floor_nll = 0.5 * (2.0 * std::f64::consts::PI * VAR_FLOOR).ln();
        let mut rng = derive_rng(5, &[0]);
        let mut net = DynNet::new(1, 1, 16, &mut rng);
        // Masks pinned to the true (all-ones) structure so the fit is not
        // capped by input dropout.
        let mut logits = MaskLogits::new(1, 1);
        for p in logits.params_mut() {
            for (i, v) in p.data_mut().iter_mut().enumerate() {
                *v = if i % 2 == 0 { 40.0 } else { -40.0 };
            }
        }
        use rand::Rng as _;
        let batch: Vec<Transition> = (0..32)
            .map(|_| {
                let s = vec![rng.gen_range(-1.0..1.0)];
                let a = vec![rng.gen_range(-1.0..1.0f64)];
                Transition {
                    next_state: vec![0.5 * s[0] + 0.3 * a[0]],
                    state: s,
                    action: a,
                    ret: 0.0,
                    horizon: 8,
                    is_last: false,
                }
            })
            .collect();
        let mut adam = AdamState::new(&net.mlp.params());
        let mut last = f64::INFINITY;
        for step in 0..3000u64 {
            let mut tape = Tape::new();
            let bn = net.mlp.bind(&mut tape);
            let bm = logits.bind(&mut tape);
            let mut grng = derive_rng(5, &[1, step]);
            let loss = dynamics_loss(&mut tape, &bn, &bm, &batch, 1.0, &mut grng).unwrap();
            last = tape.value(loss).item();
            tape.backward(loss).unwrap();
            let grads = bn.grads(&tape);
            adam.apply(&mut net.mlp.params_mut(), &grads, 3e-3).unwrap();
        }
        // Within one nat of the floor after fitting.
        assert!(last < floor_nll + 1.0, "nll {last} vs floor {floor_nll}");
        assert!(last >= floor_nll - 1e-6, "nll {last} below the floor {floor_nll}");
    }
}
