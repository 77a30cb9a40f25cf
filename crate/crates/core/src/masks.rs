//! Causal-structure parameters: free Bernoulli logits over every candidate
//! edge, Gumbel-Softmax sampling during training, greedy deterministic
//! sampling during inference, the sparsity penalty, and the compact state
//! representation used as the policy input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gumbel_softmax, NodeId, Tape, Tensor};
use crate::Result;

/// Per-edge two-logit Bernoulli parameters for the four mask families.
///
/// Each edge carries logits `[ψ0, ψ1]`; the probability that the edge
/// exists is `exp(ψ0) / (exp(ψ0) + exp(ψ1))`. Tables are stored as
/// `[n_edges, 2]` tensors, row-major over `(from, to)` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskLogits {
    pub d_s: usize,
    pub d_a: usize,
    /// `[d_s * d_s, 2]`, edge (i → j) at row `i * d_s + j`.
    pub logits_ss: Tensor,
    /// `[d_a * d_s, 2]`, edge (k → j) at row `k * d_s + j`.
    pub logits_as: Tensor,
    /// `[d_s, 2]`.
    pub logits_sr: Tensor,
    /// `[d_a, 2]`.
    pub logits_ar: Tensor,
}

/// Binary mask sample over all four families.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSample {
    /// `[i][j]` = 1 iff state dim i feeds state dim j.
    pub c_ss: Vec<Vec<u8>>,
    pub c_as: Vec<Vec<u8>>,
    pub c_sr: Vec<u8>,
    pub c_ar: Vec<u8>,
}

/// Edge probabilities for all four families, same layouts as the masks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskProbs {
    pub p_ss: Vec<Vec<f64>>,
    pub p_as: Vec<Vec<f64>>,
    pub p_sr: Vec<f64>,
    pub p_ar: Vec<f64>,
}

/// Closure rule for the compact representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    /// Literal one-step union: reward parents plus their immediate
    /// state-to-state parents.
    OneStep,
    /// Iterate the union to a fixed point (backward reachability).
    FixedPoint,
}

fn edge_prob(l: &[f64]) -> f64 {
    // exp(ψ0) / (exp(ψ0) + exp(ψ1)), computed stably.
    let m = l[0].max(l[1]);
    let e0 = (l[0] - m).exp();
    let e1 = (l[1] - m).exp();
    e0 / (e0 + e1)
}

impl MaskLogits {
    /// Both logits start at zero: every edge probability is 0.5.
    pub fn new(d_s: usize, d_a: usize) -> Self {
        MaskLogits {
            d_s,
            d_a,
            logits_ss: Tensor::zeros(vec![d_s * d_s, 2]),
            logits_as: Tensor::zeros(vec![d_a * d_s, 2]),
            logits_sr: Tensor::zeros(vec![d_s, 2]),
            logits_ar: Tensor::zeros(vec![d_a, 2]),
        }
    }

    /// Per-edge existence probabilities.
    pub fn edge_probabilities(&self) -> MaskProbs {
        let d_s = self.d_s;
        let d_a = self.d_a;
        MaskProbs {
            p_ss: (0..d_s)
                .map(|i| (0..d_s).map(|j| edge_prob(self.logits_ss.row(i * d_s + j))).collect())
                .collect(),
            p_as: (0..d_a)
                .map(|k| (0..d_s).map(|j| edge_prob(self.logits_as.row(k * d_s + j))).collect())
                .collect(),
            p_sr: (0..d_s).map(|i| edge_prob(self.logits_sr.row(i))).collect(),
            p_ar: (0..d_a).map(|k| edge_prob(self.logits_ar.row(k))).collect(),
        }
    }

    /// Greedy sample: edge present iff ψ0 ≥ ψ1 (ties resolve to present).
    /// Pure function of the logits; used for data sampling, relabeling and
    /// policy inputs.
    pub fn sample_deterministic(&self) -> MaskSample {
        let det = |l: &[f64]| u8::from(l[0] >= l[1]);
        let d_s = self.d_s;
        let d_a = self.d_a;
        MaskSample {
            c_ss: (0..d_s)
                .map(|i| (0..d_s).map(|j| det(self.logits_ss.row(i * d_s + j))).collect())
                .collect(),
            c_as: (0..d_a)
                .map(|k| (0..d_s).map(|j| det(self.logits_as.row(k * d_s + j))).collect())
                .collect(),
            c_sr: (0..d_s).map(|i| det(self.logits_sr.row(i))).collect(),
            c_ar: (0..d_a).map(|k| det(self.logits_ar.row(k))).collect(),
        }
    }

    /// Stochastic Gumbel-Softmax sample of all families, without gradient
    /// tracking. Training-time gradient-carrying samples are drawn on a
    /// tape through [`BoundMaskLogits`].
    pub fn sample_training_plain<R: Rng>(&self, tau: f64, rng: &mut R) -> Result<MaskSample> {
        let d_s = self.d_s;
        let d_a = self.d_a;
        let mut draw = |l: &[f64]| -> Result<u8> {
            Ok(gumbel_softmax([l[0], l[1]], tau, rng)?.bit() as u8)
        };
        let mut c_ss = vec![vec![0u8; d_s]; d_s];
        for i in 0..d_s {
            for j in 0..d_s {
                c_ss[i][j] = draw(self.logits_ss.row(i * d_s + j))?;
            }
        }
        let mut c_as = vec![vec![0u8; d_s]; d_a];
        for k in 0..d_a {
            for j in 0..d_s {
                c_as[k][j] = draw(self.logits_as.row(k * d_s + j))?;
            }
        }
        let mut c_sr = vec![0u8; d_s];
        for (i, c) in c_sr.iter_mut().enumerate() {
            *c = draw(self.logits_sr.row(i))?;
        }
        let mut c_ar = vec![0u8; d_a];
        for (k, c) in c_ar.iter_mut().enumerate() {
            *c = draw(self.logits_ar.row(k))?;
        }
        Ok(MaskSample { c_ss, c_as, c_sr, c_ar })
    }

    /// Parameters in checkpoint order.
    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.logits_ss, &self.logits_as, &self.logits_sr, &self.logits_ar]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.logits_ss,
            &mut self.logits_as,
            &mut self.logits_sr,
            &mut self.logits_ar,
        ]
    }

    /// Register the four tables on a tape.
    pub fn bind(&self, tape: &mut Tape) -> BoundMaskLogits {
        BoundMaskLogits {
            d_s: self.d_s,
            d_a: self.d_a,
            ss: tape.param(&self.logits_ss),
            as_: tape.param(&self.logits_as),
            sr: tape.param(&self.logits_sr),
            ar: tape.param(&self.logits_ar),
        }
    }
}

/// Tape-bound mask logits: stochastic straight-through samples recorded on
/// the tape so gradients reach the logit tables.
pub struct BoundMaskLogits {
    pub d_s: usize,
    pub d_a: usize,
    pub ss: NodeId,
    pub as_: NodeId,
    pub sr: NodeId,
    pub ar: NodeId,
}

impl BoundMaskLogits {
    /// `n` straight-through samples of the state→reward mask, `[n, d_s]`.
    pub fn sample_sr<R: Rng>(
        &self,
        tape: &mut Tape,
        n: usize,
        tau: f64,
        rng: &mut R,
    ) -> Result<NodeId> {
        tape.gumbel_bernoulli(self.sr, n, tau, rng)
    }

    /// `n` straight-through samples of the action→reward mask, `[n, d_a]`.
    pub fn sample_ar<R: Rng>(
        &self,
        tape: &mut Tape,
        n: usize,
        tau: f64,
        rng: &mut R,
    ) -> Result<NodeId> {
        tape.gumbel_bernoulli(self.ar, n, tau, rng)
    }

    /// `n` samples of the state-parent column for target state dim `j`,
    /// `[n, d_s]`.
    pub fn sample_ss_column<R: Rng>(
        &self,
        tape: &mut Tape,
        j: usize,
        n: usize,
        tau: f64,
        rng: &mut R,
    ) -> Result<NodeId> {
        let idx: Vec<usize> = (0..self.d_s).map(|i| i * self.d_s + j).collect();
        let col = tape.gather_rows(self.ss, &idx);
        tape.gumbel_bernoulli(col, n, tau, rng)
    }

    /// `n` samples of the action-parent column for target state dim `j`,
    /// `[n, d_a]`.
    pub fn sample_as_column<R: Rng>(
        &self,
        tape: &mut Tape,
        j: usize,
        n: usize,
        tau: f64,
        rng: &mut R,
    ) -> Result<NodeId> {
        let idx: Vec<usize> = (0..self.d_a).map(|k| k * self.d_s + j).collect();
        let col = tape.gather_rows(self.as_, &idx);
        tape.gumbel_bernoulli(col, n, tau, rng)
    }

    /// Sparsity penalty: λ-weighted sums of log edge probabilities, with
    /// probabilities clamped to `[1e-6, 1 - 1e-6]` before the logarithm.
    /// Separate weights cover reward edges (λ1 state, λ2 action),
    /// off-diagonal (λ3) and diagonal (λ4) state→state edges, and
    /// action→state edges (λ5).
    pub fn sparsity_loss(&self, tape: &mut Tape, lambda: &[f64; 5]) -> NodeId {
        let d_s = self.d_s;
        let d_a = self.d_a;
        let log_p = |tape: &mut Tape, logits: NodeId| -> NodeId {
            let probs = tape.row_softmax(logits);
            let p0 = tape.slice_cols(probs, 0, 1);
            let clamped = tape.clamp(p0, 1e-6, 1.0 - 1e-6);
            tape.ln(clamped)
        };

        let lp_sr = log_p(tape, self.sr);
        let w_sr = vec![lambda[0]; d_s];
        let term_sr = tape.dot_const(lp_sr, &w_sr);

        let lp_ar = log_p(tape, self.ar);
        let w_ar = vec![lambda[1]; d_a];
        let term_ar = tape.dot_const(lp_ar, &w_ar);

        let lp_ss = log_p(tape, self.ss);
        let mut w_off = vec![lambda[2]; d_s * d_s];
        let mut w_diag = vec![0.0; d_s * d_s];
        for i in 0..d_s {
            w_off[i * d_s + i] = 0.0;
            w_diag[i * d_s + i] = lambda[3];
        }
        let term_off = tape.dot_const(lp_ss, &w_off);
        let term_diag = tape.dot_const(lp_ss, &w_diag);

        let lp_as = log_p(tape, self.as_);
        let w_as = vec![lambda[4]; d_a * d_s];
        let term_as = tape.dot_const(lp_as, &w_as);

        let mut total = tape.add(term_sr, term_ar);
        total = tape.add(total, term_off);
        total = tape.add(total, term_diag);
        tape.add(total, term_as)
    }

    /// Gradients in the same order as [`MaskLogits::params`].
    pub fn grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        vec![
            tape.grad_or_zeros(self.ss),
            tape.grad_or_zeros(self.as_),
            tape.grad_or_zeros(self.sr),
            tape.grad_or_zeros(self.ar),
        ]
    }
}

/// Sparsity-penalty value computed directly from probability tables; the
/// evaluation-side counterpart of [`BoundMaskLogits::sparsity_loss`], with
/// the same clamping.
pub fn sparsity_loss_value(probs: &MaskProbs, lambda: &[f64; 5]) -> f64 {
    let lp = |p: f64| p.clamp(1e-6, 1.0 - 1e-6).ln();
    let mut total = 0.0;
    for &p in &probs.p_sr {
        total += lambda[0] * lp(p);
    }
    for &p in &probs.p_ar {
        total += lambda[1] * lp(p);
    }
    for (i, row) in probs.p_ss.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            total += if i == j { lambda[3] } else { lambda[2] } * lp(p);
        }
    }
    for row in &probs.p_as {
        for &p in row {
            total += lambda[4] * lp(p);
        }
    }
    total
}

/// Dimensions of the compact policy representation: reward parents plus
/// state dims that feed them, either one step back (the literal union) or
/// transitively to a fixed point.
pub fn compact_representation(c_ss: &[Vec<u8>], c_sr: &[u8], closure: Closure) -> Vec<u8> {
    let d_s = c_sr.len();
    let expand = |active: &[u8]| -> Vec<u8> {
        let mut next = active.to_vec();
        for j in 0..d_s {
            if active[j] == 1 {
                for (i, next_i) in next.iter_mut().enumerate() {
                    if c_ss[i][j] == 1 {
                        *next_i = 1;
                    }
                }
            }
        }
        // Reward parents always stay in.
        for (n, &c) in next.iter_mut().zip(c_sr) {
            if c == 1 {
                *n = 1;
            }
        }
        next
    };
    match closure {
        Closure::OneStep => expand(c_sr),
        Closure::FixedPoint => {
            let mut cur = c_sr.to_vec();
            for _ in 0..d_s {
                let next = expand(&cur);
                if next == cur {
                    break;
                }
                cur = next;
            }
            cur
        }
    }
}

/// Apply a binary mask to a state vector.
pub fn mask_state(mask: &[u8], state: &[f64]) -> Vec<f64> {
    mask.iter().zip(state).map(|(&m, &s)| if m == 1 { s } else { 0.0 }).collect()
}
