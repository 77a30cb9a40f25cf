use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Stacked fully-connected layers with ReLU between hidden layers and a
/// linear head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpParams {
    widths: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

/// Xavier-uniform bound for a `[fan_in, fan_out]` weight matrix.
pub fn xavier_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> =
        (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(fan_in, fan_out, data)
}

impl MlpParams {
    /// `widths` runs input first, e.g. `[8, 64, 64, 1]`.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            weights.push(xavier_uniform(pair[0], pair[1], rng));
            biases.push(Tensor::zeros(vec![pair[1]]));
        }
        MlpParams { widths: widths.to_vec(), weights, biases }
    }

    /// Rebuild from explicit layer tensors (checkpoint loading).
    pub fn from_layers(weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::config("layer tensors do not pair up".to_string()));
        }
        let mut widths = vec![weights[0].rows()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.shape().len() != 2 || b.numel() != w.cols() || w.rows() != *widths.last().unwrap()
            {
                return Err(Error::config("incompatible layer shapes".to_string()));
            }
            widths.push(w.cols());
        }
        Ok(MlpParams { widths, weights, biases })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Parameters in checkpoint order: w0, b0, w1, b1, ...
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Forward pass without recording; one input row per output row.
    pub fn forward_plain(&self, input: &Tensor) -> Result<Tensor> {
        if input.cols() != self.input_width() {
            return Err(Error::config(format!(
                "mlp input width {} does not match first layer {}",
                input.cols(),
                self.input_width()
            )));
        }
        let rows = input.rows();
        let mut cur = input.data().to_vec();
        let mut cur_cols = input.cols();
        let last = self.n_layers() - 1;
        for (li, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let out_cols = w.cols();
            let mut next = vec![0.0; rows * out_cols];
            for r in 0..rows {
                let row = &cur[r * cur_cols..(r + 1) * cur_cols];
                let out_row = &mut next[r * out_cols..(r + 1) * out_cols];
                out_row.copy_from_slice(b.data());
                for (i, &xi) in row.iter().enumerate() {
                    let wrow = &w.data()[i * out_cols..(i + 1) * out_cols];
                    for (o, &wv) in out_row.iter_mut().zip(wrow) {
                        *o += xi * wv;
                    }
                }
            }
            if li != last {
                for v in next.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            cur = next;
            cur_cols = out_cols;
        }
        Ok(Tensor::matrix(rows, cur_cols, cur))
    }

    /// Register the parameters on a tape for a differentiable forward pass.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let w_ids = self.weights.iter().map(|w| tape.param(w)).collect();
        let b_ids = self.biases.iter().map(|b| tape.param(b)).collect();
        BoundMlp { w_ids, b_ids, in_width: self.input_width() }
    }
}

/// Tape-bound view of an [`MlpParams`]: forward passes record operations,
/// and the node ids recover gradients after backward.
pub struct BoundMlp {
    w_ids: Vec<NodeId>,
    b_ids: Vec<NodeId>,
    in_width: usize,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        if tape.value(input).cols() != self.in_width {
            return Err(Error::config(format!(
                "mlp input width {} does not match first layer {}",
                tape.value(input).cols(),
                self.in_width
            )));
        }
        let last = self.w_ids.len() - 1;
        let mut cur = input;
        for (li, (&w, &b)) in self.w_ids.iter().zip(&self.b_ids).enumerate() {
            let z = tape.matmul(cur, w);
            let z = tape.add_row_vec(z, b);
            cur = if li != last { tape.relu(z) } else { z };
        }
        Ok(cur)
    }

    /// Gradients in the same order as [`MlpParams::params`].
    pub fn grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.w_ids
            .iter()
            .zip(&self.b_ids)
            .flat_map(|(&w, &b)| [tape.grad_or_zeros(w), tape.grad_or_zeros(b)])
            .collect()
    }
}
