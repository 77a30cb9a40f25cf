use crate::{Error, Result};

/// 0.5 * ln(2π)
pub const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Variance floor applied after the softplus positivity transform.
pub const VAR_FLOOR: f64 = 1e-4;

/// Decoded mixture parameters for one predicted scalar: three Gaussian
/// cores with simplex weights and floored variances.
#[derive(Debug, Clone)]
pub struct MdnOutput {
    pub weights: [f64; 3],
    pub means: [f64; 3],
    pub variances: [f64; 3],
}

impl MdnOutput {
    /// Decode a raw 9-value head: `[w_logits(3), means(3), raw_scales(3)]`.
    /// Weights go through a softmax, variances through softplus plus the
    /// floor.
    pub fn decode(raw: &[f64]) -> Self {
        assert_eq!(raw.len(), 9, "mdn head must emit 9 values");
        let m = raw[0].max(raw[1]).max(raw[2]);
        let e = [(raw[0] - m).exp(), (raw[1] - m).exp(), (raw[2] - m).exp()];
        let z = e[0] + e[1] + e[2];
        let weights = [e[0] / z, e[1] / z, e[2] / z];
        let means = [raw[3], raw[4], raw[5]];
        let sp = |x: f64| super::tape::softplus(x) + VAR_FLOOR;
        let variances = [sp(raw[6]), sp(raw[7]), sp(raw[8])];
        MdnOutput { weights, means, variances }
    }

    /// Mixture density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        let mut p = 0.0;
        for k in 0..3 {
            let var = self.variances[k];
            let d = x - self.means[k];
            p += self.weights[k] * (-0.5 * d * d / var).exp()
                / (2.0 * std::f64::consts::PI * var).sqrt();
        }
        p
    }
}

/// Negative log-likelihood of `target` under the mixture:
/// `-ln Σ_k w_k N(target; μ_k, σ²_k)`, evaluated via log-sum-exp.
pub fn mdn_nll(out: &MdnOutput, target: f64) -> Result<f64> {
    let mut terms = [0.0; 3];
    for k in 0..3 {
        if out.variances[k] <= 0.0 {
            return Err(Error::numeric(format!(
                "mdn variance must be positive, got {}",
                out.variances[k]
            )));
        }
        if out.weights[k] < 0.0 {
            return Err(Error::numeric(format!(
                "mdn weight must be non-negative, got {}",
                out.weights[k]
            )));
        }
        let d = target - out.means[k];
        terms[k] = out.weights[k].max(f64::MIN_POSITIVE).ln() - HALF_LN_TWO_PI
            - 0.5 * out.variances[k].ln()
            - 0.5 * d * d / out.variances[k];
    }
    let m = terms[0].max(terms[1]).max(terms[2]);
    let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    Ok(-lse)
}
