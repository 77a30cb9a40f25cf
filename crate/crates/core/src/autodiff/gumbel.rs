use rand::Rng;

use crate::{Error, Result};

/// One straight-through Gumbel-Softmax draw over a two-logit Bernoulli.
#[derive(Debug, Clone, Copy)]
pub struct GumbelSample {
    /// Relaxed sample; sums to 1.
    pub soft: [f64; 2],
    /// One-hot argmax of `soft`.
    pub hard: [f64; 2],
}

impl GumbelSample {
    /// 1.0 when the class-0 ("edge present") side won.
    pub fn bit(&self) -> f64 {
        self.hard[0]
    }
}

/// Standard Gumbel(0, 1) noise.
pub fn gumbel_noise<R: Rng>(rng: &mut R) -> f64 {
    // -ln(-ln(U)); shift U off 0 to avoid infinities.
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

/// Sample `softmax((logits + g) / tau)` plus its one-hot argmax.
///
/// The straight-through treatment (hard value forward, soft gradient) is
/// applied where this feeds a tape; here both parts are returned.
pub fn gumbel_softmax<R: Rng>(logits: [f64; 2], tau: f64, rng: &mut R) -> Result<GumbelSample> {
    if tau <= 0.0 {
        return Err(Error::config(format!("gumbel temperature must be > 0, got {tau}")));
    }
    let z0 = (logits[0] + gumbel_noise(rng)) / tau;
    let z1 = (logits[1] + gumbel_noise(rng)) / tau;
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    let p0 = e0 / (e0 + e1);
    let soft = [p0, 1.0 - p0];
    let hard = if p0 >= 0.5 { [1.0, 0.0] } else { [0.0, 1.0] };
    Ok(GumbelSample { soft, hard })
}
