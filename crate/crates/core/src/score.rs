//! Structure-recovery scoring, sparsity rate and reward correlation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Precision/recall/F1 and structural Hamming distance for one mask family
/// or a pooled set of families.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaskScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub shd: usize,
}

/// Full structure-recovery report: pooled reward-side masks, pooled
/// dynamics-side masks, overall pooling, and the per-family breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureScore {
    pub overall: MaskScore,
    /// Pooled over the state→reward and action→reward cells.
    pub reward_masks: MaskScore,
    /// Pooled over the state→state and action→state cells.
    pub dynamics_masks: MaskScore,
    pub ss: MaskScore,
    pub as_: MaskScore,
    pub sr: MaskScore,
    pub ar: MaskScore,
}

fn confusion(pred: &[u8], truth: &[u8]) -> (usize, usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fng = 0;
    let mut tn = 0;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fng += 1,
            _ => tn += 1,
        }
    }
    (tp, fp, fng, tn)
}

fn score_cells(pred: &[u8], truth: &[u8]) -> MaskScore {
    let (tp, fp, fng, _) = confusion(pred, truth);
    let shd = fp + fng;
    if tp + fp == 0 && tp + fng == 0 {
        // No predicted and no true positives: a perfect all-negative match.
        return MaskScore { precision: 1.0, recall: 1.0, f1: 1.0, shd };
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fng == 0 { 0.0 } else { tp as f64 / (tp + fng) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MaskScore { precision, recall, f1, shd }
}

fn flatten(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

fn flatten_u8(m: &[Vec<u8>]) -> Vec<u8> {
    m.iter().flatten().copied().collect()
}

fn threshold(p: &[f64], thr: f64) -> Vec<u8> {
    p.iter().map(|&v| u8::from(v >= thr)).collect()
}

/// Score thresholded edge probabilities against the ground-truth masks.
///
/// The 0.5 threshold matches greedy deterministic sampling: an edge is
/// predicted present iff its probability is at least one half.
pub fn structure_score(
    probs: &crate::masks::MaskProbs,
    truth_ss: &[Vec<u8>],
    truth_as: &[Vec<u8>],
    truth_sr: &[u8],
    truth_ar: &[u8],
    thr: f64,
) -> Result<StructureScore> {
    if probs.p_ss.len() != truth_ss.len()
        || probs.p_as.len() != truth_as.len()
        || probs.p_sr.len() != truth_sr.len()
        || probs.p_ar.len() != truth_ar.len()
    {
        return Err(Error::usage("prediction/truth shape mismatch".to_string()));
    }
    let pred_ss = threshold(&flatten(&probs.p_ss), thr);
    let pred_as = threshold(&flatten(&probs.p_as), thr);
    let pred_sr = threshold(&probs.p_sr, thr);
    let pred_ar = threshold(&probs.p_ar, thr);
    let t_ss = flatten_u8(truth_ss);
    let t_as = flatten_u8(truth_as);
    if pred_ss.len() != t_ss.len() || pred_as.len() != t_as.len() {
        return Err(Error::usage("prediction/truth shape mismatch".to_string()));
    }

    let pool = |parts: &[(&[u8], &[u8])]| -> MaskScore {
        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for (p, t) in parts {
            pred.extend_from_slice(p);
            truth.extend_from_slice(t);
        }
        score_cells(&pred, &truth)
    };

    Ok(StructureScore {
        overall: pool(&[
            (&pred_ss, &t_ss),
            (&pred_as, &t_as),
            (&pred_sr, truth_sr),
            (&pred_ar, truth_ar),
        ]),
        reward_masks: pool(&[(&pred_sr, truth_sr), (&pred_ar, truth_ar)]),
        dynamics_masks: pool(&[(&pred_ss, &t_ss), (&pred_as, &t_as)]),
        ss: score_cells(&pred_ss, &t_ss),
        as_: score_cells(&pred_as, &t_as),
        sr: score_cells(&pred_sr, truth_sr),
        ar: score_cells(&pred_ar, truth_ar),
    })
}

/// Fraction of active entries in a binary state→reward mask.
pub fn sparsity_rate(c_sr: &[u8]) -> Result<f64> {
    if c_sr.is_empty() {
        return Err(Error::usage("sparsity rate of an empty mask".to_string()));
    }
    Ok(c_sr.iter().map(|&b| b as f64).sum::<f64>() / c_sr.len() as f64)
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
