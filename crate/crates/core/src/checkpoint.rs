//! Checkpoints: a flat list of named parameter tensors stored as
//! little-endian 64-bit floats, plus a JSON manifest carrying names,
//! shapes, rebuild dimensions and the config hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{MlpParams, Tensor};
use crate::masks::MaskLogits;
use crate::model::{DynNet, RewardNet};
use crate::policy::{ActorNet, CriticEnsemble, EntropyTemp};
use crate::{Error, Result};

/// Everything the trainer learns, bundled for checkpointing and
/// evaluation-side reuse.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub mask_logits: MaskLogits,
    pub reward_net: RewardNet,
    pub dyn_net: DynNet,
    pub actor: ActorNet,
    pub critics: CriticEnsemble,
    pub target_critics: CriticEnsemble,
    pub temp: EntropyTemp,
    pub d_s: usize,
    pub d_a: usize,
    pub hidden: usize,
}

impl ModelBundle {
    pub fn new<R: rand::Rng>(
        d_s: usize,
        d_a: usize,
        hidden: usize,
        twin_critic: bool,
        init_alpha: f64,
        rng: &mut R,
    ) -> Self {
        let critics = CriticEnsemble::new(d_s, d_a, hidden, twin_critic, rng);
        ModelBundle {
            mask_logits: MaskLogits::new(d_s, d_a),
            reward_net: RewardNet::new(d_s, d_a, hidden, rng),
            dyn_net: DynNet::new(d_s, d_a, hidden, rng),
            actor: ActorNet::new(d_s, d_a, hidden, rng),
            target_critics: critics.clone(),
            critics,
            temp: EntropyTemp::new(d_a, init_alpha),
            d_s,
            d_a,
            hidden,
        }
    }

    /// Named tensors in a stable order.
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("cau.ss".to_string(), &self.mask_logits.logits_ss),
            ("cau.as".to_string(), &self.mask_logits.logits_as),
            ("cau.sr".to_string(), &self.mask_logits.logits_sr),
            ("cau.ar".to_string(), &self.mask_logits.logits_ar),
        ];
        push_mlp_into(&mut out, "rew", &self.reward_net.mlp);
        push_mlp_into(&mut out, "dyn", &self.dyn_net.mlp);
        push_mlp_into(&mut out, "actor", &self.actor.mlp);
        for (ci, net) in self.critics.nets.iter().enumerate() {
            push_mlp_into(&mut out, &format!("critic{ci}"), net);
        }
        for (ci, net) in self.target_critics.nets.iter().enumerate() {
            push_mlp_into(&mut out, &format!("target{ci}"), net);
        }
        out.push(("temp.log_alpha".to_string(), &self.temp.log_alpha));
        out
    }
}

fn push_mlp_into<'a>(
    out: &mut Vec<(String, &'a Tensor)>,
    prefix: &str,
    mlp: &'a MlpParams,
) {
    for (i, t) in mlp.params().into_iter().enumerate() {
        let kind = if i % 2 == 0 { "w" } else { "b" };
        out.push((format!("{prefix}.{kind}{}", i / 2), t));
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// Manifest written next to the binary blob.
#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config_hash: String,
    pub d_s: usize,
    pub d_a: usize,
    pub hidden: usize,
    pub twin_critic: bool,
    tensors: Vec<TensorEntry>,
}

/// Write `<prefix>.bin` and `<prefix>.json`.
pub fn save(bundle: &ModelBundle, config_hash: &str, prefix: &Path) -> Result<()> {
    let named = bundle.named_tensors();
    let manifest = CheckpointManifest {
        config_hash: config_hash.to_string(),
        d_s: bundle.d_s,
        d_a: bundle.d_a,
        hidden: bundle.hidden,
        twin_critic: bundle.critics.nets.len() == 2,
        tensors: named
            .iter()
            .map(|(n, t)| TensorEntry { name: n.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let mut blob = Vec::new();
    for (_, t) in &named {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(prefix.with_extension("bin"), blob)?;
    fs::write(
        prefix.with_extension("json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Load a checkpoint written by [`save`].
pub fn load(prefix: &Path) -> Result<(ModelBundle, CheckpointManifest)> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(prefix.with_extension("json"))?)?;
    let blob = fs::read(prefix.with_extension("bin"))?;
    let total: usize = manifest
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if blob.len() != total * 8 {
        return Err(Error::Serde(format!(
            "checkpoint blob holds {} bytes, manifest expects {}",
            blob.len(),
            total * 8
        )));
    }
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    let mut off = 0usize;
    for entry in &manifest.tensors {
        let n: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let mut b = [0u8; 8];
            b.copy_from_slice(&blob[(off + i) * 8..(off + i + 1) * 8]);
            data.push(f64::from_le_bytes(b));
        }
        off += n;
        tensors.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)));
    }

    let take_mlp = |tensors: &[(String, Tensor)], prefix: &str| -> Result<MlpParams> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut layer = 0usize;
        loop {
            let wname = format!("{prefix}.w{layer}");
            let bname = format!("{prefix}.b{layer}");
            let w = tensors.iter().find(|(n, _)| n == &wname);
            let b = tensors.iter().find(|(n, _)| n == &bname);
            match (w, b) {
                (Some((_, w)), Some((_, b))) => {
                    weights.push(w.clone());
                    biases.push(b.clone());
                    layer += 1;
                }
                (None, None) => break,
                _ => {
                    return Err(Error::Serde(format!(
                        "checkpoint is missing half of layer {layer} for '{prefix}'"
                    )))
                }
            }
        }
        if weights.is_empty() {
            return Err(Error::Serde(format!("checkpoint has no tensors for '{prefix}'")));
        }
        MlpParams::from_layers(weights, biases)
    };

    let find = |name: &str| -> Result<Tensor> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| Error::Serde(format!("checkpoint is missing tensor '{name}'")))
    };

    let (d_s, d_a) = (manifest.d_s, manifest.d_a);
    let mask_logits = MaskLogits {
        d_s,
        d_a,
        logits_ss: find("cau.ss")?,
        logits_as: find("cau.as")?,
        logits_sr: find("cau.sr")?,
        logits_ar: find("cau.ar")?,
    };
    let reward_net = RewardNet::from_mlp(take_mlp(&tensors, "rew")?, d_s, d_a);
    let dyn_net = DynNet::from_mlp(take_mlp(&tensors, "dyn")?, d_s, d_a);
    let actor = ActorNet { mlp: take_mlp(&tensors, "actor")?, d_a };
    let n_critics = if manifest.twin_critic { 2 } else { 1 };
    let mut critic_nets = Vec::new();
    let mut target_nets = Vec::new();
    for ci in 0..n_critics {
        critic_nets.push(take_mlp(&tensors, &format!("critic{ci}"))?);
        target_nets.push(take_mlp(&tensors, &format!("target{ci}"))?);
    }
    let temp = EntropyTemp {
        log_alpha: find("temp.log_alpha")?,
        target_entropy: -(d_a as f64),
    };
    let bundle = ModelBundle {
        mask_logits,
        reward_net,
        dyn_net,
        actor,
        critics: CriticEnsemble { nets: critic_nets },
        target_critics: CriticEnsemble { nets: target_nets },
        temp,
        d_s,
        d_a,
        hidden: manifest.hidden,
    };
    Ok((bundle, manifest))
}
