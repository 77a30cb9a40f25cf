use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::spec::EnvSpec;
use super::Trajectory;
use crate::Result;

/// Write an environment definition as pretty JSON so experiments are
/// replayable from disk.
pub fn save_spec(spec: &EnvSpec, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(spec)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_spec(path: &Path) -> Result<EnvSpec> {
    let text = fs::read_to_string(path)?;
    let spec: EnvSpec = serde_json::from_str(&text)?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct StepRecord<'a> {
    step: usize,
    state: &'a [f64],
    action: &'a [f64],
    observed: f64,
    oracle_reward: f64,
}

/// Dump a trajectory as line-delimited JSON records: step index, state,
/// action, observed reward and the oracle reward.
pub fn dump_trajectory(traj: &Trajectory, spec: &EnvSpec, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for t in 0..traj.len() {
        let rec = StepRecord {
            step: t + 1,
            state: &traj.states[t],
            action: &traj.actions[t],
            observed: traj.observed[t],
            oracle_reward: spec.oracle_reward(&traj.states[t], &traj.actions[t]),
        };
        let line = serde_json::to_string(&rec)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{chain_preset, rollout};
    use crate::rng::derive_rng;

    #[test]
    fn spec_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.json");
        let spec = chain_preset(4);
        save_spec(&spec, &path).unwrap();
        let loaded = load_spec(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&spec).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
    }

    #[test]
    fn trajectory_dump_has_one_line_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.jsonl");
        let spec = chain_preset(4);
        let mut rng = derive_rng(0, &[9]);
        let mut policy = |_: &[f64]| vec![0.1];
        let traj = rollout(&spec, &mut policy, &mut rng).unwrap();
        dump_trajectory(&traj, &spec, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), traj.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["step"], 1);
        assert!(first["state"].is_array());
    }
}
