//! Command-line front end: `train`, `eval`, `sweep`, `viz`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rdlab_core::checkpoint::{self, ModelBundle};
use rdlab_core::config::{RunConfig, Variant};
use rdlab_core::env::{load_spec, EnvSpec};
use rdlab_core::masks::{compact_representation, sparsity_loss_value};
use rdlab_core::metrics::MetricsRecord;
use rdlab_core::par::{map_indexed, Parallelism};
use rdlab_core::score::{sparsity_rate, structure_score};
use rdlab_core::trainer::{evaluate, run_training};
use rdlab_core::viz::{
    emit_heatmap_svg, emit_learning_curve_svg, reward_comparison_svg, HeatmapSpec,
};
use rdlab_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "rdlab",
    about = "Causal return decomposition laboratory",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML config file or a named preset.
    Train {
        /// Path to a TOML run configuration.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Named preset: desk | desk-sparse | paper.
        #[arg(long)]
        preset: Option<String>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the variant: grd | grd_no_cr | uniform_baseline.
        #[arg(long)]
        variant: Option<String>,
        /// Output directory for metrics.csv, env.json, checkpoint, manifest.
        #[arg(long, default_value = "run-out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint and print a JSON report.
    Eval {
        /// Run directory or checkpoint prefix (without extension).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment spec JSON; defaults to env.json beside the checkpoint.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Variant the policy was trained as.
        #[arg(long, default_value = "grd")]
        variant: String,
    },
    /// Sweep one sparsity weight over a list of values and seeds.
    Sweep {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Which weight to sweep: lambda1..lambda5.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0,1e-4,1e-2.
        #[arg(long)]
        values: String,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
    /// Emit mask heatmaps and the reward-comparison plot for a checkpoint.
    Viz {
        /// Run directory or checkpoint prefix.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Configuration and usage problems exit 2; runtime failures 1.
            let code = match e.downcast_ref::<CoreError>() {
                Some(CoreError::Config(_)) | Some(CoreError::Usage(_)) | Some(CoreError::Serde(_)) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(
    config: &Option<PathBuf>,
    preset: &Option<String>,
    seed: Option<u64>,
    variant: &Option<String>,
) -> anyhow::Result<RunConfig> {
    let mut cfg = match (config, preset) {
        (Some(path), None) => RunConfig::from_file(path)?,
        (None, Some(name)) => RunConfig::preset(name, seed.unwrap_or(0))?,
        _ => {
            return Err(CoreError::config(
                "exactly one of --config or --preset is required",
            )
            .into())
        }
    };
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    if let Some(v) = variant {
        cfg.training.variant = Variant::parse(v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Resolve a checkpoint argument to (prefix, default env path).
fn resolve_checkpoint(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join("ckpt"), path.join("env.json"))
    } else {
        let env = path.parent().map(|p| p.join("env.json")).unwrap_or_default();
        (path.to_path_buf(), env)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, preset, seed, variant, out } => {
            let cfg = load_config(&config, &preset, seed, &variant)?;
            let output = run_training(&cfg, Some(&out))?;
            let last = output.records.last().expect("runs emit at least one record");
            println!(
                "done: {} env steps, final avg_return {:.4}, s_zr {:.3}, f1_sr {:.3} -> {}",
                last.step,
                last.avg_return,
                last.s_zr,
                last.f1_sr,
                out.display()
            );
            emit_learning_curve_svg(&output.records, 10, &out.join("learning_curve.svg"))?;
            Ok(())
        }
        Command::Eval { checkpoint, env, rollouts, seed, variant } => {
            let (prefix, env_default) = resolve_checkpoint(&checkpoint);
            let (bundle, manifest) = checkpoint::load(&prefix)?;
            let spec = load_spec(&env.unwrap_or(env_default))?;
            let variant = Variant::parse(&variant)?;
            let report = eval_report(&bundle, &spec, variant, rollouts, seed)?;
            let mut doc = report;
            doc["config_hash"] = serde_json::json!(manifest.config_hash);
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
        Command::Sweep { config, preset, param, values, seeds, out } => {
            let base = load_config(&config, &preset, None, &None)?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| CoreError::config(format!("bad sweep value '{v}'")))
                })
                .collect::<Result<_, _>>()?;
            let seeds: Vec<u64> = seeds
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<u64>()
                        .map_err(|_| CoreError::config(format!("bad seed '{v}'")))
                })
                .collect::<Result<_, _>>()?;
            validate_sweep_param(&param)?;
            run_sweep(&base, &param, &values, &seeds, &out)
        }
        Command::Viz { checkpoint, env, out, seed } => {
            let (prefix, env_default) = resolve_checkpoint(&checkpoint);
            let (bundle, _) = checkpoint::load(&prefix)?;
            let spec = load_spec(&env.unwrap_or(env_default))?;
            std::fs::create_dir_all(&out)?;
            emit_mask_heatmaps(&bundle, &out)?;
            emit_reward_comparison(&bundle, &spec, seed, &out)?;
            println!("wrote 4 heatmaps and reward_comparison.svg to {}", out.display());
            Ok(())
        }
    }
}

fn eval_report(
    bundle: &ModelBundle,
    spec: &EnvSpec,
    variant: Variant,
    rollouts: usize,
    seed: u64,
) -> anyhow::Result<serde_json::Value> {
    let det = bundle.mask_logits.sample_deterministic();
    let c_pi = compact_representation(
        &det.c_ss,
        &det.c_sr,
        rdlab_core::masks::Closure::OneStep,
    );
    let report = evaluate(spec, bundle, &c_pi, variant, rollouts, seed, 0)?;
    let probs = bundle.mask_logits.edge_probabilities();
    let score = structure_score(
        &probs,
        &spec.mask_ss,
        &spec.mask_as,
        &spec.mask_sr,
        &spec.mask_ar,
        0.5,
    )?;
    let mut stoch_rng = rdlab_core::rng::stream_rng(seed, rdlab_core::rng::Stream::Eval, &[1]);
    let stoch = bundle.mask_logits.sample_training_plain(1.0, &mut stoch_rng)?;
    Ok(serde_json::json!({
        "avg_return": report.avg_return,
        "rollouts": rollouts,
        "pearson_r": report.pearson_r,
        "s_zr": sparsity_rate(&det.c_sr)?,
        "s_zr_stochastic": sparsity_rate(&stoch.c_sr)?,
        "l_sp": sparsity_loss_value(&probs, &[1.0, 1.0, 1.0, 1.0, 1.0]),
        "structure": score,
        "compact_representation": c_pi,
    }))
}

fn validate_sweep_param(param: &str) -> anyhow::Result<()> {
    match param {
        "lambda1" | "lambda2" | "lambda3" | "lambda4" | "lambda5" => Ok(()),
        other => Err(CoreError::config(format!(
            "unsupported sweep parameter '{other}' (expected lambda1..lambda5)"
        ))
        .into()),
    }
}

fn with_param(base: &RunConfig, param: &str, value: f64, seed: u64) -> RunConfig {
    let mut cfg = base.clone();
    match param {
        "lambda1" => cfg.losses.lambda1 = value,
        "lambda2" => cfg.losses.lambda2 = value,
        "lambda3" => cfg.losses.lambda3 = value,
        "lambda4" => cfg.losses.lambda4 = value,
        "lambda5" => cfg.losses.lambda5 = value,
        _ => unreachable!("validated earlier"),
    }
    cfg.training.seed = seed;
    cfg
}

fn run_sweep(
    base: &RunConfig,
    param: &str,
    values: &[f64],
    seeds: &[u64],
    out: &Path,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let combos: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<rdlab_core::Result<Vec<MetricsRecord>>> =
        map_indexed(combos.len(), Parallelism::default(), |i| {
            let (value, seed) = combos[i];
            let cfg = with_param(base, param, value, seed);
            run_training(&cfg, None).map(|o| o.records)
        });

    let mut csv = format!("{param},seed,step,avg_return,s_zr,f1_sr,pearson_r\n");
    let mut finals: Vec<(f64, u64, f64, f64)> = Vec::new();
    for ((value, seed), recs) in combos.iter().zip(results) {
        let recs = recs?;
        for r in &recs {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                value, seed, r.step, r.avg_return, r.s_zr, r.f1_sr, r.pearson_r
            ));
        }
        let last = recs.last().expect("non-empty records");
        finals.push((*value, *seed, last.s_zr, last.avg_return));
    }
    std::fs::write(out.join("sweep.csv"), &csv)?;

    println!("{param:>10} | mean final s_zr (std) | mean final return (std)");
    for &v in values {
        let rows: Vec<&(f64, u64, f64, f64)> =
            finals.iter().filter(|(val, ..)| *val == v).collect();
        let n = rows.len() as f64;
        let mean_szr = rows.iter().map(|r| r.2).sum::<f64>() / n;
        let mean_ret = rows.iter().map(|r| r.3).sum::<f64>() / n;
        let std_szr =
            (rows.iter().map(|r| (r.2 - mean_szr).powi(2)).sum::<f64>() / n).sqrt();
        let std_ret =
            (rows.iter().map(|r| (r.3 - mean_ret).powi(2)).sum::<f64>() / n).sqrt();
        println!("{v:>10} | {mean_szr:.3} ({std_szr:.3})        | {mean_ret:.2} ({std_ret:.2})");
    }
    println!("rows written to {}", out.join("sweep.csv").display());
    Ok(())
}

fn emit_mask_heatmaps(bundle: &ModelBundle, out: &Path) -> anyhow::Result<()> {
    let probs = bundle.mask_logits.edge_probabilities();
    let specs = [
        (
            "mask_ss.svg",
            HeatmapSpec {
                matrix: probs.p_ss.clone(),
                row_label: "state dim (from)".into(),
                col_label: "next-state dim (to)".into(),
                title: "P(state -> state)".into(),
            },
        ),
        (
            "mask_as.svg",
            HeatmapSpec {
                matrix: probs.p_as.clone(),
                row_label: "action dim (from)".into(),
                col_label: "next-state dim (to)".into(),
                title: "P(action -> state)".into(),
            },
        ),
        (
            "mask_sr.svg",
            HeatmapSpec {
                matrix: vec![probs.p_sr.clone()],
                row_label: "reward".into(),
                col_label: "state dim".into(),
                title: "P(state -> reward)".into(),
            },
        ),
        (
            "mask_ar.svg",
            HeatmapSpec {
                matrix: vec![probs.p_ar.clone()],
                row_label: "reward".into(),
                col_label: "action dim".into(),
                title: "P(action -> reward)".into(),
            },
        ),
    ];
    for (name, spec) in specs {
        emit_heatmap_svg(&spec, &out.join(name))?;
    }
    Ok(())
}

fn emit_reward_comparison(
    bundle: &ModelBundle,
    spec: &EnvSpec,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let det = bundle.mask_logits.sample_deterministic();
    let c_pi = compact_representation(
        &det.c_ss,
        &det.c_sr,
        rdlab_core::masks::Closure::OneStep,
    );
    let report = evaluate(spec, bundle, &c_pi, Variant::Grd, 1, seed, 7)?;
    let svg = reward_comparison_svg(&report.decomposed, &report.grounded)?;
    std::fs::write(out.join("reward_comparison.svg"), svg)?;
    Ok(())
}
