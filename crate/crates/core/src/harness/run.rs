//! Stage dispatch and on-disk artifacts.
//!
//! Every run directory receives `resolved.toml` (the fully materialized
//! config), `metrics.jsonl`, a `summary.json` and the stage's checkpoint.
//! A numerical failure leaves `failure.json` behind before the error is
//! returned.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::baseline::{flat_policy_checkpoint, load_flat_policy, run_baseline_flat, FlatController, FLAT_POLICY_KIND};
use super::config::{ExperimentConfig, Stage};
use super::tabular::{fit_factored_critic, value_iteration, TabularMdp};
use crate::error::{Result, SlacError};
use crate::flasac::{eval_seed, evaluate, evaluate_policy, train_task, TaskPolicy, POLICY_KIND};
use crate::metrics::MetricsLog;
use crate::numerics::{Checkpoint, RngStream};
use crate::skill::{probe_decoder, train_decoder, LatentDecoder};
use crate::world::WorldConfig;

pub const RESOLVED_FILE: &str = "resolved.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FAILURE_FILE: &str = "failure.json";
pub const DECODER_FILE: &str = "decoder.ckpt";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const FLAT_POLICY_FILE: &str = "flat_policy.ckpt";

/// What a finished run left on disk.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub stage: Stage,
    pub outdir: PathBuf,
    pub summary: serde_json::Value,
}

impl RunReport {
    pub fn metrics_path(&self) -> PathBuf {
        self.outdir.join(METRICS_FILE)
    }
}

/// Sizes of the oracle MDPs, cycled: `(agents, substates per agent, K)`.
/// Each has at most 16 states and 64 joint actions.
pub const ORACLE_SHAPES: [(usize, usize, usize); 3] = [(2, 4, 4), (3, 2, 3), (4, 2, 2)];

#[derive(Clone, Debug, Serialize)]
pub struct OracleRecord {
    pub mdp: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub terms: usize,
    /// Sup-norm gap between summed per-term values and the monolithic value.
    pub decomposition_error: f64,
    /// Sup-norm gap between the fitted critic heads and the per-term values.
    pub critic_error: f64,
}

/// Execute a resolved experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let stage = config.stage()?;
    std::fs::create_dir_all(&config.outdir)?;
    std::fs::write(config.outdir.join(RESOLVED_FILE), config.to_toml())?;
    let mut metrics = MetricsLog::to_file(&config.outdir.join(METRICS_FILE))?.with_schema(&format!("{}.v1", stage.name()));
    let result = match stage {
        Stage::Stage1 => run_stage1(config, &mut metrics),
        Stage::Stage2 => run_stage2(config, &mut metrics),
        Stage::Baseline => run_baseline(config, &mut metrics),
        Stage::Eval => run_eval(config, &mut metrics),
        Stage::Oracle => run_oracle(config, &mut metrics),
    };
    match result {
        Ok(summary) => {
            write_json(&config.outdir.join(SUMMARY_FILE), &summary)?;
            Ok(RunReport {
                stage,
                outdir: config.outdir.clone(),
                summary,
            })
        }
        Err(e) => {
            if matches!(e, SlacError::Numerical(_)) {
                let dump = json!({
                    "stage": stage.name(),
                    "seed": config.seed,
                    "error": e.to_string(),
                    "records_written": metrics.lines().len(),
                    "last_record": metrics.lines().last(),
                });
                // Best effort: the numerical error is what the caller must see.
                let _ = write_json(&config.outdir.join(FAILURE_FILE), &dump);
            }
            Err(e)
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn load_decoder(config: &ExperimentConfig) -> Result<LatentDecoder> {
    let path = config.decoder.as_ref().ok_or_else(|| SlacError::config("no decoder given"))?;
    LatentDecoder::from_checkpoint(&Checkpoint::load(path)?)
}

fn run_stage1(config: &ExperimentConfig, metrics: &mut MetricsLog) -> Result<serde_json::Value> {
    let world = config.world_config()?;
    let out = train_decoder(&config.stage1, &world, config.seed, metrics)?;
    out.decoder.to_checkpoint().save(&config.outdir.join(DECODER_FILE))?;
    let mut summary = json!({
        "epochs": out.records.len(),
        "env_steps": out.records.last().map_or(0, |r| r.env_steps),
        "final": out.records.last(),
    });
    if config.stage1_probe {
        let target = WorldConfig::real(world.n_agents);
        let p = probe_decoder(&out.decoder, &target, &config.probe, config.seed)?;
        summary["probe"] = serde_json::to_value(&p).expect("probe results serialize");
    }
    Ok(summary)
}

fn run_stage2(config: &ExperimentConfig, metrics: &mut MetricsLog) -> Result<serde_json::Value> {
    let world = config.world_config()?;
    let decoder = load_decoder(config)?;
    decoder.check_compatible(&world)?;
    let out = train_task(&config.stage2, &decoder, &world, config.seed, metrics)?;
    out.policy
        .to_checkpoint(world.n_landmarks(), &out.adjacency.to_rows())
        .save(&config.outdir.join(POLICY_FILE))?;
    let last = out.evals.last().map(|e| e.1.clone());
    Ok(json!({
        "hl_steps": out.records.len(),
        "ll_steps": out.ll_steps,
        "safety_violations": out.safety_violations,
        "final_success_rate": last.as_ref().map(|r| r.success_rate),
        "final_eval_return": last.as_ref().map(|r| r.mean_return),
        "evals": out.evals.iter().map(|(ll, r)| json!({"ll_steps": ll, "report": r})).collect::<Vec<_>>(),
    }))
}

fn run_baseline(config: &ExperimentConfig, metrics: &mut MetricsLog) -> Result<serde_json::Value> {
    let world = config.world_config()?;
    let out = run_baseline_flat(&config.baseline, &world, config.seed, metrics)?;
    flat_policy_checkpoint(&out.agent.actor, &world).save(&config.outdir.join(FLAT_POLICY_FILE))?;
    let last = out.evals.last().map(|e| e.1.clone());
    Ok(json!({
        "ll_steps": out.ll_steps,
        "safety_violations": out.safety_violations,
        "final_success_rate": last.as_ref().map(|r| r.success_rate),
        "final_eval_return": last.as_ref().map(|r| r.mean_return),
        "evals": out.evals.iter().map(|(ll, r)| json!({"ll_steps": ll, "report": r})).collect::<Vec<_>>(),
    }))
}

/// Greedy evaluation of a task policy (with its decoder) or a flat policy.
fn run_eval(config: &ExperimentConfig, metrics: &mut MetricsLog) -> Result<serde_json::Value> {
    let world = config.world_config()?;
    let path = config.policy.as_ref().ok_or_else(|| SlacError::config("no policy given"))?;
    let ckpt = Checkpoint::load(path)?;
    let seed = eval_seed(config.seed);
    let report = match ckpt.meta_str("kind")? {
        k if k == POLICY_KIND => {
            let decoder = load_decoder(config)?;
            let policy = TaskPolicy::from_checkpoint(&ckpt, config.stage2.lr)?;
            if policy.n != decoder.n_agents || policy.k != decoder.k || policy.obs_dim() != world.task_obs_dim() {
                return Err(SlacError::Compatibility("policy and decoder disagree on the latent space".into()));
            }
            evaluate_policy(&policy, &decoder, &world, config.stage2.steps_per_skill, &config.stage2.eval, seed)?
        }
        k if k == FLAT_POLICY_KIND => {
            let (actor, act_dim) = load_flat_policy(&ckpt, &world)?;
            evaluate(&mut FlatController::new(&actor, act_dim), &world, &config.stage2.eval, seed)?
        }
        other => return Err(SlacError::Checkpoint(format!("cannot evaluate a `{other}` checkpoint"))),
    };
    metrics.write(&report)?;
    Ok(serde_json::to_value(&report).expect("reports serialize"))
}

fn run_oracle(config: &ExperimentConfig, metrics: &mut MetricsLog) -> Result<serde_json::Value> {
    let o = &config.oracle;
    let root = RngStream::new(config.seed, "oracle");
    let mut worst_decomp: f64 = 0.0;
    let mut worst_critic: f64 = 0.0;
    for i in 0..o.mdps {
        let (n, sub, k) = ORACLE_SHAPES[i % ORACLE_SHAPES.len()];
        let mut rng = root.child(&format!("mdp/{i}"));
        let mdp = TabularMdp::random_factored(n, sub, k, o.gamma, &mut rng);
        let record = check_mdp(i, &mdp, config, &mut rng)?;
        worst_decomp = worst_decomp.max(record.decomposition_error);
        worst_critic = worst_critic.max(record.critic_error);
        metrics.write(&record)?;
    }
    let summary = json!({
        "mdps": o.mdps,
        "max_decomposition_error": worst_decomp,
        "max_critic_error": worst_critic,
    });
    if worst_decomp >= o.decomp_tol || worst_critic >= o.critic_tol {
        return Err(SlacError::numerical(format!(
            "oracle mismatch: decomposition {worst_decomp:.3e} (tol {:.0e}), critic {worst_critic:.3e} (tol {:.0e})",
            o.decomp_tol, o.critic_tol
        )));
    }
    Ok(summary)
}

/// Compare one MDP's per-term, monolithic and fitted values.
pub fn check_mdp(index: usize, mdp: &TabularMdp, config: &ExperimentConfig, rng: &mut RngStream) -> Result<OracleRecord> {
    let q = value_iteration(mdp, config.oracle.tol);
    let mut decomposition_error: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions() {
            let sum: f64 = q.per_term.iter().map(|qi| qi[s][a]).sum();
            decomposition_error = decomposition_error.max((sum - q.summed[s][a]).abs());
        }
    }
    let fitted = fit_factored_critic(mdp, &config.oracle.fit(), rng)?;
    let critic_error = fitted
        .iter()
        .flatten()
        .flatten()
        .zip(q.per_term.iter().flatten().flatten())
        .map(|(f, t)| (f - t).abs())
        .fold(0.0, f64::max);
    Ok(OracleRecord {
        mdp: index,
        n_states: mdp.n_states,
        n_actions: mdp.n_actions(),
        terms: mdp.m(),
        decomposition_error,
        critic_error,
    })
}
