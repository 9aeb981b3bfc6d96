use serde::{Deserialize, Serialize};

use super::adjacency::AdjacencyMatrix;
use super::critic::FactoredCritic;
use super::env::TaskEnv;
use super::eval::{evaluate, EvalProtocol, EvalReport, LatentController};
use super::policy::{SelectMode, TaskPolicy};
use crate::error::{Result, SlacError};
use crate::metrics::MetricsLog;
use crate::numerics::{Matrix, RngStream};
use crate::sac::ReplayBuffer;
use crate::skill::{sample_skill, LatentAction, LatentDecoder};
use crate::world::WorldConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    pub lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub hidden: Vec<usize>,
    /// Update rounds per high-level step.
    pub utd: usize,
    pub alpha: f64,
    /// High-level samples collected with uniform random codes before learning.
    pub warmup: usize,
    pub gumbel_tau: f64,
    pub gamma: f64,
    pub steps_per_skill: usize,
    /// High-level steps per episode.
    pub episode_len: usize,
    pub hl_steps: usize,
    pub replay_capacity: usize,
    /// Rows of 0/1, one per reward term; identity when absent.
    pub adjacency: Option<Vec<Vec<u8>>>,
    /// Per-term heads; when false a single head learns the summed reward.
    pub decompose: bool,
    /// Greedy evaluation period in low-level steps.
    pub eval_every_ll: u64,
    pub eval: EvalProtocol,
    /// Stop early once this many low-level steps have been spent.
    pub max_ll_steps: Option<u64>,
    /// Stop early once a greedy evaluation reaches this return.
    pub stop_at_return: Option<f64>,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            lr: 4e-4,
            batch_size: 64,
            tau: 0.05,
            hidden: vec![256, 256],
            utd: 10,
            alpha: 0.1,
            warmup: 60,
            gumbel_tau: 1.0,
            gamma: 0.99,
            steps_per_skill: 50,
            episode_len: 10,
            hl_steps: 2000,
            replay_capacity: 1_000_000,
            adjacency: None,
            decompose: true,
            eval_every_ll: 5000,
            eval: EvalProtocol::default(),
            max_ll_steps: None,
            stop_at_return: None,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SlacError::Config(format!("stage2.{m}")));
        if self.utd == 0 {
            return bad("utd must be at least 1".into());
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch_size must be positive and no larger than replay_capacity".into());
        }
        if !(self.gumbel_tau > 0.0) {
            return bad(format!("gumbel_tau must be positive, got {}", self.gumbel_tau));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return bad("gamma must lie in [0, 1) and tau in [0, 1]".into());
        }
        if !(self.lr > 0.0) || self.alpha < 0.0 {
            return bad("lr must be positive and alpha non-negative".into());
        }
        if self.steps_per_skill == 0 || self.episode_len == 0 || self.eval_every_ll == 0 {
            return bad("steps_per_skill, episode_len and eval_every_ll must be positive".into());
        }
        Ok(())
    }

    /// The matrix the critic heads are built from, for `n` latent dimensions.
    pub fn resolve_adjacency(&self, n: usize) -> Result<AdjacencyMatrix> {
        if !self.decompose {
            return Ok(AdjacencyMatrix::all_ones(1, n));
        }
        match &self.adjacency {
            None => Ok(AdjacencyMatrix::identity(n)),
            Some(rows) => AdjacencyMatrix::from_rows_checked(rows.clone(), n, n),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TaskTransition {
    pub obs: Vec<f64>,
    pub z: LatentAction,
    /// One entry per critic head.
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Record {
    pub hl_step: u64,
    pub ll_steps: u64,
    pub return_sum: f64,
    pub per_term_returns: Vec<f64>,
    pub success_eval: Option<f64>,
    pub eval_return: Option<f64>,
    pub safety_violations: u64,
    pub policy_entropy: Option<f64>,
    pub q_losses: Vec<f64>,
    pub actor_loss: Option<f64>,
}

pub struct Stage2Outcome {
    pub policy: TaskPolicy,
    pub adjacency: AdjacencyMatrix,
    pub records: Vec<Stage2Record>,
    /// `(ll_steps, report)` for every greedy evaluation.
    pub evals: Vec<(u64, EvalReport)>,
    pub ll_steps: u64,
    pub safety_violations: u64,
}

#[derive(Clone, Debug, Default)]
struct UpdateDiagnostics {
    q_losses: Vec<f64>,
    actor_loss: f64,
    entropy: f64,
}

/// Per-head targets `r_i + gamma (1 - done) (min Qbar_i(o', z') - (alpha/m) log pi(z'|o'))`
/// with `z'` drawn from the current policy.
pub fn critic_targets(
    batch: &[&TaskTransition],
    critic: &FactoredCritic,
    policy: &TaskPolicy,
    gamma: f64,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    let next = Matrix::from_rows(&batch.iter().map(|t| t.next_obs.as_slice()).collect::<Vec<_>>())?;
    let logits = policy.logits(&next)?;
    let mut z_next = Vec::with_capacity(batch.len());
    let mut log_pi = Vec::with_capacity(batch.len());
    for b in 0..batch.len() {
        let z = policy.select_from_logits(logits.row(b), SelectMode::Stochastic, rng);
        log_pi.push(policy.log_prob(logits.row(b), &z));
        z_next.push(z.one_hot());
    }
    let q_next = critic.target_values(&next, &Matrix::from_rows(&z_next)?)?;
    let m = critic.m() as f64;
    Ok((0..critic.m())
        .map(|i| {
            batch
                .iter()
                .enumerate()
                .map(|(b, t)| {
                    let cont = if t.done { 0.0 } else { 1.0 };
                    t.reward[i] + gamma * cont * (q_next[i][b] - alpha / m * log_pi[b])
                })
                .collect()
        })
        .collect())
}

fn update_round(
    buffer: &ReplayBuffer<TaskTransition>,
    critic: &mut FactoredCritic,
    policy: &mut TaskPolicy,
    config: &Stage2Config,
    rng: &mut RngStream,
) -> Result<UpdateDiagnostics> {
    let batch = buffer.sample(config.batch_size, rng)?;
    debug_assert_eq!(batch.len(), config.batch_size);
    let y = critic_targets(&batch, critic, policy, config.gamma, config.alpha, rng)?;
    let obs = Matrix::from_rows(&batch.iter().map(|t| t.obs.as_slice()).collect::<Vec<_>>())?;
    let z = Matrix::from_rows(&batch.iter().map(|t| t.z.one_hot()).collect::<Vec<_>>())?;
    let q_losses = critic.regress(&obs, &z, &y)?;
    let p = policy.update(&obs, critic, config.alpha, config.gumbel_tau, rng)?;
    critic.soft_update(config.tau);
    Ok(UpdateDiagnostics {
        q_losses,
        actor_loss: p.loss,
        entropy: p.entropy,
    })
}

pub fn evaluate_policy(
    policy: &TaskPolicy,
    decoder: &LatentDecoder,
    world_config: &WorldConfig,
    steps_per_skill: usize,
    protocol: &EvalProtocol,
    seed: u64,
) -> Result<EvalReport> {
    decoder.check_compatible(world_config)?;
    let mut ctl = LatentController::new(policy, decoder, steps_per_skill);
    evaluate(&mut ctl, world_config, protocol, seed)
}

/// Seed of the fixed evaluation episodes for a training seed.
pub fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_add(1_000_003)
}

/// Factorized latent-action SAC in the target world over a frozen decoder.
pub fn train_task(
    config: &Stage2Config,
    decoder: &LatentDecoder,
    world_config: &WorldConfig,
    seed: u64,
    metrics: &mut MetricsLog,
) -> Result<Stage2Outcome> {
    config.validate()?;
    world_config.validate()?;
    let root = RngStream::new(seed, "stage2");
    let mut env = TaskEnv::new(
        world_config.clone(),
        decoder,
        config.steps_per_skill,
        config.episode_len,
        root.child("world"),
    )?;
    let n = decoder.n_agents;
    let k = decoder.k;
    let adjacency = config.resolve_adjacency(n)?;
    let obs_dim = world_config.task_obs_dim();
    let mut init_rng = root.child("init");
    let mut policy = TaskPolicy::new(obs_dim, n, k, &config.hidden, config.lr, &mut init_rng);
    let mut critic = FactoredCritic::new(obs_dim, k, adjacency.clone(), &config.hidden, config.lr, &mut init_rng);
    let mut act_rng = root.child("act");
    let mut upd_rng = root.child("update");
    let mut buffer: ReplayBuffer<TaskTransition> = ReplayBuffer::new(config.replay_capacity);

    let mut obs = env.observe();
    let mut ll_steps = 0u64;
    let mut violations = 0u64;
    let mut records = Vec::with_capacity(config.hl_steps);
    let mut evals = Vec::new();
    let mut next_eval = config.eval_every_ll;
    for hl in 0..config.hl_steps {
        if config.max_ll_steps.is_some_and(|m| ll_steps >= m) {
            break;
        }
        let z = if buffer.len() < config.warmup {
            sample_skill(n, k, &mut act_rng)
        } else {
            policy.select(&obs, SelectMode::Stochastic, &mut act_rng)?
        };
        let res = env.rollout_skill(&z)?;
        ll_steps += res.safety.steps;
        violations += res.safety.violations;
        let reward = if config.decompose {
            res.reward.0.clone()
        } else {
            vec![res.reward.sum()]
        };
        buffer.push(TaskTransition {
            obs: std::mem::take(&mut obs),
            z,
            reward,
            next_obs: res.next_obs.clone(),
            done: res.done,
        });
        if res.done {
            env.reset()?;
            obs = env.observe();
        } else {
            obs = res.next_obs;
        }

        let mut diag: Option<UpdateDiagnostics> = None;
        if buffer.len() >= config.warmup.max(1) {
            let mut acc = UpdateDiagnostics {
                q_losses: vec![0.0; critic.m()],
                ..Default::default()
            };
            for _ in 0..config.utd {
                let d = update_round(&buffer, &mut critic, &mut policy, config, &mut upd_rng).map_err(|e| match e {
                    SlacError::Numerical(m) => SlacError::Numerical(format!("stage 2 diverged at hl step {hl}: {m}")),
                    other => other,
                })?;
                for (a, q) in acc.q_losses.iter_mut().zip(&d.q_losses) {
                    *a += q / config.utd as f64;
                }
                acc.actor_loss += d.actor_loss / config.utd as f64;
                acc.entropy += d.entropy / config.utd as f64;
            }
            diag = Some(acc);
        }

        let last = hl + 1 == config.hl_steps || config.max_ll_steps.is_some_and(|m| ll_steps >= m);
        let mut report = None;
        if ll_steps >= next_eval || last {
            while next_eval <= ll_steps {
                next_eval += config.eval_every_ll;
            }
            let r = evaluate_policy(
                &policy,
                decoder,
                world_config,
                config.steps_per_skill,
                &config.eval,
                eval_seed(seed),
            )?;
            evals.push((ll_steps, r.clone()));
            report = Some(r);
        }
        let record = Stage2Record {
            hl_step: hl as u64 + 1,
            ll_steps,
            return_sum: res.reward.sum(),
            per_term_returns: res.reward.0.clone(),
            success_eval: report.as_ref().map(|r| r.success_rate),
            eval_return: report.as_ref().map(|r| r.mean_return),
            safety_violations: res.safety.violations,
            policy_entropy: diag.as_ref().map(|d| d.entropy),
            q_losses: diag.as_ref().map(|d| d.q_losses.clone()).unwrap_or_default(),
            actor_loss: diag.as_ref().map(|d| d.actor_loss),
        };
        metrics.write(&record)?;
        records.push(record);
        if let (Some(stop), Some(r)) = (config.stop_at_return, report.as_ref()) {
            if r.mean_return >= stop {
                break;
            }
        }
    }
    Ok(Stage2Outcome {
        policy,
        adjacency,
        records,
        evals,
        ll_steps,
        safety_violations: violations,
    })
}
