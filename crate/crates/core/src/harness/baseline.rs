//! Flat continuous SAC on raw per-agent accelerations in the target world.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlacError};
use crate::flasac::{eval_seed, evaluate, Controller, EvalProtocol, EvalReport};
use crate::metrics::MetricsLog;
use crate::numerics::{Checkpoint, Matrix, Mlp, RngStream};
use crate::sac::{act_batch, ContinuousSac, ReplayBuffer, SacBatch, SacConfig};
use crate::skill::SafetyTally;
use crate::world::{World, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub hidden: Vec<usize>,
    /// Per low-level step.
    pub gamma: f64,
    pub alpha: f64,
    /// Low-level steps with uniform random actions before learning.
    pub warmup: usize,
    /// One gradient step every this many low-level steps.
    pub update_every: usize,
    pub ll_steps: u64,
    /// The summed task reward is paid on this boundary schedule.
    pub reward_every: usize,
    pub episode_ll_steps: usize,
    pub replay_capacity: usize,
    pub eval_every_ll: u64,
    pub eval: EvalProtocol,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            lr: 3e-4,
            batch_size: 128,
            tau: 0.005,
            hidden: vec![64, 64],
            gamma: 0.995,
            alpha: 0.05,
            warmup: 2_000,
            update_every: 5,
            ll_steps: 100_000,
            reward_every: 50,
            episode_ll_steps: 500,
            replay_capacity: 100_000,
            eval_every_ll: 5_000,
            eval: EvalProtocol::default(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SlacError::Config(format!("baseline.{m}")));
        if self.lr <= 0.0 || self.alpha < 0.0 {
            return bad("lr must be positive and alpha non-negative");
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return bad("gamma must lie in [0, 1) and tau in [0, 1]");
        }
        if self.batch_size == 0 || self.update_every == 0 || self.reward_every == 0 || self.episode_ll_steps == 0 {
            return bad("batch_size, update_every, reward_every and episode_ll_steps must be positive");
        }
        if self.eval_every_ll == 0 || self.replay_capacity < self.batch_size {
            return bad("eval_every_ll must be positive and replay_capacity must hold one batch");
        }
        Ok(())
    }

    fn sac(&self) -> SacConfig {
        SacConfig {
            hidden: self.hidden.clone(),
            lr: self.lr,
            gamma: self.gamma,
            tau: self.tau,
            alpha: self.alpha,
        }
    }
}

/// One record per reward boundary, aligned with Stage-2 records on `ll_steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub hl_step: u64,
    pub ll_steps: u64,
    pub return_sum: f64,
    pub success_eval: Option<f64>,
    pub eval_return: Option<f64>,
    pub safety_violations: u64,
    pub q_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

pub struct BaselineOutcome {
    pub agent: ContinuousSac,
    pub records: Vec<BaselineRecord>,
    pub evals: Vec<(u64, EvalReport)>,
    pub ll_steps: u64,
    pub safety_violations: u64,
}

#[derive(Clone, Debug)]
struct FlatTransition {
    obs: Vec<f64>,
    act: Vec<f64>,
    reward: f64,
    next_obs: Vec<f64>,
    done: bool,
}

fn flat_obs(world: &mut World, prev_action: &[f64]) -> Vec<f64> {
    let mut o = world.task_obs();
    o.extend_from_slice(prev_action);
    o
}

/// Greedy (`tanh` of the mean) flat policy.
pub struct FlatController<'a> {
    pub actor: &'a Mlp,
    act_dim: usize,
    prev_action: Vec<f64>,
}

impl<'a> FlatController<'a> {
    pub fn new(actor: &'a Mlp, act_dim: usize) -> Self {
        FlatController {
            actor,
            act_dim,
            prev_action: vec![0.0; act_dim],
        }
    }
}

impl Controller for FlatController<'_> {
    fn reset(&mut self) {
        self.prev_action.iter_mut().for_each(|a| *a = 0.0);
    }

    fn action(&mut self, world: &mut World, _t: usize) -> Result<Vec<f64>> {
        let o = flat_obs(world, &self.prev_action);
        let a = act_batch(self.actor, self.act_dim, &Matrix::row_vector(&o), None)?.data;
        self.prev_action = a.clone();
        Ok(a)
    }
}

pub const FLAT_POLICY_KIND: &str = "flat_policy";

/// Actor-only checkpoint of a flat policy, tagged with the world it acts in.
pub fn flat_policy_checkpoint(actor: &Mlp, world_config: &WorldConfig) -> Checkpoint {
    let mut c = Checkpoint::new();
    c.set_meta("kind", FLAT_POLICY_KIND);
    c.set_meta("act_dim", world_config.action_dim() as u64);
    c.set_meta("world_fingerprint", world_config.compat_fingerprint());
    c.push_mlp("actor", actor);
    c
}

/// Load a flat actor, refusing one trained for a different world.
pub fn load_flat_policy(c: &Checkpoint, world_config: &WorldConfig) -> Result<(Mlp, usize)> {
    if c.meta_str("kind")? != FLAT_POLICY_KIND {
        return Err(SlacError::Checkpoint(format!(
            "expected a {FLAT_POLICY_KIND} checkpoint, found `{}`",
            c.meta_str("kind")?
        )));
    }
    if c.meta_str("world_fingerprint")? != world_config.compat_fingerprint() {
        return Err(SlacError::Compatibility("flat policy was trained for a different world".into()));
    }
    let act_dim = c.meta_u64("act_dim")? as usize;
    let actor = c.mlp("actor")?;
    if actor.input_dim() != world_config.task_obs_dim() + act_dim || actor.output_dim() != 2 * act_dim {
        return Err(SlacError::Checkpoint("flat actor shape disagrees with its world".into()));
    }
    Ok((actor, act_dim))
}

pub fn run_baseline_flat(
    config: &BaselineConfig,
    world_config: &WorldConfig,
    seed: u64,
    metrics: &mut MetricsLog,
) -> Result<BaselineOutcome> {
    config.validate()?;
    world_config.validate()?;
    let root = RngStream::new(seed, "baseline");
    let act_dim = world_config.action_dim();
    let obs_dim = world_config.task_obs_dim() + act_dim;
    let mut agent = ContinuousSac::new(obs_dim, act_dim, config.sac(), &mut root.child("init"));
    let mut world = World::new(world_config.clone(), root.child("world"))?;
    let mut act_rng = root.child("act");
    let mut upd_rng = root.child("update");
    let mut buffer: ReplayBuffer<FlatTransition> = ReplayBuffer::new(config.replay_capacity);

    let mut prev_action = vec![0.0; act_dim];
    let mut obs = flat_obs(&mut world, &prev_action);
    let mut tally = SafetyTally::default();
    let mut boundary_violations = 0u64;
    let mut t_in_episode = 0usize;
    let mut last_diag = None;
    let mut records = Vec::new();
    let mut evals = Vec::new();
    for ll in 1..=config.ll_steps {
        let a = if buffer.len() < config.warmup {
            (0..act_dim).map(|_| act_rng.uniform_range(-1.0, 1.0)).collect()
        } else {
            agent.act(&obs, Some(&mut act_rng))?
        };
        let sig = world.step(&a);
        tally.record(&sig);
        boundary_violations += sig.any() as u64;
        t_in_episode += 1;
        let boundary = t_in_episode % config.reward_every == 0;
        let reward = if boundary { world.task_reward().sum() } else { 0.0 };
        let done = t_in_episode >= config.episode_ll_steps;
        prev_action = a.clone();
        let next_obs = flat_obs(&mut world, &prev_action);
        buffer.push(FlatTransition {
            obs: std::mem::take(&mut obs),
            act: a,
            reward,
            next_obs: next_obs.clone(),
            done,
        });
        if done {
            world.reset()?;
            prev_action.iter_mut().for_each(|v| *v = 0.0);
            t_in_episode = 0;
            obs = flat_obs(&mut world, &prev_action);
        } else {
            obs = next_obs;
        }

        if buffer.len() >= config.warmup.max(config.batch_size) && ll % config.update_every as u64 == 0 {
            let batch = buffer.sample(config.batch_size, &mut upd_rng)?;
            let rows = |f: fn(&FlatTransition) -> &[f64]| Matrix::from_rows(&batch.iter().map(|t| f(t)).collect::<Vec<_>>());
            let sb = SacBatch {
                obs: rows(|t| &t.obs)?,
                act: rows(|t| &t.act)?,
                reward: batch.iter().map(|t| t.reward).collect(),
                next_obs: rows(|t| &t.next_obs)?,
                done: batch.iter().map(|t| t.done).collect(),
            };
            let d = agent.update(&sb, &mut upd_rng).map_err(|e| match e {
                SlacError::Numerical(m) => SlacError::Numerical(format!("baseline diverged at ll step {ll}: {m}")),
                other => other,
            })?;
            last_diag = Some(d);
        }

        if ll % config.reward_every as u64 == 0 || ll == config.ll_steps {
            let mut report = None;
            if ll % config.eval_every_ll == 0 || ll == config.ll_steps {
                let r = evaluate(&mut FlatController::new(&agent.actor, act_dim), world_config, &config.eval, eval_seed(seed))?;
                evals.push((ll, r.clone()));
                report = Some(r);
            }
            let record = BaselineRecord {
                hl_step: ll.div_ceil(config.reward_every as u64),
                ll_steps: ll,
                return_sum: reward,
                success_eval: report.as_ref().map(|r| r.success_rate),
                eval_return: report.as_ref().map(|r| r.mean_return),
                safety_violations: std::mem::take(&mut boundary_violations),
                q_loss: last_diag.map(|d| d.q_loss),
                actor_loss: last_diag.map(|d| d.actor_loss),
            };
            metrics.write(&record)?;
            records.push(record);
        }
    }
    Ok(BaselineOutcome {
        agent,
        records,
        evals,
        ll_steps: tally.steps,
        safety_violations: tally.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BaselineConfig {
        BaselineConfig {
            hidden: vec![8],
            batch_size: 8,
            warmup: 16,
            ll_steps: 60,
            reward_every: 10,
            episode_ll_steps: 30,
            eval_every_ll: 30,
            eval: EvalProtocol {
                episodes: 1,
                episode_ll_steps: 20,
                reward_every: 10,
            },
            ..BaselineConfig::default()
        }
    }

    #[test]
    fn accounting_and_determinism() {
        let w = WorldConfig::real(2);
        let run = || {
            let mut log = MetricsLog::memory();
            let out = run_baseline_flat(&tiny(), &w, 3, &mut log).unwrap();
            (log.lines().to_vec(), out)
        };
        let (a, out) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert_eq!(out.ll_steps, 60);
        assert_eq!(out.records.len(), 6);
        assert_eq!(out.evals.iter().map(|e| e.0).collect::<Vec<_>>(), vec![30, 60]);
        let logged: u64 = out.records.iter().map(|r| r.safety_violations).sum();
        assert_eq!(logged, out.safety_violations);
    }

    #[test]
    fn zero_steps_gives_an_evaluable_policy() {
        let c = BaselineConfig { ll_steps: 0, ..tiny() };
        let w = WorldConfig::real(2);
        let out = run_baseline_flat(&c, &w, 0, &mut MetricsLog::memory()).unwrap();
        assert!(out.records.is_empty());
        let r = evaluate(&mut FlatController::new(&out.agent.actor, 4), &w, &c.eval, 0).unwrap();
        assert_eq!(r.ll_steps, 20);
    }

    #[test]
    fn flat_checkpoint_round_trip_and_refusal() {
        let w = WorldConfig::real(2);
        let out = run_baseline_flat(&BaselineConfig { ll_steps: 0, ..tiny() }, &w, 0, &mut MetricsLog::memory()).unwrap();
        let c = Checkpoint::from_bytes(&flat_policy_checkpoint(&out.agent.actor, &w).to_bytes()).unwrap();
        let (actor, act_dim) = load_flat_policy(&c, &w).unwrap();
        assert_eq!((actor, act_dim), (out.agent.actor.clone(), 4));
        assert!(matches!(load_flat_policy(&c, &WorldConfig::real(3)), Err(SlacError::Compatibility(_))));
    }
}
