use serde::{Deserialize, Serialize};

use super::decoder::LatentDecoder;
use super::discriminator::{DisentangleDiscriminator, FixedDiscriminator, ScoreMode};
use super::latent::{sample_skill, LatentAction};
use super::reward::{latent_reward, region_shaping, safety_reward, skill_reward, SafetyWeights};
use crate::error::{Result, SlacError};
use crate::metrics::MetricsLog;
use crate::numerics::{Matrix, RngStream};
use crate::sac::{ContinuousSac, ReplayBuffer, SacBatch, SacConfig, SacDiagnostics};
use crate::world::{quantize_region, region_center, SafetySignals, World, WorldConfig, WorldState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub lr: f64,
    /// When set, the step size decays geometrically from `lr` to this value
    /// over the epochs.
    pub lr_final: Option<f64>,
    pub batch_size: usize,
    pub tau: f64,
    pub hidden: Vec<usize>,
    /// Gradient rounds per vectorized environment step.
    pub n_updates: usize,
    pub n_envs: usize,
    pub alpha: f64,
    /// Transitions collected with uniform random actions before learning starts.
    pub warmup: usize,
    pub lambda: f64,
    pub safety: SafetyWeights,
    pub steps_per_skill: usize,
    pub gamma: f64,
    pub k: usize,
    pub p_hit: f64,
    pub epochs: usize,
    pub replay_capacity: usize,
    /// Skills executed back to back before an environment is reset.
    pub skills_per_episode: usize,
    /// Weight of the pull toward the commanded region's center.
    pub shaping_coef: f64,
    pub score_mode: ScoreMode,
    pub disc_hidden: Vec<usize>,
    pub disc_lr: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            lr: 1e-4,
            lr_final: None,
            batch_size: 1024,
            tau: 0.01,
            hidden: vec![1024, 1024],
            n_updates: 2,
            n_envs: 16,
            alpha: 0.0,
            warmup: 24_000,
            lambda: 0.25,
            safety: SafetyWeights::default(),
            steps_per_skill: 50,
            gamma: 0.99,
            k: 4,
            p_hit: 0.97,
            epochs: 1250,
            replay_capacity: 1_000_000,
            skills_per_episode: 4,
            shaping_coef: 0.5,
            score_mode: ScoreMode::Log,
            disc_hidden: vec![64],
            disc_lr: 1e-4,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SlacError::Config(format!("stage1.{m}")));
        if !(0.0..1.0).contains(&self.lambda) {
            return bad(format!("lambda must satisfy 0 <= lambda < 1, got {}", self.lambda));
        }
        if !(self.lr > 0.0 && self.disc_lr > 0.0 && self.lr_final.is_none_or(|l| l > 0.0)) {
            return bad("lr, lr_final and disc_lr must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..1.0).contains(&self.gamma) {
            return bad("tau must lie in [0, 1] and gamma in [0, 1)".into());
        }
        if self.alpha < 0.0 || self.shaping_coef < 0.0 {
            return bad("alpha and shaping_coef must be non-negative".into());
        }
        if self.batch_size == 0 || self.n_envs == 0 || self.steps_per_skill == 0 || self.skills_per_episode == 0 {
            return bad("batch_size, n_envs, steps_per_skill and skills_per_episode must be positive".into());
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity must hold at least one batch".into());
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_final {
            Some(end) if self.epochs > 1 => {
                self.lr * (end / self.lr).powf(epoch as f64 / (self.epochs - 1) as f64)
            }
            _ => self.lr,
        }
    }

    pub fn samples_per_epoch(&self) -> usize {
        self.n_envs * self.steps_per_skill
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

/// A transition with the raw post-step state so rewards can be recomputed
/// against the current discriminators.
#[derive(Clone, Debug)]
pub struct SkillTransition {
    pub o_dec: Vec<f64>,
    pub action: Vec<f64>,
    pub prev_action: Vec<f64>,
    pub z: LatentAction,
    pub next_o_dec: Vec<f64>,
    pub next_state: WorldState,
    pub signals: SafetySignals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Record {
    pub epoch: u64,
    pub env_steps: u64,
    pub skill_reward_mean: f64,
    pub safety_reward_mean: f64,
    pub region_match_acc: f64,
    pub disentangle_probe_acc: Option<f64>,
    pub collision_rate: f64,
    pub center_dist_mean: f64,
    pub updates: u64,
    pub q_loss: f64,
    pub actor_loss: f64,
    /// Mean log-density of the decoder's own samples; tracks policy spread.
    pub log_prob: f64,
    pub psi_loss: f64,
}

pub struct Stage1Outcome {
    pub decoder: LatentDecoder,
    pub records: Vec<Stage1Record>,
}

/// Reward terms every decoder update and diagnostic is built from.
pub struct RewardModel<'a> {
    pub config: &'a Stage1Config,
    pub world: &'a WorldConfig,
    pub fixed: FixedDiscriminator,
}

impl RewardModel<'_> {
    pub fn skill(&self, state: &WorldState, z: &LatentAction, psi_log_probs: &[f64]) -> f64 {
        skill_reward(state, z, &self.fixed, psi_log_probs, self.config.lambda, self.config.score_mode)
    }

    pub fn safety(&self, t: &SkillTransition) -> f64 {
        safety_reward(&t.action, &t.prev_action, &t.signals, &self.config.safety)
    }

    /// Latent reward plus the region shaping term.
    pub fn training(&self, t: &SkillTransition, psi_log_probs: &[f64]) -> f64 {
        latent_reward(self.skill(&t.next_state, &t.z, psi_log_probs), self.safety(t))
            + region_shaping(&t.next_state, &t.z, self.world.arena_half_width, self.config.shaping_coef)
    }
}

fn rows(vs: &[&[f64]]) -> Result<Matrix> {
    let cols = vs.first().map_or(0, |v| v.len());
    Matrix::from_vec(vs.len(), cols, vs.concat())
}

struct Env {
    world: World,
    prev_action: Vec<f64>,
    z: LatentAction,
}

/// Skill-discovery pretraining of the latent action decoder in the sim world.
pub fn train_decoder(
    config: &Stage1Config,
    world_config: &WorldConfig,
    seed: u64,
    metrics: &mut MetricsLog,
) -> Result<Stage1Outcome> {
    config.validate()?;
    world_config.validate()?;
    let n = world_config.n_agents;
    let act_dim = world_config.action_dim();
    let root = RngStream::new(seed, "stage1");
    let mut init_rng = root.child("init");
    let mut z_rng = root.child("skills");
    let mut act_rng = root.child("act");
    let mut upd_rng = root.child("update");

    let obs_dim = LatentDecoder::input_dim(n, config.k);
    let mut sac = ContinuousSac::new(obs_dim, act_dim, config.sac(), &mut init_rng);
    let mut psi = DisentangleDiscriminator::new(n, config.k, &config.disc_hidden, config.disc_lr, &mut init_rng);
    let rewards = RewardModel {
        config,
        world: world_config,
        fixed: FixedDiscriminator::new(config.k, config.p_hit)?,
    };
    let mut buffer: ReplayBuffer<SkillTransition> = ReplayBuffer::new(config.replay_capacity);
    let mut envs = (0..config.n_envs)
        .map(|e| {
            Ok(Env {
                world: World::new(world_config.clone(), root.child(&format!("env/{e}")))?,
                prev_action: vec![0.0; act_dim],
                z: sample_skill(n, config.k, &mut z_rng),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut env_steps = 0u64;
    let mut updates = 0u64;
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        sac.set_lr(config.lr_at(epoch));
        for env in envs.iter_mut() {
            if epoch > 0 && epoch % config.skills_per_episode == 0 {
                env.world.reset()?;
                env.prev_action = vec![0.0; act_dim];
            }
            env.z = sample_skill(n, config.k, &mut z_rng);
        }
        let mut skill_sum = 0.0;
        let mut safety_sum = 0.0;
        let mut collisions = 0usize;
        let mut diag = SacDiagnostics::default();
        let mut psi_loss = 0.0;
        let mut diag_count = 0usize;

        for _ in 0..config.steps_per_skill {
            let inputs: Vec<Vec<f64>> = envs
                .iter_mut()
                .map(|e| LatentDecoder::input(&e.world.decoder_obs(&e.prev_action), &e.z))
                .collect();
            let actions = if buffer.len() < config.warmup {
                let mut m = Matrix::zeros(envs.len(), act_dim);
                m.data.iter_mut().for_each(|v| *v = act_rng.uniform_range(-1.0, 1.0));
                m
            } else {
                let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
                sac.act_batch(&rows(&refs)?, Some(&mut act_rng))?
            };
            let mut fresh = Vec::with_capacity(envs.len());
            for (e, env) in envs.iter_mut().enumerate() {
                let a = actions.row(e).to_vec();
                let signals = env.world.step(&a);
                let next_o = env.world.decoder_obs(&a);
                let obs_len = 6 * n;
                fresh.push(SkillTransition {
                    o_dec: inputs[e][..obs_len].to_vec(),
                    action: a.clone(),
                    prev_action: std::mem::replace(&mut env.prev_action, a),
                    z: env.z.clone(),
                    next_o_dec: next_o,
                    next_state: env.world.state.clone(),
                    signals,
                });
            }
            let states: Vec<&WorldState> = fresh.iter().map(|t| &t.next_state).collect();
            let codes: Vec<&[usize]> = fresh.iter().map(|t| t.z.codes()).collect();
            let psi_lp = psi.log_probs(&states, &codes)?;
            for (t, lp) in fresh.iter().zip(&psi_lp) {
                skill_sum += rewards.skill(&t.next_state, &t.z, lp);
                safety_sum += rewards.safety(t);
                collisions += t.signals.collision as usize;
            }
            env_steps += fresh.len() as u64;
            for t in fresh {
                buffer.push(t);
            }

            if buffer.len() >= config.warmup.max(config.batch_size) {
                for _ in 0..config.n_updates {
                    let (d, l) = update_round(&mut sac, &mut psi, &buffer, &rewards, &mut upd_rng)
                        .map_err(|e| annotate(e, epoch, env_steps))?;
                    diag.q_loss += d.q_loss;
                    diag.actor_loss += d.actor_loss;
                    diag.log_prob += d.log_prob;
                    psi_loss += l;
                    diag_count += 1;
                    updates += 1;
                }
            }
        }

        let total = (config.n_envs * config.steps_per_skill) as f64;
        let mut matched = 0usize;
        let mut center_dist = 0.0;
        for env in &envs {
            for (i, &zi) in env.z.codes().iter().enumerate() {
                let p = env.world.state.pos[i];
                matched += (quantize_region(p) == zi) as usize;
                let c = region_center(zi, world_config.arena_half_width);
                center_dist += ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            }
        }
        let end_states: Vec<&WorldState> = envs.iter().map(|e| &e.world.state).collect();
        let end_codes: Vec<&[usize]> = envs.iter().map(|e| e.z.codes()).collect();
        let per = diag_count.max(1) as f64;
        let record = Stage1Record {
            epoch: epoch as u64,
            env_steps,
            skill_reward_mean: skill_sum / total,
            safety_reward_mean: safety_sum / total,
            region_match_acc: matched as f64 / (envs.len() * n) as f64,
            disentangle_probe_acc: psi.accuracy(&end_states, &end_codes)?,
            collision_rate: collisions as f64 / total,
            center_dist_mean: center_dist / (envs.len() * n) as f64,
            updates,
            q_loss: diag.q_loss / per,
            actor_loss: diag.actor_loss / per,
            log_prob: diag.log_prob / per,
            psi_loss: psi_loss / per,
        };
        metrics.write(&record)?;
        records.push(record);
    }

    Ok(Stage1Outcome {
        decoder: LatentDecoder {
            actor: sac.actor,
            n_agents: n,
            k: config.k,
            world_fingerprint: world_config.compat_fingerprint(),
        },
        records,
    })
}

fn annotate(e: SlacError, epoch: usize, env_steps: u64) -> SlacError {
    match e {
        SlacError::Numerical(m) => {
            SlacError::Numerical(format!("stage 1 diverged at epoch {epoch} (env step {env_steps}): {m}"))
        }
        other => other,
    }
}

/// One SAC step on rewards recomputed from stored raw states, then one
/// disentanglement classifier step on the same batch.
fn update_round(
    sac: &mut ContinuousSac,
    psi: &mut DisentangleDiscriminator,
    buffer: &ReplayBuffer<SkillTransition>,
    rewards: &RewardModel,
    rng: &mut RngStream,
) -> Result<(SacDiagnostics, f64)> {
    let batch = buffer.sample(rewards.config.batch_size, rng)?;
    let states: Vec<&WorldState> = batch.iter().map(|t| &t.next_state).collect();
    let codes: Vec<&[usize]> = batch.iter().map(|t| t.z.codes()).collect();
    let psi_lp = psi.log_probs(&states, &codes)?;
    let obs: Vec<Vec<f64>> = batch.iter().map(|t| LatentDecoder::input(&t.o_dec, &t.z)).collect();
    let next: Vec<Vec<f64>> = batch.iter().map(|t| LatentDecoder::input(&t.next_o_dec, &t.z)).collect();
    let acts: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
    let sac_batch = SacBatch {
        obs: rows(&obs.iter().map(|v| v.as_slice()).collect::<Vec<_>>())?,
        act: rows(&acts)?,
        reward: batch
            .iter()
            .zip(&psi_lp)
            .map(|(t, lp)| rewards.training(t, lp))
            .collect(),
        next_obs: rows(&next.iter().map(|v| v.as_slice()).collect::<Vec<_>>())?,
        done: vec![false; batch.len()],
    };
    let d = sac.update(&sac_batch, rng)?;
    let l = psi.update(&states, &codes)?;
    Ok((d, l))
}
