use crate::error::Result;
use crate::numerics::RngStream;
use crate::skill::{LatentAction, LatentDecoder, SafetyTally};
use crate::world::{RewardVector, World, WorldConfig};

/// Outcome of one high-level step.
#[derive(Clone, Debug)]
pub struct SkillResult {
    pub next_obs: Vec<f64>,
    pub reward: RewardVector,
    pub safety: SafetyTally,
    /// The episode ended with this step.
    pub done: bool,
}

/// Target-world environment whose actions are latent codes expanded by a
/// frozen decoder.
pub struct TaskEnv<'a> {
    pub world: World,
    decoder: &'a LatentDecoder,
    prev_action: Vec<f64>,
    steps_per_skill: usize,
    episode_len: usize,
    hl_in_episode: usize,
}

impl<'a> TaskEnv<'a> {
    /// Fails with a compatibility error before any step if the decoder was
    /// trained for a different world.
    pub fn new(
        config: WorldConfig,
        decoder: &'a LatentDecoder,
        steps_per_skill: usize,
        episode_len: usize,
        rng: RngStream,
    ) -> Result<Self> {
        decoder.check_compatible(&config)?;
        let act_dim = config.action_dim();
        Ok(TaskEnv {
            world: World::new(config, rng)?,
            decoder,
            prev_action: vec![0.0; act_dim],
            steps_per_skill,
            episode_len,
            hl_in_episode: 0,
        })
    }

    pub fn observe(&mut self) -> Vec<f64> {
        self.world.task_obs()
    }

    pub fn reset(&mut self) -> Result<()> {
        self.world.reset()?;
        self.prev_action.iter_mut().for_each(|a| *a = 0.0);
        self.hl_in_episode = 0;
        Ok(())
    }

    /// Run the decoder for one skill; the sparse food-poison terms are read
    /// once on the final state.
    pub fn rollout_skill(&mut self, z: &LatentAction) -> Result<SkillResult> {
        let safety = self
            .decoder
            .run_skill(&mut self.world, z, &mut self.prev_action, self.steps_per_skill)?;
        self.hl_in_episode += 1;
        Ok(SkillResult {
            reward: self.world.task_reward(),
            next_obs: self.world.task_obs(),
            safety,
            done: self.hl_in_episode >= self.episode_len,
        })
    }
}
