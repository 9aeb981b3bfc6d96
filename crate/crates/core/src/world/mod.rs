//! Two-dimensional point-mass arena with food and poison landmarks.

mod config;
mod obs;
mod state;
mod task;

pub use config::{decoder_obs_layout, layout_hash, task_obs_layout, Variant, WorldConfig};
pub use obs::{decoder_obs, task_obs};
pub use state::{
    complement_state, entity_state, quantize_region, region_center, reset, safety_signals, step, SafetySignals,
    WorldState,
};
pub use task::{success, task_reward, RewardVector};

/// A world instance that owns its configuration and noise stream.
#[derive(Clone, Debug)]
pub struct World {
    pub config: WorldConfig,
    pub state: WorldState,
    rng: crate::numerics::RngStream,
}

impl World {
    pub fn new(config: WorldConfig, rng: crate::numerics::RngStream) -> crate::Result<Self> {
        config.validate()?;
        let mut rng = rng;
        let state = reset(&config, &mut rng)?;
        Ok(World { config, state, rng })
    }

    pub fn reset(&mut self) -> crate::Result<()> {
        self.state = reset(&self.config, &mut self.rng)?;
        Ok(())
    }

    pub fn step(&mut self, action: &[f64]) -> SafetySignals {
        let (next, signals) = step(&self.state, action, &self.config, &mut self.rng);
        self.state = next;
        signals
    }

    pub fn decoder_obs(&mut self, prev_action: &[f64]) -> Vec<f64> {
        decoder_obs(&self.state, prev_action, &self.config, &mut self.rng)
    }

    pub fn task_obs(&mut self) -> Vec<f64> {
        task_obs(&self.state, &self.config, &mut self.rng)
    }

    pub fn task_reward(&self) -> RewardVector {
        task_reward(&self.state, &self.config)
    }

    pub fn success(&self) -> bool {
        success(&self.state, &self.config)
    }
}
