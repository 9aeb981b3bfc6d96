use super::latent::LatentAction;
use crate::error::{Result, SlacError};
use crate::numerics::{Checkpoint, Matrix, Mlp, RngStream};
use crate::sac::act_batch;
use crate::world::{decoder_obs_layout, layout_hash, World, WorldConfig};

pub const DECODER_KIND: &str = "latent_decoder";

/// Skill-conditioned low-level policy `pi_dec(a | o_dec, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDecoder {
    pub actor: Mlp,
    pub n_agents: usize,
    pub k: usize,
    pub world_fingerprint: String,
}

/// Safety tallies over a stretch of low-level control.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SafetyTally {
    pub steps: u64,
    pub collisions: u64,
    pub over_force: u64,
    /// Steps with at least one safety event.
    pub violations: u64,
}

impl SafetyTally {
    pub fn add(&mut self, other: &SafetyTally) {
        self.steps += other.steps;
        self.collisions += other.collisions;
        self.over_force += other.over_force;
        self.violations += other.violations;
    }

    pub fn record(&mut self, s: &crate::world::SafetySignals) {
        self.steps += 1;
        self.collisions += s.collision as u64;
        self.over_force += s.over_force as u64;
        self.violations += s.any() as u64;
    }
}

impl LatentDecoder {
    pub fn input_dim(n_agents: usize, k: usize) -> usize {
        6 * n_agents + n_agents * k
    }

    pub fn input(o_dec: &[f64], z: &LatentAction) -> Vec<f64> {
        let mut x = o_dec.to_vec();
        x.extend(z.one_hot());
        x
    }

    pub fn act(&self, o_dec: &[f64], z: &LatentAction, rng: Option<&mut RngStream>) -> Result<Vec<f64>> {
        let x = Matrix::row_vector(&Self::input(o_dec, z));
        Ok(act_batch(&self.actor, 2 * self.n_agents, &x, rng)?.data)
    }

    /// Refuse to drive a world whose geometry or observation layout differs
    /// from the one the decoder was trained in.
    pub fn check_compatible(&self, world: &WorldConfig) -> Result<()> {
        if world.n_agents != self.n_agents {
            return Err(SlacError::Compatibility(format!(
                "decoder was trained for {} agents, world has {}",
                self.n_agents, world.n_agents
            )));
        }
        let fp = world.compat_fingerprint();
        if fp != self.world_fingerprint {
            return Err(SlacError::Compatibility(format!(
                "decoder world fingerprint {} does not match target world {fp}",
                self.world_fingerprint
            )));
        }
        Ok(())
    }

    /// Execute `z` for `steps` low-level steps with the mean action.
    /// `prev_action` carries across calls.
    pub fn run_skill(
        &self,
        world: &mut World,
        z: &LatentAction,
        prev_action: &mut Vec<f64>,
        steps: usize,
    ) -> Result<SafetyTally> {
        let mut tally = SafetyTally::default();
        for _ in 0..steps {
            let o = world.decoder_obs(prev_action);
            let a = self.act(&o, z, None)?;
            let sig = world.step(&a);
            tally.record(&sig);
            *prev_action = a;
        }
        Ok(tally)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set_meta("kind", DECODER_KIND);
        c.set_meta("n_agents", self.n_agents as u64);
        c.set_meta("k", self.k as u64);
        c.set_meta("o_dec_layout", layout_hash(&decoder_obs_layout(self.n_agents)));
        c.set_meta("world_fingerprint", self.world_fingerprint.clone());
        c.push_mlp("actor", &self.actor);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.meta_str("kind")? != DECODER_KIND {
            return Err(SlacError::Checkpoint(format!(
                "expected a {DECODER_KIND} checkpoint, found `{}`",
                c.meta_str("kind")?
            )));
        }
        let n_agents = c.meta_u64("n_agents")? as usize;
        let k = c.meta_u64("k")? as usize;
        if c.meta_str("o_dec_layout")? != layout_hash(&decoder_obs_layout(n_agents)) {
            return Err(SlacError::Compatibility(
                "decoder observation layout differs from this build".into(),
            ));
        }
        let actor = c.mlp("actor")?;
        if actor.input_dim() != Self::input_dim(n_agents, k) || actor.output_dim() != 4 * n_agents {
            return Err(SlacError::Checkpoint("decoder network shape disagrees with its metadata".into()));
        }
        Ok(LatentDecoder {
            actor,
            n_agents,
            k,
            world_fingerprint: c.meta_str("world_fingerprint")?.to_string(),
        })
    }
}
