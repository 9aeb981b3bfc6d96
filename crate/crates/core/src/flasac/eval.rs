use serde::{Deserialize, Serialize};

use super::policy::{SelectMode, TaskPolicy};
use crate::error::{Result, SlacError};
use crate::numerics::RngStream;
use crate::skill::{LatentAction, LatentDecoder, SafetyTally};
use crate::world::{World, WorldConfig};

/// Anything that can drive the world one low-level step at a time.
pub trait Controller {
    fn reset(&mut self);
    /// Action for low-level step `t` of the current episode.
    fn action(&mut self, world: &mut World, t: usize) -> Result<Vec<f64>>;
}

/// Greedy task policy over a frozen decoder, re-deciding every
/// `steps_per_skill` low-level steps.
pub struct LatentController<'a> {
    pub policy: &'a TaskPolicy,
    pub decoder: &'a LatentDecoder,
    pub steps_per_skill: usize,
    z: Option<LatentAction>,
    prev_action: Vec<f64>,
    rng: RngStream,
}

impl<'a> LatentController<'a> {
    pub fn new(policy: &'a TaskPolicy, decoder: &'a LatentDecoder, steps_per_skill: usize) -> Self {
        LatentController {
            policy,
            decoder,
            steps_per_skill,
            z: None,
            prev_action: vec![0.0; 2 * decoder.n_agents],
            // Greedy selection never draws; the stream only satisfies the signature.
            rng: RngStream::new(0, "greedy"),
        }
    }
}

impl Controller for LatentController<'_> {
    fn reset(&mut self) {
        self.z = None;
        self.prev_action.iter_mut().for_each(|a| *a = 0.0);
    }

    fn action(&mut self, world: &mut World, t: usize) -> Result<Vec<f64>> {
        if t % self.steps_per_skill == 0 || self.z.is_none() {
            let o = world.task_obs();
            self.z = Some(self.policy.select(&o, SelectMode::Greedy, &mut self.rng)?);
        }
        let o_dec = world.decoder_obs(&self.prev_action);
        let a = self.decoder.act(&o_dec, self.z.as_ref().expect("set above"), None)?;
        self.prev_action = a.clone();
        Ok(a)
    }
}

/// Evaluation protocol shared by every method: fixed-length episodes with
/// the task reward read every `reward_every` low-level steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub episodes: usize,
    pub episode_ll_steps: usize,
    pub reward_every: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            episodes: 10,
            episode_ll_steps: 500,
            reward_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_return: f64,
    pub safety_violations: u64,
    pub ll_steps: u64,
}

pub fn evaluate(
    controller: &mut dyn Controller,
    world_config: &WorldConfig,
    protocol: &EvalProtocol,
    seed: u64,
) -> Result<EvalReport> {
    if protocol.episodes == 0 || protocol.reward_every == 0 {
        return Err(SlacError::config("evaluation needs at least one episode and a positive reward period"));
    }
    let mut world = World::new(world_config.clone(), RngStream::new(seed, "eval"))?;
    let mut successes = 0usize;
    let mut total_return = 0.0;
    let mut tally = SafetyTally::default();
    for ep in 0..protocol.episodes {
        if ep > 0 {
            world.reset()?;
        }
        controller.reset();
        for t in 0..protocol.episode_ll_steps {
            let a = controller.action(&mut world, t)?;
            let sig = world.step(&a);
            tally.record(&sig);
            if (t + 1) % protocol.reward_every == 0 {
                total_return += world.task_reward().sum();
            }
        }
        successes += world.success() as usize;
    }
    Ok(EvalReport {
        success_rate: successes as f64 / protocol.episodes as f64,
        mean_return: total_return / protocol.episodes as f64,
        safety_violations: tally.violations,
        ll_steps: tally.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Proportional controller steering every agent to its assigned food.
    struct Scripted;

    impl Controller for Scripted {
        fn reset(&mut self) {}
        fn action(&mut self, world: &mut World, _t: usize) -> Result<Vec<f64>> {
            let c = &world.config;
            let mut a = Vec::new();
            for (i, p) in world.state.pos.iter().enumerate() {
                let f = c.food[c.food_assignment[i]];
                let v = world.state.vel[i];
                a.push((4.0 * (f[0] - p[0]) - 3.0 * v[0]).clamp(-1.0, 1.0));
                a.push((4.0 * (f[1] - p[1]) - 3.0 * v[1]).clamp(-1.0, 1.0));
            }
            Ok(a)
        }
    }

    #[test]
    fn scripted_stub_always_succeeds() {
        let mut c = WorldConfig::sim(4);
        // Keep the stub honest about poison: none on the straight paths.
        c.poison.clear();
        let r = evaluate(&mut Scripted, &c, &EvalProtocol::default(), 0).unwrap();
        assert_eq!(r.success_rate, 1.0);
        assert_eq!(r.ll_steps, 5000);
    }

    #[test]
    fn fixed_seed_repeats() {
        let c = WorldConfig::real(4);
        let a = evaluate(&mut Scripted, &c, &EvalProtocol::default(), 9).unwrap();
        let b = evaluate(&mut Scripted, &c, &EvalProtocol::default(), 9).unwrap();
        assert_eq!(a, b);
    }
}
