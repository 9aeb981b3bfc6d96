use serde::{Deserialize, Serialize};

use super::decoder::LatentDecoder;
use super::discriminator::Classifier;
use super::latent::sample_skill;
use crate::error::Result;
use crate::numerics::{Matrix, RngStream};
use crate::world::{complement_state, entity_state, World, WorldConfig, WorldState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub episodes: usize,
    pub skills_per_episode: usize,
    pub steps_per_skill: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub train_steps: usize,
    pub batch_size: usize,
    /// Fraction of samples held out for scoring.
    pub test_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            episodes: 150,
            skills_per_episode: 4,
            steps_per_skill: 50,
            hidden: vec![32],
            lr: 3e-3,
            train_steps: 1500,
            batch_size: 128,
            test_fraction: 0.25,
        }
    }
}

/// Held-out accuracy of fresh classifiers predicting each `z^i` at skill end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// From the entity's own state.
    pub own: Vec<f64>,
    /// From every other entity's state.
    pub other: Vec<f64>,
}

fn fit_and_score(
    features: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    config: &ProbeConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    let n_test = ((features.len() as f64) * config.test_fraction).round() as usize;
    let n_train = features.len() - n_test;
    let dim = features[0].len();
    let mut clf = Classifier::new(dim, &config.hidden, k, config.lr, rng);
    for _ in 0..config.train_steps {
        let idx: Vec<usize> = (0..config.batch_size).map(|_| rng.index(n_train)).collect();
        let x = Matrix::from_vec(idx.len(), dim, idx.iter().flat_map(|&i| features[i].clone()).collect())?;
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        clf.train_step(&x, &y)?;
    }
    let x = Matrix::from_vec(n_test, dim, features[n_train..].concat())?;
    clf.accuracy(&x, &labels[n_train..])
}

/// Roll the decoder with random skills and probe how much of each `z^i` is
/// recoverable from its own entity versus the rest.
pub fn probe_decoder(
    decoder: &LatentDecoder,
    world_config: &WorldConfig,
    config: &ProbeConfig,
    seed: u64,
) -> Result<ProbeResult> {
    decoder.check_compatible(world_config)?;
    let root = RngStream::new(seed, "probe");
    let mut z_rng = root.child("skills");
    let mut world = World::new(world_config.clone(), root.child("world"))?;
    let n = world_config.n_agents;
    let mut samples: Vec<(WorldState, Vec<usize>)> = Vec::new();
    for _ in 0..config.episodes {
        world.reset()?;
        let mut prev = vec![0.0; world_config.action_dim()];
        for _ in 0..config.skills_per_episode {
            let z = sample_skill(n, decoder.k, &mut z_rng);
            decoder.run_skill(&mut world, &z, &mut prev, config.steps_per_skill)?;
            samples.push((world.state.clone(), z.codes().to_vec()));
        }
    }
    let mut fit_rng = root.child("fit");
    let mut own = Vec::with_capacity(n);
    let mut other = Vec::with_capacity(n);
    for i in 0..n {
        let labels: Vec<usize> = samples.iter().map(|(_, z)| z[i]).collect();
        let xs: Vec<Vec<f64>> = samples
            .iter()
            .map(|(s, _)| entity_state(s, i).map(|e| e.to_vec()))
            .collect::<Result<_>>()?;
        own.push(fit_and_score(&xs, &labels, decoder.k, config, &mut fit_rng)?);
        if n > 1 {
            let xo: Vec<Vec<f64>> = samples
                .iter()
                .map(|(s, _)| complement_state(s, i))
                .collect::<Result<_>>()?;
            other.push(fit_and_score(&xo, &labels, decoder.k, config, &mut fit_rng)?);
        }
    }
    Ok(ProbeResult { own, other })
}
