use serde::{Deserialize, Serialize};

use super::discriminator::{FixedDiscriminator, ScoreMode};
use super::latent::LatentAction;
use crate::world::{region_center, SafetySignals, WorldState};

/// Penalty weights on action magnitude, action change, collisions and
/// excessive speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyWeights {
    pub action: f64,
    pub action_change: f64,
    pub collision: f64,
    pub over_force: f64,
}

impl Default for SafetyWeights {
    fn default() -> Self {
        SafetyWeights {
            action: 0.01,
            action_change: 0.1,
            collision: 0.2,
            over_force: 0.05,
        }
    }
}

pub fn safety_reward(a: &[f64], a_prev: &[f64], signals: &SafetySignals, w: &SafetyWeights) -> f64 {
    debug_assert_eq!(a.len(), a_prev.len());
    let mag: f64 = a.iter().map(|x| x * x).sum();
    let change: f64 = a.iter().zip(a_prev).map(|(x, y)| (x - y) * (x - y)).sum();
    let mut r = -w.action * mag - w.action_change * change;
    if signals.collision {
        r -= w.collision;
    }
    if signals.over_force {
        r -= w.over_force;
    }
    r
}

/// `sum_i [ score(q_phi(z^i | s^i)) - lambda * score(q_psi(z^i | s^{not i})) ]`
/// where `psi_log_probs[i]` is the learned classifier's log-probability.
pub fn skill_reward(
    state: &WorldState,
    z: &LatentAction,
    fixed: &FixedDiscriminator,
    psi_log_probs: &[f64],
    lambda: f64,
    mode: ScoreMode,
) -> f64 {
    z.codes()
        .iter()
        .enumerate()
        .map(|(i, &zi)| mode.score(fixed.log_prob(state.pos[i], zi)) - lambda * mode.score(psi_log_probs[i]))
        .sum()
}

pub fn latent_reward(skill: f64, safety: f64) -> f64 {
    skill + safety
}

/// Dense pull of every agent toward the center of its commanded region.
pub fn region_shaping(state: &WorldState, z: &LatentAction, arena_half_width: f64, coef: f64) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    let d: f64 = z
        .codes()
        .iter()
        .enumerate()
        .map(|(i, &zi)| {
            let c = region_center(zi, arena_half_width);
            let p = state.pos[i];
            ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
        })
        .sum();
    -coef * d
}
