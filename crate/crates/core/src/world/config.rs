use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SlacError};

/// Which side of the reality gap a world instance models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sim,
    Real,
}

/// Dynamics, noise and landmark layout of a particle world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub variant: Variant,
    pub n_agents: usize,
    pub arena_half_width: f64,
    pub dt: f64,
    pub damping: f64,
    pub accel_gain: f64,
    pub v_max: f64,
    pub agent_radius: f64,
    /// Physical radius of a landmark disc; poison contact is disc overlap.
    pub landmark_radius: f64,
    pub action_noise_std: f64,
    pub obs_noise_std: f64,
    /// Proximity radius for food rewards, poison penalties and success.
    pub goal_radius: f64,
    pub force_threshold: f64,
    pub food: Vec<[f64; 2]>,
    pub poison: Vec<[f64; 2]>,
    /// `food_assignment[i]` is the food index agent `i` must reach.
    pub food_assignment: Vec<usize>,
}

/// Food at the quadrant centers in quadrant order, poison on the axes.
fn default_layout(n_agents: usize) -> (Vec<[f64; 2]>, Vec<[f64; 2]>, Vec<usize>) {
    let poison = vec![[0.0, 0.75], [-0.75, 0.0], [0.0, -0.75], [0.75, 0.0]];
    let food = if n_agents <= 4 {
        vec![[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]]
    } else {
        // Larger worlds: one food per agent on a ring through the quadrant centers.
        (0..n_agents)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_4 + 2.0 * std::f64::consts::PI * i as f64 / n_agents as f64;
                [0.5 * std::f64::consts::SQRT_2 * a.cos(), 0.5 * std::f64::consts::SQRT_2 * a.sin()]
            })
            .collect()
    };
    (food, poison, (0..n_agents).collect())
}

impl WorldConfig {
    /// Low-fidelity pretraining world.
    pub fn sim(n_agents: usize) -> Self {
        let (food, poison, food_assignment) = default_layout(n_agents);
        WorldConfig {
            variant: Variant::Sim,
            n_agents,
            arena_half_width: 1.0,
            dt: 0.1,
            damping: 0.25,
            accel_gain: 1.0,
            v_max: 1.0,
            agent_radius: 0.05,
            landmark_radius: 0.05,
            action_noise_std: 0.0,
            obs_noise_std: 0.0,
            goal_radius: 0.15,
            force_threshold: 0.9,
            food,
            poison,
            food_assignment,
        }
    }

    /// Target world: heavier damping, weaker actuation, action and sensor noise.
    pub fn real(n_agents: usize) -> Self {
        WorldConfig {
            variant: Variant::Real,
            damping: 0.40,
            accel_gain: 0.85,
            action_noise_std: 0.02,
            obs_noise_std: 0.01,
            ..Self::sim(n_agents)
        }
    }

    pub fn for_variant(variant: Variant, n_agents: usize) -> Self {
        match variant {
            Variant::Sim => Self::sim(n_agents),
            Variant::Real => Self::real(n_agents),
        }
    }

    pub fn action_dim(&self) -> usize {
        2 * self.n_agents
    }

    pub fn n_landmarks(&self) -> usize {
        self.food.len() + self.poison.len()
    }

    /// `[positions, velocities, previous action]`.
    pub fn decoder_obs_dim(&self) -> usize {
        6 * self.n_agents
    }

    /// `[positions, velocities, landmark positions, landmark flags, assigned food]`.
    pub fn task_obs_dim(&self) -> usize {
        6 * self.n_agents + 3 * self.n_landmarks()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SlacError::Config(m));
        if self.n_agents == 0 {
            return bad("world.n_agents must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.damping) {
            return bad(format!("world.damping must lie in [0, 1), got {}", self.damping));
        }
        for (name, v) in [
            ("arena_half_width", self.arena_half_width),
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("agent_radius", self.agent_radius),
            ("goal_radius", self.goal_radius),
            ("force_threshold", self.force_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("world.{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("accel_gain", self.accel_gain),
            ("landmark_radius", self.landmark_radius),
            ("action_noise_std", self.action_noise_std),
            ("obs_noise_std", self.obs_noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("world.{name} must be non-negative, got {v}"));
            }
        }
        let h = self.arena_half_width;
        for p in self.food.iter().chain(&self.poison) {
            if p[0].abs() > h || p[1].abs() > h {
                return bad(format!("landmark ({}, {}) lies outside the arena", p[0], p[1]));
            }
        }
        if !self.food_assignment.is_empty() {
            if self.food.len() < self.n_agents {
                return bad(format!(
                    "food-poison worlds need at least one food per agent ({} food, {} agents)",
                    self.food.len(),
                    self.n_agents
                ));
            }
            if self.food_assignment.len() != self.n_agents {
                return bad("world.food_assignment must have one entry per agent".into());
            }
            if let Some(&f) = self.food_assignment.iter().find(|&&f| f >= self.food.len()) {
                return bad(format!("food_assignment refers to missing food {f}"));
            }
        }
        Ok(())
    }

    /// Hash of everything a trained decoder depends on that must match
    /// across sim and real: agent count, geometry and observation layout.
    /// Dynamics constants and noise levels are deliberately excluded.
    pub fn compat_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "n={};arena={};r={};lr={};goal={};",
            self.n_agents, self.arena_half_width, self.agent_radius, self.landmark_radius, self.goal_radius
        ));
        for p in self.food.iter().chain(&self.poison) {
            h.update(format!("({},{})", p[0], p[1]));
        }
        h.update(format!("{:?};", self.food_assignment));
        h.update(decoder_obs_layout(self.n_agents));
        hex16(&h.finalize())
    }
}

pub fn decoder_obs_layout(n_agents: usize) -> String {
    format!("pos:{n_agents}x2|vel:{n_agents}x2|prev_action:{}", 2 * n_agents)
}

pub fn task_obs_layout(n_agents: usize, n_landmarks: usize) -> String {
    format!(
        "pos:{n_agents}x2|vel:{n_agents}x2|landmarks:{n_landmarks}x2|flags:{n_landmarks}|assigned_food:{n_agents}x2"
    )
}

pub fn layout_hash(layout: &str) -> String {
    hex16(&Sha256::digest(layout.as_bytes()))
}

fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
