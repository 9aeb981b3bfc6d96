use serde::{Deserialize, Serialize};

use super::config::WorldConfig;
use super::state::WorldState;

/// One reward term per agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardVector(pub Vec<f64>);

impl RewardVector {
    pub fn zeros(m: usize) -> Self {
        RewardVector(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn add_assign(&mut self, other: &RewardVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn near_poison(p: [f64; 2], config: &WorldConfig) -> bool {
    config.poison.iter().any(|q| dist(p, *q) <= config.goal_radius)
}

fn at_own_food(i: usize, p: [f64; 2], config: &WorldConfig) -> bool {
    config
        .food_assignment
        .get(i)
        .is_some_and(|&f| dist(p, config.food[f]) <= config.goal_radius)
}

/// Term `i` depends only on agent `i`: +1 at its assigned food, -1 near any
/// poison, poison taking precedence.
pub fn task_reward(state: &WorldState, config: &WorldConfig) -> RewardVector {
    RewardVector(
        state
            .pos
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if near_poison(p, config) {
                    -1.0
                } else if at_own_food(i, p, config) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// Every agent at its assigned food and none near poison.
pub fn success(state: &WorldState, config: &WorldConfig) -> bool {
    state
        .pos
        .iter()
        .enumerate()
        .all(|(i, &p)| at_own_food(i, p, config) && !near_poison(p, config))
}
