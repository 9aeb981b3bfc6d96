use super::config::WorldConfig;
use super::state::WorldState;
use crate::numerics::RngStream;

fn noisy(v: f64, config: &WorldConfig, rng: &mut RngStream) -> f64 {
    if config.obs_noise_std > 0.0 {
        v + config.obs_noise_std * rng.normal()
    } else {
        v
    }
}

/// `[positions, velocities, previous action]`; sensor noise touches
/// positions and velocities only.
pub fn decoder_obs(state: &WorldState, prev_action: &[f64], config: &WorldConfig, rng: &mut RngStream) -> Vec<f64> {
    debug_assert_eq!(prev_action.len(), config.action_dim());
    let mut out = Vec::with_capacity(config.decoder_obs_dim());
    for p in &state.pos {
        out.push(noisy(p[0], config, rng));
        out.push(noisy(p[1], config, rng));
    }
    for v in &state.vel {
        out.push(noisy(v[0], config, rng));
        out.push(noisy(v[1], config, rng));
    }
    out.extend_from_slice(prev_action);
    out
}

/// `[positions, velocities, landmark positions, landmark flags, assigned food]`.
/// Flags are 1 for food and 0 for poison and are never noised.
pub fn task_obs(state: &WorldState, config: &WorldConfig, rng: &mut RngStream) -> Vec<f64> {
    let mut out = Vec::with_capacity(config.task_obs_dim());
    for p in &state.pos {
        out.push(noisy(p[0], config, rng));
        out.push(noisy(p[1], config, rng));
    }
    for v in &state.vel {
        out.push(noisy(v[0], config, rng));
        out.push(noisy(v[1], config, rng));
    }
    for l in config.food.iter().chain(&config.poison) {
        out.push(noisy(l[0], config, rng));
        out.push(noisy(l[1], config, rng));
    }
    out.extend(config.food.iter().map(|_| 1.0));
    out.extend(config.poison.iter().map(|_| 0.0));
    for i in 0..config.n_agents {
        let f = config.food_assignment.get(i).map(|&k| config.food[k]).unwrap_or([0.0, 0.0]);
        out.push(noisy(f[0], config, rng));
        out.push(noisy(f[1], config, rng));
    }
    out
}
