use super::config::WorldConfig;
use crate::error::{Result, SlacError};
use crate::numerics::RngStream;

const MAX_RESET_ATTEMPTS: usize = 10_000;

/// Positions and velocities of every agent.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub pos: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
    pub step: u64,
}

/// Safety events on a post-step state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SafetySignals {
    pub collision: bool,
    pub over_force: bool,
    pub agent_collision: Vec<bool>,
    pub agent_over_force: Vec<bool>,
}

impl SafetySignals {
    pub fn any(&self) -> bool {
        self.collision || self.over_force
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Uniform agent placement rejecting overlaps with landmarks and each other.
pub fn reset(config: &WorldConfig, rng: &mut RngStream) -> Result<WorldState> {
    let h = config.arena_half_width;
    let r = config.agent_radius;
    let landmarks: Vec<[f64; 2]> = config.food.iter().chain(&config.poison).copied().collect();
    let mut pos: Vec<[f64; 2]> = Vec::with_capacity(config.n_agents);
    let mut attempts = 0;
    while pos.len() < config.n_agents {
        attempts += 1;
        if attempts > MAX_RESET_ATTEMPTS {
            return Err(SlacError::config(format!(
                "could not place {} agents without overlap in {MAX_RESET_ATTEMPTS} attempts; arena overcrowded",
                config.n_agents
            )));
        }
        let p = [rng.uniform_range(-h, h), rng.uniform_range(-h, h)];
        let hits_landmark = landmarks.iter().any(|l| dist(p, *l) < r + config.landmark_radius);
        let hits_agent = pos.iter().any(|q| dist(p, *q) <= 2.0 * r);
        if !hits_landmark && !hits_agent {
            pos.push(p);
        }
    }
    Ok(WorldState {
        vel: vec![[0.0, 0.0]; pos.len()],
        pos,
        step: 0,
    })
}

/// Safety flags for the current configuration of agents.
pub fn safety_signals(state: &WorldState, config: &WorldConfig) -> SafetySignals {
    let n = state.pos.len();
    let r = config.agent_radius;
    let mut agent_collision = vec![false; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dist(state.pos[i], state.pos[j]) < 2.0 * r {
                agent_collision[i] = true;
                agent_collision[j] = true;
            }
        }
        if config
            .poison
            .iter()
            .any(|p| dist(state.pos[i], *p) < r + config.landmark_radius)
        {
            agent_collision[i] = true;
        }
    }
    let agent_over_force: Vec<bool> = state.vel.iter().map(|v| norm(*v) > config.force_threshold).collect();
    SafetySignals {
        collision: agent_collision.iter().any(|&c| c),
        over_force: agent_over_force.iter().any(|&c| c),
        agent_collision,
        agent_over_force,
    }
}

/// Advance one control interval. Actions are clamped to `[-1, 1]`; velocity
/// is speed-limited and positions are clamped to the arena.
pub fn step(
    state: &WorldState,
    action: &[f64],
    config: &WorldConfig,
    rng: &mut RngStream,
) -> (WorldState, SafetySignals) {
    assert_eq!(action.len(), config.action_dim(), "action length must be 2 * n_agents");
    let h = config.arena_half_width;
    let mut next = state.clone();
    for i in 0..config.n_agents {
        let mut v = [0.0; 2];
        for d in 0..2 {
            let mut a = action[2 * i + d].clamp(-1.0, 1.0);
            if config.action_noise_std > 0.0 {
                a += config.action_noise_std * rng.normal();
            }
            v[d] = (1.0 - config.damping) * state.vel[i][d] + config.accel_gain * a * config.dt;
        }
        let speed = norm(v);
        if speed > config.v_max {
            let s = config.v_max / speed;
            v = [v[0] * s, v[1] * s];
        }
        next.vel[i] = v;
        for d in 0..2 {
            next.pos[i][d] = (state.pos[i][d] + v[d] * config.dt).clamp(-h, h);
        }
    }
    next.step += 1;
    let signals = safety_signals(&next, config);
    (next, signals)
}

/// Agent `i`'s slice `(px, py, vx, vy)`.
pub fn entity_state(state: &WorldState, i: usize) -> Result<[f64; 4]> {
    if i >= state.pos.len() {
        return Err(SlacError::Usage(format!(
            "entity index {i} out of range for {} agents",
            state.pos.len()
        )));
    }
    let (p, v) = (state.pos[i], state.vel[i]);
    Ok([p[0], p[1], v[0], v[1]])
}

/// Every other agent's slice, concatenated in index order.
pub fn complement_state(state: &WorldState, i: usize) -> Result<Vec<f64>> {
    entity_state(state, i)?;
    let mut out = Vec::with_capacity(4 * (state.pos.len() - 1));
    for j in (0..state.pos.len()).filter(|&j| j != i) {
        out.extend_from_slice(&entity_state(state, j)?);
    }
    Ok(out)
}

/// Quadrant code: 0 `(x>=0, y>=0)`, 1 `(x<0, y>=0)`, 2 `(x<0, y<0)`, 3 `(x>=0, y<0)`.
pub fn quantize_region(p: [f64; 2]) -> usize {
    match (p[0] >= 0.0, p[1] >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Center of quadrant `region` in an arena of half-width `h`.
pub fn region_center(region: usize, h: f64) -> [f64; 2] {
    let c = 0.5 * h;
    match region {
        0 => [c, c],
        1 => [-c, c],
        2 => [-c, -c],
        _ => [c, -c],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still(pos: Vec<[f64; 2]>) -> WorldState {
        WorldState {
            vel: vec![[0.0; 2]; pos.len()],
            pos,
            step: 0,
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let c = WorldConfig::sim(4);
        let a = reset(&c, &mut RngStream::new(3, "reset")).unwrap();
        let b = reset(&c, &mut RngStream::new(3, "reset")).unwrap();
        assert_eq!(a, b);
        assert!(a.vel.iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn single_agent_without_landmarks() {
        let mut c = WorldConfig::sim(1);
        c.food.clear();
        c.poison.clear();
        c.food_assignment.clear();
        let s = reset(&c, &mut RngStream::new(0, "r")).unwrap();
        assert_eq!(s.pos.len(), 1);
        assert_eq!(s.vel, vec![[0.0, 0.0]]);
    }

    #[test]
    fn reset_separates_agents() {
        let c = WorldConfig::sim(4);
        for seed in 0..200 {
            let s = reset(&c, &mut RngStream::new(seed, "r")).unwrap();
            for i in 0..4 {
                for j in (i + 1)..4 {
                    assert!(dist(s.pos[i], s.pos[j]) > 2.0 * c.agent_radius);
                }
            }
        }
    }

    #[test]
    fn overcrowded_arena_is_a_config_error() {
        let mut c = WorldConfig::sim(4);
        c.arena_half_width = 0.06;
        c.food = vec![[0.0, 0.0]; 4];
        c.poison.clear();
        assert!(matches!(
            reset(&c, &mut RngStream::new(0, "r")),
            Err(SlacError::Config(_))
        ));
    }

    #[test]
    fn zero_action_is_a_fixpoint() {
        let c = WorldConfig::sim(2);
        let s = still(vec![[0.3, -0.2], [-0.6, 0.1]]);
        let (n, _) = step(&s, &[0.0; 4], &c, &mut RngStream::new(0, "s"));
        assert_eq!(n.pos, s.pos);
    }

    #[test]
    fn closed_form_damping() {
        let c = WorldConfig::sim(1);
        let s = WorldState {
            pos: vec![[0.1, 0.2]],
            vel: vec![[1.0, 0.0]],
            step: 0,
        };
        let (n, _) = step(&s, &[0.0, 0.0], &c, &mut RngStream::new(0, "s"));
        assert!((n.vel[0][0] - 0.75).abs() < 1e-15);
        assert!((n.pos[0][0] - 0.175).abs() < 1e-15);
        assert_eq!(n.pos[0][1], 0.2);
    }

    #[test]
    fn close_agents_collide() {
        let c = WorldConfig::sim(2);
        let s = still(vec![[-0.3, -0.3], [-0.22, -0.3]]);
        let sig = safety_signals(&s, &c);
        assert!(sig.collision);
        assert_eq!(sig.agent_collision, vec![true, true]);
        let far = still(vec![[-0.3, -0.3], [-0.1, -0.3]]);
        assert!(!safety_signals(&far, &c).collision);
    }

    #[test]
    fn touching_poison_is_a_collision() {
        let c = WorldConfig::sim(1);
        let sig = safety_signals(&still(vec![[0.05, 0.75]]), &c);
        assert!(sig.collision);
    }

    #[test]
    fn over_speed_flags_force() {
        let c = WorldConfig::sim(1);
        let s = WorldState {
            pos: vec![[-0.4, -0.4]],
            vel: vec![[0.95, 0.0]],
            step: 0,
        };
        let sig = safety_signals(&s, &c);
        assert!(sig.over_force && sig.agent_over_force[0]);
    }

    #[test]
    fn entity_partition() {
        let s = WorldState {
            pos: vec![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]],
            vel: vec![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            step: 0,
        };
        let mut all = Vec::new();
        for i in 0..3 {
            all.extend(entity_state(&s, i).unwrap());
        }
        assert_eq!(all, vec![0.1, 0.2, 1.0, 2.0, 0.3, 0.4, 3.0, 4.0, 0.5, 0.6, 5.0, 6.0]);
        assert_eq!(complement_state(&s, 1).unwrap(), vec![0.1, 0.2, 1.0, 2.0, 0.5, 0.6, 5.0, 6.0]);
        assert!(entity_state(&s, 3).is_err());
        let one = still(vec![[0.0, 0.0]]);
        assert!(complement_state(&one, 0).unwrap().is_empty());
    }

    #[test]
    fn quadrant_codes() {
        assert_eq!(quantize_region([0.5, 0.5]), 0);
        assert_eq!(quantize_region([-0.5, 0.5]), 1);
        assert_eq!(quantize_region([-0.5, -0.5]), 2);
        assert_eq!(quantize_region([0.5, -0.5]), 3);
        assert_eq!(quantize_region([0.0, 0.0]), 0);
        assert_eq!(quantize_region([0.5, -0.001]), 3);
        for k in 0..4 {
            assert_eq!(quantize_region(region_center(k, 1.0)), k);
        }
    }
}
