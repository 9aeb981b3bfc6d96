//! Continuous soft actor-critic with a tanh-squashed Gaussian policy and
//! twin critics. Shared by decoder pretraining and the flat baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlacError};
use crate::numerics::{
    polyak, squashed_gaussian_sample, squashed_gaussian_with_noise, Adam, Matrix, Mlp, RngStream, SquashedSample,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
}

/// One minibatch; `done[i]` cuts the bootstrap.
#[derive(Clone, Debug)]
pub struct SacBatch {
    pub obs: Matrix,
    pub act: Matrix,
    pub reward: Vec<f64>,
    pub next_obs: Matrix,
    pub done: Vec<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SacDiagnostics {
    pub q_loss: f64,
    pub actor_loss: f64,
    pub log_prob: f64,
}

#[derive(Clone, Debug)]
pub struct ContinuousSac {
    pub config: SacConfig,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    obs_dim: usize,
    act_dim: usize,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl ContinuousSac {
    pub fn new(obs_dim: usize, act_dim: usize, config: SacConfig, rng: &mut RngStream) -> Self {
        let actor = Mlp::new(&sizes(obs_dim, &config.hidden, 2 * act_dim), rng);
        let critics = [
            Mlp::new(&sizes(obs_dim + act_dim, &config.hidden, 1), rng),
            Mlp::new(&sizes(obs_dim + act_dim, &config.hidden, 1), rng),
        ];
        let targets = critics.clone();
        ContinuousSac {
            actor_opt: Adam::new(&actor, config.lr),
            critic_opts: [Adam::new(&critics[0], config.lr), Adam::new(&critics[1], config.lr)],
            actor,
            critics,
            targets,
            obs_dim,
            act_dim,
            config,
        }
    }

    /// Change the step size of every optimizer.
    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
        self.actor_opt.lr = lr;
        for o in &mut self.critic_opts {
            o.lr = lr;
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Sampled actions for a batch of observations, or `tanh(mean)` when `rng` is `None`.
    pub fn act_batch(&self, obs: &Matrix, rng: Option<&mut RngStream>) -> Result<Matrix> {
        act_batch(&self.actor, self.act_dim, obs, rng)
    }

    pub fn act(&self, obs: &[f64], rng: Option<&mut RngStream>) -> Result<Vec<f64>> {
        Ok(self.act_batch(&Matrix::row_vector(obs), rng)?.data)
    }

    /// `min(Q1, Q2)` of the online critics.
    pub fn q_min(&self, obs: &Matrix, act: &Matrix) -> Result<Vec<f64>> {
        let x = obs.hcat(act);
        let a = self.critics[0].predict(&x)?;
        let b = self.critics[1].predict(&x)?;
        Ok(a.data.iter().zip(&b.data).map(|(p, q)| p.min(*q)).collect())
    }

    pub fn update(&mut self, batch: &SacBatch, rng: &mut RngStream) -> Result<SacDiagnostics> {
        let n = batch.obs.rows;
        if n == 0 {
            return Err(SlacError::Usage("SAC update on an empty batch".into()));
        }
        let (gamma, alpha) = (self.config.gamma, self.config.alpha);

        let next = sample_policy(&self.actor, self.act_dim, &batch.next_obs, rng)?;
        let next_x = batch.next_obs.hcat(&actions_matrix(&next, self.act_dim));
        let t1 = self.targets[0].predict(&next_x)?;
        let t2 = self.targets[1].predict(&next_x)?;
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let bootstrap = t1.data[i].min(t2.data[i]) - alpha * next[i].log_prob;
                let cont = if batch.done[i] { 0.0 } else { 1.0 };
                batch.reward[i] + gamma * cont * bootstrap
            })
            .collect();

        let x = batch.obs.hcat(&batch.act);
        let mut q_loss = 0.0;
        for k in 0..2 {
            let (q, cache) = self.critics[k].forward(&x)?;
            let mut g = Matrix::zeros(n, 1);
            for i in 0..n {
                let e = q.data[i] - y[i];
                q_loss += e * e / n as f64;
                g.data[i] = 2.0 * e / n as f64;
            }
            let (grads, _) = self.critics[k].backward(&cache, &g)?;
            self.critic_opts[k].step(&mut self.critics[k], &grads)?;
        }
        q_loss /= 2.0;

        let (out, actor_cache) = self.actor.forward(&batch.obs)?;
        let samples: Vec<SquashedSample> = (0..n)
            .map(|i| {
                let row = out.row(i);
                let noise: Vec<f64> = (0..self.act_dim).map(|_| rng.normal()).collect();
                squashed_gaussian_with_noise(&row[..self.act_dim], &row[self.act_dim..], &noise)
            })
            .collect();
        let pi_x = batch.obs.hcat(&actions_matrix(&samples, self.act_dim));
        let (q1, c1) = self.critics[0].forward(&pi_x)?;
        let (q2, c2) = self.critics[1].forward(&pi_x)?;
        let mut g1 = Matrix::zeros(n, 1);
        let mut g2 = Matrix::zeros(n, 1);
        let mut actor_loss = 0.0;
        let mut mean_log_prob = 0.0;
        for i in 0..n {
            let (qmin, pick_first) = if q1.data[i] <= q2.data[i] {
                (q1.data[i], true)
            } else {
                (q2.data[i], false)
            };
            actor_loss += (alpha * samples[i].log_prob - qmin) / n as f64;
            mean_log_prob += samples[i].log_prob / n as f64;
            if pick_first {
                g1.data[i] = -1.0 / n as f64;
            } else {
                g2.data[i] = -1.0 / n as f64;
            }
        }
        let dx1 = self.critics[0].backward_input(&c1, &g1)?;
        let dx2 = self.critics[1].backward_input(&c2, &g2)?;
        let mut d_out = Matrix::zeros(n, 2 * self.act_dim);
        for i in 0..n {
            let d_act: Vec<f64> = (0..self.act_dim)
                .map(|j| dx1.get(i, self.obs_dim + j) + dx2.get(i, self.obs_dim + j))
                .collect();
            let (d_mean, d_log_std) = samples[i].backward(&d_act, alpha / n as f64);
            let row = d_out.row_mut(i);
            row[..self.act_dim].copy_from_slice(&d_mean);
            row[self.act_dim..].copy_from_slice(&d_log_std);
        }
        let (actor_grads, _) = self.actor.backward(&actor_cache, &d_out)?;
        self.actor_opt.step(&mut self.actor, &actor_grads)?;

        for k in 0..2 {
            polyak(&mut self.targets[k], &self.critics[k], self.config.tau);
        }
        if !(q_loss.is_finite() && actor_loss.is_finite()) {
            return Err(SlacError::numerical(format!(
                "non-finite SAC loss (q_loss={q_loss}, actor_loss={actor_loss})"
            )));
        }
        Ok(SacDiagnostics {
            q_loss,
            actor_loss,
            log_prob: mean_log_prob,
        })
    }
}

fn actions_matrix(samples: &[SquashedSample], act_dim: usize) -> Matrix {
    let mut m = Matrix::zeros(samples.len(), act_dim);
    for (i, s) in samples.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&s.action);
    }
    m
}

fn sample_policy(actor: &Mlp, act_dim: usize, obs: &Matrix, rng: &mut RngStream) -> Result<Vec<SquashedSample>> {
    let out = actor.predict(obs)?;
    Ok((0..obs.rows)
        .map(|i| {
            let row = out.row(i);
            squashed_gaussian_sample(&row[..act_dim], &row[act_dim..], rng)
        })
        .collect())
}

/// Actions from a squashed-Gaussian actor whose output is `[mean, log_std]`.
pub fn act_batch(actor: &Mlp, act_dim: usize, obs: &Matrix, rng: Option<&mut RngStream>) -> Result<Matrix> {
    match rng {
        Some(rng) => Ok(actions_matrix(&sample_policy(actor, act_dim, obs, rng)?, act_dim)),
        None => {
            let out = actor.predict(obs)?;
            let mut m = Matrix::zeros(obs.rows, act_dim);
            for i in 0..obs.rows {
                for j in 0..act_dim {
                    m.set(i, j, out.get(i, j).tanh());
                }
            }
            Ok(m)
        }
    }
}

/// Fixed-capacity FIFO replay storage.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    next: usize,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::new(),
            capacity,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    /// Uniform sample with replacement.
    pub fn sample<'a>(&'a self, batch: usize, rng: &mut RngStream) -> Result<Vec<&'a T>> {
        if self.items.is_empty() {
            return Err(SlacError::Usage("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..batch).map(|_| &self.items[rng.index(self.items.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(gamma: f64, alpha: f64) -> SacConfig {
        SacConfig {
            hidden: vec![32, 32],
            lr: 3e-3,
            gamma,
            tau: 0.05,
            alpha,
        }
    }

    fn bandit_batch(rng: &mut RngStream, n: usize) -> SacBatch {
        let mut obs = Matrix::zeros(n, 2);
        let mut act = Matrix::zeros(n, 1);
        for i in 0..n {
            obs.set(i, 0, rng.uniform_range(-1.0, 1.0));
            obs.set(i, 1, rng.uniform_range(-1.0, 1.0));
            act.set(i, 0, rng.uniform_range(-1.0, 1.0));
        }
        SacBatch {
            next_obs: obs.clone(),
            reward: vec![1.0; n],
            done: vec![false; n],
            obs,
            act,
        }
    }

    #[test]
    fn myopic_critic_learns_constant_reward() {
        let mut rng = RngStream::new(0, "sac");
        let cfg = SacConfig {
            lr: 1e-3,
            ..config(0.0, 0.0)
        };
        let mut sac = ContinuousSac::new(2, 1, cfg, &mut rng);
        for _ in 0..3000 {
            let b = bandit_batch(&mut rng, 64);
            sac.update(&b, &mut rng).unwrap();
        }
        let b = bandit_batch(&mut rng, 64);
        let x = b.obs.hcat(&b.act);
        for c in &sac.critics {
            for q in c.predict(&x).unwrap().data {
                assert!((q - 1.0).abs() < 1e-2, "q = {q}");
            }
        }
    }

    #[test]
    fn actor_climbs_critic() {
        // Reward = action; the greedy action should saturate toward +1.
        let mut rng = RngStream::new(1, "sac");
        let mut sac = ContinuousSac::new(1, 1, config(0.0, 0.0), &mut rng);
        for _ in 0..800 {
            let mut b = bandit_batch(&mut rng, 64);
            b.obs = b.obs.columns(0, 1);
            b.next_obs = b.obs.clone();
            b.reward = b.act.data.clone();
            sac.update(&b, &mut rng).unwrap();
        }
        let a = sac.act(&[0.3], None).unwrap();
        assert!(a[0] > 0.8, "greedy action {}", a[0]);
    }

    #[test]
    fn done_cuts_bootstrap() {
        let mut rng = RngStream::new(2, "sac");
        let mut sac = ContinuousSac::new(2, 1, config(0.9, 0.0), &mut rng);
        for _ in 0..600 {
            let mut b = bandit_batch(&mut rng, 64);
            b.done = vec![true; 64];
            sac.update(&b, &mut rng).unwrap();
        }
        let b = bandit_batch(&mut rng, 32);
        for q in sac.q_min(&b.obs, &b.act).unwrap() {
            assert!((q - 1.0).abs() < 2e-2, "q = {q}");
        }
    }

    #[test]
    fn zero_alpha_update_is_reproducible() {
        let run = || {
            let mut rng = RngStream::new(5, "sac");
            let mut sac = ContinuousSac::new(2, 1, config(0.99, 0.0), &mut rng);
            for _ in 0..20 {
                let b = bandit_batch(&mut rng, 16);
                sac.update(&b, &mut rng).unwrap();
            }
            sac.actor
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn deterministic_action_is_tanh_mean() {
        let mut rng = RngStream::new(3, "sac");
        let sac = ContinuousSac::new(3, 2, config(0.9, 0.1), &mut rng);
        let o = [0.1, -0.4, 0.7];
        let out = sac.actor.forward_vec(&o).unwrap();
        let a = sac.act(&o, None).unwrap();
        assert_eq!(a, vec![out[0].tanh(), out[1].tanh()]);
    }

    #[test]
    fn replay_ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.len(), 3);
        let mut seen: Vec<i32> = (0..3).map(|i| *b.get(i)).collect();
        seen.sort();
        assert_eq!(seen, vec![2, 3, 4]);
        let empty: ReplayBuffer<i32> = ReplayBuffer::new(2);
        assert!(empty.sample(4, &mut RngStream::new(0, "b")).is_err());
    }
}
