//! Small explicit MDPs over factored latent actions, used as exact oracles
//! for the critic decomposition.

use crate::error::{Result, SlacError};
use crate::flasac::{AdjacencyMatrix, FactoredCritic};
use crate::numerics::{Matrix, RngStream};

/// Explicit MDP with joint actions `z = (z_1..z_N)`, `z_j` in `0..K`, a fixed
/// stochastic policy and one reward tensor per term.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n: usize,
    pub k: usize,
    /// `p[s][a][s']` with joint action index `a`.
    pub p: Vec<Vec<Vec<f64>>>,
    /// `r[i][s][a]`.
    pub r: Vec<Vec<Vec<f64>>>,
    /// `policy[s][a]`, the distribution evaluated by [`value_iteration`].
    pub policy: Vec<Vec<f64>>,
    pub gamma: f64,
}

/// Per-term and summed action values, `q[s][a]`.
#[derive(Clone, Debug)]
pub struct TabularQ {
    pub per_term: Vec<Vec<Vec<f64>>>,
    pub summed: Vec<Vec<f64>>,
}

impl TabularMdp {
    pub fn n_actions(&self) -> usize {
        self.k.pow(self.n as u32)
    }

    pub fn m(&self) -> usize {
        self.r.len()
    }

    /// Codes of joint action `a`, dimension 0 most significant.
    pub fn codes(&self, a: usize) -> Vec<usize> {
        let mut codes = vec![0; self.n];
        let mut rest = a;
        for j in (0..self.n).rev() {
            codes[j] = rest % self.k;
            rest /= self.k;
        }
        codes
    }

    pub fn summed_reward(&self) -> Vec<Vec<f64>> {
        (0..self.n_states)
            .map(|s| (0..self.n_actions()).map(|a| self.r.iter().map(|ri| ri[s][a]).sum()).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let na = self.n_actions();
        let shape_ok = self.p.len() == self.n_states
            && self.p.iter().all(|ps| ps.len() == na && ps.iter().all(|row| row.len() == self.n_states))
            && self.r.iter().all(|ri| ri.len() == self.n_states && ri.iter().all(|row| row.len() == na))
            && self.policy.len() == self.n_states
            && self.policy.iter().all(|row| row.len() == na);
        if !shape_ok {
            return Err(SlacError::config("tabular MDP tensors disagree with its sizes"));
        }
        let stochastic = |row: &Vec<f64>| row.iter().all(|v| *v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !self.p.iter().flatten().all(stochastic) || !self.policy.iter().all(stochastic) {
            return Err(SlacError::config("tabular MDP rows must be distributions"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(SlacError::config("tabular MDP discount must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Random instance whose state is a product of per-dimension substates.
    ///
    /// Dimension `j` moves only under its own code, term `j` reads only its
    /// own substate and code, and the policy over `z_j` sees only substate
    /// `j`, so each term's value depends on `(s, z_j)` alone and the
    /// identity adjacency is exact.
    pub fn random_factored(n: usize, sub: usize, k: usize, gamma: f64, rng: &mut RngStream) -> Self {
        let n_states = sub.pow(n as u32);
        let n_actions = k.pow(n as u32);
        let dist = |len: usize, rng: &mut RngStream| {
            let w: Vec<f64> = (0..len).map(|_| rng.uniform() + 0.05).collect();
            let t: f64 = w.iter().sum();
            w.into_iter().map(|v| v / t).collect::<Vec<f64>>()
        };
        // local_p[j][s_j][z_j][s_j'], local_r[j][s_j][z_j], local_pi[j][s_j][z_j]
        let local_p: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
            .map(|_| (0..sub).map(|_| (0..k).map(|_| dist(sub, rng)).collect()).collect())
            .collect();
        let local_r: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..sub).map(|_| (0..k).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).collect())
            .collect();
        let local_pi: Vec<Vec<Vec<f64>>> = (0..n).map(|_| (0..sub).map(|_| dist(k, rng)).collect()).collect();

        let digits = |mut x: usize, base: usize| {
            let mut d = vec![0; n];
            for j in (0..n).rev() {
                d[j] = x % base;
                x /= base;
            }
            d
        };
        let mut p = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
        let mut r = vec![vec![vec![0.0; n_actions]; n_states]; n];
        let mut policy = vec![vec![0.0; n_actions]; n_states];
        for s in 0..n_states {
            let ss = digits(s, sub);
            for a in 0..n_actions {
                let zz = digits(a, k);
                for s2 in 0..n_states {
                    let tt = digits(s2, sub);
                    p[s][a][s2] = (0..n).map(|j| local_p[j][ss[j]][zz[j]][tt[j]]).product();
                }
                for j in 0..n {
                    r[j][s][a] = local_r[j][ss[j]][zz[j]];
                }
                policy[s][a] = (0..n).map(|j| local_pi[j][ss[j]][zz[j]]).product();
            }
        }
        TabularMdp {
            n_states,
            n,
            k,
            p,
            r,
            policy,
            gamma,
        }
    }

    /// One-hot state rows and one-hot latent rows for every `(s, a)` pair,
    /// in `s`-major order.
    pub fn enumerate(&self) -> (Matrix, Matrix) {
        let rows = self.n_states * self.n_actions();
        let mut obs = Matrix::zeros(rows, self.n_states);
        let mut z = Matrix::zeros(rows, self.n * self.k);
        for s in 0..self.n_states {
            for a in 0..self.n_actions() {
                let row = s * self.n_actions() + a;
                obs.set(row, s, 1.0);
                for (j, c) in self.codes(a).into_iter().enumerate() {
                    z.set(row, j * self.k + c, 1.0);
                }
            }
        }
        (obs, z)
    }

    /// `r + gamma * P * (pi . q_next)` for one reward tensor.
    pub fn backup(&self, r: &[Vec<f64>], q_next: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let v: Vec<f64> = (0..self.n_states)
            .map(|s| self.policy[s].iter().zip(&q_next[s]).map(|(p, q)| p * q).sum())
            .collect();
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions())
                    .map(|a| r[s][a] + self.gamma * self.p[s][a].iter().zip(&v).map(|(p, v)| p * v).sum::<f64>())
                    .collect()
            })
            .collect()
    }
}

fn evaluate_term(mdp: &TabularMdp, r: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; mdp.n_actions()]; mdp.n_states];
    loop {
        let next = mdp.backup(r, &q);
        let delta = next
            .iter()
            .flatten()
            .zip(q.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if delta < tol {
            return q;
        }
    }
}

/// Policy evaluation for the summed reward and, independently, for every
/// term, each iterated until the sup-norm change drops below `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> TabularQ {
    TabularQ {
        per_term: mdp.r.iter().map(|ri| evaluate_term(mdp, ri, tol)).collect(),
        summed: evaluate_term(mdp, &mdp.summed_reward(), tol),
    }
}

/// Schedule for fitting a [`FactoredCritic`] to an MDP by exact fitted
/// evaluation: every round regresses all heads on enumerated expected
/// targets from the target heads, then copies them. The step size decays
/// geometrically to `lr * final_lr_ratio`.
#[derive(Clone, Copy, Debug)]
pub struct CriticFit {
    pub hidden: usize,
    pub lr: f64,
    pub rounds: usize,
    pub steps_per_round: usize,
    pub final_lr_ratio: f64,
}

impl Default for CriticFit {
    fn default() -> Self {
        CriticFit {
            hidden: 32,
            lr: 3e-3,
            rounds: 120,
            steps_per_round: 25,
            final_lr_ratio: 0.02,
        }
    }
}

/// Train an identity-adjacency critic on the enumerated transitions of a
/// factored MDP; returns the per-head twin-min values as `q[i][s][a]`.
pub fn fit_factored_critic(mdp: &TabularMdp, fit: &CriticFit, rng: &mut RngStream) -> Result<Vec<Vec<Vec<f64>>>> {
    mdp.validate()?;
    let (obs, z) = mdp.enumerate();
    let na = mdp.n_actions();
    let mut critic = FactoredCritic::new(
        mdp.n_states,
        mdp.k,
        AdjacencyMatrix::identity(mdp.n),
        &[fit.hidden, fit.hidden],
        fit.lr,
        rng,
    );
    let reshape = |flat: &[f64]| -> Vec<Vec<f64>> { flat.chunks(na).map(|c| c.to_vec()).collect() };
    for round in 0..fit.rounds {
        let frac = round as f64 / fit.rounds.max(2).saturating_sub(1) as f64;
        critic.set_lr(fit.lr * fit.final_lr_ratio.powf(frac));
        let q_next = critic.target_values(&obs, &z)?;
        let targets: Vec<Vec<f64>> = (0..mdp.m())
            .map(|i| mdp.backup(&mdp.r[i], &reshape(&q_next[i])).concat())
            .collect();
        for _ in 0..fit.steps_per_round {
            critic.regress(&obs, &z, &targets)?;
        }
        critic.soft_update(1.0);
    }
    Ok(critic.values(&obs, &z)?.iter().map(|q| reshape(q)).collect())
}
