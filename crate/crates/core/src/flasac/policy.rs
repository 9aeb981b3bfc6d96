use serde::{Deserialize, Serialize};

use super::critic::FactoredCritic;
use crate::error::{Result, SlacError};
use crate::numerics::{
    argmax, categorical_entropy, categorical_entropy_grad, gumbel_softmax, gumbel_softmax_backward, log_softmax,
    softmax, Adam, Checkpoint, Matrix, Mlp, RngStream,
};
use crate::skill::LatentAction;
use crate::world::{layout_hash, task_obs_layout};

pub const POLICY_KIND: &str = "task_policy";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Stochastic,
    Greedy,
}

/// Factorized categorical policy: a shared trunk with one `K`-way head per
/// latent dimension.
#[derive(Clone, Debug)]
pub struct TaskPolicy {
    pub net: Mlp,
    pub n: usize,
    pub k: usize,
    opt: Adam,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyDiagnostics {
    pub loss: f64,
    /// Mean over the batch of the summed per-head entropy.
    pub entropy: f64,
}

impl TaskPolicy {
    pub fn new(obs_dim: usize, n: usize, k: usize, hidden: &[usize], lr: f64, rng: &mut RngStream) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n * k);
        let net = Mlp::new(&sizes, rng);
        TaskPolicy {
            opt: Adam::new(&net, lr),
            net,
            n,
            k,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn logits(&self, obs: &Matrix) -> Result<Matrix> {
        self.net.predict(obs)
    }

    fn head<'a>(&self, row: &'a [f64], j: usize) -> &'a [f64] {
        &row[j * self.k..(j + 1) * self.k]
    }

    pub fn select_from_logits(&self, logits: &[f64], mode: SelectMode, rng: &mut RngStream) -> LatentAction {
        let codes = (0..self.n)
            .map(|j| {
                let l = self.head(logits, j);
                match mode {
                    SelectMode::Greedy => argmax(l),
                    SelectMode::Stochastic => rng.categorical(&softmax(l)),
                }
            })
            .collect();
        LatentAction::new(codes, self.k).expect("codes come from K-way heads")
    }

    pub fn select(&self, obs: &[f64], mode: SelectMode, rng: &mut RngStream) -> Result<LatentAction> {
        let logits = self.net.forward_vec(obs)?;
        Ok(self.select_from_logits(&logits, mode, rng))
    }

    /// Joint log-probability as the sum of per-head log-probabilities.
    pub fn log_prob(&self, logits: &[f64], z: &LatentAction) -> f64 {
        z.codes()
            .iter()
            .enumerate()
            .map(|(j, &c)| log_softmax(self.head(logits, j))[c])
            .sum()
    }

    pub fn entropy(&self, logits: &[f64]) -> f64 {
        (0..self.n).map(|j| categorical_entropy(self.head(logits, j))).sum()
    }

    /// One actor step: relaxed per-head samples feed the critic; loss is
    /// `-E[sum_i Q_i(o, B_i (.) z_hat)] - alpha * sum_j H(pi_j)`.
    pub fn update(
        &mut self,
        obs: &Matrix,
        critic: &FactoredCritic,
        alpha: f64,
        gumbel_tau: f64,
        rng: &mut RngStream,
    ) -> Result<PolicyDiagnostics> {
        let b = obs.rows;
        if b == 0 {
            return Err(SlacError::Usage("policy update on an empty batch".into()));
        }
        let (logits, cache) = self.net.forward(obs)?;
        let mut z_soft = Matrix::zeros(b, self.n * self.k);
        for r in 0..b {
            for j in 0..self.n {
                let (soft, _) = gumbel_softmax(self.head(logits.row(r), j), gumbel_tau, rng)?;
                z_soft.row_mut(r)[j * self.k..(j + 1) * self.k].copy_from_slice(&soft);
            }
        }
        let (q_mean, dq_dz) = critic.value_and_z_grad(obs, &z_soft)?;
        let mut d_logits = Matrix::zeros(b, self.n * self.k);
        let mut entropy = 0.0;
        for r in 0..b {
            for j in 0..self.n {
                let span = j * self.k..(j + 1) * self.k;
                let l = &logits.row(r)[span.clone()];
                let y = &z_soft.row(r)[span.clone()];
                let d_y: Vec<f64> = dq_dz.row(r)[span.clone()].iter().map(|v| -v).collect();
                let mut g = gumbel_softmax_backward(y, &d_y, gumbel_tau);
                for (gv, h) in g.iter_mut().zip(categorical_entropy_grad(l)) {
                    *gv -= alpha * h / b as f64;
                }
                entropy += categorical_entropy(l) / b as f64;
                d_logits.row_mut(r)[span].copy_from_slice(&g);
            }
        }
        let loss = -q_mean - alpha * entropy;
        if !loss.is_finite() {
            return Err(SlacError::numerical(format!("non-finite actor loss {loss}")));
        }
        let (grads, _) = self.net.backward(&cache, &d_logits)?;
        self.opt.step(&mut self.net, &grads)?;
        Ok(PolicyDiagnostics { loss, entropy })
    }

    pub fn to_checkpoint(&self, n_landmarks: usize, adjacency: &[Vec<u8>]) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set_meta("kind", POLICY_KIND);
        c.set_meta("n_agents", self.n as u64);
        c.set_meta("k", self.k as u64);
        c.set_meta("n_landmarks", n_landmarks as u64);
        c.set_meta("obs_layout", layout_hash(&task_obs_layout(self.n, n_landmarks)));
        c.set_meta("adjacency", serde_json::to_value(adjacency).expect("rows serialize"));
        c.push_mlp("policy", &self.net);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint, lr: f64) -> Result<Self> {
        if c.meta_str("kind")? != POLICY_KIND {
            return Err(SlacError::Checkpoint(format!(
                "expected a {POLICY_KIND} checkpoint, found `{}`",
                c.meta_str("kind")?
            )));
        }
        let n = c.meta_u64("n_agents")? as usize;
        let k = c.meta_u64("k")? as usize;
        let l = c.meta_u64("n_landmarks")? as usize;
        if c.meta_str("obs_layout")? != layout_hash(&task_obs_layout(n, l)) {
            return Err(SlacError::Compatibility("task observation layout differs from this build".into()));
        }
        let net = c.mlp("policy")?;
        if net.output_dim() != n * k {
            return Err(SlacError::Checkpoint("policy head count disagrees with metadata".into()));
        }
        Ok(TaskPolicy {
            opt: Adam::new(&net, lr),
            net,
            n,
            k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flasac::AdjacencyMatrix;

    fn policy_with_logits(logits: Vec<f64>, n: usize, k: usize) -> TaskPolicy {
        // Zero weights and the desired logits as output bias.
        let mut rng = RngStream::new(0, "p");
        let mut p = TaskPolicy::new(2, n, k, &[4], 1e-3, &mut rng);
        let last = p.net.layers.len() - 1;
        p.net.layers[last].weight.data.iter_mut().for_each(|w| *w = 0.0);
        p.net.layers[last].bias = logits;
        p
    }

    #[test]
    fn greedy_picks_argmax_per_head() {
        let p = policy_with_logits(vec![10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 0.0], 2, 4);
        let z = p.select(&[0.1, 0.2], SelectMode::Greedy, &mut RngStream::new(0, "s")).unwrap();
        assert_eq!(z.codes(), &[0, 2]);
    }

    #[test]
    fn joint_log_prob_is_sum_of_heads() {
        let p = policy_with_logits(vec![1.0, 0.0, -1.0, 0.5, 0.2, 0.3], 2, 3);
        let logits = p.net.forward_vec(&[0.0, 0.0]).unwrap();
        let z = LatentAction::new(vec![2, 0], 3).unwrap();
        let expect = log_softmax(&logits[..3])[2] + log_softmax(&logits[3..])[0];
        assert!((p.log_prob(&logits, &z) - expect).abs() < 1e-15);
    }

    #[test]
    fn huge_alpha_drives_heads_uniform() {
        let mut rng = RngStream::new(3, "p");
        let mut p = policy_with_logits(vec![3.0, -1.0, 0.0, 2.0], 1, 4);
        let critic = FactoredCritic::new(2, 4, AdjacencyMatrix::identity(1), &[8], 1e-3, &mut rng);
        let obs = Matrix::from_vec(8, 2, (0..16).map(|i| i as f64 / 16.0).collect()).unwrap();
        let mut d = PolicyDiagnostics::default();
        for _ in 0..2000 {
            d = p.update(&obs, &critic, 100.0, 1.0, &mut rng).unwrap();
        }
        assert!((d.entropy - 4f64.ln()).abs() < 0.05, "entropy {}", d.entropy);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = policy_with_logits(vec![0.1; 8], 2, 4);
        let rows = AdjacencyMatrix::identity(2).to_rows();
        let c = p.to_checkpoint(4, &rows);
        let back = TaskPolicy::from_checkpoint(&Checkpoint::from_bytes(&c.to_bytes()).unwrap(), 1e-3).unwrap();
        assert_eq!(back.net, p.net);
    }
}
