use super::adjacency::AdjacencyMatrix;
use crate::error::{Result, SlacError};
use crate::numerics::{polyak, Adam, Matrix, Mlp, RngStream};

/// One twin-Q head per reward term. Head `i` sees the observation and only
/// the latent blocks its adjacency row selects; the rest are zeroed.
#[derive(Clone, Debug)]
pub struct FactoredCritic {
    pub adjacency: AdjacencyMatrix,
    pub heads: Vec<[Mlp; 2]>,
    pub targets: Vec<[Mlp; 2]>,
    opts: Vec<[Adam; 2]>,
    obs_dim: usize,
    k: usize,
}

impl FactoredCritic {
    pub fn new(
        obs_dim: usize,
        k: usize,
        adjacency: AdjacencyMatrix,
        hidden: &[usize],
        lr: f64,
        rng: &mut RngStream,
    ) -> Self {
        let mut sizes = vec![obs_dim + adjacency.n() * k];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let heads: Vec<[Mlp; 2]> = (0..adjacency.m())
            .map(|i| {
                let mut r = rng.child(&format!("head/{i}"));
                [Mlp::new(&sizes, &mut r), Mlp::new(&sizes, &mut r)]
            })
            .collect();
        let opts = heads
            .iter()
            .map(|h| [Adam::new(&h[0], lr), Adam::new(&h[1], lr)])
            .collect();
        FactoredCritic {
            targets: heads.clone(),
            heads,
            opts,
            adjacency,
            obs_dim,
            k,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        for o in self.opts.iter_mut().flatten() {
            o.lr = lr;
        }
    }

    pub fn m(&self) -> usize {
        self.adjacency.m()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// `[o ; B_i (.) z]` row by row; `z` holds `N` blocks of `K` (one-hot or relaxed).
    pub fn head_input(&self, i: usize, obs: &Matrix, z: &Matrix) -> Matrix {
        let mut zm = z.clone();
        for r in 0..zm.rows {
            let row = zm.row_mut(r);
            for (j, &keep) in self.adjacency.row(i).iter().enumerate() {
                if !keep {
                    row[j * self.k..(j + 1) * self.k].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        obs.hcat(&zm)
    }

    fn twin_min(nets: &[Mlp; 2], x: &Matrix) -> Result<Vec<f64>> {
        let a = nets[0].predict(x)?;
        let b = nets[1].predict(x)?;
        Ok(a.data.iter().zip(&b.data).map(|(p, q)| p.min(*q)).collect())
    }

    /// Online twin-min value of head `i` for a single observation.
    pub fn masked_q(&self, i: usize, obs: &[f64], z: &[f64]) -> Result<f64> {
        if i >= self.m() {
            return Err(SlacError::Usage(format!("critic head {i} out of range for {} heads", self.m())));
        }
        let x = self.head_input(i, &Matrix::row_vector(obs), &Matrix::row_vector(z));
        Ok(Self::twin_min(&self.heads[i], &x)?[0])
    }

    /// `out[i][b]`: online twin-min of head `i` on sample `b`.
    pub fn values(&self, obs: &Matrix, z: &Matrix) -> Result<Vec<Vec<f64>>> {
        (0..self.m())
            .map(|i| Self::twin_min(&self.heads[i], &self.head_input(i, obs, z)))
            .collect()
    }

    pub fn target_values(&self, obs: &Matrix, z: &Matrix) -> Result<Vec<Vec<f64>>> {
        (0..self.m())
            .map(|i| Self::twin_min(&self.targets[i], &self.head_input(i, obs, z)))
            .collect()
    }

    /// One MSE step of every twin toward `targets[i]`; returns per-head loss.
    pub fn regress(&mut self, obs: &Matrix, z: &Matrix, targets: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = obs.rows as f64;
        let mut losses = Vec::with_capacity(self.m());
        for i in 0..self.m() {
            if targets[i].iter().any(|v| !v.is_finite()) {
                return Err(SlacError::numerical(format!("non-finite critic target for head {i}")));
            }
            let x = self.head_input(i, obs, z);
            let mut loss = 0.0;
            for t in 0..2 {
                let (q, cache) = self.heads[i][t].forward(&x)?;
                let mut g = Matrix::zeros(q.rows, 1);
                for b in 0..q.rows {
                    let e = q.data[b] - targets[i][b];
                    loss += e * e / n / 2.0;
                    g.data[b] = 2.0 * e / n;
                }
                let (grads, _) = self.heads[i][t].backward(&cache, &g)?;
                self.opts[i][t].step(&mut self.heads[i][t], &grads)?;
            }
            losses.push(loss);
        }
        Ok(losses)
    }

    /// Mean over the batch of `sum_i min_t Q_i^t(o, B_i (.) z)` and its
    /// gradient with respect to `z`.
    pub fn value_and_z_grad(&self, obs: &Matrix, z: &Matrix) -> Result<(f64, Matrix)> {
        let n = obs.rows;
        let mut total = 0.0;
        let mut dz = Matrix::zeros(n, z.cols);
        for i in 0..self.m() {
            let x = self.head_input(i, obs, z);
            let (q1, c1) = self.heads[i][0].forward(&x)?;
            let (q2, c2) = self.heads[i][1].forward(&x)?;
            let mut g1 = Matrix::zeros(n, 1);
            let mut g2 = Matrix::zeros(n, 1);
            for b in 0..n {
                if q1.data[b] <= q2.data[b] {
                    total += q1.data[b] / n as f64;
                    g1.data[b] = 1.0 / n as f64;
                } else {
                    total += q2.data[b] / n as f64;
                    g2.data[b] = 1.0 / n as f64;
                }
            }
            let dx1 = self.heads[i][0].backward_input(&c1, &g1)?;
            let dx2 = self.heads[i][1].backward_input(&c2, &g2)?;
            for b in 0..n {
                for (j, &keep) in self.adjacency.row(i).iter().enumerate() {
                    if !keep {
                        continue;
                    }
                    for c in j * self.k..(j + 1) * self.k {
                        let col = self.obs_dim + c;
                        let v = dz.get(b, c) + dx1.get(b, col) + dx2.get(b, col);
                        dz.set(b, c, v);
                    }
                }
            }
        }
        Ok((total, dz))
    }

    pub fn soft_update(&mut self, tau: f64) {
        for (t, h) in self.targets.iter_mut().zip(&self.heads) {
            polyak(&mut t[0], &h[0], tau);
            polyak(&mut t[1], &h[1], tau);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onehot(codes: &[usize], k: usize) -> Vec<f64> {
        let mut v = vec![0.0; codes.len() * k];
        for (j, &c) in codes.iter().enumerate() {
            v[j * k + c] = 1.0;
        }
        v
    }

    #[test]
    fn identity_heads_ignore_other_dimensions() {
        let mut rng = RngStream::new(0, "critic");
        let c = FactoredCritic::new(3, 4, AdjacencyMatrix::identity(3), &[16], 1e-3, &mut rng);
        let o = [0.2, -0.1, 0.7];
        let base = c.masked_q(1, &o, &onehot(&[0, 2, 3], 4)).unwrap();
        let flipped = c.masked_q(1, &o, &onehot(&[3, 2, 0], 4)).unwrap();
        assert_eq!(base.to_bits(), flipped.to_bits());
        let changed = c.masked_q(1, &o, &onehot(&[0, 1, 3], 4)).unwrap();
        assert_ne!(base, changed);
    }

    #[test]
    fn z_gradient_is_zero_outside_the_mask() {
        let mut rng = RngStream::new(1, "critic");
        let b = AdjacencyMatrix::from_rows(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let c = FactoredCritic::new(2, 3, b, &[8], 1e-3, &mut rng);
        let obs = Matrix::from_vec(1, 2, vec![0.3, 0.4]).unwrap();
        let z = Matrix::row_vector(&[0.2, 0.5, 0.3, 0.1, 0.1, 0.8]);
        let (_, dz) = c.value_and_z_grad(&obs, &z).unwrap();
        // Head 0 only sees block 0; head 1 only block 1. Dropping head 1 must
        // leave block 0's gradient unchanged.
        let solo = FactoredCritic {
            adjacency: AdjacencyMatrix::from_rows(vec![vec![1, 0]]).unwrap(),
            heads: vec![c.heads[0].clone()],
            targets: vec![c.targets[0].clone()],
            opts: vec![c.opts[0].clone()],
            obs_dim: 2,
            k: 3,
        };
        let (_, d0) = solo.value_and_z_grad(&obs, &z).unwrap();
        assert_eq!(&dz.data[..3], &d0.data[..3]);
        assert_eq!(&d0.data[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn myopic_regression_hits_targets() {
        let mut rng = RngStream::new(2, "critic");
        let mut c = FactoredCritic::new(2, 2, AdjacencyMatrix::identity(2), &[16], 3e-3, &mut rng);
        let obs = Matrix::from_vec(4, 2, vec![0.0, 1.0, 1.0, 0.0, 0.5, 0.5, -1.0, 0.2]).unwrap();
        let z = Matrix::from_rows(&[
            onehot(&[0, 1], 2),
            onehot(&[1, 0], 2),
            onehot(&[1, 1], 2),
            onehot(&[0, 0], 2),
        ])
        .unwrap();
        let targets = vec![vec![1.0, -1.0, 0.5, 0.0], vec![0.0, 1.0, 1.0, -0.5]];
        let mut loss = vec![];
        for _ in 0..2000 {
            loss = c.regress(&obs, &z, &targets).unwrap();
        }
        assert!(loss.iter().all(|l| *l < 1e-3), "{loss:?}");
    }
}
