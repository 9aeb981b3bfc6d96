use serde::{Deserialize, Serialize};

use crate::error::{Result, SlacError};
use crate::numerics::{argmax, log_softmax, softmax, Adam, Matrix, Mlp, RngStream};
use crate::world::{complement_state, quantize_region, WorldState};

/// Whether discriminator outputs enter the reward as log-probabilities or
/// raw probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    #[default]
    Log,
    Raw,
}

impl ScoreMode {
    pub fn score(self, log_prob: f64) -> f64 {
        match self {
            ScoreMode::Log => log_prob,
            ScoreMode::Raw => log_prob.exp(),
        }
    }
}

/// Hand-built per-entity predictor: the commanded quadrant gets `p_hit`,
/// the others share the remainder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedDiscriminator {
    pub k: usize,
    pub p_hit: f64,
}

impl FixedDiscriminator {
    pub fn new(k: usize, p_hit: f64) -> Result<Self> {
        if k != 4 {
            return Err(SlacError::config(format!(
                "the quadrant discriminator needs K=4 regions, got {k}"
            )));
        }
        if !(p_hit > 0.0 && p_hit < 1.0) {
            return Err(SlacError::config(format!("p_hit must lie in (0, 1), got {p_hit}")));
        }
        Ok(FixedDiscriminator { k, p_hit })
    }

    pub fn log_prob(&self, position: [f64; 2], z_i: usize) -> f64 {
        if quantize_region(position) == z_i {
            self.p_hit.ln()
        } else {
            ((1.0 - self.p_hit) / (self.k - 1) as f64).ln()
        }
    }
}

/// Small softmax classifier trained by cross-entropy.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub net: Mlp,
    opt: Adam,
}

impl Classifier {
    pub fn new(input: usize, hidden: &[usize], classes: usize, lr: f64, rng: &mut RngStream) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        let net = Mlp::new(&sizes, rng);
        Classifier {
            opt: Adam::new(&net, lr),
            net,
        }
    }

    pub fn log_probs(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = self.net.predict(x)?;
        for i in 0..out.rows {
            let lp = log_softmax(out.row(i));
            out.row_mut(i).copy_from_slice(&lp);
        }
        Ok(out)
    }

    /// One Adam step on mean cross-entropy; returns the pre-step loss.
    pub fn train_step(&mut self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        if x.rows == 0 || x.rows != labels.len() {
            return Err(SlacError::Usage("classifier batch is empty or mislabeled".into()));
        }
        let n = x.rows as f64;
        let (logits, cache) = self.net.forward(x)?;
        let mut grad = Matrix::zeros(logits.rows, logits.cols);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let p = softmax(logits.row(i));
            loss -= p[y].max(f64::MIN_POSITIVE).ln() / n;
            let g = grad.row_mut(i);
            for c in 0..p.len() {
                g[c] = (p[c] - if c == y { 1.0 } else { 0.0 }) / n;
            }
        }
        if !loss.is_finite() {
            return Err(SlacError::numerical(format!("non-finite classifier loss {loss}")));
        }
        let (grads, _) = self.net.backward(&cache, &grad)?;
        self.opt.step(&mut self.net, &grads)?;
        Ok(loss)
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Ok(0.0);
        }
        let out = self.net.predict(x)?;
        let hits = labels
            .iter()
            .enumerate()
            .filter(|(i, &y)| argmax(out.row(*i)) == y)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// Learned per-entity classifiers predicting `z^i` from every other entity.
#[derive(Clone, Debug)]
pub struct DisentangleDiscriminator {
    pub k: usize,
    pub n: usize,
    pub classifiers: Vec<Classifier>,
}

impl DisentangleDiscriminator {
    pub fn new(n: usize, k: usize, hidden: &[usize], lr: f64, rng: &mut RngStream) -> Self {
        let classifiers = if n < 2 {
            Vec::new()
        } else {
            (0..n)
                .map(|i| Classifier::new(4 * (n - 1), hidden, k, lr, &mut rng.child(&format!("q_psi/{i}"))))
                .collect()
        };
        DisentangleDiscriminator { k, n, classifiers }
    }

    fn features(states: &[&WorldState], i: usize) -> Result<Matrix> {
        let rows = states
            .iter()
            .map(|s| complement_state(s, i))
            .collect::<Result<Vec<_>>>()?;
        let cols = rows.first().map_or(0, |r| r.len());
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    /// `out[b][i] = log q(z_b^i | s_b^{not i})`. A lone entity has nothing to
    /// be predicted from, so it scores at chance.
    pub fn log_probs(&self, states: &[&WorldState], codes: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
        let chance = (1.0 / self.k as f64).ln();
        let mut out = vec![vec![chance; self.n]; states.len()];
        for (i, clf) in self.classifiers.iter().enumerate() {
            let lp = clf.log_probs(&Self::features(states, i)?)?;
            for (b, row) in out.iter_mut().enumerate() {
                row[i] = lp.get(b, codes[b][i]);
            }
        }
        Ok(out)
    }

    /// One step per entity classifier; returns the mean cross-entropy.
    pub fn update(&mut self, states: &[&WorldState], codes: &[&[usize]]) -> Result<f64> {
        if states.is_empty() {
            return Err(SlacError::Usage("disentanglement update on an empty batch".into()));
        }
        if self.classifiers.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for i in 0..self.classifiers.len() {
            let x = Self::features(states, i)?;
            let labels: Vec<usize> = codes.iter().map(|c| c[i]).collect();
            total += self.classifiers[i].train_step(&x, &labels)?;
        }
        Ok(total / self.classifiers.len() as f64)
    }

    /// Argmax accuracy over all entities.
    pub fn accuracy(&self, states: &[&WorldState], codes: &[&[usize]]) -> Result<Option<f64>> {
        if self.classifiers.is_empty() || states.is_empty() {
            return Ok(None);
        }
        let mut acc = 0.0;
        for (i, clf) in self.classifiers.iter().enumerate() {
            let labels: Vec<usize> = codes.iter().map(|c| c[i]).collect();
            acc += clf.accuracy(&Self::features(states, i)?, &labels)?;
        }
        Ok(Some(acc / self.classifiers.len() as f64))
    }
}
