//! Categorical and squashed-Gaussian distributions with their gradients.

use super::rng::RngStream;
use crate::error::{Result, SlacError};

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// `H = -sum p log p` with `p = softmax(logits)`.
pub fn categorical_entropy(logits: &[f64]) -> f64 {
    let logp = log_softmax(logits);
    -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>()
}

/// Gradient of [`categorical_entropy`] with respect to the logits:
/// `dH/dl_k = -p_k (log p_k + H)`.
pub fn categorical_entropy_grad(logits: &[f64]) -> Vec<f64> {
    let logp = log_softmax(logits);
    let h = -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>();
    logp.iter().map(|lp| -lp.exp() * (lp + h)).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Relaxed one-hot sample `softmax((log pi + g) / tau)` for given Gumbel noise.
pub fn gumbel_softmax_with_noise(logits: &[f64], noise: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(SlacError::config(format!("Gumbel-softmax temperature must be positive, got {tau}")));
    }
    if logits.len() < 2 || noise.len() != logits.len() {
        return Err(SlacError::config("Gumbel-softmax needs K >= 2 logits and matching noise"));
    }
    let logp = log_softmax(logits);
    let scaled: Vec<f64> = logp.iter().zip(noise).map(|(l, g)| (l + g) / tau).collect();
    Ok(softmax(&scaled))
}

/// Non-straight-through Gumbel-softmax sample; returns `(relaxed, noise)`.
pub fn gumbel_softmax(logits: &[f64], tau: f64, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(tau > 0.0) {
        return Err(SlacError::config(format!("Gumbel-softmax temperature must be positive, got {tau}")));
    }
    let noise: Vec<f64> = (0..logits.len()).map(|_| rng.gumbel()).collect();
    let soft = gumbel_softmax_with_noise(logits, &noise, tau)?;
    Ok((soft, noise))
}

/// Vector-Jacobian product of the relaxed sample with respect to the logits.
///
/// The log-softmax inside the relaxation drops out because softmax is
/// shift-invariant, leaving `(1/tau) * y * (d - <d, y>)`.
pub fn gumbel_softmax_backward(soft: &[f64], d_soft: &[f64], tau: f64) -> Vec<f64> {
    let dot: f64 = soft.iter().zip(d_soft).map(|(y, d)| y * d).sum();
    soft.iter().zip(d_soft).map(|(y, d)| y * (d - dot) / tau).collect()
}

/// `log(1 - tanh(u)^2)` via `2 (log 2 - u - softplus(-2u))`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// One draw from a tanh-squashed diagonal Gaussian, with what the backward
/// pass needs.
#[derive(Clone, Debug)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub pre_tanh: Vec<f64>,
    pub noise: Vec<f64>,
    pub std: Vec<f64>,
    /// Whether the raw log-std was inside the clamp range (gradient passes).
    pub log_std_active: Vec<bool>,
}

/// Sample with externally supplied standard-normal noise.
pub fn squashed_gaussian_with_noise(mean: &[f64], log_std: &[f64], noise: &[f64]) -> SquashedSample {
    let d = mean.len();
    let mut action = Vec::with_capacity(d);
    let mut pre_tanh = Vec::with_capacity(d);
    let mut std = Vec::with_capacity(d);
    let mut active = Vec::with_capacity(d);
    let mut log_prob = 0.0;
    for j in 0..d {
        let raw = log_std[j];
        let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
        active.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
        let s = ls.exp();
        let u = mean[j] + s * noise[j];
        log_prob += -0.5 * noise[j] * noise[j] - ls - HALF_LOG_2PI - log_one_minus_tanh_sq(u);
        action.push(u.tanh());
        pre_tanh.push(u);
        std.push(s);
    }
    SquashedSample {
        action,
        log_prob,
        pre_tanh,
        noise: noise.to_vec(),
        std,
        log_std_active: active,
    }
}

pub fn squashed_gaussian_sample(mean: &[f64], log_std: &[f64], rng: &mut RngStream) -> SquashedSample {
    let noise: Vec<f64> = (0..mean.len()).map(|_| rng.normal()).collect();
    squashed_gaussian_with_noise(mean, log_std, &noise)
}

impl SquashedSample {
    /// Reparameterized gradients of `<d_action, action> + d_log_prob * log_prob`
    /// with respect to `(mean, raw log_std)`.
    pub fn backward(&self, d_action: &[f64], d_log_prob: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.action.len();
        let mut d_mean = vec![0.0; d];
        let mut d_log_std = vec![0.0; d];
        for j in 0..d {
            let a = self.action[j];
            // d action/du = 1 - tanh^2; d log_prob/du = 2 tanh(u).
            let du = d_action[j] * (1.0 - a * a) + d_log_prob * 2.0 * a;
            d_mean[j] = du;
            if self.log_std_active[j] {
                // u = mean + exp(ls) * eps, and log_prob carries -ls directly.
                d_log_std[j] = du * self.std[j] * self.noise[j] - d_log_prob;
            }
        }
        (d_mean, d_log_std)
    }
}
