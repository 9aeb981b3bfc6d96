use serde::{Deserialize, Serialize};

use crate::error::{Result, SlacError};
use crate::numerics::RngStream;

/// One categorical code per entity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentAction {
    codes: Vec<usize>,
    k: usize,
}

impl LatentAction {
    pub fn new(codes: Vec<usize>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(SlacError::config(format!("latent cardinality must be at least 2, got {k}")));
        }
        if let Some(&c) = codes.iter().find(|&&c| c >= k) {
            return Err(SlacError::Usage(format!("latent code {c} out of range for K={k}")));
        }
        Ok(LatentAction { codes, k })
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.codes.len()
    }

    /// Concatenated one-hot blocks, length `N * K`.
    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.codes.len() * self.k];
        for (i, &c) in self.codes.iter().enumerate() {
            v[i * self.k + c] = 1.0;
        }
        v
    }
}

/// Independent uniform draw of every coordinate.
pub fn sample_skill(n: usize, k: usize, rng: &mut RngStream) -> LatentAction {
    LatentAction {
        codes: (0..n).map(|_| rng.index(k)).collect(),
        k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_layout() {
        let z = LatentAction::new(vec![2, 0, 3], 4).unwrap();
        let h = z.one_hot();
        assert_eq!(h.len(), 12);
        assert_eq!(h.iter().sum::<f64>(), 3.0);
        assert_eq!((h[2], h[4], h[11]), (1.0, 1.0, 1.0));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(LatentAction::new(vec![4], 4).is_err());
        assert!(LatentAction::new(vec![0], 1).is_err());
    }

    #[test]
    fn seeded_sequence_repeats() {
        let a: Vec<_> = (0..5).map({
            let mut r = RngStream::new(4, "z");
            move |_| sample_skill(5, 4, &mut r)
        }).collect();
        let b: Vec<_> = (0..5).map({
            let mut r = RngStream::new(4, "z");
            move |_| sample_skill(5, 4, &mut r)
        }).collect();
        assert_eq!(a, b);
    }
}
