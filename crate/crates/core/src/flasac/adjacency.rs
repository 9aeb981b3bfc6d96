use serde::{Deserialize, Serialize};

use crate::error::{Result, SlacError};

/// `B[i][j]` is set iff reward term `i` depends on latent dimension `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct AdjacencyMatrix {
    rows: Vec<Vec<bool>>,
}

impl AdjacencyMatrix {
    pub fn identity(n: usize) -> Self {
        AdjacencyMatrix {
            rows: (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect(),
        }
    }

    pub fn all_ones(m: usize, n: usize) -> Self {
        AdjacencyMatrix {
            rows: vec![vec![true; n]; m],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(SlacError::config("adjacency matrix needs at least one row"));
        }
        let n = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(SlacError::config(format!(
                    "adjacency row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|&&v| v > 1) {
                return Err(SlacError::config(format!("adjacency row {i} holds {v}; entries must be 0 or 1")));
            }
            if r.iter().all(|&v| v == 0) {
                return Err(SlacError::config(format!(
                    "adjacency row {i} is all zero; every reward term must depend on some latent dimension"
                )));
            }
        }
        Ok(AdjacencyMatrix {
            rows: rows.into_iter().map(|r| r.into_iter().map(|v| v == 1).collect()).collect(),
        })
    }

    /// Like [`AdjacencyMatrix::from_rows`] but also checks the shape.
    pub fn from_rows_checked(rows: Vec<Vec<u8>>, m: usize, n: usize) -> Result<Self> {
        let b = Self::from_rows(rows)?;
        if b.m() != m || b.n() != n {
            return Err(SlacError::config(format!(
                "adjacency matrix is {}x{}, expected {m}x{n} (reward terms x latent dimensions)",
                b.m(),
                b.n()
            )));
        }
        Ok(b)
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i][j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.rows[i]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.rows.iter().map(|r| r.iter().map(|&b| b as u8).collect()).collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for AdjacencyMatrix {
    type Error = SlacError;
    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<AdjacencyMatrix> for Vec<Vec<u8>> {
    fn from(b: AdjacencyMatrix) -> Self {
        b.to_rows()
    }
}
