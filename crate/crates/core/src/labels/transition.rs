use rand::seq::index;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::LabelError;
use crate::linalg;
use crate::seeds;

/// Row tolerance used by every constructor.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Draws whose 2-norm condition number reaches this are resampled.
pub const MAX_CONDITION: f64 = 1e6;

/// `M[i][j] = P(Ȳ = j | Y = i)`: rows are ordinary classes, columns
/// complementary classes. Row-stochastic with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = LabelError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(LabelError::NotStochastic("matrix is not square".into()));
        }
        TransitionMatrix::new(k, rows.into_iter().flatten().collect())
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(m: TransitionMatrix) -> Self {
        m.entries.chunks(m.k).map(<[f64]>::to_vec).collect()
    }
}

impl TransitionMatrix {
    /// Validates a row-major `k×k` matrix.
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self, LabelError> {
        if k < 2 {
            return Err(LabelError::InvalidClassCount(k));
        }
        if entries.len() != k * k {
            return Err(LabelError::DimensionMismatch { expected: k * k, found: entries.len() });
        }
        for (i, row) in entries.chunks(k).enumerate() {
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(LabelError::NotStochastic(format!("row {i} has a negative or non-finite entry")));
            }
            if row[i] != 0.0 {
                return Err(LabelError::NotStochastic(format!("diagonal entry {i} is {}", row[i])));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(LabelError::NotStochastic(format!("row {i} sums to {s}")));
            }
        }
        Ok(TransitionMatrix { k, entries })
    }

    /// Off-diagonal entries `1/(K−1)`.
    pub fn uniform(k: usize) -> Result<Self, LabelError> {
        if k < 2 {
            return Err(LabelError::InvalidClassCount(k));
        }
        let off = 1.0 / (k - 1) as f64;
        let entries = (0..k * k).map(|idx| if idx / k == idx % k { 0.0 } else { off }).collect();
        Ok(TransitionMatrix { k, entries })
    }

    /// Each row puts `1/m` on `m` randomly chosen off-diagonal classes.
    pub fn restricted_uniform(k: usize, m: usize, seed: u64) -> Result<Self, LabelError> {
        if k < 2 {
            return Err(LabelError::InvalidClassCount(k));
        }
        if m == 0 || m > k - 1 {
            return Err(LabelError::InvalidParameter(format!("candidate count {m} must lie in 1..={}", k - 1)));
        }
        let mut rng = seeds::rng(seed);
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for slot in index::sample(&mut rng, k - 1, m) {
                let j = if slot >= i { slot + 1 } else { slot };
                entries[i * k + j] = 1.0 / m as f64;
            }
        }
        Ok(TransitionMatrix { k, entries })
    }

    /// Rows drawn uniformly from the simplex over the off-diagonal slots
    /// (flat Dirichlet), redrawn until the condition number is below
    /// [`MAX_CONDITION`].
    pub fn random(k: usize, seed: u64) -> Result<Self, LabelError> {
        if k < 2 {
            return Err(LabelError::InvalidClassCount(k));
        }
        let mut rng = seeds::rng(seed);
        loop {
            let mut entries = vec![0.0; k * k];
            for i in 0..k {
                let draws: Vec<f64> = (0..k - 1).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let total: f64 = draws.iter().sum();
                let mut slot = 0;
                for j in (0..k).filter(|&j| j != i) {
                    entries[i * k + j] = draws[slot] / total;
                    slot += 1;
                }
            }
            if linalg::condition_number(k, &entries) < MAX_CONDITION {
                return Ok(TransitionMatrix { k, entries });
            }
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn is_full_rank(&self) -> bool {
        linalg::rank(self.k, &self.entries) == self.k
    }

    pub fn condition_number(&self) -> f64 {
        linalg::condition_number(self.k, &self.entries)
    }

    /// `M⁻¹` in row-major order; `None` when singular.
    pub fn inverse(&self) -> Option<Vec<f64>> {
        linalg::invert(self.k, &self.entries)
    }

    /// `Mᵀg`: the complementary-label distribution implied by class
    /// probabilities `g`.
    pub fn forward_correct(&self, g: &[f64]) -> Result<Vec<f64>, LabelError> {
        if g.len() != self.k {
            return Err(LabelError::DimensionMismatch { expected: self.k, found: g.len() });
        }
        let mut out = vec![0.0; self.k];
        for (i, &gi) in g.iter().enumerate() {
            for (o, &mij) in out.iter_mut().zip(self.row(i)) {
                *o += mij * gi;
            }
        }
        Ok(out)
    }

    /// Frobenius distance to another matrix of the same size.
    pub fn frobenius_distance(&self, other: &TransitionMatrix) -> Result<f64, LabelError> {
        if self.k != other.k {
            return Err(LabelError::DimensionMismatch { expected: self.k, found: other.k });
        }
        Ok(self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
    }
}

/// Free-function form of [`TransitionMatrix::forward_correct`].
pub fn forward_correct(m: &TransitionMatrix, g: &[f64]) -> Result<Vec<f64>, LabelError> {
    m.forward_correct(g)
}

/// Number of ordinary-labeled examples carrying roughly the same information
/// as `n` examples with one uniform complementary label each: `n/(K−1)`.
pub fn effective_sample_size(n: usize, k: usize) -> f64 {
    assert!(k >= 2, "effective sample size needs K >= 2");
    n as f64 / (k - 1) as f64
}
