use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LabelError, TransitionMatrix};
use crate::seeds;

/// What the annotator told us about one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelEvidence {
    Ordinary(usize),
    /// Distinct classes the example does not belong to, in draw order.
    Complementary(Vec<usize>),
}

impl LabelEvidence {
    pub fn complementary(labels: Vec<usize>, k: usize) -> Result<Self, LabelError> {
        let e = LabelEvidence::Complementary(labels);
        e.validate(k)?;
        Ok(e)
    }

    pub fn validate(&self, k: usize) -> Result<(), LabelError> {
        match self {
            LabelEvidence::Ordinary(y) if *y >= k => {
                Err(LabelError::InvalidEvidence(format!("ordinary label {y} out of range for K={k}")))
            }
            LabelEvidence::Ordinary(_) => Ok(()),
            LabelEvidence::Complementary(set) => {
                if set.is_empty() || set.len() > k - 1 {
                    return Err(LabelError::InvalidEvidence(format!(
                        "complementary set size {} outside 1..={}",
                        set.len(),
                        k - 1
                    )));
                }
                if let Some(bad) = set.iter().find(|&&c| c >= k) {
                    return Err(LabelError::InvalidEvidence(format!("complementary label {bad} out of range")));
                }
                let mut seen = vec![false; k];
                for &c in set {
                    if std::mem::replace(&mut seen[c], true) {
                        return Err(LabelError::InvalidEvidence(format!("duplicate complementary label {c}")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn complementary_labels(&self) -> Option<&[usize]> {
        match self {
            LabelEvidence::Complementary(set) => Some(set),
            LabelEvidence::Ordinary(_) => None,
        }
    }

    pub fn is_complementary(&self) -> bool {
        matches!(self, LabelEvidence::Complementary(_))
    }
}

/// Draws `count` distinct complementary labels for class `y` from row `y` of
/// `M`, without replacement: each drawn class is removed and the remaining
/// row mass renormalized.
pub(crate) fn draw_complementary<R: Rng + ?Sized>(
    y: usize,
    m: &TransitionMatrix,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>, LabelError> {
    if y >= m.k() {
        return Err(LabelError::InvalidEvidence(format!("ordinary label {y} out of range for K={}", m.k())));
    }
    let mut weights = m.row(y).to_vec();
    let support = weights.iter().filter(|&&w| w > 0.0).count();
    if count == 0 || count > support {
        return Err(LabelError::InsufficientSupport { row: y, nonzero: support, requested: count });
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = weights.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        // Fall back to the last positive slot if rounding leaves u ≥ acc.
        let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("support remains");
        for (j, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            if u < acc {
                pick = j;
                break;
            }
        }
        weights[pick] = 0.0;
        out.push(pick);
    }
    Ok(out)
}

/// Replaces each ordinary label by `labels_per_example` complementary labels
/// drawn from the corresponding row of `M`.
pub fn generate_complementary(
    labels: &[usize],
    m: &TransitionMatrix,
    labels_per_example: usize,
    seed: u64,
) -> Result<Vec<LabelEvidence>, LabelError> {
    if labels_per_example == 0 || labels_per_example > m.k() - 1 {
        return Err(LabelError::InvalidParameter(format!(
            "labels per example {labels_per_example} must lie in 1..={}",
            m.k() - 1
        )));
    }
    let mut rng = seeds::rng(seed);
    labels
        .iter()
        .map(|&y| draw_complementary(y, m, labels_per_example, &mut rng).map(LabelEvidence::Complementary))
        .collect()
}
