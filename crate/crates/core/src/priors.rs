//! Class-prior estimation from complementary label frequencies.
//!
//! With `M` known, the complementary label marginal is `P_Ȳ = Mᵀ P_Y`. The
//! prior is recovered by minimizing `‖P̄_Ȳ − Mᵀ p‖²` over the probability
//! simplex with projected gradient descent, followed by an active-set polish
//! that solves the equality-constrained least-squares problem on the support
//! found by the descent.

use serde::{Deserialize, Serialize};

use crate::labels::{ComplementaryDataset, TransitionMatrix};
use crate::linalg;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum PriorError {
    #[error("vector is not on the probability simplex: {0}")]
    NotOnSimplex(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("the dataset has no complementary labels")]
    NoComplementaryLabels,
    #[error("input contains non-finite values")]
    NonFinite,
}

/// A probability vector: nonnegative coordinates summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = PriorError;

    fn try_from(v: Vec<f64>) -> Result<Self, PriorError> {
        SimplexVector::new(v)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(v: SimplexVector) -> Self {
        v.0
    }
}

impl SimplexVector {
    pub fn new(v: Vec<f64>) -> Result<Self, PriorError> {
        if v.is_empty() {
            return Err(PriorError::NotOnSimplex("empty vector".into()));
        }
        if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(PriorError::NotOnSimplex(format!("coordinate {bad} outside [0, 1]")));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(PriorError::NotOnSimplex(format!("coordinates sum to {s}")));
        }
        Ok(SimplexVector(v))
    }

    pub fn uniform(k: usize) -> Self {
        SimplexVector(vec![1.0 / k as f64; k])
    }

    /// Normalizes nonnegative counts.
    pub fn from_counts(counts: &[f64]) -> Result<Self, PriorError> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) || counts.iter().any(|c| *c < 0.0) {
            return Err(PriorError::NotOnSimplex("counts must be nonnegative with positive total".into()));
        }
        SimplexVector::new(counts.iter().map(|c| c / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn linf_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn simplex_project(v: &[f64]) -> Result<SimplexVector, PriorError> {
    if v.is_empty() {
        return Err(PriorError::NotOnSimplex("empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(PriorError::NonFinite);
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let s: f64 = w.iter().sum();
    // Rounding can leave the sum a few ulps off; renormalize so downstream
    // sums stay within tolerance.
    for x in &mut w {
        *x = (*x / s).min(1.0);
    }
    Ok(SimplexVector(w))
}

/// Normalized counts of complementary labels; each label of a multi-label
/// example counts once.
pub fn empirical_complementary_prior(ds: &ComplementaryDataset) -> Result<SimplexVector, PriorError> {
    let mut counts = vec![0.0; ds.k()];
    for set in ds.evidence().iter().flatten().filter_map(|e| e.complementary_labels()) {
        for &c in set {
            counts[c] += 1.0;
        }
    }
    if counts.iter().all(|&c| c == 0.0) {
        return Err(PriorError::NoComplementaryLabels);
    }
    SimplexVector::from_counts(&counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpOptions {
    pub max_iterations: usize,
    /// Stop once one step improves the objective by less than this.
    pub tolerance: f64,
    pub record_trace: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { max_iterations: 100_000, tolerance: 1e-12, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSolution {
    pub estimate: SimplexVector,
    /// `‖P̄_Ȳ − Mᵀ estimate‖²`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `M` is numerically rank-deficient: the prior is not identifiable and
    /// the estimate is one minimizer among many.
    pub rank_deficient: bool,
    /// Objective after every descent iteration (only with `record_trace`).
    #[serde(skip)]
    pub trace: Vec<f64>,
}

struct Problem<'a> {
    m: &'a TransitionMatrix,
    target: &'a [f64],
}

impl Problem<'_> {
    fn residual_vec(&self, p: &[f64]) -> Vec<f64> {
        let mtp = self.m.forward_correct(p).expect("dimension checked");
        self.target.iter().zip(&mtp).map(|(b, v)| b - v).collect()
    }

    fn objective(&self, p: &[f64]) -> f64 {
        self.residual_vec(p).iter().map(|r| r * r).sum()
    }

    /// `−2 M (b − Mᵀp)`.
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let r = self.residual_vec(p);
        (0..self.m.k()).map(|i| -2.0 * self.m.row(i).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()).collect()
    }

    /// Minimizes on the face spanned by `support` (equality constraint only).
    fn solve_on_support(&self, support: &[usize]) -> Option<Vec<f64>> {
        let k = self.m.k();
        let s = support.len();
        // KKT: [2 AᵀA  1; 1ᵀ 0] [q; λ] = [2 Aᵀb; 1] with A = Mᵀ restricted to
        // the support columns, so (AᵀA)_{ab} = Σ_j M[a][j] M[b][j].
        let n = s + 1;
        let mut kkt = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for (ia, &a) in support.iter().enumerate() {
            for (ib, &b) in support.iter().enumerate() {
                kkt[ia * n + ib] = 2.0 * self.m.row(a).iter().zip(self.m.row(b)).map(|(x, y)| x * y).sum::<f64>();
            }
            kkt[ia * n + s] = 1.0;
            kkt[s * n + ia] = 1.0;
            rhs[ia] = 2.0 * self.m.row(a).iter().zip(self.target).map(|(x, y)| x * y).sum::<f64>();
        }
        rhs[s] = 1.0;
        let sol = linalg::solve(n, &kkt, &rhs)?;
        let mut p = vec![0.0; k];
        for (ia, &a) in support.iter().enumerate() {
            p[a] = sol[ia];
        }
        Some(p)
    }

    /// Active-set refinement from the descent's support. Returns a feasible
    /// point satisfying the simplex KKT conditions, if one is found.
    fn polish(&self, start: &[f64]) -> Option<Vec<f64>> {
        let k = self.m.k();
        let mut support: Vec<usize> = (0..k).filter(|&i| start[i] > 0.0).collect();
        for _ in 0..2 * k {
            if support.is_empty() {
                return None;
            }
            let mut p = self.solve_on_support(&support)?;
            if let Some((pos, _)) =
                support.iter().enumerate().map(|(pos, &i)| (pos, p[i])).filter(|(_, v)| *v < 0.0).min_by(|a, b| a.1.total_cmp(&b.1))
            {
                if p[support[pos]] < -1e-13 {
                    support.remove(pos);
                    continue;
                }
            }
            for v in &mut p {
                *v = v.max(0.0);
            }
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);

            let g = self.gradient(&p);
            let mu = support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64;
            let violation = (0..k).filter(|i| !support.contains(i)).map(|i| (i, mu - g[i])).max_by(|a, b| a.1.total_cmp(&b.1));
            match violation {
                Some((i, v)) if v > 1e-12 => {
                    support.push(i);
                    support.sort_unstable();
                }
                _ => return Some(p),
            }
        }
        None
    }
}

/// Estimates `P_Y` from complementary-label frequencies `P̄_Ȳ` and `M`.
pub fn estimate_prior_qp(target: &SimplexVector, m: &TransitionMatrix) -> Result<QpSolution, PriorError> {
    estimate_prior_qp_with(target, m, &QpOptions::default())
}

pub fn estimate_prior_qp_with(
    target: &SimplexVector,
    m: &TransitionMatrix,
    opts: &QpOptions,
) -> Result<QpSolution, PriorError> {
    let k = m.k();
    if target.len() != k {
        return Err(PriorError::DimensionMismatch { expected: k, found: target.len() });
    }
    let problem = Problem { m, target: target.as_slice() };
    let lipschitz = 2.0 * linalg::lambda_max_aat(k, m.entries());
    let step = 1.0 / lipschitz;

    let mut p = vec![1.0 / k as f64; k];
    let mut value = problem.objective(&p);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let g = problem.gradient(&p);
        let moved: Vec<f64> = p.iter().zip(&g).map(|(x, d)| x - step * d).collect();
        let next = simplex_project(&moved)?.0;
        let next_value = problem.objective(&next);
        let improvement = value - next_value;
        if next_value <= value {
            p = next;
            value = next_value;
        }
        if opts.record_trace {
            trace.push(value);
        }
        if improvement < opts.tolerance {
            converged = true;
            break;
        }
    }

    if let Some(polished) = problem.polish(&p) {
        let polished_value = problem.objective(&polished);
        if polished_value <= value {
            p = polished;
            value = polished_value;
            converged = true;
        }
    }

    Ok(QpSolution {
        estimate: SimplexVector::new(p).map_err(|e| PriorError::NotOnSimplex(format!("solver output: {e}")))?,
        residual: value,
        iterations,
        converged,
        rank_deficient: !m.is_full_rank(),
        trace,
    })
}
