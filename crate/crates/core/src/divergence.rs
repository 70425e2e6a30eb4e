//! Divergences between discrete distributions and a numerical check of the
//! inequality chain bounding `d_TV(P_XY, Q_XY)` by the three terms the
//! CCGAN objective minimizes.
//!
//! Everything here works on finite supports with counting measure. In that
//! setting the two factorization constants are exactly one:
//! `d_TV(P_{Y|X}P_X, P_{Y|X}Q_X) = d_TV(P_X, Q_X)` because conditional rows
//! sum to one, and `d_TV(P_{Y|X}Q_X, Q_{Y|X}Q_X) = Σ_x q(x) d_TV(P_{Y|x}, Q_{Y|x})`
//! is at most the worst row. Distances between conditionals are therefore
//! taken as the maximum over `x` of the per-row distance.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::labels::TransitionMatrix;
use crate::linalg;

/// Slack below which an inequality is reported as violated.
pub const SLACK_TOLERANCE: f64 = 1e-9;

/// Above this condition number `inf_norm_inverse` logs a warning.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, thiserror::Error)]
pub enum DivergenceError {
    #[error("support mismatch: {0} vs {1}")]
    SupportMismatch(usize, usize),
    #[error("table is not a distribution: {0}")]
    NotADistribution(String),
    #[error("transition matrix is singular")]
    SingularMatrix,
}

pub fn tv(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    same_support(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `Σ p ln(p/q)` with `0 ln 0 = 0`; `+∞` when `p > 0` where `q = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    same_support(p, q)?;
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += a * (a / b).ln();
        }
    }
    Ok(total.max(0.0))
}

pub fn js(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    same_support(p, q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(0.5 * kl(p, &m)? + 0.5 * kl(q, &m)?)
}

fn same_support(p: &[f64], q: &[f64]) -> Result<(), DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::SupportMismatch(p.len(), q.len()));
    }
    Ok(())
}

/// A joint distribution `p(x, y)` over `|X| × K` cells, row-major by `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    x_size: usize,
    k: usize,
    table: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(x_size: usize, k: usize, table: Vec<f64>) -> Result<Self, DivergenceError> {
        if table.len() != x_size * k || x_size == 0 || k == 0 {
            return Err(DivergenceError::NotADistribution(format!(
                "{} cells for |X|={x_size}, K={k}",
                table.len()
            )));
        }
        if table.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DivergenceError::NotADistribution("negative or non-finite cell".into()));
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DivergenceError::NotADistribution(format!("total mass {total}")));
        }
        Ok(DiscreteJoint { x_size, k, table })
    }

    /// `p(y|x) p(x)`.
    pub fn from_conditional(cond: &ConditionalTable, marginal: &[f64]) -> Result<Self, DivergenceError> {
        same_support(marginal, &vec![0.0; cond.x_size])?;
        let mut table = Vec::with_capacity(cond.x_size * cond.k);
        for (x, &px) in marginal.iter().enumerate() {
            table.extend(cond.row(x).iter().map(|p| p * px));
        }
        let total: f64 = table.iter().sum();
        table.iter_mut().for_each(|v| *v /= total);
        DiscreteJoint::new(cond.x_size, cond.k, table)
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.table[x * self.k + y]
    }

    /// Draws every cell from a flat Dirichlet.
    pub fn random<R: Rng + ?Sized>(x_size: usize, k: usize, rng: &mut R) -> Self {
        let table = random_simplex(x_size * k, rng);
        DiscreteJoint { x_size, k, table }
    }
}

pub(crate) fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// `p(y|x)` rows, each on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    x_size: usize,
    k: usize,
    rows: Vec<f64>,
}

impl ConditionalTable {
    pub fn new(x_size: usize, k: usize, rows: Vec<f64>) -> Result<Self, DivergenceError> {
        if rows.len() != x_size * k {
            return Err(DivergenceError::NotADistribution(format!("{} entries for {x_size}×{k}", rows.len())));
        }
        for (x, row) in rows.chunks(k).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| *v < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(DivergenceError::NotADistribution(format!("row {x} is not a distribution")));
            }
        }
        Ok(ConditionalTable { x_size, k, rows })
    }

    pub fn random<R: Rng + ?Sized>(x_size: usize, k: usize, rng: &mut R) -> Self {
        let rows = (0..x_size).flat_map(|_| random_simplex(k, rng)).collect();
        ConditionalTable { x_size, k, rows }
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x * self.k..(x + 1) * self.k]
    }

    /// Applies `Mᵀ` to every row: class posteriors to complementary posteriors.
    pub fn complementary(&self, m: &TransitionMatrix) -> Result<ConditionalTable, DivergenceError> {
        if m.k() != self.k {
            return Err(DivergenceError::SupportMismatch(m.k(), self.k));
        }
        let rows = (0..self.x_size).flat_map(|x| m.forward_correct(self.row(x)).expect("k checked")).collect();
        Ok(ConditionalTable { x_size: self.x_size, k: self.k, rows })
    }

    /// Largest per-row divergence.
    pub fn max_row<F>(&self, other: &ConditionalTable, f: F) -> Result<f64, DivergenceError>
    where
        F: Fn(&[f64], &[f64]) -> Result<f64, DivergenceError>,
    {
        if self.x_size != other.x_size || self.k != other.k {
            return Err(DivergenceError::SupportMismatch(self.rows.len(), other.rows.len()));
        }
        (0..self.x_size).map(|x| f(self.row(x), other.row(x))).try_fold(0.0, |acc, v| v.map(|v| f64::max(acc, v)))
    }
}

/// Factorization `p(x,y) = p(y|x) p(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub conditional: ConditionalTable,
    pub marginal: Vec<f64>,
    /// `x` values with zero mass; their conditional row is set to uniform.
    pub zero_mass_rows: Vec<usize>,
}

pub fn conditional_tables(joint: &DiscreteJoint) -> Factorization {
    let k = joint.k;
    let mut rows = Vec::with_capacity(joint.table.len());
    let mut marginal = Vec::with_capacity(joint.x_size);
    let mut zero_mass_rows = Vec::new();
    for x in 0..joint.x_size {
        let row = &joint.table[x * k..(x + 1) * k];
        let px: f64 = row.iter().sum();
        marginal.push(px);
        if px > 0.0 {
            rows.extend(row.iter().map(|v| v / px));
        } else {
            zero_mass_rows.push(x);
            rows.extend(std::iter::repeat_n(1.0 / k as f64, k));
        }
    }
    Factorization { conditional: ConditionalTable { x_size: joint.x_size, k, rows }, marginal, zero_mass_rows }
}

/// `‖M⁻¹‖∞`, the largest absolute row sum of the inverse.
pub fn inf_norm_inverse(m: &TransitionMatrix) -> Result<f64, DivergenceError> {
    let cond = m.condition_number();
    if !cond.is_finite() || !m.is_full_rank() {
        return Err(DivergenceError::SingularMatrix);
    }
    if cond > CONDITION_WARNING {
        log::warn!("transition matrix is ill-conditioned (condition number {cond:.3e})");
    }
    let inv = m.inverse().ok_or(DivergenceError::SingularMatrix)?;
    Ok(linalg::inf_norm(m.k(), &inv))
}

/// One inequality `lhs ≤ rhs` evaluated on an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub step: String,
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    /// The right side is infinite, so the inequality holds trivially.
    pub vacuous: bool,
}

impl InequalityCheck {
    fn new(step: &str, description: &str, lhs: f64, rhs: f64) -> Self {
        let vacuous = rhs.is_infinite();
        let slack = if vacuous { f64::INFINITY } else { rhs - lhs };
        InequalityCheck {
            step: step.into(),
            description: description.into(),
            lhs,
            rhs,
            slack,
            holds: vacuous || slack >= -SLACK_TOLERANCE,
            vacuous,
        }
    }

    fn equality(step: &str, description: &str, lhs: f64, rhs: f64) -> Self {
        let slack = -(lhs - rhs).abs();
        InequalityCheck {
            step: step.into(),
            description: description.into(),
            lhs,
            rhs,
            slack,
            holds: slack >= -SLACK_TOLERANCE,
            vacuous: false,
        }
    }
}

/// Result of [`verify_theorem1_chain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub checks: Vec<InequalityCheck>,
    /// Marginal-factor constant; exactly 1 under counting measure.
    pub c1: f64,
    /// Conditional-factor constant; exactly 1 under counting measure.
    pub c2: f64,
    pub m_inv_inf_norm: f64,
    /// `x` values without mass under `P_X` or `Q_X`.
    pub zero_mass_rows: Vec<usize>,
    /// Any KL term was infinite.
    pub infinite_kl: bool,
    pub notes: Vec<String>,
    pub all_hold: bool,
}

impl BoundCheckReport {
    pub fn min_slack(&self) -> f64 {
        self.checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn check(&self, step: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.step == step)
    }
}

fn tv_joint(a: &DiscreteJoint, b: &DiscreteJoint) -> f64 {
    tv(&a.table, &b.table).expect("same shape")
}

/// Evaluates every step of the chain
///
/// ```text
/// d_TV(P_XY, Q_XY) ≤ c1·d_TV(P_X, Q_X) + c2·d_TV(P_Y|X, Q_Y|X)
///                  ≤ c1·d_TV(P_X, Q_X) + c2·‖M⁻¹‖∞·d_TV(P_Ȳ|X, Q'_Ȳ|X) + c2·d_TV(Q'_Y|X, Q_Y|X)
///                  ≤ 2c1·√d_JS(P_X, Q_X) + c2·‖M⁻¹‖∞·√d_KL(P_Ȳ|X, Q'_Ȳ|X) + c2·√d_KL(Q'_Y|X, Q_Y|X)
/// ```
///
/// on one finite instance. `P_Ȳ|X = Mᵀ P_Y|X` and `Q'_Ȳ|X = Mᵀ Q'_Y|X`.
pub fn verify_theorem1_chain(
    p_xy: &DiscreteJoint,
    q_xy: &DiscreteJoint,
    q_prime: &ConditionalTable,
    m: &TransitionMatrix,
) -> Result<BoundCheckReport, DivergenceError> {
    if p_xy.x_size != q_xy.x_size || p_xy.k != q_xy.k {
        return Err(DivergenceError::SupportMismatch(p_xy.table.len(), q_xy.table.len()));
    }
    if q_prime.x_size != p_xy.x_size || q_prime.k != p_xy.k || m.k() != p_xy.k {
        return Err(DivergenceError::SupportMismatch(q_prime.rows.len(), p_xy.table.len()));
    }
    let m_inv = inf_norm_inverse(m)?;
    let (c1, c2) = (1.0, 1.0);

    let p = conditional_tables(p_xy);
    let q = conditional_tables(q_xy);
    let p_bar = p.conditional.complementary(m)?;
    let q_prime_bar = q_prime.complementary(m)?;

    // P_{Y|X} Q_X
    let hybrid = DiscreteJoint::from_conditional(&p.conditional, &q.marginal)?;

    let tv_total = tv_joint(p_xy, q_xy);
    let tv_marg = tv(&p.marginal, &q.marginal)?;
    let js_marg = js(&p.marginal, &q.marginal)?;
    let tv_pq_cond = p.conditional.max_row(&q.conditional, tv)?;
    let tv_pqp_cond = p.conditional.max_row(q_prime, tv)?;
    let tv_qpq_cond = q_prime.max_row(&q.conditional, tv)?;
    let tv_bar = p_bar.max_row(&q_prime_bar, tv)?;
    let kl_bar = p_bar.max_row(&q_prime_bar, kl)?;
    let kl_qpq = q_prime.max_row(&q.conditional, kl)?;
    let tv_hybrid_p = tv_joint(p_xy, &hybrid);
    let tv_hybrid_q = tv_joint(&hybrid, q_xy);

    let mut checks = vec![
        InequalityCheck::new(
            "1",
            "d_TV(P_XY, Q_XY) <= d_TV(P_XY, P_Y|X Q_X) + d_TV(P_Y|X Q_X, Q_XY)",
            tv_total,
            tv_hybrid_p + tv_hybrid_q,
        ),
        InequalityCheck::equality(
            "2",
            "d_TV(P_Y|X P_X, P_Y|X Q_X) = c1 d_TV(P_X, Q_X) with c1 = 1",
            tv_hybrid_p,
            c1 * tv_marg,
        ),
        InequalityCheck::new(
            "3",
            "d_TV(P_Y|X Q_X, Q_Y|X Q_X) <= c2 max_x d_TV(P_Y|x, Q_Y|x)",
            tv_hybrid_q,
            c2 * tv_pq_cond,
        ),
        InequalityCheck::new(
            "4",
            "max_x d_TV(P_Y|x, Q_Y|x) <= max_x d_TV(P_Y|x, Q'_Y|x) + max_x d_TV(Q'_Y|x, Q_Y|x)",
            tv_pq_cond,
            tv_pqp_cond + tv_qpq_cond,
        ),
        InequalityCheck::new(
            "5",
            "max_x d_TV(P_Y|x, Q'_Y|x) <= ||M^-1||_inf max_x d_TV(P_Ybar|x, Q'_Ybar|x)",
            tv_pqp_cond,
            m_inv * tv_bar,
        ),
        InequalityCheck::new(
            "6",
            "d_TV(P_XY, Q_XY) <= c1 d_TV(P_X,Q_X) + c2 ||M^-1|| d_TV(P_Ybar|X, Q'_Ybar|X) + c2 d_TV(Q'_Y|X, Q_Y|X)",
            tv_total,
            c1 * tv_marg + c2 * m_inv * tv_bar + c2 * tv_qpq_cond,
        ),
        InequalityCheck::new(
            "pinsker_marginal",
            "d_TV(P_X, Q_X) <= sqrt(2 d_JS(P_X, Q_X)) <= 2 sqrt(d_JS(P_X, Q_X))",
            tv_marg,
            (2.0 * js_marg).sqrt(),
        ),
        InequalityCheck::new(
            "pinsker_complementary",
            "max_x d_TV(P_Ybar|x, Q'_Ybar|x) <= sqrt(max_x d_KL(P_Ybar|x, Q'_Ybar|x) / 2)",
            tv_bar,
            (kl_bar / 2.0).sqrt(),
        ),
        InequalityCheck::new(
            "pinsker_generator",
            "max_x d_TV(Q'_Y|x, Q_Y|x) <= sqrt(max_x d_KL(Q'_Y|x, Q_Y|x) / 2)",
            tv_qpq_cond,
            (kl_qpq / 2.0).sqrt(),
        ),
        InequalityCheck::new(
            "7",
            "d_TV(P_XY, Q_XY) <= 2 c1 sqrt(d_JS(P_X,Q_X)) + c2 ||M^-1|| sqrt(d_KL(P_Ybar|X, Q'_Ybar|X)) + c2 sqrt(d_KL(Q'_Y|X, Q_Y|X))",
            tv_total,
            2.0 * c1 * js_marg.sqrt() + c2 * m_inv * kl_bar.sqrt() + c2 * kl_qpq.sqrt(),
        ),
    ];
    // Per-row Pinsker on each conditional pair.
    for x in 0..p_xy.x_size {
        let pairs = [
            ("pinsker_complementary_row", p_bar.row(x), q_prime_bar.row(x)),
            ("pinsker_generator_row", q_prime.row(x), q.conditional.row(x)),
        ];
        for (name, a, b) in pairs {
            let t = tv(a, b)?;
            let d = kl(a, b)?;
            checks.push(InequalityCheck::new(&format!("{name}[{x}]"), "d_TV <= sqrt(d_KL / 2)", t, (d / 2.0).sqrt()));
        }
    }

    let mut zero_mass_rows: Vec<usize> = p.zero_mass_rows.iter().chain(&q.zero_mass_rows).copied().collect();
    zero_mass_rows.sort_unstable();
    zero_mass_rows.dedup();
    let mut notes = vec![
        "constants evaluated for finite support under counting measure: c1 = c2 = 1".to_string(),
        "the Hölder step is checked as the exact identity d_TV(P_Y|X P_X, P_Y|X Q_X) = d_TV(P_X, Q_X)".to_string(),
    ];
    if !zero_mass_rows.is_empty() {
        notes.push(format!("zero-mass x values {zero_mass_rows:?} use a uniform conditional row"));
    }
    let infinite_kl = kl_bar.is_infinite() || kl_qpq.is_infinite();
    if infinite_kl {
        notes.push("a KL term is infinite; dependent bounds hold vacuously".to_string());
    }
    let all_hold = checks.iter().all(|c| c.holds);
    Ok(BoundCheckReport { checks, c1, c2, m_inv_inf_norm: m_inv, zero_mass_rows, infinite_kl, notes, all_hold })
}

/// A random instance with Dirichlet-drawn tables and a random full-rank `M`.
pub fn random_instance<R: Rng + ?Sized>(
    x_size: usize,
    k: usize,
    m_seed: u64,
    rng: &mut R,
) -> Result<(DiscreteJoint, DiscreteJoint, ConditionalTable, TransitionMatrix), crate::labels::LabelError> {
    let p = DiscreteJoint::random(x_size, k, rng);
    let q = DiscreteJoint::random(x_size, k, rng);
    let q_prime = ConditionalTable::random(x_size, k, rng);
    let m = TransitionMatrix::random(k, m_seed)?;
    Ok((p, q, q_prime, m))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;
    use crate::seeds;

    #[test]
    fn extremes_and_identity() {
        assert_eq!(tv(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let p = [0.2, 0.5, 0.3];
        assert_eq!(kl(&p, &p).unwrap(), 0.0);
        assert_eq!(js(&p, &p).unwrap(), 0.0);
        assert!(tv(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn hand_computed_pair() {
        let (p, q) = ([1.0, 0.0], [0.5, 0.5]);
        assert_eq!(tv(&p, &q).unwrap(), 0.5);
        assert!((kl(&p, &q).unwrap() - LN_2).abs() < 1e-15);
        assert!(0.5 <= (LN_2 / 2.0).sqrt());
        assert!(((LN_2 / 2.0).sqrt() - 0.5887).abs() < 1e-4);
        assert_eq!(kl(&q, &p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn js_bounded_by_ln2() {
        let mut rng = seeds::rng(5);
        for _ in 0..10_000 {
            let k = rng.random_range(2..8);
            let p = random_simplex(k, &mut rng);
            let q = random_simplex(k, &mut rng);
            let d = js(&p, &q).unwrap();
            assert!((0.0..=LN_2 + 1e-15).contains(&d));
            assert!((js(&q, &p).unwrap() - d).abs() < 1e-15);
        }
        assert!((js(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn conditional_factorization() {
        // independent joint
        let px = [0.2, 0.8];
        let py = [0.1, 0.6, 0.3];
        let table: Vec<f64> = px.iter().flat_map(|a| py.iter().map(move |b| a * b)).collect();
        let f = conditional_tables(&DiscreteJoint::new(2, 3, table).unwrap());
        for x in 0..2 {
            for (a, b) in f.conditional.row(x).iter().zip(&py) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        // deterministic joint with an empty x
        let f = conditional_tables(&DiscreteJoint::new(3, 2, vec![0.4, 0.0, 0.0, 0.6, 0.0, 0.0]).unwrap());
        assert_eq!(f.conditional.row(0), &[1.0, 0.0]);
        assert_eq!(f.conditional.row(1), &[0.0, 1.0]);
        assert_eq!(f.conditional.row(2), &[0.5, 0.5]);
        assert_eq!(f.zero_mass_rows, vec![2]);
    }

    #[test]
    fn random_factorization_reconstructs() {
        let mut rng = seeds::rng(17);
        for _ in 0..200 {
            let joint = DiscreteJoint::random(rng.random_range(1..7), rng.random_range(2..5), &mut rng);
            let f = conditional_tables(&joint);
            for x in 0..joint.x_size() {
                let row = f.conditional.row(x);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for y in 0..joint.k() {
                    assert!((row[y] * f.marginal[x] - joint.get(x, y)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inverse_norms() {
        let perm = TransitionMatrix::new(3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((inf_norm_inverse(&perm).unwrap() - 1.0).abs() < 1e-12);
        // M⁻¹ = J − (K−1)I for uniform M, so the row sum is 2K − 3.
        for k in 3..=10 {
            let got = inf_norm_inverse(&TransitionMatrix::uniform(k).unwrap()).unwrap();
            assert!((got - (2 * k - 3) as f64).abs() < 1e-9, "K={k}: {got}");
        }
        let singular = TransitionMatrix::new(3, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(inf_norm_inverse(&singular), Err(DivergenceError::SingularMatrix)));
    }

    #[test]
    fn coincident_distributions_have_zero_terms() {
        let mut rng = seeds::rng(1);
        let p = DiscreteJoint::random(4, 3, &mut rng);
        let q_prime = conditional_tables(&p).conditional;
        let m = TransitionMatrix::uniform(3).unwrap();
        let report = verify_theorem1_chain(&p, &p, &q_prime, &m).unwrap();
        assert!(report.all_hold);
        for c in &report.checks {
            assert!(c.lhs.abs() < 1e-15, "{}: {}", c.step, c.lhs);
            assert!(c.slack >= -1e-15);
        }
    }

    #[test]
    fn exact_inversion_for_label_flip() {
        let mut rng = seeds::rng(2);
        let p = DiscreteJoint::random(5, 2, &mut rng);
        let q = DiscreteJoint::random(5, 2, &mut rng);
        let m = TransitionMatrix::uniform(2).unwrap();
        // Q' reproduces P_Ȳ|X exactly through the flip, so it equals P_Y|X.
        let p_bar = conditional_tables(&p).conditional.complementary(&m).unwrap();
        let q_prime = p_bar.complementary(&m).unwrap();
        let report = verify_theorem1_chain(&p, &q, &q_prime, &m).unwrap();
        assert!(report.check("5").unwrap().lhs.abs() < 1e-15);
        assert!(report.all_hold);
    }

    #[test]
    fn identifiability_by_linear_inversion() {
        let mut rng = seeds::rng(3);
        for k in 2..=6 {
            let m = TransitionMatrix::random(k, k as u64 + 10).unwrap();
            let cond = ConditionalTable::random(4, k, &mut rng);
            let bar = cond.complementary(&m).unwrap();
            // Solve Mᵀ p = p̄ row by row.
            let mt: Vec<f64> = (0..k * k).map(|idx| m.get(idx % k, idx / k)).collect();
            for x in 0..4 {
                let rec = linalg::solve(k, &mt, bar.row(x)).unwrap();
                for (a, b) in rec.iter().zip(cond.row(x)) {
                    assert!((a - b).abs() < 1e-8);
                }
            }
        }
    }
}
