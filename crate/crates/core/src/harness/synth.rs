use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ccgan::sample_labels_with;
use crate::dcl::argmax;
use crate::diffcore::Tensor;
use crate::priors::SimplexVector;
use crate::seeds;

/// Isotropic Gaussian mixture with a shared σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    means: Vec<Vec<f64>>,
    sigma: f64,
    prior: SimplexVector,
}

impl GaussianMixtureSpec {
    pub fn new(means: Vec<Vec<f64>>, sigma: f64, prior: SimplexVector) -> Result<Self, HarnessError> {
        if means.len() < 2 || prior.len() != means.len() {
            return Err(HarnessError::Config(format!(
                "{} means and {} prior entries; need K >= 2 of each",
                means.len(),
                prior.len()
            )));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(HarnessError::Config("means must share a nonzero dimension".into()));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(HarnessError::Config(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(GaussianMixtureSpec { means, sigma, prior })
    }

    /// `K` components evenly spaced on a circle of the given radius in 2-D,
    /// uniform prior. Component `j` sits at angle `2πj/K`.
    pub fn ring(k: usize, radius: f64, sigma: f64) -> Result<Self, HarnessError> {
        if k < 2 || !(radius > 0.0) {
            return Err(HarnessError::Config(format!("ring needs K >= 2 and radius > 0 (K={k}, r={radius})")));
        }
        let means = (0..k)
            .map(|j| {
                let a = std::f64::consts::TAU * j as f64 / k as f64;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect();
        Self::new(means, sigma, SimplexVector::uniform(k))
    }

    pub fn with_prior(mut self, prior: SimplexVector) -> Result<Self, HarnessError> {
        if prior.len() != self.k() {
            return Err(HarnessError::Config("prior length must equal K".into()));
        }
        self.prior = prior;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn prior(&self) -> &SimplexVector {
        &self.prior
    }

    /// Index of the component mean nearest to `x`.
    pub fn nearest_mean(&self, x: &[f64]) -> usize {
        let d2: Vec<f64> = self.means.iter().map(|m| -sq_dist(x, m)).collect();
        argmax(&d2)
    }

    /// `argmax_y ln π_y − ‖x − μ_y‖² / 2σ²`.
    pub fn bayes_predict(&self, x: &[f64]) -> usize {
        if self.sigma == 0.0 {
            return self.nearest_mean(x);
        }
        let s2 = 2.0 * self.sigma * self.sigma;
        let scores: Vec<f64> = self
            .means
            .iter()
            .zip(self.prior.as_slice())
            .map(|(m, &p)| if p > 0.0 { p.ln() - sq_dist(x, m) / s2 } else { f64::NEG_INFINITY })
            .collect();
        argmax(&scores)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `n` labeled draws: `y ~ prior`, `x ~ N(μ_y, σ²I)`.
pub fn gen_ring_mixture(spec: &GaussianMixtureSpec, n: usize, seed: u64) -> Result<(Tensor, Vec<usize>), HarnessError> {
    if n < spec.k() {
        return Err(HarnessError::Config(format!("n = {n} is smaller than K = {}", spec.k())));
    }
    let mut rng = seeds::rng(seed);
    let labels = sample_labels_with(&spec.prior, n, &mut rng);
    let d = spec.dim();
    let mut data = Vec::with_capacity(n * d);
    for &y in &labels {
        for &mu in &spec.means[y] {
            let e: f64 = rng.sample(StandardNormal);
            data.push(mu + spec.sigma * e);
        }
    }
    Ok((Tensor::from_vec(n, d, data).expect("n x d"), labels))
}

/// Accuracy of the Bayes-optimal rule on a labeled set.
pub fn bayes_accuracy_oracle(spec: &GaussianMixtureSpec, x: &Tensor, labels: &[usize]) -> Result<f64, HarnessError> {
    if x.rows() != labels.len() || labels.is_empty() || x.cols() != spec.dim() {
        return Err(HarnessError::Config("test set does not match the mixture".into()));
    }
    let hits = (0..x.rows()).filter(|&i| spec.bayes_predict(x.row_slice(i)) == labels[i]).count();
    Ok(hits as f64 / labels.len() as f64)
}
