//! Central finite differences, used as the independent oracle for
//! [`Graph::backward`](super::Graph::backward).

use super::graph::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;

/// Estimates `∂f/∂p` for every coordinate of the listed parameters with
/// `(f(p + h) − f(p − h)) / 2h`. The store is restored exactly afterwards.
pub fn finite_difference_grad(
    store: &mut ParamStore,
    params: &[ParamId],
    step: f64,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> Gradients {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut out = Gradients::default();
    for &id in params {
        let shape = store.get(id).shape();
        let mut grad = Tensor::zeros(shape[0], shape[1]);
        for k in 0..grad.len() {
            let original = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = original + step;
            let up = loss(store);
            store.get_mut(id).data_mut()[k] = original - step;
            let down = loss(store);
            store.get_mut(id).data_mut()[k] = original;
            grad.data_mut()[k] = (up - down) / (2.0 * step);
        }
        out.insert(id, grad);
    }
    out
}

/// Worst coordinate found by [`compare_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub param: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Checks `|a − n| ≤ max(rel · max(|a|, |n|), abs_floor)` on every coordinate
/// of the numeric gradient. A parameter absent from `analytic` counts as zero.
pub fn compare_gradients(
    analytic: &Gradients,
    numeric: &Gradients,
    rel: f64,
    abs_floor: f64,
) -> Result<(), GradMismatch> {
    let mut ids: Vec<_> = numeric.iter().map(|(id, _)| id).collect();
    ids.sort();
    for id in ids {
        let num = numeric.get(id).expect("listed");
        for (index, &n) in num.data().iter().enumerate() {
            let a = analytic.get(id).map_or(0.0, |t| t.data()[index]);
            let tol = (rel * a.abs().max(n.abs())).max(abs_floor);
            if !((a - n).abs() <= tol) {
                return Err(GradMismatch { param: id, index, analytic: a, numeric: n });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let id = store.insert("x", Tensor::scalar(3.0)).unwrap();
        let g = finite_difference_grad(&mut store, &[id], 1e-5, |s| s.get(id).data()[0].powi(2));
        assert!((g.get(id).unwrap().data()[0] - 6.0).abs() < 1e-6);
        assert_eq!(store.get(id).item(), Some(3.0));
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut store = ParamStore::new();
        let id = store.insert("v", Tensor::row(&[1.0, -2.0, 4.0])).unwrap();
        let g = finite_difference_grad(&mut store, &[id], 1e-4, |_| 42.0);
        assert!(g.get(id).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
