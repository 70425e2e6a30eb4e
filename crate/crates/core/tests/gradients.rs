mod common;

use complearn::ccgan::{ArchitectureConfig, CcganBundle, GanLossSpec};
use complearn::dcl::CorrectionMode;
use complearn::diffcore::Graph;
use complearn::{Tensor, TransitionMatrix};

#[test]
fn random_mlps_match_finite_differences() {
    for seed in 0..25 {
        common::check_random_mlp(1000 + seed).unwrap();
    }
}

#[test]
fn objective_components_match_finite_differences() {
    for seed in 0..3 {
        common::check_ccgan_components(seed).unwrap();
    }
}

#[test]
fn known_transition_receives_no_gradient() {
    let b = common::tiny_bundle(4, false);
    assert!(b.transition_params().is_empty());
    let mut g = Graph::new();
    let x = g.input("x", Tensor::from_fn(2, 2, |r, c| (r + c) as f64));
    let ev = [complearn::LabelEvidence::Complementary(vec![0])];
    let loss = b.component_b(&mut g, x, &[&ev[0]]).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(b.generator_params().iter().all(|&p| grads.get(p).is_none()));
    assert!(b.discriminator_params().iter().all(|&p| grads.get(p).is_none()));
}

#[test]
fn component_c_reaches_both_generator_and_classifier() {
    let b = common::tiny_bundle(6, true);
    let mut g = Graph::new();
    let z = Tensor::from_fn(3, 3, |r, c| 0.3 * r as f64 - 0.2 * c as f64);
    let f = b.generator_node(&mut g, &z, &[0, 2, 1]).unwrap();
    let loss = b.component_c(&mut g, f, &[0, 2, 1]).unwrap();
    let grads = g.backward(loss).unwrap();
    let nonzero = |ids: Vec<_>| ids.iter().any(|&p| grads.get(p).is_some_and(|t| t.data().iter().any(|&v| v != 0.0)));
    assert!(nonzero(b.generator_params()));
    assert!(nonzero(b.classifier_params()));
    assert!(b.transition_params().iter().all(|&p| grads.get(p).is_none()));
}

#[test]
fn extreme_discriminator_logits_stay_finite() {
    let arch = ArchitectureConfig { noise_dim: 2, generator_hidden: vec![3], discriminator_hidden: vec![3], ..Default::default() };
    let mut b = CcganBundle::new(2, 2, &arch, &CorrectionMode::Known(TransitionMatrix::uniform(2).unwrap()), 0).unwrap();
    for id in b.discriminator_params() {
        b.store_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v *= 1e6);
    }
    let real = Tensor::from_fn(4, 2, |r, c| (r as f64 - 2.0) * 3.0 + c as f64);
    let fake = Tensor::from_fn(4, 2, |r, c| (c as f64 - r as f64) * 5.0);
    let (d, gl) = b.loss_component_a(&real, &fake, &GanLossSpec::default()).unwrap();
    assert!(d.is_finite() && gl.is_finite());
    // Clamped at ln(1e-12) per term: at most 2 · 27.64 for D, 27.64 for G.
    assert!(d <= 2.0 * 27.7 && gl <= 27.7);
}
