use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use complearn::diffcore::{Activation, Graph, Head, Init, Mlp, Pick};
use complearn::divergence::{random_instance, verify_theorem1_chain};
use complearn::priors::{estimate_prior_qp, SimplexVector};
use complearn::{seeds, MlpSpec, ParamStore, Tensor, TransitionMatrix};

fn bench_corrected_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("corrected_loss_forward_backward");
    for &k in &[4usize, 8] {
        let mut rng = seeds::rng(1);
        let mut store = ParamStore::new();
        let spec = MlpSpec::uniform(vec![2, 64, 64, k], Activation::Relu, Head::Softmax);
        let net = Mlp::new(&mut store, "c", spec, Init::Glorot, &mut rng).unwrap();
        let m = TransitionMatrix::uniform(k).unwrap();
        let mt = Tensor::from_vec(k, k, m.entries().to_vec()).unwrap();
        let x = Tensor::from_fn(128, 2, |_, _| rng.random_range(-2.0..2.0));
        let picks: Vec<Pick> =
            (0..128).map(|row| Pick { row, col: rng.random_range(0..k), weight: -1.0 / 128.0 }).collect();
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| {
                let mut g = Graph::new();
                let xn = g.input("x", x.clone());
                let z = net.logits(&mut g, &store, xn).unwrap();
                let p = g.softmax(z).unwrap();
                let mn = g.input("M", mt.clone());
                let q = g.matmul(p, mn).unwrap();
                let lq = g.clamp_log(q, 1e-12).unwrap();
                let loss = g.pick_sum(lq, picks.clone()).unwrap();
                g.backward(loss).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_prior_qp(c: &mut Criterion) {
    let m = TransitionMatrix::random(4, 7).unwrap();
    let prior = [0.1, 0.2, 0.3, 0.4];
    let target = SimplexVector::new(m.forward_correct(&prior).unwrap()).unwrap();
    c.bench_function("prior_qp_k4", |b| b.iter(|| estimate_prior_qp(&target, &m).unwrap()));
}

fn bench_bound_chain(c: &mut Criterion) {
    let mut rng = seeds::rng(3);
    let (p, q, qp, m) = random_instance(6, 4, 5, &mut rng).unwrap();
    c.bench_function("bound_chain_x6_k4", |b| b.iter(|| verify_theorem1_chain(&p, &q, &qp, &m).unwrap()));
}

criterion_group!(benches, bench_corrected_step, bench_prior_qp, bench_bound_chain);
criterion_main!(benches);
