//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use complearn::ccgan::{ArchitectureConfig, CcganBundle, GanLossSpec, Phi};
use complearn::dcl::CorrectionMode;
use complearn::diffcore::{
    compare_gradients, finite_difference_grad, Activation, Graph, Head, Init, Mlp, NodeId, ParamId, Pick,
};
use complearn::{seeds, LabelEvidence, MlpSpec, ParamStore, Tensor, TransitionMatrix};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Coordinates whose true gradient is ~0 cannot meet a relative bound;
/// central differences carry O(h²)·f''' plus cancellation noise of about
/// 1e-16 / h.
pub const ABS_FLOOR: f64 = 1e-8;

fn random_activation<R: Rng>(rng: &mut R) -> Activation {
    match rng.random_range(0..3) {
        0 => Activation::Relu,
        1 => Activation::LeakyRelu(rng.random_range(0.01..0.3)),
        _ => Activation::Tanh,
    }
}

/// Minimum distance of a ReLU-type pre-activation from zero; a parameter
/// nudge of `FD_STEP` moves pre-activations by far less than this.
pub const KINK_MARGIN: f64 = 5e-3;

fn spec_activations(net: &Mlp) -> Vec<Activation> {
    net.spec().activations.clone()
}

/// Smallest |pre-activation| over ReLU and leaky-ReLU units for batch `x`.
fn kink_distance(store: &ParamStore, net: &Mlp, acts: &[Activation], x: &Tensor) -> f64 {
    let ids = net.params();
    let mut h = x.clone();
    let mut closest = f64::INFINITY;
    for (l, pair) in ids.chunks(2).enumerate() {
        let (w, b) = (store.get(pair[0]), store.get(pair[1]));
        let mut z = h.matmul(w);
        for r in 0..z.rows() {
            for c in 0..z.cols() {
                z.set(r, c, z.get(r, c) + b.get(0, c));
            }
        }
        if l == acts.len() {
            break;
        }
        h = match acts[l] {
            Activation::Relu => {
                closest = closest.min(z.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
                z.map(|v| v.max(0.0))
            }
            Activation::LeakyRelu(a) => {
                closest = closest.min(z.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
                z.map(|v| if v > 0.0 { v } else { a * v })
            }
            Activation::Tanh => z.map(f64::tanh),
        };
    }
    closest
}

/// Builds a random MLP (1–3 hidden layers, widths ≤ 32) with a random head
/// and a loss suited to that head, then compares backward() with central
/// differences on every parameter.
pub fn check_random_mlp(seed: u64) -> Result<usize, String> {
    let mut rng = seeds::rng(seed);
    let depth = rng.random_range(1..=3);
    let mut widths = vec![rng.random_range(1..=32)];
    for _ in 0..depth {
        widths.push(rng.random_range(1..=32));
    }
    let head = match rng.random_range(0..3) {
        0 => Head::Softmax,
        1 => Head::Linear,
        _ => Head::Sigmoid,
    };
    let out = if head == Head::Softmax { rng.random_range(2..=32) } else { rng.random_range(1..=32) };
    widths.push(out);
    let activations = (0..widths.len() - 2).map(|_| random_activation(&mut rng)).collect();
    let spec = MlpSpec { widths: widths.clone(), activations, head };
    let mut store = ParamStore::new();
    let net = Mlp::new(&mut store, "net", spec, Init::Glorot, &mut rng).map_err(|e| e.to_string())?;
    let batch = rng.random_range(1..=6);
    // Redraw until no ReLU-type unit sits near its kink, where the
    // derivative is undefined and a central difference straddles two slopes.
    let mut x = Tensor::from_fn(batch, widths[0], |_, _| rng.random_range(-1.5..1.5));
    let mut tries = 0;
    while kink_distance(&store, &net, &spec_activations(&net), &x) < KINK_MARGIN {
        tries += 1;
        if tries > 1000 {
            return Err(format!("seed {seed}: no input batch clear of ReLU kinks"));
        }
        x = Tensor::from_fn(batch, widths[0], |_, _| rng.random_range(-1.5..1.5));
    }
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..out)).collect();

    let build = |g: &mut Graph, s: &ParamStore| -> NodeId {
        let xn = g.input("x", x.clone());
        let z = net.logits(g, s, xn).unwrap();
        match head {
            Head::Softmax => {
                let lp = g.log_softmax(z).unwrap();
                let picks = labels.iter().enumerate().map(|(row, &col)| Pick { row, col, weight: -1.0 }).collect();
                g.pick_sum(lp, picks).unwrap()
            }
            Head::Linear => {
                let sq = g.mul(z, z).unwrap();
                g.mean(sq).unwrap()
            }
            Head::Sigmoid => {
                let ls = g.log_sigmoid(z, 1e-12).unwrap();
                g.mean(ls).unwrap()
            }
        }
    };
    let mut g = Graph::new();
    let loss = build(&mut g, &store);
    let analytic = g.backward(loss).map_err(|e| e.to_string())?;
    let params = net.params();
    let numeric = finite_difference_grad(&mut store, &params, FD_STEP, |s| {
        let mut g = Graph::new();
        let l = build(&mut g, s);
        g.scalar(l).unwrap()
    });
    compare_gradients(&analytic, &numeric, REL_TOL, ABS_FLOOR)
        .map_err(|m| format!("seed {seed} widths {widths:?} {head:?}: {m:?}"))?;
    Ok(params.iter().map(|&p| store.get(p).len()).sum())
}

pub fn tiny_bundle(seed: u64, trainable: bool) -> CcganBundle {
    let arch = ArchitectureConfig {
        noise_dim: 3,
        generator_hidden: vec![5],
        discriminator_hidden: vec![4],
        classifier_hidden: vec![6],
        classifier_activation: Activation::Tanh,
        ..Default::default()
    };
    let mode = if trainable {
        CorrectionMode::Estimate
    } else {
        CorrectionMode::Known(TransitionMatrix::random(3, seed).unwrap())
    };
    let mut b = CcganBundle::new(2, 3, &arch, &mode, seed).unwrap();
    if trainable {
        // Move off the uniform start so the M gradient is generic.
        let id = b.transition_params()[0];
        let mut rng = seeds::rng(seed ^ 0xabc);
        b.store_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    b
}

fn with_store(b: &CcganBundle, s: &ParamStore) -> CcganBundle {
    let mut c = b.clone();
    *c.store_mut() = s.clone();
    c
}

fn check_loss(
    b: &CcganBundle,
    params: &[ParamId],
    what: &str,
    build: impl Fn(&CcganBundle, &mut Graph) -> NodeId,
) -> Result<(), String> {
    let mut g = Graph::new();
    let loss = build(b, &mut g);
    let analytic = g.backward(loss).map_err(|e| e.to_string())?;
    let mut store = b.store().clone();
    let numeric = finite_difference_grad(&mut store, params, FD_STEP, |s| {
        let c = with_store(b, s);
        let mut g = Graph::new();
        let l = build(&c, &mut g);
        g.scalar(l).unwrap()
    });
    compare_gradients(&analytic, &numeric, REL_TOL, ABS_FLOOR).map_err(|m| format!("{what}: {m:?}"))
}

/// Gradients of all three objective components against central differences:
/// ⓐ for D (discriminator loss) and G (generator loss, through G), ⓑ for C
/// and a trainable M, ⓒ for both C and G.
pub fn check_ccgan_components(seed: u64) -> Result<(), String> {
    let b = tiny_bundle(seed, true);
    let mut rng = seeds::rng(seed);
    let real = Tensor::from_fn(5, 2, |_, _| rng.random_range(-2.0..2.0));
    let z = Tensor::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
    let y: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
    let x = Tensor::from_fn(4, 2, |_, _| rng.random_range(-2.0..2.0));
    let evidence = vec![
        LabelEvidence::Complementary(vec![1]),
        LabelEvidence::Complementary(vec![0, 2]),
        LabelEvidence::Ordinary(2),
        LabelEvidence::Complementary(vec![2]),
    ];

    for phi in [Phi::Log, Phi::Hinge] {
        let spec = GanLossSpec { phi, label_smoothing: if phi == Phi::Log { 0.1 } else { 0.0 } };
        let d_params = b.discriminator_params();
        check_loss(&b, &d_params, &format!("component a ({phi:?}) d_loss"), |c, g| {
            let r = g.input("real", real.clone());
            let f = c.generator_node(g, &z, &y).unwrap();
            c.component_a(g, r, f, &spec).unwrap().0
        })?;
        let g_params = b.generator_params();
        check_loss(&b, &g_params, &format!("component a ({phi:?}) g_loss"), |c, g| {
            let r = g.input("real", real.clone());
            let f = c.generator_node(g, &z, &y).unwrap();
            c.component_a(g, r, f, &spec).unwrap().1
        })?;
    }

    let mut cm = b.classifier_params();
    cm.extend(b.transition_params());
    check_loss(&b, &cm, "component b", |c, g| {
        let xn = g.input("x", x.clone());
        let ev: Vec<&LabelEvidence> = evidence.iter().collect();
        c.component_b(g, xn, &ev).unwrap()
    })?;

    let mut cg = b.classifier_params();
    cg.extend(b.generator_params());
    check_loss(&b, &cg, "component c", |c, g| {
        let f = c.generator_node(g, &z, &y).unwrap();
        c.component_c(g, f, &y).unwrap()
    })?;
    Ok(())
}

/// `‖t − Mᵀp‖²`, summed naively.
pub fn qp_objective(m: &TransitionMatrix, t: &[f64], p: &[f64]) -> f64 {
    let k = m.k();
    (0..k)
        .map(|j| {
            let v: f64 = (0..k).map(|i| m.get(i, j) * p[i]).sum();
            (t[j] - v).powi(2)
        })
        .sum()
}

/// Brute-force minimum of `‖t − Mᵀp‖²` over the simplex for K ≤ 4: every
/// coordinate but the last two runs over a 1e-3 grid, and the split of the
/// remaining mass between the last two is minimized in closed form.
pub fn qp_grid_minimum(m: &TransitionMatrix, t: &[f64]) -> f64 {
    let k = m.k();
    assert!((2..=4).contains(&k));
    let steps = 1000usize;
    let col = |i: usize| -> Vec<f64> { (0..k).map(|j| m.get(i, j)).collect() };
    let rows: Vec<Vec<f64>> = (0..k).map(col).collect();
    let mut best = f64::INFINITY;
    let mut inner = |fixed: &[f64]| {
        let used: f64 = fixed.iter().sum();
        let r = 1.0 - used;
        if r < -1e-12 {
            return;
        }
        let r = r.max(0.0);
        let (a_idx, b_idx) = (k - 2, k - 1);
        // v(s) = t − Σ fixed_i M_i − r M_b − s (M_a − M_b)
        let mut a = t.to_vec();
        for (i, &p) in fixed.iter().enumerate() {
            for j in 0..k {
                a[j] -= p * rows[i][j];
            }
        }
        for j in 0..k {
            a[j] -= r * rows[b_idx][j];
        }
        let d: Vec<f64> = (0..k).map(|j| -(rows[a_idx][j] - rows[b_idx][j])).collect();
        let dd: f64 = d.iter().map(|v| v * v).sum();
        let ad: f64 = a.iter().zip(&d).map(|(x, y)| x * y).sum();
        let s = if dd > 0.0 { (-ad / dd).clamp(0.0, r) } else { 0.0 };
        let mut p = fixed.to_vec();
        p.push(s);
        p.push(r - s);
        best = best.min(qp_objective(m, t, &p));
    };
    match k {
        2 => inner(&[]),
        3 => {
            for i in 0..=steps {
                inner(&[i as f64 / steps as f64]);
            }
        }
        _ => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    inner(&[i as f64 / steps as f64, j as f64 / steps as f64]);
                }
            }
        }
    }
    best
}

/// A random point on the simplex (flat Dirichlet).
pub fn random_simplex<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Runs `count` random QP instances (K ∈ 2..=4). Even instances use a
/// feasible target `Mᵀπ` and must recover π; odd ones use an arbitrary
/// simplex target. Returns the worst objective gap and worst recovery error.
pub fn check_qp_instances(count: usize, seed: u64) -> Result<(f64, f64), String> {
    use complearn::priors::{estimate_prior_qp, SimplexVector};
    let mut rng = seeds::rng(seed);
    let (mut worst_gap, mut worst_rec) = (0.0f64, 0.0f64);
    for n in 0..count {
        let k = rng.random_range(2..=4);
        let m = TransitionMatrix::random(k, seeds::derive_index(seed, n as u64)).map_err(|e| e.to_string())?;
        let feasible = n % 2 == 0;
        let truth = random_simplex(k, &mut rng);
        let t = if feasible { m.forward_correct(&truth).unwrap() } else { random_simplex(k, &mut rng) };
        let target = SimplexVector::new(t.clone()).map_err(|e| e.to_string())?;
        let sol = estimate_prior_qp(&target, &m).map_err(|e| e.to_string())?;
        let obj = qp_objective(&m, &t, sol.estimate.as_slice());
        let grid = qp_grid_minimum(&m, &t);
        let gap = (obj - grid).abs();
        worst_gap = worst_gap.max(gap);
        if gap > 1e-5 {
            return Err(format!("instance {n} (K={k}): QP objective {obj:e} vs grid {grid:e}"));
        }
        if feasible {
            let err = sol.estimate.linf_distance(&truth);
            worst_rec = worst_rec.max(err);
            if err > 1e-6 {
                return Err(format!("instance {n} (K={k}): feasible prior recovered with L∞ error {err:e}"));
            }
        }
    }
    Ok((worst_gap, worst_rec))
}

/// Fixed softmax-linear classifier used where only the risk formulas matter.
pub struct LinearSoftmax {
    pub w: Vec<f64>,
    pub k: usize,
    pub d: usize,
}

impl LinearSoftmax {
    pub fn random<R: Rng>(d: usize, k: usize, rng: &mut R) -> Self {
        LinearSoftmax { w: (0..k * (d + 1)).map(|_| rng.random_range(-2.0..2.0)).collect(), k, d }
    }
}

impl complearn::dcl::Classifier for LinearSoftmax {
    fn predict_proba(&self, x: &Tensor) -> complearn::Result<Tensor> {
        let (k, d) = (self.k, self.d);
        let mut out = Tensor::zeros(x.rows(), k);
        for r in 0..x.rows() {
            let z: Vec<f64> = (0..k)
                .map(|c| self.w[c * (d + 1) + d] + (0..d).map(|j| self.w[c * (d + 1) + j] * x.get(r, j)).sum::<f64>())
                .collect();
            let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - mx).exp()).sum();
            for c in 0..k {
                out.set(r, c, (z[c] - mx).exp() / s);
            }
        }
        Ok(out)
    }
}

/// Checks both risk identities on one random instance (n ≤ 5 so every
/// per-example single-label choice can be enumerated). Returns the
/// discrepancy of the averaged identity.
pub fn check_risk_identities(seed: u64) -> Result<f64, String> {
    use complearn::dcl::{complementary_risk, multi_complementary_risk};
    use complearn::labels::generate_complementary;
    use complearn::ComplementaryDataset;

    let mut rng = seeds::rng(seed);
    let k = rng.random_range(3..=5);
    let n = rng.random_range(2..=5);
    let d = 2;
    let x = Tensor::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let m = TransitionMatrix::random(k, seeds::derive(seed, "m")).map_err(|e| e.to_string())?;
    let model = LinearSoftmax::random(d, k, &mut rng);
    let dataset = |ev: Vec<LabelEvidence>| {
        ComplementaryDataset::from_parts(x.clone(), ev.into_iter().map(Some).collect(), y.clone(), k, 1.0, 1.0, seed)
            .map_err(|e| e.to_string())
    };

    // single labels: the multi-label estimator reduces to the single-label one
    let single = dataset(generate_complementary(&y, &m, 1, seed).map_err(|e| e.to_string())?)?;
    let a = multi_complementary_risk(&model, &single, &m).map_err(|e| e.to_string())?;
    let b = complementary_risk(&model, &single, &m).map_err(|e| e.to_string())?;
    if a.to_bits() != b.to_bits() {
        return Err(format!("k=1 multi-label risk {a:e} differs from single-label risk {b:e}"));
    }

    // averaging over every choice of one complementary label per example
    let choices: Vec<Vec<usize>> = y.iter().map(|&yi| (0..k).filter(|&c| c != yi).collect()).collect();
    let total = (k - 1).pow(n as u32);
    let mut sum = 0.0;
    for code in 0..total {
        let mut rest = code;
        let ev: Vec<LabelEvidence> = choices
            .iter()
            .map(|opts| {
                let c = opts[rest % (k - 1)];
                rest /= k - 1;
                LabelEvidence::Complementary(vec![c])
            })
            .collect();
        sum += complementary_risk(&model, &dataset(ev)?, &m).map_err(|e| e.to_string())?;
    }
    let averaged = sum / total as f64;
    let full = dataset(choices.iter().map(|c| LabelEvidence::Complementary(c.clone())).collect())?;
    let full_risk = multi_complementary_risk(&model, &full, &m).map_err(|e| e.to_string())?;
    let gap = (averaged - full_risk).abs();
    if gap > 1e-10 {
        return Err(format!("averaged single-label risk {averaged:e} vs full-complement risk {full_risk:e}"));
    }
    Ok(gap)
}

/// Fuzzes the divergence chain on `count` instances (|X| ≤ 6, K ≤ 4);
/// returns the smallest slack seen.
pub fn check_bound_chain(count: usize, seed: u64) -> Result<f64, String> {
    use complearn::divergence::{random_instance, verify_theorem1_chain};
    let mut rng = seeds::rng(seed);
    let mut worst = f64::INFINITY;
    for n in 0..count {
        let x_size = rng.random_range(1..=6);
        let k = rng.random_range(2..=4);
        let (p, q, qp, m) =
            random_instance(x_size, k, seeds::derive_index(seed, n as u64), &mut rng).map_err(|e| e.to_string())?;
        let report = verify_theorem1_chain(&p, &q, &qp, &m).map_err(|e| e.to_string())?;
        worst = worst.min(report.min_slack());
        if let Some(bad) = report.checks.iter().find(|c| c.slack < -1e-9) {
            return Err(format!("instance {n} (|X|={x_size}, K={k}): {} has slack {:e}", bad.step, bad.slack));
        }
    }
    Ok(worst)
}

/// `‖M⁻¹‖∞` of the uniform matrix against `2K − 3`.
pub fn uniform_inverse_norm_error(k: usize) -> Result<f64, String> {
    let m = TransitionMatrix::uniform(k).map_err(|e| e.to_string())?;
    let v = complearn::divergence::inf_norm_inverse(&m).map_err(|e| e.to_string())?;
    Ok((v - (2 * k - 3) as f64).abs())
}
