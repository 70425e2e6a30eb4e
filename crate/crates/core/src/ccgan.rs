//! Complementary conditional GAN.
//!
//! Three networks share one parameter store: the classifier `C` (trained
//! through the transition matrix), the generator `G(z, y)` and an
//! unconditional discriminator `D(x)`. The objective has three parts:
//!
//! - ⓐ adversarial: `D` separates real from generated features;
//! - ⓑ corrected cross-entropy of `C` on the complementary labels;
//! - ⓒ ordinary cross-entropy of `C` on generated samples against their
//!   conditioning labels, differentiated through both `C` and `G`.
//!
//! Training warms `C` up on ⓑ alone, then alternates D → G → C per batch.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dcl::{
    complementary_ce_loss, config_hash, epoch_record, Classifier, ClassifierHead, Correction, CorrectionMode, DclConfig,
    Evaluation, TrainReport, PROB_FLOOR,
};
use crate::diffcore::{
    Activation, Graph, Head, Init, Mlp, MlpSpec, NodeId, Optimizer, OptimizerConfig, ParamId, ParamStore, Pick, Tensor,
};
use crate::labels::{ComplementaryDataset, LabelEvidence, TransitionMatrix};
use crate::priors::{empirical_complementary_prior, estimate_prior_qp, SimplexVector};
use crate::seeds;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    Log,
    Hinge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanLossSpec {
    pub phi: Phi,
    /// Real-target smoothing for `D`; only meaningful for `Phi::Log`.
    pub label_smoothing: f64,
}

impl Default for GanLossSpec {
    fn default() -> Self {
        GanLossSpec { phi: Phi::Log, label_smoothing: 0.0 }
    }
}

impl GanLossSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.3).contains(&self.label_smoothing) {
            return Err(Error::Invalid(format!("label smoothing {} outside [0, 0.3]", self.label_smoothing)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub adversarial: f64,
    pub complementary: f64,
    pub generated: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { adversarial: 1.0, complementary: 1.0, generated: 1.0 }
    }
}

/// Where the label prior for generator conditioning comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Quadratic-program estimate from the complementary label frequencies.
    Estimated,
    Given(SimplexVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub warm_up_epochs: usize,
    pub joint_epochs: usize,
    /// Leading joint epochs in which `C` still descends ⓑ alone while `D`
    /// and `G` train, so that `C` never fits samples of an untrained `G`.
    pub generator_warm_up_epochs: usize,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    /// Stage-1 optimizer; its batch size also drives stage 1.
    pub warm_up: OptimizerConfig,
    /// Stage-2 optimizer shared by D, G and C (separate state each).
    pub joint: OptimizerConfig,
    /// Draw the adversarial term's real batch from labeled + unlabeled data.
    pub use_unlabeled: bool,
    pub loss: GanLossSpec,
    pub weights: LossWeights,
    pub prior: PriorMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            warm_up_epochs: 40,
            joint_epochs: 40,
            generator_warm_up_epochs: 0,
            d_steps: 1,
            warm_up: OptimizerConfig::warm_up_sgd(),
            joint: OptimizerConfig::joint_adam(),
            use_unlabeled: false,
            loss: GanLossSpec::default(),
            weights: LossWeights::default(),
            prior: PriorMode::Estimated,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_steps == 0 {
            return Err(Error::Invalid("d_steps must be at least 1".into()));
        }
        self.warm_up.validate()?;
        self.joint.validate()?;
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureConfig {
    pub noise_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub discriminator_slope: f64,
    pub classifier_hidden: Vec<usize>,
    pub classifier_activation: Activation,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            noise_dim: 16,
            generator_hidden: vec![64, 64],
            discriminator_hidden: vec![64, 64],
            discriminator_slope: 0.2,
            classifier_hidden: vec![64, 64],
            classifier_activation: Activation::Relu,
        }
    }
}

impl ArchitectureConfig {
    /// The DCL configuration whose training equals this bundle's warm-up.
    pub fn warm_up_config(&self, schedule: &ScheduleConfig) -> DclConfig {
        DclConfig {
            hidden: self.classifier_hidden.clone(),
            activation: self.classifier_activation,
            optimizer: schedule.warm_up.clone(),
            epochs: schedule.warm_up_epochs,
        }
    }
}

/// Transition matrix parameterized by free logits; each row is a softmax
/// over its off-diagonal slots, so the diagonal stays exactly zero.
#[derive(Debug, Clone)]
pub struct TrainableM {
    logits: ParamId,
    k: usize,
}

impl TrainableM {
    /// Zero logits, i.e. the uniform transition matrix.
    pub fn new(store: &mut ParamStore, prefix: &str, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Invalid("a transition matrix needs K >= 2".into()));
        }
        let logits = store.insert(format!("{prefix}.logits"), Tensor::zeros(k, k))?;
        Ok(TrainableM { logits, k })
    }

    pub fn param(&self) -> ParamId {
        self.logits
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn node(&self, g: &mut Graph, store: &ParamStore) -> Result<NodeId> {
        let p = g.param(store, self.logits);
        Ok(g.off_diag_softmax(p)?)
    }

    pub fn realize(&self, store: &ParamStore) -> Result<TransitionMatrix> {
        let mut g = Graph::new();
        let m = self.node(&mut g, store)?;
        Ok(TransitionMatrix::new(self.k, g.value(m).data().to_vec())?)
    }
}

pub fn m_recovery_error(estimated: &TransitionMatrix, truth: &TransitionMatrix) -> Result<f64> {
    Ok(estimated.frobenius_distance(truth)?)
}

/// `n` i.i.d. categorical draws.
pub fn sample_labels_with<R: Rng + ?Sized>(prior: &SimplexVector, n: usize, rng: &mut R) -> Vec<usize> {
    let p = prior.as_slice();
    let last = p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (j, &w) in p.iter().enumerate() {
                acc += w;
                if u < acc && w > 0.0 {
                    return j;
                }
            }
            last
        })
        .collect()
}

pub fn sample_labels(prior: &SimplexVector, n: usize, seed: u64) -> Vec<usize> {
    sample_labels_with(prior, n, &mut seeds::rng(seed))
}

fn one_hot(labels: &[usize], k: usize) -> Result<Tensor> {
    if let Some(bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Invalid(format!("label {bad} out of range for K={k}")));
    }
    Ok(Tensor::from_fn(labels.len(), k, |r, c| if labels[r] == c { 1.0 } else { 0.0 }))
}

fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Generator, discriminator and classifier with their shared store.
#[derive(Debug, Clone)]
pub struct CcganBundle {
    store: ParamStore,
    classifier: ClassifierHead,
    generator: Mlp,
    discriminator: Mlp,
    noise_dim: usize,
    k: usize,
    dim: usize,
    prior: SimplexVector,
    arch: ArchitectureConfig,
}

impl CcganBundle {
    /// Classifier (and trainable `M`) are registered first and drawn from the
    /// same stream as `train_dcl`, so both start from identical weights.
    pub fn new(dim: usize, k: usize, arch: &ArchitectureConfig, mode: &CorrectionMode, seed: u64) -> Result<Self> {
        if arch.noise_dim == 0 {
            return Err(Error::Invalid("noise dimension must be positive".into()));
        }
        let mut store = ParamStore::new();
        let warm = arch.warm_up_config(&ScheduleConfig::default());
        let classifier = ClassifierHead::new(&mut store, dim, k, &warm, mode, seed)?;

        let mut widths = vec![arch.noise_dim + k];
        widths.extend(&arch.generator_hidden);
        widths.push(dim);
        let spec = MlpSpec::uniform(widths, Activation::Relu, Head::Linear);
        let mut rng = seeds::rng(seeds::derive(seed, "generator/init"));
        let generator = Mlp::new(&mut store, "g", spec, Init::Glorot, &mut rng)?;

        let mut widths = vec![dim];
        widths.extend(&arch.discriminator_hidden);
        widths.push(1);
        let spec = MlpSpec::uniform(widths, Activation::LeakyRelu(arch.discriminator_slope), Head::Sigmoid);
        let mut rng = seeds::rng(seeds::derive(seed, "discriminator/init"));
        let discriminator = Mlp::new(&mut store, "d", spec, Init::Glorot, &mut rng)?;

        Ok(CcganBundle {
            store,
            classifier,
            generator,
            discriminator,
            noise_dim: arch.noise_dim,
            k,
            dim,
            prior: SimplexVector::uniform(k),
            arch: arch.clone(),
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn prior(&self) -> &SimplexVector {
        &self.prior
    }

    pub fn set_prior(&mut self, prior: SimplexVector) -> Result<()> {
        if prior.len() != self.k {
            return Err(Error::Invalid(format!("prior has {} entries, expected {}", prior.len(), self.k)));
        }
        self.prior = prior;
        Ok(())
    }

    pub fn transition(&self) -> Result<TransitionMatrix> {
        self.classifier.correction.realize(&self.store)
    }

    pub fn classifier_params(&self) -> Vec<ParamId> {
        self.classifier.net.params()
    }

    /// Logits of the trainable `M`, if any.
    pub fn transition_params(&self) -> Vec<ParamId> {
        match &self.classifier.correction {
            Correction::Trainable(tm) => vec![tm.param()],
            Correction::Fixed(_) => Vec::new(),
        }
    }

    pub fn generator_params(&self) -> Vec<ParamId> {
        self.generator.params()
    }

    pub fn discriminator_params(&self) -> Vec<ParamId> {
        self.discriminator.params()
    }

    /// `G(z, y)` as a graph node: the network sees `[z | onehot(y)]`.
    pub fn generator_node(&self, g: &mut Graph, z: &Tensor, labels: &[usize]) -> Result<NodeId> {
        if z.cols() != self.noise_dim || z.rows() != labels.len() {
            return Err(Error::Invalid(format!(
                "noise is {}x{}, expected {}x{}",
                z.rows(),
                z.cols(),
                labels.len(),
                self.noise_dim
            )));
        }
        let zn = g.input("z", z.clone());
        let yn = g.input("y", one_hot(labels, self.k)?);
        let input = g.concat_cols(zn, yn)?;
        Ok(self.generator.forward(g, &self.store, input)?)
    }

    pub fn generator_forward(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let out = self.generator_node(&mut g, z, labels)?;
        Ok(g.value(out).clone())
    }

    /// Discriminator probability `D(x)` for each row.
    pub fn discriminate(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.discriminator.predict(&self.store, x)?)
    }

    /// `(d_loss, g_loss)` graph nodes for real and fake feature nodes.
    pub fn component_a(&self, g: &mut Graph, real: NodeId, fake: NodeId, spec: &GanLossSpec) -> Result<(NodeId, NodeId)> {
        let r = self.discriminator.logits(g, &self.store, real)?;
        let f = self.discriminator.logits(g, &self.store, fake)?;
        Ok((d_loss_node(g, r, f, spec)?, g_loss_node(g, f, spec)?))
    }

    /// Corrected (or, for ordinary evidence, plain) cross-entropy of `C`.
    pub fn component_b(&self, g: &mut Graph, x: NodeId, evidence: &[&LabelEvidence]) -> Result<NodeId> {
        self.classifier.evidence_loss(g, &self.store, x, evidence)
    }

    /// Mean cross-entropy of `C` on `G(z, y)` against `y`.
    pub fn component_c(&self, g: &mut Graph, fake: NodeId, labels: &[usize]) -> Result<NodeId> {
        let logits = self.classifier.net.logits(g, &self.store, fake)?;
        let log_p = g.log_softmax(logits)?;
        let w = -1.0 / labels.len() as f64;
        let picks = labels.iter().enumerate().map(|(row, &col)| Pick { row, col, weight: w }).collect();
        Ok(g.pick_sum(log_p, picks)?)
    }

    pub fn loss_component_a(&self, real: &Tensor, fake: &Tensor, spec: &GanLossSpec) -> Result<(f64, f64)> {
        if real.rows() == 0 || fake.rows() == 0 {
            return Err(Error::Invalid("adversarial batches must be nonempty".into()));
        }
        let mut g = Graph::new();
        let r = g.input_checked("real", real.clone(), self.dim)?;
        let f = g.input_checked("fake", fake.clone(), self.dim)?;
        let (d, gl) = self.component_a(&mut g, r, f, spec)?;
        Ok((g.scalar(d)?, g.scalar(gl)?))
    }

    /// Batch mean of `complementary_ce_loss(C(x_i), ȳ_i, M)`.
    pub fn loss_component_b(&self, x: &Tensor, complementary: &[usize]) -> Result<f64> {
        if x.rows() != complementary.len() || x.rows() == 0 {
            return Err(Error::Invalid("component b needs a nonempty, aligned batch".into()));
        }
        let probs = self.predict_proba(x)?;
        let m = self.transition()?;
        let mut total = 0.0;
        for (i, &c) in complementary.iter().enumerate() {
            total += complementary_ce_loss(probs.row_slice(i), c, &m)?;
        }
        Ok(total / x.rows() as f64)
    }

    pub fn loss_component_c(&self, z: &Tensor, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::Invalid("component c needs a nonempty batch".into()));
        }
        let mut g = Graph::new();
        let fake = self.generator_node(&mut g, z, labels)?;
        let c = self.component_c(&mut g, fake, labels)?;
        Ok(g.scalar(c)?)
    }

    /// `per_class` generated points for every class, labels in class order.
    pub fn sample(&self, per_class: usize, seed: u64) -> Result<(Tensor, Vec<usize>)> {
        let labels: Vec<usize> = (0..self.k).flat_map(|y| std::iter::repeat_n(y, per_class)).collect();
        let z = standard_normal(labels.len(), self.noise_dim, &mut seeds::rng(seed));
        Ok((self.generator_forward(&z, &labels)?, labels))
    }

    pub fn architecture(&self) -> &ArchitectureConfig {
        &self.arch
    }
}

impl Classifier for CcganBundle {
    fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        self.classifier.predict(&self.store, x)
    }
}

/// Log φ: `−(1−ε)·mean ln D(r) − ε·mean ln(1−D(r)) − mean ln(1−D(f))`, with
/// `D = σ(logit)` clamped to `[1e-12, 1−1e-12]` in the log domain.
/// Hinge φ: `mean relu(1−r) + mean relu(1+f)`.
fn d_loss_node(g: &mut Graph, real: NodeId, fake: NodeId, spec: &GanLossSpec) -> Result<NodeId> {
    Ok(match spec.phi {
        Phi::Log => {
            let eps = spec.label_smoothing;
            let log_dr = g.log_sigmoid(real, PROB_FLOOR)?;
            let mut loss = g.mean(log_dr)?;
            loss = g.affine(loss, -(1.0 - eps), 0.0)?;
            if eps > 0.0 {
                let neg_r = g.affine(real, -1.0, 0.0)?;
                let log_not = g.log_sigmoid(neg_r, PROB_FLOOR)?;
                let m = g.mean(log_not)?;
                let term = g.affine(m, -eps, 0.0)?;
                loss = g.add(loss, term)?;
            }
            let neg_f = g.affine(fake, -1.0, 0.0)?;
            let log_not_f = g.log_sigmoid(neg_f, PROB_FLOOR)?;
            let m = g.mean(log_not_f)?;
            let term = g.affine(m, -1.0, 0.0)?;
            g.add(loss, term)?
        }
        Phi::Hinge => {
            let r = g.affine(real, -1.0, 1.0)?;
            let r = g.relu(r)?;
            let r = g.mean(r)?;
            let f = g.affine(fake, 1.0, 1.0)?;
            let f = g.relu(f)?;
            let f = g.mean(f)?;
            g.add(r, f)?
        }
    })
}

/// Non-saturating `−mean ln D(f)` for log φ, `−mean f` for hinge.
fn g_loss_node(g: &mut Graph, fake: NodeId, spec: &GanLossSpec) -> Result<NodeId> {
    Ok(match spec.phi {
        Phi::Log => {
            let l = g.log_sigmoid(fake, PROB_FLOOR)?;
            let m = g.mean(l)?;
            g.affine(m, -1.0, 0.0)?
        }
        Phi::Hinge => {
            let m = g.mean(fake)?;
            g.affine(m, -1.0, 0.0)?
        }
    })
}

fn weighted_sum(g: &mut Graph, terms: &[(NodeId, f64)]) -> Result<NodeId> {
    let mut total = None;
    for &(node, w) in terms.iter().filter(|t| t.1 != 0.0) {
        let scaled = if w == 1.0 { node } else { g.affine(node, w, 0.0)? };
        total = Some(match total {
            None => scaled,
            Some(t) => g.add(t, scaled)?,
        });
    }
    total.ok_or_else(|| Error::Invalid("all loss weights are zero".into()))
}

fn checked(g: &Graph, loss: NodeId, stage: &str, step: usize) -> Result<f64> {
    let v = g.scalar(loss)?;
    if !v.is_finite() {
        return Err(Error::TrainingAborted { stage: stage.into(), step, reason: format!("loss is {v}") });
    }
    Ok(v)
}

fn apply(opt: &mut Optimizer, store: &mut ParamStore, g: &Graph, loss: NodeId, stage: &str, step: usize) -> Result<()> {
    let grads = g.backward(loss)?;
    opt.step(store, &grads)
        .map_err(|e| Error::TrainingAborted { stage: stage.into(), step, reason: e.to_string() })
}

/// Label prior for conditioning: the QP estimate under the current `M`, or
/// ordinary-label frequencies when there are no complementary labels.
fn resolve_prior(ds: &ComplementaryDataset, bundle: &CcganBundle, mode: &PriorMode) -> Result<SimplexVector> {
    match mode {
        PriorMode::Given(p) => Ok(p.clone()),
        PriorMode::Estimated if ds.complementary_count() > 0 => {
            let target = empirical_complementary_prior(ds)?;
            let sol = estimate_prior_qp(&target, &bundle.transition()?)?;
            if sol.rank_deficient {
                log::warn!("transition matrix is rank deficient; prior estimate is not unique");
            }
            Ok(sol.estimate)
        }
        PriorMode::Estimated => {
            let mut counts = vec![0.0; ds.k()];
            for e in ds.evidence().iter().flatten() {
                if let LabelEvidence::Ordinary(y) = e {
                    counts[*y] += 1.0;
                }
            }
            Ok(SimplexVector::from_counts(&counts)?)
        }
    }
}

/// Stage 1 then stage 2 as configured by `schedule`.
pub fn train_ccgan(
    ds: &ComplementaryDataset,
    bundle: CcganBundle,
    schedule: &ScheduleConfig,
    seed: u64,
    eval: &Evaluation<'_>,
) -> Result<(CcganBundle, TrainReport)> {
    let use_pool = schedule.use_unlabeled && !ds.unlabeled_indices().is_empty();
    if schedule.use_unlabeled && !use_pool {
        log::warn!("no unlabeled data; training without it");
    }
    run(ds, bundle, schedule, seed, eval, use_pool)
}

/// `train_ccgan` whose adversarial real batches come from the whole pool.
pub fn train_sccgan(
    ds: &ComplementaryDataset,
    bundle: CcganBundle,
    schedule: &ScheduleConfig,
    seed: u64,
    eval: &Evaluation<'_>,
) -> Result<(CcganBundle, TrainReport)> {
    if ds.unlabeled_indices().is_empty() {
        log::warn!("no unlabeled data; falling back to CCGAN");
        let plain = ScheduleConfig { use_unlabeled: false, ..schedule.clone() };
        return run(ds, bundle, &plain, seed, eval, false);
    }
    let pooled = ScheduleConfig { use_unlabeled: true, ..schedule.clone() };
    run(ds, bundle, &pooled, seed, eval, true)
}

fn run(
    ds: &ComplementaryDataset,
    mut bundle: CcganBundle,
    schedule: &ScheduleConfig,
    seed: u64,
    eval: &Evaluation<'_>,
    use_pool: bool,
) -> Result<(CcganBundle, TrainReport)> {
    let started = Instant::now();
    schedule.validate()?;
    if ds.dim() != bundle.dim || ds.k() != bundle.k {
        return Err(Error::Invalid(format!(
            "bundle expects d={} K={}, data has d={} K={}",
            bundle.dim,
            bundle.k,
            ds.dim(),
            ds.k()
        )));
    }
    let labeled = ds.labeled_indices();
    if labeled.is_empty() {
        return Err(Error::Invalid("no labeled examples".into()));
    }
    let mut report = TrainReport::new(seed, config_hash(&(&bundle.arch, schedule)));
    let track_m = !bundle.transition_params().is_empty();
    let m_now = |b: &CcganBundle| -> Result<Option<TransitionMatrix>> {
        if track_m {
            Ok(Some(b.transition()?))
        } else {
            Ok(None)
        }
    };

    // Stage 1: the classifier network alone on its labels, exactly as
    // train_dcl. A trainable M stays at its uniform start until stage 2, so
    // C first settles on the class assignment the uniform correction implies.
    let mut warm = Optimizer::new(schedule.warm_up.clone(), bundle.classifier_params())?;
    let shuffle_seed = seeds::derive(seed, "classifier/shuffle");
    for epoch in 0..schedule.warm_up_epochs {
        let head = bundle.classifier.clone();
        let loss = head.train_epoch(&mut bundle.store, &mut warm, ds, &labeled, shuffle_seed, epoch)?;
        let m = m_now(&bundle)?;
        report.records.push(epoch_record(epoch, loss, &bundle, m, eval)?);
    }
    if schedule.joint_epochs == 0 {
        report.wall_time_secs = started.elapsed().as_secs_f64();
        return Ok((bundle, report));
    }

    let prior = resolve_prior(ds, &bundle, &schedule.prior)?;
    log::debug!("generator label prior {:?}", prior.as_slice());
    bundle.set_prior(prior)?;

    // Stage 2: alternating D → G → C per labeled batch.
    let mut opt_d = Optimizer::new(schedule.joint.clone(), bundle.discriminator_params())?;
    let mut opt_g = Optimizer::new(schedule.joint.clone(), bundle.generator_params())?;
    let mut opt_c = Optimizer::new(schedule.joint.clone(), bundle.classifier.params())?;
    let batch_size = schedule.joint.batch_size;
    let joint_shuffle = seeds::derive(seed, "ccgan/shuffle");
    let pool_shuffle = seeds::derive(seed, "ccgan/pool");
    let mut sampler = seeds::rng(seeds::derive(seed, "ccgan/sampling"));
    let pool: Vec<usize> = (0..ds.len()).collect();
    let (spec, w) = (schedule.loss, schedule.weights);
    let mut step = 0usize;

    for epoch in 0..schedule.joint_epochs {
        if track_m && epoch > 0 {
            // the prior is a function of M; follow the current estimate
            let prior = resolve_prior(ds, &bundle, &schedule.prior)?;
            log::debug!("joint epoch {epoch}: label prior {:?}", prior.as_slice());
            bundle.set_prior(prior)?;
        }
        let mut order = labeled.clone();
        order.shuffle(&mut seeds::rng(seeds::derive_index(joint_shuffle, epoch as u64)));
        let mut pool_order = pool.clone();
        pool_order.shuffle(&mut seeds::rng(seeds::derive_index(pool_shuffle, epoch as u64)));
        let mut pool_pos = 0usize;
        let (mut c_total, mut d_total, mut g_total) = (0.0, 0.0, 0.0);

        for chunk in order.chunks(batch_size) {
            let b = chunk.len();
            let real = if use_pool {
                let idx: Vec<usize> = (0..b).map(|i| pool_order[(pool_pos + i) % pool_order.len()]).collect();
                pool_pos += b;
                ds.features().select_rows(&idx)
            } else {
                ds.features().select_rows(chunk)
            };

            for _ in 0..schedule.d_steps {
                let z = standard_normal(b, bundle.noise_dim, &mut sampler);
                let y = sample_labels_with(&bundle.prior, b, &mut sampler);
                let fake = bundle.generator_forward(&z, &y)?;
                let mut g = Graph::new();
                let rn = g.input("real", real.clone());
                let fnode = g.input("fake", fake);
                let (d_loss, _) = bundle.component_a(&mut g, rn, fnode, &spec)?;
                let d_loss = weighted_sum(&mut g, &[(d_loss, w.adversarial)])?;
                d_total += checked(&g, d_loss, "discriminator", step)? * b as f64;
                apply(&mut opt_d, &mut bundle.store, &g, d_loss, "discriminator", step)?;
            }

            let z = standard_normal(b, bundle.noise_dim, &mut sampler);
            let y = sample_labels_with(&bundle.prior, b, &mut sampler);
            {
                let mut g = Graph::new();
                let fake = bundle.generator_node(&mut g, &z, &y)?;
                let f = bundle.discriminator.logits(&mut g, &bundle.store, fake)?;
                let adv = g_loss_node(&mut g, f, &spec)?;
                let cls = bundle.component_c(&mut g, fake, &y)?;
                let loss = weighted_sum(&mut g, &[(adv, w.adversarial), (cls, w.generated)])?;
                g_total += checked(&g, loss, "generator", step)? * b as f64;
                apply(&mut opt_g, &mut bundle.store, &g, loss, "generator", step)?;
            }

            {
                let fake = bundle.generator_forward(&z, &y)?;
                let evidence: Vec<&LabelEvidence> =
                    chunk.iter().map(|&i| ds.evidence()[i].as_ref().expect("labeled index")).collect();
                let mut g = Graph::new();
                let xn = g.input("x", ds.features().select_rows(chunk));
                let comp = bundle.component_b(&mut g, xn, &evidence)?;
                let fnode = g.input("fake", fake);
                let cls = bundle.component_c(&mut g, fnode, &y)?;
                let w_gen = if epoch < schedule.generator_warm_up_epochs { 0.0 } else { w.generated };
                let loss = weighted_sum(&mut g, &[(comp, w.complementary), (cls, w_gen)])?;
                c_total += checked(&g, loss, "classifier", step)? * b as f64;
                apply(&mut opt_c, &mut bundle.store, &g, loss, "classifier", step)?;
            }
            step += 1;
        }

        let n = order.len() as f64;
        log::debug!(
            "joint epoch {epoch}: d {:.4} g {:.4} c {:.4}",
            d_total / (n * schedule.d_steps as f64),
            g_total / n,
            c_total / n
        );
        let m = m_now(&bundle)?;
        if let Some(m) = &m {
            debug_assert!((0..m.k()).all(|i| m.get(i, i) == 0.0));
        }
        report.records.push(epoch_record(schedule.warm_up_epochs + epoch, c_total / n, &bundle, m, eval)?);
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((bundle, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mode: CorrectionMode) -> CcganBundle {
        let arch = ArchitectureConfig {
            noise_dim: 3,
            generator_hidden: vec![5],
            discriminator_hidden: vec![4],
            classifier_hidden: vec![6],
            ..Default::default()
        };
        CcganBundle::new(2, 3, &arch, &mode, 11).unwrap()
    }

    fn zero_params(b: &mut CcganBundle, ids: Vec<ParamId>) {
        for id in ids {
            b.store_mut().get_mut(id).data_mut().fill(0.0);
        }
    }

    #[test]
    fn trainable_m_starts_uniform() {
        let mut store = ParamStore::new();
        let tm = TrainableM::new(&mut store, "m", 4).unwrap();
        let m = tm.realize(&store).unwrap();
        assert!(m.frobenius_distance(&TransitionMatrix::uniform(4).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn recovery_error_cycle_example() {
        let u = TransitionMatrix::uniform(3).unwrap();
        let cycle = TransitionMatrix::new(3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((m_recovery_error(&u, &cycle).unwrap() - 1.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m_recovery_error(&u, &u).unwrap(), 0.0);
        assert!(m_recovery_error(&u, &TransitionMatrix::uniform(4).unwrap()).is_err());
    }

    #[test]
    fn degenerate_prior_always_draws_its_class() {
        let p = SimplexVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(sample_labels(&p, 500, 4).iter().all(|&y| y == 0));
        let p = SimplexVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(sample_labels(&p, 500, 4).iter().all(|&y| y == 2));
    }

    #[test]
    fn zero_generator_outputs_zero() {
        let mut b = tiny(CorrectionMode::Estimate);
        let ids = b.generator_params();
        zero_params(&mut b, ids);
        let z = Tensor::from_fn(4, 3, |r, c| (r + c) as f64 - 1.5);
        let out = b.generator_forward(&z, &[0, 1, 2, 0]).unwrap();
        assert_eq!(out.shape(), [4, 2]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(b.generator_forward(&z, &[0, 1, 3, 0]).is_err());
    }

    #[test]
    fn equilibrium_discriminator_gives_two_log_two() {
        let mut b = tiny(CorrectionMode::Estimate);
        let ids = b.discriminator_params();
        zero_params(&mut b, ids);
        let real = Tensor::from_fn(5, 2, |r, c| r as f64 - c as f64);
        let fake = Tensor::from_fn(3, 2, |r, _| r as f64);
        let (d, g) = b.loss_component_a(&real, &fake, &GanLossSpec::default()).unwrap();
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((g - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_classifier_components_equal_log_k() {
        let mut b = tiny(CorrectionMode::Known(TransitionMatrix::uniform(3).unwrap()));
        let ids = b.classifier_params();
        zero_params(&mut b, ids);
        let x = Tensor::from_fn(4, 2, |r, c| (r * 2 + c) as f64);
        assert!((b.loss_component_b(&x, &[0, 1, 2, 1]).unwrap() - 3f64.ln()).abs() < 1e-15);
        let z = Tensor::from_fn(4, 3, |r, c| (r as f64 - c as f64) * 0.3);
        assert!((b.loss_component_c(&z, &[2, 1, 0, 0]).unwrap() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn smoothing_out_of_range_rejected() {
        assert!(GanLossSpec { phi: Phi::Log, label_smoothing: 0.31 }.validate().is_err());
        assert!(GanLossSpec { phi: Phi::Hinge, label_smoothing: 0.3 }.validate().is_ok());
    }
}
