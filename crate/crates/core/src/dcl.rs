//! Discriminative complementary learning.
//!
//! The classifier outputs `g(x)`, an estimate of `P(Y|x)`. A complementary
//! label `ȳ` is scored by ordinary cross-entropy against the forward-corrected
//! distribution `Mᵀg(x)`, which is the model's implied `P(Ȳ|x)`.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ccgan::TrainableM;
use crate::diffcore::{Activation, Graph, Head, Init, Mlp, MlpSpec, NodeId, Optimizer, OptimizerConfig, ParamId, ParamStore, Pick, Tensor};
use crate::labels::{ComplementaryDataset, LabelEvidence, TransitionMatrix};
use crate::seeds;
use crate::{Error, Result};

/// Floor applied to every probability before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `−ln(max(p_y, floor))`; NaN stays NaN.
pub fn cross_entropy(p: &[f64], y: usize) -> f64 {
    let v = p[y];
    -(if v < PROB_FLOOR { PROB_FLOOR } else { v }).ln()
}

/// Cross-entropy of `Mᵀg` against the complementary label `ȳ`.
pub fn complementary_ce_loss(g: &[f64], complementary: usize, m: &TransitionMatrix) -> Result<f64> {
    if complementary >= m.k() {
        return Err(Error::Invalid(format!("complementary label {complementary} out of range")));
    }
    let corrected = m.forward_correct(g)?;
    Ok(cross_entropy(&corrected, complementary))
}

/// Anything that maps a feature batch to class probabilities.
pub trait Classifier {
    /// One row of class probabilities per input row.
    fn predict_proba(&self, x: &Tensor) -> Result<Tensor>;
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn evaluate_accuracy(model: &impl Classifier, x: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() || x.rows() != labels.len() {
        return Err(Error::Invalid(format!("{} test rows for {} labels", x.rows(), labels.len())));
    }
    let probs = model.predict_proba(x)?;
    let hits = (0..labels.len()).filter(|&i| argmax(probs.row_slice(i)) == labels[i]).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean cross-entropy against ordinary labels.
pub fn ordinary_ce_risk(model: &impl Classifier, x: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() || x.rows() != labels.len() {
        return Err(Error::Invalid("ordinary risk needs a nonempty, aligned batch".into()));
    }
    let probs = model.predict_proba(x)?;
    Ok((0..labels.len()).map(|i| cross_entropy(probs.row_slice(i), labels[i])).sum::<f64>() / labels.len() as f64)
}

fn complementary_rows(ds: &ComplementaryDataset) -> Vec<(usize, &[usize])> {
    ds.evidence()
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.as_ref().and_then(|e| e.complementary_labels()).map(|s| (i, s)))
        .collect()
}

/// Mean corrected loss using the first complementary label of every example
/// that has complementary evidence.
pub fn complementary_risk(model: &impl Classifier, ds: &ComplementaryDataset, m: &TransitionMatrix) -> Result<f64> {
    let rows = complementary_rows(ds);
    if rows.is_empty() {
        return Err(Error::Invalid("dataset has no complementary labels".into()));
    }
    let idx: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let probs = model.predict_proba(&ds.features().select_rows(&idx))?;
    let mut total = 0.0;
    for (r, (_, set)) in rows.iter().enumerate() {
        total += complementary_ce_loss(probs.row_slice(r), set[0], m)?;
    }
    Ok(total / rows.len() as f64)
}

/// Corrected loss summed over every complementary label of every example,
/// divided by the total label count.
pub fn multi_complementary_risk(model: &impl Classifier, ds: &ComplementaryDataset, m: &TransitionMatrix) -> Result<f64> {
    let rows = complementary_rows(ds);
    let count: usize = rows.iter().map(|r| r.1.len()).sum();
    if count == 0 {
        return Err(Error::Invalid("dataset has no complementary labels".into()));
    }
    let idx: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let probs = model.predict_proba(&ds.features().select_rows(&idx))?;
    let mut total = 0.0;
    for (r, (_, set)) in rows.iter().enumerate() {
        for &c in set.iter() {
            total += complementary_ce_loss(probs.row_slice(r), c, m)?;
        }
    }
    Ok(total / count as f64)
}

/// How the transition matrix enters training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    Known(TransitionMatrix),
    /// Learn `M` jointly with the classifier, starting from uniform.
    Estimate,
}

/// The transition matrix as it appears in a graph.
#[derive(Debug, Clone)]
pub(crate) enum Correction {
    Fixed(TransitionMatrix),
    Trainable(TrainableM),
}

impl Correction {
    fn new(store: &mut ParamStore, mode: &CorrectionMode, k: usize) -> Result<Self> {
        Ok(match mode {
            CorrectionMode::Known(m) => {
                if m.k() != k {
                    return Err(Error::Invalid(format!("M is {}x{} but the data has K={k}", m.k(), m.k())));
                }
                Correction::Fixed(m.clone())
            }
            CorrectionMode::Estimate => Correction::Trainable(TrainableM::new(store, "m", k)?),
        })
    }

    fn node(&self, g: &mut Graph, store: &ParamStore) -> Result<NodeId> {
        Ok(match self {
            Correction::Fixed(m) => {
                let t = Tensor::from_vec(m.k(), m.k(), m.entries().to_vec()).expect("square");
                g.input("M", t)
            }
            Correction::Trainable(tm) => tm.node(g, store)?,
        })
    }

    pub(crate) fn realize(&self, store: &ParamStore) -> Result<TransitionMatrix> {
        match self {
            Correction::Fixed(m) => Ok(m.clone()),
            Correction::Trainable(tm) => tm.realize(store),
        }
    }

    fn params(&self) -> Vec<ParamId> {
        match self {
            Correction::Fixed(_) => Vec::new(),
            Correction::Trainable(tm) => vec![tm.param()],
        }
    }
}

/// Classifier network plus the correction it is trained through.
#[derive(Debug, Clone)]
pub(crate) struct ClassifierHead {
    pub(crate) net: Mlp,
    pub(crate) correction: Correction,
}

impl ClassifierHead {
    /// Registers the classifier first, then a trainable `M` if requested.
    /// Initialization draws only from the `classifier/init` stream.
    pub(crate) fn new(
        store: &mut ParamStore,
        dim: usize,
        k: usize,
        cfg: &DclConfig,
        mode: &CorrectionMode,
        seed: u64,
    ) -> Result<Self> {
        let mut widths = vec![dim];
        widths.extend(&cfg.hidden);
        widths.push(k);
        let spec = MlpSpec::uniform(widths, cfg.activation, Head::Softmax);
        let mut rng = seeds::rng(seeds::derive(seed, "classifier/init"));
        let net = Mlp::new(store, "c", spec, Init::Glorot, &mut rng)?;
        let correction = Correction::new(store, mode, k)?;
        Ok(ClassifierHead { net, correction })
    }

    pub(crate) fn params(&self) -> Vec<ParamId> {
        let mut p = self.net.params();
        p.extend(self.correction.params());
        p
    }

    /// Mean per-example loss of a batch: ordinary evidence contributes
    /// `−ln softmax(z)_y`, complementary evidence the average over its labels
    /// of `−ln max((Mᵀg)_ȳ, floor)`.
    pub(crate) fn evidence_loss(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        evidence: &[&LabelEvidence],
    ) -> Result<NodeId> {
        let logits = self.net.logits(g, store, x)?;
        let b = evidence.len() as f64;
        let mut ordinary = Vec::new();
        let mut complementary = Vec::new();
        for (row, e) in evidence.iter().enumerate() {
            match e {
                LabelEvidence::Ordinary(y) => ordinary.push(Pick { row, col: *y, weight: -1.0 / b }),
                LabelEvidence::Complementary(set) => {
                    let w = -1.0 / (b * set.len() as f64);
                    complementary.extend(set.iter().map(|&col| Pick { row, col, weight: w }));
                }
            }
        }
        let mut terms = Vec::new();
        if !ordinary.is_empty() {
            let log_p = g.log_softmax(logits)?;
            terms.push(g.pick_sum(log_p, ordinary)?);
        }
        if !complementary.is_empty() {
            let p = g.softmax(logits)?;
            let m = self.correction.node(g, store)?;
            let corrected = g.matmul(p, m)?;
            let log_q = g.clamp_log(corrected, PROB_FLOOR)?;
            terms.push(g.pick_sum(log_q, complementary)?);
        }
        let mut total = *terms.first().ok_or_else(|| Error::Invalid("empty batch".into()))?;
        for &t in &terms[1..] {
            total = g.add(total, t)?;
        }
        Ok(total)
    }

    /// One pass over the labeled examples in a seeded order. Returns the
    /// example-weighted mean batch loss.
    pub(crate) fn train_epoch(
        &self,
        store: &mut ParamStore,
        opt: &mut Optimizer,
        ds: &ComplementaryDataset,
        labeled: &[usize],
        shuffle_seed: u64,
        epoch: usize,
    ) -> Result<f64> {
        let mut order = labeled.to_vec();
        order.shuffle(&mut seeds::rng(seeds::derive_index(shuffle_seed, epoch as u64)));
        let batch_size = opt.config().batch_size;
        let mut total = 0.0;
        for (step, chunk) in order.chunks(batch_size).enumerate() {
            let evidence: Vec<&LabelEvidence> =
                chunk.iter().map(|&i| ds.evidence()[i].as_ref().expect("labeled index")).collect();
            let mut g = Graph::new();
            let x = g.input("x", ds.features().select_rows(chunk));
            let loss = self.evidence_loss(&mut g, store, x, &evidence)?;
            let value = g.scalar(loss)?;
            if !value.is_finite() {
                return Err(Error::TrainingAborted {
                    stage: "classifier".into(),
                    step: epoch * order.len().div_ceil(batch_size) + step,
                    reason: format!("loss is {value}"),
                });
            }
            let grads = g.backward(loss)?;
            opt.step(store, &grads).map_err(|e| Error::TrainingAborted {
                stage: "classifier".into(),
                step,
                reason: e.to_string(),
            })?;
            total += value * chunk.len() as f64;
        }
        Ok(total / order.len() as f64)
    }

    pub(crate) fn predict(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(self.net.predict(store, x)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DclConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
}

impl Default for DclConfig {
    fn default() -> Self {
        DclConfig {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            optimizer: OptimizerConfig::warm_up_sgd(),
            epochs: 40,
        }
    }
}

/// Held-out data evaluated after every epoch.
#[derive(Debug, Clone, Default)]
pub struct Evaluation<'a> {
    pub test: Option<(&'a Tensor, &'a [usize])>,
    /// Reference `M` for recovery-error tracking when `M` is learned.
    pub true_transition: Option<&'a TransitionMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    /// Frobenius distance between the learned and the reference `M`.
    pub m_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub seed: u64,
    pub config_hash: String,
    /// Excluded from determinism comparisons.
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub(crate) fn new(seed: u64, config_hash: String) -> Self {
        TrainReport { records: Vec::new(), seed, config_hash, wall_time_secs: 0.0 }
    }

    /// Same seed, configuration and per-epoch numbers.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        self.seed == other.seed && self.config_hash == other.config_hash && self.records == other.records
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.test_acc)
    }

    /// `epoch,train_loss,test_acc[,m_error]`; missing values are empty.
    pub fn to_csv(&self) -> Result<String> {
        let with_m = self.records.iter().any(|r| r.m_error.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["epoch", "train_loss", "test_acc"];
        if with_m {
            header.push("m_error");
        }
        let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        w.write_record(&header).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            let mut row = vec![r.epoch.to_string(), r.train_loss.to_string(), opt(r.test_acc)];
            if with_m {
                row.push(opt(r.m_error));
            }
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("utf-8 csv"))
    }
}

/// Short stable digest of any serializable configuration.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// A trained classifier with its own parameters.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    store: ParamStore,
    head: ClassifierHead,
}

impl ClassifierModel {
    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn spec(&self) -> &MlpSpec {
        self.head.net.spec()
    }

    /// The transition matrix used at the end of training (learned or given).
    pub fn transition(&self) -> Result<TransitionMatrix> {
        self.head.correction.realize(&self.store)
    }
}

impl Classifier for ClassifierModel {
    fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        self.head.predict(&self.store, x)
    }
}

pub(crate) fn epoch_record(
    epoch: usize,
    train_loss: f64,
    model: &impl Classifier,
    correction: Option<TransitionMatrix>,
    eval: &Evaluation<'_>,
) -> Result<EpochRecord> {
    let test_acc = match eval.test {
        Some((x, y)) => Some(evaluate_accuracy(model, x, y)?),
        None => None,
    };
    let m_error = match (correction, eval.true_transition) {
        (Some(m), Some(t)) => Some(m.frobenius_distance(t)?),
        _ => None,
    };
    Ok(EpochRecord { epoch, train_loss, test_acc, m_error })
}

/// Trains a classifier on the labeled part of `ds`. Ordinary evidence uses
/// plain cross-entropy, complementary evidence the corrected loss; both
/// carry equal per-example weight.
pub fn train_dcl(
    ds: &ComplementaryDataset,
    mode: &CorrectionMode,
    cfg: &DclConfig,
    seed: u64,
    eval: &Evaluation<'_>,
) -> Result<(ClassifierModel, TrainReport)> {
    let started = Instant::now();
    let labeled = ds.labeled_indices();
    if labeled.is_empty() {
        return Err(Error::Invalid("no labeled examples".into()));
    }
    let mut store = ParamStore::new();
    let head = ClassifierHead::new(&mut store, ds.dim(), ds.k(), cfg, mode, seed)?;
    let mut opt = Optimizer::new(cfg.optimizer.clone(), head.params())?;
    let shuffle_seed = seeds::derive(seed, "classifier/shuffle");
    let mut report = TrainReport::new(seed, config_hash(&(cfg, mode)));
    let track_m = matches!(head.correction, Correction::Trainable(_));

    let mut model = ClassifierModel { store, head };
    for epoch in 0..cfg.epochs {
        let loss = model.head.train_epoch(&mut model.store, &mut opt, ds, &labeled, shuffle_seed, epoch)?;
        let m = if track_m { Some(model.transition()?) } else { None };
        report.records.push(epoch_record(epoch, loss, &model, m, eval)?);
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Oracle baseline: the same training on the labeled examples' true labels.
pub fn train_ordinary(
    ds: &ComplementaryDataset,
    cfg: &DclConfig,
    seed: u64,
    eval: &Evaluation<'_>,
) -> Result<(ClassifierModel, TrainReport)> {
    let k = ds.k();
    train_dcl(&ds.with_ordinary_labels(), &CorrectionMode::Known(TransitionMatrix::uniform(k)?), cfg, seed, eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<Vec<f64>>);

    impl Classifier for Fixed {
        fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
            Ok(Tensor::from_rows(&self.0[..x.rows()]).unwrap())
        }
    }

    #[test]
    fn complementary_loss_examples() {
        let m = TransitionMatrix::uniform(3).unwrap();
        let g = [1.0, 0.0, 0.0];
        assert!((complementary_ce_loss(&g, 2, &m).unwrap() - 0.5f64.ln().abs()).abs() < 1e-15);
        assert!((complementary_ce_loss(&g, 1, &m).unwrap() - 2f64.ln()).abs() < 1e-15);
        // Mᵀg = (0, .5, .5): the true class gets clamped mass
        assert!((complementary_ce_loss(&g, 0, &m).unwrap() - 27.631_021_115_928_547).abs() < 1e-9);
        for ybar in 0..3 {
            let v = complementary_ce_loss(&[1.0 / 3.0; 3], ybar, &m).unwrap();
            assert!((v - 3f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_limits() {
        assert!(cross_entropy(&[1.0, 0.0], 0).abs() < 1e-15);
        assert!((cross_entropy(&[1.0 - 1e-12, 1e-12], 0) - 1e-12).abs() < 1e-15);
        assert!((cross_entropy(&[0.25; 4], 3) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_break_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.2]), 1);
    }

    #[test]
    fn accuracy_with_uniform_model_is_class_zero_share() {
        let model = Fixed(vec![vec![0.5, 0.5]; 10]);
        let x = Tensor::zeros(10, 1);
        let y: Vec<usize> = (0..10).map(|i| i % 2).collect();
        assert_eq!(evaluate_accuracy(&model, &x, &y).unwrap(), 0.5);
        let perfect = Fixed(y.iter().map(|&c| if c == 0 { vec![0.9, 0.1] } else { vec![0.2, 0.8] }).collect());
        assert_eq!(evaluate_accuracy(&perfect, &x, &y).unwrap(), 1.0);
        assert!(evaluate_accuracy(&model, &Tensor::zeros(0, 1), &[]).is_err());
    }

    #[test]
    fn ordinary_risk_hand_batch() {
        let model = Fixed(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.1, 0.8], vec![0.3, 0.4, 0.3]]);
        let risk = ordinary_ce_risk(&model, &Tensor::zeros(3, 1), &[0, 2, 0]).unwrap();
        let expected = (-(0.7f64.ln()) - 0.8f64.ln() - 0.3f64.ln()) / 3.0;
        assert!((risk - expected).abs() < 1e-15);
        let uniform = Fixed(vec![vec![0.25; 4]; 2]);
        assert!((ordinary_ce_risk(&uniform, &Tensor::zeros(2, 1), &[1, 3]).unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn risks_require_complementary_labels() {
        let ds = ComplementaryDataset::from_parts(
            Tensor::zeros(2, 1),
            vec![Some(LabelEvidence::Ordinary(0)), Some(LabelEvidence::Ordinary(1))],
            vec![0, 1],
            2,
            1.0,
            0.0,
            0,
        )
        .unwrap();
        let model = Fixed(vec![vec![0.5, 0.5]; 2]);
        let m = TransitionMatrix::uniform(2).unwrap();
        assert!(complementary_risk(&model, &ds, &m).is_err());
        assert!(multi_complementary_risk(&model, &ds, &m).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let mut r = TrainReport::new(1, "abc".into());
        r.records.push(EpochRecord { epoch: 0, train_loss: 0.5, test_acc: Some(0.75), m_error: None });
        r.records.push(EpochRecord { epoch: 1, train_loss: 0.25, test_acc: None, m_error: None });
        assert_eq!(r.to_csv().unwrap(), "epoch,train_loss,test_acc\n0,0.5,0.75\n1,0.25,\n");
    }
}
