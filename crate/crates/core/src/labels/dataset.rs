use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::evidence::draw_complementary;
use super::{LabelError, LabelEvidence, TransitionMatrix};
use crate::diffcore::Tensor;
use crate::seeds;

/// Slack added before flooring label counts so that products such as
/// `0.29 · 100` count as 29.
const COUNT_EPS: f64 = 1e-9;

fn floor_count(n: usize, ratio: f64) -> usize {
    ((n as f64 * ratio) + COUNT_EPS).floor() as usize
}

/// How labeled examples are annotated.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Fraction of the pool that carries any label.
    pub r_l: f64,
    /// Fraction of labeled examples whose evidence is complementary.
    pub r_c: f64,
    /// Complementary labels drawn per complementary example.
    pub labels_per_example: usize,
}

/// Features with per-example label evidence. Examples without evidence form
/// the unlabeled pool. True labels are kept for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementaryDataset {
    features: Tensor,
    evidence: Vec<Option<LabelEvidence>>,
    truth: Vec<usize>,
    k: usize,
    r_l: f64,
    r_c: f64,
    seed: u64,
}

impl ComplementaryDataset {
    pub fn from_parts(
        features: Tensor,
        evidence: Vec<Option<LabelEvidence>>,
        truth: Vec<usize>,
        k: usize,
        r_l: f64,
        r_c: f64,
        seed: u64,
    ) -> Result<Self, LabelError> {
        let n = features.rows();
        if evidence.len() != n || truth.len() != n {
            return Err(LabelError::DimensionMismatch { expected: n, found: evidence.len().min(truth.len()) });
        }
        if k < 2 {
            return Err(LabelError::InvalidClassCount(k));
        }
        for (i, (e, &y)) in evidence.iter().zip(&truth).enumerate() {
            if y >= k {
                return Err(LabelError::InvalidEvidence(format!("true label {y} of example {i} out of range")));
            }
            if let Some(e) = e {
                e.validate(k)?;
            }
        }
        Ok(ComplementaryDataset { features, evidence, truth, k, r_l, r_c, seed })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r_l(&self) -> f64 {
        self.r_l
    }

    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn evidence(&self) -> &[Option<LabelEvidence>] {
        &self.evidence
    }

    /// Indices of examples with any evidence, ascending.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.evidence[i].is_some()).collect()
    }

    /// Indices of examples without evidence, ascending.
    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.evidence[i].is_none()).collect()
    }

    pub fn complementary_count(&self) -> usize {
        self.evidence.iter().flatten().filter(|e| e.is_complementary()).count()
    }

    pub fn ordinary_count(&self) -> usize {
        self.evidence.iter().flatten().filter(|e| !e.is_complementary()).count()
    }

    /// Hidden ordinary labels. Only evaluation and oracle baselines may read
    /// these; training routines never do.
    pub fn ground_truth_for_evaluation(&self) -> &[usize] {
        &self.truth
    }

    /// Oracle baseline: every labeled example gets its ordinary label.
    pub fn with_ordinary_labels(&self) -> ComplementaryDataset {
        let evidence = self
            .evidence
            .iter()
            .zip(&self.truth)
            .map(|(e, &y)| e.as_ref().map(|_| LabelEvidence::Ordinary(y)))
            .collect();
        ComplementaryDataset { evidence, r_c: 0.0, ..self.clone() }
    }

    /// Same features and labels with the unlabeled pool dropped.
    pub fn labeled_only(&self) -> ComplementaryDataset {
        let idx = self.labeled_indices();
        ComplementaryDataset {
            features: self.features.select_rows(&idx),
            evidence: idx.iter().map(|&i| self.evidence[i].clone()).collect(),
            truth: idx.iter().map(|&i| self.truth[i]).collect(),
            ..self.clone()
        }
    }
}

/// Partitions a labeled pool.
///
/// A seeded permutation orders the pool; the first `floor(n·r_l)` examples
/// are labeled and the first `floor(labeled·r_c)` of those receive
/// complementary evidence drawn from `M` (the rest keep their ordinary
/// label). Complementary draws depend only on the seed and the example's
/// index, so with a fixed seed a smaller `r_l` labels a prefix of the
/// examples a larger one labels.
pub fn split_dataset(
    features: &Tensor,
    labels: &[usize],
    m: &TransitionMatrix,
    spec: &SplitSpec,
    seed: u64,
) -> Result<ComplementaryDataset, LabelError> {
    let n = features.rows();
    if labels.len() != n {
        return Err(LabelError::DimensionMismatch { expected: n, found: labels.len() });
    }
    if !(spec.r_l > 0.0 && spec.r_l <= 1.0) {
        return Err(LabelError::InvalidParameter(format!("r_l = {} must lie in (0, 1]", spec.r_l)));
    }
    if !(0.0..=1.0).contains(&spec.r_c) {
        return Err(LabelError::InvalidParameter(format!("r_c = {} must lie in [0, 1]", spec.r_c)));
    }
    let labeled = floor_count(n, spec.r_l);
    if labeled == 0 {
        return Err(LabelError::EmptyLabeledSet);
    }
    let complementary = floor_count(labeled, spec.r_c);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::rng(seeds::derive(seed, "split/permutation")));
    let label_seed = seeds::derive(seed, "split/complementary");

    let mut evidence = vec![None; n];
    for (rank, &i) in order[..labeled].iter().enumerate() {
        evidence[i] = Some(if rank < complementary {
            let mut rng = seeds::rng(seeds::derive_index(label_seed, i as u64));
            LabelEvidence::Complementary(draw_complementary(labels[i], m, spec.labels_per_example, &mut rng)?)
        } else {
            LabelEvidence::Ordinary(labels[i])
        });
    }
    ComplementaryDataset::from_parts(features.clone(), evidence, labels.to_vec(), m.k(), spec.r_l, spec.r_c, seed)
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    n: usize,
    d: usize,
    #[serde(rename = "K")]
    k: usize,
    r_l: f64,
    r_c: f64,
    seed: u64,
    evidence: Vec<Option<LabelEvidence>>,
    truth: Vec<usize>,
}

/// Writes `<stem>.json` (header and evidence) and `<stem>.f64` (row-major
/// little-endian features).
pub fn write_dataset(ds: &ComplementaryDataset, stem: &Path) -> Result<(), LabelError> {
    let header = DatasetHeader {
        n: ds.len(),
        d: ds.dim(),
        k: ds.k,
        r_l: ds.r_l,
        r_c: ds.r_c,
        seed: ds.seed,
        evidence: ds.evidence.clone(),
        truth: ds.truth.clone(),
    };
    fs::write(stem.with_extension("json"), serde_json::to_vec_pretty(&header)?)?;
    let blob: Vec<u8> = ds.features.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(stem.with_extension("f64"), blob)?;
    Ok(())
}

pub fn read_dataset(stem: &Path) -> Result<ComplementaryDataset, LabelError> {
    let header: DatasetHeader = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
    let blob = fs::read(stem.with_extension("f64"))?;
    if blob.len() != header.n * header.d * 8 {
        return Err(LabelError::DimensionMismatch { expected: header.n * header.d * 8, found: blob.len() });
    }
    let data = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let features = Tensor::from_vec(header.n, header.d, data).expect("length checked");
    ComplementaryDataset::from_parts(features, header.evidence, header.truth, header.k, header.r_l, header.r_c, header.seed)
}
