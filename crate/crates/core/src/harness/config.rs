use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ccgan::{ArchitectureConfig, ScheduleConfig};
use crate::dcl::DclConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// `K` isotropic Gaussians evenly spaced on a circle, uniform prior.
    Ring { k: usize, radius: f64, sigma: f64 },
    /// Image/label IDX pair; pool and test are drawn from it without overlap.
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// Examples in the pool that `r_l` splits.
    pub pool_size: usize,
    pub test_size: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DataSource::Ring { k: 8, radius: 2.0, sigma: 0.35 },
            pool_size: 6000,
            test_size: 2000,
        }
    }
}

/// How complementary labels are generated, and whether the learner knows `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionMode {
    Uniform,
    /// Each row spreads its mass uniformly over `m` off-diagonal classes.
    Restricted { m: usize },
    /// Random full-rank `M`, given to the learner.
    Random,
    /// Random full-rank `M` that the learner must estimate.
    Trainable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Cross-entropy on the labeled examples' true labels.
    Ordinary,
    Dcl,
    Ccgan,
    Sccgan,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ordinary => "ordinary",
            Method::Dcl => "dcl",
            Method::Ccgan => "ccgan",
            Method::Sccgan => "sccgan",
        }
    }

    pub fn is_generative(self) -> bool {
        matches!(self, Method::Ccgan | Method::Sccgan)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordinary" => Ok(Method::Ordinary),
            "dcl" => Ok(Method::Dcl),
            "ccgan" => Ok(Method::Ccgan),
            "sccgan" => Ok(Method::Sccgan),
            other => Err(HarnessError::Config(format!("unknown method {other:?} (ordinary, dcl, ccgan, sccgan)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Labeled fractions of the pool, one grid column each.
    pub r_l: Vec<f64>,
    pub r_c: f64,
    pub labels_per_example: usize,
    pub transition: TransitionMode,
    pub methods: Vec<Method>,
    /// Training for `ordinary` and `dcl`.
    pub classifier: DclConfig,
    pub architecture: ArchitectureConfig,
    /// Training for `ccgan` and `sccgan`.
    pub schedule: ScheduleConfig,
    pub seeds: Vec<u64>,
    /// Generated points per class in each samples CSV.
    pub samples_per_class: usize,
    /// Parallel grid cells; 0 uses every core.
    pub workers: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            r_l: vec![1.0],
            r_c: 1.0,
            labels_per_example: 1,
            transition: TransitionMode::Uniform,
            methods: vec![Method::Dcl],
            classifier: DclConfig::default(),
            architecture: ArchitectureConfig::default(),
            schedule: ScheduleConfig::default(),
            seeds: vec![0],
            samples_per_class: 100,
            workers: 0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// Class count of a ring source, or `None` when it comes from the data.
    pub fn declared_k(&self) -> Option<usize> {
        match self.dataset.source {
            DataSource::Ring { k, .. } => Some(k),
            DataSource::Idx { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.r_l.is_empty() || self.r_l.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return bad(format!("r_l values {:?} must lie in (0, 1]", self.r_l));
        }
        if !(0.0..=1.0).contains(&self.r_c) {
            return bad(format!("r_c = {} must lie in [0, 1]", self.r_c));
        }
        if self.dataset.pool_size == 0 || self.dataset.test_size == 0 {
            return bad("pool and test sizes must be positive".into());
        }
        if let Some(k) = self.declared_k() {
            if k < 2 {
                return bad(format!("K = {k} must be at least 2"));
            }
            if self.labels_per_example == 0 || self.labels_per_example > k - 1 {
                return bad(format!("labels per example {} outside 1..={}", self.labels_per_example, k - 1));
            }
            if let TransitionMode::Restricted { m } = self.transition {
                if m < self.labels_per_example || m > k - 1 {
                    return bad(format!("restricted support {m} must lie in {}..={}", self.labels_per_example, k - 1));
                }
            }
        }
        if self.schedule.d_steps == 0 {
            return bad("d_steps must be at least 1".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(HarnessError::json(path))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Pretty JSON with every default filled in.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| HarnessError::io(path, e))
    }
}
