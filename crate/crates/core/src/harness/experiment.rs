use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{DataSource, ExperimentConfig, Method, TransitionMode};
use super::svg::{points, scatter_svg, write_samples_csv, SampleKind};
use super::synth::{gen_ring_mixture, GaussianMixtureSpec};
use super::{load_idx, HarnessError};
use crate::ccgan::{train_ccgan, train_sccgan, CcganBundle};
use crate::dcl::{evaluate_accuracy, train_dcl, train_ordinary, ClassifierModel, CorrectionMode, Evaluation, TrainReport};
use crate::diffcore::Tensor;
use crate::labels::{split_dataset, ComplementaryDataset, SplitSpec, TransitionMatrix};
use crate::seeds;
use crate::{Error, Result};

/// Everything a seed fixes before any `r_l` split: pool, test set and `M`.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub mixture: Option<GaussianMixtureSpec>,
    pub pool_x: Tensor,
    pub pool_y: Vec<usize>,
    pub test_x: Tensor,
    pub test_y: Vec<usize>,
    pub transition: TransitionMatrix,
    pub k: usize,
}

/// Streams per seed: `pool`, `test`, `transition`, `split`, `train`, `samples`.
pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let ds = &cfg.dataset;
    let (mixture, pool_x, pool_y, test_x, test_y) = match &ds.source {
        DataSource::Ring { k, radius, sigma } => {
            let spec = GaussianMixtureSpec::ring(*k, *radius, *sigma)?;
            let (px, py) = gen_ring_mixture(&spec, ds.pool_size, seeds::derive(seed, "pool"))?;
            let (tx, ty) = gen_ring_mixture(&spec, ds.test_size, seeds::derive(seed, "test"))?;
            (Some(spec), px, py, tx, ty)
        }
        DataSource::Idx { images, labels } => {
            let (x, y) = load_idx(images, labels).map_err(HarnessError::from)?;
            let need = ds.pool_size + ds.test_size;
            if x.rows() < need {
                return Err(HarnessError::Config(format!("IDX data has {} rows, need {need}", x.rows())).into());
            }
            let mut order: Vec<usize> = (0..x.rows()).collect();
            order.shuffle(&mut seeds::rng(seeds::derive(seed, "pool")));
            let (pool, test) = order[..need].split_at(ds.pool_size);
            let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
            (None, x.select_rows(pool), pick(pool), x.select_rows(test), pick(test))
        }
    };
    let k = match cfg.declared_k() {
        Some(k) => k,
        None => pool_y.iter().chain(&test_y).max().map_or(0, |m| m + 1),
    };
    let m_seed = seeds::derive(seed, "transition");
    let transition = match cfg.transition {
        TransitionMode::Uniform => TransitionMatrix::uniform(k)?,
        TransitionMode::Restricted { m } => TransitionMatrix::restricted_uniform(k, m, m_seed)?,
        TransitionMode::Random | TransitionMode::Trainable => TransitionMatrix::random(k, m_seed)?,
    };
    Ok(SeedData { mixture, pool_x, pool_y, test_x, test_y, transition, k })
}

/// Nested in `r_l`: the split stream does not depend on the ratio.
pub fn build_dataset(cfg: &ExperimentConfig, data: &SeedData, r_l: f64, seed: u64) -> Result<ComplementaryDataset> {
    let spec = SplitSpec { r_l, r_c: cfg.r_c, labels_per_example: cfg.labels_per_example };
    Ok(split_dataset(&data.pool_x, &data.pool_y, &data.transition, &spec, seeds::derive(seed, "split"))?)
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Classifier(ClassifierModel),
    Gan(Box<CcganBundle>),
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub method: Method,
    pub r_l: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub m_error: Option<f64>,
    pub report: TrainReport,
    pub model: TrainedModel,
}

/// Trains one method on one split. All methods of a seed share the `train`
/// stream, so their classifiers start from the same weights.
pub fn run_cell(cfg: &ExperimentConfig, data: &SeedData, method: Method, r_l: f64, seed: u64) -> Result<CellOutcome> {
    let ds = build_dataset(cfg, data, r_l, seed)?;
    let train_seed = seeds::derive(seed, "train");
    let estimate = cfg.transition == TransitionMode::Trainable;
    let mode = if estimate { CorrectionMode::Estimate } else { CorrectionMode::Known(data.transition.clone()) };
    let eval = Evaluation {
        test: Some((&data.test_x, &data.test_y)),
        true_transition: if estimate { Some(&data.transition) } else { None },
    };
    let (report, model) = match method {
        Method::Ordinary => {
            let (m, r) = train_ordinary(&ds, &cfg.classifier, train_seed, &Evaluation { true_transition: None, ..eval })?;
            (r, TrainedModel::Classifier(m))
        }
        Method::Dcl => {
            let (m, r) = train_dcl(&ds, &mode, &cfg.classifier, train_seed, &eval)?;
            (r, TrainedModel::Classifier(m))
        }
        Method::Ccgan | Method::Sccgan => {
            let bundle = CcganBundle::new(ds.dim(), ds.k(), &cfg.architecture, &mode, train_seed)?;
            let (b, r) = if method == Method::Ccgan {
                train_ccgan(&ds, bundle, &cfg.schedule, train_seed, &eval)?
            } else {
                train_sccgan(&ds, bundle, &cfg.schedule, train_seed, &eval)?
            };
            (r, TrainedModel::Gan(Box::new(b)))
        }
    };
    let accuracy = match &model {
        TrainedModel::Classifier(m) => evaluate_accuracy(m, &data.test_x, &data.test_y)?,
        TrainedModel::Gan(b) => evaluate_accuracy(b.as_ref(), &data.test_x, &data.test_y)?,
    };
    let m_error = report.records.last().and_then(|r| r.m_error);
    Ok(CellOutcome { method, r_l, seed, accuracy, m_error, report, model })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub r_l: f64,
    pub seed: u64,
    pub method: Method,
    pub accuracy: Option<f64>,
    pub m_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub r_l: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    /// Sample standard deviation (`n − 1`); zero for a single run.
    pub std: f64,
}

/// Mean ± std of accuracy per `(method, r_l)`, methods then ratios in first
/// appearance order. Failed runs are counted but excluded.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(m, v)| m == r.method && v == r.r_l) {
            keys.push((r.method, r.r_l));
        }
    }
    let mut methods: Vec<Method> = Vec::new();
    for &(m, _) in &keys {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    keys.sort_by_key(|&(m, _)| methods.iter().position(|&x| x == m));
    keys.into_iter()
        .map(|(method, r_l)| {
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method && r.r_l == r_l).collect();
            let acc: Vec<f64> = cell.iter().filter_map(|r| r.accuracy).collect();
            let n = acc.len();
            let mean = if n == 0 { f64::NAN } else { acc.iter().sum::<f64>() / n as f64 };
            let std = if n < 2 {
                0.0
            } else {
                (acc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            SummaryRow { method, r_l, runs: cell.len(), failed: cell.len() - n, mean, std }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    w.write_record(header).map_err(HarnessError::csv(path))?;
    for r in rows {
        w.write_record(&r).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

const RESULTS_HEADER: [&str; 6] = ["r_l", "seed", "method", "accuracy", "m_error", "error"];

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(HarnessError::csv(path))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(HarnessError::csv(path))?;
        let bad = || HarnessError::Parse(format!("{}: malformed row {:?}", path.display(), rec));
        let num = |i: usize| -> Result<Option<f64>, HarnessError> {
            match rec.get(i) {
                Some("") => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|_| bad()),
                None => Err(bad()),
            }
        };
        out.push(ResultRow {
            r_l: num(0)?.ok_or_else(bad)?,
            seed: rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
            method: rec.get(2).ok_or_else(bad)?.parse()?,
            accuracy: num(3)?,
            m_error: num(4)?,
            error: rec.get(5).filter(|v| !v.is_empty()).map(str::to_string),
        });
    }
    Ok(out)
}

fn cell_stem(method: Method, r_l: f64, seed: u64) -> String {
    format!("{method}_rl{r_l}_seed{seed}")
}

/// Dumps real test points and generated points for a trained generator.
fn write_samples(cfg: &ExperimentConfig, data: &SeedData, bundle: &CcganBundle, out: &Path, stem: &str, seed: u64) -> Result<()> {
    let (gx, gy) = bundle.sample(cfg.samples_per_class, seeds::derive(seed, "samples"))?;
    let real_n = (cfg.samples_per_class * data.k).min(data.test_x.rows());
    let idx: Vec<usize> = (0..real_n).collect();
    let mut samples = points(SampleKind::Real, &data.test_x.select_rows(&idx), &data.test_y[..real_n]);
    samples.extend(points(SampleKind::Generated, &gx, &gy));
    write_samples_csv(&out.join("samples").join(format!("{stem}.csv")), &samples)?;
    if bundle.dim() == 2 {
        let svg = scatter_svg(&samples, data.k)?;
        let path = out.join("plots").join(format!("{stem}.svg"));
        fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(())
}

/// Runs the `(r_l, seed, method)` grid in parallel and writes:
///
/// - `config.resolved.json`: the configuration with defaults filled in;
/// - `results.csv`: one row per cell, errors recorded in the last column;
/// - `summary.csv`: mean and std of accuracy per `(method, r_l)`;
/// - `runs/<cell>.csv`: per-epoch metrics;
/// - `samples/<cell>.csv` and `plots/<cell>.svg` for generative methods;
/// - `run.log`: timings, the only file with wall-clock content.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    for dir in ["", "runs", "samples", "plots"] {
        let p = out.join(dir);
        fs::create_dir_all(&p).map_err(|e| HarnessError::io(&p, e))?;
    }
    let resolved = ExperimentConfig { output: Some(out.to_path_buf()), ..cfg.clone() };
    resolved.save(&out.join("config.resolved.json"))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let started = Instant::now();

    let (rows, log_lines) = pool.install(|| -> Result<(Vec<ResultRow>, Vec<String>)> {
        let data: Vec<Result<SeedData>> = cfg.seeds.par_iter().map(|&s| prepare_seed(cfg, s)).collect();
        let mut cells = Vec::new();
        for &r_l in &cfg.r_l {
            for (si, &seed) in cfg.seeds.iter().enumerate() {
                for &method in &cfg.methods {
                    cells.push((r_l, si, seed, method));
                }
            }
        }
        let done: Vec<(ResultRow, String)> = cells
            .par_iter()
            .map(|&(r_l, si, seed, method)| {
                let t0 = Instant::now();
                let stem = cell_stem(method, r_l, seed);
                let outcome = match &data[si] {
                    Ok(d) => run_cell(cfg, d, method, r_l, seed).and_then(|o| {
                        let path = out.join("runs").join(format!("{stem}.csv"));
                        fs::write(&path, o.report.to_csv()?).map_err(|e| HarnessError::io(&path, e))?;
                        if let TrainedModel::Gan(b) = &o.model {
                            write_samples(cfg, d, b, out, &stem, seed)?;
                        }
                        Ok(o)
                    }),
                    Err(e) => Err(Error::Invalid(format!("data preparation failed: {e}"))),
                };
                let secs = t0.elapsed().as_secs_f64();
                match outcome {
                    Ok(o) => (
                        ResultRow { r_l, seed, method, accuracy: Some(o.accuracy), m_error: o.m_error, error: None },
                        format!("{stem}: accuracy {:.4} in {secs:.1}s", o.accuracy),
                    ),
                    Err(e) => {
                        log::error!("{stem}: {e}");
                        (
                            ResultRow { r_l, seed, method, accuracy: None, m_error: None, error: Some(e.to_string()) },
                            format!("{stem}: FAILED after {secs:.1}s: {e}"),
                        )
                    }
                }
            })
            .collect();
        Ok(done.into_iter().unzip())
    })?;

    let results: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.r_l.to_string(),
                r.seed.to_string(),
                r.method.to_string(),
                opt(r.accuracy),
                opt(r.m_error),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(&out.join("results.csv"), &RESULTS_HEADER, results)?;

    let summary = summarize(&rows);
    let srows = summary
        .iter()
        .map(|s| {
            vec![
                s.method.to_string(),
                s.r_l.to_string(),
                s.runs.to_string(),
                s.failed.to_string(),
                s.mean.to_string(),
                s.std.to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("summary.csv"), &["method", "r_l", "runs", "failed", "mean_accuracy", "std_accuracy"], srows)?;

    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut log = format!("finished at unix time {stamp} after {:.1}s\n", started.elapsed().as_secs_f64());
    for line in log_lines {
        writeln!(log, "{line}").unwrap();
    }
    let log_path = out.join("run.log");
    fs::write(&log_path, log).map_err(|e| HarnessError::io(&log_path, e))?;
    Ok(ExperimentOutput { rows, summary })
}
