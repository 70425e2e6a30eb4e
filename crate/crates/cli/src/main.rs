//! `complearn` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use complearn::ccgan::CcganBundle;
use complearn::dcl::TrainReport;
use complearn::diffcore::write_checkpoint;
use complearn::divergence::{random_instance, verify_theorem1_chain};
use complearn::harness::{
    build_dataset, emit_scatter_svg, prepare_seed, run_cell, run_experiment, scatter_svg, svg, ExperimentConfig,
    Method, SampleKind, SeedData, TrainedModel,
};
use complearn::labels::write_dataset;
use complearn::priors::{empirical_complementary_prior, estimate_prior_qp, SimplexVector};
use complearn::{seeds, ComplementaryDataset, LabelEvidence, ParamStore};
use serde_json::json;

#[derive(Parser)]
#[command(name = "complearn", version, about = "Learning from complementary labels")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (a file path for `plot`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configuration's seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parallel grid cells; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// ordinary | dcl | ccgan | sccgan
    #[arg(long, global = true)]
    method: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the pool and test sets and write them with their labels.
    GenData,
    /// Train the discriminative learner (or `--method ordinary`).
    TrainDcl,
    /// Train the complementary conditional GAN.
    TrainCcgan,
    /// Train the GAN with unlabeled pool data in the adversarial term.
    TrainSccgan,
    /// Estimate the class prior from complementary label frequencies.
    EstimatePrior,
    /// Check the divergence bound chain on random finite instances.
    VerifyBound {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        /// Size of the feature alphabet.
        #[arg(long, default_value_t = 6)]
        x_size: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// Run the full (r_l, seed, method) grid.
    RunGrid,
    /// Render a samples CSV as an SVG scatter plot.
    Plot {
        /// Samples CSV (`kind,label,x0,x1`).
        #[arg(long)]
        input: PathBuf,
        /// Number of legend classes; defaults to the largest label + 1.
        #[arg(long)]
        classes: Option<usize>,
    },
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(m) = &self.method {
            cfg.methods = vec![m.parse()?];
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> Result<PathBuf> {
        let dir = cfg.output.clone().or_else(|| self.out.clone()).context("--out (or \"output\" in the config) is required")?;
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn first_seed_data(cfg: &ExperimentConfig) -> Result<(u64, SeedData, f64)> {
    let seed = cfg.seeds[0];
    let r_l = cfg.r_l[0];
    Ok((seed, prepare_seed(cfg, seed)?, r_l))
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let out = common.out_dir(&cfg)?;
    let (seed, data, r_l) = first_seed_data(&cfg)?;
    let ds = build_dataset(&cfg, &data, r_l, seed)?;
    write_dataset(&ds, &out.join("train"))?;
    let test_evidence = data.test_y.iter().map(|&y| Some(LabelEvidence::Ordinary(y))).collect();
    let test = ComplementaryDataset::from_parts(data.test_x.clone(), test_evidence, data.test_y.clone(), data.k, 1.0, 0.0, seed)?;
    write_dataset(&test, &out.join("test"))?;
    write_json(&out.join("transition.json"), &serde_json::to_value(&data.transition)?)?;
    cfg.save(&out.join("config.resolved.json"))?;
    if data.pool_x.cols() == 2 {
        let real = svg::points(SampleKind::Real, &data.pool_x, &data.pool_y);
        svg::write_samples_csv(&out.join("samples.csv"), &real)?;
    }
    println!(
        "wrote {} training examples ({} complementary, {} ordinary, {} unlabeled) and {} test examples to {}",
        ds.len(),
        ds.complementary_count(),
        ds.ordinary_count(),
        ds.unlabeled_indices().len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_checkpoint(store, std::io::BufWriter::new(file))?;
    Ok(())
}

fn save_report(report: &TrainReport, out: &Path) -> Result<()> {
    fs::write(out.join("metrics.csv"), report.to_csv()?).context("writing metrics.csv")
}

fn train(common: &Common, default: Method, allowed: &[Method]) -> Result<()> {
    let mut cfg = common.load()?;
    if common.method.is_none() {
        cfg.methods = vec![default];
    }
    let method = cfg.methods[0];
    if !allowed.contains(&method) {
        bail!("method {method} is not valid for this subcommand (expected one of {allowed:?})");
    }
    let out = common.out_dir(&cfg)?;
    cfg.save(&out.join("config.resolved.json"))?;
    let (seed, data, r_l) = first_seed_data(&cfg)?;
    let outcome = run_cell(&cfg, &data, method, r_l, seed)?;
    save_report(&outcome.report, &out)?;
    let transition = match &outcome.model {
        TrainedModel::Classifier(m) => {
            save_checkpoint(m.store(), &out.join("model.ckpt"))?;
            m.transition()?
        }
        TrainedModel::Gan(b) => {
            save_checkpoint(b.store(), &out.join("model.ckpt"))?;
            write_gan_samples(&cfg, &data, b, &out, seed)?;
            b.transition()?
        }
    };
    write_json(&out.join("transition.json"), &serde_json::to_value(&transition)?)?;
    let summary = json!({
        "method": method.name(),
        "seed": seed,
        "r_l": r_l,
        "accuracy": outcome.accuracy,
        "m_error": outcome.m_error,
        "epochs": outcome.report.records.len(),
        "config_hash": outcome.report.config_hash,
    });
    write_json(&out.join("result.json"), &summary)?;
    println!("{method}: test accuracy {:.4}", outcome.accuracy);
    if let Some(e) = outcome.m_error {
        println!("transition recovery error {e:.4}");
    }
    Ok(())
}

fn write_gan_samples(cfg: &ExperimentConfig, data: &SeedData, b: &CcganBundle, out: &Path, seed: u64) -> Result<()> {
    let (gx, gy) = b.sample(cfg.samples_per_class, seeds::derive(seed, "samples"))?;
    let mut samples = svg::points(SampleKind::Real, &data.test_x, &data.test_y);
    samples.extend(svg::points(SampleKind::Generated, &gx, &gy));
    svg::write_samples_csv(&out.join("samples.csv"), &samples)?;
    if b.dim() == 2 {
        fs::write(out.join("samples.svg"), scatter_svg(&samples, data.k)?)?;
    }
    Ok(())
}

fn estimate_prior(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let (seed, data, r_l) = first_seed_data(&cfg)?;
    let ds = build_dataset(&cfg, &data, r_l, seed)?;
    let target = empirical_complementary_prior(&ds)?;
    let sol = estimate_prior_qp(&target, &data.transition)?;
    let mut counts = vec![0.0; data.k];
    for &i in &ds.labeled_indices() {
        counts[ds.ground_truth_for_evaluation()[i]] += 1.0;
    }
    let truth = SimplexVector::from_counts(&counts)?;
    let report = json!({
        "complementary_frequencies": target.as_slice(),
        "estimate": sol.estimate.as_slice(),
        "labeled_class_frequencies": truth.as_slice(),
        "linf_error": sol.estimate.linf_distance(truth.as_slice()),
        "residual": sol.residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "rank_deficient": sol.rank_deficient,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &common.out {
        fs::create_dir_all(out)?;
        write_json(&out.join("prior.json"), &report)?;
    }
    Ok(())
}

fn verify_bound(common: &Common, instances: usize, x_size: usize, k: usize) -> Result<()> {
    if instances == 0 || x_size == 0 || k < 2 {
        bail!("need at least one instance, a nonempty alphabet and K >= 2");
    }
    let seed = common.seed.unwrap_or(0);
    let mut rng = seeds::rng(seeds::derive(seed, "verify/instances"));
    let (mut failures, mut min_slack) = (Vec::new(), f64::INFINITY);
    let mut reports = Vec::with_capacity(instances);
    for i in 0..instances {
        let (p, q, qp, m) = random_instance(x_size, k, seeds::derive_index(seeds::derive(seed, "verify/m"), i as u64), &mut rng)?;
        let report = verify_theorem1_chain(&p, &q, &qp, &m)?;
        min_slack = min_slack.min(report.min_slack());
        if !report.all_hold {
            failures.push(i);
        }
        reports.push(report);
    }
    println!("{instances} instances (|X|={x_size}, K={k}): minimum slack {min_slack:.3e}, {} failing", failures.len());
    if let Some(out) = &common.out {
        fs::create_dir_all(out)?;
        write_json(
            &out.join("bound_checks.json"),
            &json!({ "seed": seed, "min_slack": min_slack, "failing_instances": failures, "reports": reports }),
        )?;
    }
    if !failures.is_empty() {
        bail!("bound chain violated on instances {failures:?}");
    }
    Ok(())
}

fn run_grid(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let out = common.out_dir(&cfg)?;
    let result = run_experiment(&cfg, &out)?;
    for s in &result.summary {
        println!(
            "{:>9} r_l={:<5} mean {:.4} ± {:.4} ({} runs, {} failed)",
            s.method.name(),
            s.r_l,
            s.mean,
            s.std,
            s.runs,
            s.failed
        );
    }
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        bail!("{failed} grid cells failed; see {}", out.join("results.csv").display());
    }
    Ok(())
}

fn plot(common: &Common, input: &Path, classes: Option<usize>) -> Result<()> {
    let out = common.out.clone().unwrap_or_else(|| input.with_extension("svg"));
    emit_scatter_svg(input, classes, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::GenData => gen_data(c),
        Command::TrainDcl => train(c, Method::Dcl, &[Method::Dcl, Method::Ordinary]),
        Command::TrainCcgan => train(c, Method::Ccgan, &[Method::Ccgan]),
        Command::TrainSccgan => train(c, Method::Sccgan, &[Method::Sccgan]),
        Command::EstimatePrior => estimate_prior(c),
        Command::VerifyBound { instances, x_size, k } => verify_bound(c, instances, x_size, k),
        Command::RunGrid => run_grid(c),
        Command::Plot { input, classes } => plot(c, &input, classes),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
