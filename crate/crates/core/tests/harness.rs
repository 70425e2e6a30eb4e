use std::fs;
use std::path::Path;

use complearn::harness::{
    bayes_accuracy_oracle, build_dataset, gen_ring_mixture, load_idx, prepare_seed, read_results_csv,
    read_samples_csv, run_experiment, scatter_svg, summarize, DataSource, ExperimentConfig, GaussianMixtureSpec,
    IdxError, Method,
};

fn idx_images(n: usize, side: usize) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [0x803u32, n as u32, side as u32, side as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend((0..n * side * side).map(|i| (i * 37 % 256) as u8));
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [0x801u32, labels.len() as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(labels);
    b
}

#[test]
fn idx_count_mismatch_and_truncation_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    fs::write(&img, idx_images(5, 2)).unwrap();
    fs::write(&lab, idx_labels(&[0, 1, 2, 1])).unwrap();
    assert!(matches!(load_idx(&img, &lab), Err(IdxError::CountMismatch { images: 5, labels: 4 })));

    let mut short = idx_images(5, 2);
    short.truncate(16 + 7);
    fs::write(&img, short).unwrap();
    assert!(matches!(load_idx(&img, &lab), Err(IdxError::Truncated { needed: 13, .. })));
    assert!(matches!(load_idx(&dir.path().join("missing"), &lab), Err(IdxError::Io { .. })));
}

#[test]
fn idx_source_splits_pool_and_test_without_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let n = 30;
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    // every image is distinct: its first pixel encodes the index
    let mut images = idx_images(n, 2);
    for i in 0..n {
        images[16 + i * 4] = i as u8;
    }
    fs::write(&img, images).unwrap();
    fs::write(&lab, idx_labels(&(0..n).map(|i| (i % 3) as u8).collect::<Vec<_>>())).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.source = DataSource::Idx { images: img, labels: lab };
    cfg.dataset.pool_size = 20;
    cfg.dataset.test_size = 10;
    let data = prepare_seed(&cfg, 4).unwrap();
    assert_eq!(data.k, 3);
    let key = |x: &complearn::Tensor, i: usize| (x.get(i, 0) * 255.0).round() as usize;
    let mut seen: Vec<usize> = (0..20).map(|i| key(&data.pool_x, i)).chain((0..10).map(|i| key(&data.test_x, i))).collect();
    seen.sort();
    assert_eq!(seen, (0..n).collect::<Vec<_>>());
    cfg.dataset.pool_size = 25;
    assert!(prepare_seed(&cfg, 4).is_err());
}

/// Exact accuracy of the nearest-mean rule for a uniform K=4 ring: class 0
/// sits at (R, 0) and wins on the wedge |v| < u. Midpoint rule on a fine grid.
fn ring4_bayes_quadrature(radius: f64, sigma: f64) -> f64 {
    let steps = 1500;
    let half = 7.0 * sigma;
    let h = 2.0 * half / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        let u = radius - half + (i as f64 + 0.5) * h;
        for j in 0..steps {
            let v = -half + (j as f64 + 0.5) * h;
            if v.abs() < u {
                let r2 = (u - radius).powi(2) + v * v;
                total += (-r2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    total * h * h / (2.0 * std::f64::consts::PI * sigma * sigma)
}

#[test]
fn bayes_oracle_agrees_with_quadrature() {
    let (radius, sigma) = (0.6, 0.3);
    let spec = GaussianMixtureSpec::ring(4, radius, sigma).unwrap();
    let (x, y) = gen_ring_mixture(&spec, 200_000, 17).unwrap();
    let mc = bayes_accuracy_oracle(&spec, &x, &y).unwrap();
    let exact = ring4_bayes_quadrature(radius, sigma);
    assert!((0.8..0.95).contains(&exact), "{exact}");
    assert!((mc - exact).abs() < 0.005, "monte carlo {mc} vs quadrature {exact}");
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(
        r#"{"dataset": {"source": {"kind": "ring", "k": 3, "radius": 2.0, "sigma": 0.4}, "pool_size": 150, "test_size": 90},
            "r_l": [0.5, 1.0], "methods": ["dcl", "ccgan"], "seeds": [1, 2], "samples_per_class": 5, "workers": 2,
            "architecture": {"noise_dim": 4, "generator_hidden": [8], "discriminator_hidden": [8], "classifier_hidden": [8]},
            "classifier": {"hidden": [8], "epochs": 3},
            "schedule": {"warm_up_epochs": 2, "joint_epochs": 2}}"#,
    )
    .unwrap();
    cfg.output = None;
    cfg
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "runs", "samples"] {
        let mut names: Vec<_> = fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        names.sort();
        for p in names {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn grid_is_deterministic_and_summaries_recompute() {
    let cfg = tiny_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = run_experiment(&cfg, a.path()).unwrap();
    // rerun from the resolved config with a different worker count
    let mut resolved = ExperimentConfig::load(&a.path().join("config.resolved.json")).unwrap();
    resolved.workers = 1;
    run_experiment(&resolved, b.path()).unwrap();
    let (ca, cb) = (csv_bytes(a.path()), csv_bytes(b.path()));
    assert_eq!(ca.len(), 2 + 8 + 4);
    assert_eq!(ca, cb);

    assert_eq!(out_a.rows.len(), 8);
    assert!(out_a.rows.iter().all(|r| r.error.is_none()));
    let rows = read_results_csv(&a.path().join("results.csv")).unwrap();
    assert_eq!(rows, out_a.rows);
    let summary = summarize(&rows);
    assert_eq!(summary.len(), 4);
    for s in &summary {
        let acc: Vec<f64> = rows.iter().filter(|r| r.method == s.method && r.r_l == s.r_l).filter_map(|r| r.accuracy).collect();
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        let var = acc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (acc.len() - 1) as f64;
        assert!((s.mean - mean).abs() < 1e-12 && (s.std - var.sqrt()).abs() < 1e-12);
    }
    // one plot per generative cell
    assert_eq!(fs::read_dir(a.path().join("plots")).unwrap().count(), 4);
}

#[test]
fn generated_plot_is_well_formed_svg() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&ExperimentConfig { methods: vec![Method::Ccgan], seeds: vec![3], r_l: vec![1.0], ..cfg }, dir.path())
        .unwrap();
    let csv = fs::read_dir(dir.path().join("samples")).unwrap().next().unwrap().unwrap().path();
    let samples = read_samples_csv(&csv).unwrap();
    let svg = scatter_svg(&samples, 3).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let legend = doc.descendants().filter(|n| n.attribute("class") == Some("legend-entry")).count();
    assert_eq!(legend, 3);
    let real = samples.iter().filter(|s| s.kind == complearn::harness::SampleKind::Real).count();
    let circles = doc.descendants().find(|n| n.attribute("id") == Some("real")).unwrap().children().filter(|n| n.is_element()).count();
    assert_eq!(circles, real);
    let plot = fs::read_dir(dir.path().join("plots")).unwrap().next().unwrap().unwrap().path();
    roxmltree::Document::parse(&fs::read_to_string(plot).unwrap()).unwrap();
}

#[test]
fn smaller_labeled_fraction_is_nested() {
    let cfg = tiny_config();
    let data = prepare_seed(&cfg, 9).unwrap();
    let small = build_dataset(&cfg, &data, 0.3, 9).unwrap();
    let large = build_dataset(&cfg, &data, 0.8, 9).unwrap();
    for i in small.labeled_indices() {
        assert_eq!(small.evidence()[i], large.evidence()[i]);
    }
}
