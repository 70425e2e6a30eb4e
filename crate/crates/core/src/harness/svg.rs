//! Scatter plots of real and generated 2-D samples.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::diffcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Real,
    Generated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub kind: SampleKind,
    pub label: usize,
    pub coords: Vec<f64>,
}

pub fn points(kind: SampleKind, x: &Tensor, labels: &[usize]) -> Vec<SamplePoint> {
    (0..x.rows()).map(|i| SamplePoint { kind, label: labels[i], coords: x.row_slice(i).to_vec() }).collect()
}

/// `kind,label,x0,x1,...`
pub fn write_samples_csv(path: &Path, samples: &[SamplePoint]) -> Result<(), HarnessError> {
    let dim = samples.first().map_or(2, |s| s.coords.len());
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    let mut header = vec!["kind".to_string(), "label".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(HarnessError::csv(path))?;
    for s in samples {
        let kind = match s.kind {
            SampleKind::Real => "real",
            SampleKind::Generated => "generated",
        };
        let mut row = vec![kind.to_string(), s.label.to_string()];
        row.extend(s.coords.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<SamplePoint>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(HarnessError::csv(path))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(HarnessError::csv(path))?;
        let bad = |what: &str| HarnessError::Parse(format!("{}: row {}: {what}", path.display(), line + 2));
        let kind = match rec.get(0) {
            Some("real") => SampleKind::Real,
            Some("generated") => SampleKind::Generated,
            _ => return Err(bad("kind must be real or generated")),
        };
        let label = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad label"))?;
        let coords = rec.iter().skip(2).map(|v| v.parse::<f64>().map_err(|_| bad("bad coordinate"))).collect::<Result<_, _>>()?;
        out.push(SamplePoint { kind, label, coords });
    }
    Ok(out)
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

pub fn class_color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

/// Real points as circles, generated points as crosses, one legend entry per
/// class present plus one per marker kind.
pub fn scatter_svg(samples: &[SamplePoint], k: usize) -> Result<String, HarnessError> {
    if let Some(s) = samples.iter().find(|s| s.coords.len() != 2) {
        return Err(HarnessError::NotTwoDimensional { dim: s.coords.len() });
    }
    let (w, h, pad, legend_w) = (480.0, 480.0, 24.0, 120.0);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for s in samples {
        for j in 0..2 {
            lo[j] = lo[j].min(s.coords[j]);
            hi[j] = hi[j].max(s.coords[j]);
        }
    }
    if samples.is_empty() {
        (lo, hi) = ([-1.0; 2], [1.0; 2]);
    }
    let span = |j: usize| if hi[j] > lo[j] { hi[j] - lo[j] } else { 1.0 };
    let sx = |v: f64| pad + (v - lo[0]) / span(0) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - lo[1]) / span(1) * (h - 2.0 * pad);

    let mut svg = String::new();
    let total_w = w + legend_w;
    writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{h}" viewBox="0 0 {total_w} {h}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{total_w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<g id="real">"#).unwrap();
    for s in samples.iter().filter(|s| s.kind == SampleKind::Real) {
        writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.5"/>"#,
            sx(s.coords[0]),
            sy(s.coords[1]),
            class_color(s.label)
        )
        .unwrap();
    }
    writeln!(svg, "</g>").unwrap();
    writeln!(svg, r#"<g id="generated" stroke-width="1.5">"#).unwrap();
    for s in samples.iter().filter(|s| s.kind == SampleKind::Generated) {
        let (x, y) = (sx(s.coords[0]), sy(s.coords[1]));
        let c = class_color(s.label);
        writeln!(
            svg,
            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{c}"/>"#,
            x - 3.0,
            y - 3.0,
            x + 3.0,
            y + 3.0,
            x - 3.0,
            y + 3.0,
            x + 3.0,
            y - 3.0
        )
        .unwrap();
    }
    writeln!(svg, "</g>").unwrap();

    writeln!(svg, r#"<g id="legend" font-family="sans-serif" font-size="12">"#).unwrap();
    let lx = w + 10.0;
    for class in 0..k {
        let y = 20.0 + 18.0 * class as f64;
        writeln!(
            svg,
            r#"<g class="legend-entry"><rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">class {class}</text></g>"#,
            y - 9.0,
            class_color(class),
            lx + 16.0,
            y
        )
        .unwrap();
    }
    let y = 20.0 + 18.0 * k as f64 + 8.0;
    writeln!(svg, r##"<circle cx="{}" cy="{}" r="3" fill="#444"/><text x="{}" y="{}">real</text>"##, lx + 5.0, y - 4.0, lx + 16.0, y).unwrap();
    let y = y + 18.0;
    writeln!(
        svg,
        r##"<path d="M{} {}l6 6m0 -6l-6 6" stroke="#444"/><text x="{}" y="{}">generated</text>"##,
        lx + 2.0,
        y - 7.0,
        lx + 16.0,
        y
    )
    .unwrap();
    writeln!(svg, "</g>").unwrap();
    writeln!(svg, "</svg>").unwrap();
    Ok(svg)
}

/// Reads a samples CSV and writes its scatter plot.
pub fn emit_scatter_svg(samples_csv: &Path, k: Option<usize>, out: &Path) -> Result<(), HarnessError> {
    let samples = read_samples_csv(samples_csv)?;
    let k = k.unwrap_or_else(|| samples.iter().map(|s| s.label + 1).max().unwrap_or(0));
    let svg = scatter_svg(&samples, k)?;
    std::fs::write(out, svg).map_err(|e| HarnessError::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(kind: SampleKind, label: usize, x: f64, y: f64) -> SamplePoint {
        SamplePoint { kind, label, coords: vec![x, y] }
    }

    #[test]
    fn real_only_plot_has_no_crosses() {
        let svg = scatter_svg(&[pt(SampleKind::Real, 0, 0.0, 1.0), pt(SampleKind::Real, 1, 2.0, -1.0)], 2).unwrap();
        let generated = &svg[svg.find(r#"<g id="generated""#).unwrap()..svg.find(r#"<g id="legend""#).unwrap()];
        assert!(!generated.contains("<path"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn eight_classes_eight_entries() {
        let pts: Vec<_> = (0..8).map(|c| pt(SampleKind::Generated, c, c as f64, 0.0)).collect();
        let svg = scatter_svg(&pts, 8).unwrap();
        assert_eq!(svg.matches(r#"class="legend-entry""#).count(), 8);
    }

    #[test]
    fn three_dimensional_points_rejected() {
        let p = SamplePoint { kind: SampleKind::Real, label: 0, coords: vec![0.0; 3] };
        assert!(matches!(scatter_svg(&[p], 1), Err(HarnessError::NotTwoDimensional { dim: 3 })));
    }
}
