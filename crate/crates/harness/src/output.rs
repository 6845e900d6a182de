//! CSV and SVG emission.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use gtdlab_core::analysis::bias_subtracted_series;
use gtdlab_core::Metric;

use crate::config::PlotSpec;
use crate::runner::ExperimentResult;

pub const CSV_HEADER: [&str; 8] =
    ["step", "algorithm", "benchmark", "metric", "mean", "stderr", "n_runs", "diverged"];

/// Writes one row per `(series, recorded step)`. Floats use the shortest
/// decimal that round-trips.
pub fn write_csv<W: io::Write>(result: &ExperimentResult, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in &result.series {
        for k in 0..s.steps.len() {
            w.write_record([
                s.steps[k].to_string(),
                s.label.clone(),
                result.benchmark.to_string(),
                s.metric.to_string(),
                s.mean[k].to_string(),
                s.stderr[k].to_string(),
                s.n_valid[k].to_string(),
                s.n_diverged[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &ExperimentResult, path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let file = io::BufWriter::new(fs::File::create(path)?);
    write_csv(result, file)?;
    Ok(())
}

/// A curve to draw: mean with a symmetric band.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub band: Vec<f64>,
}

/// Curves for one metric, with the plot spec's bias subtraction applied.
pub fn curves_for(result: &ExperimentResult, metric: Metric, plot: &PlotSpec) -> Vec<Curve> {
    result
        .series
        .iter()
        .filter(|s| s.metric == metric)
        .map(|s| {
            let y = match plot.bias_subtract {
                Some(b) => bias_subtracted_series(&s.mean, b.tail, b.discount),
                None => s.mean.clone(),
            };
            Curve {
                label: s.label.clone(),
                x: s.steps.iter().map(|&k| k as f64).collect(),
                y,
                band: s.stderr.clone(),
            }
        })
        .collect()
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_y: bool,
}

impl Axes {
    fn fit(curves: &[Curve], log_y: bool) -> Self {
        let mut x1: f64 = 1.0;
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in curves {
            for (i, (&x, &y)) in c.x.iter().zip(&c.y).enumerate() {
                x1 = x1.max(x);
                let b = c.band.get(i).copied().filter(|b| b.is_finite()).unwrap_or(0.0);
                for v in [y - b, y, y + b] {
                    if v.is_finite() && (!log_y || v > 0.0) {
                        y0 = y0.min(v);
                        y1 = y1.max(v);
                    }
                }
            }
        }
        if !y0.is_finite() {
            (y0, y1) = if log_y { (0.1, 1.0) } else { (0.0, 1.0) };
        }
        if log_y {
            y0 = 10f64.powf(y0.log10().floor());
            y1 = 10f64.powf(y1.log10().ceil());
            if y1 <= y0 {
                y1 = y0 * 10.0;
            }
        } else {
            if y0 > 0.0 {
                y0 = 0.0;
            }
            if y1 <= y0 {
                y1 = y0 + 1.0;
            }
        }
        Self { x0: 0.0, x1, y0, y1, log_y }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let t = if self.log_y {
            (y.log10() - self.y0.log10()) / (self.y1.log10() - self.y0.log10())
        } else {
            (y - self.y0) / (self.y1 - self.y0)
        };
        HEIGHT - BOTTOM - t * (HEIGHT - TOP - BOTTOM)
    }

    fn drawable(&self, y: f64) -> bool {
        y.is_finite() && (!self.log_y || y > 0.0)
    }

    fn y_ticks(&self) -> Vec<f64> {
        if self.log_y {
            let (a, b) = (self.y0.log10().round() as i32, self.y1.log10().round() as i32);
            (a..=b).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..=5).map(|i| self.y0 + (self.y1 - self.y0) * i as f64 / 5.0).collect()
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Static SVG 1.1 line plot: one polyline per curve, shaded `y +- band`
/// polygons, optional log-scale y axis.
pub fn render_svg(curves: &[Curve], title: &str, y_label: &str, log_y: bool) -> String {
    let ax = Axes::fit(curves, log_y);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, escape(title));

    let (bx0, bx1, by0, by1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{bx0} {by0} V{by1} H{bx1}" fill="none" stroke="black"/>"#);
    for t in ax.y_ticks() {
        let y = ax.py(t);
        let _ = writeln!(s, r##"<line x1="{}" y1="{y:.2}" x2="{bx0}" y2="{y:.2}" stroke="black"/><line x1="{bx0}" y1="{y:.2}" x2="{bx1}" y2="{y:.2}" stroke="#dddddd"/>"##, bx0 - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, bx0 - 8.0, y + 4.0, fmt_tick(t));
    }
    for i in 0..=5 {
        let v = ax.x1 * i as f64 / 5.0;
        let x = ax.px(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{by1}" x2="{x:.2}" y2="{}" stroke="black"/>"#, by1 + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, by1 + 20.0, fmt_tick(v.round()));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, (bx0 + bx1) / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (by0 + by1) / 2.0,
        escape(y_label)
    );

    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        let mut line = Vec::new();
        for k in 0..c.x.len() {
            let (x, y) = (c.x[k], c.y[k]);
            if !ax.drawable(y) {
                continue;
            }
            line.push(format!("{:.2},{:.2}", ax.px(x), ax.py(y)));
            let b = c.band.get(k).copied().filter(|b| b.is_finite()).unwrap_or(0.0);
            let lo = if ax.log_y { (y - b).max(y * 1e-3) } else { y - b };
            upper.push(format!("{:.2},{:.2}", ax.px(x), ax.py(y + b)));
            lower.push(format!("{:.2},{:.2}", ax.px(x), ax.py(lo)));
        }
        if !line.is_empty() {
            lower.reverse();
            upper.extend(lower);
            let _ = writeln!(s, r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#, upper.join(" "));
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, line.join(" "));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="3"/>"#, bx1 + 10.0, bx1 + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, bx1 + 36.0, ly + 4.0, escape(&c.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Writes one SVG per metric, named `<name>-<metric>.svg`. Returns the paths.
pub fn emit_svg(result: &ExperimentResult, metrics: &[Metric], plot: &PlotSpec, dir: &Path) -> anyhow::Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for &m in metrics {
        let curves = curves_for(result, m, plot);
        let title = plot.title.clone().unwrap_or_else(|| format!("{} ({})", result.name, result.benchmark));
        let y_label = if plot.bias_subtract.is_some() { format!("{m} minus bias") } else { m.to_string() };
        let path = dir.join(format!("{}-{}.svg", result.name, m));
        fs::write(&path, render_svg(&curves, &title, &y_label, plot.log_y))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::RunSeries;
    use gtdlab_core::{Algorithm, BenchmarkName};

    fn series(label: &str, mean: Vec<f64>) -> RunSeries {
        let n = mean.len();
        RunSeries {
            label: label.into(),
            algorithm: Algorithm::Td,
            metric: Metric::Rmsve,
            steps: (0..n).map(|k| 10 * k).collect(),
            values: vec![mean.clone()],
            diverged: vec![false],
            stderr: vec![0.0; n],
            mean,
            n_valid: vec![1; n],
            n_diverged: vec![0; n],
        }
    }

    fn result(series: Vec<RunSeries>) -> ExperimentResult {
        ExperimentResult { name: "t".into(), benchmark: BenchmarkName::Boyan, steps: vec![], series }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&result(vec![]), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,algorithm,benchmark,metric,mean,stderr,n_runs,diverged\n");
    }

    #[test]
    fn single_point_round_trips() {
        let x = 0.1 + 0.2;
        let mut buf = Vec::new();
        write_csv(&result(vec![series("td", vec![x])]), &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let row = rdr.records().next().unwrap().unwrap();
        assert_eq!(row[4].parse::<f64>().unwrap().to_bits(), x.to_bits());
        assert_eq!(&row[1], "td");
        assert_eq!(&row[2], "boyan");
    }

    #[test]
    fn svg_polylines() {
        let r = result(vec![series("a", vec![1.0, 0.5, 0.25]), series("b", vec![1.0, 0.9, 0.8])]);
        let svg = render_svg(&curves_for(&r, Metric::Rmsve, &PlotSpec::default()), "t", "rmsve", true);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<?xml"));
        let empty = render_svg(&[], "t", "rmsve", false);
        assert_eq!(empty.matches("<polyline").count(), 0);
        assert!(empty.trim_end().ends_with("</svg>"));
    }
}
