//! CSV and SVG emission.
//!
//! Both formats are rendered to strings first so repeated emission of the
//! same results yields identical bytes.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use fan_core::cost::{layer_cost, DEFAULT_FLOPS_NONLINEAR};
use fan_core::{Activation, LayerKind, LayerSpec};

use crate::runner::{BenchRow, DepthRow, RunResult};

pub const CSV_HEADER: &str =
    "run,model,epoch,train_mse,id_mse,ood_mse,train_mae,id_mae,ood_mae,params_exact,flops_exact,wall_ms";

/// Nine significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// One row per metrics record, runs in order.
pub fn metrics_csv(results: &[RunResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (run, r) in results.iter().enumerate() {
        for m in &r.history {
            let floats = [
                m.train_mse,
                m.id_test_mse,
                m.ood_test_mse,
                m.train_mae,
                m.id_test_mae,
                m.ood_test_mae,
            ]
            .map(fmt_float)
            .join(",");
            let _ = writeln!(
                out,
                "{run},{},{},{floats},{},{},{}",
                csv_field(r.label()),
                m.epoch,
                r.cost.exact_params,
                r.cost.exact_flops,
                fmt_float(m.wall_ms)
            );
        }
    }
    out
}

/// Final losses and bookkeeping, one row per run.
pub fn summary_csv(results: &[RunResult]) -> String {
    let mut out = String::from(
        "run,model,status,epoch,train_mse,id_mse,ood_mse,params_exact,params_table1,flops_exact,flops_table1,config_hash,params_id\n",
    );
    for (run, r) in results.iter().enumerate() {
        let m = r.last();
        let status = match &r.divergence {
            Some(d) => format!("diverged@{}", d.epoch),
            None => "ok".into(),
        };
        let _ = writeln!(
            out,
            "{run},{},{status},{},{},{},{},{},{},{},{},{},{}",
            csv_field(r.label()),
            m.epoch,
            fmt_float(m.train_mse),
            fmt_float(m.id_test_mse),
            fmt_float(m.ood_test_mse),
            r.cost.exact_params,
            r.cost.table1_params,
            r.cost.exact_flops,
            r.cost.table1_flops,
            r.config_hash,
            r.params_id
        );
    }
    out
}

/// Deterministic columns of a runtime benchmark.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("d_in,d_out,kind,params_exact,flops_exact,matmul_flops\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.d_in, r.d_out, r.kind, r.params_exact, r.flops_exact, r.matmul_flops
        );
    }
    out
}

/// Measured medians; these vary between runs and machines.
pub fn bench_timings_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("d_in,d_out,kind,median_ms\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.d_in, r.d_out, r.kind, fmt_float(r.median_ms));
    }
    out
}

pub fn depth_csv(rows: &[DepthRow]) -> String {
    let mut out = String::from("depth,params_exact,best_train_mse,best_test_mse,status\n");
    for r in rows {
        let status = if r.result.diverged() { "diverged" } else { "ok" };
        let _ = writeln!(
            out,
            "{},{},{},{},{status}",
            r.depth,
            r.params,
            fmt_float(r.best_train_mse),
            fmt_float(r.best_test_mse)
        );
    }
    out
}

/// Exact counts next to the closed-form layer formulas for square FAN and
/// MLP layers with `d_p = d/4`. `bias_gap` is the FAN parameter difference.
pub fn table1_csv(dims: &[usize]) -> String {
    let mut out = String::from(
        "d_in,d_out,d_p,mlp_params_exact,mlp_params_formula,mlp_flops_exact,mlp_flops_formula,fan_params_exact,fan_params_formula,bias_gap,fan_matmul_flops_exact,fan_matmul_flops_formula,fan_flops_exact,fan_flops_formula\n",
    );
    for &d in dims {
        let d_p = d / 4;
        let mlp = layer_cost(&LayerSpec::new(
            LayerKind::Mlp {
                activation: Activation::Gelu,
            },
            d,
            d,
        ));
        let fan = layer_cost(&LayerSpec::new(
            LayerKind::Fan {
                d_p,
                activation: Activation::Gelu,
            },
            d,
            d,
        ));
        let nl = DEFAULT_FLOPS_NONLINEAR;
        let _ = writeln!(
            out,
            "{d},{d},{d_p},{},{},{},{},{},{},{},{},{},{},{}",
            mlp.exact_params,
            mlp.table1_params,
            mlp.exact_flops(nl),
            mlp.table1_flops(nl),
            fan.exact_params,
            fan.table1_params,
            fan.table1_params - fan.exact_params,
            fan.exact_matmul_flops,
            fan.table1_matmul_flops,
            fan.exact_flops(nl),
            fan.table1_flops(nl)
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes the metrics CSV for `results`; at least one result is required.
pub fn emit_csv(path: &Path, results: &[RunResult]) -> io::Result<()> {
    if results.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no results to write"));
    }
    std::fs::write(path, metrics_csv(results))
}

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Shaded x interval (the training domain on fit curves).
    pub shade: Option<(f64, f64)>,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMetric {
    Train,
    IdTest,
    OodTest,
}

impl LossMetric {
    fn name(self) -> &'static str {
        match self {
            LossMetric::Train => "train MSE",
            LossMetric::IdTest => "in-domain test MSE",
            LossMetric::OodTest => "out-of-domain test MSE",
        }
    }

    fn pick(self, m: &crate::runner::MetricsRecord) -> f64 {
        match self {
            LossMetric::Train => m.train_mse,
            LossMetric::IdTest => m.id_test_mse,
            LossMetric::OodTest => m.ood_test_mse,
        }
    }
}

/// Which run parameter becomes the x axis of a sweep plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    DpRatio,
    Depth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    FitCurve,
    LossCurve(LossMetric),
    Sweep(SweepAxis),
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.filter(|v| v.is_finite()).fold(None, |acc, v| {
        Some(acc.map_or((v, v), |(lo, hi): (f64, f64)| (lo.min(v), hi.max(v))))
    })
}

fn padded(range: Option<(f64, f64)>, frac: f64) -> (f64, f64) {
    match range {
        Some((lo, hi)) if hi > lo => {
            let pad = (hi - lo) * frac;
            (lo - pad, hi + pad)
        }
        Some((v, _)) => (v - 1.0, v + 1.0),
        None => (0.0, 1.0),
    }
}

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    match finite_range(values.filter(|v| *v > 0.0).map(f64::log10)) {
        Some((lo, hi)) => (
            lo.floor(),
            if hi.ceil() > lo.floor() {
                hi.ceil()
            } else {
                lo.floor() + 1.0
            },
        ),
        None => (-1.0, 0.0),
    }
}

/// Target and every model's prediction over the test interval, training
/// domain shaded.
pub fn fit_curve_plot(results: &[RunResult]) -> Plot {
    let first = &results[0];
    let task = &first.config.task;
    let target: Vec<(f64, f64)> = first
        .fit
        .x
        .iter()
        .copied()
        .zip(first.fit.target.iter().copied())
        .collect();
    let mut series = vec![Series {
        label: "target".into(),
        points: target.clone(),
        dashed: true,
    }];
    for r in results {
        series.push(Series {
            label: r.label().to_string(),
            points: r.fit.x.iter().copied().zip(r.fit.prediction.iter().copied()).collect(),
            dashed: false,
        });
    }
    Plot {
        title: format!("{}: {} fit", first.config.name, task.target),
        x_label: "x".into(),
        y_label: "y".into(),
        log_y: false,
        series,
        shade: Some((task.train[0], task.train[1])),
        x_range: (task.test[0], task.test[1]),
        y_range: padded(finite_range(target.iter().map(|p| p.1)), 0.5),
    }
}

/// Log-scale loss against epoch, one line per run.
pub fn loss_curve_plot(results: &[RunResult], metric: LossMetric) -> Plot {
    let series: Vec<Series> = results
        .iter()
        .map(|r| Series {
            label: r.label().to_string(),
            points: r.history.iter().map(|m| (m.epoch as f64, metric.pick(m))).collect(),
            dashed: false,
        })
        .collect();
    let epochs = results.iter().map(|r| r.config.epochs).max().unwrap_or(1) as f64;
    let y_range = log_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    Plot {
        title: format!("{}: {}", results[0].config.name, metric.name()),
        x_label: "epoch".into(),
        y_label: format!("{} (log10)", metric.name()),
        log_y: true,
        series,
        shade: None,
        x_range: (0.0, epochs),
        y_range,
    }
}

/// Final train, in-domain and out-of-domain MSE against a swept parameter.
pub fn sweep_plot(results: &[RunResult], axis: SweepAxis) -> Plot {
    let x_of = |r: &RunResult| match axis {
        SweepAxis::DpRatio => r.config.model.dp_ratio,
        SweepAxis::Depth => r.config.model.depth as f64,
    };
    let series: Vec<Series> = [LossMetric::Train, LossMetric::IdTest, LossMetric::OodTest]
        .into_iter()
        .map(|metric| Series {
            label: metric.name().into(),
            points: results.iter().map(|r| (x_of(r), metric.pick(r.last()))).collect(),
            dashed: false,
        })
        .collect();
    let y_range = log_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let x_label = match axis {
        SweepAxis::DpRatio => "d_p / d_h",
        SweepAxis::Depth => "hidden layers",
    };
    Plot {
        title: format!("{}: final losses", results[0].config.name),
        x_label: x_label.into(),
        y_label: "MSE (log10)".into(),
        log_y: true,
        series,
        shade: None,
        x_range: padded(finite_range(results.iter().map(x_of)), 0.05),
        y_range,
    }
}

pub fn svg_plot(results: &[RunResult], kind: PlotKind) -> String {
    match kind {
        PlotKind::FitCurve => fit_curve_plot(results),
        PlotKind::LossCurve(m) => loss_curve_plot(results, m),
        PlotKind::Sweep(axis) => sweep_plot(results, axis),
    }
    .render()
}

/// Renders and writes one plot; `results` must be non-empty.
pub fn emit_svg_plot(path: &Path, results: &[RunResult], kind: PlotKind) -> io::Result<()> {
    if results.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no results to plot"));
    }
    std::fs::write(path, svg_plot(results, kind))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Plot {
    /// Horizontal pixel position of data coordinate `x`.
    pub fn x_px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        LEFT + (x - lo) / (hi - lo) * (WIDTH - LEFT - RIGHT)
    }

    /// Vertical pixel position of `y`, clamped to the plot area.
    pub fn y_px(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        let v = if self.log_y { y.max(1e-300).log10() } else { y };
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        HEIGHT - BOTTOM - t * (HEIGHT - TOP - BOTTOM)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let (plot_w, plot_h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
        );
        let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{:.3}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        if let Some((a, b)) = self.shade {
            let (x0, x1) = (self.x_px(a), self.x_px(b));
            let _ = writeln!(
                s,
                "<rect id=\"train-domain\" x=\"{x0:.3}\" y=\"{TOP:.3}\" width=\"{:.3}\" height=\"{plot_h:.3}\" fill=\"#dddddd\" fill-opacity=\"0.6\"/>",
                x1 - x0
            );
        }
        let _ = writeln!(
            s,
            "<rect x=\"{LEFT:.3}\" y=\"{TOP:.3}\" width=\"{plot_w:.3}\" height=\"{plot_h:.3}\" fill=\"none\" stroke=\"black\"/>"
        );
        for i in 0..=5 {
            let t = i as f64 / 5.0;
            let xv = self.x_range.0 + t * (self.x_range.1 - self.x_range.0);
            let px = self.x_px(xv);
            let _ = writeln!(
                s,
                "<line x1=\"{px:.3}\" y1=\"{:.3}\" x2=\"{px:.3}\" y2=\"{:.3}\" stroke=\"black\"/><text x=\"{px:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{}</text>",
                HEIGHT - BOTTOM,
                HEIGHT - BOTTOM + 5.0,
                HEIGHT - BOTTOM + 19.0,
                tick_label(xv)
            );
        }
        let y_ticks: Vec<f64> = if self.log_y {
            let (lo, hi) = (self.y_range.0 as i32, self.y_range.1 as i32);
            let stride = ((hi - lo) / 8 + 1).max(1);
            (lo..=hi).step_by(stride as usize).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..=5)
                .map(|i| self.y_range.0 + i as f64 / 5.0 * (self.y_range.1 - self.y_range.0))
                .collect()
        };
        for yv in y_ticks {
            let py = self.y_px(yv);
            let label = if self.log_y {
                format!("1e{}", yv.log10().round())
            } else {
                tick_label(yv)
            };
            let _ = writeln!(
                s,
                "<line x1=\"{:.3}\" y1=\"{py:.3}\" x2=\"{LEFT:.3}\" y2=\"{py:.3}\" stroke=\"black\"/><text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"end\">{label}</text>",
                LEFT - 5.0,
                LEFT - 8.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{}</text>",
            LEFT + plot_w / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            "<text x=\"18\" y=\"{:.3}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.3})\">{}</text>",
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(
            s,
            "<clipPath id=\"plot-area\"><rect x=\"{LEFT:.3}\" y=\"{TOP:.3}\" width=\"{plot_w:.3}\" height=\"{plot_h:.3}\"/></clipPath>"
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let finite: Vec<(f64, f64)> = series
                .points
                .iter()
                .copied()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
                .collect();
            let stride = finite.len().div_ceil(MAX_POINTS).max(1);
            let mut pts = String::new();
            for (j, (x, y)) in finite.iter().enumerate() {
                if j % stride == 0 || j + 1 == finite.len() {
                    let _ = write!(pts, "{:.3},{:.3} ", self.x_px(*x), self.y_px(*y));
                }
            }
            let dash = if series.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = writeln!(
                s,
                "<polyline class=\"series\" data-label=\"{}\" clip-path=\"url(#plot-area)\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
                escape(&series.label),
                pts.trim_end()
            );
            let ly = TOP + 12.0 + 20.0 * i as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                "<g class=\"legend-entry\"><line x1=\"{lx:.3}\" y1=\"{ly:.3}\" x2=\"{:.3}\" y2=\"{ly:.3}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/><text x=\"{:.3}\" y=\"{:.3}\">{}</text></g>",
                lx + 24.0,
                lx + 30.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
