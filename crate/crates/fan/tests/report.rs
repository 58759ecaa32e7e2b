use fan::config::{ConfigFile, ModelConfig};
use fan::report::{self, LossMetric, PlotKind, SweepAxis};
use fan::runner::{self, RunResult};
use fan_core::count_costs;

fn tiny(families: &[&str], epochs: usize) -> Vec<RunResult> {
    let mut file = ConfigFile {
        epochs,
        eval_every: 1,
        models: families.iter().map(|f| ModelConfig::new(f, f, 8, 1)).collect(),
        ..ConfigFile::default()
    };
    file.task.points_per_period = 8;
    file.optimizer.lr = 1e-2;
    runner::compare(&file.runs()).unwrap().results
}

fn attr(node: roxmltree::Node, name: &str) -> f64 {
    node.attribute(name).unwrap().parse().unwrap()
}

#[test]
fn csv_has_one_row_per_evaluation_plus_the_initial_one() {
    for epochs in [1, 2, 7] {
        let results = tiny(&["fan"], epochs);
        let csv = report::metrics_csv(&results);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(report::CSV_HEADER));
        assert_eq!(lines.count(), epochs + 1);
    }
}

#[test]
fn csv_params_match_the_counted_network() {
    let results = tiny(&["fan", "mlp"], 2);
    let csv = report::metrics_csv(&results);
    let header: Vec<&str> = report::CSV_HEADER.split(',').collect();
    let col = header.iter().position(|h| *h == "params_exact").unwrap();
    for (line, r) in csv
        .lines()
        .skip(1)
        .zip(results.iter().flat_map(|r| r.history.iter().map(move |_| r)))
    {
        let expected = count_costs(&r.config.model.network_spec().unwrap()).exact_params;
        assert_eq!(line.split(',').nth(col).unwrap(), expected.to_string());
    }
}

#[test]
fn emitting_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    report::emit_csv(&a, &tiny(&["fan", "mlp"], 3)).unwrap();
    report::emit_csv(&b, &tiny(&["fan", "mlp"], 3)).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let results = tiny(&["fan"], 3);
    for kind in [PlotKind::FitCurve, PlotKind::LossCurve(LossMetric::OodTest)] {
        let sa = dir.path().join("a.svg");
        let sb = dir.path().join("b.svg");
        report::emit_svg_plot(&sa, &results, kind).unwrap();
        report::emit_svg_plot(&sb, &results, kind).unwrap();
        assert_eq!(std::fs::read(&sa).unwrap(), std::fs::read(&sb).unwrap());
    }
}

#[test]
fn empty_results_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(report::emit_csv(&dir.path().join("x.csv"), &[]).is_err());
}

#[test]
fn fit_curve_shades_exactly_the_training_domain() {
    let results = tiny(&["fan"], 2);
    let plot = report::fit_curve_plot(&results);
    let svg = plot.render();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let rect = doc
        .descendants()
        .find(|n| n.attribute("id") == Some("train-domain"))
        .expect("shaded rect");
    let [lo, hi] = results[0].config.task.train;
    assert!((attr(rect, "x") - plot.x_px(lo)).abs() < 1e-3);
    assert!((attr(rect, "width") - (plot.x_px(hi) - plot.x_px(lo))).abs() < 2e-3);
}

#[test]
fn two_models_give_two_loss_polylines_with_distinct_legends() {
    let results = tiny(&["fan", "mlp"], 4);
    let svg = report::svg_plot(&results, PlotKind::LossCurve(LossMetric::Train));
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let lines: Vec<_> = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline") && n.attribute("class") == Some("series"))
        .collect();
    assert_eq!(lines.len(), 2);
    let mut labels: Vec<&str> = lines.iter().map(|n| n.attribute("data-label").unwrap()).collect();
    labels.dedup();
    assert_eq!(labels, ["fan", "mlp"]);
    let legends = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("legend-entry"))
        .count();
    assert_eq!(legends, 2);
}

#[test]
fn sweep_plot_parses() {
    let results = tiny(&["fan"], 1);
    let svg = report::svg_plot(&results, PlotKind::Sweep(SweepAxis::DpRatio));
    roxmltree::Document::parse(&svg).unwrap();
}

#[test]
fn table1_gap_is_d_p() {
    let csv = report::table1_csv(&[16, 64]);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<u64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[col("fan_params_formula")] - f[col("fan_params_exact")], f[col("d_p")]);
        assert_eq!(f[col("bias_gap")], f[col("d_p")]);
        assert_eq!(f[col("mlp_params_exact")], f[col("mlp_params_formula")]);
        assert_eq!(f[col("fan_matmul_flops_exact")], f[col("fan_matmul_flops_formula")]);
    }
}
