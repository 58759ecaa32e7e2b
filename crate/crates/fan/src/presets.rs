//! Named experiment bundles.
//!
//! Each preset expands to a list of jobs for a scale. Desk presets are sized
//! for a laptop CPU; paper scale uses 2048-wide hidden layers, 10 000 points
//! per period and a 1e-5 learning rate, and runs for hours.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use fan_core::count_costs;

use crate::config::{ConfigError, ConfigFile, ModelConfig, TaskConfig};
use crate::report::{self, LossMetric, PlotKind, SweepAxis};
use crate::runner::{self, BenchRow, RunResult};

pub const PRESETS: [(&str, &str); 10] = [
    (
        "fig1-sin",
        "FAN vs. a parameter-matched MLP on sin(x), extrapolating to |x| = 16 pi",
    ),
    ("fig3-grid", "FAN, gated FAN and MLP on a grid of periodic targets"),
    (
        "fig4-losscurves",
        "train and test loss curves on the complex periodic target",
    ),
    (
        "fig6-fourier-baselines",
        "FAN vs. MLP, FNN, Snake and FSNN on the complex periodic target",
    ),
    ("fig8-extended", "FAN vs. MLP on further periodic targets"),
    ("appD-snake", "FAN vs. Snake and MLP on sin and sawtooth targets"),
    ("fig7-dp-sweep", "d_p ratio sweep of a FAN on sin(x)"),
    ("fig9-depth", "depth studies: residual FAN stacks and plain FSNN stacks"),
    ("table1-accounting", "exact vs. closed-form parameter and FLOP counts"),
    ("table5-bench", "forward-pass timing of single FAN and MLP layers"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Scale::Desk),
            "paper" => Some(Scale::Paper),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub enum PresetError {
    UnknownPreset(String),
    Config(ConfigError),
    Io(std::io::Error),
}

impl fmt::Display for PresetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PresetError::UnknownPreset(n) => write!(f, "unknown preset '{n}'"),
            PresetError::Config(e) => write!(f, "{e}"),
            PresetError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PresetError {}

impl From<ConfigError> for PresetError {
    fn from(e: ConfigError) -> Self {
        PresetError::Config(e)
    }
}

impl From<std::io::Error> for PresetError {
    fn from(e: std::io::Error) -> Self {
        PresetError::Io(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Compare {
        tag: String,
        file: ConfigFile,
    },
    DpSweep {
        tag: String,
        file: ConfigFile,
        ratios: Vec<f64>,
    },
    Depth {
        tag: String,
        file: ConfigFile,
        depths: Vec<usize>,
        residual: bool,
    },
    Accounting {
        dims: Vec<usize>,
    },
    Bench {
        dims: Vec<usize>,
        repeats: usize,
    },
}

fn sin_task(points_per_period: usize) -> TaskConfig {
    TaskConfig {
        points_per_period,
        ..TaskConfig::default()
    }
}

fn complex_task(target: &str, points_per_period: usize) -> TaskConfig {
    TaskConfig {
        target: target.into(),
        period: 6.0,
        points_per_period,
        train: [-10.0, 10.0],
        test: [-30.0, 30.0],
        ..TaskConfig::default()
    }
}

fn named_task(target: &str, period: f64, points_per_period: usize) -> TaskConfig {
    TaskConfig {
        target: target.into(),
        period,
        modulus: period,
        points_per_period,
        train: [-4.0 * period, 4.0 * period],
        test: [-12.0 * period, 12.0 * period],
        ..TaskConfig::default()
    }
}

struct Recipe {
    hidden: usize,
    epochs: usize,
    eval_every: usize,
    lr: f64,
    density: usize,
}

fn recipe(scale: Scale, desk: Recipe) -> Recipe {
    match scale {
        Scale::Desk => desk,
        Scale::Paper => Recipe {
            hidden: 2048,
            epochs: 10_000,
            eval_every: 100,
            lr: 1e-5,
            density: 10_000,
        },
    }
}

fn file(name: &str, seed: u64, r: &Recipe, mut task: TaskConfig, models: Vec<ModelConfig>) -> ConfigFile {
    task.points_per_period = r.density;
    let mut f = ConfigFile {
        name: name.into(),
        seed,
        epochs: r.epochs,
        eval_every: r.eval_every,
        task,
        models,
        ..ConfigFile::default()
    };
    f.optimizer.lr = r.lr;
    f
}

fn models(families: &[&str], hidden: usize) -> Vec<ModelConfig> {
    families.iter().map(|f| ModelConfig::new(f, f, hidden, 2)).collect()
}

/// FAN plus an MLP whose width gives the closest parameter count.
fn fan_and_matched_mlp(hidden: usize) -> Result<Vec<ModelConfig>, ConfigError> {
    let fan = ModelConfig::new("fan", "fan", hidden, 2);
    let target = count_costs(&fan.network_spec()?).exact_params;
    let mut mlp = ModelConfig::new("mlp", "mlp", hidden, 2);
    mlp.hidden = runner::matched_hidden(&mlp, target)?;
    Ok(vec![fan, mlp])
}

/// Expands a preset into jobs.
pub fn preset_jobs(name: &str, scale: Scale, seed: u64) -> Result<Vec<Job>, PresetError> {
    let complex = |density| Recipe {
        hidden: 256,
        epochs: 2000,
        eval_every: 20,
        lr: 3e-3,
        density,
    };
    let small = Recipe {
        hidden: 128,
        epochs: 1500,
        eval_every: 25,
        lr: 3e-3,
        density: 32,
    };
    let jobs = match name {
        "fig1-sin" => {
            let r = recipe(
                scale,
                Recipe {
                    hidden: 256,
                    epochs: 3000,
                    eval_every: 25,
                    lr: 1e-2,
                    density: 64,
                },
            );
            let models = fan_and_matched_mlp(r.hidden)?;
            vec![Job::Compare {
                tag: "sin".into(),
                file: file(name, seed, &r, sin_task(r.density), models),
            }]
        }
        "fig3-grid" => {
            let r = recipe(scale, small);
            let tasks = [
                ("mod5", named_task("mod", 5.0, r.density)),
                ("triangle", named_task("triangle", 2.0 * PI, r.density)),
                ("sin_cos_mix", named_task("sin_cos_mix", 2.0 * PI, r.density)),
            ];
            tasks
                .into_iter()
                .map(|(tag, task)| Job::Compare {
                    tag: tag.into(),
                    file: file(name, seed, &r, task, models(&["fan", "gated_fan", "mlp"], r.hidden)),
                })
                .collect()
        }
        "fig4-losscurves" => {
            let r = recipe(
                scale,
                Recipe {
                    hidden: 128,
                    epochs: 1500,
                    ..complex(128)
                },
            );
            vec![Job::Compare {
                tag: "complex".into(),
                file: file(
                    name,
                    seed,
                    &r,
                    complex_task("complex_a", r.density),
                    models(&["fan", "gated_fan", "mlp"], r.hidden),
                ),
            }]
        }
        "fig6-fourier-baselines" => {
            let r = recipe(scale, complex(128));
            vec![Job::Compare {
                tag: "complex".into(),
                file: file(
                    name,
                    seed,
                    &r,
                    complex_task("complex_a", r.density),
                    models(&["fan", "mlp", "fnn", "snake", "fsnn"], r.hidden),
                ),
            }]
        }
        "fig8-extended" => {
            let r = recipe(scale, small);
            let tasks = [
                ("complex_b", complex_task("complex_b", r.density)),
                ("mod3", named_task("mod", 3.0, r.density)),
                ("exp_sin", named_task("exp_sin", 2.0 * PI, r.density)),
            ];
            tasks
                .into_iter()
                .map(|(tag, task)| Job::Compare {
                    tag: tag.into(),
                    file: file(name, seed, &r, task, models(&["fan", "mlp"], r.hidden)),
                })
                .collect()
        }
        "appD-snake" => {
            let r = recipe(scale, small);
            let tasks = [
                ("sin", sin_task(r.density)),
                ("sawtooth", named_task("sawtooth", 2.0 * PI, r.density)),
            ];
            tasks
                .into_iter()
                .map(|(tag, task)| Job::Compare {
                    tag: tag.into(),
                    file: file(name, seed, &r, task, models(&["fan", "snake", "mlp"], r.hidden)),
                })
                .collect()
        }
        "fig7-dp-sweep" => {
            let r = recipe(
                scale,
                Recipe {
                    hidden: 128,
                    epochs: 2000,
                    eval_every: 25,
                    lr: 1e-2,
                    density: 32,
                },
            );
            vec![Job::DpSweep {
                tag: "sin".into(),
                file: file(name, seed, &r, sin_task(r.density), models(&["fan"], r.hidden)),
                ratios: vec![0.0, 0.125, 0.25, 0.375, 0.5],
            }]
        }
        "fig9-depth" => {
            let r = recipe(
                scale,
                Recipe {
                    hidden: 64,
                    epochs: 1000,
                    eval_every: 25,
                    lr: 3e-3,
                    density: 32,
                },
            );
            vec![
                Job::Depth {
                    tag: "fan_residual".into(),
                    file: file(
                        name,
                        seed,
                        &r,
                        named_task("sin_cos_mix", 2.0 * PI, r.density),
                        models(&["fan"], r.hidden),
                    ),
                    depths: vec![1, 2, 3, 4],
                    residual: true,
                },
                Job::Depth {
                    tag: "fsnn_plain".into(),
                    file: file(
                        name,
                        seed,
                        &r,
                        complex_task("complex_a", r.density),
                        models(&["fsnn"], r.hidden),
                    ),
                    depths: vec![1, 3],
                    residual: false,
                },
            ]
        }
        "table1-accounting" => vec![Job::Accounting {
            dims: vec![16, 64, 256, 1024],
        }],
        "table5-bench" => vec![Job::Bench {
            dims: vec![1024, 2048, 4096, 8192],
            repeats: 100,
        }],
        other => return Err(PresetError::UnknownPreset(other.into())),
    };
    for job in &jobs {
        match job {
            Job::Compare { file, .. } | Job::DpSweep { file, .. } | Job::Depth { file, .. } => file.validate()?,
            _ => {}
        }
    }
    Ok(jobs)
}

/// Everything a preset run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub dir: PathBuf,
    /// Written files, in write order.
    pub files: Vec<PathBuf>,
    /// Results per job tag.
    pub runs: Vec<(String, Vec<RunResult>)>,
    pub bench: Vec<BenchRow>,
}

impl Bundle {
    pub fn results(&self, tag: &str) -> Option<&[RunResult]> {
        self.runs.iter().find(|(t, _)| t == tag).map(|(_, r)| r.as_slice())
    }

    pub fn diverged(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().flat_map(|(_, r)| r).filter(|r| r.diverged())
    }
}

/// Directory a preset writes into: `<root>/<preset>/<scale>-seed<seed>`.
pub fn bundle_dir(root: &Path, name: &str, scale: Scale, seed: u64) -> PathBuf {
    root.join(name).join(format!("{}-seed{seed}", scale.name()))
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn results(&mut self, tag: &str, configs: &str, results: &[RunResult]) -> std::io::Result<()> {
        self.put(&format!("{tag}_config.toml"), configs)?;
        self.put(&format!("{tag}_metrics.csv"), &report::metrics_csv(results))?;
        self.put(&format!("{tag}_summary.csv"), &report::summary_csv(results))?;
        self.put(
            &format!("{tag}_loss_train.svg"),
            &report::svg_plot(results, PlotKind::LossCurve(LossMetric::Train)),
        )?;
        self.put(
            &format!("{tag}_loss_ood.svg"),
            &report::svg_plot(results, PlotKind::LossCurve(LossMetric::OodTest)),
        )
    }
}

fn echo_all(results: &[RunResult]) -> String {
    results
        .iter()
        .map(|r| format!("# run {}\n{}", r.label(), r.config.echo()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs every job of a preset and writes its CSVs, SVGs and resolved
/// configs. Output depends only on `(name, scale, seed)` apart from the
/// benchmark timings file.
pub fn run_preset(name: &str, scale: Scale, seed: u64, root: &Path) -> Result<Bundle, PresetError> {
    let jobs = preset_jobs(name, scale, seed)?;
    let dir = bundle_dir(root, name, scale, seed);
    std::fs::create_dir_all(&dir)?;
    let mut w = Writer { dir, files: Vec::new() };
    let mut runs = Vec::new();
    let mut bench = Vec::new();
    for job in jobs {
        match job {
            Job::Compare { tag, file } => {
                let cmp = runner::compare(&file.runs())?;
                w.results(&tag, &file.echo(), &cmp.results)?;
                w.put(
                    &format!("{tag}_fit.svg"),
                    &report::svg_plot(&cmp.results, PlotKind::FitCurve),
                )?;
                runs.push((tag, cmp.results));
            }
            Job::DpSweep { tag, file, ratios } => {
                let rows = runner::sweep_dp(&file.runs()[0], &ratios)?;
                let results: Vec<RunResult> = rows.into_iter().map(|(_, r)| r).collect();
                w.results(&tag, &echo_all(&results), &results)?;
                w.put(
                    &format!("{tag}_sweep.svg"),
                    &report::svg_plot(&results, PlotKind::Sweep(SweepAxis::DpRatio)),
                )?;
                runs.push((tag, results));
            }
            Job::Depth {
                tag,
                file,
                depths,
                residual,
            } => {
                let rows = runner::depth_study(&file.runs()[0], &depths, residual)?;
                w.put(&format!("{tag}_depth.csv"), &report::depth_csv(&rows))?;
                let results: Vec<RunResult> = rows.into_iter().map(|r| r.result).collect();
                w.results(&tag, &echo_all(&results), &results)?;
                w.put(
                    &format!("{tag}_sweep.svg"),
                    &report::svg_plot(&results, PlotKind::Sweep(SweepAxis::Depth)),
                )?;
                runs.push((tag, results));
            }
            Job::Accounting { dims } => {
                w.put("table1.csv", &report::table1_csv(&dims))?;
            }
            Job::Bench { dims, repeats } => {
                let square: Vec<(usize, usize)> = dims.iter().map(|&d| (d, d)).collect();
                bench = runner::bench_runtime(&square, repeats, seed)?;
                w.put("bench.csv", &report::bench_csv(&bench))?;
                // measured times are kept apart from the reproducible tables
                w.put("bench_timings.txt", &report::bench_timings_csv(&bench))?;
            }
        }
    }
    Ok(Bundle {
        dir: w.dir,
        files: w.files,
        runs,
        bench,
    })
}
