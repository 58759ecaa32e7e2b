use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fan::config::{self, ConfigFile};
use fan::presets::{self, Scale};
use fan::report::{self, LossMetric, PlotKind, SweepAxis};
use fan::runner::{self, RunResult};
use fan_core::count_costs;

/// Environment variable naming the default output root.
const OUTPUT_ROOT_ENV: &str = "FAN_OUTPUT_ROOT";

#[derive(Parser)]
#[command(
    name = "fan",
    version,
    about = "Train and compare Fourier Analysis Networks on periodic targets"
)]
struct Cli {
    /// Seed for initialization; replaces the seed in any config.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output root; defaults to $FAN_OUTPUT_ROOT, then ./runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a preset's first experiment instead of the built-in defaults.
    #[arg(long)]
    preset: Option<String>,
    /// `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every model in a config.
    Train(ConfigArgs),
    /// Train every model in a config and rank them by out-of-domain MSE.
    Compare(ConfigArgs),
    /// Sweep the d_p ratio of the config's first model.
    SweepDp {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.125,0.25,0.375,0.5")]
        ratios: Vec<f64>,
    },
    /// Train the config's first model at several depths.
    Depth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        depths: Vec<usize>,
        #[arg(long)]
        residual: bool,
    },
    /// Time single-layer forward passes at square dimensions.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096,8192")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
    },
    /// Finite-difference check of every layer kind.
    Gradcheck {
        #[arg(long, default_value_t = 32)]
        max_dim: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Parameter and FLOP counts of each model in a config.
    Count(ConfigArgs),
    /// List the preset catalog.
    ListPresets,
    /// Run a preset and write its bundle.
    Preset {
        name: String,
        #[arg(long, default_value = "desk")]
        scale: String,
    },
}

fn fail(kind: &str, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: kind={kind} message=\"{message}\"");
    ExitCode::from(2)
}

fn output_root(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn load(args: &ConfigArgs, seed: u64) -> Result<ConfigFile, String> {
    let base = match &args.preset {
        Some(name) => {
            let jobs = presets::preset_jobs(name, Scale::Desk, seed).map_err(|e| e.to_string())?;
            jobs.into_iter()
                .find_map(|j| match j {
                    presets::Job::Compare { file, .. }
                    | presets::Job::DpSweep { file, .. }
                    | presets::Job::Depth { file, .. } => Some(file),
                    _ => None,
                })
                .ok_or_else(|| format!("preset '{name}' has no training experiment"))?
        }
        None => ConfigFile::default(),
    };
    let mut overrides = args.overrides.clone();
    overrides.push(format!("seed={seed}"));
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => String::new(),
    };
    config::parse_config_str(&text, base, &overrides).map_err(|e| match &args.config {
        Some(p) => format!("{}: {e}", p.display()),
        None => e.to_string(),
    })
}

fn run_dir(root: &Path, file: &ConfigFile) -> PathBuf {
    let base = if file.output_dir.is_empty() {
        root.join(&file.name)
    } else {
        PathBuf::from(&file.output_dir)
    };
    base.join(format!("seed{}", file.seed))
}

fn write_results(dir: &Path, file_echo: &str, results: &[RunResult], sweep: Option<SweepAxis>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), file_echo)?;
    report::emit_csv(&dir.join("metrics.csv"), results)?;
    std::fs::write(dir.join("summary.csv"), report::summary_csv(results))?;
    report::emit_svg_plot(&dir.join("fit.svg"), results, PlotKind::FitCurve)?;
    report::emit_svg_plot(
        &dir.join("loss_train.svg"),
        results,
        PlotKind::LossCurve(LossMetric::Train),
    )?;
    report::emit_svg_plot(
        &dir.join("loss_ood.svg"),
        results,
        PlotKind::LossCurve(LossMetric::OodTest),
    )?;
    if let Some(axis) = sweep {
        report::emit_svg_plot(&dir.join("sweep.svg"), results, PlotKind::Sweep(axis))?;
    }
    Ok(())
}

fn print_results(results: &[RunResult], ranking: Option<&[usize]>) {
    println!(
        "{:<20} {:>10} {:>15} {:>15} {:>15}",
        "model", "params", "train_mse", "id_mse", "ood_mse"
    );
    let order: Vec<usize> = ranking.map_or_else(|| (0..results.len()).collect(), <[usize]>::to_vec);
    for i in order {
        let r = &results[i];
        let m = r.last();
        let flag = if r.diverged() { "  (diverged)" } else { "" };
        println!(
            "{:<20} {:>10} {:>15} {:>15} {:>15}{flag}",
            r.label(),
            r.cost.exact_params,
            report::fmt_float(m.train_mse),
            report::fmt_float(m.id_test_mse),
            report::fmt_float(m.ood_test_mse)
        );
    }
}

/// Exit status for a set of finished runs.
fn finish<'a>(results: impl IntoIterator<Item = &'a RunResult>) -> ExitCode {
    let mut status = ExitCode::SUCCESS;
    for r in results {
        if let Some(d) = &r.divergence {
            eprintln!(
                "error: kind=diverged run=\"{}\" epoch={} message=\"{}\"",
                r.label(),
                d.epoch,
                d.detail
            );
            status = ExitCode::from(1);
        }
    }
    status
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = output_root(&cli);
    match &cli.command {
        Command::Train(args) | Command::Compare(args) => {
            let file = match load(args, cli.seed) {
                Ok(f) => f,
                Err(e) => return fail("config", e),
            };
            let cmp = match runner::compare(&file.runs()) {
                Ok(c) => c,
                Err(e) => return fail("config", e),
            };
            let dir = run_dir(&root, &file);
            if let Err(e) = write_results(&dir, &file.echo(), &cmp.results, None) {
                return fail("io", e);
            }
            let ranking = matches!(cli.command, Command::Compare(_)).then_some(cmp.ranking.as_slice());
            print_results(&cmp.results, ranking);
            println!("wrote {}", dir.display());
            finish(&cmp.results)
        }
        Command::SweepDp { config, ratios } => {
            let file = match load(config, cli.seed) {
                Ok(f) => f,
                Err(e) => return fail("config", e),
            };
            let rows = match runner::sweep_dp(&file.runs()[0], ratios) {
                Ok(r) => r,
                Err(e) => return fail("config", e),
            };
            let results: Vec<RunResult> = rows.into_iter().map(|(_, r)| r).collect();
            let dir = run_dir(&root, &file).join("dp-sweep");
            if let Err(e) = write_results(&dir, &file.echo(), &results, Some(SweepAxis::DpRatio)) {
                return fail("io", e);
            }
            print_results(&results, None);
            println!("wrote {}", dir.display());
            finish(&results)
        }
        Command::Depth {
            config,
            depths,
            residual,
        } => {
            let file = match load(config, cli.seed) {
                Ok(f) => f,
                Err(e) => return fail("config", e),
            };
            let rows = match runner::depth_study(&file.runs()[0], depths, *residual) {
                Ok(r) => r,
                Err(e) => return fail("config", e),
            };
            let dir = run_dir(&root, &file).join("depth");
            let csv = report::depth_csv(&rows);
            let results: Vec<RunResult> = rows.into_iter().map(|r| r.result).collect();
            let written = write_results(&dir, &file.echo(), &results, Some(SweepAxis::Depth))
                .and_then(|_| std::fs::write(dir.join("depth.csv"), &csv));
            if let Err(e) = written {
                return fail("io", e);
            }
            print!("{csv}");
            finish(&results)
        }
        Command::Bench { dims, repeats } => {
            let square: Vec<(usize, usize)> = dims.iter().map(|&d| (d, d)).collect();
            match runner::bench_runtime(&square, *repeats, cli.seed) {
                Ok(rows) => {
                    println!(
                        "{:>6} {:>6} {:<6} {:>14} {:>14} {:>12}",
                        "d_in", "d_out", "kind", "params", "flops", "median_ms"
                    );
                    for r in rows {
                        println!(
                            "{:>6} {:>6} {:<6} {:>14} {:>14} {:>12.4}",
                            r.d_in, r.d_out, r.kind, r.params_exact, r.flops_exact, r.median_ms
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail("config", e),
            }
        }
        Command::Gradcheck { max_dim, eps } => match fan::checks::layer_gradchecks(cli.seed, *max_dim, *eps) {
            Ok(rows) => {
                let mut status = ExitCode::SUCCESS;
                for r in rows {
                    let ok = r.max_rel_error < 1e-4;
                    println!(
                        "{:<10} {:>3}x{:<3} max_rel_error={:.3e} {}",
                        r.kind,
                        r.d_in,
                        r.d_out,
                        r.max_rel_error,
                        if ok { "ok" } else { "FAIL" }
                    );
                    if !ok {
                        status = ExitCode::from(1);
                    }
                }
                status
            }
            Err(e) => fail("gradcheck", e),
        },
        Command::Count(args) => {
            let file = match load(args, cli.seed) {
                Ok(f) => f,
                Err(e) => return fail("config", e),
            };
            println!(
                "{:<20} {:>12} {:>12} {:>14} {:>14}",
                "model", "params", "params_t1", "flops", "flops_t1"
            );
            for m in &file.models {
                let spec = match m.network_spec() {
                    Ok(s) => s,
                    Err(e) => return fail("config", e),
                };
                let c = count_costs(&spec);
                println!(
                    "{:<20} {:>12} {:>12} {:>14} {:>14}",
                    m.label, c.exact_params, c.table1_params, c.exact_flops, c.table1_flops
                );
            }
            ExitCode::SUCCESS
        }
        Command::ListPresets => {
            for (name, about) in presets::PRESETS {
                println!("{name:<24} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Preset { name, scale } => {
            let Some(scale) = Scale::parse(scale) else {
                return fail("config", format!("unknown scale '{scale}' (desk or paper)"));
            };
            match presets::run_preset(name, scale, cli.seed, &root) {
                Ok(bundle) => {
                    for (tag, results) in &bundle.runs {
                        println!("[{tag}]");
                        print_results(results, None);
                    }
                    println!("wrote {}", bundle.dir.display());
                    finish(bundle.diverged())
                }
                Err(e) => fail("preset", e),
            }
        }
    }
}
