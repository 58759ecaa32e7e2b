//! Full-batch training, evaluation and the multi-run studies built on it.

use std::fmt;
use std::time::Instant;

use fan_core::{
    count_costs, generate_dataset, Activation, CostReport, Dataset, DenseActivation, DenseLayer, FanLayer, LayerKind,
    LayerSpec, Network, Optimizer, ParamStore, Region, SeededRng, Tape, Tensor,
};

use crate::config::{short_hash, ConfigError, ExperimentConfig};

/// Losses on every region at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub id_test_mse: f64,
    pub ood_test_mse: f64,
    pub train_mae: f64,
    pub id_test_mae: f64,
    pub ood_test_mae: f64,
    /// Training time so far; 0 unless the config asks for wall time.
    pub wall_ms: f64,
}

impl MetricsRecord {
    fn is_finite(&self) -> bool {
        [
            self.train_mse,
            self.id_test_mse,
            self.ood_test_mse,
            self.train_mae,
            self.id_test_mae,
            self.ood_test_mae,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// Epoch whose update or evaluation produced the non-finite value.
    pub epoch: usize,
    pub detail: String,
}

/// Target and prediction over the whole test grid, sorted by `x`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitCurve {
    pub x: Vec<f64>,
    pub target: Vec<f64>,
    pub prediction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub history: Vec<MetricsRecord>,
    pub cost: CostReport,
    /// Hash of the final parameter values.
    pub params_id: String,
    pub config_hash: String,
    /// Set when the run was aborted; `history` then ends at the last
    /// finite record.
    pub divergence: Option<Divergence>,
    /// Predictions of the last finite evaluation.
    pub fit: FitCurve,
}

impl RunResult {
    pub fn label(&self) -> &str {
        &self.config.model.label
    }

    pub fn last(&self) -> &MetricsRecord {
        self.history.last().expect("history holds the initial record")
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    /// Non-finite loss or prediction; carries the partial result.
    Diverged(Box<RunResult>),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Diverged(r) => {
                let d = r.divergence.as_ref().expect("diverged run");
                write!(f, "run '{}' diverged at epoch {}: {}", r.label(), d.epoch, d.detail)
            }
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<fan_core::Error> for RunError {
    fn from(e: fan_core::Error) -> Self {
        RunError::Config(e.into())
    }
}

/// MSE and MAE over the points tagged `region`.
pub fn evaluate(network: &Network, dataset: &Dataset, region: Region) -> Result<(f64, f64), fan_core::Error> {
    let idx = dataset.indices(region);
    if idx.is_empty() {
        return Err(fan_core::Error::Contract(format!("region {} is empty", region.name())));
    }
    let (x, y) = dataset.select(&idx);
    let pred = network.predict(&x)?;
    Ok(losses(pred.data().iter().zip(y.data()).map(|(p, t)| p - t)))
}

fn losses(residuals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
    for r in residuals {
        sq += r * r;
        abs += r.abs();
        n += 1;
    }
    (sq / n as f64, abs / n as f64)
}

fn region_losses(pred: &Tensor, dataset: &Dataset, region: Region) -> (f64, f64) {
    let t = dataset.targets.data();
    losses(
        dataset
            .regions
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == region)
            .map(|(i, _)| pred.data()[i] - t[i]),
    )
}

fn params_id(store: &ParamStore) -> String {
    let bytes: Vec<u8> = store
        .iter()
        .flat_map(|p| p.value().data().iter().flat_map(|v| v.to_le_bytes()))
        .collect();
    short_hash(&bytes)
}

fn step(network: &mut Network, optimizer: &mut Optimizer, x: &Tensor, y: &Tensor) -> Result<(), fan_core::Error> {
    network.store_mut().zero_grad();
    let grads = {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone())?;
        let out = network.forward(&mut tape, xv)?;
        let target = tape.constant(y.clone())?;
        let loss = tape.mse_loss(out, target)?;
        tape.backward(loss)?
    };
    grads.accumulate_into(network.store_mut())?;
    optimizer.step(network.store_mut())
}

/// Trains one network full-batch for `config.epochs` epochs.
///
/// Metrics are recorded before the first update and after every
/// `eval_every` epochs, giving `floor(epochs / eval_every) + 1` records.
pub fn train(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let spec = config.model.network_spec()?;
    let dataset = generate_dataset(&config.task.target()?, &config.task.split())?;
    let (x_train, y_train) = dataset.subset(Region::Train);
    let mut network = Network::build(&spec, config.seed)?;
    let mut optimizer = config.optimizer.build()?;
    if let Optimizer::AdamW(a) = &mut optimizer {
        a.init(network.store());
    }

    let start = Instant::now();
    let wall = |start: &Instant| {
        if config.record_wall_time {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let observe = |network: &Network, epoch: usize, wall_ms: f64| -> Result<(MetricsRecord, Tensor), String> {
        let pred = network.predict(&dataset.inputs).map_err(|e| e.to_string())?;
        let (train_mse, train_mae) = region_losses(&pred, &dataset, Region::Train);
        let (id_test_mse, id_test_mae) = region_losses(&pred, &dataset, Region::IdTest);
        let (ood_test_mse, ood_test_mae) = region_losses(&pred, &dataset, Region::OodTest);
        let record = MetricsRecord {
            epoch,
            train_mse,
            id_test_mse,
            ood_test_mse,
            train_mae,
            id_test_mae,
            ood_test_mae,
            wall_ms,
        };
        if record.is_finite() {
            Ok((record, pred))
        } else {
            Err("non-finite evaluation loss".into())
        }
    };

    let (first, mut last_pred) = observe(&network, 0, 0.0)
        .map_err(|detail| fan_core::Error::Contract(format!("initial evaluation failed: {detail}")))?;
    let mut history = vec![first];
    let mut divergence = None;
    for epoch in 1..=config.epochs {
        if let Err(e) = step(&mut network, &mut optimizer, &x_train, &y_train) {
            divergence = Some(Divergence {
                epoch,
                detail: format!("training step: {e}"),
            });
            break;
        }
        if epoch % config.eval_every == 0 {
            match observe(&network, epoch, wall(&start)) {
                Ok((record, pred)) => {
                    history.push(record);
                    last_pred = pred;
                }
                Err(detail) => {
                    divergence = Some(Divergence {
                        epoch,
                        detail: format!("evaluation: {detail}"),
                    });
                    break;
                }
            }
        }
    }

    let result = RunResult {
        config: config.clone(),
        history,
        cost: count_costs(&spec),
        params_id: params_id(network.store()),
        config_hash: config.hash(),
        divergence,
        fit: FitCurve {
            x: dataset.inputs.data().to_vec(),
            target: dataset.targets.data().to_vec(),
            prediction: last_pred.into_data(),
        },
    };
    if result.divergence.is_some() {
        Err(RunError::Diverged(Box::new(result)))
    } else {
        Ok(result)
    }
}

/// Like [`train`], but hands back diverged runs as flagged results.
pub fn train_flagged(config: &ExperimentConfig) -> Result<RunResult, ConfigError> {
    match train(config) {
        Ok(r) => Ok(r),
        Err(RunError::Diverged(r)) => Ok(*r),
        Err(RunError::Config(e)) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// One result per config, in config order.
    pub results: Vec<RunResult>,
    /// Indices into `results`, best final OOD MSE first; diverged runs last.
    pub ranking: Vec<usize>,
}

/// Runs every config on their shared task and ranks them by OOD MSE.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison, ConfigError> {
    let Some(first) = configs.first() else {
        return Err(ConfigError::Invalid("nothing to compare".into()));
    };
    if let Some(c) = configs.iter().find(|c| c.task != first.task) {
        return Err(ConfigError::Invalid(format!(
            "model '{}' uses a different task than '{}'",
            c.model.label, first.model.label
        )));
    }
    let results = configs.iter().map(train_flagged).collect::<Result<Vec<_>, _>>()?;
    let mut ranking: Vec<usize> = (0..results.len()).collect();
    ranking.sort_by(|&a, &b| {
        let key = |r: &RunResult| (r.diverged(), r.last().ood_test_mse);
        let (ka, kb) = (key(&results[a]), key(&results[b]));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    });
    Ok(Comparison { results, ranking })
}

/// One run per ratio with `d_p = floor(ratio · hidden)`.
pub fn sweep_dp(base: &ExperimentConfig, ratios: &[f64]) -> Result<Vec<(f64, RunResult)>, ConfigError> {
    if !matches!(base.model.family.as_str(), "fan" | "gated_fan") {
        return Err(ConfigError::Invalid("d_p sweeps need a FAN model".into()));
    }
    let configs = ratios
        .iter()
        .map(|&ratio| {
            if !(0.0..=0.5).contains(&ratio) {
                return Err(ConfigError::Invalid(format!(
                    "d_p ratio {ratio} outside [0, 0.5]; d_pbar would be negative"
                )));
            }
            let mut c = base.clone();
            c.model.dp_ratio = ratio;
            c.model.label = format!("{}_dp{ratio}", base.model.family);
            Ok(c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    configs
        .iter()
        .map(|c| Ok((c.model.dp_ratio, train_flagged(c)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRow {
    pub depth: usize,
    pub params: u64,
    pub best_train_mse: f64,
    /// Lowest MSE over the union of both test regions.
    pub best_test_mse: f64,
    pub result: RunResult,
}

/// One run per depth (hidden layers before the head).
pub fn depth_study(base: &ExperimentConfig, depths: &[usize], residual: bool) -> Result<Vec<DepthRow>, ConfigError> {
    if depths.contains(&0) {
        return Err(ConfigError::Invalid("depths must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &depth in depths {
        let mut c = base.clone();
        c.model.depth = depth;
        c.model.residual = residual;
        c.model.label = format!("{}_depth{depth}", base.model.family);
        let result = train_flagged(&c)?;
        let split = c.task.split();
        let dataset = generate_dataset(&c.task.target()?, &split)?;
        let (n_id, n_ood) = (
            dataset.count(Region::IdTest) as f64,
            dataset.count(Region::OodTest) as f64,
        );
        let best_train_mse = result.history.iter().map(|r| r.train_mse).fold(f64::INFINITY, f64::min);
        let best_test_mse = result
            .history
            .iter()
            .map(|r| (r.id_test_mse * n_id + r.ood_test_mse * n_ood) / (n_id + n_ood))
            .fold(f64::INFINITY, f64::min);
        rows.push(DepthRow {
            depth,
            params: result.cost.exact_params,
            best_train_mse,
            best_test_mse,
            result,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub d_in: usize,
    pub d_out: usize,
    pub kind: &'static str,
    pub params_exact: u64,
    pub flops_exact: u64,
    pub matmul_flops: u64,
    /// Median over the timed forward passes of one input vector.
    pub median_ms: f64,
}

enum BenchLayer {
    Fan(FanLayer),
    Dense(DenseLayer),
}

/// Times single-layer forward passes of FAN and MLP layers.
pub fn bench_runtime(dims: &[(usize, usize)], repeats: usize, seed: u64) -> Result<Vec<BenchRow>, ConfigError> {
    if dims.iter().any(|&(a, b)| a == 0 || b == 0) {
        return Err(ConfigError::Invalid("benchmark dimensions must be positive".into()));
    }
    let repeats = repeats.max(1);
    let mut rows = Vec::new();
    for &(d_in, d_out) in dims {
        let d_p = fan_core::network::dp_for_ratio(d_out, fan_core::network::DEFAULT_DP_RATIO);
        let kinds = [
            LayerKind::Mlp {
                activation: Activation::Gelu,
            },
            LayerKind::Fan {
                d_p,
                activation: Activation::Gelu,
            },
        ];
        for kind in kinds {
            let spec = LayerSpec::new(kind, d_in, d_out);
            let cost = fan_core::cost::layer_cost(&spec);
            let mut store = ParamStore::new();
            let mut rng = SeededRng::new(seed);
            let layer = match kind {
                LayerKind::Fan { d_p, activation } => BenchLayer::Fan(FanLayer::init(
                    &mut store,
                    &mut rng,
                    d_in,
                    d_p,
                    d_out - 2 * d_p,
                    activation,
                )?),
                _ => BenchLayer::Dense(DenseLayer::init(
                    &mut store,
                    &mut rng,
                    d_in,
                    d_out,
                    DenseActivation::Standard(Activation::Gelu),
                )?),
            };
            let input = Tensor::from_fn(d_in, 1, |r, _| ((r % 17) as f64 - 8.0) / 8.0);
            let mut times = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let t0 = Instant::now();
                let mut tape = Tape::new();
                let x = tape.constant(input.clone())?;
                let y = match &layer {
                    BenchLayer::Fan(l) => l.forward(&mut tape, &store, x)?,
                    BenchLayer::Dense(l) => l.forward(&mut tape, &store, x)?,
                };
                std::hint::black_box(tape.value(y));
                times.push(t0.elapsed().as_secs_f64() * 1e3);
            }
            times.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                d_in,
                d_out,
                kind: kind.name(),
                params_exact: cost.exact_params,
                flops_exact: cost.exact_flops(fan_core::cost::DEFAULT_FLOPS_NONLINEAR),
                matmul_flops: cost.exact_matmul_flops,
                median_ms: times[times.len() / 2],
            });
        }
    }
    Ok(rows)
}

/// Hidden width of a `family` stack whose exact parameter count is closest
/// to `target_params`; ties go to the narrower width.
pub fn matched_hidden(model: &crate::config::ModelConfig, target_params: u64) -> Result<usize, ConfigError> {
    let params = |h: usize| -> Result<u64, ConfigError> {
        let mut m = model.clone();
        m.hidden = h;
        Ok(count_costs(&m.network_spec()?).exact_params)
    };
    let mut best = (u64::MAX, 1);
    for h in 1..=4096 {
        let p = params(h)?;
        let gap = p.abs_diff(target_params);
        if gap < best.0 {
            best = (gap, h);
        }
        if p > target_params {
            break;
        }
    }
    Ok(best.1)
}
