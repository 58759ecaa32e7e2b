//! Target functions, in-domain/out-of-domain splits and a quadrature-based
//! Fourier coefficient oracle.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// `amp · sin(freq · x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
}

/// Extra built-in periodic targets addressed by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedTarget {
    /// Triangle wave with period 2π and range [−1, 1].
    Triangle,
    /// `(x mod 2π)/π − 1`.
    Sawtooth,
    /// `|sin x|`.
    AbsSin,
    /// `sin x + 0.5·cos 2x`.
    SinCosMix,
    /// `exp(sin x)`.
    ExpSin,
}

impl NamedTarget {
    pub const ALL: [NamedTarget; 5] = [
        NamedTarget::Triangle,
        NamedTarget::Sawtooth,
        NamedTarget::AbsSin,
        NamedTarget::SinCosMix,
        NamedTarget::ExpSin,
    ];

    pub fn id(self) -> &'static str {
        match self {
            NamedTarget::Triangle => "triangle",
            NamedTarget::Sawtooth => "sawtooth",
            NamedTarget::AbsSin => "abs_sin",
            NamedTarget::SinCosMix => "sin_cos_mix",
            NamedTarget::ExpSin => "exp_sin",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Error::Config(format!("unknown target id '{id}'")))
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            NamedTarget::Triangle => {
                let u = modulo(x, 2.0 * PI) / (2.0 * PI);
                // 0 at u = 0, peaks at u = 1/4, trough at u = 3/4
                if u < 0.25 {
                    4.0 * u
                } else if u < 0.75 {
                    2.0 - 4.0 * u
                } else {
                    4.0 * u - 4.0
                }
            }
            NamedTarget::Sawtooth => modulo(x, 2.0 * PI) / PI - 1.0,
            NamedTarget::AbsSin => libm::fabs(libm::sin(x)),
            NamedTarget::SinCosMix => libm::sin(x) + 0.5 * libm::cos(2.0 * x),
            NamedTarget::ExpSin => libm::exp(libm::sin(x)),
        }
    }

    fn period(self) -> f64 {
        match self {
            NamedTarget::AbsSin => PI,
            _ => 2.0 * PI,
        }
    }
}

/// Closed-form scalar targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `sin(freq · x)`.
    Sin {
        freq: f64,
    },
    SumSinusoids(Vec<Sinusoid>),
    /// `x mod k`, the non-negative remainder in `[0, k)`.
    Mod {
        k: f64,
    },
    /// `exp(sin²(πx) + cos x + (x mod 3) − 1)`, the `−1` inside the exponent.
    ComplexPeriodicA,
    /// `exp(sin²(πx) + cos x + (x mod 3)) − 1`, the `−1` outside.
    ComplexPeriodicB,
    /// `+1` on the first half of each period, `−1` on the second, `0` at
    /// the jumps.
    SquareWave {
        period: f64,
    },
    /// `slope · x + intercept`; not periodic, used for sanity fits.
    Affine {
        slope: f64,
        intercept: f64,
    },
    Named(NamedTarget),
}

/// Non-negative remainder: `x mod k ∈ [0, k)` for `k > 0`.
pub fn modulo(x: f64, k: f64) -> f64 {
    let r = x - k * libm::floor(x / k);
    // floor rounding can land exactly on k for tiny negative x
    if r >= k {
        0.0
    } else {
        r
    }
}

impl Target {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Target::Sin { freq } => libm::sin(freq * x),
            Target::SumSinusoids(terms) => terms.iter().map(|s| s.amp * libm::sin(s.freq * x + s.phase)).sum(),
            Target::Mod { k } => modulo(x, *k),
            Target::ComplexPeriodicA => libm::exp(complex_exponent(x) - 1.0),
            Target::ComplexPeriodicB => libm::exp(complex_exponent(x)) - 1.0,
            Target::SquareWave { period } => {
                let u = modulo(x, *period) / period;
                if u == 0.0 || u == 0.5 {
                    0.0
                } else if u < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
            Target::Affine { slope, intercept } => slope * x + intercept,
            Target::Named(t) => t.eval(x),
        }
    }

    /// Fundamental period when the target has one and it is known in
    /// closed form. The complex-periodic targets mix the incommensurate
    /// periods 1, 3 and 2π, so they report `None`.
    pub fn period(&self) -> Option<f64> {
        match self {
            Target::Sin { freq } if *freq != 0.0 => Some(2.0 * PI / libm::fabs(*freq)),
            Target::Mod { k } => Some(*k),
            Target::SquareWave { period } => Some(*period),
            Target::Named(t) => Some(t.period()),
            _ => None,
        }
    }
}

fn complex_exponent(x: f64) -> f64 {
    let s = libm::sin(PI * x);
    s * s + libm::cos(x) + modulo(x, 3.0)
}

/// `eval_target` as a free function.
pub fn eval_target(target: &Target, x: f64) -> f64 {
    target.eval(x)
}

/// Sampling layout for a scalar periodicity task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: (f64, f64),
    pub test: (f64, f64),
    pub points_per_period: usize,
    pub period: f64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.train;
        let (tlo, thi) = self.test;
        if self.points_per_period == 0 {
            return Err(Error::Config("points_per_period must be positive".into()));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config("period must be positive and finite".into()));
        }
        if !(lo < hi && tlo <= lo && hi <= thi) {
            return Err(Error::Config(format!(
                "train interval [{lo}, {hi}] must lie inside test interval [{tlo}, {thi}]"
            )));
        }
        if !(tlo < lo || hi < thi) {
            return Err(Error::Config("out-of-domain region is empty".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.period / self.points_per_period as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Train,
    IdTest,
    OodTest,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Train, Region::IdTest, Region::OodTest];

    pub fn name(self) -> &'static str {
        match self {
            Region::Train => "train",
            Region::IdTest => "id_test",
            Region::OodTest => "ood_test",
        }
    }
}

/// Materialized `(x, y)` pairs. `inputs` is `d × n`, `targets` is `1 × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub regions: Vec<Region>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.rows()
    }

    pub fn count(&self, region: Region) -> usize {
        self.regions.iter().filter(|&&r| r == region).count()
    }

    pub fn indices(&self, region: Region) -> Vec<usize> {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == region)
            .map(|(i, _)| i)
            .collect()
    }

    /// Columns for the listed point indices, as `(inputs, targets)`.
    pub fn select(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let d = self.input_dim();
        let x = Tensor::from_fn(d, indices.len(), |r, c| self.inputs.get(r, indices[c]));
        let y = Tensor::from_fn(1, indices.len(), |_, c| self.targets.get(0, indices[c]));
        (x, y)
    }

    pub fn subset(&self, region: Region) -> (Tensor, Tensor) {
        self.select(&self.indices(region))
    }
}

/// Uniform grid over the test interval at `points_per_period` points per
/// `period`, cell-centred so that no grid point falls on an interval
/// boundary. Grid points inside the train interval are tagged
/// [`Region::Train`], the rest [`Region::OodTest`]. In-domain test points
/// sit half a step to the right of each training point (when still inside
/// the train interval). Points are returned sorted by `x`.
pub fn generate_dataset(target: &Target, split: &SplitSpec) -> Result<Dataset> {
    split.validate()?;
    let step = split.step();
    let (tlo, thi) = split.test;
    let (lo, hi) = split.train;
    let cells = (thi - tlo) / step;
    let n = if libm::fabs(cells - libm::round(cells)) < 1e-6 {
        libm::round(cells) as usize
    } else {
        libm::floor(cells) as usize
    };

    let mut points: Vec<(f64, Region)> = Vec::with_capacity(n + n / 2);
    for i in 0..n {
        let x = tlo + (i as f64 + 0.5) * step;
        if lo <= x && x < hi {
            points.push((x, Region::Train));
            let held_out = x + 0.5 * step;
            if held_out < hi {
                points.push((held_out, Region::IdTest));
            }
        } else {
            points.push((x, Region::OodTest));
        }
    }
    // already ascending: each held-out point precedes the next grid point
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| target.eval(x)).collect();
    Ok(Dataset {
        inputs: Tensor::row(&xs),
        targets: Tensor::row(&ys),
        regions: points.into_iter().map(|p| p.1).collect(),
    })
}

/// Smooth multivariate formulas for the symbolic-regression smoke task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolicFormula {
    /// `exp(sin(πx) + y²)`
    ExpSinPiXPlusY2,
    /// `x·y`
    Product,
    /// `x² + y²`
    Bowl,
    /// `exp((sin(π(x²+y²)) + sin(π(z²+w²)))/2)`
    ExpSinSum4,
}

impl SymbolicFormula {
    pub const ALL: [SymbolicFormula; 4] = [
        SymbolicFormula::ExpSinPiXPlusY2,
        SymbolicFormula::Product,
        SymbolicFormula::Bowl,
        SymbolicFormula::ExpSinSum4,
    ];

    pub fn id(self) -> &'static str {
        match self {
            SymbolicFormula::ExpSinPiXPlusY2 => "exp_sin_pix_y2",
            SymbolicFormula::Product => "xy",
            SymbolicFormula::Bowl => "bowl",
            SymbolicFormula::ExpSinSum4 => "exp_sin_sum4",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.id() == id)
            .ok_or_else(|| Error::Config(format!("unknown symbolic formula '{id}'")))
    }

    pub fn dim(self) -> usize {
        match self {
            SymbolicFormula::ExpSinSum4 => 4,
            _ => 2,
        }
    }

    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            SymbolicFormula::ExpSinPiXPlusY2 => libm::exp(libm::sin(PI * v[0]) + v[1] * v[1]),
            SymbolicFormula::Product => v[0] * v[1],
            SymbolicFormula::Bowl => v[0] * v[0] + v[1] * v[1],
            SymbolicFormula::ExpSinSum4 => {
                let a = libm::sin(PI * (v[0] * v[0] + v[1] * v[1]));
                let b = libm::sin(PI * (v[2] * v[2] + v[3] * v[3]));
                libm::exp(0.5 * (a + b))
            }
        }
    }
}

/// Uniform samples in `[−1, 1]^d`: `n_train` points tagged
/// [`Region::Train`] followed by `n_test` independent draws tagged
/// [`Region::IdTest`].
pub fn symbolic_dataset(formula: SymbolicFormula, seed: u64, n_train: usize, n_test: usize) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let d = formula.dim();
    let n = n_train + n_test;
    let mut cols: Vec<f64> = Vec::with_capacity(d * n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let start = cols.len();
        for _ in 0..d {
            cols.push(rng.uniform(-1.0, 1.0));
        }
        ys.push(formula.eval(&cols[start..]));
    }
    let inputs = Tensor::from_fn(d, n, |r, c| cols[c * d + r]);
    let mut regions = alloc::vec![Region::Train; n_train];
    regions.resize(n, Region::IdTest);
    Dataset {
        inputs,
        targets: Tensor::row(&ys),
        regions,
    }
}

/// Truncated Fourier series `a0 + Σ a_n cos(2πnx/T) + b_n sin(2πnx/T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    pub period: f64,
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FourierSeries {
    pub fn terms(&self) -> usize {
        self.a.len()
    }

    /// Direct summation of the series at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let w = 2.0 * PI / self.period;
        let mut y = self.a0;
        for n in 1..=self.terms() {
            let arg = w * n as f64 * x;
            y += self.a[n - 1] * libm::cos(arg) + self.b[n - 1] * libm::sin(arg);
        }
        y
    }

    /// Angular frequencies `2πn/T`, `n = 1..=N`.
    pub fn angular_frequencies(&self) -> Vec<f64> {
        (1..=self.terms()).map(|n| 2.0 * PI * n as f64 / self.period).collect()
    }
}

/// Panels used by [`fourier_coefficients`]; a multiple of 4 so that the
/// half period is an even Simpson node.
pub const QUADRATURE_PANELS: usize = 20_000;

/// Fourier coefficients over one period `[0, T)` by composite Simpson
/// quadrature: `a0 = (1/T)∫f`, `a_n = (2/T)∫f·cos(2πnx/T)`,
/// `b_n = (2/T)∫f·sin(2πnx/T)`.
pub fn fourier_coefficients(target: &Target, period: f64, terms: usize) -> Result<FourierSeries> {
    if terms < 1 {
        return Err(Error::Config("at least one Fourier term is required".into()));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Config("period must be positive and finite".into()));
    }
    let panels = QUADRATURE_PANELS;
    let h = period / panels as f64;
    let samples: Vec<f64> = (0..=panels).map(|i| target.eval(i as f64 * h)).collect();
    let simpson = |weight: &dyn Fn(f64) -> f64| -> f64 {
        let mut acc = 0.0;
        for (i, &f) in samples.iter().enumerate() {
            let c = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += c * f * weight(i as f64 * h);
        }
        acc * h / 3.0
    };
    let w = 2.0 * PI / period;
    let a0 = simpson(&|_| 1.0) / period;
    let mut a = Vec::with_capacity(terms);
    let mut b = Vec::with_capacity(terms);
    for n in 1..=terms {
        let k = w * n as f64;
        a.push(2.0 / period * simpson(&|x| libm::cos(k * x)));
        b.push(2.0 / period * simpson(&|x| libm::sin(k * x)));
    }
    Ok(FourierSeries { period, a0, a, b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_periodic_at_zero() {
        assert_eq!(Target::ComplexPeriodicA.eval(0.0), 1.0);
        assert_eq!(Target::ComplexPeriodicB.eval(0.0), libm::exp(1.0) - 1.0);
    }

    #[test]
    fn modulo_is_non_negative() {
        assert_eq!(Target::Mod { k: 5.0 }.eval(7.0), 2.0);
        assert_eq!(Target::Mod { k: 5.0 }.eval(-3.0), 2.0);
        assert_eq!(modulo(-1e-300, 3.0), 0.0);
        for i in -50..50 {
            let r = modulo(i as f64 * 0.37, 3.0);
            assert!((0.0..3.0).contains(&r));
        }
    }

    #[test]
    fn sin_at_half_pi() {
        assert_eq!(Target::Sin { freq: 1.0 }.eval(PI / 2.0), 1.0);
    }

    #[test]
    fn named_targets_are_periodic() {
        for t in NamedTarget::ALL {
            assert_eq!(NamedTarget::from_id(t.id()).unwrap(), t);
            let target = Target::Named(t);
            let p = target.period().unwrap();
            for i in 0..20 {
                let x = -3.0 + 0.31 * i as f64;
                assert!((target.eval(x) - target.eval(x + 3.0 * p)).abs() < 1e-9, "{t:?}");
            }
        }
        assert!(NamedTarget::from_id("nope").is_err());
    }

    #[test]
    fn grid_counts_follow_interval_arithmetic() {
        let target = Target::Sin { freq: 1.0 };
        // 200 points per 2π period = a grid step of π/100
        let split = SplitSpec {
            train: (-2.0 * PI, 2.0 * PI),
            test: (-8.0 * PI, 8.0 * PI),
            points_per_period: 200,
            period: 2.0 * PI,
        };
        let ds = generate_dataset(&target, &split).unwrap();
        assert_eq!(ds.count(Region::Train), 400);
        assert_eq!(ds.count(Region::OodTest), 1200);
        assert_eq!(ds.count(Region::IdTest), 399);

        let split = SplitSpec {
            points_per_period: 100,
            ..split
        };
        let ds = generate_dataset(&target, &split).unwrap();
        assert_eq!(ds.count(Region::Train), 200);
        assert_eq!(ds.count(Region::OodTest), 600);
    }

    #[test]
    fn tags_respect_intervals_and_targets_are_exact() {
        let target = Target::ComplexPeriodicA;
        let split = SplitSpec {
            train: (-5.0, 7.5),
            test: (-12.0, 12.0),
            points_per_period: 37,
            period: 3.0,
        };
        let ds = generate_dataset(&target, &split).unwrap();
        let xs = ds.inputs.data();
        for (i, r) in ds.regions.iter().enumerate() {
            let x = xs[i];
            let inside = (-5.0..7.5).contains(&x);
            match r {
                Region::Train | Region::IdTest => assert!(inside),
                Region::OodTest => assert!(!inside && (-12.0..12.0).contains(&x)),
            }
            assert_eq!(ds.targets.data()[i], target.eval(x));
        }
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(generate_dataset(&target, &split).unwrap(), ds);
    }

    #[test]
    fn invalid_splits_are_config_errors() {
        let good = SplitSpec {
            train: (-1.0, 1.0),
            test: (-2.0, 2.0),
            points_per_period: 10,
            period: 1.0,
        };
        assert!(good.validate().is_ok());
        let zero = SplitSpec {
            points_per_period: 0,
            ..good
        };
        assert!(matches!(
            generate_dataset(&Target::Sin { freq: 1.0 }, &zero),
            Err(Error::Config(_))
        ));
        let no_ood = SplitSpec {
            test: (-1.0, 1.0),
            ..good
        };
        assert!(no_ood.validate().is_err());
        let outside = SplitSpec {
            train: (-3.0, 1.0),
            ..good
        };
        assert!(outside.validate().is_err());
    }

    #[test]
    fn symbolic_examples() {
        let ds = symbolic_dataset(SymbolicFormula::ExpSinPiXPlusY2, 3, 30, 10);
        assert_eq!(ds.count(Region::Train), 30);
        assert_eq!(ds.count(Region::IdTest), 10);
        assert!(ds.inputs.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(ds, symbolic_dataset(SymbolicFormula::ExpSinPiXPlusY2, 3, 30, 10));
        assert_eq!(SymbolicFormula::ExpSinPiXPlusY2.eval(&[0.0, 0.0]), 1.0);
        assert!(SymbolicFormula::from_id("bessel").is_err());
        let four = symbolic_dataset(SymbolicFormula::ExpSinSum4, 1, 5, 5);
        assert_eq!(four.input_dim(), 4);
        let c = four.inputs.column_at(2);
        assert_eq!(four.targets.data()[2], SymbolicFormula::ExpSinSum4.eval(c.data()));
    }

    #[test]
    fn coefficients_of_a_pure_sine_and_a_constant() {
        let t = 3.0;
        let target = Target::Sin { freq: 2.0 * PI / t };
        let s = fourier_coefficients(&target, t, 5).unwrap();
        assert!((s.b[0] - 1.0).abs() < 1e-8);
        assert!(s.a0.abs() < 1e-8);
        for n in 0..5 {
            assert!(s.a[n].abs() < 1e-8);
            if n > 0 {
                assert!(s.b[n].abs() < 1e-8);
            }
        }

        let c = fourier_coefficients(
            &Target::Affine {
                slope: 0.0,
                intercept: 2.5,
            },
            1.7,
            3,
        )
        .unwrap();
        assert!((c.a0 - 2.5).abs() < 1e-12);
        assert!(c.a.iter().chain(&c.b).all(|v| v.abs() < 1e-8));
        assert!(fourier_coefficients(&target, t, 0).is_err());
    }

    #[test]
    fn square_wave_matches_textbook_series() {
        let s = fourier_coefficients(&Target::SquareWave { period: 2.0 * PI }, 2.0 * PI, 16).unwrap();
        for n in 1..=16 {
            let expected = if n % 2 == 1 { 4.0 / (n as f64 * PI) } else { 0.0 };
            assert!((s.b[n - 1] - expected).abs() < 1e-6, "b_{n}");
            assert!(s.a[n - 1].abs() < 1e-6, "a_{n}");
        }
        assert!(s.a0.abs() < 1e-9);
    }

    #[test]
    fn reconstruction_error_does_not_grow_with_terms() {
        let target = Target::Named(NamedTarget::ExpSin);
        let xs: Vec<f64> = (0..500).map(|i| i as f64 * 2.0 * PI / 500.0).collect();
        let mut prev = f64::INFINITY;
        for n in [1, 2, 4, 8, 16] {
            let s = fourier_coefficients(&target, 2.0 * PI, n).unwrap();
            let mse = xs.iter().map(|&x| (target.eval(x) - s.eval(x)).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!(mse <= prev, "N={n}: {mse} > {prev}");
            prev = mse;
        }
    }
}
