//! First-order optimizers operating on a [`ParamStore`].

use alloc::format;
use alloc::vec::Vec;

use crate::autograd::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay and bias-corrected moments.
///
/// Each step first shrinks every parameter by `(1 − lr·weight_decay)` and
/// then applies `−lr · m̂ / (√v̂ + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    /// Creates an optimizer without moment buffers; call [`AdamW::init`]
    /// before the first step.
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// Creates an optimizer with zeroed buffers shaped after `store`.
    pub fn for_store(config: AdamWConfig, store: &ParamStore) -> Self {
        let mut opt = Self::new(config);
        opt.init(store);
        opt
    }

    pub fn init(&mut self, store: &ParamStore) {
        self.m = store.iter().map(|p| alloc::vec![0.0; p.value().len()]).collect();
        self.v = self.m.clone();
        self.t = 0;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() || store.iter().zip(&self.m).any(|(p, m)| p.value().len() != m.len()) {
            return Err(Error::Contract(format!(
                "AdamW state holds {} buffers but the store has {} parameters; call init first",
                self.m.len(),
                store.len()
            )));
        }
        let c = self.config;
        self.t += 1;
        let bias1 = 1.0 - libm::pow(c.beta1, self.t as f64);
        let bias2 = 1.0 - libm::pow(c.beta2, self.t as f64);
        let decay = 1.0 - c.lr * c.weight_decay;
        for ((param, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (values, grads) = param.value_and_grad_mut();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] *= decay;
                values[i] -= c.lr * m_hat / (libm::sqrt(v_hat) + c.eps);
            }
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `p ← p − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgdm {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgdm {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Velocity buffers are created lazily on the first step.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.velocity.len() != store.len() {
            self.velocity = store.iter().map(|p| alloc::vec![0.0; p.value().len()]).collect();
        }
        for (param, vel) in store.iter_mut().zip(&mut self.velocity) {
            let (values, grads) = param.value_and_grad_mut();
            if vel.len() != values.len() {
                return Err(Error::Contract("SGDM velocity shape changed".into()));
            }
            for i in 0..values.len() {
                vel[i] = self.momentum * vel[i] + grads[i];
                values[i] -= self.lr * vel[i];
            }
        }
        Ok(())
    }
}

/// Either optimizer behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    AdamW(AdamW),
    Sgdm(Sgdm),
}

impl Optimizer {
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        match self {
            Optimizer::AdamW(o) => o.step(store),
            Optimizer::Sgdm(o) => o.step(store),
        }
    }
}

pub fn zero_grad(store: &mut ParamStore) {
    store.zero_grad();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_store(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.push(Tensor::scalar(value));
        s
    }

    fn set_grad(store: &mut ParamStore, g: f64) {
        store.iter_mut().next().unwrap().grad_mut()[0] = g;
    }

    fn value(store: &ParamStore) -> f64 {
        store.iter().next().unwrap().value().data()[0]
    }

    #[test]
    fn zero_grad_without_decay_is_a_no_op() {
        let mut store = scalar_store(0.75);
        let mut opt = AdamW::for_store(
            AdamWConfig {
                weight_decay: 0.0,
                ..Default::default()
            },
            &store,
        );
        for _ in 0..5 {
            opt.step(&mut store).unwrap();
        }
        assert_eq!(value(&store), 0.75);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        let mut store = scalar_store(0.0);
        let config = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::for_store(config, &store);
        set_grad(&mut store, 1.0);
        opt.step(&mut store).unwrap();
        let expected = -0.1 * (1.0 / (1.0 + 1e-8));
        assert!((value(&store) - expected).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut store = scalar_store(1.0);
        let mut opt = AdamW::for_store(AdamWConfig::default(), &store);
        set_grad(&mut store, 2.0);
        let p0 = value(&store);
        opt.step(&mut store).unwrap();
        let p1 = value(&store);
        opt.step(&mut store).unwrap();
        let p2 = value(&store);
        assert!(p0 > p1 && p1 > p2);
    }

    #[test]
    fn uninitialized_state_is_a_contract_error() {
        let mut store = scalar_store(1.0);
        let mut opt = AdamW::new(AdamWConfig::default());
        assert!(matches!(opt.step(&mut store), Err(Error::Contract(_))));
    }

    #[test]
    fn weight_decay_alone_shrinks_geometrically() {
        let mut store = scalar_store(3.0);
        let config = AdamWConfig {
            lr: 0.05,
            weight_decay: 0.2,
            ..Default::default()
        };
        let mut opt = AdamW::for_store(config, &store);
        let mut expected = 3.0;
        for _ in 0..10 {
            opt.step(&mut store).unwrap();
            expected *= 1.0 - 0.05 * 0.2;
            assert_eq!(value(&store), expected);
        }
    }

    #[test]
    fn sgdm_examples() {
        let mut store = scalar_store(1.0);
        let mut plain = Sgdm::new(0.1, 0.0);
        set_grad(&mut store, 0.5);
        plain.step(&mut store).unwrap();
        assert_eq!(value(&store), 1.0 - 0.1 * 0.5);

        let mut store = scalar_store(1.0);
        let mut opt = Sgdm::new(0.1, 0.9);
        opt.step(&mut store).unwrap();
        assert_eq!(value(&store), 1.0);

        // constant g: velocity after k steps is g·(1 − μ^k)/(1 − μ)
        let mut store = scalar_store(0.0);
        let mut opt = Sgdm::new(0.01, 0.9);
        set_grad(&mut store, 2.0);
        for k in 1..=20 {
            opt.step(&mut store).unwrap();
            let expected = 2.0 * (1.0 - 0.9f64.powi(k)) / (1.0 - 0.9);
            assert!((opt.velocity()[0][0] - expected).abs() < 1e-12);
        }
    }
}
