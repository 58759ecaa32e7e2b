//! Declarative layer stacks and their instantiation.

use alloc::format;
use alloc::vec::Vec;

use crate::autograd::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{Activation, DenseActivation, DenseLayer, FanLayer, FsnnLayer, GatedFanLayer};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Default share of a FAN layer's output given to each periodic branch.
pub const DEFAULT_DP_RATIO: f64 = 0.25;

/// `d_p = floor(ratio · d_out)`.
pub fn dp_for_ratio(d_out: usize, ratio: f64) -> usize {
    libm::floor(ratio * d_out as f64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    /// FAN layer; `d_p̄ = d_out − 2·d_p`.
    Fan {
        d_p: usize,
        activation: Activation,
    },
    GatedFan {
        d_p: usize,
        activation: Activation,
    },
    Mlp {
        activation: Activation,
    },
    /// Affine map with a `sin` activation.
    Fnn,
    /// Affine map with the `z + sin²(z)` activation.
    Snake,
    /// `terms` learned frequencies, `2·terms` features.
    Fsnn {
        terms: usize,
    },
    /// `B + W x`, no activation.
    Linear,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Fan { .. } => "fan",
            LayerKind::GatedFan { .. } => "gated_fan",
            LayerKind::Mlp { .. } => "mlp",
            LayerKind::Fnn => "fnn",
            LayerKind::Snake => "snake",
            LayerKind::Fsnn { .. } => "fsnn",
            LayerKind::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub d_in: usize,
    pub d_out: usize,
    /// Adds the layer input to its output; only valid when `d_in == d_out`.
    pub residual: bool,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, d_in: usize, d_out: usize) -> Self {
        Self {
            kind,
            d_in,
            d_out,
            residual: false,
        }
    }

    pub fn linear(d_in: usize, d_out: usize) -> Self {
        Self::new(LayerKind::Linear, d_in, d_out)
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.residual = residual;
        self
    }

    /// `d_p̄` for FAN kinds, `None` otherwise.
    pub fn d_pbar(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Fan { d_p, .. } | LayerKind::GatedFan { d_p, .. } => self.d_out.checked_sub(2 * d_p),
            _ => None,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::Spec(format!("layer {index}: dimensions must be positive")));
        }
        match self.kind {
            LayerKind::Fan { d_p, .. } | LayerKind::GatedFan { d_p, .. } if 2 * d_p > self.d_out => {
                return Err(Error::Spec(format!(
                    "layer {index}: 2*d_p = {} exceeds d_out = {}",
                    2 * d_p,
                    self.d_out
                )));
            }
            LayerKind::Fsnn { terms: 0 } => {
                return Err(Error::Spec(format!("layer {index}: FSNN needs at least one term")));
            }
            _ => {}
        }
        if self.residual && self.d_in != self.d_out {
            return Err(Error::Spec(format!(
                "layer {index}: residual connection needs d_in == d_out, got {} -> {}",
                self.d_in, self.d_out
            )));
        }
        Ok(())
    }
}

/// Layer families used to assemble standard stacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Fan {
        dp_ratio: f64,
    },
    GatedFan {
        dp_ratio: f64,
    },
    Mlp,
    Fnn,
    Snake,
    /// `terms` per FSNN layer; `None` uses `hidden / 2`.
    Fsnn {
        terms: Option<usize>,
    },
}

impl Family {
    pub fn fan() -> Self {
        Family::Fan {
            dp_ratio: DEFAULT_DP_RATIO,
        }
    }

    fn hidden_kind(&self, d_out: usize, activation: Activation) -> LayerKind {
        match *self {
            Family::Fan { dp_ratio } => LayerKind::Fan {
                d_p: dp_for_ratio(d_out, dp_ratio),
                activation,
            },
            Family::GatedFan { dp_ratio } => LayerKind::GatedFan {
                d_p: dp_for_ratio(d_out, dp_ratio),
                activation,
            },
            Family::Mlp => LayerKind::Mlp { activation },
            Family::Fnn => LayerKind::Fnn,
            Family::Snake => LayerKind::Snake,
            Family::Fsnn { terms } => LayerKind::Fsnn {
                terms: terms.unwrap_or((d_out / 2).max(1)),
            },
        }
    }
}

/// Ordered layers; the last one is always [`LayerKind::Linear`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { layers };
        spec.validate()?;
        Ok(spec)
    }

    /// `depth − 1` hidden layers of `family` with width `hidden`, then a
    /// linear head. Residual skips are added to every dimension-matched
    /// hidden layer when `residual` is set.
    pub fn stack(
        family: Family,
        d_in: usize,
        hidden: usize,
        d_out: usize,
        depth: usize,
        activation: Activation,
        residual: bool,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Spec("network depth must be at least 1".into()));
        }
        let mut layers = Vec::with_capacity(depth);
        let mut width = d_in;
        for _ in 0..depth - 1 {
            let spec = LayerSpec::new(family.hidden_kind(hidden, activation), width, hidden)
                .with_residual(residual && width == hidden);
            layers.push(spec);
            width = hidden;
        }
        layers.push(LayerSpec::linear(width, d_out));
        Self::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::Spec("network has no layers".into()))?;
        if last.kind != LayerKind::Linear {
            return Err(Error::Spec("final layer must be linear".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
            if i > 0 && self.layers[i - 1].d_out != layer.d_in {
                return Err(Error::Spec(format!(
                    "layer {i}: input {} does not match previous output {}",
                    layer.d_in,
                    self.layers[i - 1].d_out
                )));
            }
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Fan(FanLayer),
    GatedFan(GatedFanLayer),
    Dense(DenseLayer),
    Fsnn(FsnnLayer),
}

impl Layer {
    pub fn forward<'s>(&self, tape: &mut Tape<'s>, store: &'s ParamStore, x: Var) -> Result<Var> {
        match self {
            Layer::Fan(l) => l.forward(tape, store, x),
            Layer::GatedFan(l) => l.forward(tape, store, x),
            Layer::Dense(l) => l.forward(tape, store, x),
            Layer::Fsnn(l) => l.forward(tape, store, x),
        }
    }
}

/// An instantiated [`NetworkSpec`] with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    store: ParamStore,
    layers: Vec<Layer>,
}

impl Network {
    /// Allocates and initializes every parameter from `seed`. Layers draw
    /// from one stream in order, so the result depends only on
    /// `(spec, seed)`.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            let layer = match l.kind {
                LayerKind::Fan { d_p, activation } => Layer::Fan(FanLayer::init(
                    &mut store,
                    &mut rng,
                    l.d_in,
                    d_p,
                    l.d_out - 2 * d_p,
                    activation,
                )?),
                LayerKind::GatedFan { d_p, activation } => Layer::GatedFan(GatedFanLayer::init(
                    &mut store,
                    &mut rng,
                    l.d_in,
                    d_p,
                    l.d_out - 2 * d_p,
                    activation,
                )?),
                LayerKind::Mlp { activation } => Layer::Dense(DenseLayer::init(
                    &mut store,
                    &mut rng,
                    l.d_in,
                    l.d_out,
                    DenseActivation::Standard(activation),
                )?),
                LayerKind::Fnn => Layer::Dense(DenseLayer::init(
                    &mut store,
                    &mut rng,
                    l.d_in,
                    l.d_out,
                    DenseActivation::Sine,
                )?),
                LayerKind::Snake => Layer::Dense(DenseLayer::init(
                    &mut store,
                    &mut rng,
                    l.d_in,
                    l.d_out,
                    DenseActivation::Snake,
                )?),
                LayerKind::Fsnn { terms } => {
                    Layer::Fsnn(FsnnLayer::init(&mut store, &mut rng, l.d_in, terms, l.d_out)?)
                }
                LayerKind::Linear => Layer::Dense(DenseLayer::init(
                    &mut store,
                    &mut rng,
                    l.d_in,
                    l.d_out,
                    DenseActivation::LINEAR,
                )?),
            };
            layers.push(layer);
        }
        Ok(Self {
            spec: spec.clone(),
            store,
            layers,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Records a forward pass of `x` (`d_in × batch`) on `tape`.
    pub fn forward<'s>(&'s self, tape: &mut Tape<'s>, x: Var) -> Result<Var> {
        let mut h = x;
        for (layer, spec) in self.layers.iter().zip(&self.spec.layers) {
            let out = layer.forward(tape, &self.store, h)?;
            h = if spec.residual { tape.add(out, h)? } else { out };
        }
        Ok(h)
    }

    /// Untracked forward pass.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone())?;
        let y = self.forward(&mut tape, xv)?;
        Ok(tape.value(y).clone())
    }
}
