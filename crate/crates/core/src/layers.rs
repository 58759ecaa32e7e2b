//! The layer zoo.
//!
//! Every layer maps a `d_in × batch` input to a `d_out × batch` output and
//! keeps its weights in a shared [`ParamStore`]:
//!
//! | layer            | output                                                     |
//! |------------------|------------------------------------------------------------|
//! | [`FanLayer`]     | `[cos(W_p x) ; sin(W_p x) ; σ(B_p̄ + W_p̄ x)]`               |
//! | [`GatedFanLayer`]| `[g·cos(W_p x) ; g·sin(W_p x) ; (1−g)·σ(B_p̄ + W_p̄ x)]`     |
//! | [`DenseLayer`]   | `act(B + W x)` for MLP (σ), FNN (sin), Snake, linear      |
//! | [`FsnnLayer`]    | `B + W_out [cos(W_in x) ; sin(W_in x)]`                    |
//!
//! Fresh weights are drawn uniformly from `±1/√fan_in`; biases start at zero
//! and the gate logit at zero (g = 0.5).

use alloc::format;

use crate::autograd::{ParamId, ParamStore, Tape, Unary, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Activation of the non-periodic branch of FAN layers and of MLP layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
    Identity,
}

impl Activation {
    fn unary(self) -> Option<Unary> {
        match self {
            Activation::Gelu => Some(Unary::Gelu),
            Activation::Relu => Some(Unary::Relu),
            Activation::Identity => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

fn apply(tape: &mut Tape<'_>, x: Var, f: Option<Unary>) -> Result<Var> {
    match f {
        Some(f) => tape.unary(x, f),
        None => Ok(x),
    }
}

pub(crate) fn init_weight(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    let bound = if cols == 0 { 0.0 } else { 1.0 / libm::sqrt(cols as f64) };
    Tensor::from_fn(rows, cols, |_, _| rng.uniform(-bound, bound))
}

fn check_input(op: &'static str, tape: &Tape<'_>, x: Var, d_in: usize) -> Result<()> {
    let shape = tape.shape(x);
    if shape.0 != d_in {
        return Err(Error::Dimension {
            op,
            lhs: (d_in, shape.1),
            rhs: shape,
        });
    }
    Ok(())
}

fn expect_shape(what: &str, t: &Tensor, shape: (usize, usize)) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Spec(format!(
            "{what} must be {}x{}, got {}x{}",
            shape.0,
            shape.1,
            t.rows(),
            t.cols()
        )));
    }
    Ok(())
}

/// FAN layer: periodic projection `W_p` (`d_p × d_in`) shared by the cos and
/// sin branches, plus an activated affine branch (`d_p̄` rows).
#[derive(Debug, Clone, PartialEq)]
pub struct FanLayer {
    pub w_p: ParamId,
    pub w_pbar: ParamId,
    pub b_pbar: ParamId,
    pub activation: Activation,
    d_in: usize,
    d_p: usize,
    d_pbar: usize,
}

impl FanLayer {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut SeededRng,
        d_in: usize,
        d_p: usize,
        d_pbar: usize,
        activation: Activation,
    ) -> Result<Self> {
        let w_p = init_weight(rng, d_p, d_in);
        let w_pbar = init_weight(rng, d_pbar, d_in);
        Self::from_tensors(store, w_p, w_pbar, Tensor::zeros(d_pbar, 1), activation)
    }

    /// Registers explicit weights. `w_p` is `d_p × d_in`, `w_pbar` is
    /// `d_p̄ × d_in` and `b_pbar` is `d_p̄ × 1`.
    pub fn from_tensors(
        store: &mut ParamStore,
        w_p: Tensor,
        w_pbar: Tensor,
        b_pbar: Tensor,
        activation: Activation,
    ) -> Result<Self> {
        let d_in = w_p.cols();
        let (d_p, d_pbar) = (w_p.rows(), w_pbar.rows());
        if d_p == 0 && d_pbar == 0 {
            return Err(Error::Spec("FAN layer needs d_p > 0 or d_pbar > 0".into()));
        }
        expect_shape("W_pbar", &w_pbar, (d_pbar, d_in))?;
        expect_shape("B_pbar", &b_pbar, (d_pbar, 1))?;
        Ok(Self {
            w_p: store.push(w_p),
            w_pbar: store.push(w_pbar),
            b_pbar: store.push(b_pbar),
            activation,
            d_in,
            d_p,
            d_pbar,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_p(&self) -> usize {
        self.d_p
    }

    pub fn d_pbar(&self) -> usize {
        self.d_pbar
    }

    pub fn d_out(&self) -> usize {
        2 * self.d_p + self.d_pbar
    }

    /// Returns `(cos(W_p x), sin(W_p x), σ(B_p̄ + W_p̄ x))` as separate nodes.
    fn branches<'s>(&self, tape: &mut Tape<'s>, store: &'s ParamStore, x: Var) -> Result<(Var, Var, Var)> {
        check_input("fan_forward", tape, x, self.d_in)?;
        let w_p = tape.param(store, self.w_p)?;
        let proj = tape.matmul(w_p, x)?;
        let c = tape.cos(proj)?;
        let s = tape.sin(proj)?;
        let w_pbar = tape.param(store, self.w_pbar)?;
        let b = tape.param(store, self.b_pbar)?;
        let lin = tape.matmul(w_pbar, x)?;
        let pre = tape.add_bias(lin, b)?;
        let act = apply(tape, pre, self.activation.unary())?;
        Ok((c, s, act))
    }

    pub fn forward<'s>(&self, tape: &mut Tape<'s>, store: &'s ParamStore, x: Var) -> Result<Var> {
        let (c, s, a) = self.branches(tape, store, x)?;
        tape.concat_rows(&[c, s, a])
    }
}

/// FAN layer whose periodic branches are scaled by a learnable gate
/// `g = sigmoid(raw_gate)` and whose activated branch is scaled by `1 − g`.
/// One scalar gate per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedFanLayer {
    pub fan: FanLayer,
    pub raw_gate: ParamId,
}

impl GatedFanLayer {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut SeededRng,
        d_in: usize,
        d_p: usize,
        d_pbar: usize,
        activation: Activation,
    ) -> Result<Self> {
        let fan = FanLayer::init(store, rng, d_in, d_p, d_pbar, activation)?;
        Ok(Self::from_fan(store, fan, 0.0))
    }

    pub fn from_fan(store: &mut ParamStore, fan: FanLayer, raw_gate: f64) -> Self {
        let raw_gate = store.push(Tensor::scalar(raw_gate));
        Self { fan, raw_gate }
    }

    pub fn d_out(&self) -> usize {
        self.fan.d_out()
    }

    /// Current gate value `g ∈ (0, 1)`.
    pub fn gate(&self, store: &ParamStore) -> f64 {
        crate::autograd::sigmoid(store.get(self.raw_gate).value().data()[0])
    }

    pub fn forward<'s>(&self, tape: &mut Tape<'s>, store: &'s ParamStore, x: Var) -> Result<Var> {
        let raw = tape.param(store, self.raw_gate)?;
        let g = tape.sigmoid(raw)?;
        self.forward_with_gate(tape, store, x, g)
    }

    /// Forward pass with an explicit `1 × 1` gate node in place of the
    /// learned one.
    pub fn forward_with_gate<'s>(&self, tape: &mut Tape<'s>, store: &'s ParamStore, x: Var, g: Var) -> Result<Var> {
        let (c, s, a) = self.fan.branches(tape, store, x)?;
        let neg = tape.scale_const(g, -1.0)?;
        let complement = tape.add_const(neg, 1.0)?;
        let gc = tape.scale(c, g)?;
        let gs = tape.scale(s, g)?;
        let ga = tape.scale(a, complement)?;
        tape.concat_rows(&[gc, gs, ga])
    }
}

/// Pointwise function applied after a [`DenseLayer`]'s affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseActivation {
    /// Standard MLP layer.
    Standard(Activation),
    /// FNN baseline: `sin` activation.
    Sine,
    /// `z + sin²(z)`.
    Snake,
}

impl DenseActivation {
    pub const LINEAR: Self = DenseActivation::Standard(Activation::Identity);

    fn unary(self) -> Option<Unary> {
        match self {
            DenseActivation::Standard(a) => a.unary(),
            DenseActivation::Sine => Some(Unary::Sin),
            DenseActivation::Snake => Some(Unary::Snake),
        }
    }
}

/// Affine map `B + W x` followed by a pointwise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub activation: DenseActivation,
    d_in: usize,
    d_out: usize,
}

impl DenseLayer {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut SeededRng,
        d_in: usize,
        d_out: usize,
        activation: DenseActivation,
    ) -> Result<Self> {
        let w = init_weight(rng, d_out, d_in);
        Self::from_tensors(store, w, Tensor::zeros(d_out, 1), activation)
    }

    pub fn from_tensors(store: &mut ParamStore, w: Tensor, b: Tensor, activation: DenseActivation) -> Result<Self> {
        let (d_out, d_in) = w.shape();
        expect_shape("bias", &b, (d_out, 1))?;
        Ok(Self {
            w: store.push(w),
            b: store.push(b),
            activation,
            d_in,
            d_out,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn forward<'s>(&self, tape: &mut Tape<'s>, store: &'s ParamStore, x: Var) -> Result<Var> {
        check_input("dense_forward", tape, x, self.d_in)?;
        let w = tape.param(store, self.w)?;
        let b = tape.param(store, self.b)?;
        let lin = tape.matmul(w, x)?;
        let pre = tape.add_bias(lin, b)?;
        apply(tape, pre, self.activation.unary())
    }
}

/// Shallow Fourier-series network: `W_in` (`N × d_in`) holds the angular
/// frequencies, `W_out` (`d_out × 2N`) the cos/sin coefficients and `B` the
/// constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct FsnnLayer {
    pub w_in: ParamId,
    pub w_out: ParamId,
    pub b: ParamId,
    d_in: usize,
    terms: usize,
    d_out: usize,
}

impl FsnnLayer {
    pub fn init(store: &mut ParamStore, rng: &mut SeededRng, d_in: usize, terms: usize, d_out: usize) -> Result<Self> {
        let w_in = init_weight(rng, terms, d_in);
        let w_out = init_weight(rng, d_out, 2 * terms);
        Self::from_tensors(store, w_in, w_out, Tensor::zeros(d_out, 1))
    }

    pub fn from_tensors(store: &mut ParamStore, w_in: Tensor, w_out: Tensor, b: Tensor) -> Result<Self> {
        let (terms, d_in) = w_in.shape();
        if terms == 0 {
            return Err(Error::Spec("FSNN layer needs at least one term".into()));
        }
        let d_out = w_out.rows();
        expect_shape("W_out", &w_out, (d_out, 2 * terms))?;
        expect_shape("B", &b, (d_out, 1))?;
        Ok(Self {
            w_in: store.push(w_in),
            w_out: store.push(w_out),
            b: store.push(b),
            d_in,
            terms,
            d_out,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn forward<'s>(&self, tape: &mut Tape<'s>, store: &'s ParamStore, x: Var) -> Result<Var> {
        check_input("fsnn_forward", tape, x, self.d_in)?;
        let w_in = tape.param(store, self.w_in)?;
        let freq = tape.matmul(w_in, x)?;
        let c = tape.cos(freq)?;
        let s = tape.sin(freq)?;
        let features = tape.concat_rows(&[c, s])?;
        let w_out = tape.param(store, self.w_out)?;
        let b = tape.param(store, self.b)?;
        let lin = tape.matmul(w_out, features)?;
        tape.add_bias(lin, b)
    }
}
