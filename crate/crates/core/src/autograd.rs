//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records one forward pass. Parameters live in a [`ParamStore`]
//! and are bound onto the tape by reference, so a forward pass never copies
//! weights. [`Tape::backward`] walks the recorded nodes once in reverse and
//! returns a [`Gradients`] value; the tape is left untouched, so replaying
//! backward yields bit-identical results. Gradients are folded into the
//! store with [`Gradients::accumulate_into`], which adds to whatever is
//! already there until [`ParamStore::zero_grad`] is called.
//!
//! Every op checks its output for NaN/Inf and fails with
//! [`Error::NonFinite`] instead of propagating it.

use alloc::borrow::Cow;
use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gemm::{gemm, MatRef};
use crate::tensor::Tensor;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    value: Tensor,
    grad: Tensor,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    /// Mutable access to the value. The shape cannot change through this.
    pub fn value_mut(&mut self) -> &mut [f64] {
        self.value.data_mut()
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.grad.data_mut()
    }

    /// Splits into value and gradient buffers for optimizer updates.
    pub fn value_and_grad_mut(&mut self) -> (&mut [f64], &[f64]) {
        (self.value.data_mut(), self.grad.data())
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(i: usize) -> Self {
        Self(i)
    }
}

/// Owns every parameter of a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: Tensor) -> ParamId {
        self.params.push(Parameter::new(value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Total number of stored scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise functions with a built-in derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Cos,
    Sin,
    /// Exact `x·Φ(x)`, Φ the standard normal CDF.
    Gelu,
    Relu,
    Sigmoid,
    /// `z + sin²(z)`.
    Snake,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Cos => "cos",
            Unary::Sin => "sin",
            Unary::Gelu => "gelu",
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Snake => "snake",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Cos => libm::cos(x),
            Unary::Sin => libm::sin(x),
            Unary::Gelu => x * normal_cdf(x),
            Unary::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Snake => {
                let s = libm::sin(x);
                x + s * s
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Unary::Cos => -libm::sin(x),
            Unary::Sin => libm::cos(x),
            Unary::Gelu => normal_cdf(x) + x * normal_pdf(x),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Unary::Snake => 1.0 + libm::sin(2.0 * x),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    // 1/sqrt(2π)
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Backward rule of a [`Tape::custom`] node: receives the input values, the
/// output value and the upstream gradient, returns one gradient per input.
pub type BackwardFn = Box<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor> + Send + Sync>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Unary(Var, Unary),
    Scale(Var, Var),
    ScaleConst(Var, f64),
    AddConst(Var),
    Sum(Var),
    Mse(Var, Var),
    Custom(Vec<Var>, BackwardFn),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Record of one forward pass.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    bindings: Vec<(ParamId, Var)>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bindings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Binds a stored parameter by reference.
    pub fn param(&mut self, store: &'a ParamStore, id: ParamId) -> Result<Var> {
        let v = self.push("param", Cow::Borrowed(store.get(id).value()), Op::Leaf, true)?;
        self.bindings.push((id, v));
        Ok(v)
    }

    /// A leaf that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", Cow::Owned(value), Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked (used to differentiate w.r.t. inputs).
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        self.push("input", Cow::Owned(value), Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = Tensor::zeros(av.rows(), bv.cols());
        gemm(MatRef::normal(av), MatRef::normal(bv), &mut out, 0.0);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push("matmul", Cow::Owned(out), Op::MatMul(a, b), rg)
    }

    /// Adds a `rows × 1` bias to every column of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.cols() != 1 || bv.rows() != xv.rows() {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: xv.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = xv.clone();
        let cols = out.cols();
        for (r, row) in out.data_mut().chunks_mut(cols.max(1)).enumerate() {
            let bias = bv.data()[r];
            row.iter_mut().for_each(|v| *v += bias);
        }
        let rg = self.requires_grad(x) || self.requires_grad(b);
        self.push("add_bias", Cow::Owned(out), Op::AddBias(x, b), rg)
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.check_same_shape("add", bv)?;
        let mut out = av.clone();
        out.add_assign(bv)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push("add", Cow::Owned(out), Op::Add(a, b), rg)
    }

    /// Stacks tensors vertically in argument order.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows needs at least one part".into()))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != cols {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    lhs: self.value(*first).shape(),
                    rhs: pv.shape(),
                });
            }
            rows += pv.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        self.push("concat_rows", Cow::Owned(out), Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Rows `start..end` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        if start > end || end > xv.rows() {
            return Err(Error::Dimension {
                op: "slice_rows",
                lhs: xv.shape(),
                rhs: (start, end),
            });
        }
        let out = xv.rows_range(start, end);
        let rg = self.requires_grad(x);
        self.push("slice_rows", Cow::Owned(out), Op::SliceRows(x, start), rg)
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Result<Var> {
        let out = self.value(x).map(|v| f.eval(v));
        let rg = self.requires_grad(x);
        self.push(f.name(), Cow::Owned(out), Op::Unary(x, f), rg)
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Cos)
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sin)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Gelu)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn snake(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Snake)
    }

    /// `s · x` where `s` is a `1 × 1` node; differentiable in both.
    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(Error::Dimension {
                op: "scale",
                lhs: self.value(x).shape(),
                rhs: sv.shape(),
            });
        }
        let factor = sv.data()[0];
        let out = self.value(x).map(|v| v * factor);
        let rg = self.requires_grad(x) || self.requires_grad(s);
        self.push("scale", Cow::Owned(out), Op::Scale(x, s), rg)
    }

    pub fn scale_const(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * c);
        let rg = self.requires_grad(x);
        self.push("scale_const", Cow::Owned(out), Op::ScaleConst(x, c), rg)
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v + c);
        let rg = self.requires_grad(x);
        self.push("add_const", Cow::Owned(out), Op::AddConst(x), rg)
    }

    /// Sum of all elements as a `1 × 1` node.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.requires_grad(x);
        self.push("sum", Cow::Owned(out), Op::Sum(x), rg)
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (pv, tv) = (self.value(pred), self.value(target));
        pv.check_same_shape("mse_loss", tv)?;
        if pv.is_empty() {
            return Err(Error::Contract("mse_loss over an empty tensor".into()));
        }
        let sq: f64 = pv.data().iter().zip(tv.data()).map(|(p, t)| (p - t) * (p - t)).sum();
        let out = Tensor::scalar(sq / pv.len() as f64);
        let rg = self.requires_grad(pred) || self.requires_grad(target);
        self.push("mse_loss", Cow::Owned(out), Op::Mse(pred, target), rg)
    }

    /// Records an op with a caller-supplied value and backward rule.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: BackwardFn) -> Result<Var> {
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        self.push("custom", Cow::Owned(value), Op::Custom(inputs.to_vec(), backward), rg)
    }

    /// Reverse sweep from a `1 × 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(up) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &up, &mut grads)?;
            grads[idx] = Some(up);
        }
        Ok(Gradients {
            grads,
            bindings: self.bindings.clone(),
        })
    }

    fn propagate(&self, node: &Node<'a>, up: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    gemm(MatRef::normal(up), MatRef::transposed(bv), &mut da, 0.0);
                    accumulate(grads, *a, da)?;
                }
                if self.requires_grad(*b) {
                    let mut db = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(MatRef::transposed(av), MatRef::normal(up), &mut db, 0.0);
                    accumulate(grads, *b, db)?;
                }
            }
            Op::AddBias(x, b) => {
                if self.requires_grad(*x) {
                    accumulate(grads, *x, up.clone())?;
                }
                if self.requires_grad(*b) {
                    let cols = up.cols().max(1);
                    let sums: Vec<f64> = up.data().chunks(cols).map(|r| r.iter().sum()).collect();
                    accumulate(grads, *b, Tensor::new(up.rows(), 1, sums)?)?;
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.requires_grad(v) {
                        accumulate(grads, v, up.clone())?;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    if self.requires_grad(p) {
                        accumulate(grads, p, up.rows_range(start, start + rows))?;
                    }
                    start += rows;
                }
            }
            Op::SliceRows(x, start) => {
                let xv = self.value(*x);
                let mut g = Tensor::zeros(xv.rows(), xv.cols());
                let cols = xv.cols();
                g.data_mut()[start * cols..start * cols + up.len()].copy_from_slice(up.data());
                accumulate(grads, *x, g)?;
            }
            Op::Unary(x, f) => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(&xi, &gi)| f.derivative(xi) * gi)
                    .collect();
                accumulate(grads, *x, Tensor::new(xv.rows(), xv.cols(), data)?)?;
            }
            Op::Scale(x, s) => {
                let (xv, sv) = (self.value(*x), self.value(*s));
                if self.requires_grad(*x) {
                    let factor = sv.data()[0];
                    accumulate(grads, *x, up.map(|g| g * factor))?;
                }
                if self.requires_grad(*s) {
                    let ds: f64 = xv.data().iter().zip(up.data()).map(|(a, b)| a * b).sum();
                    accumulate(grads, *s, Tensor::scalar(ds))?;
                }
            }
            Op::ScaleConst(x, c) => accumulate(grads, *x, up.map(|g| g * c))?,
            Op::AddConst(x) => accumulate(grads, *x, up.clone())?,
            Op::Sum(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, Tensor::filled(xv.rows(), xv.cols(), up.data()[0]))?;
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (self.value(*p), self.value(*t));
                let k = 2.0 * up.data()[0] / pv.len() as f64;
                let dp: Vec<f64> = pv.data().iter().zip(tv.data()).map(|(a, b)| k * (a - b)).collect();
                let dp = Tensor::new(pv.rows(), pv.cols(), dp)?;
                if self.requires_grad(*t) {
                    accumulate(grads, *t, dp.map(|g| -g))?;
                }
                if self.requires_grad(*p) {
                    accumulate(grads, *p, dp)?;
                }
            }
            Op::Custom(inputs, backward) => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let gs = backward(&values, &node.value, up);
                if gs.len() != inputs.len() {
                    return Err(Error::Contract(format!(
                        "custom backward returned {} gradients for {} inputs",
                        gs.len(),
                        inputs.len()
                    )));
                }
                for (&v, g) in inputs.iter().zip(gs) {
                    if self.requires_grad(v) {
                        accumulate(grads, v, g)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Result of one backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    bindings: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, or `None` if `v` does not reach it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds every bound parameter's gradient into its `grad` buffer.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        for &(id, v) in &self.bindings {
            if let Some(g) = self.get(v) {
                let p = store.get_mut(id);
                p.grad.add_assign(g)?;
                if !p.grad.is_finite() {
                    return Err(Error::NonFinite { op: "backward" });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        libm::fabs(a - b) <= tol
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2)).unwrap();
        let x = tape.constant(Tensor::column(&[3.0, 4.0])).unwrap();
        let y = tape.matmul(i2, x).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);

        let a = tape
            .constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap())
            .unwrap();
        let ones = tape.constant(Tensor::column(&[1.0, 1.0])).unwrap();
        let y = tape.matmul(a, ones).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 7.0]);

        let z = tape.constant(Tensor::zeros(3, 2)).unwrap();
        let any = tape.constant(Tensor::from_fn(2, 4, |r, c| (r * 4 + c) as f64)).unwrap();
        let y = tape.matmul(z, any).unwrap();
        assert_eq!(tape.value(y), &Tensor::zeros(3, 4));

        assert!(matches!(tape.matmul(x, a), Err(Error::Dimension { op: "matmul", .. })));
    }

    #[test]
    fn add_bias_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::column(&[1.0, 2.0])).unwrap();
        let zero = tape.constant(Tensor::zeros(2, 1)).unwrap();
        let y = tape.add_bias(x, zero).unwrap();
        assert_eq!(tape.value(y), tape.value(x));

        let b = tape.constant(Tensor::column(&[10.0, 20.0])).unwrap();
        let y = tape.add_bias(x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[11.0, 22.0]);

        let batch = tape.constant(Tensor::from_fn(2, 3, |r, c| (r * 3 + c) as f64)).unwrap();
        let y = tape.add_bias(batch, b).unwrap();
        let yv = tape.value(y).clone();
        for c in 0..3 {
            for r in 0..2 {
                let expected = (r * 3 + c) as f64 + [10.0, 20.0][r];
                assert_eq!(yv.get(r, c), expected);
            }
        }

        let bad = tape.constant(Tensor::zeros(3, 1)).unwrap();
        assert!(tape.add_bias(x, bad).is_err());
    }

    #[test]
    fn add_bias_backward_sums_columns() {
        let mut store = ParamStore::new();
        let bid = store.push(Tensor::zeros(2, 1));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(2, 3, |r, c| (r + c) as f64)).unwrap();
        let b = tape.param(&store, bid).unwrap();
        let y = tape.add_bias(x, b).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn concat_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::column(&[1.0, 2.0])).unwrap();
        let b = tape.constant(Tensor::column(&[3.0, 4.0, 5.0])).unwrap();
        let single = tape.concat_rows(&[a]).unwrap();
        assert_eq!(tape.value(single), tape.value(a));
        let c = tape.concat_rows(&[a, b]).unwrap();
        assert_eq!(tape.value(c).shape(), (5, 1));
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);

        let wide = tape.constant(Tensor::zeros(1, 2)).unwrap();
        assert!(tape.concat_rows(&[a, wide]).is_err());
        assert!(tape.concat_rows(&[]).is_err());
    }

    #[test]
    fn trig_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[0.0, PI / 2.0, PI])).unwrap();
        let c = tape.cos(x).unwrap();
        let expected = [1.0, 0.0, -1.0];
        for (got, want) in tape.value(c).data().iter().zip(expected) {
            assert!(close(*got, want, 1e-15));
        }
        let z = tape.constant(Tensor::scalar(0.0)).unwrap();
        let s = tape.sin(z).unwrap();
        assert_eq!(tape.value(s).data(), &[0.0]);
    }

    #[test]
    fn gelu_examples() {
        assert_eq!(Unary::Gelu.eval(0.0), 0.0);
        assert!(close(Unary::Gelu.eval(10.0), 10.0, 1e-6));
        // Φ(1) = 0.8413447460685429
        assert!(close(Unary::Gelu.eval(1.0), 0.841_344_746_068_542_9, 1e-15));
    }

    #[test]
    fn scale_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[1.5, -2.0])).unwrap();
        let one = tape.constant(Tensor::scalar(1.0)).unwrap();
        let zero = tape.constant(Tensor::scalar(0.0)).unwrap();
        let y = tape.scale(x, one).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        let y = tape.scale(x, zero).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, -0.0]);
        assert!(tape.scale(x, x).is_err());
    }

    #[test]
    fn scale_gradient_wrt_factor_is_inner_product() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[1.0, 2.0, 3.0])).unwrap();
        let s = tape.input(Tensor::scalar(0.5)).unwrap();
        let y = tape.scale(x, s).unwrap();
        let w = tape.constant(Tensor::row(&[4.0, 5.0, 6.0])).unwrap();
        let yw = tape
            .custom(
                &[y, w],
                {
                    let yv = tape.value(y);
                    let wv = tape.value(w);
                    Tensor::scalar(yv.data().iter().zip(wv.data()).map(|(a, b)| a * b).sum())
                },
                Box::new(|ins, _, up| vec![ins[1].map(|v| v * up.data()[0]), ins[0].map(|v| v * up.data()[0])]),
            )
            .unwrap();
        let g = tape.backward(yw).unwrap();
        // sum(x ⊙ upstream) with upstream = w
        assert_eq!(g.get(s).unwrap().data(), &[4.0 + 10.0 + 18.0]);
    }

    #[test]
    fn mse_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[1.0, 2.0])).unwrap();
        let z = tape.constant(Tensor::row(&[0.0, 0.0])).unwrap();
        let l = tape.mse_loss(x, x).unwrap();
        assert_eq!(tape.value(l).data(), &[0.0]);
        let l = tape.mse_loss(x, z).unwrap();
        assert_eq!(tape.value(l).data(), &[2.5]);
        let x2 = tape.constant(Tensor::row(&[2.0, 4.0])).unwrap();
        let l2 = tape.mse_loss(x2, z).unwrap();
        assert_eq!(tape.value(l2).data()[0], 4.0 * 2.5);
        let wrong = tape.constant(Tensor::row(&[0.0])).unwrap();
        assert!(tape.mse_loss(x, wrong).is_err());
    }

    #[test]
    fn backward_of_sum_of_product_broadcasts_input() {
        let mut store = ParamStore::new();
        let w = store.push(Tensor::from_rows(&[&[0.3, -0.7], &[1.1, 0.2], &[0.0, 0.5]]).unwrap());
        let unused = store.push(Tensor::zeros(2, 2));
        let mut tape = Tape::new();
        let wv = tape.param(&store, w).unwrap();
        let _ = tape.param(&store, unused).unwrap();
        let x = tape.constant(Tensor::column(&[2.0, -3.0])).unwrap();
        let y = tape.matmul(wv, x).unwrap();
        let loss = tape.sum(y).unwrap();
        let g = tape.backward(loss).unwrap();
        g.accumulate_into(&mut store).unwrap();
        // d sum(Wx) / dW[i][j] = x[j] for every row i
        let dw = store.get(w).grad();
        for r in 0..3 {
            assert_eq!(dw.row_slice(r), &[2.0, -3.0]);
        }
        assert_eq!(store.get(unused).grad(), &Tensor::zeros(2, 2));
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::row(&[1.0, 2.0])).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_accumulation_sums_gradients() {
        let mut store = ParamStore::new();
        let w = store.push(Tensor::row(&[1.0, 2.0]));
        let mut tape = Tape::new();
        let wv = tape.param(&store, w).unwrap();
        let c = tape.cos(wv).unwrap();
        let loss = tape.sum(c).unwrap();
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(loss).unwrap();
        assert_eq!(g1.get(wv), g2.get(wv));
        drop(tape);
        g1.accumulate_into(&mut store).unwrap();
        let once = store.get(w).grad().clone();
        g2.accumulate_into(&mut store).unwrap();
        assert_eq!(store.get(w).grad(), &once.map(|v| 2.0 * v));
    }

    #[test]
    fn non_finite_values_are_rejected_at_the_op() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(1e300)).unwrap();
        let big = tape.constant(Tensor::scalar(1e300)).unwrap();
        assert_eq!(tape.scale(x, big), Err(Error::NonFinite { op: "scale" }));
        assert!(tape.constant(Tensor::scalar(f64::NAN)).is_err());
    }
}
