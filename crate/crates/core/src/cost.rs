//! Parameter and FLOP accounting.
//!
//! Two ledgers are kept side by side:
//!
//! * **exact**: scalars actually stored and arithmetic actually performed
//!   per input sample.
//! * **table1**: the closed-form MLP/FAN layer formulas, evaluated
//!   verbatim:
//!   - MLP params `d_in·d_out + d_out`, FLOPs `2·d_in·d_out + F_nl·d_out`
//!   - FAN params `(1 − d_p/d_out)·(d_in·d_out + d_out)`,
//!     FLOPs `(1 − d_p/d_out)·2·d_in·d_out + F_nl·d_out`
//!
//! Both FAN formulas are integers: `(1 − d_p/d_out)·d_out = d_out − d_p`.
//! The FAN parameter formula implies `d_out − d_p` biases while the layer
//! stores only `d_p̄ = d_out − 2·d_p`, so `table1_params − exact_params`
//! is exactly `d_p` for every FAN layer.
//!
//! Matmul FLOPs count one multiply and one add per product term; bias
//! additions are tallied separately. Layers without a formula of their own
//! (linear head, FSNN) report their exact counts in the table1 columns,
//! except the linear head, which uses the MLP formula without the
//! nonlinearity term. Gated FAN layers use the FAN formula.

use alloc::vec::Vec;

use crate::network::{LayerKind, LayerSpec, NetworkSpec};

/// Default cost of one elementwise nonlinear evaluation.
pub const DEFAULT_FLOPS_NONLINEAR: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerCost {
    pub exact_params: u64,
    pub table1_params: u64,
    pub exact_matmul_flops: u64,
    pub table1_matmul_flops: u64,
    /// Elementwise nonlinear evaluations (cos, sin, σ, ...).
    pub nonlinear_evals: u64,
    /// Bias, gate and residual arithmetic outside the matmuls.
    pub other_flops: u64,
    /// Number of outputs charged `F_nl` by the table1 formula.
    pub table1_nonlinear_outputs: u64,
}

impl LayerCost {
    pub fn exact_flops(&self, flops_nonlinear: u64) -> u64 {
        self.exact_matmul_flops + flops_nonlinear * self.nonlinear_evals + self.other_flops
    }

    pub fn table1_flops(&self, flops_nonlinear: u64) -> u64 {
        self.table1_matmul_flops + flops_nonlinear * self.table1_nonlinear_outputs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub exact_params: u64,
    pub table1_params: u64,
    pub exact_flops: u64,
    pub table1_flops: u64,
    pub exact_matmul_flops: u64,
    pub table1_matmul_flops: u64,
    pub flops_nonlinear: u64,
    pub layers: Vec<LayerCost>,
}

pub fn layer_cost(spec: &LayerSpec) -> LayerCost {
    let (d_in, d_out) = (spec.d_in as u64, spec.d_out as u64);
    let residual = if spec.residual { d_out } else { 0 };
    let dense = |nonlinear: u64, extra: u64| LayerCost {
        exact_params: d_in * d_out + d_out,
        table1_params: d_in * d_out + d_out,
        exact_matmul_flops: 2 * d_in * d_out,
        table1_matmul_flops: 2 * d_in * d_out,
        nonlinear_evals: nonlinear,
        other_flops: d_out + extra + residual,
        table1_nonlinear_outputs: nonlinear.min(d_out),
    };
    match spec.kind {
        LayerKind::Fan { d_p, activation } | LayerKind::GatedFan { d_p, activation } => {
            let d_p = d_p as u64;
            let d_pbar = d_out.saturating_sub(2 * d_p);
            let act_evals = if activation == crate::layers::Activation::Identity {
                0
            } else {
                d_pbar
            };
            let mut cost = LayerCost {
                exact_params: (d_p + d_pbar) * d_in + d_pbar,
                table1_params: (d_out - d_p) * (d_in + 1),
                exact_matmul_flops: 2 * d_in * (d_p + d_pbar),
                table1_matmul_flops: 2 * d_in * (d_out - d_p),
                nonlinear_evals: 2 * d_p + act_evals,
                other_flops: d_pbar + residual,
                table1_nonlinear_outputs: d_out,
            };
            if matches!(spec.kind, LayerKind::GatedFan { .. }) {
                cost.exact_params += 1;
                // sigmoid of the logit, 1 − g, and one product per output
                cost.nonlinear_evals += 1;
                cost.other_flops += 1 + d_out;
            }
            cost
        }
        LayerKind::Mlp { activation } => {
            let evals = if activation == crate::layers::Activation::Identity {
                0
            } else {
                d_out
            };
            LayerCost {
                table1_nonlinear_outputs: d_out,
                ..dense(evals, 0)
            }
        }
        LayerKind::Fnn => dense(d_out, 0),
        // z + sin(z)²: one sine, one square, one add
        LayerKind::Snake => dense(d_out, 2 * d_out),
        LayerKind::Linear => dense(0, 0),
        LayerKind::Fsnn { terms } => {
            let n = terms as u64;
            let params = n * d_in + 2 * n * d_out + d_out;
            let matmul = 2 * d_in * n + 2 * (2 * n) * d_out;
            LayerCost {
                exact_params: params,
                table1_params: params,
                exact_matmul_flops: matmul,
                table1_matmul_flops: matmul,
                nonlinear_evals: 2 * n,
                other_flops: d_out + residual,
                table1_nonlinear_outputs: 2 * n,
            }
        }
    }
}

/// Costs of a whole network with one nonlinear evaluation counted as one FLOP.
pub fn count_costs(spec: &NetworkSpec) -> CostReport {
    count_costs_with(spec, DEFAULT_FLOPS_NONLINEAR)
}

pub fn count_costs_with(spec: &NetworkSpec, flops_nonlinear: u64) -> CostReport {
    let layers: Vec<LayerCost> = spec.layers.iter().map(layer_cost).collect();
    let mut report = CostReport {
        exact_params: 0,
        table1_params: 0,
        exact_flops: 0,
        table1_flops: 0,
        exact_matmul_flops: 0,
        table1_matmul_flops: 0,
        flops_nonlinear,
        layers: Vec::new(),
    };
    for c in &layers {
        report.exact_params += c.exact_params;
        report.table1_params += c.table1_params;
        report.exact_flops += c.exact_flops(flops_nonlinear);
        report.table1_flops += c.table1_flops(flops_nonlinear);
        report.exact_matmul_flops += c.exact_matmul_flops;
        report.table1_matmul_flops += c.table1_matmul_flops;
    }
    report.layers = layers;
    report
}
