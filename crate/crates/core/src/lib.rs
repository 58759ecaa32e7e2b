//! Fourier Analysis Network (FAN) layers and their baselines on a small
//! reverse-mode autodiff engine.
//!
//! The crate is `no_std` (it needs `alloc`) and holds only pure numerics:
//! tensors, the gradient tape, the layer zoo, parameter/FLOP accounting,
//! optimizers and deterministic task generators. IO, timing and the CLI live
//! in the `fan` crate. Enable the `std` feature for runtime SIMD dispatch in
//! the matrix kernels.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autograd;
pub mod cost;
pub mod datagen;
pub mod error;
mod gemm;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use autograd::{Gradients, ParamId, ParamStore, Parameter, Tape, Unary, Var};
pub use cost::{count_costs, count_costs_with, CostReport, LayerCost};
pub use datagen::{
    eval_target, fourier_coefficients, generate_dataset, symbolic_dataset, Dataset, FourierSeries, NamedTarget, Region,
    Sinusoid, SplitSpec, SymbolicFormula, Target,
};
pub use error::{Error, Result};
pub use gradcheck::{gradcheck, gradcheck_params};
pub use layers::{Activation, DenseActivation, DenseLayer, FanLayer, FsnnLayer, GatedFanLayer};
pub use network::{Family, Layer, LayerKind, LayerSpec, Network, NetworkSpec};
pub use optim::{AdamW, AdamWConfig, Optimizer, Sgdm};
pub use rng::SeededRng;
pub use tensor::Tensor;
