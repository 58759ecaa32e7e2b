//! Finite-difference checks of every layer kind.

use fan_core::{
    gradcheck_params, Activation, DenseActivation, DenseLayer, FanLayer, FsnnLayer, GatedFanLayer, ParamStore,
    SeededRng, Tape, Tensor, Var,
};

/// Layer kinds covered by [`layer_gradchecks`].
pub const LAYER_KINDS: [&str; 7] = ["fan", "gated_fan", "mlp", "fsnn", "fnn", "snake", "linear"];

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub kind: &'static str,
    pub d_in: usize,
    pub d_out: usize,
    /// Worst relative error over the input and every parameter.
    pub max_rel_error: f64,
}

enum AnyLayer {
    Fan(FanLayer),
    Gated(GatedFanLayer),
    Dense(DenseLayer),
    Fsnn(FsnnLayer),
}

impl AnyLayer {
    fn forward<'s>(&self, tape: &mut Tape<'s>, store: &'s ParamStore, x: Var) -> fan_core::Result<Var> {
        match self {
            AnyLayer::Fan(l) => l.forward(tape, store, x),
            AnyLayer::Gated(l) => l.forward(tape, store, x),
            AnyLayer::Dense(l) => l.forward(tape, store, x),
            AnyLayer::Fsnn(l) => l.forward(tape, store, x),
        }
    }
}

fn dim(rng: &mut SeededRng, max: usize) -> usize {
    1 + (rng.next_unit() * max as f64) as usize % max
}

/// Gradchecks one randomly sized layer per kind with dims in `[2, max_dim]`
/// and inputs drawn from `[−3, 3]`. The loss is the MSE against a random
/// target, and the input is checked alongside the weights.
pub fn layer_gradchecks(seed: u64, max_dim: usize, eps: f64) -> fan_core::Result<Vec<GradcheckRow>> {
    let mut rng = SeededRng::new(seed);
    let batch = 3;
    let mut rows = Vec::new();
    for kind in LAYER_KINDS {
        let d_in = dim(&mut rng, max_dim).max(2);
        let mut d_out = dim(&mut rng, max_dim).max(2);
        let mut store = ParamStore::new();
        let layer = match kind {
            "fan" | "gated_fan" => {
                d_out = d_out.max(4);
                let d_p = d_out / 4;
                let fan = FanLayer::init(&mut store, &mut rng, d_in, d_p, d_out - 2 * d_p, Activation::Gelu)?;
                if kind == "fan" {
                    AnyLayer::Fan(fan)
                } else {
                    let raw = rng.uniform(-1.0, 1.0);
                    AnyLayer::Gated(GatedFanLayer::from_fan(&mut store, fan, raw))
                }
            }
            "fsnn" => AnyLayer::Fsnn(FsnnLayer::init(&mut store, &mut rng, d_in, (d_out / 2).max(1), d_out)?),
            _ => {
                let act = match kind {
                    "mlp" => DenseActivation::Standard(Activation::Gelu),
                    "fnn" => DenseActivation::Sine,
                    "snake" => DenseActivation::Snake,
                    _ => DenseActivation::LINEAR,
                };
                AnyLayer::Dense(DenseLayer::init(&mut store, &mut rng, d_in, d_out, act)?)
            }
        };
        let x = Tensor::from_fn(d_in, batch, |_, _| rng.uniform(-3.0, 3.0));
        let target = Tensor::from_fn(d_out, batch, |_, _| rng.uniform(-1.0, 1.0));
        let x_id = store.push(x);
        let err = gradcheck_params(
            &store,
            |tape, s| {
                let xv = tape.param(s, x_id)?;
                let y = layer.forward(tape, s, xv)?;
                let t = tape.constant(target.clone())?;
                tape.mse_loss(y, t)
            },
            eps,
        )?;
        rows.push(GradcheckRow {
            kind,
            d_in,
            d_out,
            max_rel_error: err,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_is_covered_and_passes() {
        let rows = layer_gradchecks(5, 8, 1e-5).unwrap();
        assert_eq!(rows.len(), LAYER_KINDS.len());
        for r in rows {
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }
}
