//! Central-difference gradient checking.
//!
//! Both checkers report `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.

use crate::autograd::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::Contract(alloc::format!("gradcheck eps {eps} outside (0, 1e-3]")));
    }
    Ok(())
}

fn scalar_of(tape: &Tape<'_>, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.shape() != (1, 1) {
        return Err(Error::Contract("gradcheck function must return a 1x1 node".into()));
    }
    Ok(t.data()[0])
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / f64::max(1.0, libm::fabs(analytic))
}

/// Checks the gradient of a scalar function of one tensor input.
pub fn gradcheck<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<'_>, Var) -> Result<Var>,
{
    check_eps(eps)?;
    let analytic = {
        let mut tape = Tape::new();
        let xv = tape.input(x.clone())?;
        let y = f(&mut tape, xv)?;
        scalar_of(&tape, y)?;
        let grads = tape.backward(y)?;
        grads
            .get(xv)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()))
    };

    let eval = |probe: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.constant(probe)?;
        let y = f(&mut tape, xv)?;
        scalar_of(&tape, y)
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Checks the gradient of a scalar function w.r.t. every stored parameter.
pub fn gradcheck_params<F>(store: &ParamStore, f: F, eps: f64) -> Result<f64>
where
    F: for<'s> Fn(&mut Tape<'s>, &'s ParamStore) -> Result<Var>,
{
    check_eps(eps)?;
    let mut analytic = store.clone();
    analytic.zero_grad();
    {
        let snapshot = store.clone();
        let mut tape = Tape::new();
        let y = f(&mut tape, &snapshot)?;
        scalar_of(&tape, y)?;
        let grads = tape.backward(y)?;
        drop(tape);
        grads.accumulate_into(&mut analytic)?;
    }

    let eval = |probe: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let y = f(&mut tape, probe)?;
        scalar_of(&tape, y)
    };

    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    for (pi, param) in analytic.iter().enumerate() {
        for i in 0..param.value().len() {
            let id = crate::autograd::ParamId::from_index(pi);
            let original = probe.get(id).value().data()[i];
            probe.get_mut(id).value_mut()[i] = original + eps;
            let up = eval(&probe)?;
            probe.get_mut(id).value_mut()[i] = original - eps;
            let down = eval(&probe)?;
            probe.get_mut(id).value_mut()[i] = original;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(param.grad().data()[i], numeric));
        }
    }
    Ok(worst)
}
