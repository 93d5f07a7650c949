//! Central finite-difference oracle for tape gradients.

use alloc::vec::Vec;

use super::{ParamStore, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let da: f64 = a.iter().map(|x| x * x).sum();
    let db: f64 = b.iter().map(|x| x * x).sum();
    let den = libm::sqrt(da.max(db));
    if den == 0.0 {
        0.0
    } else {
        libm::sqrt(num) / den
    }
}

fn eval_scalar<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).data()[0])
}

/// Compares the tape gradient of `f` with central differences of step `h`
/// for every input entry. Returns the worst relative error over inputs.
pub fn gradcheck<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| alloc::vec![0.0; input.data().len()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..input.data().len() {
            let mut shifted = inputs.to_vec();
            shifted[k].data_mut()[j] += h;
            let up = eval_scalar(&shifted, &f)?;
            shifted[k].data_mut()[j] -= 2.0 * h;
            let down = eval_scalar(&shifted, &f)?;
            numeric.push((up - down) / (2.0 * h));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Finite-difference check of parameter gradients. `f` builds the scalar from
/// the current store values. At most `per_param` evenly spaced entries of
/// each tensor are probed.
pub fn gradcheck_params<F>(store: &ParamStore, h: f64, per_param: usize, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let grads = tape.backward(out)?;
    let mut work = store.clone();
    work.zero_grad();
    work.accumulate(&tape, &grads);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for id in store.ids() {
        let n = store.value(id).data().len();
        let step = (n / per_param.max(1)).max(1);
        for j in (0..n).step_by(step).take(per_param) {
            analytic.push(work.grad(id).data()[j]);
            let mut probe = store.clone();
            probe.value_mut(id).data_mut()[j] += h;
            let mut t = Tape::new();
            let o = f(&mut t, &probe)?;
            let up = t.value(o).data()[0];
            probe.value_mut(id).data_mut()[j] -= 2.0 * h;
            let mut t = Tape::new();
            let o = f(&mut t, &probe)?;
            let down = t.value(o).data()[0];
            numeric.push((up - down) / (2.0 * h));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}
