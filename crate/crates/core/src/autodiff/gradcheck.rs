//! Central finite-difference gradient checking.
//!
//! Only forward evaluation is used to form the numerical estimate, so the
//! check is independent of every backward rule it validates.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Largest elementwise relative error between analytic and numerical
/// gradients, over every input tensor.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Relative error with an absolute floor so exact zeros compare sanely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// `build` maps leaf inputs to a scalar; every element of every input is
/// perturbed by `±h`.
pub fn check<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.constant(x.clone())).collect();
        let o = build(&mut t, &vs)?;
        Ok(t.value(o).data()[0])
    };

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[k].len()];
        let analytic = grads.wrt(*v).unwrap_or(&zeros).to_vec();
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], numeric));
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_err: worst,
        checked,
    })
}

/// Checks gradients with respect to parameters in `store`. Up to
/// `per_tensor` elements of each parameter tensor are probed, chosen by a
/// deterministic stride so large tables are sampled evenly.
pub fn check_params<F>(
    store: &super::ParamStore,
    h: f64,
    per_tensor: usize,
    build: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &super::ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = build(&mut tape, store)?;
    let grads = tape.backward(out)?;
    let mut analytic = store.clone();
    analytic.zero_grads();
    analytic.accumulate(&grads);

    let eval = |s: &super::ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let o = build(&mut t, s)?;
        Ok(t.value(o).data()[0])
    };

    let mut work = store.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for id in store.ids() {
        let n = store.value(id).len();
        let step = (n / per_tensor.max(1)).max(1);
        // odd offset so strided probes do not all land on one column
        let mut i = (step / 2) | usize::from(n > 1);
        i = i.min(n - 1);
        let mut probes = 0;
        while i < n && probes < per_tensor {
            let orig = store.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work.value_mut(id).data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(analytic.grad(id).data()[i], numeric));
            checked += 1;
            probes += 1;
            i += step;
        }
    }
    Ok(GradCheck {
        max_rel_err: worst,
        checked,
    })
}
