//! Central finite-difference verification of tape gradients.
//!
//! The builder closure must be deterministic (dropout disabled, batch-norm
//! running updates off). Inputs to be checked are registered as parameters by
//! the caller, so one sweep covers weights and inputs alike.

use crate::error::Result;
use crate::param::ParamStore;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked_components: usize,
}

/// Compare analytic gradients against `(f(x+eps) - f(x-eps)) / 2eps` for every
/// component of every parameter. Relative error uses
/// `|a - n| / max(1, |a|, |n|)`.
pub fn grad_check<F>(store: &mut ParamStore, mut build: F, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &mut ParamStore) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new();
        let loss = build(&mut tape, store)?;
        tape.backward(loss)?
    };

    let mut max_rel_error: f64 = 0.0;
    let mut worst_param = String::new();
    let mut checked = 0;

    for id in store.param_ids().collect::<Vec<_>>() {
        let n = store.value(id).len();
        for k in 0..n {
            let original = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = original + eps;
            let loss_plus = {
                let mut tape = Tape::new();
                let loss = build(&mut tape, store)?;
                tape.scalar(loss)
            };
            store.value_mut(id).data_mut()[k] = original - eps;
            let loss_minus = {
                let mut tape = Tape::new();
                let loss = build(&mut tape, store)?;
                tape.scalar(loss)
            };
            store.value_mut(id).data_mut()[k] = original;

            let numeric = (loss_plus - loss_minus) / (2.0 * eps);
            let exact = analytic.get(id).map(|g| g.data()[k]).unwrap_or(0.0);
            let denom = 1.0f64.max(exact.abs()).max(numeric.abs());
            let rel = (exact - numeric).abs() / denom;
            checked += 1;
            if rel > max_rel_error {
                max_rel_error = rel;
                worst_param = format!("{}[{}]", store.name(id), k);
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_error,
        worst_param,
        checked_components: checked,
    })
}
