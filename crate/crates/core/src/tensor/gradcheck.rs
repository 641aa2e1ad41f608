use crate::error::Result;
use crate::scalar::Scalar;

use super::{Gradients, ParamStore};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric gradient at the worst entry.
    pub worst_values: (f64, f64),
    pub checked: usize,
}

/// Central-difference formula used by [`grad_check_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, truncation error O(h²).
    #[default]
    ThreePoint,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, truncation error O(h⁴).
    FivePoint,
}

/// Compares analytic gradients against central differences
/// `(f(x+eps) − f(x−eps)) / (2·eps)` for every scalar in `store`.
///
/// `eval` returns the loss and its analytic gradients at the store's current
/// values; it must be deterministic. The per-entry error is
/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<S, F>(store: &mut ParamStore<S>, eval: F, eps: f64) -> Result<GradCheckReport>
where
    S: Scalar,
    F: FnMut(&ParamStore<S>) -> Result<(S, Gradients<S>)>,
{
    grad_check_with(store, eval, eps, Stencil::ThreePoint)
}

/// [`grad_check`] with a selectable stencil.
pub fn grad_check_with<S, F>(
    store: &mut ParamStore<S>,
    mut eval: F,
    eps: f64,
    stencil: Stencil,
) -> Result<GradCheckReport>
where
    S: Scalar,
    F: FnMut(&ParamStore<S>) -> Result<(S, Gradients<S>)>,
{
    let (_, grads) = eval(store)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        checked: 0,
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = store.value(id).data().len();
        for k in 0..n {
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k].as_f64());
            let orig = store.value(id).data()[k];
            let mut at = |offset: f64| -> Result<f64> {
                store.get_mut(id).value.data_mut()[k] = orig + S::lit(offset);
                let f = eval(store)?.0.as_f64();
                store.get_mut(id).value.data_mut()[k] = orig;
                Ok(f)
            };
            let numeric = match stencil {
                Stencil::ThreePoint => (at(eps)? - at(-eps)?) / (2.0 * eps),
                Stencil::FivePoint => {
                    (-at(2.0 * eps)? + 8.0 * at(eps)? - 8.0 * at(-eps)? + at(-2.0 * eps)?) / (12.0 * eps)
                }
            };
            let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), k));
                report.worst_values = (analytic, numeric);
            }
        }
    }
    Ok(report)
}
