//! Finite-difference verification of backward rules.

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares reverse-mode gradients of `f` at `inputs` with central
/// differences of step `h`.
///
/// Returns the largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`
/// over every input element, or `+∞` if either side is not finite or `f`
/// fails to evaluate.
pub fn grad_check<T, F>(f: F, inputs: &[Tensor<T>], h: T) -> T
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<T>]| -> Result<T> {
        let mut g = Graph::new();
        let vars = xs.iter().map(|x| g.input(x.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let analytic = {
        let mut g = Graph::new();
        let vars = match inputs.iter().map(|x| g.input(x.clone())).collect::<Result<Vec<_>>>() {
            Ok(v) => v,
            Err(_) => return T::infinity(),
        };
        let Ok(out) = f(&mut g, &vars) else { return T::infinity() };
        if g.backward(out).is_err() {
            return T::infinity();
        }
        vars.iter()
            .map(|&v| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.value(v).shape())))
            .collect::<Vec<_>>()
    };

    let two_h = lit::<T>(2.0) * h;
    let mut worst = T::zero();
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for e in 0..input.len() {
            let orig = input.data()[e];
            work[k].data_mut()[e] = orig + h;
            let plus = eval(&work);
            work[k].data_mut()[e] = orig - h;
            let minus = eval(&work);
            work[k].data_mut()[e] = orig;
            let (Ok(plus), Ok(minus)) = (plus, minus) else { return T::infinity() };
            let numeric = (plus - minus) / two_h;
            let a = analytic[k].data()[e];
            if !numeric.is_finite() || !a.is_finite() {
                return T::infinity();
            }
            let denom = T::one().max(a.abs()).max(numeric.abs());
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}
