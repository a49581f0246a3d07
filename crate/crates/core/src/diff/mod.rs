//! Forward-mode differentiation of the estimator and a finite-difference
//! oracle to check it against.
//!
//! Objectives implement [`Objective`], which is generic over the scalar
//! type. [`grad`] evaluates it with [`Dual`] numbers, seeding
//! [`BATCH`] parameters per pass; [`fd_grad`] evaluates it with plain
//! `f64` at shifted parameter vectors. The two routes share nothing but
//! the objective definition.

mod dual;
mod params;
pub mod pipeline;

pub use dual::Dual;
pub use params::ParameterVector;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::Real;

/// Tangent directions carried per forward pass.
pub const BATCH: usize = 16;

/// A scalar function of a flat parameter vector, evaluable at any [`Real`].
pub trait Objective: Sync {
    fn eval<T: Real>(&self, params: &[T]) -> Result<T>;
}

/// Any `Fn(&[f64]) -> f64` can be finite-differenced; only [`Objective`]s
/// can be differentiated exactly.
impl<F> FdObjective for F
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn eval_f64(&self, params: &[f64]) -> Result<f64> {
        self(params)
    }
}

pub trait FdObjective: Sync {
    fn eval_f64(&self, params: &[f64]) -> Result<f64>;
}

/// Adapter so an [`Objective`] can be passed to [`fd_grad`].
pub struct Primal<'a, O>(pub &'a O);

impl<O: Objective> FdObjective for Primal<'_, O> {
    fn eval_f64(&self, params: &[f64]) -> Result<f64> {
        self.0.eval::<f64>(params)
    }
}

/// Fails with the name of `operation` if any value (or any of its partials)
/// is not finite.
pub fn ensure_finite<'a, T: Real + 'a>(operation: &str, values: impl IntoIterator<Item = &'a T>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient {
            operation: operation.to_string(),
        })
    }
}

/// Exact gradient of `f` at `p` by batched forward passes.
pub fn grad<O: Objective>(f: &O, p: &ParameterVector) -> Result<Vec<f64>> {
    grad_slice(f, p.values())
}

pub fn grad_slice<O: Objective>(f: &O, p: &[f64]) -> Result<Vec<f64>> {
    let n = p.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let chunks: Vec<usize> = (0..n).step_by(BATCH).collect();
    let parts: Vec<Result<Vec<f64>>> = chunks
        .par_iter()
        .map(|&start| {
            let end = (start + BATCH).min(n);
            let seeded: Vec<Dual<BATCH>> = p
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if (start..end).contains(&i) {
                        Dual::variable(v, i - start)
                    } else {
                        Dual::constant(v)
                    }
                })
                .collect();
            let out = f.eval(&seeded)?;
            ensure_finite("objective", [&out])?;
            Ok(out.partials[..end - start].to_vec())
        })
        .collect();
    let mut g = Vec::with_capacity(n);
    for part in parts {
        g.extend(part?);
    }
    Ok(g)
}

/// Default relative step for [`fd_grad`].
pub const FD_STEP: f64 = 1e-5;

/// Central differences with step `h·max(1, |pᵢ|)` per component.
pub fn fd_grad<F: FdObjective>(f: &F, p: &[f64], h: f64) -> Result<Vec<f64>> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::invalid(format!("step must be > 0, got {h}")));
    }
    (0..p.len())
        .into_par_iter()
        .map(|i| {
            let step = h * p[i].abs().max(1.0);
            let mut shifted = p.to_vec();
            shifted[i] = p[i] + step;
            let plus = f.eval_f64(&shifted)?;
            shifted[i] = p[i] - step;
            let minus = f.eval_f64(&shifted)?;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// [`fd_grad`] for a piecewise-smooth `f` that also returns a label of the
/// smooth piece it evaluated on. A component is `None` when `p` lies within
/// `margin·max(1, |pᵢ|)` of a switch along that axis, detected by probing at
/// `±margin` as well as at `±h`.
pub fn fd_grad_masked<F>(f: &F, p: &[f64], h: f64, margin: f64) -> Result<Vec<Option<f64>>>
where
    F: Fn(&[f64]) -> Result<(f64, u64)> + Sync,
{
    fd_grad_masked_steps(f, p, &vec![h; p.len()], margin)
}

/// [`fd_grad_masked`] with a separate relative step per component.
pub fn fd_grad_masked_steps<F>(f: &F, p: &[f64], steps: &[f64], margin: f64) -> Result<Vec<Option<f64>>>
where
    F: Fn(&[f64]) -> Result<(f64, u64)> + Sync,
{
    if steps.len() != p.len() {
        return Err(Error::invalid(format!(
            "{} steps for {} parameters",
            steps.len(),
            p.len()
        )));
    }
    if let Some(h) = steps.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
        return Err(Error::invalid(format!("step must be > 0, got {h}")));
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::invalid(format!("margin must be >= 0, got {margin}")));
    }
    let (_, here) = f(p)?;
    (0..p.len())
        .into_par_iter()
        .map(|i| {
            let scale = p[i].abs().max(1.0);
            let step = steps[i] * scale;
            let mut shifted = p.to_vec();
            shifted[i] = p[i] + step;
            let (plus, a) = f(&shifted)?;
            shifted[i] = p[i] - step;
            let (minus, b) = f(&shifted)?;
            let mut same = a == here && b == here;
            if same && margin > steps[i] {
                for s in [margin * scale, -margin * scale] {
                    shifted[i] = p[i] + s;
                    same &= f(&shifted)?.1 == here;
                }
            }
            Ok(same.then(|| (plus - minus) / (2.0 * step)))
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
