//! Bracketed bisection for strictly decreasing scalar functions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Bisection {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds the zero of a decreasing `f` on `[lo, hi]`.
///
/// Requires `f(lo) > 0 > f(hi)`; the signs are checked before iterating.
/// Stops once `|f| <= f_tol` or the bracket is narrower than `x_tol`.
pub(crate) fn bisect_decreasing<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    f_tol: f64,
    x_tol: f64,
) -> Result<Bisection>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::InvalidInput(format!(
            "bisection bracket [{lo}, {hi}] does not straddle a sign change: f(lo) = {f_lo}, f(hi) = {f_hi}"
        )));
    }
    let mut best = if f_lo.abs() < f_hi.abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    for iterations in 1..=400 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid.abs() <= f_tol || hi - lo <= x_tol || mid == lo || mid == hi {
            return Ok(Bisection {
                root: best.0,
                residual: best.1,
                iterations,
            });
        }
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(
        "bisection exceeded 400 halvings".to_string(),
    ))
}
