//! Transformed-linear arithmetic over the nonnegative reals.
//!
//! The transform `tau(y) = log(1 + exp(y))` carries ordinary addition and
//! scalar multiplication onto the positive half-line:
//! `x1 (+) x2 = tau(tau_inv(x1) + tau_inv(x2))` and
//! `a (*) x = tau(a * tau_inv(x))`.
//! The zero element of the resulting vector space is `tau(0) = ln 2`.

use crate::error::{Error, Result};

/// The additive identity of transformed-linear arithmetic, `tau(0) = ln 2`.
pub const ZERO_ELEMENT: f64 = std::f64::consts::LN_2;

/// Branch point for the overflow-safe softplus evaluation. `exp(-30)` is
/// below machine epsilon for f64, so both branches agree at the threshold.
const SOFTPLUS_BRANCH: f64 = 30.0;

/// `tau(y) = log(1 + exp(y))`, overflow-safe.
pub fn tau(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::Domain(format!("tau: non-finite input {y}")));
    }
    if y >= SOFTPLUS_BRANCH {
        Ok(y + (-y).exp().ln_1p())
    } else {
        Ok(y.exp().ln_1p())
    }
}

/// Inverse of [`tau`], computed as `x + log(-expm1(-x))` to avoid
/// cancellation for small `x`.
pub fn tau_inv(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("tau_inv: input {x} outside (0, inf)")));
    }
    Ok(x + (-(-x).exp_m1()).ln())
}

/// Transformed addition `x1 (+) x2`.
pub fn t_add(x1: f64, x2: f64) -> Result<f64> {
    tau(tau_inv(x1)? + tau_inv(x2)?)
}

/// Transformed scaling `a (*) x`. Negative `a` is allowed; the algebra
/// needs it to form innovations.
pub fn t_scale(a: f64, x: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("t_scale: non-finite coefficient {a}")));
    }
    tau(a * tau_inv(x)?)
}

/// Transformed subtraction `x1 (-) x2`, i.e. `t_combine([1, -1], [x1, x2])`.
pub fn t_sub(x1: f64, x2: f64) -> Result<f64> {
    tau(tau_inv(x1)? - tau_inv(x2)?)
}

/// Fused transformed-linear combination `tau(sum_j coeffs[j] * tau_inv(xs[j]))`.
pub fn t_combine(coeffs: &[f64], xs: &[f64]) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(Error::Domain("t_combine: empty input".into()));
    }
    if coeffs.len() != xs.len() {
        return Err(Error::Domain(format!(
            "t_combine: length mismatch ({} coefficients, {} values)",
            coeffs.len(),
            xs.len()
        )));
    }
    let mut acc = 0.0;
    for (&a, &x) in coeffs.iter().zip(xs) {
        if !a.is_finite() {
            return Err(Error::Domain(format!("t_combine: non-finite coefficient {a}")));
        }
        acc += a * tau_inv(x)?;
    }
    tau(acc)
}
