//! Seeded simulation of the processes used throughout: Frechet noise,
//! transformed-linear MA(q), GARCH(1,1) absolute values, and a first-order
//! Markov chain with bivariate logistic pair dependence.
//!
//! All generators are ChaCha20 seeded from a `u64`, so every sequence is
//! reproducible across platforms.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::innovations::MaModel;
use crate::series::{ScaleTag, Series};
use crate::translinear::t_combine;

/// Steps discarded before recording GARCH output, enough for approximate
/// mixing to the stationary law.
pub const GARCH_BURN_IN: usize = 1000;

/// i.i.d. Frechet draws with tail index 2 and the given scale:
/// CDF `exp(-(scale/z)^2)`, sampled by inverse transform.
pub fn frechet_noise(n: usize, scale: f64, seed: u64) -> Result<Series> {
    if n == 0 {
        return Err(Error::Argument("frechet_noise: n must be >= 1".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::Argument(format!("frechet_noise: scale {scale} must be > 0")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            scale * (-u.ln()).powf(-0.5)
        })
        .collect();
    Series::new(values, ScaleTag::Frechet2Unit)
}

/// Simulate a transformed-linear MA(q) series driven by Frechet(2, c) noise.
/// The first q noise draws are burn-in; the output has length `n`.
pub fn simulate_ma(model: &MaModel, n: usize, seed: u64) -> Result<Series> {
    let q = model.theta.len();
    let noise = frechet_noise(n + q, model.noise_scale, seed)?;
    let mut coeffs = Vec::with_capacity(q + 1);
    coeffs.push(1.0);
    coeffs.extend_from_slice(&model.theta);

    let mut values = Vec::with_capacity(n);
    let mut window = Vec::with_capacity(q + 1);
    for t in q..n + q {
        window.clear();
        // [Z_t, Z_{t-1}, ..., Z_{t-q}]
        for j in 0..=q {
            window.push(noise.values[t - j]);
        }
        values.push(t_combine(&coeffs, &window)?);
    }
    Series::new(values, ScaleTag::Frechet2Unit)
}

/// Absolute values of a GARCH(1,1) process with Gaussian innovations:
/// `sigma2_t = alpha0 + alpha1 * eps_{t-1}^2 + beta1 * sigma2_{t-1}`.
pub fn simulate_garch11(
    alpha0: f64,
    alpha1: f64,
    beta1: f64,
    n: usize,
    seed: u64,
) -> Result<Series> {
    if n == 0 {
        return Err(Error::Argument("simulate_garch11: n must be >= 1".into()));
    }
    if !(alpha0 > 0.0) || alpha1 < 0.0 || beta1 < 0.0 {
        return Err(Error::Argument("simulate_garch11: need alpha0 > 0, alpha1, beta1 >= 0".into()));
    }
    if alpha1 + beta1 >= 1.0 {
        return Err(Error::Argument(format!(
            "simulate_garch11: alpha1 + beta1 = {} >= 1 (nonstationary)",
            alpha1 + beta1
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // start at the stationary variance
    let mut sigma2 = alpha0 / (1.0 - alpha1 - beta1);
    let mut eps2 = sigma2;
    let mut values = Vec::with_capacity(n);
    for t in 0..GARCH_BURN_IN + n {
        sigma2 = alpha0 + alpha1 * eps2 + beta1 * sigma2;
        let eta: f64 = rng.sample(StandardNormal);
        let eps = sigma2.sqrt() * eta;
        eps2 = eps * eps;
        if t >= GARCH_BURN_IN {
            values.push(eps.abs());
        }
    }
    Series::new(values, ScaleTag::Original)
}

/// Bivariate logistic dependence function `V(x, y) = (x^{-1/b} + y^{-1/b})^b`.
fn logistic_v(x: f64, y: f64, beta: f64) -> f64 {
    (x.powf(-1.0 / beta) + y.powf(-1.0 / beta)).powf(beta)
}

/// Conditional CDF `F(y | x)` of the bivariate logistic with unit-Frechet
/// margins, obtained from dF/dx divided by the unit-Frechet density.
fn logistic_conditional_cdf(y: f64, x: f64, beta: f64) -> f64 {
    let s = x.powf(-1.0 / beta) + y.powf(-1.0 / beta);
    (1.0 / x - logistic_v(x, y, beta)).exp() * s.powf(beta - 1.0) * x.powf(1.0 - 1.0 / beta)
}

/// Invert the conditional CDF by bisection to relative tolerance 1e-10.
fn logistic_conditional_sample(u: f64, x: f64, beta: f64) -> f64 {
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while logistic_conditional_cdf(hi, x, beta) < u {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if logistic_conditional_cdf(mid, x, beta) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-10 * mid.max(1e-12) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// First-order Markov chain whose consecutive pairs follow the bivariate
/// logistic distribution `F(x, y) = exp(-V(x, y))` with dependence
/// parameter `beta` and common unit-Frechet margins. The chain starts in
/// stationarity (X1 unit Frechet).
pub fn simulate_logistic_markov(beta: f64, n: usize, seed: u64) -> Result<Series> {
    if n == 0 {
        return Err(Error::Argument("simulate_logistic_markov: n must be >= 1".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Argument(format!(
            "simulate_logistic_markov: beta {beta} outside (0, 1]"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let u0: f64 = rng.sample(Open01);
    let mut x = -1.0 / u0.ln();
    values.push(x);
    for _ in 1..n {
        let u: f64 = rng.sample(Open01);
        x = if beta >= 1.0 {
            // independent copula: marginal unit Frechet
            -1.0 / u.ln()
        } else {
            logistic_conditional_sample(u, x, beta)
        };
        values.push(x);
    }
    Series::new(values, ScaleTag::Original)
}
