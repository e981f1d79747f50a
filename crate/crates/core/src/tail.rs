//! From raw data to a TPDF: tail index and scale estimation, the marginal
//! transform to tail index 2 with unit scale, preprocessing, TPDF estimation
//! from radial exceedances, and the chi dependence diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{ScaleTag, Series};
use crate::util::{quantile_sorted, mean};

/// Minimum number of exceedances for a usable tail fit.
pub const MIN_EXCEEDANCES: usize = 30;

/// Fitted marginal tail: `Pr(X > x) ~ c_hat * x^{-alpha_hat}` above the
/// threshold quantile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub threshold_quantile: f64,
    pub n_exceed: usize,
}

impl MarginalFit {
    /// The identity transform on data that is already on the alpha = 2,
    /// unit-scale marginal.
    pub fn identity() -> Self {
        MarginalFit { alpha_hat: 2.0, c_hat: 1.0, threshold_quantile: 0.0, n_exceed: 0 }
    }

    /// Square-root transform for unit-Frechet (alpha = 1) data.
    pub fn unit_frechet() -> Self {
        MarginalFit { alpha_hat: 1.0, c_hat: 1.0, threshold_quantile: 0.0, n_exceed: 0 }
    }
}

/// The tail pairwise dependence function on a lag grid, sigma(0..=H).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tpdf {
    pub sigma: Vec<f64>,
    /// Radial threshold quantile used by the estimator; `None` for
    /// analytically derived TPDFs.
    pub radial_quantile: Option<f64>,
    pub n_pairs_used: Vec<usize>,
}

impl Tpdf {
    pub fn from_sigma(sigma: Vec<f64>) -> Self {
        Tpdf { sigma, radial_quantile: None, n_pairs_used: Vec::new() }
    }

    pub fn max_lag(&self) -> usize {
        self.sigma.len().saturating_sub(1)
    }

    /// sigma(h), taken as exactly 0 beyond the stored grid.
    pub fn sigma_at(&self, h: usize) -> f64 {
        self.sigma.get(h).copied().unwrap_or(0.0)
    }
}

fn positive_sorted(data: &Series) -> Vec<f64> {
    let mut v: Vec<f64> = data.values.iter().copied().filter(|&x| x > 0.0).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn threshold_and_exceedances(data: &Series, threshold_quantile: f64) -> Result<(f64, Vec<f64>)> {
    if !(threshold_quantile > 0.0 && threshold_quantile < 1.0) {
        return Err(Error::Argument(format!(
            "threshold quantile {threshold_quantile} outside (0, 1)"
        )));
    }
    let sorted = positive_sorted(data);
    if sorted.len() < 100 {
        return Err(Error::Estimation(format!(
            "need >= 100 positive values for a tail fit, got {}",
            sorted.len()
        )));
    }
    let u = quantile_sorted(&sorted, threshold_quantile);
    let exceed: Vec<f64> = sorted.iter().copied().filter(|&x| x > u).collect();
    if exceed.len() < MIN_EXCEEDANCES {
        return Err(Error::Estimation(format!(
            "only {} exceedances above the {threshold_quantile} quantile (need {MIN_EXCEEDANCES})",
            exceed.len()
        )));
    }
    Ok((u, exceed))
}

/// Hill estimator of the tail index at the given empirical quantile:
/// `alpha_hat = [k^{-1} sum_i log(x_(n-i+1) / u)]^{-1}` over the k
/// exceedances of the threshold u.
pub fn hill_estimator(data: &Series, threshold_quantile: f64) -> Result<f64> {
    let (u, exceed) = threshold_and_exceedances(data, threshold_quantile)?;
    let k = exceed.len() as f64;
    let sum_log: f64 = exceed.iter().map(|&x| (x / u).ln()).sum();
    Ok(k / sum_log)
}

/// Plug-in tail scale from `Pr(X > u) ~ c u^{-alpha}`: `c_hat = (k/n) u^alpha_hat`.
pub fn scale_estimator(data: &Series, alpha_hat: f64, threshold_quantile: f64) -> Result<f64> {
    if !(alpha_hat > 0.0) {
        return Err(Error::Argument(format!("alpha_hat {alpha_hat} must be > 0")));
    }
    let (u, exceed) = threshold_and_exceedances(data, threshold_quantile)?;
    let n = data.len() as f64;
    Ok((exceed.len() as f64 / n) * u.powf(alpha_hat))
}

/// Fit the marginal tail: Hill tail index plus plug-in scale.
pub fn fit_marginal(data: &Series, threshold_quantile: f64) -> Result<MarginalFit> {
    let alpha_hat = hill_estimator(data, threshold_quantile)?;
    let c_hat = scale_estimator(data, alpha_hat, threshold_quantile)?;
    let (_, exceed) = threshold_and_exceedances(data, threshold_quantile)?;
    Ok(MarginalFit { alpha_hat, c_hat, threshold_quantile, n_exceed: exceed.len() })
}

/// Transform to tail index 2 with unit tail scale:
/// `x -> c_hat^{-1/2} * x^{alpha_hat/2}`.
pub fn marginal_transform(data: &Series, fit: &MarginalFit) -> Result<Series> {
    let scale = fit.c_hat.powf(-0.5);
    let values: Result<Vec<f64>> = data
        .values
        .iter()
        .map(|&x| {
            if x < 0.0 {
                Err(Error::Domain(format!("marginal_transform: negative input {x}")))
            } else {
                Ok(scale * x.powf(fit.alpha_hat / 2.0))
            }
        })
        .collect();
    Series::new(values?, ScaleTag::Frechet2Unit)
}

/// Inverse of [`marginal_transform`]: `x -> (c_hat^{1/2} * x)^{2/alpha_hat}`.
pub fn back_transform(data: &Series, fit: &MarginalFit) -> Result<Series> {
    let scale = fit.c_hat.powf(0.5);
    let values: Result<Vec<f64>> = data
        .values
        .iter()
        .map(|&x| {
            if x < 0.0 {
                Err(Error::Domain(format!("back_transform: negative input {x}")))
            } else {
                Ok((scale * x).powf(2.0 / fit.alpha_hat))
            }
        })
        .collect();
    Series::new(values?, ScaleTag::Original)
}

/// Subtract the mean and clamp negatives at zero. Not idempotent: a second
/// application shifts again.
pub fn preprocess(data: &Series) -> Result<Series> {
    let m = mean(&data.values);
    let values = data.values.iter().map(|&x| (x - m).max(0.0)).collect();
    Series::new(values, ScaleTag::Preprocessed)
}

/// Estimate the TPDF up to `max_lag` from pairs whose radial component
/// exceeds the per-lag empirical `radial_quantile`:
/// `sigma_hat(h) = 2 * mean(x_t * x_{t+h} / r_t^2)` over exceedances, with
/// `sigma_hat(0) = 1` by the degenerate-pair convention.
pub fn estimate_tpdf(data: &Series, max_lag: usize, radial_quantile: f64) -> Result<Tpdf> {
    if data.scale != ScaleTag::Preprocessed {
        return Err(Error::Argument("estimate_tpdf: series must be preprocessed".into()));
    }
    if !(radial_quantile > 0.0 && radial_quantile < 1.0) {
        return Err(Error::Argument(format!(
            "radial quantile {radial_quantile} outside (0, 1)"
        )));
    }
    let n = data.len();
    if max_lag >= n / 10 {
        return Err(Error::Argument(format!(
            "max_lag {max_lag} too large for series of length {n} (need < length/10)"
        )));
    }
    let x = &data.values;
    let mut sigma = Vec::with_capacity(max_lag + 1);
    let mut n_pairs = Vec::with_capacity(max_lag + 1);

    // lag 0: the pair (x_t, x_t) has angle (1/sqrt2, 1/sqrt2) exactly
    sigma.push(1.0);
    {
        let mut r: Vec<f64> = x.iter().map(|&v| std::f64::consts::SQRT_2 * v).collect();
        r.sort_by(|a, b| a.total_cmp(b));
        let u = quantile_sorted(&r, radial_quantile);
        n_pairs.push(r.iter().filter(|&&v| v > u).count());
    }

    for h in 1..=max_lag {
        let m = n - h;
        let mut r2: Vec<f64> = Vec::with_capacity(m);
        for t in 0..m {
            r2.push(x[t] * x[t] + x[t + h] * x[t + h]);
        }
        let mut r2_sorted = r2.clone();
        r2_sorted.sort_by(|a, b| a.total_cmp(b));
        let u2 = quantile_sorted(&r2_sorted, radial_quantile);

        let mut sum = 0.0;
        let mut count = 0usize;
        for t in 0..m {
            if r2[t] > u2 {
                sum += x[t] * x[t + h] / r2[t];
                count += 1;
            }
        }
        if count < MIN_EXCEEDANCES {
            return Err(Error::Estimation(format!(
                "estimate_tpdf: only {count} radial exceedances at lag {h} (need {MIN_EXCEEDANCES})"
            )));
        }
        // clamp: values are nonnegative post-preprocess, so only the upper
        // bound can bind
        sigma.push((2.0 * sum / count as f64).clamp(0.0, 1.0));
        n_pairs.push(count);
    }

    Ok(Tpdf { sigma, radial_quantile: Some(radial_quantile), n_pairs_used: n_pairs })
}

/// Empirical conditional exceedance probability at lag `lag`:
/// `chi_hat = #{x_t > u, x_{t+lag} > u} / #{x_t > u}` with u the empirical
/// `quantile` of the data.
pub fn chi_estimator(data: &Series, lag: usize, quantile: f64) -> Result<f64> {
    if !(0.8..1.0).contains(&quantile) {
        return Err(Error::Argument(format!("chi quantile {quantile} outside [0.8, 1)")));
    }
    let n = data.len();
    if lag == 0 || lag >= n {
        return Err(Error::Argument(format!("chi lag {lag} invalid for length {n}")));
    }
    let mut sorted = data.values.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let u = quantile_sorted(&sorted, quantile);
    let mut cond = 0usize;
    let mut joint = 0usize;
    for t in 0..n - lag {
        if data.values[t] > u {
            cond += 1;
            if data.values[t + lag] > u {
                joint += 1;
            }
        }
    }
    if cond < MIN_EXCEEDANCES {
        return Err(Error::Estimation(format!(
            "chi_estimator: only {cond} exceedances above the {quantile} quantile"
        )));
    }
    Ok(joint as f64 / cond as f64)
}
