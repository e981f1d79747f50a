//! Tail diagnostics: run lengths above high thresholds, rolling-sum
//! quantiles with bootstrap standard errors, and interval coverage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;
use crate::uncertainty::IntervalSet;
use crate::util::{mean, quantile, quantile_sorted, sample_std};

/// Bootstrap settings for [`sum_quantiles`]: nonoverlapping blocks of
/// 10 x window, 500 resamples.
const BOOTSTRAP_RESAMPLES: usize = 500;
const BOOTSTRAP_BLOCK_FACTOR: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLengthSummary {
    pub quantile: f64,
    pub mean_run: f64,
    pub std_err: f64,
    pub n_runs: usize,
}

/// Mean length (and standard error) of maximal consecutive runs strictly
/// above the empirical quantile.
pub fn run_lengths(data: &Series, quantile_level: f64) -> Result<RunLengthSummary> {
    if !(quantile_level > 0.5 && quantile_level < 1.0) {
        return Err(Error::Argument(format!(
            "run_lengths: quantile {quantile_level} outside (0.5, 1)"
        )));
    }
    let u = quantile(&data.values, quantile_level);
    let mut runs: Vec<f64> = Vec::new();
    let mut current = 0usize;
    for &v in &data.values {
        if v > u {
            current += 1;
        } else if current > 0 {
            runs.push(current as f64);
            current = 0;
        }
    }
    if current > 0 {
        runs.push(current as f64);
    }
    if runs.is_empty() {
        return Err(Error::Estimation(format!(
            "run_lengths: no exceedances above the {quantile_level} quantile"
        )));
    }
    let n_runs = runs.len();
    Ok(RunLengthSummary {
        quantile: quantile_level,
        mean_run: mean(&runs),
        std_err: sample_std(&runs) / (n_runs as f64).sqrt(),
        n_runs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumQuantileSummary {
    pub window: usize,
    pub quantile: f64,
    pub value: f64,
    pub std_err: f64,
}

/// Empirical quantiles of rolling sums of `window` consecutive values,
/// with standard errors from a seeded nonoverlapping block bootstrap.
pub fn sum_quantiles(
    data: &Series,
    window: usize,
    quantiles: &[f64],
    seed: u64,
) -> Result<Vec<SumQuantileSummary>> {
    let n = data.len();
    if window == 0 || window >= n / 10 {
        return Err(Error::Argument(format!(
            "sum_quantiles: window {window} invalid for length {n} (need 1 <= window < length/10)"
        )));
    }
    for &q in quantiles {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Argument(format!("sum_quantiles: quantile {q} outside (0, 1)")));
        }
    }
    // each window summed directly: no accumulator drift, so window = 1
    // reproduces the marginal quantiles exactly
    let sums: Vec<f64> =
        data.values.windows(window).map(|w| w.iter().sum()).collect();
    let mut sorted = sums.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let block = BOOTSTRAP_BLOCK_FACTOR * window;
    let n_blocks = sums.len() / block;
    if n_blocks < 2 {
        return Err(Error::Argument(format!(
            "sum_quantiles: too few bootstrap blocks ({n_blocks}) for window {window}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut resample_quantiles = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); quantiles.len()];
    let mut resample = Vec::with_capacity(n_blocks * block);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        resample.clear();
        for _ in 0..n_blocks {
            let b = rng.random_range(0..n_blocks);
            resample.extend_from_slice(&sums[b * block..(b + 1) * block]);
        }
        let mut rs = resample.clone();
        rs.sort_by(|a, b| a.total_cmp(b));
        for (qi, &q) in quantiles.iter().enumerate() {
            resample_quantiles[qi].push(quantile_sorted(&rs, q));
        }
    }

    Ok(quantiles
        .iter()
        .enumerate()
        .map(|(qi, &q)| SumQuantileSummary {
            window,
            quantile: q,
            value: quantile_sorted(&sorted, q),
            std_err: sample_std(&resample_quantiles[qi]),
        })
        .collect())
}

/// Fraction of rows with `lower <= actual <= upper`. Every row must carry
/// an actual value.
pub fn evaluate_coverage(intervals: &IntervalSet) -> Result<(f64, usize)> {
    if intervals.rows.is_empty() {
        return Err(Error::Argument("evaluate_coverage: empty interval set".into()));
    }
    let mut hits = 0usize;
    for row in &intervals.rows {
        let actual = row.actual.ok_or_else(|| {
            Error::Argument("evaluate_coverage: row without an actual value".into())
        })?;
        if row.lower <= actual && actual <= row.upper {
            hits += 1;
        }
    }
    let n = intervals.rows.len();
    Ok((hits as f64 / n as f64, n))
}
