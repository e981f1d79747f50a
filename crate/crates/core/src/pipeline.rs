//! End-to-end experiment orchestration: simulate or ingest a series, fit
//! its marginal tail, estimate the TPDF, fit an MA model by the
//! innovations algorithm, simulate from the fit, and compare tail
//! diagnostics. Optionally runs the prediction-interval study on a
//! train/test split. Every artifact is written to the output directory
//! and hashed into a manifest, so a rerun with the same config is
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{run_lengths, sum_quantiles, RunLengthSummary, SumQuantileSummary};
use crate::error::{Error, Result};
use crate::innovations::{
    direct_predictor_weights, fit_ma_with_tolerance, innovations_algorithm, one_step_predict,
    MaModel,
};
use crate::io;
use crate::series::{ScaleTag, Series};
use crate::simulate::{simulate_garch11, simulate_logistic_markov, simulate_ma};
use crate::tail::{chi_estimator, estimate_tpdf, fit_marginal, marginal_transform, back_transform, MarginalFit, Tpdf};
use crate::uncertainty::{
    angular_density, angular_std_bandwidth, conditional_interval, estimate_angular_measure,
    gaussian_baseline, joint_region, prediction_tpdm, IntervalRow, IntervalSet,
};
use crate::util::{mean, quantile, sample_std};

/// Data source for one pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Garch { alpha0: f64, alpha1: f64, beta1: f64 },
    Logistic { beta: f64 },
    Ma { theta: Vec<f64>, noise_scale: f64 },
    Csv { path: PathBuf },
}

/// How to bring the marginal onto the tail-index-2, unit-scale form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    /// Hill tail index plus plug-in scale at the given threshold quantile.
    Hill { quantile: f64 },
    /// Square-root transform, correct for unit-Frechet data.
    Sqrt,
    /// Data is already on the target marginal.
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub run_quantiles: Vec<f64>,
    pub sum_window: usize,
    pub sum_quantiles: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalsSpec {
    pub train_size: usize,
    pub window: usize,
    pub level: f64,
    pub q_star: usize,
    pub n_decomp: usize,
    /// Angular KDE bandwidth in radians; defaults to the mass-weighted
    /// angular standard deviation of the estimated measure.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

/// A complete, serializable description of one pipeline run. Unknown keys
/// are rejected so config typos fail fast.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelSpec,
    /// Sample size for simulated models; ignored for CSV input.
    pub n: usize,
    pub seed: u64,
    pub marginal: MarginalSpec,
    pub max_lag: usize,
    pub radial_quantile: f64,
    pub chi_quantile: f64,
    pub n_innovations: usize,
    pub q_max: usize,
    pub trunc_eps: f64,
    /// Convergence tolerance for the fitted theta rows; estimated TPDFs
    /// need a looser value than the analytic default because of the
    /// estimator's nonnegative noise floor at long lags.
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub intervals: Option<IntervalsSpec>,
}

pub const CONFIG_VERSION: u32 = 1;

fn default_convergence_tol() -> f64 {
    crate::innovations::CONVERGENCE_TOL
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Argument(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if let ModelSpec::Csv { path } = &self.model {
            if !path.exists() {
                return Err(Error::Argument(format!("input file {} not found", path.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalStudySummary {
    /// Joint-region angle bounds in radians.
    pub angle_low: f64,
    pub angle_high: f64,
    /// Fraction of radially large test pairs inside the joint region.
    pub joint_capture_rate: f64,
    pub n_large_joint: usize,
    /// Conditional-interval coverage over test points with large x_hat.
    pub coverage: f64,
    pub n_large_conditional: usize,
    /// Gaussian baseline coverage on the whole test set and on the same
    /// large-x_hat subset.
    pub baseline_coverage: f64,
    pub baseline_coverage_large: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub marginal_fit: MarginalFit,
    pub chi1: f64,
    pub nu_converged: f64,
    pub q_fitted: usize,
    pub theta: Vec<f64>,
    /// Mean (and standard error) of the per-lag difference between the
    /// original and fitted-model TPDF estimates over the first q lags.
    pub tpdf_mean_diff: f64,
    pub tpdf_diff_se: f64,
    pub run_lengths_original: Vec<RunLengthSummary>,
    pub run_lengths_fitted: Vec<RunLengthSummary>,
    pub sum_quantiles_original: Vec<SumQuantileSummary>,
    pub sum_quantiles_fitted: Vec<SumQuantileSummary>,
    pub intervals: Option<IntervalStudySummary>,
}

fn obtain_series(config: &ExperimentConfig) -> Result<Series> {
    match &config.model {
        ModelSpec::Garch { alpha0, alpha1, beta1 } => {
            simulate_garch11(*alpha0, *alpha1, *beta1, config.n, config.seed)
        }
        ModelSpec::Logistic { beta } => simulate_logistic_markov(*beta, config.n, config.seed),
        ModelSpec::Ma { theta, noise_scale } => {
            let m = MaModel { theta: theta.clone(), noise_scale: *noise_scale };
            simulate_ma(&m, config.n, config.seed)
        }
        ModelSpec::Csv { path } => io::read_series_csv(path, ScaleTag::Original),
    }
}

fn resolve_marginal(spec: &MarginalSpec, data: &Series) -> Result<MarginalFit> {
    match spec {
        MarginalSpec::Hill { quantile } => fit_marginal(data, *quantile),
        MarginalSpec::Sqrt => Ok(MarginalFit::unit_frechet()),
        MarginalSpec::Identity => Ok(MarginalFit::identity()),
    }
}

/// Transform, preprocess, and estimate the TPDF of a series under a
/// marginal spec. Returns the fit alongside the preprocessed series and
/// TPDF.
fn estimate_chain(
    data: &Series,
    spec: &MarginalSpec,
    max_lag: usize,
    radial_quantile: f64,
) -> Result<(MarginalFit, Series, Tpdf)> {
    let fit = resolve_marginal(spec, data)?;
    let transformed = marginal_transform(data, &fit)?;
    let pre = crate::tail::preprocess(&transformed)?;
    let tpdf = estimate_tpdf(&pre, max_lag, radial_quantile)?;
    Ok((fit, pre, tpdf))
}

struct Manifest {
    out_dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Manifest {
    fn hash_file(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.out_dir.join(name))?;
        self.hashes.insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }
}

/// Run the full pipeline and write all artifacts to `out_dir`.
pub fn run_pipeline(config: &ExperimentConfig, out_dir: &Path) -> Result<PipelineSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut manifest = Manifest { out_dir: out_dir.to_path_buf(), hashes: BTreeMap::new() };

    let stage = |name: &str, e: Error| -> Error {
        Error::Estimation(format!("pipeline stage '{name}' failed: {e}"))
    };

    // ingest / simulate
    let original = obtain_series(config).map_err(|e| stage("ingest", e))?;
    io::write_series_csv(&out_dir.join("original.csv"), &original)?;
    manifest.hash_file("original.csv")?;

    let chi1 = chi_estimator(&original, 1, config.chi_quantile).map_err(|e| stage("chi", e))?;

    // marginal fit, transform, preprocess, TPDF
    let (fit, pre, tpdf) =
        estimate_chain(&original, &config.marginal, config.max_lag, config.radial_quantile)
            .map_err(|e| stage("tpdf", e))?;
    io::write_json(&out_dir.join("marginal.json"), &fit)?;
    io::write_series_csv(&out_dir.join("preprocessed.csv"), &pre)?;
    io::write_tpdf_csv(&out_dir.join("tpdf.csv"), &tpdf)?;
    manifest.hash_file("marginal.json")?;
    manifest.hash_file("preprocessed.csv")?;
    manifest.hash_file("tpdf.csv")?;

    // innovations fit
    let state = innovations_algorithm(&tpdf, config.n_innovations)
        .map_err(|e| stage("innovations", e))?;
    let model =
        fit_ma_with_tolerance(&state, config.trunc_eps, config.q_max, config.convergence_tol)
            .map_err(|e| stage("fit-ma", e))?;
    #[derive(Serialize)]
    struct ModelDoc<'a> {
        theta: &'a [f64],
        noise_scale: f64,
        nu_trace: &'a [f64],
    }
    io::write_json(
        &out_dir.join("model.json"),
        &ModelDoc { theta: &model.theta, noise_scale: model.noise_scale, nu_trace: &state.nu },
    )?;
    manifest.hash_file("model.json")?;

    // simulate from the fit, back-transform to original marginals
    let fitted_sim = simulate_ma(&model, original.len(), config.seed.wrapping_add(1))
        .map_err(|e| stage("simulate-fitted", e))?;
    let fitted_original = back_transform(&fitted_sim, &fit).map_err(|e| stage("back-transform", e))?;
    io::write_series_csv(&out_dir.join("fitted_original.csv"), &fitted_original)?;
    manifest.hash_file("fitted_original.csv")?;

    // TPDF comparison over the first q lags, via the same estimation chain
    let q = model.order().max(1);
    let (_, _, fitted_tpdf) =
        estimate_chain(&fitted_original, &config.marginal, q, config.radial_quantile)
            .map_err(|e| stage("tpdf-fitted", e))?;
    let diffs: Vec<f64> = (1..=q).map(|h| tpdf.sigma_at(h) - fitted_tpdf.sigma_at(h)).collect();
    let tpdf_mean_diff = mean(&diffs);
    let tpdf_diff_se = sample_std(&diffs) / (diffs.len() as f64).sqrt();

    // tail diagnostics on the original scale
    let diag_seed = config.seed.wrapping_add(2);
    let mut run_orig = Vec::new();
    let mut run_fit = Vec::new();
    for &ql in &config.diagnostics.run_quantiles {
        run_orig.push(run_lengths(&original, ql).map_err(|e| stage("run-lengths", e))?);
        run_fit.push(run_lengths(&fitted_original, ql).map_err(|e| stage("run-lengths", e))?);
    }
    let sum_orig = sum_quantiles(
        &original,
        config.diagnostics.sum_window,
        &config.diagnostics.sum_quantiles,
        diag_seed,
    )
    .map_err(|e| stage("sum-quantiles", e))?;
    let sum_fit = sum_quantiles(
        &fitted_original,
        config.diagnostics.sum_window,
        &config.diagnostics.sum_quantiles,
        diag_seed,
    )
    .map_err(|e| stage("sum-quantiles", e))?;

    // optional prediction-interval study on a train/test split
    let intervals = match &config.intervals {
        None => None,
        Some(spec) => Some(
            interval_study(config, spec, &original, &fit, out_dir, &mut manifest)
                .map_err(|e| stage("intervals", e))?,
        ),
    };

    let summary = PipelineSummary {
        marginal_fit: fit,
        chi1,
        nu_converged: *state.nu.last().unwrap(),
        q_fitted: model.order(),
        theta: model.theta.clone(),
        tpdf_mean_diff,
        tpdf_diff_se,
        run_lengths_original: run_orig,
        run_lengths_fitted: run_fit,
        sum_quantiles_original: sum_orig,
        sum_quantiles_fitted: sum_fit,
        intervals,
    };
    io::write_json(&out_dir.join("summary.json"), &summary)?;
    manifest.hash_file("summary.json")?;
    io::write_json(&out_dir.join("config.json"), config)?;
    manifest.hash_file("config.json")?;
    io::write_json(&out_dir.join("manifest.json"), &manifest.hashes)?;

    Ok(summary)
}

fn interval_study(
    config: &ExperimentConfig,
    spec: &IntervalsSpec,
    original: &Series,
    fit: &MarginalFit,
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<IntervalStudySummary> {
    let n_total = original.len();
    if spec.train_size + spec.window + 100 > n_total {
        return Err(Error::Argument(format!(
            "train_size {} leaves too few test observations out of {n_total}",
            spec.train_size
        )));
    }

    // transform the whole series; the mean shift and clamping are used
    // only to estimate the TPDF from the training portion — predictions
    // and actuals stay on the tail-index-2 transformed scale
    let transformed = marginal_transform(original, fit)?;
    let train_mean = mean(&transformed.values[..spec.train_size]);
    let train = Series::new(
        transformed.values[..spec.train_size]
            .iter()
            .map(|&v| (v - train_mean).max(0.0))
            .collect(),
        ScaleTag::Preprocessed,
    )?;
    let tpdf = estimate_tpdf(&train, config.max_lag.min(spec.train_size / 20), config.radial_quantile)?;

    let weights = direct_predictor_weights(&tpdf, spec.window)?;
    let tpdm = prediction_tpdm(&tpdf, spec.window)?;
    let h = estimate_angular_measure(&tpdm, spec.q_star, spec.n_decomp, config.seed)?;
    io::write_json(&out_dir.join("angular.json"), &h)?;
    manifest.hash_file("angular.json")?;

    // one-step predictions for every test index, window taken from the
    // concatenated transformed series
    let mut x_hats = Vec::with_capacity(n_total - spec.train_size);
    for t in spec.train_size..n_total {
        let window = &transformed.values[t - spec.window..t];
        x_hats.push(one_step_predict(window, &weights)?);
    }
    let actuals = &transformed.values[spec.train_size..];

    // joint region capture over radially large test pairs
    let (angle_low, angle_high) = joint_region(&h, spec.level)?;
    let radii: Vec<f64> =
        x_hats.iter().zip(actuals).map(|(&p, &a)| p.hypot(a)).collect();
    let r_threshold = quantile(&radii, 0.95);
    let mut n_large_joint = 0usize;
    let mut captured = 0usize;
    for ((&p, &a), &r) in x_hats.iter().zip(actuals).zip(&radii) {
        if r > r_threshold {
            n_large_joint += 1;
            let angle = a.atan2(p);
            if angle >= angle_low && angle <= angle_high {
                captured += 1;
            }
        }
    }
    let joint_capture_rate = captured as f64 / n_large_joint.max(1) as f64;

    // conditional intervals where the prediction is large
    let bandwidth = spec.bandwidth.unwrap_or_else(|| angular_std_bandwidth(&h));
    let density = angular_density(&h, bandwidth)?;
    let x_hat_threshold = quantile(&x_hats, 0.95);
    let mut interval_set = IntervalSet::default();
    for (&p, &a) in x_hats.iter().zip(actuals) {
        if p > x_hat_threshold {
            let (lower, upper) = conditional_interval(p, &density, spec.level)?;
            interval_set.push(IntervalRow { x_hat: p, lower, upper, actual: Some(a) })?;
        }
    }
    io::write_intervals_csv(&out_dir.join("intervals.csv"), &interval_set)?;
    manifest.hash_file("intervals.csv")?;
    let (coverage, n_large_conditional) =
        crate::diagnostics::evaluate_coverage(&interval_set)?;

    // Gaussian baseline on the original-scale split
    let train_orig = Series::new(original.values[..spec.train_size].to_vec(), ScaleTag::Original)?;
    let test_orig = Series::new(original.values[spec.train_size..].to_vec(), ScaleTag::Original)?;
    let baseline = gaussian_baseline(&train_orig, &test_orig, spec.window, spec.level)?;
    let (baseline_coverage, _) = crate::diagnostics::evaluate_coverage(&baseline)?;
    // same large-x_hat subset, judged by the extreme-value predictor
    let mut baseline_large = IntervalSet::default();
    for (row, &p) in baseline.rows.iter().zip(&x_hats) {
        if p > x_hat_threshold {
            baseline_large.push(row.clone())?;
        }
    }
    let (baseline_coverage_large, _) = crate::diagnostics::evaluate_coverage(&baseline_large)?;

    Ok(IntervalStudySummary {
        angle_low,
        angle_high,
        joint_capture_rate,
        n_large_joint,
        coverage,
        n_large_conditional,
        baseline_coverage,
        baseline_coverage_large,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            version: 1,
            model: ModelSpec::Ma { theta: vec![0.5], noise_scale: 1.0 },
            n: 20_000,
            seed: 7,
            marginal: MarginalSpec::Identity,
            max_lag: 10,
            radial_quantile: 0.95,
            chi_quantile: 0.95,
            n_innovations: 100,
            q_max: 5,
            trunc_eps: 1e-2,
            convergence_tol: 1e-3,
            diagnostics: DiagnosticsSpec {
                run_quantiles: vec![0.95],
                sum_window: 3,
                sum_quantiles: vec![0.95],
            },
            intervals: None,
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let json = r#"{"version": 1, "bogus": true}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn config_rejects_bad_version() {
        let mut config = tiny_config();
        config.version = 99;
        assert!(config.validate().is_err());
    }

    #[test]
    fn pipeline_runs_and_is_deterministic() {
        let config = tiny_config();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let s1 = run_pipeline(&config, dir1.path()).unwrap();
        let s2 = run_pipeline(&config, dir2.path()).unwrap();
        assert!(s1.q_fitted >= 1);
        assert!((s1.theta[0] - 0.5).abs() < 0.15, "theta1 = {}", s1.theta[0]);
        // byte-identical manifests
        let m1 = std::fs::read_to_string(dir1.path().join("manifest.json")).unwrap();
        let m2 = std::fs::read_to_string(dir2.path().join("manifest.json")).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(s1.nu_converged, s2.nu_converged);
    }
}
