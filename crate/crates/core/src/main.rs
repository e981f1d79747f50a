//! Command-line front end. Every subcommand is a pure function of its
//! input files, flags, and seed; numeric outputs are byte-exact across
//! reruns. Exit codes: 0 success, 2 argument/domain error, 3
//! estimation/numerical error, 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tailcast::diagnostics::{evaluate_coverage, run_lengths, sum_quantiles};
use tailcast::innovations::{
    direct_predictor_weights, fit_ma_with_tolerance, innovations_algorithm, ma_tpdf,
    one_step_predict, MaModel,
};
use tailcast::io;
use tailcast::pipeline::{run_pipeline, ExperimentConfig};
use tailcast::simulate::{simulate_garch11, simulate_logistic_markov, simulate_ma};
use tailcast::tail::{back_transform, estimate_tpdf, fit_marginal, marginal_transform, preprocess};
use tailcast::uncertainty::{
    angular_density, angular_std_bandwidth, conditional_interval, estimate_angular_measure,
    gaussian_baseline, joint_region, prediction_tpdm, IntervalRow, IntervalSet,
};
use tailcast::{Error, MarginalFit, Result, ScaleTag, Tpdf};

#[derive(Parser)]
#[command(name = "tailcast", version, about = "Tail modeling and forecasting for heavy-tailed time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a named model.
    Simulate(SimulateArgs),
    /// Fit the marginal tail (Hill index and scale) above a quantile.
    FitMarginal(FitMarginalArgs),
    /// Transform a series to (or from) the tail-index-2, unit-scale marginal.
    Transform(TransformArgs),
    /// Subtract the mean and clamp at zero.
    Preprocess(InOutArgs),
    /// Estimate the tail pairwise dependence function.
    Tpdf(TpdfArgs),
    /// Fit an MA model to a TPDF with the innovations algorithm.
    FitMa(FitMaArgs),
    /// One-step-ahead predictions over a series.
    Predict(PredictArgs),
    /// Prediction intervals for large forecasts via the angular measure.
    Intervals(IntervalsArgs),
    /// Run-length and rolling-sum tail diagnostics.
    Diagnose(DiagnoseArgs),
    /// Rank-transform Gaussian prediction intervals for comparison.
    BaselineGaussian(BaselineArgs),
    /// Run a full configured experiment into an output directory.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// One of: ma, garch, logistic.
    #[arg(long)]
    model: String,
    /// Model parameters as inline JSON, e.g.
    /// '{"theta": [0.5], "noise_scale": 1.0}' for ma,
    /// '{"alpha0": 0.3, "alpha1": 0.2, "beta1": 0.7}' for garch,
    /// '{"beta": 0.35}' for logistic.
    #[arg(long)]
    params: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitMarginalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.99)]
    quantile: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Marginal fit JSON produced by fit-marginal.
    #[arg(long)]
    marginal: PathBuf,
    /// Apply the inverse transform (back to original marginals).
    #[arg(long)]
    inverse: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InOutArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TpdfArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 500)]
    max_lag: usize,
    #[arg(long, default_value_t = 0.99)]
    radial_quantile: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitMaArgs {
    #[arg(long)]
    tpdf: PathBuf,
    #[arg(long, default_value_t = 500)]
    n_max: usize,
    #[arg(long, default_value_t = 1e-3)]
    trunc_eps: f64,
    #[arg(long, default_value_t = 40)]
    q_max: usize,
    /// Theta-row convergence tolerance; loosen for estimated TPDFs.
    #[arg(long, default_value_t = 1e-6)]
    convergence_tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Fitted model JSON produced by fit-ma.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 40)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IntervalsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Fitted model JSON; used for the TPDF when --tpdf is absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Estimated TPDF CSV; takes precedence over --model.
    #[arg(long)]
    tpdf: Option<PathBuf>,
    #[arg(long)]
    window: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 5)]
    q_star: usize,
    #[arg(long, default_value_t = 100)]
    n_decomp: usize,
    /// KDE bandwidth in radians; defaults to the mass-weighted angular
    /// standard deviation of the estimated measure.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// Interval CSV; a JSON sidecar with the same stem carries coverage,
    /// joint-region angles, and angular point masses.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.95, 0.99])]
    run_quantiles: Vec<f64>,
    #[arg(long, default_value_t = 12)]
    sum_window: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.95, 0.99])]
    sum_quantiles: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 40)]
    window: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn read_model(path: &Path) -> Result<MaModel> {
    // accept both the bare model and the fit-ma document with nu_trace
    let doc: serde_json::Value = io::read_json(path)?;
    let model = serde_json::from_value(doc)
        .map_err(|e| Error::Argument(format!("{}: not a model document: {e}", path.display())))?;
    Ok(model)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => {
            let params: serde_json::Value = serde_json::from_str(&a.params)
                .map_err(|e| Error::Argument(format!("--params is not valid JSON: {e}")))?;
            let field = |name: &str| -> Result<f64> {
                params
                    .get(name)
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| Error::Argument(format!("--params missing number {name:?}")))
            };
            let series = match a.model.as_str() {
                "ma" => {
                    let model: MaModel = serde_json::from_value(params.clone()).map_err(|e| {
                        Error::Argument(format!("--params is not an MA model: {e}"))
                    })?;
                    simulate_ma(&model, a.n, a.seed)?
                }
                "garch" => {
                    simulate_garch11(field("alpha0")?, field("alpha1")?, field("beta1")?, a.n, a.seed)?
                }
                "logistic" => simulate_logistic_markov(field("beta")?, a.n, a.seed)?,
                other => {
                    return Err(Error::Argument(format!(
                        "unknown model {other:?} (expected ma, garch, or logistic)"
                    )))
                }
            };
            io::write_series_csv(&a.out, &series)
        }
        Command::FitMarginal(a) => {
            let series = io::read_series_csv(&a.input, ScaleTag::Original)?;
            let fit = fit_marginal(&series, a.quantile)?;
            io::write_json(&a.out, &fit)
        }
        Command::Transform(a) => {
            let fit: MarginalFit = io::read_json(&a.marginal)?;
            let out = if a.inverse {
                let series = io::read_series_csv(&a.input, ScaleTag::Frechet2Unit)?;
                back_transform(&series, &fit)?
            } else {
                let series = io::read_series_csv(&a.input, ScaleTag::Original)?;
                marginal_transform(&series, &fit)?
            };
            io::write_series_csv(&a.out, &out)
        }
        Command::Preprocess(a) => {
            let series = io::read_series_csv(&a.input, ScaleTag::Frechet2Unit)?;
            io::write_series_csv(&a.out, &preprocess(&series)?)
        }
        Command::Tpdf(a) => {
            let series = io::read_series_csv(&a.input, ScaleTag::Preprocessed)?;
            let tpdf = estimate_tpdf(&series, a.max_lag, a.radial_quantile)?;
            io::write_tpdf_csv(&a.out, &tpdf)
        }
        Command::FitMa(a) => {
            let tpdf = io::read_tpdf_csv(&a.tpdf)?;
            let state = innovations_algorithm(&tpdf, a.n_max)?;
            let model = fit_ma_with_tolerance(&state, a.trunc_eps, a.q_max, a.convergence_tol)?;
            #[derive(Serialize)]
            struct ModelDoc<'a> {
                theta: &'a [f64],
                noise_scale: f64,
                nu_trace: &'a [f64],
            }
            io::write_json(
                &a.out,
                &ModelDoc { theta: &model.theta, noise_scale: model.noise_scale, nu_trace: &state.nu },
            )
        }
        Command::Predict(a) => {
            let series = io::read_series_csv(&a.input, ScaleTag::Preprocessed)?;
            let model = read_model(&a.model)?;
            if a.window >= series.len() {
                return Err(Error::Argument(format!(
                    "--window {} >= series length {}",
                    a.window,
                    series.len()
                )));
            }
            let weights = direct_predictor_weights(&ma_tpdf(&model), a.window)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
            use std::io::Write;
            writeln!(w, "t,x_hat,actual")?;
            for t in a.window..series.len() {
                let x_hat = one_step_predict(&series.values[t - a.window..t], &weights)?;
                writeln!(w, "{t},{},{}", io::fmt_f64(x_hat), io::fmt_f64(series.values[t]))?;
            }
            Ok(())
        }
        Command::Intervals(a) => {
            let series = io::read_series_csv(&a.input, ScaleTag::Preprocessed)?;
            let tpdf: Tpdf = match (&a.tpdf, &a.model) {
                (Some(path), _) => io::read_tpdf_csv(path)?,
                (None, Some(path)) => ma_tpdf(&read_model(path)?),
                (None, None) => {
                    return Err(Error::Argument("intervals needs --tpdf or --model".into()))
                }
            };
            if a.window >= series.len() {
                return Err(Error::Argument(format!(
                    "--window {} >= series length {}",
                    a.window,
                    series.len()
                )));
            }
            let weights = direct_predictor_weights(&tpdf, a.window)?;
            let tpdm = prediction_tpdm(&tpdf, a.window)?;
            let h = estimate_angular_measure(&tpdm, a.q_star, a.n_decomp, a.seed)?;
            let density =
                angular_density(&h, a.bandwidth.unwrap_or_else(|| angular_std_bandwidth(&h)))?;
            let mut set = IntervalSet::default();
            for t in a.window..series.len() {
                let x_hat = one_step_predict(&series.values[t - a.window..t], &weights)?;
                let (lower, upper) = conditional_interval(x_hat, &density, a.level)?;
                set.push(IntervalRow { x_hat, lower, upper, actual: Some(series.values[t]) })?;
            }
            io::write_intervals_csv(&a.out, &set)?;
            let (coverage, n) = evaluate_coverage(&set)?;
            let (angle_low, angle_high) = joint_region(&h, a.level)?;
            #[derive(Serialize)]
            struct Sidecar<'a> {
                coverage: f64,
                n_intervals: usize,
                angle_low: f64,
                angle_high: f64,
                angular: &'a tailcast::AngularMeasure,
            }
            io::write_json(
                &a.out.with_extension("json"),
                &Sidecar { coverage, n_intervals: n, angle_low, angle_high, angular: &h },
            )
        }
        Command::Diagnose(a) => {
            let series = io::read_series_csv(&a.input, ScaleTag::Original)?;
            let runs = a
                .run_quantiles
                .iter()
                .map(|&q| run_lengths(&series, q))
                .collect::<Result<Vec<_>>>()?;
            let sums = sum_quantiles(&series, a.sum_window, &a.sum_quantiles, a.seed)?;
            #[derive(Serialize)]
            struct Report<T, U> {
                run_lengths: T,
                sum_quantiles: U,
            }
            io::write_json(&a.out, &Report { run_lengths: runs, sum_quantiles: sums })
        }
        Command::BaselineGaussian(a) => {
            let train = io::read_series_csv(&a.train, ScaleTag::Original)?;
            let test = io::read_series_csv(&a.test, ScaleTag::Original)?;
            let set = gaussian_baseline(&train, &test, a.window, a.level)?;
            io::write_intervals_csv(&a.out, &set)?;
            let (coverage, n) = evaluate_coverage(&set)?;
            #[derive(Serialize)]
            struct Sidecar {
                coverage: f64,
                n_intervals: usize,
            }
            io::write_json(&a.out.with_extension("json"), &Sidecar { coverage, n_intervals: n })
        }
        Command::Pipeline(a) => {
            let config: ExperimentConfig = io::read_json(&a.config)?;
            let summary = run_pipeline(&config, &a.out_dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
