//! The transformed-linear innovations algorithm on a TPDF, the direct
//! projection solve, MA fitting from converged coefficients, and one-step
//! prediction.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;
use crate::tail::Tpdf;
use crate::translinear::{tau, tau_inv, ZERO_ELEMENT};

/// Floor substituted for zero observations before `tau_inv` in prediction
/// windows. `tau_inv(0)` is -infinity; the floor maps a clamped-to-zero
/// observation to a large negative value on the tau-inverse scale.
pub const ZERO_FLOOR: f64 = 1e-10;

/// Relative nu threshold below which the recursion aborts with a
/// singularity diagnostic instead of amplifying noise.
const NU_GUARD: f64 = 1e-10;

/// Per-coefficient tolerance for declaring the theta rows converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Number of consecutive converged rows required by [`fit_ma`].
pub const CONVERGENCE_ROWS: usize = 10;

/// A fitted transformed-linear MA(q) model: coefficients theta_1..theta_q
/// (theta_0 = 1 implicit) and the noise scale c.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaModel {
    pub theta: Vec<f64>,
    pub noise_scale: f64,
}

impl MaModel {
    pub fn order(&self) -> usize {
        self.theta.len()
    }
}

/// Triangular theta coefficients and squared distances of prediction from
/// the innovations recursion. Row n holds theta_{n,1}..theta_{n,n}.
#[derive(Debug, Clone)]
pub struct InnovationsState {
    theta: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
}

impl InnovationsState {
    pub fn n_max(&self) -> usize {
        self.theta.len()
    }

    /// theta_{n,j} for 1 <= j <= n.
    pub fn theta(&self, n: usize, j: usize) -> f64 {
        self.theta[n - 1][j - 1]
    }

    /// Row n as a slice [theta_{n,1}, ..., theta_{n,n}].
    pub fn row(&self, n: usize) -> &[f64] {
        &self.theta[n - 1]
    }
}

/// Run the innovations recursion on a TPDF:
/// `nu_0 = sigma(0)`;
/// `theta_{n,n-k} = nu_k^{-1} (sigma(n-k) - sum_{j<k} theta_{k,k-j} theta_{n,n-j} nu_j)`;
/// `nu_n = sigma(0) - sum_j theta_{n,n-j}^2 nu_j`.
/// sigma(h) is taken as 0 beyond the provided grid.
pub fn innovations_algorithm(tpdf: &Tpdf, n_max: usize) -> Result<InnovationsState> {
    let sigma0 = tpdf.sigma_at(0);
    if !(sigma0 > 0.0) {
        return Err(Error::Singular { step: 0, msg: format!("sigma(0) = {sigma0} not positive") });
    }
    let mut nu = Vec::with_capacity(n_max + 1);
    nu.push(sigma0);
    let mut theta: Vec<Vec<f64>> = Vec::with_capacity(n_max);

    for n in 1..=n_max {
        // row indexed by j - 1 for theta_{n,j}; filled back-to-front as k runs
        let mut row = vec![0.0; n];
        for k in 0..n {
            let mut acc = tpdf.sigma_at(n - k);
            for j in 0..k {
                // theta_{k,k-j} lives in row k (1-based), position k-j
                acc -= theta[k - 1][k - j - 1] * row[n - j - 1] * nu[j];
            }
            row[n - k - 1] = acc / nu[k];
        }
        let mut nu_n = sigma0;
        for j in 0..n {
            nu_n -= row[n - j - 1] * row[n - j - 1] * nu[j];
        }
        if nu_n <= NU_GUARD * sigma0 {
            return Err(Error::Singular {
                step: n,
                msg: format!(
                    "nu_{n} = {nu_n} <= {NU_GUARD} * sigma(0); Gamma_n singular or TPDF not nonnegative definite"
                ),
            });
        }
        nu.push(nu_n);
        theta.push(row);
    }

    Ok(InnovationsState { theta, nu })
}

/// Extract an MA(q) model from a converged innovations state. The last
/// [`CONVERGENCE_ROWS`] rows must agree coefficient-wise within
/// [`CONVERGENCE_TOL`] over j <= q_max. Negative coefficients are clamped
/// to zero (the zero-operator); `q` is the largest j <= q_max with
/// |theta_{N,j}| >= trunc_eps.
pub fn fit_ma(state: &InnovationsState, trunc_eps: f64, q_max: usize) -> Result<MaModel> {
    fit_ma_with_tolerance(state, trunc_eps, q_max, CONVERGENCE_TOL)
}

/// [`fit_ma`] with an explicit convergence tolerance. Empirical TPDFs
/// carry a positive noise floor at long lags (all estimator products are
/// nonnegative), so their theta rows stabilize near 1e-4 rather than the
/// default tolerance; callers fitting estimated TPDFs pass a looser value.
pub fn fit_ma_with_tolerance(
    state: &InnovationsState,
    trunc_eps: f64,
    q_max: usize,
    tol: f64,
) -> Result<MaModel> {
    if trunc_eps < 0.0 {
        return Err(Error::Argument(format!("trunc_eps {trunc_eps} must be >= 0")));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("convergence tolerance {tol} must be > 0")));
    }
    let n_max = state.n_max();
    if n_max < CONVERGENCE_ROWS + 1 || n_max <= q_max {
        return Err(Error::Convergence(format!(
            "state has only {n_max} rows; need more than max(q_max = {q_max}, {CONVERGENCE_ROWS})"
        )));
    }
    let mut worst = 0.0f64;
    for n in (n_max - CONVERGENCE_ROWS + 1)..=n_max {
        let prev = state.row(n - 1);
        let cur = state.row(n);
        for j in 0..q_max.min(prev.len()) {
            worst = worst.max((cur[j] - prev[j]).abs());
        }
    }
    if worst >= tol {
        return Err(Error::Convergence(format!(
            "theta rows not converged: max last-row delta {worst:.3e} >= {tol:.0e}"
        )));
    }

    let last = state.row(n_max);
    let q = (0..q_max.min(last.len()))
        .rev()
        .find(|&j| last[j].abs() >= trunc_eps)
        .map(|j| j + 1)
        .unwrap_or(0);
    let theta = last[..q].iter().map(|&t| t.max(0.0)).collect();
    Ok(MaModel { theta, noise_scale: state.nu[n_max].sqrt() })
}

/// Analytic TPDF of an MA(q) model: `sigma(h) = c^2 sum_j theta_j theta_{j+h}`
/// with theta_0 = 1, zero beyond lag q.
pub fn ma_tpdf(model: &MaModel) -> Tpdf {
    let q = model.order();
    let c2 = model.noise_scale * model.noise_scale;
    let full: Vec<f64> = std::iter::once(1.0).chain(model.theta.iter().copied()).collect();
    let sigma = (0..=q)
        .map(|h| c2 * (0..=q - h).map(|j| full[j] * full[j + h]).sum::<f64>())
        .collect();
    Tpdf::from_sigma(sigma)
}

/// Predictor weights from the direct projection solve `Sigma_n b = sigma_n`,
/// plus the squared distance of prediction `nu = sigma(0) - sigma_n' b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorWeights {
    pub b: Vec<f64>,
    pub nu: f64,
}

pub(crate) fn toeplitz(tpdf: &Tpdf, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| tpdf.sigma_at(i.abs_diff(j)))
}

/// Solve the prediction equations by Cholesky factorization of the
/// Toeplitz matrix built from the TPDF.
pub fn direct_predictor_weights(tpdf: &Tpdf, n: usize) -> Result<PredictorWeights> {
    if n == 0 {
        return Err(Error::Argument("direct_predictor_weights: n must be >= 1".into()));
    }
    let sigma_n = DVector::from_fn(n, |i, _| tpdf.sigma_at(i + 1));
    let chol = Cholesky::new(toeplitz(tpdf, n)).ok_or(Error::Singular {
        step: n,
        msg: "Cholesky factorization of Sigma_n failed (not positive definite)".into(),
    })?;
    let b = chol.solve(&sigma_n);
    let nu = tpdf.sigma_at(0) - sigma_n.dot(&b);
    Ok(PredictorWeights { b: b.iter().copied().collect(), nu })
}

fn floored_tau_inv(x: f64) -> Result<f64> {
    tau_inv(x.max(ZERO_FLOOR))
}

/// One-step prediction from a window of the last n observations:
/// `X_hat = t_combine(b, reversed window)`, so b[0] weights the most
/// recent value. Zeros in the window are floored at [`ZERO_FLOOR`].
pub fn one_step_predict(window: &[f64], weights: &PredictorWeights) -> Result<f64> {
    let n = weights.b.len();
    if window.len() != n {
        return Err(Error::Argument(format!(
            "one_step_predict: window length {} != weight length {n}",
            window.len()
        )));
    }
    let mut acc = 0.0;
    for (j, &b) in weights.b.iter().enumerate() {
        acc += b * floored_tau_inv(window[n - 1 - j])?;
    }
    tau(acc)
}

/// Fitted one-step predictions over a whole series via the innovations
/// representation `X_hat_{n+1} = (+)_j theta_{nj} (*) (X_{n+1-j} (-) X_hat_{n+1-j})`,
/// with `X_hat_1` the zero element. Returns a prediction for every index.
pub fn innovations_predict(data: &Series, state: &InnovationsState) -> Result<Vec<f64>> {
    let n_obs = data.len();
    if state.n_max() + 1 < n_obs {
        return Err(Error::Argument(format!(
            "innovations_predict: state depth {} < series length {} - 1",
            state.n_max(),
            n_obs
        )));
    }
    // innovations on the tau-inverse scale: d_t = tau_inv(X_t) - tau_inv(X_hat_t)
    let mut predictions = Vec::with_capacity(n_obs);
    let mut innov = Vec::with_capacity(n_obs);
    predictions.push(ZERO_ELEMENT);
    innov.push(floored_tau_inv(data.values[0])? - tau_inv(ZERO_ELEMENT)?);
    for n in 1..n_obs {
        let row = state.row(n);
        let mut acc = 0.0;
        for (j, &t) in row.iter().enumerate() {
            acc += t * innov[n - 1 - j];
        }
        let x_hat = tau(acc)?;
        predictions.push(x_hat);
        innov.push(floored_tau_inv(data.values[n])? - acc);
    }
    Ok(predictions)
}
