//! Uncertainty quantification for large predictions: the 2x2 prediction
//! TPDM, its completely positive decompositions, the induced angular
//! measure, joint regions, conditional densities and intervals, and a
//! rank-transform Gaussian baseline.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::innovations::toeplitz;
use crate::series::Series;
use crate::tail::Tpdf;
use crate::util::mean;

/// Number of grid points for the angular density.
pub const DENSITY_GRID: usize = 1024;
/// Number of integration nodes for the conditional density.
pub const CONDITIONAL_GRID: usize = 4096;
/// Default CP decomposition settings: projection-gap tolerance, iteration
/// cap, and seed retries.
pub const CP_TOL: f64 = 1e-10;
pub const CP_MAX_ITER: usize = 5000;
pub const CP_RETRIES: u64 = 20;

/// The 2x2 prediction TPDM `[[s, s], [s, sigma(0)]]` of
/// (predictor, predictand), with `s = sigma_n' Sigma_n^{-1} sigma_n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionTpdm {
    pub s: f64,
    pub sigma0: f64,
}

impl PredictionTpdm {
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.s, self.s, self.s, self.sigma0)
    }

    pub fn trace(&self) -> f64 {
        self.s + self.sigma0
    }
}

/// Build the prediction TPDM from a TPDF at window length n, via the same
/// Cholesky solve as the direct predictor weights.
pub fn prediction_tpdm(tpdf: &Tpdf, n: usize) -> Result<PredictionTpdm> {
    if n == 0 {
        return Err(Error::Argument("prediction_tpdm: n must be >= 1".into()));
    }
    let sigma_n = DVector::from_fn(n, |i, _| tpdf.sigma_at(i + 1));
    let chol = nalgebra::Cholesky::new(toeplitz(tpdf, n)).ok_or(Error::Singular {
        step: n,
        msg: "Cholesky factorization of Sigma_n failed".into(),
    })?;
    let s = sigma_n.dot(&chol.solve(&sigma_n));
    Ok(PredictionTpdm { s, sigma0: tpdf.sigma_at(0) })
}

fn symmetric_sqrt(a: &Matrix2<f64>) -> Matrix2<f64> {
    let eig = SymmetricEigen::new(*a);
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = eig.eigenvectors;
    v * Matrix2::from_diagonal(&d) * v.transpose()
}

/// Haar-ish random orthogonal matrix from the QR factorization of a
/// Gaussian matrix.
fn random_orthogonal(k: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..k {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

fn clamp_nonneg(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

/// One attempt at a completely positive factorization `A = B B'` with
/// `B >= 0` of shape 2 x q_star: alternating nonnegative projection and
/// orthogonal Procrustes updates starting from `C = [A^{1/2} | 0]` and a
/// random orthogonal rotation.
pub fn cp_decompose(
    a: &PredictionTpdm,
    q_star: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    if q_star < 2 {
        return Err(Error::Argument(format!("cp_decompose: q_star {q_star} must be >= 2")));
    }
    let am = a.matrix();
    if a.s < 0.0 || a.sigma0 < 0.0 {
        return Err(Error::Argument("cp_decompose: matrix entries must be nonnegative".into()));
    }
    let root = symmetric_sqrt(&am);
    let mut c = DMatrix::zeros(2, q_star);
    for i in 0..2 {
        for j in 0..2 {
            c[(i, j)] = root[(i, j)];
        }
    }
    let a_dyn = DMatrix::from_fn(2, 2, |i, j| am[(i, j)]);

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut q = random_orthogonal(q_star, &mut rng);
    let mut m = &c * &q;
    for _ in 0..max_iter {
        let p = clamp_nonneg(&m);
        let gap = (&m - &p).norm();
        if gap < tol {
            break;
        }
        // Procrustes: polar factor of C' P
        let svd = (c.transpose() * &p).svd(true, true);
        let u = svd.u.as_ref().expect("svd u");
        let vt = svd.v_t.as_ref().expect("svd v_t");
        q = u * vt;
        m = &c * &q;
    }
    let mut b = clamp_nonneg(&m);
    // final diagonal correction: rescale rows to restore the diagonal of A
    let bbt = &b * b.transpose();
    let mut scaled = b.clone();
    for i in 0..2 {
        if bbt[(i, i)] > 0.0 {
            let d = (a_dyn[(i, i)] / bbt[(i, i)]).sqrt();
            for j in 0..q_star {
                scaled[(i, j)] *= d;
            }
        }
    }
    let res_raw = (&b * b.transpose() - &a_dyn).norm();
    let res_scaled = (&scaled * scaled.transpose() - &a_dyn).norm();
    if res_scaled < res_raw {
        b = scaled;
    }
    let residual = res_raw.min(res_scaled);
    if residual > 1e-8 {
        return Err(Error::Decomposition(format!(
            "cp_decompose: residual {residual:.3e} > 1e-8 after {max_iter} iterations"
        )));
    }
    Ok(b)
}

/// [`cp_decompose`] with retries over consecutive seeds; bad random starts
/// occasionally stall the alternating projection.
pub fn cp_decompose_retry(a: &PredictionTpdm, q_star: usize, base_seed: u64) -> Result<DMatrix<f64>> {
    let mut last = None;
    for k in 0..CP_RETRIES {
        match cp_decompose(a, q_star, base_seed.wrapping_add(k), CP_TOL, CP_MAX_ITER) {
            Ok(b) => return Ok(b),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap())
}

/// A weighted point mass on the unit quarter circle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngularPoint {
    /// Unit vector in the nonnegative quadrant, (predictor, predictand).
    pub w: [f64; 2],
    pub mass: f64,
}

impl AngularPoint {
    pub fn angle(&self) -> f64 {
        self.w[1].atan2(self.w[0])
    }
}

/// Discrete angular measure built from CP decompositions: each column b of
/// each B matrix contributes mass ||b||^2 / n_decomp at angle b / ||b||.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngularMeasure {
    pub points: Vec<AngularPoint>,
    pub n_decomp: usize,
    pub q_star: usize,
}

impl AngularMeasure {
    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|p| p.mass).sum()
    }
}

pub fn angular_measure(bs: &[DMatrix<f64>]) -> AngularMeasure {
    let n_decomp = bs.len();
    let q_star = bs.first().map(|b| b.ncols()).unwrap_or(0);
    let mut points = Vec::new();
    for b in bs {
        for j in 0..b.ncols() {
            let col = b.column(j);
            let norm = col.norm();
            if norm < 1e-14 {
                continue;
            }
            points.push(AngularPoint {
                w: [col[0] / norm, col[1] / norm],
                mass: norm * norm / n_decomp as f64,
            });
        }
    }
    AngularMeasure { points, n_decomp, q_star }
}

/// Estimate the angular measure of a prediction TPDM by repeated CP
/// decomposition with seeds `base_seed + k`.
pub fn estimate_angular_measure(
    tpdm: &PredictionTpdm,
    q_star: usize,
    n_decomp: usize,
    base_seed: u64,
) -> Result<AngularMeasure> {
    let mut bs = Vec::with_capacity(n_decomp);
    for k in 0..n_decomp {
        bs.push(cp_decompose_retry(tpdm, q_star, base_seed.wrapping_add(1000 * k as u64))?);
    }
    Ok(angular_measure(&bs))
}

/// Mass-weighted angle quantile of the measure.
fn weighted_angle_quantile(h: &AngularMeasure, p: f64) -> f64 {
    let mut atoms: Vec<(f64, f64)> = h.points.iter().map(|pt| (pt.angle(), pt.mass)).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let target = p * total;
    let mut cum = 0.0;
    for (angle, mass) in &atoms {
        cum += mass;
        if cum >= target {
            return *angle;
        }
    }
    atoms.last().map(|a| a.0).unwrap_or(0.0)
}

/// Central mass-weighted quantile interval of the angle, e.g. level 0.95
/// gives the 0.025 and 0.975 angle quantiles.
pub fn joint_region(h: &AngularMeasure, level: f64) -> Result<(f64, f64)> {
    if h.points.is_empty() || h.total_mass() <= 0.0 {
        return Err(Error::Argument("joint_region: empty angular measure".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("joint_region: level {level} outside (0, 1)")));
    }
    let lo = weighted_angle_quantile(h, (1.0 - level) / 2.0);
    let hi = weighted_angle_quantile(h, 1.0 - (1.0 - level) / 2.0);
    Ok((lo, hi))
}

/// Kernel density estimate of the angular measure on a fixed grid over
/// [0, pi/2], with Gaussian kernels reflected at both boundaries.
#[derive(Debug, Clone)]
pub struct AngularDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl AngularDensity {
    /// Linear interpolation of the density at angle theta.
    pub fn at(&self, theta: f64) -> f64 {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let t = theta.clamp(0.0, half_pi);
        let step = half_pi / (self.grid.len() - 1) as f64;
        let pos = t / step;
        let i = (pos.floor() as usize).min(self.grid.len() - 2);
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Trapezoid-rule integral over [0, pi/2].
    pub fn integral(&self) -> f64 {
        let step = self.grid[1] - self.grid[0];
        let mut sum = 0.0;
        for w in self.values.windows(2) {
            sum += 0.5 * (w[0] + w[1]) * step;
        }
        sum
    }

    /// Mass quantile of the density via its trapezoid CDF.
    pub fn mass_quantile(&self, p: f64) -> f64 {
        let step = self.grid[1] - self.grid[0];
        let total = self.integral();
        let target = p * total;
        let mut cum = 0.0;
        for (i, w) in self.values.windows(2).enumerate() {
            let inc = 0.5 * (w[0] + w[1]) * step;
            if cum + inc >= target {
                let frac = if inc > 0.0 { (target - cum) / inc } else { 0.0 };
                return self.grid[i] + frac * step;
            }
            cum += inc;
        }
        *self.grid.last().unwrap()
    }
}

/// Silverman's rule on the mass-weighted angle sample, with the effective
/// sample size (sum m)^2 / sum m^2.
pub fn silverman_bandwidth(h: &AngularMeasure) -> f64 {
    let total = h.total_mass();
    if total <= 0.0 || h.points.len() < 2 {
        return 0.05;
    }
    let angles: Vec<f64> = h.points.iter().map(|p| p.angle()).collect();
    let masses: Vec<f64> = h.points.iter().map(|p| p.mass).collect();
    let m = angles.iter().zip(&masses).map(|(a, w)| a * w).sum::<f64>() / total;
    let var = angles.iter().zip(&masses).map(|(a, w)| w * (a - m).powi(2)).sum::<f64>() / total;
    let std = var.sqrt();

    let mut sorted: Vec<(f64, f64)> =
        angles.iter().copied().zip(masses.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let wq = |p: f64| {
        let target = p * total;
        let mut cum = 0.0;
        for (a, w) in &sorted {
            cum += w;
            if cum >= target {
                return *a;
            }
        }
        sorted.last().unwrap().0
    };
    let iqr = wq(0.75) - wq(0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    let m_eff = total * total / masses.iter().map(|w| w * w).sum::<f64>();
    (0.9 * spread * m_eff.powf(-0.2)).max(1e-3)
}

/// Mass-weighted standard deviation of the atom angles, floored at 1e-3.
/// The atoms are a discretization of the measure rather than an i.i.d.
/// sample from it, so Silverman's rule badly under-smooths; smoothing at
/// the measure's own angular dispersion gives honest interval widths.
pub fn angular_std_bandwidth(h: &AngularMeasure) -> f64 {
    let total = h.total_mass();
    if total <= 0.0 || h.points.len() < 2 {
        return 0.05;
    }
    let m = h.points.iter().map(|p| p.angle() * p.mass).sum::<f64>() / total;
    let var =
        h.points.iter().map(|p| p.mass * (p.angle() - m).powi(2)).sum::<f64>() / total;
    var.sqrt().max(1e-3)
}

/// Gaussian KDE of the angular measure with reflection at 0 and pi/2.
pub fn angular_density(h: &AngularMeasure, bandwidth: f64) -> Result<AngularDensity> {
    if !(bandwidth > 0.0) {
        return Err(Error::Argument(format!("angular_density: bandwidth {bandwidth} must be > 0")));
    }
    if h.total_mass() <= 0.0 {
        return Err(Error::Argument("angular_density: empty angular measure".into()));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let grid: Vec<f64> =
        (0..DENSITY_GRID).map(|i| half_pi * i as f64 / (DENSITY_GRID - 1) as f64).collect();
    let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let kernel = |d: f64| norm * (-0.5 * (d / bandwidth).powi(2)).exp();
    let values = grid
        .iter()
        .map(|&t| {
            h.points
                .iter()
                .map(|p| {
                    let a = p.angle();
                    // reflections at 0 and pi/2
                    p.mass * (kernel(t - a) + kernel(t + a) + kernel(t - (std::f64::consts::PI - a)))
                })
                .sum()
        })
        .collect();
    Ok(AngularDensity { grid, values, bandwidth })
}

/// Integration grid for the conditional density: geometric near zero,
/// linear above x1/100.
fn conditional_grid(x1: f64, x_max: f64) -> Vec<f64> {
    let n_geo = CONDITIONAL_GRID / 4;
    let n_lin = CONDITIONAL_GRID - n_geo;
    let knee = (x1 / 100.0).min(x_max / 2.0);
    let lo = knee * 1e-6;
    let mut grid = Vec::with_capacity(CONDITIONAL_GRID + 1);
    grid.push(0.0);
    let ratio = (knee / lo).powf(1.0 / (n_geo - 1) as f64);
    let mut v = lo;
    for _ in 0..n_geo {
        grid.push(v);
        v *= ratio;
    }
    let step = (x_max - knee) / n_lin as f64;
    for i in 1..=n_lin {
        grid.push(knee + step * i as f64);
    }
    grid
}

/// Central quantile interval of the conditional density of the predictand
/// given a large predicted value `x1`:
/// `f(x2 | x1) ~ ||(x1, x2)||^{-5} x2 h((x1, x2)/||(x1, x2)||)`.
pub fn conditional_interval(x1: f64, h: &AngularDensity, level: f64) -> Result<(f64, f64)> {
    if !(x1 > 0.0) {
        return Err(Error::Argument(format!("conditional_interval: x1 {x1} must be > 0")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("conditional_interval: level {level} outside (0, 1)")));
    }
    let theta_hi = h.mass_quantile(0.999);
    let x_max = x1 * theta_hi.tan().min(1e4) + 10.0 * x1;
    let grid = conditional_grid(x1, x_max);
    let dens: Vec<f64> = grid
        .iter()
        .map(|&x2| {
            let r = x1.hypot(x2);
            let angle = x2.atan2(x1);
            2.0 * r.powi(-5) * x2 * h.at(angle)
        })
        .collect();
    // trapezoid CDF
    let mut cdf = Vec::with_capacity(grid.len());
    cdf.push(0.0);
    let mut cum = 0.0;
    for i in 1..grid.len() {
        cum += 0.5 * (dens[i - 1] + dens[i]) * (grid[i] - grid[i - 1]);
        cdf.push(cum);
    }
    let total = cum;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Estimation(
            "conditional_interval: degenerate conditional density (zero mass on grid)".into(),
        ));
    }
    let invert = |p: f64| -> f64 {
        let target = p * total;
        match cdf.iter().position(|&c| c >= target) {
            Some(0) | None => grid[0],
            Some(i) => {
                let span = cdf[i] - cdf[i - 1];
                let frac = if span > 0.0 { (target - cdf[i - 1]) / span } else { 0.0 };
                grid[i - 1] + frac * (grid[i] - grid[i - 1])
            }
        }
    };
    let lo = invert((1.0 - level) / 2.0);
    let hi = invert(1.0 - (1.0 - level) / 2.0);
    Ok((lo, hi))
}

/// One prediction interval row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalRow {
    pub x_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub actual: Option<f64>,
}

/// A set of prediction intervals, optionally with realized values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IntervalSet {
    pub rows: Vec<IntervalRow>,
}

impl IntervalSet {
    pub fn push(&mut self, row: IntervalRow) -> Result<()> {
        if row.lower > row.upper {
            return Err(Error::Argument(format!(
                "interval lower {} > upper {}",
                row.lower, row.upper
            )));
        }
        self.rows.push(row);
        Ok(())
    }
}

/// Rank-transform Gaussian baseline: map the marginal to standard normal
/// scores, estimate the autocovariance, form BLUP weights by the same
/// Toeplitz solve, and build `x_hat +/- z * sqrt(MSPE)` intervals mapped
/// back through the empirical quantile map.
pub fn gaussian_baseline(
    train: &Series,
    test: &Series,
    n: usize,
    level: f64,
) -> Result<IntervalSet> {
    if n == 0 || n >= train.len() {
        return Err(Error::Argument(format!(
            "gaussian_baseline: window {n} invalid for training length {}",
            train.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("gaussian_baseline: level {level} outside (0, 1)")));
    }
    let normal = Normal::standard();
    let mut sorted_train = train.values.clone();
    sorted_train.sort_by(|a, b| a.total_cmp(b));
    let n_train = sorted_train.len();
    let scores: Vec<f64> = (0..n_train)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n_train as f64))
        .collect();

    // piecewise-linear empirical quantile map and its inverse
    let to_score = |v: f64| -> f64 {
        let idx = sorted_train.partition_point(|&x| x < v);
        if idx == 0 {
            return scores[0];
        }
        if idx >= n_train {
            return scores[n_train - 1];
        }
        let (x0, x1) = (sorted_train[idx - 1], sorted_train[idx]);
        let frac = if x1 > x0 { (v - x0) / (x1 - x0) } else { 0.0 };
        scores[idx - 1] + frac * (scores[idx] - scores[idx - 1])
    };
    let from_score = |s: f64| -> f64 {
        let idx = scores.partition_point(|&x| x < s);
        if idx == 0 {
            return sorted_train[0];
        }
        if idx >= n_train {
            return sorted_train[n_train - 1];
        }
        let (s0, s1) = (scores[idx - 1], scores[idx]);
        let frac = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        sorted_train[idx - 1] + frac * (sorted_train[idx] - sorted_train[idx - 1])
    };

    let train_scores: Vec<f64> = train.values.iter().map(|&v| to_score(v)).collect();
    let m = mean(&train_scores);
    let n_t = train_scores.len();
    let acvf: Vec<f64> = (0..=n)
        .map(|h| {
            (0..n_t - h).map(|t| (train_scores[t] - m) * (train_scores[t + h] - m)).sum::<f64>()
                / n_t as f64
        })
        .collect();

    let gamma = DMatrix::from_fn(n, n, |i, j| acvf[i.abs_diff(j)]);
    let gamma_n = DVector::from_fn(n, |i, _| acvf[i + 1]);
    let chol = nalgebra::Cholesky::new(gamma).ok_or(Error::Singular {
        step: n,
        msg: "autocovariance matrix not positive definite".into(),
    })?;
    let b = chol.solve(&gamma_n);
    let mspe = (acvf[0] - gamma_n.dot(&b)).max(0.0);
    let z = normal.inverse_cdf(0.5 + level / 2.0);
    let half_width = z * mspe.sqrt();

    // predict each test point from the n preceding observations of the
    // concatenated series
    let mut full: Vec<f64> = train_scores;
    full.extend(test.values.iter().map(|&v| to_score(v)));
    let offset = train.len();
    let mut out = IntervalSet::default();
    for (i, &actual) in test.values.iter().enumerate() {
        let pos = offset + i;
        let mut x_hat_score = m;
        for (j, &bj) in b.iter().enumerate() {
            x_hat_score += bj * (full[pos - 1 - j] - m);
        }
        out.push(IntervalRow {
            x_hat: from_score(x_hat_score),
            lower: from_score(x_hat_score - half_width),
            upper: from_score(x_hat_score + half_width),
            actual: Some(actual),
        })?;
    }
    Ok(out)
}
