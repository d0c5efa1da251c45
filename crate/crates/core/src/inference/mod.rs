//! Plug-in and one-step debiased estimation, influence-function covariance
//! and simultaneous confidence sets.

pub mod quantile;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GarsError, Result};
use crate::functionals::{evaluate_judged, jacobian, GarsSpec, Jacobian};
use crate::model::{MuTensor, PiMatrix, PreferenceDataset};
use crate::nuisance::CrossFittedNuisances;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    Plugin,
    Debiased,
    BtRestricted,
}

impl EstimatorTag {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorTag::Plugin => "plugin",
            EstimatorTag::Debiased => "debiased",
            EstimatorTag::BtRestricted => "bt_restricted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GarsEstimate {
    pub theta_hat: DVector<f64>,
    /// Asymptotic covariance of sqrt(n) (theta_hat - theta).
    pub sigma_hat: DMatrix<f64>,
    pub n: usize,
    pub spec: GarsSpec,
    pub estimator: EstimatorTag,
}

impl GarsEstimate {
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }
    /// Standard errors sqrt(Sigma_jj / n).
    pub fn se(&self) -> DVector<f64> {
        let n = self.n as f64;
        DVector::from_fn(self.dim(), |j, _| (self.sigma_hat[(j, j)].max(0.0) / n).sqrt())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InferenceOptions {
    /// Selected pairs with a propensity below this are a positivity violation.
    pub pi_floor: f64,
    /// Center influence rows at their mean before forming the covariance.
    pub center: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions { pi_floor: 1e-6, center: false }
    }
}

/// Dense judge tensors per row, required only by miscalibration.
pub fn judge_tensors(dataset: &PreferenceDataset, spec: &GarsSpec) -> Result<Option<Vec<MuTensor>>> {
    if !spec.kind.needs_judge() {
        return Ok(None);
    }
    (0..dataset.n())
        .map(|i| {
            dataset
                .judge_tensor(i)
                .ok_or_else(|| GarsError::InvalidInput(format!("row {i}: miscalibration needs judge probabilities for every ordered pair")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn f_values(mu_hat: &[MuTensor], judge: Option<&[MuTensor]>, spec: &GarsSpec) -> Result<Vec<DVector<f64>>> {
    mu_hat
        .par_iter()
        .enumerate()
        .map(|(i, mu)| {
            evaluate_judged(&spec.kind, mu, judge.map(|j| &j[i]), &spec.scheme)
                .map_err(|e| annotate(e, i))
        })
        .collect()
}

fn annotate(e: GarsError, i: usize) -> GarsError {
    match e {
        GarsError::Numeric(m) => GarsError::Numeric(format!("context {i}: {m}")),
        other => other,
    }
}

fn mean_rows(rows: &[DVector<f64>]) -> DVector<f64> {
    let d = rows[0].len();
    let mut m = DVector::zeros(d);
    for r in rows {
        m += r;
    }
    m / rows.len() as f64
}

/// theta_hat is the mean of F(mu_hat(x_i)); sigma_hat is the sample
/// covariance of those values, which ignores nuisance estimation error.
pub fn plugin_estimate(mu_hat: &[MuTensor], judge: Option<&[MuTensor]>, spec: &GarsSpec) -> Result<GarsEstimate> {
    if mu_hat.is_empty() {
        return Err(GarsError::InvalidInput("empty dataset".into()));
    }
    let f = f_values(mu_hat, judge, spec)?;
    let theta = mean_rows(&f);
    let n = f.len();
    let d = theta.len();
    let mut sigma = DMatrix::zeros(d, d);
    for r in &f {
        let c = r - &theta;
        sigma += &c * c.transpose();
    }
    sigma /= (n.max(2) - 1) as f64;
    Ok(GarsEstimate { theta_hat: theta, sigma_hat: sigma, n, spec: spec.clone(), estimator: EstimatorTag::Plugin })
}

/// Per-row one-step summands F(mu_hat) + sum_sel J (y - mu_hat) / pi_hat,
/// before subtracting any reference value.
pub(crate) fn eif_summands(
    dataset: &PreferenceDataset,
    mu_hat: &[MuTensor],
    pi_hat: &[PiMatrix],
    judge: Option<&[MuTensor]>,
    spec: &GarsSpec,
    opts: &InferenceOptions,
    jac_fn: &(dyn Fn(usize, &MuTensor) -> Result<Jacobian> + Sync),
) -> Result<Vec<DVector<f64>>> {
    let n = dataset.n();
    if n == 0 {
        return Err(GarsError::InvalidInput("empty dataset".into()));
    }
    if mu_hat.len() != n || pi_hat.len() != n {
        return Err(GarsError::InvalidInput("nuisance rows do not match dataset rows".into()));
    }
    let c = dataset.c();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mu = &mu_hat[i];
            let mut row = evaluate_judged(&spec.kind, mu, judge.map(|j| &j[i]), &spec.scheme).map_err(|e| annotate(e, i))?;
            let sel = dataset.selections(i);
            if sel.is_empty() {
                return Ok(row);
            }
            let jac = jac_fn(i, mu).map_err(|e| annotate(e, i))?;
            let mut resid = vec![0.0; c];
            let out = row.as_mut_slice();
            for pr in sel {
                let pi = pi_hat[i].get(pr.j, pr.k);
                if !(pi >= opts.pi_floor) {
                    return Err(GarsError::Numeric(format!(
                        "context {i}: propensity {pi} for pair ({},{}) below floor {}",
                        pr.j, pr.k, opts.pi_floor
                    )));
                }
                for (cc, r) in resid.iter_mut().enumerate() {
                    *r = (if cc == pr.label { 1.0 } else { 0.0 }) - mu.get(pr.j, pr.k, cc);
                }
                jac.apply_add(pr.j, pr.k, &resid, 1.0 / pi, out);
            }
            Ok(row)
        })
        .collect()
}

/// Influence rows F(mu_hat(x_i)) - theta_ref + correction, as an n x d matrix.
pub fn influence_values(
    dataset: &PreferenceDataset,
    mu_hat: &[MuTensor],
    pi_hat: &[PiMatrix],
    spec: &GarsSpec,
    theta_ref: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let judge = judge_tensors(dataset, spec)?;
    let rows = eif_summands(dataset, mu_hat, pi_hat, judge.as_deref(), spec, &InferenceOptions::default(), &|i, mu| {
        jacobian(&spec.kind, mu, judge.as_ref().map(|j| &j[i]), &spec.scheme)
    })?;
    Ok(stack_centered(&rows, theta_ref))
}

fn stack_centered(rows: &[DVector<f64>], theta_ref: &DVector<f64>) -> DMatrix<f64> {
    let d = theta_ref.len();
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j] - theta_ref[j])
}

/// Estimate from one-step summands: mean, then uncentered (or centered)
/// second moment of the influence rows at the estimate.
pub(crate) fn estimate_from_summands(
    rows: &[DVector<f64>],
    spec: &GarsSpec,
    tag: EstimatorTag,
    opts: &InferenceOptions,
) -> GarsEstimate {
    let n = rows.len();
    let theta = mean_rows(rows);
    let d = theta.len();
    let mut sigma = DMatrix::zeros(d, d);
    let mut mean_phi = DVector::zeros(d);
    for r in rows {
        let phi = r - &theta;
        sigma += &phi * phi.transpose();
        mean_phi += phi;
    }
    sigma /= n as f64;
    if opts.center {
        mean_phi /= n as f64;
        sigma -= &mean_phi * mean_phi.transpose();
    }
    // symmetrize against rounding
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    GarsEstimate { theta_hat: theta, sigma_hat: sigma, n, spec: spec.clone(), estimator: tag }
}

pub fn debiased_estimate(
    dataset: &PreferenceDataset,
    nuisances: &CrossFittedNuisances,
    spec: &GarsSpec,
) -> Result<GarsEstimate> {
    debiased_estimate_with(dataset, &nuisances.mu_hat, &nuisances.pi_hat, spec, &InferenceOptions::default())
}

/// One-step estimator from explicit nuisance rows (learned or oracle).
pub fn debiased_estimate_with(
    dataset: &PreferenceDataset,
    mu_hat: &[MuTensor],
    pi_hat: &[PiMatrix],
    spec: &GarsSpec,
    opts: &InferenceOptions,
) -> Result<GarsEstimate> {
    let judge = judge_tensors(dataset, spec)?;
    let rows = eif_summands(dataset, mu_hat, pi_hat, judge.as_deref(), spec, opts, &|i, mu| {
        jacobian(&spec.kind, mu, judge.as_ref().map(|j| &j[i]), &spec.scheme)
    })?;
    Ok(estimate_from_summands(&rows, spec, EstimatorTag::Debiased, opts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Gaussmax,
    Bonferroni,
}

#[derive(Debug, Clone, Serialize)]
pub struct CiSet {
    pub method: CiMethod,
    pub alpha: f64,
    pub c_alpha: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub se: Vec<f64>,
    pub mc_draws: Option<usize>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl CiSet {
    pub fn covers(&self, theta: &[f64]) -> bool {
        theta.iter().enumerate().all(|(j, t)| self.lower[j] <= *t && *t <= self.upper[j])
    }
    pub fn mean_width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).sum::<f64>() / self.lower.len() as f64
    }
}

pub const GAUSSMAX_MIN_DRAWS: usize = 1000;
const GAUSSMAX_CHUNK: usize = 4096;

/// Rectangular simultaneous intervals theta_hat +- c_alpha * se.
pub fn simultaneous_cis(est: &GarsEstimate, method: CiMethod, alpha: f64, draws: usize, seed: u64) -> Result<CiSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GarsError::InvalidInput(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let d = est.dim();
    let se = est.se();
    let mut warnings = Vec::new();
    let live: Vec<usize> = (0..d).filter(|&j| se[j] > 0.0).collect();
    for j in (0..d).filter(|j| !live.contains(j)) {
        warnings.push(format!("coordinate {j} has zero standard error; interval collapses to a point"));
    }
    let c_alpha = match method {
        CiMethod::Bonferroni => bonferroni_critical(alpha, d),
        CiMethod::Gaussmax => {
            if draws < GAUSSMAX_MIN_DRAWS {
                return Err(GarsError::InvalidInput(format!("gaussmax needs at least {GAUSSMAX_MIN_DRAWS} draws")));
            }
            if live.is_empty() {
                0.0
            } else {
                let m = live.len();
                let sd = DVector::from_fn(m, |a, _| est.sigma_hat[(live[a], live[a])].sqrt());
                let r = DMatrix::from_fn(m, m, |a, b| est.sigma_hat[(live[a], live[b])] / (sd[a] * sd[b]));
                gaussmax_critical(&r, alpha, draws, seed)?
            }
        }
    };
    let lower = (0..d).map(|j| est.theta_hat[j] - c_alpha * se[j]).collect();
    let upper = (0..d).map(|j| est.theta_hat[j] + c_alpha * se[j]).collect();
    Ok(CiSet {
        method,
        alpha,
        c_alpha,
        lower,
        upper,
        se: se.iter().cloned().collect(),
        mc_draws: (method == CiMethod::Gaussmax).then_some(draws),
        seed,
        warnings,
    })
}

pub fn bonferroni_critical(alpha: f64, d: usize) -> f64 {
    quantile::normal_quantile(1.0 - alpha / (2.0 * d as f64))
}

/// Symmetric square root with eigenvalues floored at zero. Fails when the
/// matrix has a negative eigenvalue beyond 1e-8 relative to its scale.
pub fn psd_sqrt(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = r.nrows();
    let jittered = r + DMatrix::identity(m, m) * 1e-10;
    let eig = SymmetricEigen::new((&jittered + jittered.transpose()) * 0.5);
    let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-8 * scale) {
        return Err(GarsError::Numeric("covariance is not positive semidefinite".into()));
    }
    let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sq) * eig.eigenvectors.transpose())
}

/// Empirical (1 - alpha) quantile of max_j |Z_j| with Z ~ N(0, R).
pub fn gaussmax_critical(r: &DMatrix<f64>, alpha: f64, draws: usize, seed: u64) -> Result<f64> {
    let root = psd_sqrt(r)?;
    let m = r.nrows();
    let n_chunks = draws.div_ceil(GAUSSMAX_CHUNK);
    let mut maxima: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|ch| {
            let mut g = rng::stream(seed, rng::tags::GAUSSMAX, ch as u64);
            let len = GAUSSMAX_CHUNK.min(draws - ch * GAUSSMAX_CHUNK);
            let root = &root;
            (0..len)
                .map(move |_| {
                    let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut g));
                    (root * z).amax()
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    maxima.sort_by(|a, b| a.total_cmp(b));
    let idx = ((1.0 - alpha) * draws as f64).ceil() as usize;
    Ok(maxima[idx.clamp(1, draws) - 1])
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EllipsoidResult {
    pub inside: bool,
    pub statistic: f64,
    pub threshold: f64,
}

/// n (theta_hat - theta0)^T Sigma^{-1} (theta_hat - theta0) against the
/// chi-squared (1 - alpha) quantile with d degrees of freedom.
pub fn ellipsoid_test(est: &GarsEstimate, theta0: &DVector<f64>, alpha: f64) -> Result<EllipsoidResult> {
    let d = est.dim();
    if theta0.len() != d {
        return Err(GarsError::InvalidInput("theta0 has the wrong dimension".into()));
    }
    let eig = SymmetricEigen::new(est.sigma_hat.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(GarsError::Numeric("singular covariance; the ellipsoid is degenerate".into()));
    }
    let diff = &est.theta_hat - theta0;
    let proj = eig.eigenvectors.transpose() * &diff;
    let q: f64 = proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p * p / l).sum();
    let statistic = est.n as f64 * q;
    let threshold = quantile::chi2_quantile(1.0 - alpha, d as f64);
    Ok(EllipsoidResult { inside: statistic <= threshold, statistic, threshold })
}
