//! Seeded Monte Carlo experiments: estimation error and CI coverage, judge
//! features, BT misspecification and label acquisition.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{ground_truth_scores, DgpSpec, GroundTruth, Simulator, DEFAULT_MC_N};
use crate::acquisition::{a_optimal, expected_cost, uniform_policy, BudgetMode, BudgetSpec};
use crate::btmodel::bt_restricted_debiased_with;
use crate::error::{GarsError, Result};
use crate::functionals::{GarsKind, GarsSpec};
use crate::inference::{
    debiased_estimate_with, plugin_estimate, simultaneous_cis, CiMethod, EstimatorTag, GarsEstimate, InferenceOptions,
};
use crate::model::{MuTensor, PiMatrix, PreferenceDataset};
use crate::nuisance::{fit_nuisances, NuisanceConfig};
use crate::rng;

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub spec: serde_json::Value,
    pub kind: String,
    pub estimator: String,
    /// Free-form label of the experimental arm, e.g. "sigma=0.5".
    pub arm: String,
    pub runs: usize,
    pub n_ctx: usize,
    pub mean_error: f64,
    pub error_ci: [f64; 2],
    pub mean_mse: f64,
    pub mse_ci: [f64; 2],
    pub coverage: f64,
    pub coverage_ci: [f64; 2],
    pub mean_width: f64,
    pub seed: u64,
}

/// Per-run outcome of one estimator.
#[derive(Debug, Clone, Copy)]
pub struct RunOutcome {
    pub error: f64,
    pub mse: f64,
    pub covered: bool,
    pub width: f64,
}

pub fn summarize(spec: serde_json::Value, kind: &str, estimator: &str, arm: &str, n_ctx: usize, seed: u64, runs: &[RunOutcome]) -> ExperimentReport {
    let n = runs.len() as f64;
    let mean_ci = |v: Vec<f64>| -> (f64, [f64; 2]) {
        let m = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        let h = 1.96 * sd / n.sqrt();
        (m, [m - h, m + h])
    };
    let (mean_error, error_ci) = mean_ci(runs.iter().map(|r| r.error).collect());
    let (mean_mse, mse_ci) = mean_ci(runs.iter().map(|r| r.mse).collect());
    let cov = runs.iter().filter(|r| r.covered).count() as f64 / n;
    let h = 1.96 * (cov * (1.0 - cov) / n).sqrt();
    ExperimentReport {
        spec,
        kind: kind.to_string(),
        estimator: estimator.to_string(),
        arm: arm.to_string(),
        runs: runs.len(),
        n_ctx,
        mean_error,
        error_ci,
        mean_mse,
        mse_ci,
        coverage: cov,
        coverage_ci: [(cov - h).max(0.0), (cov + h).min(1.0)],
        mean_width: runs.iter().map(|r| r.width).sum::<f64>() / n,
        seed,
    }
}

fn outcome(est: &GarsEstimate, truth: &[f64], ci: CiMethod, alpha: f64, mc_draws: usize, seed: u64) -> Result<RunOutcome> {
    let t = DVector::from_column_slice(truth);
    let diff = &est.theta_hat - &t;
    let set = simultaneous_cis(est, ci, alpha, mc_draws, seed)?;
    Ok(RunOutcome {
        error: diff.norm(),
        mse: diff.norm_squared() / diff.len() as f64,
        covered: set.covers(truth),
        width: set.mean_width(),
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceSource {
    Learned(NuisanceConfig),
    /// Learned mu_hat with the simulator's true propensities.
    LearnedKnownPi(NuisanceConfig),
    Oracle,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageConfig {
    pub dgp: DgpSpec,
    pub kinds: Vec<GarsKind>,
    pub estimators: Vec<EstimatorTag>,
    pub runs: usize,
    pub n_ctx: usize,
    pub ci: CiMethod,
    pub alpha: f64,
    pub mc_draws: usize,
    pub seed: u64,
    pub nuisance: NuisanceSource,
    pub mc_n: usize,
}

impl CoverageConfig {
    pub fn new(dgp: DgpSpec, kinds: Vec<GarsKind>, runs: usize, n_ctx: usize, seed: u64) -> Self {
        CoverageConfig {
            dgp,
            kinds,
            estimators: vec![EstimatorTag::Plugin, EstimatorTag::Debiased],
            runs,
            n_ctx,
            ci: CiMethod::Gaussmax,
            alpha: 0.05,
            mc_draws: 5000,
            seed,
            nuisance: NuisanceSource::Learned(NuisanceConfig::default()),
            mc_n: DEFAULT_MC_N,
        }
    }
}

/// Ground truth for each kind, computed once per simulator.
pub fn truths(sim: &Simulator, kinds: &[GarsKind], mc_n: usize, seed: u64) -> Result<Vec<GroundTruth>> {
    let scheme = sim.spec.scheme();
    kinds
        .iter()
        .map(|k| ground_truth_scores(sim, &GarsSpec::new(k.clone(), scheme.clone()), mc_n, rng::derive_seed(seed, rng::tags::GROUND_TRUTH, 0)))
        .collect()
}

pub fn estimate_one(
    tag: EstimatorTag,
    ds: &PreferenceDataset,
    mu: &[MuTensor],
    pi: &[PiMatrix],
    spec: &GarsSpec,
) -> Result<GarsEstimate> {
    let opts = InferenceOptions::default();
    match tag {
        EstimatorTag::Plugin => plugin_estimate(mu, None, spec),
        EstimatorTag::Debiased => debiased_estimate_with(ds, mu, pi, spec, &opts),
        EstimatorTag::BtRestricted => bt_restricted_debiased_with(ds, mu, pi, &spec.scheme, &opts),
    }
}

fn nuisances_for(
    ds: &PreferenceDataset,
    oracle_mu: Vec<MuTensor>,
    oracle_pi: Vec<PiMatrix>,
    source: &NuisanceSource,
    seed: u64,
) -> Result<(Vec<MuTensor>, Vec<PiMatrix>)> {
    match source {
        NuisanceSource::Oracle => Ok((oracle_mu, oracle_pi)),
        NuisanceSource::Learned(cfg) => {
            let cfg = NuisanceConfig { seed, ..cfg.clone() };
            let nu = fit_nuisances(ds, &cfg, None)?;
            Ok((nu.mu_hat, nu.pi_hat))
        }
        NuisanceSource::LearnedKnownPi(cfg) => {
            let cfg = NuisanceConfig { seed, ..cfg.clone() };
            let nu = fit_nuisances(ds, &cfg, Some(oracle_pi))?;
            Ok((nu.mu_hat, nu.pi_hat))
        }
    }
}

/// Error and simultaneous-CI coverage over seeded runs. Nuisances are fit
/// once per run and shared by every kind and estimator.
pub fn coverage_experiment(cfg: &CoverageConfig) -> Result<Vec<ExperimentReport>> {
    if cfg.runs < 10 {
        return Err(GarsError::InvalidInput("coverage experiments need at least 10 runs".into()));
    }
    if cfg.estimators.contains(&EstimatorTag::BtRestricted) && cfg.dgp.c() != 2 {
        return Err(GarsError::InvalidInput("bt-restricted needs a binary simulator".into()));
    }
    let sim = Simulator::new(cfg.dgp.clone())?;
    let scheme = sim.spec.scheme();
    let truth = truths(&sim, &cfg.kinds, cfg.mc_n, cfg.seed)?;
    let per_run: Vec<Vec<Vec<RunOutcome>>> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(cfg.seed, rng::tags::RUN, r as u64);
            let (ds, mu, pi) = sim.sample_dataset(cfg.n_ctx, seed)?;
            let (mu_hat, pi_hat) = nuisances_for(&ds, mu, pi, &cfg.nuisance, seed)?;
            cfg.kinds
                .iter()
                .zip(&truth)
                .map(|(kind, gt)| {
                    let spec = GarsSpec::new(kind.clone(), scheme.clone());
                    cfg.estimators
                        .iter()
                        .map(|&tag| {
                            let kind_ok = tag != EstimatorTag::BtRestricted || *kind == GarsKind::BtProjection;
                            if !kind_ok {
                                return Ok(None);
                            }
                            let est = estimate_one(tag, &ds, &mu_hat, &pi_hat, &spec)?;
                            outcome(&est, &gt.theta_star, cfg.ci, cfg.alpha, cfg.mc_draws, seed).map(Some)
                        })
                        .filter_map(|o| o.transpose())
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let spec_json = serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null);
    let mut out = Vec::new();
    for (ki, kind) in cfg.kinds.iter().enumerate() {
        let tags: Vec<EstimatorTag> = cfg
            .estimators
            .iter()
            .cloned()
            .filter(|t| *t != EstimatorTag::BtRestricted || *kind == GarsKind::BtProjection)
            .collect();
        for (ei, tag) in tags.iter().enumerate() {
            let runs: Vec<RunOutcome> = per_run.iter().map(|r| r[ki][ei]).collect();
            out.push(summarize(spec_json.clone(), kind.name(), tag.name(), "", cfg.n_ctx, cfg.seed, &runs));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct JudgeConfig {
    pub dgp: DgpSpec,
    pub kind: GarsKind,
    pub sigmas: Vec<f64>,
    pub runs: usize,
    pub n_ctx: usize,
    pub nuisance: NuisanceConfig,
    pub seed: u64,
    pub mc_n: usize,
    pub ci: CiMethod,
    pub alpha: f64,
    pub mc_draws: usize,
}

/// Debiased error with judge-as-features for each judge noise level, plus a
/// no-judge arm. Every arm of a run shares contexts, selections, labels,
/// judge noise draws and the propensity fit.
pub fn judge_experiment(cfg: &JudgeConfig) -> Result<Vec<ExperimentReport>> {
    let sim = Simulator::new(cfg.dgp.clone())?;
    let spec = GarsSpec::new(cfg.kind.clone(), sim.spec.scheme());
    let truth = truths(&sim, &[cfg.kind.clone()], cfg.mc_n, cfg.seed)?.remove(0);
    let arms = cfg.sigmas.len() + 1;
    let per_run: Vec<Vec<RunOutcome>> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(cfg.seed, rng::tags::RUN, r as u64);
            let draws = sim.draw_contexts(cfg.n_ctx, seed);
            let base = sim.realize(&draws, None, None)?;
            let ncfg = NuisanceConfig { seed, use_judge: false, ..cfg.nuisance.clone() };
            let nu = fit_nuisances(&base, &ncfg, None)?;
            let mut res = Vec::with_capacity(arms);
            for s in cfg.sigmas.iter().map(Some).chain(std::iter::once(None)) {
                let (ds, mu_hat) = match s {
                    Some(&sigma) => {
                        let ds = sim.realize(&draws, None, Some(sigma))?;
                        let jcfg = NuisanceConfig { use_judge: true, ..ncfg.clone() };
                        let fit = fit_nuisances(&ds, &jcfg, Some(nu.pi_hat.clone()))?;
                        (ds, fit.mu_hat)
                    }
                    None => (base.clone(), nu.mu_hat.clone()),
                };
                let est = debiased_estimate_with(&ds, &mu_hat, &nu.pi_hat, &spec, &InferenceOptions::default())?;
                res.push(outcome(&est, &truth.theta_star, cfg.ci, cfg.alpha, cfg.mc_draws, seed)?);
            }
            Ok(res)
        })
        .collect::<Result<_>>()?;
    let spec_json = serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null);
    let mut out = Vec::new();
    for a in 0..arms {
        let label = cfg.sigmas.get(a).map_or("no_judge".to_string(), |s| format!("sigma={s}"));
        let runs: Vec<RunOutcome> = per_run.iter().map(|r| r[a]).collect();
        out.push(summarize(spec_json.clone(), cfg.kind.name(), "debiased", &label, cfg.n_ctx, cfg.seed, &runs));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct AcquisitionConfig {
    pub dgp: DgpSpec,
    pub kinds: Vec<GarsKind>,
    /// Expected labels per context.
    pub beta: f64,
    pub alpha_floor: f64,
    pub n_ctx: usize,
    pub runs: usize,
    /// `Learned` and `LearnedKnownPi` both fit mu_hat and use the known policy.
    pub nuisance: NuisanceSource,
    pub seed: u64,
    pub mc_n: usize,
}

fn policy_mu(ds: &PreferenceDataset, oracle: &[MuTensor], pi: &[PiMatrix], source: &NuisanceSource, seed: u64) -> Result<Vec<MuTensor>> {
    match source {
        NuisanceSource::Oracle => Ok(oracle.to_vec()),
        NuisanceSource::Learned(cfg) | NuisanceSource::LearnedKnownPi(cfg) => {
            let cfg = NuisanceConfig { seed, ..cfg.clone() };
            Ok(fit_nuisances(ds, &cfg, Some(pi.to_vec()))?.mu_hat)
        }
    }
}

/// Debiased MSE under the A-optimal policy (designed from the simulator's
/// true mu on the run's contexts) and under the budget-matched uniform
/// policy. Both policies see the same contexts, labels and selection
/// uniforms; mu_hat is cross-fit and pi is the known policy.
pub fn acquisition_experiment(cfg: &AcquisitionConfig) -> Result<Vec<ExperimentReport>> {
    if cfg.runs < 5 {
        return Err(GarsError::InvalidInput("acquisition experiments need at least 5 runs".into()));
    }
    let sim = Simulator::new(cfg.dgp.clone())?;
    let scheme = sim.spec.scheme();
    let k = sim.k();
    let budget = BudgetSpec::unit_costs(k, cfg.beta, cfg.alpha_floor, BudgetMode::Independent);
    budget.validate()?;
    let truth = truths(&sim, &cfg.kinds, cfg.mc_n, cfg.seed)?;
    let per_run: Vec<Vec<[RunOutcome; 2]>> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(cfg.seed, rng::tags::RUN, r as u64);
            let draws = sim.draw_contexts(cfg.n_ctx, seed);
            let mu_true: Vec<MuTensor> = draws.iter().map(|d| d.mu.clone()).collect();
            let uni = uniform_policy(cfg.n_ctx, &budget);
            let ds_u = sim.realize(&draws, Some(&uni.pi), None)?;
            let pi_u = uni.pi_matrices()?;
            let mu_u = policy_mu(&ds_u, &mu_true, &pi_u, &cfg.nuisance, seed)?;
            cfg.kinds
                .iter()
                .zip(&truth)
                .map(|(kind, gt)| {
                    let spec = GarsSpec::new(kind.clone(), scheme.clone());
                    let sol = a_optimal(&mu_true, &budget, &spec, 1e-6)?;
                    let ds_a = sim.realize(&draws, Some(&sol.pi), None)?;
                    let pi_a = sol.pi_matrices()?;
                    let mu_a = policy_mu(&ds_a, &mu_true, &pi_a, &cfg.nuisance, seed)?;
                    let opts = InferenceOptions::default();
                    let est_a = debiased_estimate_with(&ds_a, &mu_a, &pi_a, &spec, &opts)?;
                    let est_u = debiased_estimate_with(&ds_u, &mu_u, &pi_u, &spec, &opts)?;
                    Ok([
                        outcome(&est_a, &gt.theta_star, CiMethod::Bonferroni, 0.05, 0, seed)?,
                        outcome(&est_u, &gt.theta_star, CiMethod::Bonferroni, 0.05, 0, seed)?,
                    ])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let spec_json = serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null);
    let mut out = Vec::new();
    for (ki, kind) in cfg.kinds.iter().enumerate() {
        for (pi, arm) in ["a_optimal", "uniform"].iter().enumerate() {
            let runs: Vec<RunOutcome> = per_run.iter().map(|r| r[ki][pi]).collect();
            out.push(summarize(spec_json.clone(), kind.name(), "debiased", arm, cfg.n_ctx, cfg.seed, &runs));
        }
    }
    Ok(out)
}

/// Expected labels per context of a policy, for reporting.
pub fn policy_cost(pi: &[Vec<f64>], k: usize) -> f64 {
    expected_cost(pi, &crate::acquisition::unit_cost_matrix(k))
}
