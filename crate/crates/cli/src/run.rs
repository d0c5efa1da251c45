use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gars_core::acquisition::{
    a_optimal, d_optimal, sample_selection, unit_cost_matrix, water_filling_one_pair, AcquisitionSolution, BudgetMode,
    BudgetSpec,
};
use gars_core::btmodel::{bt_restricted_debiased_with, reduce_dataset_to_binary};
use gars_core::functionals::{check_jacobians, JacobianCheckConfig, JacobianMutation};
use gars_core::inference::{
    debiased_estimate_with, judge_tensors, plugin_estimate, simultaneous_cis, CiMethod, EstimatorTag, GarsEstimate,
    InferenceOptions,
};
use gars_core::io::{load_dataset, load_policy, save_dataset, save_policy, PolicyFile};
use gars_core::nuisance::{fit_nuisances, ExternalCommand, FeatureMap, LearnerSpec, NuisanceConfig};
use gars_core::simbench::{
    acquisition_experiment, coverage_experiment, judge_experiment, AcquisitionConfig, CoverageConfig, DgpSpec,
    DgpVariant, ExperimentReport, JudgeConfig, NuisanceSource, Simulator,
};
use gars_core::{rng, CategoryScheme, GarsError, GarsKind, GarsSpec, MiscalLoss, MuTensor, PiMatrix, PreferenceDataset, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;

pub const TIE_BREAK: &str = "rank 1 is the highest score; equal scores are ranked by lower item index";

/// Failure that carries its own exit code (e.g. a failed Jacobian check
/// after its report was written).
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub msg: String,
}

impl From<GarsError> for Exit {
    fn from(e: GarsError) -> Self {
        Exit { code: e.exit_code(), msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Exit {
    Exit { code: 2, msg: msg.into() }
}

pub fn run(cmd: &Command) -> std::result::Result<(), Exit> {
    match cmd {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Coverage(a) => coverage(a),
        Command::Acquire(a) => acquire(a),
        Command::CheckJacobians(a) => check(a),
        Command::Rerun(a) => rerun(a),
    }
}

fn write_json(path: Option<&Path>, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| GarsError::Numeric(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}

fn config_value(cmd: &Command) -> Value {
    serde_json::to_value(cmd).unwrap_or(Value::Null)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<Vec<T>, Exit> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| usage(format!("cannot parse {what} entry '{t}'"))))
        .collect()
}

pub fn build_kind(o: &KindOpts) -> std::result::Result<GarsKind, Exit> {
    Ok(match o.kind {
        KindArg::Borda => GarsKind::Borda,
        KindArg::Bt => GarsKind::BtProjection,
        KindArg::Rc => GarsKind::RankCentrality,
        KindArg::Softmax => GarsKind::Softmax,
        KindArg::Copeland => GarsKind::SoftCopeland { tau: o.tau },
        KindArg::Kemeny => {
            let raw = o.rankings.as_deref().ok_or_else(|| usage("--kind kemeny needs --rankings"))?;
            let rankings = raw.split(';').map(|r| parse_list::<usize>(r, "ranking")).collect::<std::result::Result<_, _>>()?;
            GarsKind::Kemeny { rankings }
        }
        KindArg::Miscal => GarsKind::JudgeMiscalibration {
            loss: match o.loss {
                LossArg::Squared => MiscalLoss::Squared,
                LossArg::CrossEntropy => MiscalLoss::CrossEntropy,
            },
        },
    })
}

fn kind_of(k: KindArg) -> GarsKind {
    build_kind(&KindOpts { kind: k, tau: 0.1, rankings: None, loss: LossArg::Squared, weights: None })
        .unwrap_or(GarsKind::Borda)
}

fn parse_weights(s: &str) -> std::result::Result<CategoryScheme, Exit> {
    let parts: Vec<&str> = s.split(';').collect();
    if parts.len() != 2 {
        return Err(usage("--weights expects \"w1;w2\""));
    }
    Ok(CategoryScheme::new(parse_list(parts[0], "weight")?, parse_list(parts[1], "weight")?)?)
}

fn nuisance_config(l: &LearnerOpts, seed: u64, use_judge: bool) -> NuisanceConfig {
    let learner = match &l.external {
        Some(program) => LearnerSpec::External(ExternalCommand {
            program: program.clone(),
            args: l.external_arg.clone(),
            timeout_secs: l.external_timeout,
        }),
        None => LearnerSpec::MultinomialLogit { l2: l.l2, max_iter: l.max_iter, tol: l.tol },
    };
    NuisanceConfig {
        folds: l.folds,
        seed,
        learner,
        features: match l.features {
            FeaturesArg::Plain => FeatureMap::Plain,
            FeaturesArg::Expanded => FeatureMap::Expanded,
            FeaturesArg::Interacted => FeatureMap::Interacted,
            FeaturesArg::Pairwise => FeatureMap::Pairwise,
        },
        use_judge,
        neg_per_pos: l.neg_per_pos,
        pi_floor: l.pi_floor,
        ..NuisanceConfig::default()
    }
}

fn ci_method(c: CiArg) -> CiMethod {
    match c {
        CiArg::Gaussmax => CiMethod::Gaussmax,
        CiArg::Bonferroni => CiMethod::Bonferroni,
    }
}

fn dgp_spec(dgp: DgpArg, items: usize, dim: usize, gamma: f64, seed: u64) -> DgpSpec {
    match dgp {
        DgpArg::Ties => DgpSpec { eps_mu: 0.05, pi_min: 0.05, ..DgpSpec::new(DgpVariant::NonlinearTie, items, dim, seed) },
        DgpArg::Btmis => DgpSpec::new(DgpVariant::BtMisspec { gamma }, items, dim, seed),
    }
}

/// Positions 1..=d after sorting by score descending, ties by index.
pub fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut r = vec![0; scores.len()];
    for (pos, &i) in order.iter().enumerate() {
        r[i] = pos + 1;
    }
    r
}

#[derive(Serialize)]
struct ItemRow {
    item: usize,
    score: f64,
    rank: usize,
    se: f64,
    lower: f64,
    upper: f64,
}

fn estimate_block(est: &GarsEstimate, a: &EstimateArgs, seed: u64) -> Result<Value> {
    let ci = simultaneous_cis(est, ci_method(a.ci), a.alpha, a.mc_draws, seed)?;
    let scores: Vec<f64> = est.theta_hat.iter().cloned().collect();
    let rk = ranks(&scores);
    let items: Vec<ItemRow> = (0..scores.len())
        .map(|i| ItemRow { item: i, score: scores[i], rank: rk[i], se: ci.se[i], lower: ci.lower[i], upper: ci.upper[i] })
        .collect();
    let sigma: Vec<Vec<f64>> = (0..est.dim()).map(|r| est.sigma_hat.row(r).iter().cloned().collect()).collect();
    Ok(json!({
        "estimator": est.estimator.name(),
        "kind": est.spec.kind.name(),
        "n": est.n,
        "ci_method": ci.method,
        "alpha": ci.alpha,
        "c_alpha": ci.c_alpha,
        "mc_draws": ci.mc_draws,
        "items": items,
        "sigma_hat": sigma,
        "warnings": ci.warnings,
    }))
}

fn known_policy(path: &Path, ds: &PreferenceDataset) -> Result<Vec<PiMatrix>> {
    let pol = load_policy(path)?;
    if pol.k != ds.k() {
        return Err(GarsError::Schema(format!("policy has K={} but dataset has K={}", pol.k, ds.k())));
    }
    if pol.rows.len() != ds.n() {
        return Err(GarsError::Schema(format!("policy has {} rows but dataset has {}", pol.rows.len(), ds.n())));
    }
    pol.rows.iter().map(|r| PiMatrix::new(pol.k, r.clone())).collect()
}

fn estimate(a: &EstimateArgs) -> std::result::Result<(), Exit> {
    let mut ds = load_dataset(&a.input)?;
    if let Some(w) = &a.kind.weights {
        ds = ds.with_scheme(parse_weights(w)?)?;
    }
    if a.binary_only && ds.c() != 2 {
        return Err(usage(format!("--binary-only was given but the dataset has C={} categories", ds.c())));
    }
    let c_in = ds.c();
    if a.reduce_binary && ds.c() != 2 {
        ds = reduce_dataset_to_binary(&ds, rng::derive_seed(a.seed, rng::tags::LABELS, 0))?;
    }
    let kind = build_kind(&a.kind)?;
    kind.validate(ds.k())?;
    let spec = GarsSpec::new(kind.clone(), ds.scheme().clone());
    let use_judge = a.judge == JudgeArg::Features;
    if (use_judge || kind.needs_judge()) && !ds.has_judge() {
        return Err(usage("the dataset has no judge probabilities"));
    }
    let tags: Vec<EstimatorTag> = match a.estimator {
        EstimatorArg::Plugin => vec![EstimatorTag::Plugin],
        EstimatorArg::Debiased => vec![EstimatorTag::Debiased],
        EstimatorArg::BtRestricted => {
            if kind != GarsKind::BtProjection {
                return Err(usage("--estimator bt-restricted needs --kind bt"));
            }
            if ds.c() != 2 {
                return Err(usage(format!("--estimator bt-restricted needs binary data (C={}); add --reduce-binary", ds.c())));
            }
            vec![EstimatorTag::BtRestricted]
        }
        EstimatorArg::All => {
            let mut t = vec![EstimatorTag::Plugin, EstimatorTag::Debiased];
            if kind == GarsKind::BtProjection && ds.c() == 2 {
                t.push(EstimatorTag::BtRestricted);
            }
            t
        }
    };
    let known = a.known_pi.as_deref().map(|p| known_policy(p, &ds)).transpose()?;
    let ncfg = nuisance_config(&a.learner, a.seed, use_judge);
    let nu = fit_nuisances(&ds, &ncfg, known)?;
    let opts = InferenceOptions { center: a.center, ..InferenceOptions::default() };
    let judge = judge_tensors(&ds, &spec)?;
    let ci_seed = rng::derive_seed(a.seed, rng::tags::GAUSSMAX, 0);
    let mut blocks = Vec::new();
    let mut csv = String::from("estimator,item,score,lower,upper\n");
    for tag in tags {
        let est = match tag {
            EstimatorTag::Plugin => plugin_estimate(&nu.mu_hat, judge.as_deref(), &spec)?,
            EstimatorTag::Debiased => debiased_estimate_with(&ds, &nu.mu_hat, &nu.pi_hat, &spec, &opts)?,
            EstimatorTag::BtRestricted => bt_restricted_debiased_with(&ds, &nu.mu_hat, &nu.pi_hat, ds.scheme(), &opts)?,
        };
        let b = estimate_block(&est, a, ci_seed)?;
        for it in b["items"].as_array().into_iter().flatten() {
            csv.push_str(&format!("{},{},{},{},{}\n", tag.name(), it["item"], it["score"], it["lower"], it["upper"]));
        }
        blocks.push(b);
    }
    let mut warnings = Vec::new();
    if ds.n_labeled() < 10 * ds.k() * (ds.k() - 1) {
        warnings.push(format!("only {} labeled pairs for {} ordered pairs", ds.n_labeled(), ds.k() * (ds.k() - 1)));
    }
    let report = json!({
        "command": "estimate",
        "config": config_value(&Command::Estimate(a.clone())),
        "dataset": {
            "n": ds.n(),
            "k": ds.k(),
            "c": ds.c(),
            "c_input": c_in,
            "p": ds.p(),
            "n_labeled": ds.n_labeled(),
            "has_judge": ds.has_judge(),
            "scheme": ds.scheme(),
        },
        "nuisance": {
            "folds": ncfg.folds,
            "features": ncfg.features,
            "use_judge": use_judge,
            "known_pi": nu.known_pi,
        },
        "tie_break": TIE_BREAK,
        "estimates": blocks,
        "warnings": warnings,
    });
    write_json(a.output.as_deref(), &report)?;
    if let Some(p) = &a.csv {
        std::fs::write(p, csv).map_err(GarsError::from)?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> std::result::Result<(), Exit> {
    if a.output.as_os_str().is_empty() {
        return Err(usage("simulate needs --output"));
    }
    let sim = Simulator::new(dgp_spec(a.dgp, a.items, a.dim, a.gamma, a.dgp_seed))?;
    let draws = sim.draw_contexts(a.n_ctx, a.seed);
    let ds = sim.realize(&draws, None, a.judge_sigma)?;
    save_dataset(&ds, &a.output)?;
    Ok(())
}

fn coverage(a: &CoverageArgs) -> std::result::Result<(), Exit> {
    if a.scale == 0 {
        return Err(usage("--scale must be at least 1"));
    }
    let runs = a.runs / a.scale;
    let kinds: Vec<GarsKind> = if a.kind.is_empty() {
        vec![GarsKind::Borda, GarsKind::BtProjection, GarsKind::RankCentrality]
    } else {
        a.kind.iter().map(|&k| kind_of(k)).collect()
    };
    let dgp = |default_items: usize, default_dim: usize| {
        dgp_spec(a.dgp, a.items.unwrap_or(default_items), a.dim.unwrap_or(default_dim), a.gamma, a.dgp_seed)
    };
    let ncfg = nuisance_config(&a.learner, a.seed, false);
    let method = ci_method(a.ci);
    let results: Vec<ExperimentReport> = match a.experiment {
        ExperimentArg::Coverage => {
            let spec = match a.dgp {
                DgpArg::Ties => dgp(3, 2),
                DgpArg::Btmis => dgp(4, 5),
            };
            let mut cfg = CoverageConfig::new(spec.clone(), kinds, runs, a.n_ctx, a.seed);
            cfg.estimators = match a.estimator {
                EstimatorArg::Plugin => vec![EstimatorTag::Plugin],
                EstimatorArg::Debiased => vec![EstimatorTag::Debiased],
                EstimatorArg::BtRestricted => vec![EstimatorTag::BtRestricted],
                EstimatorArg::All => {
                    let mut t = vec![EstimatorTag::Plugin, EstimatorTag::Debiased];
                    if spec.c() == 2 && cfg.kinds.contains(&GarsKind::BtProjection) {
                        t.push(EstimatorTag::BtRestricted);
                    }
                    t
                }
            };
            cfg.ci = method;
            cfg.alpha = a.alpha;
            cfg.mc_draws = a.mc_draws;
            cfg.mc_n = a.mc_n;
            cfg.nuisance = match a.nuisance {
                NuisanceArg::Oracle => NuisanceSource::Oracle,
                NuisanceArg::Learned => NuisanceSource::Learned(ncfg),
            };
            coverage_experiment(&cfg)?
        }
        ExperimentArg::Judge => {
            if kinds.len() != 1 {
                return Err(usage("the judge experiment takes a single --kind"));
            }
            let base = DgpSpec::judge(a.dgp_seed);
            let spec = DgpSpec { k: a.items.unwrap_or(base.k), p: a.dim.unwrap_or(base.p), ..base };
            judge_experiment(&JudgeConfig {
                dgp: spec,
                kind: kinds[0].clone(),
                sigmas: a.judge_sigmas.clone(),
                runs,
                n_ctx: a.n_ctx,
                nuisance: ncfg,
                seed: a.seed,
                mc_n: a.mc_n,
                ci: method,
                alpha: a.alpha,
                mc_draws: a.mc_draws,
            })?
        }
        ExperimentArg::Acquisition => {
            let spec = dgp(3, 2);
            acquisition_experiment(&AcquisitionConfig {
                dgp: spec,
                kinds,
                beta: a.budget,
                alpha_floor: a.alpha_floor,
                n_ctx: a.n_ctx,
                runs,
                nuisance: match a.nuisance {
                    NuisanceArg::Oracle => NuisanceSource::Oracle,
                    NuisanceArg::Learned => NuisanceSource::LearnedKnownPi(ncfg),
                },
                seed: a.seed,
                mc_n: a.mc_n,
            })?
        }
    };
    let report = json!({
        "command": "coverage",
        "config": config_value(&Command::Coverage(a.clone())),
        "runs": runs,
        "results": results,
    });
    write_json(a.output.as_deref(), &report)?;
    if let Some(p) = &a.table {
        std::fs::write(p, table(&results)).map_err(GarsError::from)?;
    }
    Ok(())
}

/// One line per (kind, estimator, arm): error and coverage with 95% intervals.
pub fn table(results: &[ExperimentReport]) -> String {
    let mut s = format!(
        "{:<10} {:<14} {:<12} {:>6} {:>5} {:>24} {:>22} {:>9}\n",
        "kind", "estimator", "arm", "n", "runs", "error (95% CI)", "coverage (95% CI)", "width"
    );
    for r in results {
        let err = format!("{:.4} [{:.4},{:.4}]", r.mean_error, r.error_ci[0], r.error_ci[1]);
        let cov = format!("{:.3} [{:.3},{:.3}]", r.coverage, r.coverage_ci[0], r.coverage_ci[1]);
        s.push_str(&format!(
            "{:<10} {:<14} {:<12} {:>6} {:>5} {:>24} {:>22} {:>9.4}\n",
            r.kind,
            r.estimator,
            if r.arm.is_empty() { "-" } else { &r.arm },
            r.n_ctx,
            r.runs,
            err,
            cov,
            r.mean_width
        ));
    }
    s
}

fn read_costs(path: &Path, k: usize) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&text).map_err(|e| GarsError::Parse { line: e.line(), msg: e.to_string() })?;
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(GarsError::Schema(format!("cost matrix must be {k} x {k}")));
    }
    Ok(DMatrix::from_fn(k, k, |a, b| if a == b { 0.0 } else { rows[a][b] }))
}

fn acquire(a: &AcquireArgs) -> std::result::Result<(), Exit> {
    if a.output.as_os_str().is_empty() {
        return Err(usage("acquire needs --output"));
    }
    let kind = build_kind(&a.kind)?;
    let (mu, contexts, scheme): (Vec<MuTensor>, Vec<Vec<f64>>, CategoryScheme) = match a.mu_source {
        MuSourceArg::Oracle => {
            let sim = Simulator::new(dgp_spec(a.dgp, a.items, a.dim, a.gamma, a.dgp_seed))?;
            let draws = sim.draw_contexts(a.n_ctx, a.seed);
            let scheme = sim.spec.scheme();
            let ctx = draws.iter().map(|d| d.x.clone()).collect();
            (draws.into_iter().map(|d| d.mu).collect(), ctx, scheme)
        }
        MuSourceArg::Dataset | MuSourceArg::Judge => {
            let path = a.input.as_ref().ok_or_else(|| usage("this --mu-source needs --input"))?;
            let mut ds = load_dataset(path)?;
            if let Some(w) = &a.kind.weights {
                ds = ds.with_scheme(parse_weights(w)?)?;
            }
            let ctx = (0..ds.n()).map(|i| ds.context(i).to_vec()).collect();
            let mu = if a.mu_source == MuSourceArg::Judge {
                if !ds.has_judge() {
                    return Err(usage("the dataset has no judge probabilities"));
                }
                (0..ds.n())
                    .map(|i| ds.judge_tensor(i).ok_or_else(|| usage(format!("row {i} lacks judge probabilities for some pair"))))
                    .collect::<std::result::Result<Vec<_>, _>>()?
            } else {
                fit_nuisances(&ds, &nuisance_config(&a.learner, a.seed, false), None)?.mu_hat
            };
            (mu, ctx, ds.scheme().clone())
        }
    };
    let k = mu.first().map_or(0, |m| m.k());
    kind.validate(k)?;
    let spec = GarsSpec::new(kind, scheme);
    let costs = match &a.costs {
        Some(p) => read_costs(p, k)?,
        None => unit_cost_matrix(k),
    };
    let mode = if a.mode == ModeArg::OnePair { BudgetMode::AtMostOne } else { BudgetMode::Independent };
    let budget = BudgetSpec { beta: a.budget, alpha_floor: a.alpha_floor, costs, mode };
    budget.validate()?;
    let sol: AcquisitionSolution = match a.mode {
        ModeArg::Independent => a_optimal(&mu, &budget, &spec, a.solver_tol)?,
        ModeArg::OnePair => water_filling_one_pair(&mu, &budget, &spec, a.solver_tol)?,
        ModeArg::DOptimal => d_optimal(&mu, &budget, &spec, a.solver_iter, a.solver_tol)?,
    };
    let mode_name = match a.mode {
        ModeArg::Independent => "independent",
        ModeArg::OnePair => "at_most_one",
        ModeArg::DOptimal => "d_optimal",
    };
    let policy = PolicyFile {
        k,
        mode: mode_name.into(),
        rows: sol.pi.clone(),
        pi0: match &sol.pi0 {
            Some(p) => p.iter().map(|v| Some(*v)).collect(),
            None => vec![None; sol.pi.len()],
        },
    };
    save_policy(&policy, &a.output)?;
    if let Some(p) = &a.sample {
        let sel = sample_selection(&sol, rng::derive_seed(a.seed, rng::tags::SELECTION, 0), a.eps_mix)?;
        let mut w = BufWriter::new(File::create(p).map_err(GarsError::from)?);
        for (i, pairs) in sel.iter().enumerate() {
            let line = json!({"row": i, "context": contexts[i], "pairs": pairs});
            writeln!(w, "{line}").map_err(GarsError::from)?;
        }
        w.flush().map_err(GarsError::from)?;
    }
    let report = json!({
        "command": "acquire",
        "config": config_value(&Command::Acquire(a.clone())),
        "mode": mode_name,
        "n_ctx": sol.pi.len(),
        "k": k,
        "lambda": sol.lambda,
        "beta": sol.beta,
        "achieved_cost": sol.achieved_cost,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "warnings": sol.warnings,
    });
    write_json(a.report.as_deref(), &report)?;
    Ok(())
}

fn check(a: &CheckArgs) -> std::result::Result<(), Exit> {
    let cfg = JacobianCheckConfig { ks: a.ks.clone(), cs: a.cs.clone(), samples: a.samples, seed: a.seed, tol: a.tol, ..Default::default() };
    let mutation = a.mutate.map(|m| match m {
        MutationArg::BordaSignFlip => JacobianMutation::BordaSignFlip,
    });
    let rep = check_jacobians(&cfg, mutation)?;
    let report = json!({
        "command": "check-jacobians",
        "config": config_value(&Command::CheckJacobians(a.clone())),
        "rows": rep.rows,
        "max_dev": rep.max_dev,
        "tol": cfg.tol,
        "pass": rep.pass,
    });
    write_json(a.output.as_deref(), &report)?;
    if !rep.pass {
        let worst = rep.rows.iter().max_by(|x, y| x.max_dev.total_cmp(&y.max_dev));
        let detail = worst.map_or(String::new(), |r| format!(" ({} K={} C={})", r.kind, r.k, r.c));
        return Err(Exit { code: 3, msg: format!("max deviation {:.3e} exceeds {:.1e}{detail}", rep.max_dev, cfg.tol) });
    }
    Ok(())
}

fn rerun(a: &RerunArgs) -> std::result::Result<(), Exit> {
    let text = std::fs::read_to_string(&a.report).map_err(GarsError::from)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| GarsError::Parse { line: e.line(), msg: e.to_string() })?;
    let cfg = v.get("config").cloned().ok_or_else(|| usage("report has no embedded config"))?;
    let mut cmd: Command =
        serde_json::from_value(cfg).map_err(|e| GarsError::Schema(format!("embedded config: {e}")))?;
    let out = a.output.clone();
    match &mut cmd {
        Command::Estimate(x) => x.output = out,
        Command::Coverage(x) => x.output = out,
        Command::CheckJacobians(x) => x.output = out,
        Command::Acquire(x) => {
            x.report = out;
            x.output = a.policy.clone().ok_or_else(|| usage("re-running acquire needs --policy"))?;
        }
        Command::Simulate(x) => x.output = out.ok_or_else(|| usage("re-running simulate needs --output"))?,
        Command::Rerun(_) => return Err(usage("nested rerun")),
    }
    run(&cmd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_break_ties_by_index() {
        assert_eq!(ranks(&[0.2, 0.9, 0.5]), vec![3, 1, 2]);
        assert_eq!(ranks(&[0.5, 0.5, 0.1]), vec![1, 2, 3]);
        assert_eq!(ranks(&[0.1, 0.5, 0.5]), vec![3, 1, 2]);
    }

    #[test]
    fn weights_parse_into_a_scheme() {
        let s = parse_weights("1,0,0.5;0,1,0.5").unwrap();
        assert_eq!(s, CategoryScheme::default_for(3).unwrap());
        assert!(parse_weights("1,0").is_err());
    }
}
