//! Cross-fitted nuisance estimation: preference probabilities mu_hat from
//! labeled pairs and selection propensities pi_hat from observed versus
//! unobserved pairs.

mod external;
mod features;
mod logit;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GarsError, Result};
use crate::model::{clamp_mu, MuTensor, PiMatrix, PreferenceDataset, DEFAULT_CLAMP_EPS};
use crate::rng;

pub use external::{external_fit_predict, ExternalCommand};
pub use features::{judge_features, FeatureMap};
pub use logit::{fit_multinomial_logit, LogitModel, LogitParams, FALLBACK_SMOOTHING};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrossFitPlan {
    pub v: usize,
    pub seed: u64,
    folds: Vec<usize>,
}

/// Random near-equal partition of 0..n into V folds.
pub fn make_plan(n: usize, v: usize, seed: u64) -> Result<CrossFitPlan> {
    if v < 2 {
        return Err(GarsError::InvalidInput(format!("need at least 2 folds, got {v}")));
    }
    if n < v {
        return Err(GarsError::InvalidInput(format!("{n} rows cannot fill {v} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::tags::FOLDS, n as u64));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % v;
    }
    Ok(CrossFitPlan { v, seed, folds })
}

impl CrossFitPlan {
    pub fn fold_of(&self, i: usize) -> usize {
        self.folds[i]
    }
    pub fn n(&self) -> usize {
        self.folds.len()
    }
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.v];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }
    pub fn rows_in(&self, v: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.folds[i] == v).collect()
    }
    pub fn rows_outside(&self, v: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.folds[i] != v).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerSpec {
    MultinomialLogit { l2: f64, max_iter: usize, tol: f64 },
    External(ExternalCommand),
}

impl Default for LearnerSpec {
    fn default() -> Self {
        let p = LogitParams::default();
        LearnerSpec::MultinomialLogit { l2: p.l2, max_iter: p.max_iter, tol: p.tol }
    }
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::MultinomialLogit { l2, max_iter, .. } if !l2.is_finite() || *l2 < 0.0 || *max_iter == 0 => {
                Err(GarsError::InvalidInput("l2 must be finite and nonnegative; max_iter >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Train on (x, y, w) and return class probabilities for `predict_x`.
    pub fn fit_predict(
        &self,
        x: &DMatrix<f64>,
        y: &[usize],
        w: Option<&[f64]>,
        n_classes: usize,
        predict_x: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        match self {
            LearnerSpec::MultinomialLogit { l2, max_iter, tol } => {
                let params = LogitParams { l2: *l2, max_iter: *max_iter, tol: *tol };
                Ok(fit_multinomial_logit(x, y, w, n_classes, &params)?.predict(predict_x))
            }
            LearnerSpec::External(cmd) => {
                if y.iter().all(|&c| c == y[0]) {
                    // same single-class fallback as the built-in learner
                    let model = fit_multinomial_logit(x, y, w, n_classes, &LogitParams::default())?;
                    return Ok(model.predict(predict_x));
                }
                external_fit_predict(cmd, x, y, w, n_classes, predict_x)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub folds: usize,
    pub seed: u64,
    pub learner: LearnerSpec,
    pub features: FeatureMap,
    pub use_judge: bool,
    pub neg_per_pos: usize,
    pub pi_floor: f64,
    pub clamp_eps: f64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            folds: 5,
            seed: 0,
            learner: LearnerSpec::default(),
            features: FeatureMap::Expanded,
            use_judge: false,
            neg_per_pos: 10,
            pi_floor: 0.01,
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }
}

/// Which rows trained the model that predicted each fold.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub plan: CrossFitPlan,
    pub config: NuisanceConfig,
    pub mu_train_rows: Vec<Vec<usize>>,
    pub pi_train_rows: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct CrossFittedNuisances {
    pub mu_hat: Vec<MuTensor>,
    pub pi_hat: Vec<PiMatrix>,
    pub provenance: Provenance,
    pub known_pi: bool,
}

fn pair_row(ds: &PreferenceDataset, map: FeatureMap, use_judge: bool, i: usize, j: usize, k: usize, scratch: &mut Vec<f64>, out: &mut Vec<f64>) {
    map.write(ds.context(i), j, k, ds.k(), scratch, out);
    if use_judge {
        judge_features(ds, i, j, k, out);
    }
}

fn feature_len(ds: &PreferenceDataset, map: FeatureMap, use_judge: bool) -> usize {
    map.len(ds.p(), ds.k()) + if use_judge { ds.c() - 1 } else { 0 }
}

/// Features for every ordered pair of the given rows, row-major by (row, j, k).
fn prediction_design(ds: &PreferenceDataset, rows: &[usize], map: FeatureMap, use_judge: bool) -> DMatrix<f64> {
    let k = ds.k();
    let q = feature_len(ds, map, use_judge);
    let mut flat = Vec::with_capacity(rows.len() * k * (k - 1) * q);
    let mut scratch = Vec::new();
    for &i in rows {
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                pair_row(ds, map, use_judge, i, a, b, &mut scratch, &mut flat);
            }
        }
    }
    DMatrix::from_row_slice(rows.len() * k * (k - 1), q, &flat)
}

/// Out-of-fold mu_hat for every row and every ordered pair.
pub fn crossfit_mu(ds: &PreferenceDataset, plan: &CrossFitPlan, cfg: &NuisanceConfig) -> Result<(Vec<MuTensor>, Vec<Vec<usize>>)> {
    cfg.learner.validate()?;
    if plan.n() != ds.n() {
        return Err(GarsError::InvalidInput("plan size differs from dataset".into()));
    }
    if cfg.use_judge && !ds.has_judge() {
        return Err(GarsError::InvalidInput("judge features requested but the dataset has no judge field".into()));
    }
    if ds.n_labeled() == 0 {
        return Err(GarsError::InvalidInput("dataset has no labeled pairs".into()));
    }
    let (k, c) = (ds.k(), ds.c());
    let q = feature_len(ds, cfg.features, cfg.use_judge);
    let fits: Vec<(Vec<usize>, Vec<MuTensor>, Vec<usize>)> = (0..plan.v)
        .into_par_iter()
        .map(|v| {
            let train = plan.rows_outside(v);
            let test = plan.rows_in(v);
            let mut flat = Vec::new();
            let mut labels = Vec::new();
            let mut scratch = Vec::new();
            for &i in &train {
                for pr in ds.selections(i) {
                    pair_row(ds, cfg.features, cfg.use_judge, i, pr.j, pr.k, &mut scratch, &mut flat);
                    labels.push(pr.label);
                }
            }
            let probs = if labels.is_empty() {
                // no labels in the training folds: uniform prediction
                DMatrix::from_element(test.len() * k * (k - 1), c, 1.0 / c as f64)
            } else {
                let x = DMatrix::from_row_slice(labels.len(), q, &flat);
                let px = prediction_design(ds, &test, cfg.features, cfg.use_judge);
                cfg.learner.fit_predict(&x, &labels, None, c, &px)?
            };
            let per = k * (k - 1);
            let mut mus = Vec::with_capacity(test.len());
            for t in 0..test.len() {
                let mut data = vec![0.0; k * k * c];
                let mut r = t * per;
                for a in 0..k {
                    for b in (0..k).filter(|&b| b != a) {
                        for cc in 0..c {
                            data[(a * k + b) * c + cc] = probs[(r, cc)];
                        }
                        r += 1;
                    }
                }
                let raw = MuTensor::from_raw(k, c, data)?;
                mus.push(normalize_slices(clamp_mu(&raw, cfg.clamp_eps)));
            }
            Ok((test, mus, train))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Option<MuTensor>> = vec![None; ds.n()];
    let mut train_rows = Vec::with_capacity(plan.v);
    for (test, mus, train) in fits {
        for (i, mu) in test.into_iter().zip(mus) {
            out[i] = Some(mu);
        }
        train_rows.push(train);
    }
    Ok((out.into_iter().map(|m| m.expect("every row belongs to a fold")).collect(), train_rows))
}

fn normalize_slices(mut mu: MuTensor) -> MuTensor {
    let (k, c) = (mu.k(), mu.c());
    let data = mu.raw_mut();
    for a in 0..k {
        for b in (0..k).filter(|&b| b != a) {
            let s = &mut data[(a * k + b) * c..(a * k + b + 1) * c];
            let sum: f64 = s.iter().sum();
            s.iter_mut().for_each(|v| *v /= sum);
        }
    }
    mu
}

/// Out-of-fold selection propensities. Negatives are unobserved ordered
/// pairs subsampled per row at `neg_per_pos` per positive and reweighted.
pub fn crossfit_pi(ds: &PreferenceDataset, plan: &CrossFitPlan, cfg: &NuisanceConfig) -> Result<(Vec<PiMatrix>, Vec<Vec<usize>>)> {
    cfg.learner.validate()?;
    if cfg.neg_per_pos < 1 {
        return Err(GarsError::InvalidInput("neg_per_pos must be at least 1".into()));
    }
    if !(cfg.pi_floor > 0.0 && cfg.pi_floor < 0.5) {
        return Err(GarsError::InvalidInput("pi_floor must lie in (0, 0.5)".into()));
    }
    if ds.n_labeled() == 0 {
        return Err(GarsError::InvalidInput("dataset has no labeled pairs".into()));
    }
    if plan.n() != ds.n() {
        return Err(GarsError::InvalidInput("plan size differs from dataset".into()));
    }
    let k = ds.k();
    // per-row training examples, drawn once so every fold sees the same negatives
    let examples: Vec<Vec<(usize, usize, usize, f64)>> = (0..ds.n())
        .map(|i| {
            let sel = ds.selections(i);
            let mut observed = vec![false; k * k];
            for pr in sel {
                observed[pr.j * k + pr.k] = true;
            }
            let mut ex: Vec<(usize, usize, usize, f64)> = sel.iter().map(|pr| (pr.j, pr.k, 1, 1.0)).collect();
            let mut unobs: Vec<(usize, usize)> = ds.items().ordered_pairs().filter(|&(a, b)| !observed[a * k + b]).collect();
            let want = (cfg.neg_per_pos * sel.len().max(1)).min(unobs.len());
            if want < unobs.len() {
                let mut g = rng::stream(plan.seed, rng::tags::NEGATIVES, i as u64);
                unobs.shuffle(&mut g);
            }
            let weight = if want > 0 { unobs.len() as f64 / want as f64 } else { 0.0 };
            ex.extend(unobs.into_iter().take(want).map(|(a, b)| (a, b, 0, weight)));
            ex
        })
        .collect();
    let q = cfg.features.len(ds.p(), k);
    let fits: Vec<(Vec<usize>, Vec<PiMatrix>, Vec<usize>)> = (0..plan.v)
        .into_par_iter()
        .map(|v| {
            let train = plan.rows_outside(v);
            let test = plan.rows_in(v);
            let (mut flat, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
            let mut scratch = Vec::new();
            for &i in &train {
                for &(a, b, lab, wt) in &examples[i] {
                    cfg.features.write(ds.context(i), a, b, k, &mut scratch, &mut flat);
                    y.push(lab);
                    w.push(wt);
                }
            }
            let px = prediction_design(ds, &test, cfg.features, false);
            let probs = if y.is_empty() {
                DMatrix::from_element(px.nrows(), 2, 0.5)
            } else {
                let x = DMatrix::from_row_slice(y.len(), q, &flat);
                cfg.learner.fit_predict(&x, &y, Some(&w), 2, &px)?
            };
            let per = k * (k - 1);
            let pis = (0..test.len())
                .map(|t| {
                    let mut r = t * per;
                    PiMatrix::from_fn(k, |_, _| {
                        let v = probs[(r, 1)].clamp(cfg.pi_floor, 1.0);
                        r += 1;
                        v
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((test, pis, train))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Option<PiMatrix>> = vec![None; ds.n()];
    let mut train_rows = Vec::new();
    for (test, pis, train) in fits {
        for (i, p) in test.into_iter().zip(pis) {
            out[i] = Some(p);
        }
        train_rows.push(train);
    }
    Ok((out.into_iter().map(|p| p.expect("every row belongs to a fold")).collect(), train_rows))
}

/// Cross-fit both nuisances. A known selection policy replaces pi_hat.
pub fn fit_nuisances(ds: &PreferenceDataset, cfg: &NuisanceConfig, known_pi: Option<Vec<PiMatrix>>) -> Result<CrossFittedNuisances> {
    let plan = make_plan(ds.n(), cfg.folds, cfg.seed)?;
    let (mu_hat, mu_train_rows) = crossfit_mu(ds, &plan, cfg)?;
    let known = known_pi.is_some();
    let (pi_hat, pi_train_rows) = match known_pi {
        Some(p) => {
            if p.len() != ds.n() {
                return Err(GarsError::InvalidInput("known policy rows do not match dataset rows".into()));
            }
            (p, Vec::new())
        }
        None => crossfit_pi(ds, &plan, cfg)?,
    };
    Ok(CrossFittedNuisances {
        mu_hat,
        pi_hat,
        provenance: Provenance { plan, config: cfg.clone(), mu_train_rows, pi_train_rows },
        known_pi: known,
    })
}
