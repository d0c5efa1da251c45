//! L2-regularized multinomial logistic regression fit by damped Newton.
//! The last class is the reference; features are standardized internally
//! and the intercept is not penalized.

use nalgebra::{DMatrix, DVector};

use crate::error::{GarsError, Result};

/// Mass moved off the observed class by the single-class fallback.
pub const FALLBACK_SMOOTHING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogitParams {
    fn default() -> Self {
        LogitParams { l2: 1e-3, max_iter: 500, tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub enum LogitModel {
    Constant(Vec<f64>),
    Fitted {
        mean: Vec<f64>,
        scale: Vec<f64>,
        /// (C-1) x (q+1); column 0 is the intercept.
        beta: DMatrix<f64>,
        n_classes: usize,
        iterations: usize,
        converged: bool,
    },
}

/// Fit on m x q features with class labels and nonnegative sample weights.
pub fn fit_multinomial_logit(
    x: &DMatrix<f64>,
    y: &[usize],
    weights: Option<&[f64]>,
    n_classes: usize,
    params: &LogitParams,
) -> Result<LogitModel> {
    let (m, q) = x.shape();
    if m == 0 || y.len() != m {
        return Err(GarsError::InvalidInput("logit fit needs at least one labeled row".into()));
    }
    if n_classes < 2 || y.iter().any(|&c| c >= n_classes) {
        return Err(GarsError::InvalidInput("label outside the class range".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GarsError::InvalidInput("non-finite feature value".into()));
    }
    if !(params.l2 >= 0.0 && params.l2.is_finite()) || params.max_iter == 0 {
        return Err(GarsError::InvalidInput("invalid logit hyperparameters".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; m],
    };
    let wsum: f64 = w.iter().sum();
    if !(wsum > 0.0) {
        return Err(GarsError::InvalidInput("sample weights sum to zero".into()));
    }
    let first = y[0];
    if y.iter().all(|&c| c == first) {
        let mut p = vec![FALLBACK_SMOOTHING / (n_classes - 1) as f64; n_classes];
        p[first] = 1.0 - FALLBACK_SMOOTHING;
        return Ok(LogitModel::Constant(p));
    }

    // standardize, dropping constant columns
    let mut mean = vec![0.0; q];
    let mut scale = vec![0.0; q];
    for col in 0..q {
        let mu: f64 = (0..m).map(|i| w[i] * x[(i, col)]).sum::<f64>() / wsum;
        let var: f64 = (0..m).map(|i| w[i] * (x[(i, col)] - mu).powi(2)).sum::<f64>() / wsum;
        mean[col] = mu;
        scale[col] = if var > 1e-24 { 1.0 / var.sqrt() } else { 0.0 };
    }
    let z = design(x, &mean, &scale);
    let q1 = q + 1;
    let kc = n_classes - 1;
    let dim = kc * q1;
    let wn: Vec<f64> = w.iter().map(|v| v / wsum).collect();

    let penalty = |beta: &DVector<f64>| -> f64 {
        let mut s = 0.0;
        for a in 0..kc {
            for j in 1..q1 {
                s += beta[a * q1 + j].powi(2);
            }
        }
        0.5 * params.l2 * s
    };
    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = logits(&z, beta, kc, q1);
        let mut loss = 0.0;
        for i in 0..m {
            let row = &eta[i * kc..(i + 1) * kc];
            let lse = log_sum_exp0(row);
            let ly = if y[i] == kc { 0.0 } else { row[y[i]] };
            loss += wn[i] * (lse - ly);
        }
        loss + penalty(beta)
    };

    let mut beta = DVector::zeros(dim);
    let mut f = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..params.max_iter {
        iterations = it + 1;
        let eta = logits(&z, &beta, kc, q1);
        let mut probs = vec![0.0; m * kc];
        for i in 0..m {
            let row = &eta[i * kc..(i + 1) * kc];
            let lse = log_sum_exp0(row);
            for a in 0..kc {
                probs[i * kc + a] = (row[a] - lse).exp();
            }
        }
        // gradient
        let mut grad = DVector::zeros(dim);
        for a in 0..kc {
            let r = DVector::from_fn(m, |i, _| wn[i] * (probs[i * kc + a] - if y[i] == a { 1.0 } else { 0.0 }));
            let g = z.tr_mul(&r);
            for j in 0..q1 {
                grad[a * q1 + j] = g[j] + if j > 0 { params.l2 * beta[a * q1 + j] } else { 0.0 };
            }
        }
        if grad.amax() <= params.tol {
            converged = true;
            break;
        }
        // Hessian blocks Z^T diag(w p_a (delta_ab - p_b)) Z
        let mut hess = DMatrix::zeros(dim, dim);
        for a in 0..kc {
            for b in a..kc {
                let mut zs = z.clone();
                for i in 0..m {
                    let pa = probs[i * kc + a];
                    let s = wn[i] * pa * (if a == b { 1.0 } else { 0.0 } - probs[i * kc + b]);
                    zs.row_mut(i).scale_mut(s);
                }
                let blk = z.tr_mul(&zs);
                hess.view_mut((a * q1, b * q1), (q1, q1)).copy_from(&blk);
                if a != b {
                    hess.view_mut((b * q1, a * q1), (q1, q1)).copy_from(&blk.transpose());
                }
            }
        }
        for a in 0..kc {
            for j in 0..q1 {
                let d = a * q1 + j;
                hess[(d, d)] += if j > 0 { params.l2 } else { 0.0 } + 1e-10;
            }
        }
        let (step, ok_newton) = match hess.clone().cholesky() {
            Some(ch) => (ch.solve(&grad), true),
            None => (grad.clone(), false),
        };
        // backtracking on the objective
        let slope = grad.dot(&step);
        if ok_newton && slope <= 1e-14 * (1.0 + f.abs()) {
            // predicted decrease is below what f can resolve
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &beta - &step * t;
            let fc = objective(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * t * slope {
                beta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further decrease possible at double precision
            converged = grad.amax() <= params.tol.max(1e-6);
            break;
        }
    }
    let beta = DMatrix::from_row_slice(kc, q1, beta.as_slice());
    Ok(LogitModel::Fitted { mean, scale, beta, n_classes, iterations, converged })
}

fn design(x: &DMatrix<f64>, mean: &[f64], scale: &[f64]) -> DMatrix<f64> {
    let (m, q) = x.shape();
    DMatrix::from_fn(m, q + 1, |i, j| if j == 0 { 1.0 } else { (x[(i, j - 1)] - mean[j - 1]) * scale[j - 1] })
}

/// Row-major m x (C-1) linear predictors.
fn logits(z: &DMatrix<f64>, beta: &DVector<f64>, kc: usize, q1: usize) -> Vec<f64> {
    let b = DMatrix::from_row_slice(kc, q1, beta.as_slice());
    let eta = z * b.transpose();
    let m = z.nrows();
    let mut out = vec![0.0; m * kc];
    for i in 0..m {
        for a in 0..kc {
            out[i * kc + a] = eta[(i, a)];
        }
    }
    out
}

/// log(1 + sum exp(row)), the reference class contributing exp(0).
fn log_sum_exp0(row: &[f64]) -> f64 {
    let mx = row.iter().cloned().fold(0.0, f64::max);
    let s: f64 = (-mx).exp() + row.iter().map(|v| (v - mx).exp()).sum::<f64>();
    mx + s.ln()
}

impl LogitModel {
    pub fn n_classes(&self) -> usize {
        match self {
            LogitModel::Constant(p) => p.len(),
            LogitModel::Fitted { n_classes, .. } => *n_classes,
        }
    }

    /// Class probabilities, one row per input row.
    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            LogitModel::Constant(p) => DMatrix::from_fn(x.nrows(), p.len(), |_, c| p[c]),
            LogitModel::Fitted { mean, scale, beta, n_classes, .. } => {
                let z = design(x, mean, scale);
                let eta = z * beta.transpose();
                let kc = n_classes - 1;
                let mut out = DMatrix::zeros(x.nrows(), *n_classes);
                for i in 0..x.nrows() {
                    let row: Vec<f64> = (0..kc).map(|a| eta[(i, a)]).collect();
                    let lse = log_sum_exp0(&row);
                    for a in 0..kc {
                        out[(i, a)] = (row[a] - lse).exp();
                    }
                    out[(i, kc)] = (-lse).exp();
                }
                out
            }
        }
    }
}
