//! At-most-one-pair selection: per-context water-filling under the cap
//! sum_{j<k} pi_jk <= 1, with an outer multiplier for the budget.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{bisect_lambda, information_rows, sqrt_rule, AcquisitionSolution, BudgetMode, BudgetSpec, LAMBDA_LO, MAX_BISECTION};
use crate::error::{GarsError, Result};
use crate::functionals::GarsSpec;
use crate::model::MuTensor;

/// Unordered pairs use the information of the ordered pair (j, k), j < k.
pub fn water_filling_one_pair(mu_rows: &[MuTensor], budget: &BudgetSpec, spec: &GarsSpec, tol: f64) -> Result<AcquisitionSolution> {
    let w = information_rows(mu_rows, spec)?;
    water_filling_from_weights(&w, budget, tol)
}

struct Context {
    pi: Vec<f64>,
    nu: f64,
}

fn pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect()
}

fn g(w: &DMatrix<f64>, budget: &BudgetSpec, pr: &[(usize, usize)], lambda: f64, nu: f64) -> f64 {
    pr.iter().map(|&(a, b)| sqrt_rule(w[(a, b)], lambda * budget.costs[(a, b)] + nu, budget.alpha_floor)).sum()
}

/// Water level nu(x) for one context at multiplier lambda.
fn fill(w: &DMatrix<f64>, budget: &BudgetSpec, pr: &[(usize, usize)], lambda: f64) -> Context {
    let k = w.nrows();
    let mk = |nu: f64| {
        let mut pi = vec![0.0; k * k];
        for &(a, b) in pr {
            pi[a * k + b] = sqrt_rule(w[(a, b)], lambda * budget.costs[(a, b)] + nu, budget.alpha_floor);
        }
        Context { pi, nu }
    };
    if g(w, budget, pr, lambda, 0.0) <= 1.0 {
        return mk(0.0);
    }
    let floor_mass = budget.alpha_floor * pr.len() as f64;
    if floor_mass >= 1.0 - 1e-12 {
        return mk(f64::MAX);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(w, budget, pr, lambda, hi) > 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(w, budget, pr, lambda, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // hi keeps sum pi <= 1
    mk(hi)
}

fn solve_all(w_rows: &[DMatrix<f64>], budget: &BudgetSpec, pr: &[(usize, usize)], lambda: f64) -> Vec<Context> {
    w_rows.par_iter().map(|w| fill(w, budget, pr, lambda)).collect()
}

fn cost_of(ctx: &[Context], budget: &BudgetSpec, pr: &[(usize, usize)]) -> f64 {
    let k = budget.k();
    ctx.iter().map(|c| pr.iter().map(|&(a, b)| budget.costs[(a, b)] * c.pi[a * k + b]).sum::<f64>()).sum::<f64>()
        / ctx.len() as f64
}

pub fn water_filling_from_weights(w_rows: &[DMatrix<f64>], budget: &BudgetSpec, tol: f64) -> Result<AcquisitionSolution> {
    if budget.mode != BudgetMode::AtMostOne {
        return Err(GarsError::InvalidInput("water filling requires at-most-one selection".into()));
    }
    budget.validate()?;
    if w_rows.is_empty() {
        return Err(GarsError::InvalidInput("no contexts".into()));
    }
    let k = budget.k();
    let pr = pairs(k);
    let beta = budget.beta;
    let mut warnings = Vec::new();
    let at0 = solve_all(w_rows, budget, &pr, 0.0);
    let (lambda, ctx, iterations) = if cost_of(&at0, budget, &pr) <= beta {
        (0.0, at0, 0)
    } else {
        let cost = |l: f64| cost_of(&solve_all(w_rows, budget, &pr, l), budget, &pr);
        let c_lo = cost(LAMBDA_LO);
        if c_lo <= beta {
            if beta - c_lo > tol * beta {
                warnings.push(format!("budget equality unattainable: best cost {c_lo} < beta {beta}"));
            }
            (LAMBDA_LO, solve_all(w_rows, budget, &pr, LAMBDA_LO), 0)
        } else {
            let (_, hi, it) = bisect_lambda(&cost, beta, tol)?;
            (hi, solve_all(w_rows, budget, &pr, hi), it)
        }
    };
    let achieved_cost = cost_of(&ctx, budget, &pr);
    let mut objective = 0.0;
    for (w, c) in w_rows.iter().zip(&ctx) {
        for &(a, b) in &pr {
            if w[(a, b)] > 0.0 {
                objective += w[(a, b)] / c.pi[a * k + b];
            }
        }
    }
    objective /= w_rows.len() as f64;
    let pi0 = ctx.iter().map(|c| (1.0 - pr.iter().map(|&(a, b)| c.pi[a * k + b]).sum::<f64>()).max(0.0)).collect();
    let nu = ctx.iter().map(|c| c.nu).collect();
    Ok(AcquisitionSolution {
        mode: BudgetMode::AtMostOne,
        pi: ctx.into_iter().map(|c| c.pi).collect(),
        pi0: Some(pi0),
        lambda,
        nu: Some(nu),
        achieved_cost,
        beta,
        objective,
        iterations,
        converged: true,
        warnings,
    })
}
