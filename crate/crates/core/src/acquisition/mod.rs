//! Budget-constrained label acquisition: A-optimal square-root rule,
//! at-most-one-pair water-filling, D-optimal fixed point and policy sampling.

mod doptimal;
mod waterfill;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GarsError, Result};
use crate::functionals::{evaluate, jacobian, GarsSpec, Jacobian};
use crate::model::{MuTensor, PiMatrix};
use crate::rng;

pub use doptimal::{d_optimal, pseudo_inverse_logdet};
pub use waterfill::water_filling_one_pair;

pub const LAMBDA_LO: f64 = 1e-12;
pub const MAX_BISECTION: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    Independent,
    AtMostOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSpec {
    pub beta: f64,
    pub alpha_floor: f64,
    /// K x K positive costs with zero diagonal.
    pub costs: DMatrix<f64>,
    pub mode: BudgetMode,
}

impl BudgetSpec {
    pub fn unit_costs(k: usize, beta: f64, alpha_floor: f64, mode: BudgetMode) -> Self {
        BudgetSpec { beta, alpha_floor, costs: unit_cost_matrix(k), mode }
    }

    pub fn k(&self) -> usize {
        self.costs.nrows()
    }

    /// Sum of c_jk over ordered pairs.
    pub fn total_cost(&self) -> f64 {
        let k = self.k();
        (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).filter(|(a, b)| a != b).map(|(a, b)| self.costs[(a, b)]).sum()
    }

    /// Sum of c_jk over j < k.
    pub fn total_cost_upper(&self) -> f64 {
        let k = self.k();
        (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).map(|(a, b)| self.costs[(a, b)]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.costs.ncols() != k || k < 2 {
            return Err(GarsError::InvalidInput("cost matrix must be K x K with K >= 2".into()));
        }
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                if !(self.costs[(a, b)] > 0.0 && self.costs[(a, b)].is_finite()) {
                    return Err(GarsError::InvalidInput(format!("cost ({a},{b}) must be positive")));
                }
            }
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(GarsError::InvalidInput("budget must be positive".into()));
        }
        if !(self.alpha_floor >= 0.0 && self.alpha_floor <= 1.0) {
            return Err(GarsError::InvalidInput("alpha floor must lie in [0, 1]".into()));
        }
        match self.mode {
            BudgetMode::Independent => {
                let need = self.alpha_floor * self.total_cost();
                if need > self.beta * (1.0 + 1e-12) {
                    return Err(GarsError::Infeasible(format!(
                        "alpha * sum c_jk = {need} exceeds beta = {}",
                        self.beta
                    )));
                }
            }
            BudgetMode::AtMostOne => {
                let m = (k * (k - 1) / 2) as f64;
                if self.alpha_floor * m > 1.0 + 1e-12 {
                    return Err(GarsError::Infeasible(format!(
                        "alpha * (K choose 2) = {} exceeds 1",
                        self.alpha_floor * m
                    )));
                }
                let need = self.alpha_floor * self.total_cost_upper();
                if need > self.beta * (1.0 + 1e-12) {
                    return Err(GarsError::Infeasible(format!(
                        "alpha * sum_(j<k) c_jk = {need} exceeds beta = {}",
                        self.beta
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn unit_cost_matrix(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |a, b| if a == b { 0.0 } else { 1.0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct AcquisitionSolution {
    pub mode: BudgetMode,
    /// Per-context K x K row-major probabilities. In at-most-one mode only
    /// entries with j < k are used.
    pub pi: Vec<Vec<f64>>,
    /// No-label probability per context (at-most-one mode).
    pub pi0: Option<Vec<f64>>,
    pub lambda: f64,
    pub nu: Option<Vec<f64>>,
    pub achieved_cost: f64,
    pub beta: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl AcquisitionSolution {
    pub fn k(&self) -> usize {
        (self.pi.first().map_or(0, |p| p.len()) as f64).sqrt().round() as usize
    }

    /// Propensities as PiMatrix rows (independent mode).
    pub fn pi_matrices(&self) -> Result<Vec<PiMatrix>> {
        let k = self.k();
        self.pi.iter().map(|p| PiMatrix::new(k, p.clone())).collect()
    }
}

/// W_jk = tr(J_jk V_jk J_jk^T) with V = Diag(mu_jk) - mu_jk mu_jk^T.
pub fn pair_information(mu: &MuTensor, spec: &GarsSpec) -> Result<DMatrix<f64>> {
    let jac = jacobian(&spec.kind, mu, None, &spec.scheme)?;
    Ok(pair_information_from_jacobian(&jac, mu))
}

pub fn pair_information_from_jacobian(jac: &Jacobian, mu: &MuTensor) -> DMatrix<f64> {
    let k = mu.k();
    DMatrix::from_fn(k, k, |a, b| if a == b { 0.0 } else { quad_trace(jac, mu, a, b) })
}

/// tr(J V J^T) = sum_r [ sum_c mu_c J_rc^2 - (sum_c mu_c J_rc)^2 ]
fn quad_trace(jac: &Jacobian, mu: &MuTensor, a: usize, b: usize) -> f64 {
    let s = mu.slice(a, b);
    let mut t = 0.0;
    for r in 0..jac.d() {
        let (mut sq, mut lin) = (0.0, 0.0);
        for (c, m) in s.iter().enumerate() {
            let v = jac.get(a, b, r, c);
            sq += m * v * v;
            lin += m * v;
        }
        t += sq - lin * lin;
    }
    t.max(0.0)
}

/// M_jk = J V J^T (d x d).
pub fn pair_covariance(jac: &Jacobian, mu: &MuTensor, a: usize, b: usize) -> DMatrix<f64> {
    let s = mu.slice(a, b);
    let c = s.len();
    let v = DMatrix::from_fn(c, c, |x, y| if x == y { s[x] - s[x] * s[y] } else { -s[x] * s[y] });
    let j = jac.block(a, b);
    &j * v * j.transpose()
}

pub(crate) fn information_rows(mu_rows: &[MuTensor], spec: &GarsSpec) -> Result<Vec<DMatrix<f64>>> {
    mu_rows.par_iter().map(|mu| pair_information(mu, spec)).collect()
}

/// Mean over contexts of sum_{j != k} c_jk pi_jk.
pub fn expected_cost(pi: &[Vec<f64>], costs: &DMatrix<f64>) -> f64 {
    let k = costs.nrows();
    let total: f64 = pi
        .iter()
        .map(|p| {
            let mut s = 0.0;
            for a in 0..k {
                for b in (0..k).filter(|&b| b != a) {
                    s += costs[(a, b)] * p[a * k + b];
                }
            }
            s
        })
        .sum();
    total / pi.len().max(1) as f64
}

#[inline]
pub(crate) fn sqrt_rule(w: f64, denom: f64, alpha: f64) -> f64 {
    let raw = if w <= 0.0 {
        0.0
    } else if denom <= 0.0 {
        f64::INFINITY
    } else {
        (w / denom).sqrt()
    };
    raw.clamp(alpha, 1.0)
}

fn clipped_policy(w_rows: &[DMatrix<f64>], budget: &BudgetSpec, lambda: f64) -> Vec<Vec<f64>> {
    let k = budget.k();
    w_rows
        .iter()
        .map(|w| {
            let mut p = vec![0.0; k * k];
            for a in 0..k {
                for b in (0..k).filter(|&b| b != a) {
                    p[a * k + b] = sqrt_rule(w[(a, b)], lambda * budget.costs[(a, b)], budget.alpha_floor);
                }
            }
            p
        })
        .collect()
}

/// Variable part of tr Sigma(pi): mean over contexts of sum W_jk / pi_jk.
pub fn a_objective(w_rows: &[DMatrix<f64>], pi: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (w, p) in w_rows.iter().zip(pi) {
        let k = w.nrows();
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                if w[(a, b)] > 0.0 {
                    total += w[(a, b)] / p[a * k + b];
                }
            }
        }
    }
    total / w_rows.len().max(1) as f64
}

/// A-optimal policy from the functional's pair information.
pub fn a_optimal(mu_rows: &[MuTensor], budget: &BudgetSpec, spec: &GarsSpec, tol: f64) -> Result<AcquisitionSolution> {
    let w = information_rows(mu_rows, spec)?;
    a_optimal_from_weights(&w, budget, tol)
}

/// Clipped square-root rule pi = clip(sqrt(W / (lambda c)), alpha, 1) with
/// lambda found by bisection so the expected cost meets beta.
pub fn a_optimal_from_weights(w_rows: &[DMatrix<f64>], budget: &BudgetSpec, tol: f64) -> Result<AcquisitionSolution> {
    if budget.mode != BudgetMode::Independent {
        return Err(GarsError::InvalidInput("a_optimal requires independent selection".into()));
    }
    budget.validate()?;
    if w_rows.is_empty() {
        return Err(GarsError::InvalidInput("no contexts".into()));
    }
    let beta = budget.beta;
    let mut warnings = Vec::new();
    let done = |pi: Vec<Vec<f64>>, lambda: f64, iterations: usize, warnings: Vec<String>| {
        let achieved_cost = expected_cost(&pi, &budget.costs);
        let objective = a_objective(w_rows, &pi);
        AcquisitionSolution {
            mode: BudgetMode::Independent,
            pi,
            pi0: None,
            lambda,
            nu: None,
            achieved_cost,
            beta,
            objective,
            iterations,
            converged: true,
            warnings,
        }
    };
    if budget.total_cost() <= beta {
        let k = budget.k();
        let ones = (0..w_rows.len())
            .map(|_| (0..k * k).map(|i| if i / k == i % k { 0.0 } else { 1.0 }).collect())
            .collect();
        return Ok(done(ones, 0.0, 0, warnings));
    }
    let cost = |lambda: f64| expected_cost(&clipped_policy(w_rows, budget, lambda), &budget.costs);
    let c_lo = cost(LAMBDA_LO);
    if c_lo <= beta {
        if (beta - c_lo) > tol * beta {
            warnings.push(format!(
                "budget equality unattainable under clipping: best cost {c_lo} < beta {beta} (gap {})",
                beta - c_lo
            ));
        }
        return Ok(done(clipped_policy(w_rows, budget, LAMBDA_LO), LAMBDA_LO, 0, warnings));
    }
    let (lo, hi, it) = bisect_lambda(&cost, beta, tol)?;
    let _ = lo;
    Ok(done(clipped_policy(w_rows, budget, hi), hi, it, warnings))
}

/// Geometric bisection for a decreasing cost(lambda). Returns (lo, hi, iters)
/// with cost(hi) <= beta < cost(lo) or |cost(hi) - beta| <= tol * beta.
pub(crate) fn bisect_lambda(cost: &dyn Fn(f64) -> f64, beta: f64, tol: f64) -> Result<(f64, f64, usize)> {
    let mut lo = LAMBDA_LO;
    let mut hi = 1.0;
    let mut guard = 0;
    while cost(hi) > beta {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(GarsError::Numeric("cannot bracket the budget multiplier".into()));
        }
    }
    let mut c_hi = cost(hi);
    let mut it = 0;
    while it < MAX_BISECTION && (c_hi - beta).abs() > tol * beta && hi / lo - 1.0 > 1e-15 {
        it += 1;
        let mid = (lo * hi).sqrt();
        let c = cost(mid);
        if c > beta {
            lo = mid;
        } else {
            hi = mid;
            c_hi = c;
        }
    }
    Ok((lo, hi, it))
}

/// Constant-rate policy whose expected cost equals beta (capped at 1).
pub fn uniform_policy(n: usize, budget: &BudgetSpec) -> AcquisitionSolution {
    let k = budget.k();
    let rate = (budget.beta / budget.total_cost()).min(1.0);
    let pi: Vec<Vec<f64>> =
        (0..n).map(|_| (0..k * k).map(|i| if i / k == i % k { 0.0 } else { rate }).collect()).collect();
    AcquisitionSolution {
        mode: BudgetMode::Independent,
        achieved_cost: expected_cost(&pi, &budget.costs),
        pi,
        pi0: None,
        lambda: 0.0,
        nu: None,
        beta: budget.beta,
        objective: f64::NAN,
        iterations: 0,
        converged: true,
        warnings: Vec::new(),
    }
}

/// Sigma(pi) = Cov(F(mu(X))) + mean_i sum_{j != k} M_jk(x_i) / pi_jk(x_i),
/// assuming labels are conditionally independent across pairs.
pub fn efficiency_bound(mu_rows: &[MuTensor], pi: &[Vec<f64>], spec: &GarsSpec) -> Result<DMatrix<f64>> {
    let parts = bound_parts(mu_rows, spec)?;
    efficiency_bound_from_parts(&parts, pi)
}

/// Per-context F values and pair covariances M_jk, reusable across policies.
pub struct BoundParts {
    pub cov_f: DMatrix<f64>,
    /// m[i][a*K+b] = M_ab(x_i)
    pub m: Vec<Vec<DMatrix<f64>>>,
    pub k: usize,
}

pub fn bound_parts(mu_rows: &[MuTensor], spec: &GarsSpec) -> Result<BoundParts> {
    if mu_rows.is_empty() {
        return Err(GarsError::InvalidInput("no contexts".into()));
    }
    let k = mu_rows[0].k();
    let rows: Vec<(nalgebra::DVector<f64>, Vec<DMatrix<f64>>)> = mu_rows
        .par_iter()
        .map(|mu| {
            let f = evaluate(&spec.kind, mu, &spec.scheme)?;
            let jac = jacobian(&spec.kind, mu, None, &spec.scheme)?;
            let d = jac.d();
            let m = (0..k * k)
                .map(|ab| {
                    let (a, b) = (ab / k, ab % k);
                    if a == b {
                        DMatrix::zeros(d, d)
                    } else {
                        pair_covariance(&jac, mu, a, b)
                    }
                })
                .collect();
            Ok((f, m))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let d = rows[0].0.len();
    let mut mean = nalgebra::DVector::zeros(d);
    for (f, _) in &rows {
        mean += f;
    }
    mean /= n;
    let mut cov_f = DMatrix::zeros(d, d);
    for (f, _) in &rows {
        let c = f - &mean;
        cov_f += &c * c.transpose();
    }
    cov_f /= n;
    Ok(BoundParts { cov_f, m: rows.into_iter().map(|(_, m)| m).collect(), k })
}

pub fn efficiency_bound_from_parts(parts: &BoundParts, pi: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = parts.k;
    if pi.len() != parts.m.len() {
        return Err(GarsError::InvalidInput("policy rows do not match contexts".into()));
    }
    let mut sigma = parts.cov_f.clone();
    let mut corr = DMatrix::zeros(sigma.nrows(), sigma.ncols());
    for (ms, p) in parts.m.iter().zip(pi) {
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                let v = p[a * k + b];
                if ms[a * k + b].iter().all(|x| *x == 0.0) {
                    continue;
                }
                if !(v > 0.0) {
                    return Err(GarsError::InvalidInput(format!("zero propensity for pair ({a},{b})")));
                }
                corr += &ms[a * k + b] / v;
            }
        }
    }
    sigma += corr / pi.len() as f64;
    Ok(sigma)
}

/// Selected ordered pairs per context. At-most-one solutions draw a single
/// categorical over unordered pairs plus "none"; the pair is shown as (j, k)
/// with j < k. `eps_mix` mixes in the budget-matched uniform policy.
pub fn sample_selection(sol: &AcquisitionSolution, seed: u64, eps_mix: f64) -> Result<Vec<Vec<(usize, usize)>>> {
    if !(0.0..=1.0).contains(&eps_mix) {
        return Err(GarsError::InvalidInput("mixing weight must lie in [0,1]".into()));
    }
    let k = sol.k();
    let n_pairs = k * (k - 1);
    for p in &sol.pi {
        if p.iter().any(|v| !(-1e-9..=1.0 + 1e-9).contains(v)) {
            return Err(GarsError::InvalidInput("policy probability outside [0,1]".into()));
        }
    }
    Ok(sol
        .pi
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut g = rng::stream(seed, rng::tags::SELECTION, i as u64);
            match sol.mode {
                BudgetMode::Independent => {
                    let avg = p.iter().sum::<f64>() / n_pairs as f64;
                    let mut sel = Vec::new();
                    for a in 0..k {
                        for b in (0..k).filter(|&b| b != a) {
                            let q = ((1.0 - eps_mix) * p[a * k + b] + eps_mix * avg).clamp(0.0, 1.0);
                            if g.gen::<f64>() < q {
                                sel.push((a, b));
                            }
                        }
                    }
                    sel
                }
                BudgetMode::AtMostOne => {
                    let m = n_pairs / 2;
                    let total: f64 = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).map(|(a, b)| p[a * k + b]).sum();
                    let u: f64 = g.gen();
                    let mut acc = 0.0;
                    for a in 0..k {
                        for b in a + 1..k {
                            acc += (1.0 - eps_mix) * p[a * k + b] + eps_mix * total / m as f64;
                            if u < acc {
                                return vec![(a, b)];
                            }
                        }
                    }
                    Vec::new()
                }
            }
        })
        .collect())
}
