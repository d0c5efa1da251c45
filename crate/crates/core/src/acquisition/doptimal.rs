//! D-optimal fixed point pi = clip(sqrt(tr(Sigma(pi)^+ M_jk) / (lambda c)), alpha, 1).

use nalgebra::{DMatrix, SymmetricEigen};

use super::{
    a_optimal_from_weights, bound_parts, efficiency_bound_from_parts, information_rows, AcquisitionSolution, BudgetSpec,
};
use crate::error::{GarsError, Result};
use crate::functionals::GarsSpec;
use crate::model::MuTensor;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const PSEUDO_REL_FLOOR: f64 = 1e-9;

/// Pseudo-inverse and pseudo-log-determinant of a symmetric PSD matrix.
/// Functionals with a fixed sum (Borda, BT) have a covariance that is
/// singular along the constrained direction, so both are taken on the range.
pub fn pseudo_inverse_logdet(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let d = sigma.nrows();
    let jittered = sigma + DMatrix::identity(d, d) * 1e-10 * sigma.trace().abs().max(1e-300) / d as f64;
    let eig = SymmetricEigen::new((&jittered + jittered.transpose()) * 0.5);
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return Err(GarsError::Numeric("efficiency bound is zero or not positive semidefinite".into()));
    }
    let cut = PSEUDO_REL_FLOOR * max;
    let mut inv = DMatrix::zeros(d, d);
    let mut logdet = 0.0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut {
            let v = eig.eigenvectors.column(i);
            inv += v * v.transpose() / l;
            logdet += l.ln();
        }
    }
    Ok((inv, logdet))
}

// Inner budget solves must be tight; slack there shows up as log det noise.
const INNER_TOL: f64 = 1e-12;

pub fn d_optimal(
    mu_rows: &[MuTensor],
    budget: &BudgetSpec,
    spec: &GarsSpec,
    max_iter: usize,
    tol: f64,
) -> Result<AcquisitionSolution> {
    let w_a = information_rows(mu_rows, spec)?;
    let mut sol = a_optimal_from_weights(&w_a, budget, INNER_TOL)?;
    let parts = bound_parts(mu_rows, spec)?;
    let k = budget.k();
    let (_, mut logdet) = pseudo_inverse_logdet(&efficiency_bound_from_parts(&parts, &sol.pi)?)?;
    let mut warnings = sol.warnings.clone();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let sigma = efficiency_bound_from_parts(&parts, &sol.pi)?;
        let (inv, _) = pseudo_inverse_logdet(&sigma)?;
        let w_d: Vec<DMatrix<f64>> = parts
            .m
            .iter()
            .map(|ms| {
                DMatrix::from_fn(k, k, |a, b| {
                    if a == b {
                        0.0
                    } else {
                        (&inv * &ms[a * k + b]).trace().max(0.0)
                    }
                })
            })
            .collect();
        let next = a_optimal_from_weights(&w_d, budget, INNER_TOL)?;
        let change = sol
            .pi
            .iter()
            .zip(&next.pi)
            .flat_map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let (_, ld) = pseudo_inverse_logdet(&efficiency_bound_from_parts(&parts, &next.pi)?)?;
        if ld > logdet + 1e-9 * logdet.abs().max(1.0) {
            warnings.push(format!("iteration {iterations}: log det increased from {logdet} to {ld}"));
        }
        logdet = ld;
        sol = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("fixed point not reached in {max_iter} iterations"));
    }
    sol.objective = logdet;
    sol.iterations = iterations;
    sol.converged = converged;
    sol.warnings = warnings;
    Ok(sol)
}
