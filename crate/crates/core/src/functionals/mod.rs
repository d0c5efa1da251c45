//! GARS functionals F(mu(x)) and their per-pair Jacobian blocks.

mod check;
mod jacobian;
mod projection;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GarsError, Result};
use crate::model::{symmetrized_scores, CategoryScheme, MuTensor, DEFAULT_CLAMP_EPS};

pub use jacobian::{
    jacobian, jacobian_closed, jacobian_numeric, jacobian_numeric_with, Jacobian, DEFAULT_FD_STEP,
};
pub use check::{check_jacobians, random_interior_mu, JacobianCheckConfig, JacobianCheckReport, JacobianCheckRow, JacobianMutation};
pub use projection::{projection_constants, zero_sum_basis, ProjectionConstants};

/// Row sums of R below this switch to a uniform transition row.
pub const RC_DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiscalLoss {
    Squared,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarsKind {
    Borda,
    BtProjection,
    RankCentrality,
    Softmax,
    SoftCopeland { tau: f64 },
    /// Each ranking lists items from best to worst.
    Kemeny { rankings: Vec<Vec<usize>> },
    JudgeMiscalibration { loss: MiscalLoss },
}

impl GarsKind {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            GarsKind::SoftCopeland { tau } if !(*tau > 0.0 && tau.is_finite()) => {
                Err(GarsError::InvalidInput(format!("soft-Copeland temperature must be positive, got {tau}")))
            }
            GarsKind::Kemeny { rankings } => {
                if rankings.is_empty() {
                    return Err(GarsError::InvalidInput("Kemeny needs at least one ranking".into()));
                }
                for r in rankings {
                    let mut seen = vec![false; k];
                    if r.len() != k || r.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
                        return Err(GarsError::InvalidInput(format!("{r:?} is not a permutation of 0..{k}")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Output dimension d.
    pub fn dim(&self, k: usize) -> usize {
        match self {
            GarsKind::Kemeny { rankings } => rankings.len(),
            _ => k,
        }
    }

    pub fn has_closed_jacobian(&self) -> bool {
        matches!(self, GarsKind::Borda | GarsKind::BtProjection | GarsKind::RankCentrality)
    }

    pub fn needs_judge(&self) -> bool {
        matches!(self, GarsKind::JudgeMiscalibration { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            GarsKind::Borda => "borda",
            GarsKind::BtProjection => "bt",
            GarsKind::RankCentrality => "rc",
            GarsKind::Softmax => "softmax",
            GarsKind::SoftCopeland { .. } => "copeland",
            GarsKind::Kemeny { .. } => "kemeny",
            GarsKind::JudgeMiscalibration { .. } => "miscal",
        }
    }
}

/// A functional together with the category weights it is evaluated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarsSpec {
    pub kind: GarsKind,
    pub scheme: CategoryScheme,
}

impl GarsSpec {
    pub fn new(kind: GarsKind, scheme: CategoryScheme) -> Self {
        GarsSpec { kind, scheme }
    }
    pub fn dim(&self, k: usize) -> usize {
        self.kind.dim(k)
    }
}

/// F(mu) for every kind that does not need a judge tensor.
pub fn evaluate(kind: &GarsKind, mu: &MuTensor, scheme: &CategoryScheme) -> Result<DVector<f64>> {
    evaluate_judged(kind, mu, None, scheme)
}

pub fn evaluate_judged(
    kind: &GarsKind,
    mu: &MuTensor,
    judge: Option<&MuTensor>,
    scheme: &CategoryScheme,
) -> Result<DVector<f64>> {
    if mu.c() != scheme.c() {
        return Err(GarsError::InvalidInput(format!("tensor has C={} but scheme has C={}", mu.c(), scheme.c())));
    }
    let k = mu.k();
    match kind {
        GarsKind::Borda => Ok(borda(mu, scheme)),
        GarsKind::BtProjection => Ok(bt_projection(mu, scheme)),
        GarsKind::RankCentrality => rank_centrality(mu, scheme).map(|(f, _)| f),
        GarsKind::Softmax => Ok(softmax(&bt_projection(mu, scheme))),
        GarsKind::SoftCopeland { tau } => {
            let s = symmetrized_scores(mu, scheme);
            Ok(DVector::from_fn(k, |i, _| {
                (0..k).filter(|&j| j != i).map(|j| sigmoid((s[(i, j)] - 0.5) / tau)).sum::<f64>() / (k - 1) as f64
            }))
        }
        GarsKind::Kemeny { rankings } => {
            let s = symmetrized_scores(mu, scheme);
            Ok(DVector::from_iterator(
                rankings.len(),
                rankings.iter().map(|r| {
                    let pos = positions(r);
                    let mut v = 0.0;
                    for i in 0..k {
                        for j in i + 1..k {
                            let delta = if pos[i] < pos[j] { 1.0 } else { 0.0 };
                            v += (delta - 0.5) * 2.0 * s[(i, j)];
                        }
                    }
                    v
                }),
            ))
        }
        GarsKind::JudgeMiscalibration { loss } => {
            let f = judge.ok_or_else(|| GarsError::InvalidInput("miscalibration needs judge probabilities".into()))?;
            if f.k() != k || f.c() != mu.c() {
                return Err(GarsError::InvalidInput("judge tensor shape differs from mu".into()));
            }
            let pair_loss = |a: usize, b: usize| -> f64 {
                let (fs, ms) = (f.slice(a, b), mu.slice(a, b));
                match loss {
                    MiscalLoss::Squared => fs.iter().zip(ms).map(|(x, y)| (x - y) * (x - y)).sum(),
                    MiscalLoss::CrossEntropy => {
                        -fs.iter().zip(ms).map(|(x, y)| y * x.max(DEFAULT_CLAMP_EPS).ln()).sum::<f64>()
                    }
                }
            };
            Ok(DVector::from_fn(k, |i, _| {
                (0..k).filter(|&j| j != i).map(|j| pair_loss(i, j) + pair_loss(j, i)).sum::<f64>()
                    / (2.0 * (k - 1) as f64)
            }))
        }
    }
}

/// Item positions in a best-to-worst ranking.
fn positions(r: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; r.len()];
    for (p, &i) in r.iter().enumerate() {
        pos[i] = p;
    }
    pos
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn softmax(v: &DVector<f64>) -> DVector<f64> {
    let m = v.max();
    let e = v.map(|x| (x - m).exp());
    let s = e.sum();
    e / s
}

fn borda(mu: &MuTensor, scheme: &CategoryScheme) -> DVector<f64> {
    let k = mu.k();
    let s = symmetrized_scores(mu, scheme);
    DVector::from_fn(k, |j, _| s.row(j).sum() / (k - 1) as f64)
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(DEFAULT_CLAMP_EPS, 1.0 - DEFAULT_CLAMP_EPS)
}

/// Edge logits l_jk = (logit <w1, mu_jk> + logit <w2, mu_kj>) / 2 for j < k.
/// Directional probabilities are clamped into [1e-6, 1 - 1e-6] first.
pub fn edge_logits(mu: &MuTensor, scheme: &CategoryScheme) -> DVector<f64> {
    let pc = projection_constants(mu.k());
    DVector::from_iterator(
        pc.n_edges(),
        pc.edges().iter().map(|&(j, k)| {
            let p1 = clamp_prob(mu.score(j, k, &scheme.w1));
            let p2 = clamp_prob(mu.score(k, j, &scheme.w2));
            0.5 * (logit(p1) + logit(p2))
        }),
    )
}

fn bt_projection(mu: &MuTensor, scheme: &CategoryScheme) -> DVector<f64> {
    let pc = projection_constants(mu.k());
    &pc.p * edge_logits(mu, scheme)
}

/// Row-stochastic T with T_ij proportional to R_ij = s_sym_ji. Rows whose
/// total is below 1e-12 become uniform over the other items. Also returns
/// the row totals (zero marks a fallback row).
pub fn transition_matrix_with_totals(mu: &MuTensor, scheme: &CategoryScheme) -> (DMatrix<f64>, Vec<f64>) {
    let k = mu.k();
    let s = symmetrized_scores(mu, scheme);
    let mut t = s.transpose();
    let mut totals = vec![0.0; k];
    for i in 0..k {
        let d: f64 = t.row(i).sum();
        if d < RC_DEGENERATE_TOL {
            for j in 0..k {
                t[(i, j)] = if i == j { 0.0 } else { 1.0 / (k - 1) as f64 };
            }
        } else {
            totals[i] = d;
            for j in 0..k {
                t[(i, j)] /= d;
            }
        }
    }
    (t, totals)
}

pub fn transition_matrix(mu: &MuTensor, scheme: &CategoryScheme) -> DMatrix<f64> {
    transition_matrix_with_totals(mu, scheme).0
}

/// A = I - T^T + 1 1^T, whose solution against 1 is the stationary vector.
pub(crate) fn rc_system(t: &DMatrix<f64>) -> DMatrix<f64> {
    let k = t.nrows();
    DMatrix::from_fn(k, k, |a, b| (if a == b { 1.0 } else { 0.0 }) - t[(b, a)] + 1.0)
}

fn rank_centrality(mu: &MuTensor, scheme: &CategoryScheme) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = mu.k();
    let (t, _) = transition_matrix_with_totals(mu, scheme);
    let a = rc_system(&t);
    let lu = a.lu();
    let f = lu
        .solve(&DVector::from_element(k, 1.0))
        .filter(|f| f.iter().all(|v| v.is_finite()))
        .ok_or_else(|| GarsError::Numeric("singular Rank Centrality system I - T^T + 11^T".into()))?;
    Ok((f, t))
}
