//! Efficient estimation when the Bradley-Terry model is assumed to hold
//! (binary categories), and the matching A-optimal pair weights.
//!
//! Each restricted Jacobian column is 1/4 L^dagger b_jk. With this scale the
//! restricted influence function coincides with the unrestricted one for
//! K = 2 without position bias, where the BT model is saturated.

use nalgebra::{DMatrix, DVector};

use crate::error::{GarsError, Result};
use crate::functionals::{edge_logits, projection_constants, sigmoid, GarsKind, GarsSpec, Jacobian};
use crate::inference::{eif_summands, estimate_from_summands, EstimatorTag, GarsEstimate, InferenceOptions};
use crate::model::{CategoryScheme, MuTensor, PiMatrix, PreferenceDataset};
use crate::nuisance::CrossFittedNuisances;

#[derive(Debug, Clone)]
pub struct BtRestrictedContext {
    /// sigma(l_jk) per edge j < k.
    pub mu_bar: DVector<f64>,
    pub w_diag: DVector<f64>,
    pub l_bt: DMatrix<f64>,
    /// H (H^T L_bt H)^{-1} H^T
    pub l_dagger: DMatrix<f64>,
}

impl BtRestrictedContext {
    pub fn new(mu: &MuTensor, scheme: &CategoryScheme) -> Result<Self> {
        let k = mu.k();
        let pc = projection_constants(k);
        let mu_bar = edge_logits(mu, scheme).map(sigmoid);
        let w_diag = mu_bar.map(|m| m * (1.0 - m));
        let l_bt = pc.b.transpose() * DMatrix::from_diagonal(&w_diag) * &pc.b;
        let inner = pc.h.transpose() * &l_bt * &pc.h;
        let inv = inner
            .cholesky()
            .ok_or_else(|| GarsError::Numeric("BT information Laplacian is singular".into()))?
            .inverse();
        let l_dagger = &pc.h * inv * pc.h.transpose();
        Ok(BtRestrictedContext { mu_bar, w_diag, l_bt, l_dagger })
    }

    /// L^dagger (e_j - e_k)
    pub fn ldagger_b(&self, j: usize, k: usize) -> DVector<f64> {
        self.l_dagger.column(j) - self.l_dagger.column(k)
    }
}

fn require_binary(c: usize) -> Result<()> {
    if c != 2 {
        return Err(GarsError::InvalidInput(format!(
            "the BT-restricted estimator needs binary categories (C=2), got C={c}; reduce the data first"
        )));
    }
    Ok(())
}

/// K x 2 block [L^dagger b / 4, -L^dagger b / 4].
pub fn bt_restricted_jacobian(ctx: &BtRestrictedContext, j: usize, k: usize, c: usize) -> Result<DMatrix<f64>> {
    require_binary(c)?;
    let v = ctx.ldagger_b(j, k) * 0.25;
    let kk = v.len();
    Ok(DMatrix::from_fn(kk, 2, |r, col| if col == 0 { v[r] } else { -v[r] }))
}

fn restricted_jacobian_all(mu: &MuTensor, scheme: &CategoryScheme) -> Result<Jacobian> {
    let k = mu.k();
    let ctx = BtRestrictedContext::new(mu, scheme)?;
    let mut jac = Jacobian::zeros(k, k, 2);
    for a in 0..k {
        for b in (0..k).filter(|&b| b != a) {
            let v = ctx.ldagger_b(a, b);
            for r in 0..k {
                jac.set(a, b, r, 0, 0.25 * v[r]);
                jac.set(a, b, r, 1, -0.25 * v[r]);
            }
        }
    }
    Ok(jac)
}

/// One-step estimator with F = BT projection and restricted Jacobian blocks.
pub fn bt_restricted_debiased(ds: &PreferenceDataset, nuisances: &CrossFittedNuisances, scheme: &CategoryScheme) -> Result<GarsEstimate> {
    bt_restricted_debiased_with(ds, &nuisances.mu_hat, &nuisances.pi_hat, scheme, &InferenceOptions::default())
}

pub fn bt_restricted_debiased_with(
    ds: &PreferenceDataset,
    mu_hat: &[MuTensor],
    pi_hat: &[PiMatrix],
    scheme: &CategoryScheme,
    opts: &InferenceOptions,
) -> Result<GarsEstimate> {
    require_binary(ds.c())?;
    let spec = GarsSpec::new(GarsKind::BtProjection, scheme.clone());
    let rows = eif_summands(ds, mu_hat, pi_hat, None, &spec, opts, &|_, mu| restricted_jacobian_all(mu, scheme))?;
    Ok(estimate_from_summands(&rows, &spec, EstimatorTag::BtRestricted, opts))
}

/// W_jk = tr(J V J^T) = 1/4 mu_jk1 (1 - mu_jk1) ||L^dagger b_jk||^2.
pub fn bt_restricted_pair_information(ctx: &BtRestrictedContext, mu: &MuTensor) -> Result<DMatrix<f64>> {
    require_binary(mu.c())?;
    let k = mu.k();
    Ok(DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            0.0
        } else {
            let m = mu.get(a, b, 0);
            0.25 * m * (1.0 - m) * ctx.ldagger_b(a, b).norm_squared()
        }
    }))
}

/// Binary reduction of a multi-category tensor: first-item win probability
/// <w1, mu_jk>. Requires w1 + w2 = 1 so both display orders stay consistent.
pub fn reduce_to_binary(mu: &MuTensor, scheme: &CategoryScheme) -> Result<MuTensor> {
    if !scheme.is_complementary() {
        return Err(GarsError::InvalidInput("binary reduction needs w1 + w2 = 1".into()));
    }
    let k = mu.k();
    MuTensor::from_fn(k, 2, |a, b| {
        let p = mu.score(a, b, &scheme.w1).clamp(0.0, 1.0);
        vec![p, 1.0 - p]
    })
}

/// Reduce a dataset to binary labels. A label with first-item weight w1[c]
/// becomes a first-item win with probability w1[c] (randomized rounding, so
/// the win probability is <w1, mu_jk>). Judge vectors reduce through <w1, f>.
pub fn reduce_dataset_to_binary(ds: &PreferenceDataset, seed: u64) -> Result<PreferenceDataset> {
    use rand::Rng;
    let scheme = ds.scheme();
    if !scheme.is_complementary() {
        return Err(GarsError::InvalidInput("binary reduction needs w1 + w2 = 1".into()));
    }
    if ds.c() == 2 && scheme == &CategoryScheme::binary() {
        return Ok(ds.clone());
    }
    let contexts = (0..ds.n()).map(|i| ds.context(i).to_vec()).collect();
    let selections = (0..ds.n())
        .map(|i| {
            let mut g = crate::rng::stream(seed, crate::rng::tags::LABELS, i as u64);
            ds.selections(i)
                .iter()
                .map(|p| {
                    let w = scheme.w1[p.label];
                    let win = w >= 1.0 || (w > 0.0 && g.gen::<f64>() < w);
                    crate::model::LabeledPair { j: p.j, k: p.k, label: if win { 0 } else { 1 } }
                })
                .collect()
        })
        .collect();
    let judge = (0..ds.n())
        .map(|i| {
            ds.judge(i)
                .iter()
                .map(|e| {
                    let p: f64 = e.probs.iter().zip(&scheme.w1).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0);
                    crate::model::JudgeEntry { j: e.j, k: e.k, probs: vec![p, 1.0 - p] }
                })
                .collect()
        })
        .collect();
    PreferenceDataset::new(ds.items(), CategoryScheme::binary(), contexts, selections, judge)
}
