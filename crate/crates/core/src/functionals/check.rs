//! Closed-form vs finite-difference Jacobian comparison over a (K, C) grid.

use rand::Rng;
use serde::Serialize;

use super::{jacobian_closed, jacobian_numeric, GarsKind, DEFAULT_FD_STEP};
use crate::error::Result;
use crate::model::{CategoryScheme, MuTensor};
use crate::rng;

/// Deliberate corruption of a closed form, used to show the check can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMutation {
    BordaSignFlip,
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianCheckConfig {
    pub ks: Vec<usize>,
    pub cs: Vec<usize>,
    pub kinds: Vec<GarsKind>,
    /// Random tensors per (kind, K, C) cell.
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    /// Minimum category mass of the sampled tensors.
    pub floor: f64,
    pub h: f64,
}

impl Default for JacobianCheckConfig {
    fn default() -> Self {
        JacobianCheckConfig {
            ks: vec![2, 3, 5],
            cs: vec![2, 3, 4],
            kinds: vec![GarsKind::Borda, GarsKind::BtProjection, GarsKind::RankCentrality],
            samples: 100,
            seed: 0,
            tol: 1e-6,
            floor: 0.02,
            h: DEFAULT_FD_STEP,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianCheckRow {
    pub kind: String,
    pub k: usize,
    pub c: usize,
    pub max_dev: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianCheckReport {
    pub config: JacobianCheckConfig,
    pub mutation: Option<JacobianMutation>,
    pub rows: Vec<JacobianCheckRow>,
    pub max_dev: f64,
    pub pass: bool,
}

/// Slices drawn uniformly from the simplex and mixed with the uniform
/// vector so every entry is at least `floor`.
pub fn random_interior_mu(k: usize, c: usize, floor: f64, g: &mut impl Rng) -> MuTensor {
    let floor = floor.clamp(0.0, 1.0 / c as f64);
    let mix = floor * c as f64;
    MuTensor::from_fn(k, c, |_, _| {
        let e: Vec<f64> = (0..c).map(|_| -(1.0 - g.gen::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| (1.0 - mix) * v / s + floor).collect()
    })
    .expect("mixture of simplex points is on the simplex")
}

pub fn check_jacobians(cfg: &JacobianCheckConfig, mutation: Option<JacobianMutation>) -> Result<JacobianCheckReport> {
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for kind in &cfg.kinds {
        for &k in &cfg.ks {
            for &c in &cfg.cs {
                let scheme = CategoryScheme::default_for(c)?;
                let mut g = rng::stream(cfg.seed, rng::tags::JACOBIAN, cell);
                cell += 1;
                let mut max_dev = 0.0f64;
                for _ in 0..cfg.samples {
                    let mu = random_interior_mu(k, c, cfg.floor, &mut g);
                    let mut closed = jacobian_closed(kind, &mu, &scheme)?;
                    if mutation == Some(JacobianMutation::BordaSignFlip) && *kind == GarsKind::Borda {
                        closed.negate();
                    }
                    let numeric = jacobian_numeric(kind, &mu, &scheme, cfg.h)?;
                    max_dev = max_dev.max(closed.max_abs_diff(&numeric));
                }
                rows.push(JacobianCheckRow { kind: kind.name().to_string(), k, c, max_dev });
            }
        }
    }
    let max_dev = rows.iter().map(|r| r.max_dev).fold(0.0, f64::max);
    Ok(JacobianCheckReport { config: cfg.clone(), mutation, rows, max_dev, pass: max_dev < cfg.tol })
}
