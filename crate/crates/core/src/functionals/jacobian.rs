//! Per-pair Jacobian blocks J_jk = dF / d mu_jk (d x C each).

use nalgebra::{DMatrix, DVector};

use super::{
    evaluate_judged, projection_constants, rc_system, transition_matrix_with_totals, GarsKind,
};
use crate::error::{GarsError, Result};
use crate::model::{CategoryScheme, MuTensor, DEFAULT_CLAMP_EPS};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Blocks for every ordered pair; diagonal blocks are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    k: usize,
    d: usize,
    c: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(k: usize, d: usize, c: usize) -> Self {
        Jacobian { k, d, c, data: vec![0.0; k * k * d * c] }
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn c(&self) -> usize {
        self.c
    }
    #[inline]
    fn offset(&self, j: usize, k: usize) -> usize {
        (j * self.k + k) * self.d * self.c
    }
    #[inline]
    pub fn get(&self, j: usize, k: usize, r: usize, c: usize) -> f64 {
        self.data[self.offset(j, k) + r * self.c + c]
    }
    #[inline]
    pub fn set(&mut self, j: usize, k: usize, r: usize, c: usize, v: f64) {
        let o = self.offset(j, k) + r * self.c + c;
        self.data[o] = v;
    }
    pub fn block(&self, j: usize, k: usize) -> DMatrix<f64> {
        let o = self.offset(j, k);
        DMatrix::from_row_slice(self.d, self.c, &self.data[o..o + self.d * self.c])
    }
    /// out += scale * J_jk v
    pub fn apply_add(&self, j: usize, k: usize, v: &[f64], scale: f64, out: &mut [f64]) {
        let o = self.offset(j, k);
        for r in 0..self.d {
            let row = &self.data[o + r * self.c..o + (r + 1) * self.c];
            out[r] += scale * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    pub fn negate(&mut self) {
        self.data.iter_mut().for_each(|v| *v = -*v);
    }

    pub fn max_abs_diff(&self, other: &Jacobian) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Closed forms for Borda, BT projection and Rank Centrality.
pub fn jacobian_closed(kind: &GarsKind, mu: &MuTensor, scheme: &CategoryScheme) -> Result<Jacobian> {
    let (k, c) = (mu.k(), mu.c());
    match kind {
        GarsKind::Borda => {
            let mut jac = Jacobian::zeros(k, k, c);
            let scale = 1.0 / (2.0 * (k - 1) as f64);
            for a in 0..k {
                for b in (0..k).filter(|&b| b != a) {
                    for cc in 0..c {
                        jac.set(a, b, a, cc, scale * scheme.w1[cc]);
                        jac.set(a, b, b, cc, scale * scheme.w2[cc]);
                    }
                }
            }
            Ok(jac)
        }
        GarsKind::BtProjection => {
            let pc = projection_constants(k);
            let mut jac = Jacobian::zeros(k, k, c);
            for a in 0..k {
                for b in (0..k).filter(|&b| b != a) {
                    let e = pc.edge(a, b);
                    // a<b: mu_ab enters l_e through p1 = <w1, mu_ab>;
                    // a>b: through p2 = <w2, mu_ab> of edge (b, a)
                    let w = if a < b { &scheme.w1 } else { &scheme.w2 };
                    let p = mu.score(a, b, w);
                    if !(DEFAULT_CLAMP_EPS..=1.0 - DEFAULT_CLAMP_EPS).contains(&p) {
                        continue; // clamped: locally constant
                    }
                    let g = 0.5 / (p * (1.0 - p));
                    for r in 0..k {
                        for cc in 0..c {
                            jac.set(a, b, r, cc, pc.p[(r, e)] * g * w[cc]);
                        }
                    }
                }
            }
            Ok(jac)
        }
        GarsKind::RankCentrality => {
            let (t, totals) = transition_matrix_with_totals(mu, scheme);
            let lu = rc_system(&t).lu();
            let ones = DVector::from_element(k, 1.0);
            let f = lu.solve(&ones).ok_or_else(|| GarsError::Numeric("singular Rank Centrality system".into()))?;
            // u[(i, m)] = A^{-1}(e_m - T_i.^T), the response to perturbing row i toward item m
            let mut u = vec![DVector::zeros(0); k * k];
            for i in 0..k {
                if totals[i] == 0.0 {
                    continue;
                }
                for m in (0..k).filter(|&m| m != i) {
                    let rhs = DVector::from_fn(k, |l, _| (if l == m { 1.0 } else { 0.0 }) - t[(i, l)]);
                    u[i * k + m] = lu.solve(&rhs).ok_or_else(|| GarsError::Numeric("singular Rank Centrality system".into()))?;
                }
            }
            let mut jac = Jacobian::zeros(k, k, c);
            for a in 0..k {
                for b in (0..k).filter(|&b| b != a) {
                    // mu_ab moves R_ba = s_ab (weight w1/2) and R_ab = s_ba (weight w2/2)
                    let gb = if totals[b] > 0.0 { f[b] * 0.5 / totals[b] } else { 0.0 };
                    let ga = if totals[a] > 0.0 { f[a] * 0.5 / totals[a] } else { 0.0 };
                    for cc in 0..c {
                        let (s1, s2) = (gb * scheme.w1[cc], ga * scheme.w2[cc]);
                        for r in 0..k {
                            let mut v = 0.0;
                            if s1 != 0.0 {
                                v += s1 * u[b * k + a][r];
                            }
                            if s2 != 0.0 {
                                v += s2 * u[a * k + b][r];
                            }
                            jac.set(a, b, r, cc, v);
                        }
                    }
                }
            }
            Ok(jac)
        }
        other => Err(GarsError::InvalidInput(format!("no closed-form Jacobian for {}", other.name()))),
    }
}

/// Central finite differences on raw entries, without renormalizing slices.
pub fn jacobian_numeric(kind: &GarsKind, mu: &MuTensor, scheme: &CategoryScheme, h: f64) -> Result<Jacobian> {
    jacobian_numeric_with(kind, mu, None, scheme, h)
}

pub fn jacobian_numeric_with(
    kind: &GarsKind,
    mu: &MuTensor,
    judge: Option<&MuTensor>,
    scheme: &CategoryScheme,
    h: f64,
) -> Result<Jacobian> {
    if !(h > 0.0) {
        return Err(GarsError::InvalidInput("finite-difference step must be positive".into()));
    }
    let (k, c) = (mu.k(), mu.c());
    let d = kind.dim(k);
    let mut jac = Jacobian::zeros(k, d, c);
    let mut work = mu.clone();
    for a in 0..k {
        for b in (0..k).filter(|&b| b != a) {
            for cc in 0..c {
                let idx = mu.index(a, b, cc);
                let orig = mu.as_slice()[idx];
                work.raw_mut()[idx] = orig + h;
                let fp = evaluate_judged(kind, &work, judge, scheme)?;
                work.raw_mut()[idx] = orig - h;
                let fm = evaluate_judged(kind, &work, judge, scheme)?;
                work.raw_mut()[idx] = orig;
                for r in 0..d {
                    jac.set(a, b, r, cc, (fp[r] - fm[r]) / (2.0 * h));
                }
            }
        }
    }
    Ok(jac)
}

/// Closed form where available, numeric otherwise.
pub fn jacobian(kind: &GarsKind, mu: &MuTensor, judge: Option<&MuTensor>, scheme: &CategoryScheme) -> Result<Jacobian> {
    if kind.has_closed_jacobian() {
        jacobian_closed(kind, mu, scheme)
    } else {
        jacobian_numeric_with(kind, mu, judge, scheme, DEFAULT_FD_STEP)
    }
}
