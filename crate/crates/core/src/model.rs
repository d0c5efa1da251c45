//! Domain data model: items, category schemes, per-context probability
//! tensors and the observed preference dataset.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GarsError, Result};

pub const SIMPLEX_TOL: f64 = 1e-9;
/// Clamp applied before any logit.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSet {
    k: usize,
}

impl ItemSet {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(GarsError::InvalidInput(format!("need at least 2 items, got {k}")));
        }
        Ok(ItemSet { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Ordered pairs (j, k) with j != k in row-major order.
    pub fn ordered_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.k;
        (0..k).flat_map(move |a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
    }
}

/// Category weights w1 (credit to the first-shown item) and w2 (credit to
/// the second-shown item).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScheme {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl CategoryScheme {
    pub fn new(w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        if w1.len() != w2.len() {
            return Err(GarsError::InvalidInput("w1 and w2 lengths differ".into()));
        }
        if w1.len() < 2 {
            return Err(GarsError::InvalidInput("need at least 2 categories".into()));
        }
        if w1.iter().chain(&w2).any(|v| !v.is_finite()) {
            return Err(GarsError::InvalidInput("non-finite category weight".into()));
        }
        Ok(CategoryScheme { w1, w2 })
    }

    /// Built-in weights: win/lose, win/lose/tie, win/lose/both-good/both-bad,
    /// and the last plus a neutral tie.
    pub fn default_for(c: usize) -> Result<Self> {
        let (w1, w2): (Vec<f64>, Vec<f64>) = match c {
            2 => (vec![1.0, 0.0], vec![0.0, 1.0]),
            3 => (vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.5]),
            4 => (vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]),
            5 => (vec![1.0, 0.0, 1.0, 0.0, 0.5], vec![0.0, 1.0, 1.0, 0.0, 0.5]),
            _ => return Err(GarsError::InvalidInput(format!("no default weights for C={c}"))),
        };
        Ok(CategoryScheme { w1, w2 })
    }

    pub fn binary() -> Self {
        CategoryScheme { w1: vec![1.0, 0.0], w2: vec![0.0, 1.0] }
    }

    pub fn c(&self) -> usize {
        self.w1.len()
    }

    /// True when w1 + w2 = 1 componentwise, so s_jk + s_kj = 1.
    pub fn is_complementary(&self) -> bool {
        self.w1.iter().zip(&self.w2).all(|(a, b)| (a + b - 1.0).abs() < 1e-12)
    }

    pub fn swapped(&self) -> Self {
        CategoryScheme { w1: self.w2.clone(), w2: self.w1.clone() }
    }

    pub fn max_weight(&self) -> f64 {
        self.w1.iter().chain(&self.w2).cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// K x K x C tensor of preference probabilities for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct MuTensor {
    k: usize,
    c: usize,
    data: Vec<f64>,
}

impl MuTensor {
    /// Validated constructor: zero diagonal, off-diagonal slices on the simplex.
    pub fn new(k: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        let mu = Self::from_raw(k, c, data)?;
        mu.validate()?;
        Ok(mu)
    }

    /// Shape-checked only; used for finite-difference perturbations.
    pub fn from_raw(k: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * k * c {
            return Err(GarsError::InvalidInput(format!(
                "tensor has {} entries, expected {}",
                data.len(),
                k * k * c
            )));
        }
        Ok(MuTensor { k, c, data })
    }

    /// Build from a closure giving the slice of each ordered pair.
    pub fn from_fn(k: usize, c: usize, mut f: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        let mut data = vec![0.0; k * k * c];
        for a in 0..k {
            for b in 0..k {
                if a == b {
                    continue;
                }
                let s = f(a, b);
                if s.len() != c {
                    return Err(GarsError::InvalidInput("slice length differs from C".into()));
                }
                data[(a * k + b) * c..(a * k + b + 1) * c].copy_from_slice(&s);
            }
        }
        MuTensor::new(k, c, data)
    }

    /// Every off-diagonal slice equal to `slice`.
    pub fn constant(k: usize, slice: &[f64]) -> Result<Self> {
        MuTensor::from_fn(k, slice.len(), |_, _| slice.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..self.k {
            for b in 0..self.k {
                let s = self.slice(a, b);
                if a == b {
                    if s.iter().any(|&v| v != 0.0) {
                        return Err(GarsError::InvalidInput(format!("nonzero diagonal slice ({a},{a})")));
                    }
                    continue;
                }
                if s.iter().any(|v| !v.is_finite() || *v < -SIMPLEX_TOL || *v > 1.0 + SIMPLEX_TOL) {
                    return Err(GarsError::InvalidInput(format!("slice ({a},{b}) has entries outside [0,1]")));
                }
                let sum: f64 = s.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(GarsError::InvalidInput(format!("slice ({a},{b}) sums to {sum}")));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn c(&self) -> usize {
        self.c
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize, c: usize) -> usize {
        (j * self.k + k) * self.c + c
    }
    #[inline]
    pub fn get(&self, j: usize, k: usize, c: usize) -> f64 {
        self.data[self.index(j, k, c)]
    }
    #[inline]
    pub fn slice(&self, j: usize, k: usize) -> &[f64] {
        let s = (j * self.k + k) * self.c;
        &self.data[s..s + self.c]
    }

    /// Raw mutable access. Callers are responsible for the invariants.
    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Directional score <w, mu_jk>.
    #[inline]
    pub fn score(&self, j: usize, k: usize, w: &[f64]) -> f64 {
        self.slice(j, k).iter().zip(w).map(|(m, w)| m * w).sum()
    }

    /// Relabel items: result(perm[a], perm[b]) = self(a, b).
    pub fn permuted(&self, perm: &[usize]) -> MuTensor {
        let mut data = vec![0.0; self.data.len()];
        for a in 0..self.k {
            for b in 0..self.k {
                let dst = (perm[a] * self.k + perm[b]) * self.c;
                data[dst..dst + self.c].copy_from_slice(self.slice(a, b));
            }
        }
        MuTensor { k: self.k, c: self.c, data }
    }
}

/// s_sym_jk = (<w1, mu_jk> + <w2, mu_kj>) / 2, zero diagonal.
pub fn symmetrized_scores(mu: &MuTensor, scheme: &CategoryScheme) -> DMatrix<f64> {
    let k = mu.k();
    DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            0.0
        } else {
            0.5 * (mu.score(a, b, &scheme.w1) + mu.score(b, a, &scheme.w2))
        }
    })
}

/// Clamp every off-diagonal probability into [eps, 1 - eps] and renormalize
/// each slice.
pub fn clamp_mu(mu: &MuTensor, eps: f64) -> MuTensor {
    let (k, c) = (mu.k(), mu.c());
    let mut out = mu.clone();
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let s = (a * k + b) * c;
            let slice = &mut out.data[s..s + c];
            if slice.iter().all(|&v| v >= eps && v <= 1.0 - eps) {
                continue;
            }
            for v in slice.iter_mut() {
                *v = v.clamp(eps, 1.0 - eps);
            }
            let sum: f64 = slice.iter().sum();
            for v in slice.iter_mut() {
                *v /= sum;
            }
        }
    }
    out
}

/// K x K matrix of selection propensities for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct PiMatrix {
    k: usize,
    data: Vec<f64>,
}

impl PiMatrix {
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * k {
            return Err(GarsError::InvalidInput("propensity matrix has wrong size".into()));
        }
        for a in 0..k {
            for b in 0..k {
                let v = data[a * k + b];
                if a == b && v != 0.0 {
                    return Err(GarsError::InvalidInput("nonzero propensity diagonal".into()));
                }
                if a != b && !(v > 0.0 && v <= 1.0) {
                    return Err(GarsError::InvalidInput(format!("propensity ({a},{b}) = {v} outside (0,1]")));
                }
            }
        }
        Ok(PiMatrix { k, data })
    }

    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    data[a * k + b] = f(a, b);
                }
            }
        }
        PiMatrix::new(k, data)
    }

    pub fn constant(k: usize, v: f64) -> Result<Self> {
        PiMatrix::from_fn(k, |_, _| v)
    }

    pub fn k(&self) -> usize {
        self.k
    }
    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.k + k]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub j: usize,
    pub k: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeEntry {
    pub j: usize,
    pub k: usize,
    pub probs: Vec<f64>,
}

/// Observed data: contexts, selected ordered pairs with labels, and optional
/// judge probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    items: ItemSet,
    scheme: CategoryScheme,
    p: usize,
    contexts: Vec<f64>,
    selections: Vec<Vec<LabeledPair>>,
    judge: Vec<Vec<JudgeEntry>>,
}

impl PreferenceDataset {
    /// Validating constructor. `judge` may be empty (no judge at all) or have
    /// one (possibly empty) list per row.
    pub fn new(
        items: ItemSet,
        scheme: CategoryScheme,
        contexts: Vec<Vec<f64>>,
        selections: Vec<Vec<LabeledPair>>,
        judge: Vec<Vec<JudgeEntry>>,
    ) -> Result<Self> {
        let n = contexts.len();
        if selections.len() != n {
            return Err(GarsError::Schema("selections and contexts differ in length".into()));
        }
        let judge = if judge.is_empty() { vec![Vec::new(); n] } else { judge };
        if judge.len() != n {
            return Err(GarsError::Schema("judge and contexts differ in length".into()));
        }
        let p = contexts.first().map_or(0, |x| x.len());
        let mut flat = Vec::with_capacity(n * p);
        for (i, x) in contexts.iter().enumerate() {
            if x.len() != p {
                return Err(GarsError::Schema(format!("row {i}: context dimension {} differs from {p}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(GarsError::Schema(format!("row {i}: non-finite context value")));
            }
            flat.extend_from_slice(x);
        }
        let ds = PreferenceDataset { items, scheme, p, contexts: flat, selections, judge };
        for i in 0..n {
            ds.validate_row(i)?;
        }
        Ok(ds)
    }

    fn validate_row(&self, i: usize) -> Result<()> {
        let (k, c) = (self.items.k(), self.scheme.c());
        let mut seen = std::collections::HashSet::new();
        for pr in &self.selections[i] {
            check_pair(i, pr.j, pr.k, k)?;
            if pr.label >= c {
                return Err(GarsError::Schema(format!("row {i}: label {} outside 0..{c}", pr.label)));
            }
            if !seen.insert((pr.j, pr.k)) {
                return Err(GarsError::Schema(format!("row {i}: duplicate pair ({},{})", pr.j, pr.k)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for je in &self.judge[i] {
            check_pair(i, je.j, je.k, k)?;
            if je.probs.len() != c {
                return Err(GarsError::Schema(format!("row {i}: judge vector has length {}", je.probs.len())));
            }
            let sum: f64 = je.probs.iter().sum();
            if je.probs.iter().any(|v| !v.is_finite() || *v < -SIMPLEX_TOL) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(GarsError::Schema(format!(
                    "row {i}: judge vector for ({},{}) is not on the simplex (sum {sum})",
                    je.j, je.k
                )));
            }
            if !seen.insert((je.j, je.k)) {
                return Err(GarsError::Schema(format!("row {i}: duplicate judge pair ({},{})", je.j, je.k)));
            }
        }
        Ok(())
    }

    pub fn items(&self) -> ItemSet {
        self.items
    }
    pub fn k(&self) -> usize {
        self.items.k()
    }
    pub fn c(&self) -> usize {
        self.scheme.c()
    }
    pub fn scheme(&self) -> &CategoryScheme {
        &self.scheme
    }
    pub fn n(&self) -> usize {
        self.selections.len()
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn context(&self, i: usize) -> &[f64] {
        &self.contexts[i * self.p..(i + 1) * self.p]
    }
    pub fn selections(&self, i: usize) -> &[LabeledPair] {
        &self.selections[i]
    }
    pub fn judge(&self, i: usize) -> &[JudgeEntry] {
        &self.judge[i]
    }
    pub fn has_judge(&self) -> bool {
        self.judge.iter().any(|r| !r.is_empty())
    }
    pub fn n_labeled(&self) -> usize {
        self.selections.iter().map(|s| s.len()).sum()
    }

    /// Dense judge tensor for row i; None when any off-diagonal pair is missing.
    pub fn judge_tensor(&self, i: usize) -> Option<MuTensor> {
        let (k, c) = (self.k(), self.c());
        let mut data = vec![0.0; k * k * c];
        let mut count = 0;
        for je in &self.judge[i] {
            let s = (je.j * k + je.k) * c;
            data[s..s + c].copy_from_slice(&je.probs);
            count += 1;
        }
        if count < k * (k - 1) {
            return None;
        }
        MuTensor::from_raw(k, c, data).ok()
    }

    /// Same data with a different category scheme (same C).
    pub fn with_scheme(mut self, scheme: CategoryScheme) -> Result<Self> {
        if scheme.c() != self.c() {
            return Err(GarsError::InvalidInput("scheme category count differs from dataset".into()));
        }
        self.scheme = scheme;
        Ok(self)
    }

    /// Rows reordered by `order` (a permutation of 0..n).
    pub fn permuted_rows(&self, order: &[usize]) -> Self {
        let mut contexts = Vec::with_capacity(self.contexts.len());
        for &i in order {
            contexts.extend_from_slice(self.context(i));
        }
        PreferenceDataset {
            items: self.items,
            scheme: self.scheme.clone(),
            p: self.p,
            contexts,
            selections: order.iter().map(|&i| self.selections[i].clone()).collect(),
            judge: order.iter().map(|&i| self.judge[i].clone()).collect(),
        }
    }

    /// Drop all judge entries.
    pub fn without_judge(mut self) -> Self {
        for r in self.judge.iter_mut() {
            r.clear();
        }
        self
    }

    pub fn replace_judge(mut self, judge: Vec<Vec<JudgeEntry>>) -> Result<Self> {
        if judge.len() != self.n() {
            return Err(GarsError::Schema("judge and contexts differ in length".into()));
        }
        self.judge = judge;
        for i in 0..self.n() {
            self.validate_row(i)?;
        }
        Ok(self)
    }
}

fn check_pair(i: usize, j: usize, k: usize, kk: usize) -> Result<()> {
    if j >= kk || k >= kk {
        return Err(GarsError::Schema(format!("row {i}: pair ({j},{k}) references an item >= K={kk}")));
    }
    if j == k {
        return Err(GarsError::Schema(format!("row {i}: diagonal pair ({j},{j})")));
    }
    Ok(())
}
