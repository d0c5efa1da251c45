//! Feature vectors for (context, first item, second item[, judge]) rows.

use serde::{Deserialize, Serialize};

use crate::model::PreferenceDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// [x, onehot(j), onehot(k)]
    Plain,
    /// [x, x^2, sin 2pi x0, cos 2pi x0, cos 2pi x1, onehot(j), onehot(k)]
    Expanded,
    /// onehot(j) (x) phi(x) followed by onehot(k) (x) phi(x), where phi is
    /// the expanded basis with a leading 1. Lets every item carry its own
    /// context response.
    Interacted,
    /// onehot((j, k)) (x) phi(x): a separate context response for every
    /// ordered pair, so non-additive pair effects such as preference cycles
    /// are representable.
    Pairwise,
}

impl FeatureMap {
    pub fn basis_len(&self, p: usize) -> usize {
        match self {
            FeatureMap::Plain => p,
            FeatureMap::Expanded | FeatureMap::Interacted | FeatureMap::Pairwise => 1 + 2 * p + if p >= 1 { 2 } else { 0 } + if p >= 2 { 1 } else { 0 },
        }
    }

    pub fn len(&self, p: usize, k: usize) -> usize {
        match self {
            FeatureMap::Plain => p + 2 * k,
            FeatureMap::Expanded => self.basis_len(p) - 1 + 2 * k,
            FeatureMap::Interacted => 2 * k * self.basis_len(p),
            FeatureMap::Pairwise => k * (k - 1) * self.basis_len(p),
        }
    }

    /// Basis [1, x, x^2, sin 2pi x0, cos 2pi x0, cos 2pi x1].
    pub fn basis(x: &[f64], out: &mut Vec<f64>) {
        use std::f64::consts::TAU;
        out.clear();
        out.push(1.0);
        out.extend_from_slice(x);
        out.extend(x.iter().map(|v| v * v));
        if let Some(&x0) = x.first() {
            out.push((TAU * x0).sin());
            out.push((TAU * x0).cos());
        }
        if let Some(&x1) = x.get(1) {
            out.push((TAU * x1).cos());
        }
    }

    /// Append the pair features for (x, j, k) to `out`.
    pub fn write(&self, x: &[f64], j: usize, k: usize, n_items: usize, scratch: &mut Vec<f64>, out: &mut Vec<f64>) {
        match self {
            FeatureMap::Plain | FeatureMap::Expanded => {
                if *self == FeatureMap::Plain {
                    out.extend_from_slice(x);
                } else {
                    FeatureMap::basis(x, scratch);
                    out.extend_from_slice(&scratch[1..]);
                }
                for a in 0..n_items {
                    out.push(if a == j { 1.0 } else { 0.0 });
                }
                for a in 0..n_items {
                    out.push(if a == k { 1.0 } else { 0.0 });
                }
            }
            FeatureMap::Pairwise => {
                FeatureMap::basis(x, scratch);
                let slot = j * (n_items - 1) + if k > j { k - 1 } else { k };
                for s in 0..n_items * (n_items - 1) {
                    if s == slot {
                        out.extend_from_slice(scratch);
                    } else {
                        out.extend(std::iter::repeat(0.0).take(scratch.len()));
                    }
                }
            }
            FeatureMap::Interacted => {
                FeatureMap::basis(x, scratch);
                let b = scratch.len();
                for slot in [j, k] {
                    for a in 0..n_items {
                        if a == slot {
                            out.extend_from_slice(scratch);
                        } else {
                            out.extend(std::iter::repeat(0.0).take(b));
                        }
                    }
                }
            }
        }
    }
}

/// Judge features for pair (j, k) of row i: log(f_c / f_last) for the first
/// C-1 categories. Missing judge entries give zeros.
pub fn judge_features(ds: &PreferenceDataset, i: usize, j: usize, k: usize, out: &mut Vec<f64>) {
    let c = ds.c();
    match ds.judge(i).iter().find(|e| e.j == j && e.k == k) {
        Some(e) => {
            let floor = 1e-6;
            let last = e.probs[c - 1].max(floor);
            out.extend(e.probs[..c - 1].iter().map(|v| (v.max(floor) / last).ln()));
        }
        None => out.extend(std::iter::repeat(0.0).take(c - 1)),
    }
}
