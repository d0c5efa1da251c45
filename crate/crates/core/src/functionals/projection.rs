//! Incidence geometry of the complete comparison graph, cached per K.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct ProjectionConstants {
    pub k: usize,
    /// (K choose 2) x K, row e(j,k) = e_j - e_k for j < k.
    pub b: DMatrix<f64>,
    pub l0: DMatrix<f64>,
    /// K x (K-1) zero-sum basis [I; -1^T].
    pub h: DMatrix<f64>,
    /// K x (K choose 2) projection of edge logits onto zero-sum scores.
    pub p: DMatrix<f64>,
    edges: Vec<(usize, usize)>,
}

impl ProjectionConstants {
    pub fn build(k: usize) -> Self {
        assert!(k >= 2, "projection constants need K >= 2");
        let edges: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
        let m = edges.len();
        let mut b = DMatrix::zeros(m, k);
        for (e, &(j, l)) in edges.iter().enumerate() {
            b[(e, j)] = 1.0;
            b[(e, l)] = -1.0;
        }
        let h = zero_sum_basis(k);
        let l0 = b.transpose() * &b;
        let inner = h.transpose() * &l0 * &h;
        // inner is (K-1)x(K-1) and positive definite for the complete graph
        let inv = inner.cholesky().expect("H^T L0 H is positive definite").inverse();
        let p = &h * inv * h.transpose() * b.transpose();
        ProjectionConstants { k, b, l0, h, p, edges }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Index of the unordered edge {j, k} (j != k).
    #[inline]
    pub fn edge(&self, j: usize, k: usize) -> usize {
        let (a, b) = if j < k { (j, k) } else { (k, j) };
        // edges before row a: sum_{r<a} (K-1-r)
        a * (2 * self.k - a - 1) / 2 + (b - a - 1)
    }
}

pub fn zero_sum_basis(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k - 1, |r, c| if r == c { 1.0 } else if r == k - 1 { -1.0 } else { 0.0 })
}

/// Shared, lazily built constants for K items.
pub fn projection_constants(k: usize) -> Arc<ProjectionConstants> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ProjectionConstants>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("projection cache poisoned");
    guard.entry(k).or_insert_with(|| Arc::new(ProjectionConstants::build(k))).clone()
}
