//! Synthetic data-generating processes: the nonlinear win/lose/tie simulator
//! and the binary Bradley-Terry simulator with a cyclic misspecification.

use std::f64::consts::TAU;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GarsError, Result};
use crate::functionals::{evaluate, logit, sigmoid, GarsSpec};
use crate::model::{CategoryScheme, ItemSet, JudgeEntry, LabeledPair, MuTensor, PiMatrix, PreferenceDataset};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DgpVariant {
    NonlinearTie,
    BtMisspec { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub variant: DgpVariant,
    pub k: usize,
    pub p: usize,
    /// Seed for the item parameters.
    pub seed: u64,
    pub sigma_l: f64,
    pub sigma_q: f64,
    pub s: f64,
    pub temperature: f64,
    pub beta_pos: f64,
    /// Constant display-order bias added to every d_jk.
    pub bias_const: f64,
    pub tau0: f64,
    pub tau1: f64,
    pub tau_c: f64,
    pub eps_mu: f64,
    pub pi_p: f64,
    pub lambda_pi: f64,
    pub kappa_pi: f64,
    pub eta_pi: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub sigma_bpi: f64,
}

impl DgpSpec {
    pub fn new(variant: DgpVariant, k: usize, p: usize, seed: u64) -> Self {
        DgpSpec {
            variant,
            k,
            p,
            seed,
            sigma_l: 1.0,
            sigma_q: 0.6,
            s: 0.6,
            temperature: 1.0,
            beta_pos: 0.0,
            bias_const: 0.0,
            tau0: 0.2,
            tau1: 1.2,
            tau_c: 0.4,
            eps_mu: 0.0,
            pi_p: 0.3,
            lambda_pi: 0.1,
            kappa_pi: 0.8,
            eta_pi: 0.4,
            pi_min: 0.01,
            pi_max: 0.5,
            sigma_bpi: 0.1,
        }
    }

    /// Debiasing experiment: K=3, p=2, eps_mu=0.05, pi_min=0.05.
    pub fn debiasing(seed: u64) -> Self {
        DgpSpec { eps_mu: 0.05, pi_min: 0.05, ..DgpSpec::new(DgpVariant::NonlinearTie, 3, 2, seed) }
    }

    /// Judge experiment: K=3, p=5, eps_mu=0.05, pi_min=0.05.
    pub fn judge(seed: u64) -> Self {
        DgpSpec { eps_mu: 0.05, pi_min: 0.05, ..DgpSpec::new(DgpVariant::NonlinearTie, 3, 5, seed) }
    }

    /// Acquisition experiment: BT misspecification with gamma=1, K=3, p=2.
    pub fn acquisition(seed: u64) -> Self {
        DgpSpec::new(DgpVariant::BtMisspec { gamma: 1.0 }, 3, 2, seed)
    }

    /// Misspecification sweep: K=4, p=5.
    pub fn bt_misspec(gamma: f64, seed: u64) -> Self {
        DgpSpec::new(DgpVariant::BtMisspec { gamma }, 4, 5, seed)
    }

    pub fn c(&self) -> usize {
        match self.variant {
            DgpVariant::NonlinearTie => 3,
            DgpVariant::BtMisspec { .. } => 2,
        }
    }

    pub fn scheme(&self) -> CategoryScheme {
        CategoryScheme::default_for(self.c()).expect("simulator categories have defaults")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.sigma_l, self.sigma_q, self.s, self.temperature, self.beta_pos, self.bias_const, self.tau0, self.tau1,
            self.tau_c, self.eps_mu, self.pi_p, self.lambda_pi, self.kappa_pi, self.eta_pi, self.pi_min, self.pi_max,
            self.sigma_bpi,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(GarsError::InvalidInput("simulator parameters must be finite".into()));
        }
        if self.k < 2 || self.p < 1 {
            return Err(GarsError::InvalidInput("simulator needs K >= 2 and p >= 1".into()));
        }
        if !(self.eps_mu >= 0.0 && self.eps_mu < 1.0 / self.c() as f64) {
            return Err(GarsError::InvalidInput("eps_mu must lie in [0, 1/C)".into()));
        }
        if !(0.0 < self.pi_min && self.pi_min <= self.pi_max && self.pi_max <= 1.0) {
            return Err(GarsError::InvalidInput("need 0 < pi_min <= pi_max <= 1".into()));
        }
        if !(self.pi_p > 0.0 && self.pi_p < 1.0) || !(0.0..=1.0).contains(&self.lambda_pi) {
            return Err(GarsError::InvalidInput("pi_p must lie in (0,1) and lambda_pi in [0,1]".into()));
        }
        if self.temperature <= 0.0 {
            return Err(GarsError::InvalidInput("temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ItemParams {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub wq: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub b_pi: Vec<f64>,
}

/// A simulator with its item parameters drawn.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub spec: DgpSpec,
    pub params: ItemParams,
}

/// One pre-drawn context: everything random about it, so datasets under
/// different policies or judge noise levels share common random numbers.
#[derive(Debug, Clone)]
pub struct ContextDraw {
    pub x: Vec<f64>,
    pub mu: MuTensor,
    pub pi: PiMatrix,
    /// Label for every ordered pair (row-major K x K, diagonal unused).
    pub labels: Vec<usize>,
    /// Selection uniforms per ordered pair.
    pub u_sel: Vec<f64>,
    /// Standard normal judge noise per (pair, category).
    pub z_judge: Vec<f64>,
}

impl Simulator {
    pub fn new(spec: DgpSpec) -> Result<Self> {
        spec.validate()?;
        let mut g = rng::stream(spec.seed, rng::tags::ITEM_PARAMS, 0);
        let q = spec.p.min(2);
        let nl = Normal::new(0.0, spec.sigma_l).map_err(|e| GarsError::InvalidInput(e.to_string()))?;
        let nq = Normal::new(0.0, spec.sigma_q).map_err(|e| GarsError::InvalidInput(e.to_string()))?;
        let npi = Normal::new(0.0, spec.sigma_bpi).map_err(|e| GarsError::InvalidInput(e.to_string()))?;
        let mut params = ItemParams { w: vec![], b: vec![], wq: vec![], phi: vec![], b_pi: vec![] };
        for _ in 0..spec.k {
            params.w.push((0..spec.p).map(|_| nl.sample(&mut g)).collect());
            params.b.push(StandardNormal.sample(&mut g));
            params.wq.push((0..q).map(|_| nq.sample(&mut g)).collect());
            params.phi.push(g.gen::<f64>() * TAU);
            params.b_pi.push(npi.sample(&mut g));
        }
        Ok(Simulator { spec, params })
    }

    /// Same simulator with every item sharing item 0's parameters.
    pub fn with_identical_items(mut self) -> Self {
        let p = &mut self.params;
        for j in 1..self.spec.k {
            p.w[j] = p.w[0].clone();
            p.b[j] = p.b[0];
            p.wq[j] = p.wq[0].clone();
            p.phi[j] = p.phi[0];
        }
        self
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn utilities(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.params;
        (0..self.spec.k)
            .map(|j| {
                let lin: f64 = p.w[j].iter().zip(x).map(|(a, b)| a * b).sum();
                let quad: f64 = p.wq[j].iter().zip(x).map(|(a, b)| a * b * b).sum();
                lin + p.b[j] + quad + self.spec.s * (TAU * x[0] + p.phi[j]).sin()
            })
            .collect()
    }

    fn d(&self, u: &[f64], x: &[f64], j: usize, k: usize) -> f64 {
        (u[j] - u[k]) / self.spec.temperature + self.spec.beta_pos * (x[0] - 0.5) + self.spec.bias_const
    }

    /// Zero-sum utilities, equal to the BT scores when the model holds.
    pub fn true_r(&self, x: &[f64]) -> DVector<f64> {
        let u = DVector::from_vec(self.utilities(x)) / self.spec.temperature;
        let m = u.mean();
        u.map(|v| v - m)
    }

    pub fn true_mu(&self, x: &[f64]) -> MuTensor {
        let k = self.spec.k;
        let u = self.utilities(x);
        let mut data = vec![0.0; k * k * self.spec.c()];
        let c = self.spec.c();
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                let d = self.d(&u, x, a, b);
                let slice = &mut data[(a * k + b) * c..(a * k + b + 1) * c];
                match self.spec.variant {
                    DgpVariant::NonlinearTie => {
                        let xt = if self.spec.p >= 2 { x[1] } else { x[0] };
                        let tie = self.spec.tau0 - self.spec.tau1 * d.abs() + self.spec.tau_c * (TAU * xt).cos();
                        softmax_into(&[d, -d, tie], slice);
                        floor_mass(slice, self.spec.eps_mu);
                    }
                    DgpVariant::BtMisspec { gamma } => {
                        let p = sigmoid(d + gamma * cycle(k, a, b));
                        slice[0] = p;
                        slice[1] = 1.0 - p;
                    }
                }
            }
        }
        MuTensor::from_raw(k, c, data).expect("shape is consistent")
    }

    pub fn true_pi(&self, x: &[f64]) -> PiMatrix {
        let sp = &self.spec;
        let u = self.utilities(x);
        let base = logit(sp.pi_p);
        PiMatrix::from_fn(sp.k, |a, b| {
            let d = self.d(&u, x, a, b);
            let z = base - sp.kappa_pi * d.abs() + sp.eta_pi * (x[0] - 0.5) + self.params.b_pi[a] + self.params.b_pi[b];
            ((1.0 - sp.lambda_pi) * sp.pi_p + sp.lambda_pi * sigmoid(z)).clamp(sp.pi_min, sp.pi_max)
        })
        .expect("clipped propensities are valid")
    }

    pub fn sample_context(&self, g: &mut impl Rng) -> Vec<f64> {
        (0..self.spec.p).map(|_| g.gen::<f64>()).collect()
    }

    /// Pre-draw n contexts. Context i uses its own stream, so the first m
    /// draws of a larger sample equal a sample of size m.
    pub fn draw_contexts(&self, n: usize, seed: u64) -> Vec<ContextDraw> {
        let (k, c) = (self.spec.k, self.spec.c());
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = rng::stream(seed, rng::tags::CONTEXT, i as u64);
                let x = self.sample_context(&mut g);
                let mu = self.true_mu(&x);
                let pi = self.true_pi(&x);
                let mut labels = vec![0; k * k];
                let mut u_sel = vec![1.0; k * k];
                for a in 0..k {
                    for b in (0..k).filter(|&b| b != a) {
                        u_sel[a * k + b] = g.gen::<f64>();
                        labels[a * k + b] = categorical(mu.slice(a, b), g.gen::<f64>());
                    }
                }
                let mut gz = rng::stream(seed, rng::tags::JUDGE, i as u64);
                let z_judge = (0..k * k * c).map(|_| StandardNormal.sample(&mut gz)).collect();
                ContextDraw { x, mu, pi, labels, u_sel, z_judge }
            })
            .collect()
    }

    /// Dataset with selections S_jk = 1{u < pi_jk}; `policy` overrides the
    /// simulator's propensities (row-major K x K per context).
    pub fn realize(&self, draws: &[ContextDraw], policy: Option<&[Vec<f64>]>, judge_sigma: Option<f64>) -> Result<PreferenceDataset> {
        let k = self.spec.k;
        let mut selections = Vec::with_capacity(draws.len());
        for (i, d) in draws.iter().enumerate() {
            let mut sel = Vec::new();
            for a in 0..k {
                for b in (0..k).filter(|&b| b != a) {
                    let p = match policy {
                        Some(pol) => pol[i][a * k + b],
                        None => d.pi.get(a, b),
                    };
                    if d.u_sel[a * k + b] < p {
                        sel.push(LabeledPair { j: a, k: b, label: d.labels[a * k + b] });
                    }
                }
            }
            selections.push(sel);
        }
        let judge = match judge_sigma {
            Some(s) => draws.iter().map(|d| judge_entries(&d.mu, &d.z_judge, s)).collect(),
            None => Vec::new(),
        };
        PreferenceDataset::new(
            ItemSet::new(k)?,
            self.spec.scheme(),
            draws.iter().map(|d| d.x.clone()).collect(),
            selections,
            judge,
        )
    }

    /// Dataset plus oracle nuisances under the simulator's own selection model.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Result<(PreferenceDataset, Vec<MuTensor>, Vec<PiMatrix>)> {
        let draws = self.draw_contexts(n, seed);
        let ds = self.realize(&draws, None, None)?;
        let (mu, pi) = draws.into_iter().map(|d| (d.mu, d.pi)).unzip();
        Ok((ds, mu, pi))
    }
}

/// Judge probabilities softmax(log mu + sigma z) for every ordered pair.
pub fn judge_entries(mu: &MuTensor, z: &[f64], sigma: f64) -> Vec<JudgeEntry> {
    let (k, c) = (mu.k(), mu.c());
    let mut out = Vec::with_capacity(k * (k - 1));
    for a in 0..k {
        for b in (0..k).filter(|&b| b != a) {
            let off = (a * k + b) * c;
            let logits: Vec<f64> =
                mu.slice(a, b).iter().enumerate().map(|(cc, m)| m.max(1e-300).ln() + sigma * z[off + cc]).collect();
            let mut probs = vec![0.0; c];
            softmax_into(&logits, &mut probs);
            out.push(JudgeEntry { j: a, k: b, probs });
        }
    }
    out
}

/// +1 if k follows j on the cycle 0 -> 1 -> ... -> K-1 -> 0, -1 if j follows k.
pub fn cycle(k: usize, a: usize, b: usize) -> f64 {
    if b == (a + 1) % k {
        1.0
    } else if a == (b + 1) % k {
        -1.0
    } else {
        0.0
    }
}

fn softmax_into(z: &[f64], out: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

/// Raise entries below eps to eps and rescale the rest proportionally,
/// repeating until every entry is at least eps.
pub fn floor_mass(v: &mut [f64], eps: f64) {
    if eps <= 0.0 {
        return;
    }
    let n = v.len();
    let mut floored = vec![false; n];
    for _ in 0..n {
        let nf = floored.iter().filter(|f| **f).count();
        let free: f64 = v.iter().zip(&floored).filter(|(_, f)| !**f).map(|(x, _)| *x).sum();
        let target = 1.0 - nf as f64 * eps;
        for (x, f) in v.iter_mut().zip(&floored) {
            if *f {
                *x = eps;
            } else {
                *x *= target / free;
            }
        }
        let mut changed = false;
        for (x, f) in v.iter().zip(floored.iter_mut()) {
            if !*f && *x < eps {
                *f = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

fn categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (c, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return c;
        }
    }
    p.len() - 1
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundTruth {
    pub theta_star: Vec<f64>,
    /// Monte Carlo standard error per component.
    pub mc_se: Vec<f64>,
    pub mc_n: usize,
    pub kind: String,
    pub seed: u64,
}

pub const MIN_MC_N: usize = 10_000;
pub const DEFAULT_MC_N: usize = 200_000;

/// Mean of F(mu(x)) over mc_n fresh uniform contexts.
pub fn ground_truth_scores(sim: &Simulator, spec: &GarsSpec, mc_n: usize, seed: u64) -> Result<GroundTruth> {
    if mc_n < MIN_MC_N {
        return Err(GarsError::InvalidInput(format!("ground truth needs at least {MIN_MC_N} contexts")));
    }
    const CHUNK: usize = 4096;
    let chunks = mc_n.div_ceil(CHUNK);
    let d = spec.dim(sim.k());
    let sums: Vec<(DVector<f64>, DVector<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut g = rng::stream(seed, rng::tags::GROUND_TRUTH, ch as u64);
            let len = CHUNK.min(mc_n - ch * CHUNK);
            let mut s = DVector::zeros(d);
            let mut s2 = DVector::zeros(d);
            for _ in 0..len {
                let x = sim.sample_context(&mut g);
                let f = evaluate(&spec.kind, &sim.true_mu(&x), &spec.scheme)?;
                s2 += f.component_mul(&f);
                s += f;
            }
            Ok((s, s2))
        })
        .collect::<Result<_>>()?;
    let (mut s, mut s2) = (DVector::zeros(d), DVector::zeros(d));
    for (a, b) in sums {
        s += a;
        s2 += b;
    }
    let n = mc_n as f64;
    let mean = s / n;
    let var = s2 / n - mean.component_mul(&mean);
    Ok(GroundTruth {
        theta_star: mean.iter().cloned().collect(),
        mc_se: var.iter().map(|v| (v.max(0.0) / n).sqrt()).collect(),
        mc_n,
        kind: spec.kind.name().to_string(),
        seed,
    })
}
