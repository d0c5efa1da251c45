use approx::assert_abs_diff_eq;
use gars_core::acquisition::{
    a_objective, a_optimal, d_optimal, efficiency_bound, expected_cost, pair_information, pseudo_inverse_logdet,
    sample_selection, uniform_policy, water_filling_one_pair, BudgetMode, BudgetSpec,
};
use gars_core::functionals::random_interior_mu;
use gars_core::inference::{debiased_estimate_with, InferenceOptions};
use gars_core::simbench::{DgpSpec, Simulator};
use gars_core::{rng, CategoryScheme, GarsKind, GarsSpec, MuTensor};
use nalgebra::DMatrix;
use rand::Rng;

fn borda(c: usize) -> GarsSpec {
    GarsSpec::new(GarsKind::Borda, CategoryScheme::default_for(c).unwrap())
}

fn random_rows(n: usize, k: usize, seed: u64) -> Vec<MuTensor> {
    let mut g = rng::stream(seed, 0, 0);
    (0..n).map(|_| random_interior_mu(k, 3, 0.02, &mut g)).collect()
}

fn independent(k: usize, beta: f64, alpha: f64) -> BudgetSpec {
    BudgetSpec::unit_costs(k, beta, alpha, BudgetMode::Independent)
}

#[test]
fn vertex_labels_carry_no_information() {
    let mu = MuTensor::constant(3, &[1.0, 0.0, 0.0]).unwrap();
    let w = pair_information(&mu, &borda(3)).unwrap();
    assert_eq!(w.amax(), 0.0);
}

#[test]
fn binary_borda_information() {
    let spec = GarsSpec::new(GarsKind::Borda, CategoryScheme::binary());
    for p in [0.5, 0.2, 0.9] {
        let mu = MuTensor::new(2, 2, vec![0.0, 0.0, p, 1.0 - p, 1.0 - p, p, 0.0, 0.0]).unwrap();
        let w = pair_information(&mu, &spec).unwrap();
        // two rows of 1/2 times the Bernoulli variance
        assert_abs_diff_eq!(w[(0, 1)], 0.5 * p * (1.0 - p), epsilon = 1e-15);
        assert_abs_diff_eq!(w[(1, 0)], 0.5 * p * (1.0 - p), epsilon = 1e-15);
    }
}

#[test]
fn information_follows_relabeling() {
    let mu = random_rows(1, 4, 3).remove(0);
    let perm = [2, 0, 3, 1];
    for kind in [GarsKind::Borda, GarsKind::BtProjection, GarsKind::RankCentrality] {
        let spec = GarsSpec::new(kind, CategoryScheme::default_for(3).unwrap());
        let w = pair_information(&mu, &spec).unwrap();
        let wp = pair_information(&mu.permuted(&perm), &spec).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_abs_diff_eq!(wp[(perm[a], perm[b])], w[(a, b)], epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn symmetric_a_optimal() {
    let rows = vec![MuTensor::constant(3, &[0.3, 0.3, 0.4]).unwrap(); 5];
    let sol = a_optimal(&rows, &independent(3, 3.0, 0.0), &borda(3), 1e-10).unwrap();
    for p in &sol.pi {
        for a in 0..3 {
            for b in (0..3).filter(|&b| b != a) {
                assert_abs_diff_eq!(p[a * 3 + b], 0.5, epsilon = 1e-8);
            }
        }
    }
    let slack = a_optimal(&rows, &independent(3, 6.0, 0.0), &borda(3), 1e-10).unwrap();
    assert_eq!(slack.lambda, 0.0);
    assert!(slack.pi.iter().all(|p| (0..9).all(|i| i % 4 == 0 || p[i] == 1.0)));
}

#[test]
fn a_optimal_meets_budget_and_square_root_rule() {
    let rows = random_rows(50, 4, 1);
    let spec = borda(3);
    for beta in [1.0, 3.0, 7.0] {
        let budget = independent(4, beta, 0.01);
        let sol = a_optimal(&rows, &budget, &spec, 1e-9).unwrap();
        assert!((sol.achieved_cost - beta).abs() <= 1e-6 * beta, "{} vs {beta}", sol.achieved_cost);
        assert_abs_diff_eq!(expected_cost(&sol.pi, &budget.costs), sol.achieved_cost, epsilon = 1e-12);
        for (mu, p) in rows.iter().zip(&sol.pi) {
            let w = pair_information(mu, &spec).unwrap();
            for a in 0..4 {
                for b in (0..4).filter(|&b| b != a) {
                    let v = p[a * 4 + b];
                    if v > 0.01 + 1e-12 && v < 1.0 - 1e-12 {
                        assert_abs_diff_eq!(v, (w[(a, b)] / sol.lambda).sqrt(), epsilon = 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn multiplier_falls_as_budget_grows() {
    let rows = random_rows(20, 3, 2);
    let mut last = f64::INFINITY;
    for beta in [0.5, 1.0, 2.0, 4.0] {
        let sol = a_optimal(&rows, &independent(3, beta, 0.0), &borda(3), 1e-10).unwrap();
        assert!(sol.lambda < last);
        last = sol.lambda;
    }
}

#[test]
fn no_random_feasible_policy_beats_a_optimal() {
    let rows = random_rows(4, 3, 5);
    let spec = borda(3);
    let (beta, alpha) = (2.5, 0.05);
    let budget = independent(3, beta, alpha);
    let sol = a_optimal(&rows, &budget, &spec, 1e-12).unwrap();
    let w: Vec<DMatrix<f64>> = rows.iter().map(|m| pair_information(m, &spec).unwrap()).collect();
    let best = a_objective(&w, &sol.pi);
    let mut g = rng::stream(9, 0, 0);
    let mut tried = 0;
    while tried < 1000 {
        // random shape rescaled onto the budget; skip draws that break the box
        let raw: Vec<Vec<f64>> = (0..4).map(|_| (0..9).map(|i| if i % 4 == 0 { 0.0 } else { g.gen::<f64>() }).collect()).collect();
        let s = beta / expected_cost(&raw, &budget.costs);
        let p: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
        if p.iter().any(|r| r.iter().enumerate().any(|(i, v)| i % 4 != 0 && (*v < alpha || *v > 1.0))) {
            continue;
        }
        tried += 1;
        assert!(a_objective(&w, &p) >= best - 1e-12);
    }
}

#[test]
fn infeasible_floor_is_reported() {
    let rows = random_rows(2, 3, 1);
    let err = a_optimal(&rows, &independent(3, 0.5, 0.2), &borda(3), 1e-9).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    let budget = BudgetSpec::unit_costs(3, 1.0, 0.5, BudgetMode::AtMostOne);
    assert_eq!(water_filling_one_pair(&rows, &budget, &borda(3), 1e-9).unwrap_err().exit_code(), 4);
}

#[test]
fn water_filling_symmetric_and_capped() {
    let rows = vec![MuTensor::constant(3, &[0.3, 0.3, 0.4]).unwrap(); 4];
    let budget = BudgetSpec::unit_costs(3, 5.0, 0.0, BudgetMode::AtMostOne);
    let sol = water_filling_one_pair(&rows, &budget, &borda(3), 1e-10).unwrap();
    for p in &sol.pi {
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert_abs_diff_eq!(p[a * 3 + b], 1.0 / 3.0, epsilon = 1e-8);
            assert_eq!(p[b * 3 + a], 0.0);
        }
    }
    assert!(sol.pi0.unwrap().iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn water_filling_square_root_and_slackness() {
    let rows = random_rows(40, 4, 7);
    let spec = borda(3);
    for beta in [0.3, 0.8, 3.0] {
        let budget = BudgetSpec::unit_costs(4, beta, 0.0, BudgetMode::AtMostOne);
        let sol = water_filling_one_pair(&rows, &budget, &spec, 1e-10).unwrap();
        assert!(sol.achieved_cost <= beta * (1.0 + 1e-6));
        let nu = sol.nu.as_ref().unwrap();
        let pi0 = sol.pi0.as_ref().unwrap();
        for (i, (mu, p)) in rows.iter().zip(&sol.pi).enumerate() {
            let w = pair_information(mu, &spec).unwrap();
            let total: f64 = (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).map(|(a, b)| p[a * 4 + b]).sum();
            assert!(total <= 1.0 + 1e-12);
            assert_abs_diff_eq!(pi0[i], 1.0 - total, epsilon = 1e-12);
            if nu[i] > 0.0 {
                assert!((total - 1.0).abs() < 1e-8, "row {i}: cap active but sum {total}");
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    let v = p[a * 4 + b];
                    if v > 0.0 && v < 1.0 {
                        let want = (w[(a, b)] / (sol.lambda + nu[i])).sqrt();
                        assert!((v - want).abs() < 1e-6 * want.max(1.0), "{v} vs {want}");
                    }
                }
            }
        }
    }
}

#[test]
fn efficiency_bound_structure() {
    let spec = borda(3);
    // deterministic labels: the bound is the spread of F alone
    let vertex: Vec<MuTensor> = (0..3)
        .map(|i| {
            let mut v = [0.0; 3];
            v[i] = 1.0;
            MuTensor::constant(3, &v).unwrap()
        })
        .collect();
    let pi = vec![vec![0.5; 9]; 3];
    let sigma = efficiency_bound(&vertex, &pi, &spec).unwrap();
    let f: Vec<_> = vertex.iter().map(|m| gars_core::evaluate(&spec.kind, m, &spec.scheme).unwrap()).collect();
    let mean = (&f[0] + &f[1] + &f[2]) / 3.0;
    let cov = f.iter().map(|x| (x - &mean) * (x - &mean).transpose()).fold(DMatrix::zeros(3, 3), |a, b| a + b) / 3.0;
    assert!((&sigma - &cov).amax() < 1e-14);
    // halving every propensity doubles the correction
    let rows = random_rows(10, 3, 4);
    let full = vec![vec![0.8; 9]; 10];
    let half = vec![vec![0.4; 9]; 10];
    let ones = vec![vec![1e300; 9]; 10];
    let base = efficiency_bound(&rows, &ones, &spec).unwrap();
    let s1 = efficiency_bound(&rows, &full, &spec).unwrap() - &base;
    let s2 = efficiency_bound(&rows, &half, &spec).unwrap() - &base;
    assert!((s2 - s1 * 2.0).amax() < 1e-12);
}

#[test]
fn efficiency_bound_matches_monte_carlo_variance() {
    let sim = Simulator::new(DgpSpec::debiasing(4)).unwrap();
    let spec = borda(3);
    let k = 3;
    // bound from a large context sample under the simulator's own policy
    let draws = sim.draw_contexts(20_000, 99);
    let mu: Vec<MuTensor> = draws.iter().map(|d| d.mu.clone()).collect();
    let pi: Vec<Vec<f64>> = draws.iter().map(|d| d.pi.as_slice().to_vec()).collect();
    let bound = efficiency_bound(&mu, &pi, &spec).unwrap();
    let (reps, n) = (2000, 200);
    let est: Vec<_> = (0..reps)
        .map(|r| {
            let (ds, m, p) = sim.sample_dataset(n, 10_000 + r).unwrap();
            debiased_estimate_with(&ds, &m, &p, &spec, &InferenceOptions::default()).unwrap().theta_hat
        })
        .collect();
    let mean = est.iter().fold(nalgebra::DVector::zeros(k), |a, b| a + b) / reps as f64;
    let var_tr: f64 = est.iter().map(|e| (e - &mean).norm_squared()).sum::<f64>() / (reps - 1) as f64 * n as f64;
    let ratio = var_tr / bound.trace();
    assert!((ratio - 1.0).abs() < 0.1, "MC trace {var_tr} vs bound {} ({ratio})", bound.trace());
}

#[test]
fn d_optimal_reduces_to_a_optimal_in_one_dimension() {
    let rows = random_rows(15, 3, 8);
    let spec = GarsSpec::new(GarsKind::Kemeny { rankings: vec![vec![0, 1, 2]] }, CategoryScheme::default_for(3).unwrap());
    let budget = independent(3, 2.0, 0.02);
    let a = a_optimal(&rows, &budget, &spec, 1e-9).unwrap();
    let d = d_optimal(&rows, &budget, &spec, 50, 1e-9).unwrap();
    for (p, q) in a.pi.iter().zip(&d.pi) {
        for (x, y) in p.iter().zip(q) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }
}

#[test]
fn d_optimal_symmetric_and_monotone() {
    let rows = vec![MuTensor::constant(3, &[0.3, 0.3, 0.4]).unwrap(); 3];
    let sol = d_optimal(&rows, &independent(3, 2.0, 0.0), &borda(3), 50, 1e-10).unwrap();
    for p in &sol.pi {
        for i in (0..9).filter(|i| i % 4 != 0) {
            assert_abs_diff_eq!(p[i], 1.0 / 3.0, epsilon = 1e-6);
        }
    }
    let rows = random_rows(30, 4, 11);
    let spec = GarsSpec::new(GarsKind::BtProjection, CategoryScheme::default_for(3).unwrap());
    let budget = independent(4, 4.0, 0.02);
    let start = a_optimal(&rows, &budget, &spec, 1e-6).unwrap();
    let sol = d_optimal(&rows, &budget, &spec, 100, 1e-8).unwrap();
    assert!(sol.warnings.iter().all(|w| !w.contains("increased")), "{:?}", sol.warnings);
    let (_, ld_start) = pseudo_inverse_logdet(&efficiency_bound(&rows, &start.pi, &spec).unwrap()).unwrap();
    assert!(sol.objective <= ld_start + 1e-9);
    assert!((sol.achieved_cost - 4.0).abs() < 1e-5);
}

#[test]
fn uniform_policy_spends_the_budget() {
    let budget = independent(4, 3.0, 0.0);
    let u = uniform_policy(7, &budget);
    assert_abs_diff_eq!(u.achieved_cost, 3.0, epsilon = 1e-12);
    assert!(u.pi.iter().all(|p| (0..16).all(|i| i % 5 == 0 || (p[i] - 0.25).abs() < 1e-15)));
}

#[test]
fn selection_sampling() {
    let budget = independent(3, 6.0, 0.0);
    let all = uniform_policy(50, &budget);
    let sel = sample_selection(&all, 1, 0.0).unwrap();
    assert!(sel.iter().all(|s| s.len() == 6));
    let half = uniform_policy(20_000, &independent(3, 3.0, 0.0));
    let sel = sample_selection(&half, 2, 0.0).unwrap();
    let rate = sel.iter().map(|s| s.len()).sum::<usize>() as f64 / (20_000.0 * 6.0);
    assert!((0.48..=0.52).contains(&rate), "{rate}");
    assert_eq!(sel, sample_selection(&half, 2, 0.0).unwrap());
    assert_ne!(sel, sample_selection(&half, 3, 0.0).unwrap());
    let rows = random_rows(5000, 3, 3);
    let one = water_filling_one_pair(&rows, &BudgetSpec::unit_costs(3, 0.6, 0.0, BudgetMode::AtMostOne), &borda(3), 1e-9).unwrap();
    let sel = sample_selection(&one, 4, 0.0).unwrap();
    assert!(sel.iter().all(|s| s.len() <= 1 && s.iter().all(|&(a, b)| a < b)));
    let rate = sel.iter().filter(|s| !s.is_empty()).count() as f64 / 5000.0;
    assert!((rate - 0.6).abs() < 0.03, "{rate}");
    assert!(sample_selection(&one, 4, 1.5).is_err());
}
