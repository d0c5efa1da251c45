use approx::assert_abs_diff_eq;
use gars_core::acquisition::{uniform_policy, BudgetMode, BudgetSpec};
use gars_core::simbench::experiments::policy_cost;
use gars_core::simbench::{
    acquisition_experiment, coverage_experiment, cycle, floor_mass, ground_truth_scores, AcquisitionConfig,
    CoverageConfig, DgpSpec, DgpVariant, NuisanceSource, Simulator,
};
use gars_core::{rng, GarsKind, GarsSpec};
use nalgebra::DVector;

fn tie_sim(seed: u64) -> Simulator {
    Simulator::new(DgpSpec::debiasing(seed)).unwrap()
}

fn bt_sim(gamma: f64, k: usize, seed: u64) -> Simulator {
    Simulator::new(DgpSpec::new(DgpVariant::BtMisspec { gamma }, k, 2, seed)).unwrap()
}

#[test]
fn tie_slices_are_floored_distributions() {
    let sim = tie_sim(1);
    let mut g = rng::stream(2, 0, 0);
    for _ in 0..200 {
        let x = sim.sample_context(&mut g);
        assert!(x.iter().all(|v| (0.0..1.0).contains(v)));
        let mu = sim.true_mu(&x);
        assert!(mu.validate().is_ok());
        for a in 0..3 {
            for b in (0..3).filter(|&b| b != a) {
                assert_abs_diff_eq!(mu.slice(a, b).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                assert!(mu.slice(a, b).iter().all(|&v| v >= 0.05 - 1e-12));
            }
        }
    }
}

#[test]
fn identical_items_have_symmetric_outcomes() {
    let sim = tie_sim(3).with_identical_items();
    let mut g = rng::stream(4, 0, 0);
    for _ in 0..20 {
        let mu = sim.true_mu(&sim.sample_context(&mut g));
        for a in 0..3 {
            for b in (0..3).filter(|&b| b != a) {
                assert_abs_diff_eq!(mu.get(a, b, 0), mu.get(a, b, 1), epsilon = 1e-14);
            }
        }
    }
}

#[test]
fn binary_outcomes_are_complementary() {
    for gamma in [0.0, 1.5] {
        let sim = bt_sim(gamma, 4, 1);
        let mut g = rng::stream(5, 0, 0);
        let mu = sim.true_mu(&sim.sample_context(&mut g));
        for a in 0..4 {
            for b in (0..4).filter(|&b| b != a) {
                assert_abs_diff_eq!(mu.get(a, b, 0), 1.0 - mu.get(b, a, 0), epsilon = 1e-14);
            }
        }
    }
}

#[test]
fn propensity_model() {
    let spec = DgpSpec { lambda_pi: 0.0, ..DgpSpec::debiasing(2) };
    let sim = Simulator::new(spec).unwrap();
    let pi = sim.true_pi(&[0.3, 0.9]);
    for a in 0..3 {
        for b in (0..3).filter(|&b| b != a) {
            assert_eq!(pi.get(a, b), 0.3);
        }
    }
    // default mixing stays in [pi_min, pi_max]
    let sim = Simulator::new(DgpSpec::new(DgpVariant::NonlinearTie, 4, 2, 3)).unwrap();
    let mut g = rng::stream(6, 0, 0);
    for _ in 0..100 {
        let pi = sim.true_pi(&sim.sample_context(&mut g));
        assert!(pi.as_slice().iter().enumerate().all(|(i, v)| i % 5 == 0 || (0.01..=0.5).contains(v)));
    }
    // without item offsets and context drift the propensity falls with |d|
    let spec = DgpSpec { lambda_pi: 1.0, sigma_bpi: 0.0, eta_pi: 0.0, pi_max: 1.0, ..DgpSpec::new(DgpVariant::NonlinearTie, 4, 2, 5) };
    let sim = Simulator::new(spec).unwrap();
    let x = [0.4, 0.6];
    let u = sim.utilities(&x);
    let pi = sim.true_pi(&x);
    let mut pts: Vec<(f64, f64)> =
        (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).filter(|(a, b)| a != b).map(|(a, b)| ((u[a] - u[b]).abs(), pi.get(a, b))).collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    for w in pts.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-15);
    }
}

#[test]
fn sampled_labels_and_selections_match_the_model() {
    let sim = tie_sim(4);
    let draws = sim.draw_contexts(20_000, 7);
    let ds = sim.realize(&draws, None, None).unwrap();
    let (mut sel, mut expect_sel) = (0.0, 0.0);
    let mut counts = [0.0; 3];
    let mut expect = [0.0; 3];
    for (i, d) in draws.iter().enumerate() {
        for a in 0..3 {
            for b in (0..3).filter(|&b| b != a) {
                expect_sel += d.pi.get(a, b);
            }
        }
        for p in ds.selections(i) {
            sel += 1.0;
            counts[p.label] += 1.0;
            for (c, e) in expect.iter_mut().enumerate() {
                *e += d.mu.get(p.j, p.k, c);
            }
        }
    }
    let pairs = 20_000.0 * 6.0;
    assert!((sel / pairs - expect_sel / pairs).abs() < 0.01);
    for c in 0..3 {
        let p = expect[c] / sel;
        let sd = (p * (1.0 - p) / sel).sqrt();
        assert!((counts[c] / sel - p).abs() < 3.0 * sd, "category {c}");
    }
}

#[test]
fn sampling_is_seeded_and_nested() {
    let sim = tie_sim(1);
    let (a, _, _) = sim.sample_dataset(100, 3).unwrap();
    let (b, _, _) = sim.sample_dataset(100, 3).unwrap();
    let (c, _, _) = sim.sample_dataset(60, 3).unwrap();
    let (d, _, _) = sim.sample_dataset(100, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, d);
    for i in 0..60 {
        assert_eq!(a.context(i), c.context(i));
        assert_eq!(a.selections(i), c.selections(i));
    }
    // item parameters depend on the simulator seed only
    assert_eq!(tie_sim(1).params.b, tie_sim(1).params.b);
    assert_ne!(tie_sim(1).params.b, tie_sim(2).params.b);
}

#[test]
fn judge_noise_levels() {
    let sim = tie_sim(2);
    let draws = sim.draw_contexts(5, 1);
    let exact = sim.realize(&draws, None, Some(0.0)).unwrap();
    for (i, d) in draws.iter().enumerate() {
        let f = exact.judge_tensor(i).unwrap();
        assert!(f.as_slice().iter().zip(d.mu.as_slice()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
    let noisy = sim.realize(&draws, None, Some(1.0)).unwrap();
    assert!(noisy.judge_tensor(0).unwrap().validate().is_ok());
    assert_ne!(noisy.judge(0), exact.judge(0));
    // selections do not depend on the judge
    assert_eq!(noisy.selections(3), exact.selections(3));
}

#[test]
fn bt_ground_truth_is_mean_centered_utility() {
    let sim = bt_sim(0.0, 4, 2);
    let spec = GarsSpec::new(GarsKind::BtProjection, sim.spec.scheme());
    let gt = ground_truth_scores(&sim, &spec, 100_000, 1).unwrap();
    let mut g = rng::stream(12345, 0, 0);
    let m = 100_000;
    let mut own = DVector::zeros(4);
    for _ in 0..m {
        own += sim.true_r(&sim.sample_context(&mut g));
    }
    own /= m as f64;
    for j in 0..4 {
        let tol = 4.0 * gt.mc_se[j] * 2f64.sqrt();
        assert!((gt.theta_star[j] - own[j]).abs() < tol, "item {j}");
    }
    assert!(gt.theta_star.iter().sum::<f64>().abs() < 1e-10);
}

#[test]
fn ground_truth_precision() {
    let sim = tie_sim(1);
    let scheme = sim.spec.scheme();
    for kind in [GarsKind::Borda, GarsKind::RankCentrality] {
        let spec = GarsSpec::new(kind.clone(), scheme.clone());
        let a = ground_truth_scores(&sim, &spec, 200_000, 1).unwrap();
        let b = ground_truth_scores(&sim, &spec, 200_000, 2).unwrap();
        let spread = a.theta_star.iter().cloned().fold(f64::MIN, f64::max) - a.theta_star.iter().cloned().fold(f64::MAX, f64::min);
        for j in 0..3 {
            assert!((a.theta_star[j] - b.theta_star[j]).abs() < 4.0 * (a.mc_se[j].hypot(b.mc_se[j])));
            assert!(a.mc_se[j] < 0.01 * spread);
        }
        if kind == GarsKind::RankCentrality {
            assert_abs_diff_eq!(a.theta_star.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        }
        assert_eq!(a.theta_star, ground_truth_scores(&sim, &spec, 200_000, 1).unwrap().theta_star);
    }
    assert!(ground_truth_scores(&sim, &GarsSpec::new(GarsKind::Borda, scheme), 100, 1).is_err());
}

#[test]
fn floor_mass_examples() {
    let mut v = [0.0, 0.3, 0.7];
    floor_mass(&mut v, 0.05);
    assert_abs_diff_eq!(v[0], 0.05, epsilon = 1e-15);
    assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(v[2] / v[1], 0.7 / 0.3, epsilon = 1e-12);
    // flooring one entry can push another below the floor
    let mut w = [0.0, 0.052, 0.948];
    floor_mass(&mut w, 0.05);
    assert!(w.iter().all(|&x| x >= 0.05 - 1e-15));
    assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    let mut u = [0.2, 0.8];
    floor_mass(&mut u, 0.0);
    assert_eq!(u, [0.2, 0.8]);
}

#[test]
fn cycle_orientation() {
    assert_eq!(cycle(4, 0, 1), 1.0);
    assert_eq!(cycle(4, 1, 0), -1.0);
    assert_eq!(cycle(4, 3, 0), 1.0);
    assert_eq!(cycle(4, 0, 2), 0.0);
    for a in 0..5 {
        assert_eq!((0..5).map(|b| cycle(5, a, b)).sum::<f64>(), 0.0);
    }
}

#[test]
fn strong_cycle_creates_intransitive_majorities() {
    let sim = bt_sim(4.0, 4, 1);
    let mut g = rng::stream(3, 0, 0);
    let mut found = false;
    for _ in 0..200 {
        let mu = sim.true_mu(&sim.sample_context(&mut g));
        let beats = |a: usize, b: usize| mu.get(a, b, 0) > 0.5;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    if a != b && b != c && a != c && beats(a, b) && beats(b, c) && beats(c, a) {
                        found = true;
                    }
                }
            }
        }
    }
    assert!(found);
    // gamma = 0 is a BT model, so majorities are transitive
    let sim = bt_sim(0.0, 4, 1);
    let mu = sim.true_mu(&sim.sample_context(&mut g));
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                if a != b && b != c && a != c {
                    let cyc = mu.get(a, b, 0) > 0.5 && mu.get(b, c, 0) > 0.5 && mu.get(c, a, 0) > 0.5;
                    assert!(!cyc);
                }
            }
        }
    }
}

#[test]
fn uniform_policy_cost_is_the_budget() {
    let budget = BudgetSpec::unit_costs(3, 2000.0 / 1500.0, 0.0, BudgetMode::Independent);
    let u = uniform_policy(10, &budget);
    assert_abs_diff_eq!(policy_cost(&u.pi, 3), 2000.0 / 1500.0, epsilon = 1e-12);
}

#[test]
fn experiment_reports_are_deterministic() {
    let cfg = AcquisitionConfig {
        dgp: DgpSpec::acquisition(1),
        kinds: vec![GarsKind::Borda],
        beta: 1.0,
        alpha_floor: 0.05,
        n_ctx: 150,
        runs: 5,
        nuisance: NuisanceSource::Oracle,
        seed: 3,
        mc_n: 10_000,
    };
    let a = serde_json::to_string(&acquisition_experiment(&cfg).unwrap()).unwrap();
    assert_eq!(a, serde_json::to_string(&acquisition_experiment(&cfg).unwrap()).unwrap());
    let rep = acquisition_experiment(&cfg).unwrap();
    assert_eq!(rep.len(), 2);
    assert_eq!((rep[0].arm.as_str(), rep[1].arm.as_str()), ("a_optimal", "uniform"));
    assert!(acquisition_experiment(&AcquisitionConfig { runs: 4, ..cfg }).is_err());

    let mut cov = CoverageConfig::new(DgpSpec::debiasing(1), vec![GarsKind::Borda], 10, 200, 5);
    cov.nuisance = NuisanceSource::Oracle;
    cov.mc_n = 10_000;
    cov.mc_draws = 1000;
    let r1 = serde_json::to_string(&coverage_experiment(&cov).unwrap()).unwrap();
    let r2 = serde_json::to_string(&coverage_experiment(&cov).unwrap()).unwrap();
    assert_eq!(r1, r2);
    let rep = coverage_experiment(&cov).unwrap();
    assert!(rep.iter().all(|r| r.runs == 10 && (0.0..=1.0).contains(&r.coverage)));
    assert!(coverage_experiment(&CoverageConfig { runs: 9, ..cov }).is_err());
}

#[test]
fn invalid_simulator_specs() {
    assert!(Simulator::new(DgpSpec { eps_mu: 0.5, ..DgpSpec::debiasing(1) }).is_err());
    assert!(Simulator::new(DgpSpec { pi_min: 0.6, ..DgpSpec::debiasing(1) }).is_err());
    assert!(Simulator::new(DgpSpec { k: 1, ..DgpSpec::debiasing(1) }).is_err());
    assert!(Simulator::new(DgpSpec { temperature: 0.0, ..DgpSpec::debiasing(1) }).is_err());
}
