use std::io::Cursor;

use gars_core::functionals::random_interior_mu;
use gars_core::io::{read_dataset, write_dataset};
use gars_core::{
    clamp_mu, evaluate, rng, symmetrized_scores, CategoryScheme, GarsError, GarsKind, ItemSet, JudgeEntry, LabeledPair,
    MuTensor, PreferenceDataset,
};
use proptest::prelude::*;

fn parse(text: &str) -> gars_core::Result<PreferenceDataset> {
    read_dataset(Cursor::new(text.as_bytes()))
}

#[test]
fn two_valid_rows_load() {
    let text = r#"{"type":"meta","K":3,"C":3}
{"type":"row","context":[0.1,0.2],"pairs":[{"j":0,"k":1,"label":2}]}

{"type":"row","context":[0.3,0.4],"pairs":[{"j":2,"k":0,"label":0},{"j":1,"k":2,"label":1}]}
"#;
    let ds = parse(text).unwrap();
    assert_eq!((ds.n(), ds.k(), ds.c(), ds.p()), (2, 3, 3, 2));
    assert_eq!(ds.n_labeled(), 3);
    assert_eq!(ds.scheme(), &CategoryScheme::default_for(3).unwrap());
    assert_eq!(ds.selections(1)[0], LabeledPair { j: 2, k: 0, label: 0 });
}

#[test]
fn diagonal_pair_is_rejected() {
    let text = "{\"type\":\"meta\",\"K\":3,\"C\":3}\n{\"type\":\"row\",\"context\":[0.1],\"pairs\":[{\"j\":1,\"k\":1,\"label\":0}]}\n";
    let err = parse(text).unwrap_err();
    assert!(matches!(err, GarsError::Schema(_)), "{err:?}");
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn judge_off_simplex_is_rejected() {
    let text = "{\"type\":\"meta\",\"K\":3,\"C\":3}\n{\"type\":\"row\",\"context\":[0.1],\"pairs\":[],\"judge\":[{\"j\":0,\"k\":1,\"probs\":[0.5,0.6,0.1]}]}\n";
    let err = parse(text).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().to_lowercase().contains("simplex") || err.to_string().contains("sum"), "{err}");
}

#[test]
fn other_schema_errors() {
    let cases = [
        // label out of range
        "{\"type\":\"meta\",\"K\":2,\"C\":2}\n{\"type\":\"row\",\"context\":[0.1],\"pairs\":[{\"j\":0,\"k\":1,\"label\":2}]}\n",
        // item out of range
        "{\"type\":\"meta\",\"K\":2,\"C\":2}\n{\"type\":\"row\",\"context\":[0.1],\"pairs\":[{\"j\":0,\"k\":2,\"label\":0}]}\n",
        // ragged contexts
        "{\"type\":\"meta\",\"K\":2,\"C\":2}\n{\"type\":\"row\",\"context\":[0.1]}\n{\"type\":\"row\",\"context\":[0.1,0.2]}\n",
        // duplicate ordered pair
        "{\"type\":\"meta\",\"K\":2,\"C\":2}\n{\"type\":\"row\",\"context\":[0.1],\"pairs\":[{\"j\":0,\"k\":1,\"label\":0},{\"j\":0,\"k\":1,\"label\":1}]}\n",
        // row before meta
        "{\"type\":\"row\",\"context\":[0.1]}\n",
        // not JSON
        "{\"type\":\"meta\",\"K\":2,\"C\":2}\nnope\n",
    ];
    for text in cases {
        let err = parse(text).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{text}: {err}");
    }
}

#[test]
fn all_tie_mass_gives_one_half() {
    let scheme = CategoryScheme::default_for(3).unwrap();
    let mu = MuTensor::constant(4, &[0.0, 0.0, 1.0]).unwrap();
    let s = symmetrized_scores(&mu, &scheme);
    for a in 0..4 {
        for b in 0..4 {
            assert_eq!(s[(a, b)], if a == b { 0.0 } else { 0.5 });
        }
    }
}

#[test]
fn binary_k2_symmetrized_score() {
    let scheme = CategoryScheme::binary();
    let mu = MuTensor::new(2, 2, vec![0.0, 0.0, 0.8, 0.2, 0.2, 0.8, 0.0, 0.0]).unwrap();
    let s = symmetrized_scores(&mu, &scheme);
    // (<w1, mu_12> + <w2, mu_21>) / 2 = (0.8 + 0.8) / 2
    assert!((s[(0, 1)] - 0.8).abs() < 1e-15);
    assert!((s[(1, 0)] - 0.2).abs() < 1e-15);
}

#[test]
fn clamp_examples() {
    let mu = MuTensor::new(2, 3, vec![0.0; 3].into_iter().chain([1.0, 0.0, 0.0]).chain([0.3, 0.3, 0.4]).chain([0.0; 3]).collect()).unwrap();
    let c = clamp_mu(&mu, 1e-6);
    let s = c.slice(0, 1);
    assert!(s.iter().all(|&v| v >= 1e-6 * 0.999_999));
    assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(s[1] > 0.0);
    // interior slices are untouched
    assert_eq!(c.slice(1, 0), mu.slice(1, 0));
    let interior = random_interior_mu(4, 3, 0.05, &mut rng::stream(1, 0, 0));
    let ci = clamp_mu(&interior, 1e-6);
    for (a, b) in ci.as_slice().iter().zip(interior.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn scheme_validation() {
    assert!(CategoryScheme::new(vec![1.0, 0.0], vec![0.0]).is_err());
    assert!(CategoryScheme::new(vec![f64::NAN, 0.0], vec![0.0, 1.0]).is_err());
    assert!(CategoryScheme::default_for(6).is_err());
    assert!(!CategoryScheme::default_for(4).unwrap().is_complementary());
    let s = CategoryScheme::default_for(4).unwrap();
    assert_eq!(s.c(), 4);
    assert!(CategoryScheme::default_for(3).unwrap().is_complementary());
    assert!(ItemSet::new(1).is_err());
}

fn small_dataset(seed: u64) -> PreferenceDataset {
    use rand::Rng;
    let mut g = rng::stream(seed, 0, 0);
    let (k, c, n) = (3, 3, 6);
    let mut ctx = Vec::new();
    let mut sel = Vec::new();
    let mut judge = Vec::new();
    for _ in 0..n {
        ctx.push(vec![g.gen::<f64>(), g.gen::<f64>() * 1e-7]);
        let mut s = Vec::new();
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                if g.gen::<f64>() < 0.4 {
                    s.push(LabeledPair { j: a, k: b, label: g.gen_range(0..c) });
                }
            }
        }
        sel.push(s);
        let p: f64 = g.gen::<f64>() * 0.5;
        judge.push(vec![JudgeEntry { j: 0, k: 1, probs: vec![p, 0.5 - p, 0.5] }]);
    }
    PreferenceDataset::new(ItemSet::new(k).unwrap(), CategoryScheme::default_for(c).unwrap(), ctx, sel, judge).unwrap()
}

#[test]
fn save_then_load_is_identity() {
    for seed in 0..20 {
        let ds = small_dataset(seed);
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(Cursor::new(buf)).unwrap();
        assert_eq!(back, ds);
    }
}

#[test]
fn judge_tensor_needs_every_pair() {
    let ds = small_dataset(3);
    assert!(ds.has_judge());
    assert!(ds.judge_tensor(0).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn borda_sums_to_half_k(seed in any::<u64>(), k in 2usize..7, c in 2usize..4) {
        // complementary schemes only
        let scheme = CategoryScheme::default_for(c).unwrap();
        let mu = random_interior_mu(k, c, 0.0, &mut rng::stream(seed, 0, 0));
        let s = symmetrized_scores(&mu, &scheme);
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                prop_assert!((s[(a, b)] + s[(b, a)] - 1.0).abs() < 1e-12);
            }
        }
        let f = evaluate(&GarsKind::Borda, &mu, &scheme).unwrap();
        prop_assert!((f.sum() - k as f64 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn swap_pairs_and_weights_leaves_scores(seed in any::<u64>(), k in 2usize..6, c in 2usize..5) {
        let scheme = CategoryScheme::default_for(c).unwrap();
        let mu = random_interior_mu(k, c, 0.0, &mut rng::stream(seed, 0, 0));
        let swapped = MuTensor::from_fn(k, c, |a, b| mu.slice(b, a).to_vec()).unwrap();
        let s1 = symmetrized_scores(&mu, &scheme);
        let s2 = symmetrized_scores(&swapped, &scheme.swapped());
        prop_assert!((s1 - s2).amax() < 1e-15);
    }

    #[test]
    fn clamp_keeps_simplex(seed in any::<u64>(), k in 2usize..5, c in 2usize..5, eps in 1e-9f64..1e-2) {
        // push a few entries to exact zero
        let mut mu = random_interior_mu(k, c, 0.0, &mut rng::stream(seed, 0, 0));
        let raw = mu.raw_mut();
        let n = raw.len();
        for i in (0..n).step_by(7) {
            raw[i] = 0.0;
        }
        let mu = MuTensor::from_fn(k, c, |a, b| {
            let s = mu.slice(a, b);
            let t: f64 = s.iter().sum();
            s.iter().map(|v| v / t).collect()
        });
        if let Ok(mu) = mu {
            let out = clamp_mu(&mu, eps);
            prop_assert!(out.validate().is_ok());
        }
    }
}
