mod common;

use hedge_core::random::random_tree;
use hedge_core::tree::{build_binomial, build_kernel_model, load_document, save_family, ClaimFamily, Kernel, ModelFamily, Transform};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn conditional_expectation_is_a_martingale(seed in any::<u64>(), depth in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, depth, &(2..=3));
        let x: Vec<f64> = tree.leaves().iter().map(|_| rng.random_range(-100.0..100.0)).collect();
        let m = tree.conditional_expectation(&x);
        for n in 0..tree.len() {
            prop_assert!(tree.martingale_defect(&m, n).abs() <= 1e-12 * m[n].abs().max(1.0));
        }
        prop_assert!((m[tree.root()] - tree.expectation(&x)).abs() <= 1e-12 * 100.0);
    }

    #[test]
    fn leaf_probabilities_sum_to_one(seed in any::<u64>(), depth in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, depth, &(2..=3));
        let total: f64 = tree.leaves().iter().map(|&l| tree.prob(l)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for n in 0..tree.len() {
            let r = tree.leaf_range(n);
            let below: f64 = tree.leaves()[r].iter().map(|&l| tree.prob(l)).sum();
            prop_assert!((below - tree.prob(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_kernel_is_a_binomial_tree(levels in 1usize..=5, inc in 0.01f64..0.5) {
        let (tree, field) = build_kernel_model(levels, &vec![0.0; levels], |_, _| 1.0, inc, Transform::Exp).unwrap();
        let (btree, bfield) = build_binomial(levels, 1.0, inc.exp(), (-inc).exp(), 0.5).unwrap();
        prop_assert_eq!(tree.len(), btree.len());
        for n in 0..tree.len() {
            prop_assert_eq!(tree.id(n), btree.id(n));
            prop_assert!((field.at(n) - bfield.at(n)).abs() <= 1e-12 * bfield.at(n));
        }
    }
}

#[test]
fn power_kernel_matches_path_sum() {
    let hurst = 0.7;
    let inc = 0.1;
    let (tree, field) = Kernel::Power { hurst }.build(3, &[0.0; 3], inc, Transform::Exp).unwrap();
    // Path u, d, u: depth 3 weights (3 - s + 1)^(H - 1/2) for s = 1, 2, 3.
    let n = tree.lookup("udu").unwrap();
    let expected = (inc * (3f64.powf(0.2) - 2f64.powf(0.2) + 1.0)).exp();
    assert!((field.at(n) - expected).abs() < 1e-12);
    let u = tree.lookup("u").unwrap();
    assert!((field.at(u) - inc.exp()).abs() < 1e-12);
}

#[test]
fn family_document_round_trips() {
    let (tree, field) = build_binomial(3, 100.0, 1.1, 0.9, 0.5).unwrap();
    assert_eq!(tree.len(), 15);
    let fam = ModelFamily::new(tree, vec![field], 0.02).unwrap();
    let claims = ClaimFamily::payoff(&fam, |s| (s - 100.0).max(0.0)).unwrap();
    let text = save_family(&fam, Some(&claims));
    let doc = load_document(text.as_bytes()).unwrap();
    assert_eq!(doc.family, fam);
    assert_eq!(doc.claims.unwrap(), claims);
}
