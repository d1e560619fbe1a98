mod common;

use std::collections::HashMap;

use common::{close, sandwich_lp_feasible};
use hedge_core::dual::{
    fit_positive_cps, fit_sandwich_martingale, paste_cps, solve_dual, validate_cps, ConsistentPriceSystem, PositiveCps,
    SandwichFit,
};
use hedge_core::lp::{SolveOptions, TOL_FEAS};
use hedge_core::primal::{solve_primal, PrimalOptions};
use hedge_core::random::{random_claims, random_corridor, random_family, random_tree, FamilyParams};
use hedge_core::tree::{ClaimFamily, ModelFamily};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arbitrage_free(seed: u64) -> (ModelFamily, ClaimFamily, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = FamilyParams {
        depth: 1..=3,
        straddle_prob: 1.0,
        ..Default::default()
    };
    let fam = random_family(&mut rng, &params);
    let claims = random_claims(&mut rng, &fam, true);
    (fam, claims, rng)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dual_optimum_is_a_valid_system_at_the_primal_price(seed in any::<u64>()) {
        let (fam, claims, _) = arbitrage_free(seed);
        let dual = solve_dual(&fam, &claims, &SolveOptions::default()).unwrap();
        let primal = solve_primal(&fam, &claims, &PrimalOptions::default()).unwrap();
        let cps = &dual.certificate.cps;
        let report = validate_cps(&fam, cps, TOL_FEAS);
        prop_assert!(report.valid(), "{:?}", report.violations);
        prop_assert!(close(cps.total_mass(fam.tree()), 1.0, 1e-9));
        prop_assert!(close(cps.price(fam.tree(), &claims), primal.certificate.price, 1e-7));
    }

    #[test]
    fn primal_multipliers_form_a_dual_optimum(seed in any::<u64>()) {
        let (fam, claims, _) = arbitrage_free(seed);
        let primal = solve_primal(&fam, &claims, &PrimalOptions::default()).unwrap();
        let dual = solve_dual(&fam, &claims, &SolveOptions::default()).unwrap();
        let point = primal.layout.dual_point(&fam, &primal.solution.dual);
        let cps = dual.layout.decode(&fam, &point);
        let report = validate_cps(&fam, &cps, 1e-7);
        prop_assert!(report.valid(), "{:?}", report.violations);
        prop_assert!(close(cps.price(fam.tree(), &claims), primal.certificate.price, 1e-7));
    }

    #[test]
    fn system_json_round_trips(seed in any::<u64>()) {
        let (fam, claims, _) = arbitrage_free(seed);
        let cps = solve_dual(&fam, &claims, &SolveOptions::default()).unwrap().certificate.cps;
        let back = ConsistentPriceSystem::from_value(&fam, &cps.to_value(&fam)).unwrap();
        prop_assert_eq!(back, cps);
    }

    #[test]
    fn sandwich_fitter_agrees_with_lp(seed in any::<u64>(), depth in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, depth, &(2..=3));
        let (lower, upper) = random_corridor(&mut rng, &tree);
        let fit = fit_sandwich_martingale(&tree, &lower, &upper).unwrap();
        prop_assert_eq!(fit.is_feasible(), sandwich_lp_feasible(&tree, &lower, &upper));
        if let SandwichFit::Martingale(m) = fit {
            for n in 0..tree.len() {
                prop_assert!(m[n] >= lower[n] - 1e-9 && m[n] <= upper[n] + 1e-9);
                prop_assert!(tree.martingale_defect(&m, n).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn pasted_systems_are_valid_and_priced_below_the_robust_price(seed in any::<u64>()) {
        let (fam, claims, mut rng) = arbitrage_free(seed);
        let mut parts = HashMap::new();
        let mut weights = HashMap::new();
        let raw: Vec<f64> = fam.thetas().map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for (theta, w) in fam.thetas().zip(&raw) {
            let PositiveCps::Found(part) = fit_positive_cps(&fam, theta, &SolveOptions::default()).unwrap() else {
                panic!("{theta} should carry a positive system");
            };
            parts.insert(theta.to_string(), part);
            weights.insert(theta.to_string(), w / total);
        }
        let pasted = paste_cps(&fam, &parts, &weights, TOL_FEAS).unwrap();
        let report = validate_cps(&fam, &pasted, TOL_FEAS);
        prop_assert!(report.valid(), "{:?}", report.violations);
        let robust = solve_primal(&fam, &claims, &PrimalOptions::default()).unwrap().certificate.price;
        let value = pasted.normalized(fam.tree()).price(fam.tree(), &claims);
        prop_assert!(value <= robust + 1e-7 * robust.abs().max(1.0));
    }
}
