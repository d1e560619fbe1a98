//! Batched primal/dual solves over many instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dual::{solve_dual, DualError};
use crate::exec::Execution;
use crate::lp::SolveOptions;
use crate::primal::{solve_primal, PrimalError, PrimalOptions};
use crate::random::{random_claims, random_family, FamilyParams};
use crate::tree::{ClaimFamily, ModelFamily};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub family: ModelFamily,
    pub claims: ClaimFamily,
}

/// `count` reproducible random instances; instance `i` depends only on
/// `seed` and `i`.
pub fn sweep_instances(seed: u64, count: usize, params: &FamilyParams) -> Vec<Instance> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let family = random_family(&mut rng, params);
            let claims = random_claims(&mut rng, &family, true);
            Instance { family, claims }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum DualityOutcome {
    Solved { primal: f64, dual: f64, gap: f64 },
    /// Some model has a free lunch and, consistently, no price system
    /// exists.
    FreeLunch,
    /// The two programs disagree about feasibility, or a solve failed.
    Failed(String),
}

/// Solves the primal and dual programs of one instance.
pub fn duality_gap(instance: &Instance, exec: Execution) -> DualityOutcome {
    let (primal, dual) = exec.join(
        || solve_primal(&instance.family, &instance.claims, &PrimalOptions::default()),
        || solve_dual(&instance.family, &instance.claims, &SolveOptions::default()),
    );
    match (primal, dual) {
        (Ok(p), Ok(d)) => {
            let primal = p.certificate.price;
            let dual = d.certificate.value;
            DualityOutcome::Solved {
                primal,
                dual,
                gap: (primal - dual).abs(),
            }
        }
        (Err(PrimalError::FreeLunch { .. }), Err(DualError::NoConsistentPriceSystem)) => DualityOutcome::FreeLunch,
        (p, d) => DualityOutcome::Failed(format!(
            "primal {:?}, dual {:?}",
            p.map(|r| r.certificate.price),
            d.map(|r| r.certificate.value)
        )),
    }
}

pub fn duality_sweep(instances: &[Instance], exec: Execution) -> Vec<DualityOutcome> {
    exec.map(instances, |inst| duality_gap(inst, exec))
}
