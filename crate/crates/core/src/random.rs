//! Random instances for property tests, acceptance sweeps and benches.

use std::ops::RangeInclusive;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dual::{solve_dual, ConsistentPriceSystem, DualError};
use crate::lp::SolveOptions;
use crate::tree::{build_binomial, ClaimFamily, ModelFamily, NodeSpec, PriceField, ScenarioTree};
use crate::wealth::Strategy;

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyParams {
    pub depth: RangeInclusive<usize>,
    pub branching: RangeInclusive<usize>,
    pub models: RangeInclusive<usize>,
    pub lambdas: Vec<f64>,
    pub price_range: (f64, f64),
    /// Probability that a family's prices bracket every parent price (so
    /// each model is arbitrage free); otherwise children are drawn freely.
    pub straddle_prob: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            depth: 1..=4,
            branching: 2..=3,
            models: 1..=3,
            lambdas: vec![0.0, 0.01, 0.05, 0.2],
            price_range: (50.0, 200.0),
            straddle_prob: 0.9,
        }
    }
}

/// Branch probabilities for `c` children, summing to one.
fn branch_probs<R: Rng>(rng: &mut R, c: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..c).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
    let head: f64 = p[..c - 1].iter().sum();
    p[c - 1] = 1.0 - head;
    p
}

/// Tree of exactly `depth` levels, each internal node with a branching
/// factor drawn from `branching`. Child ids append a digit to the parent's.
pub fn random_tree<R: Rng>(rng: &mut R, depth: usize, branching: &RangeInclusive<usize>) -> ScenarioTree {
    let mut specs = vec![NodeSpec {
        id: "root".into(),
        parent: None,
        t: 0,
        p: 1.0,
    }];
    let mut frontier = vec![(String::from("root"), String::new())];
    for t in 1..=depth {
        let mut next = Vec::new();
        for (parent, path) in &frontier {
            let c = rng.random_range(branching.clone());
            for (i, p) in branch_probs(rng, c).into_iter().enumerate() {
                let path = format!("{path}{}", i + 1);
                specs.push(NodeSpec {
                    id: path.clone(),
                    parent: Some(parent.clone()),
                    t,
                    p,
                });
                next.push((path.clone(), path));
            }
        }
        frontier = next;
    }
    ScenarioTree::new(depth, specs).expect("generated tree is valid")
}

/// Positive prices in `range`. With `straddle`, every internal node has a
/// child strictly below and one strictly above its own price, unless the
/// price sits on the edge of the range.
pub fn random_prices<R: Rng>(rng: &mut R, tree: &ScenarioTree, straddle: bool, range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = range;
    let mut prices = vec![0.0; tree.len()];
    let mid_lo = lo + 0.2 * (hi - lo);
    let mid_hi = hi - 0.2 * (hi - lo);
    prices[tree.root()] = rng.random_range(mid_lo..mid_hi);
    for n in 0..tree.len() {
        let children = tree.children(n);
        if children.is_empty() {
            continue;
        }
        let s = prices[n];
        if !straddle {
            for &c in children {
                prices[c] = rng.random_range(lo..=hi);
            }
            continue;
        }
        let a = lo.max(0.75 * s);
        let b = hi.min(1.25 * s);
        for &c in children {
            prices[c] = rng.random_range(a..=b);
        }
        if children.len() < 2 {
            continue;
        }
        let down = rng.random_range(0..children.len());
        let up = (down + rng.random_range(1..children.len())) % children.len();
        if a < s {
            prices[children[down]] = rng.random_range(a..s - 0.05 * (s - a));
        }
        if s < b {
            prices[children[up]] = rng.random_range(s + 0.05 * (b - s)..=b);
        }
    }
    prices
}

pub fn random_family<R: Rng>(rng: &mut R, params: &FamilyParams) -> ModelFamily {
    let depth = rng.random_range(params.depth.clone());
    let tree = random_tree(rng, depth, &params.branching);
    let straddle = rng.random_bool(params.straddle_prob);
    let k = rng.random_range(params.models.clone());
    let fields = (0..k)
        .map(|i| {
            let prices = random_prices(rng, &tree, straddle, params.price_range);
            PriceField::new(&tree, format!("theta{}", i + 1), prices).expect("prices are positive")
        })
        .collect();
    let lambda = *params.lambdas.choose(rng).expect("at least one lambda");
    ModelFamily::new(tree, fields, lambda).expect("generated family is valid")
}

/// Bounded claims of a randomly chosen shape: independent values, a call,
/// a put, or (when `signed`) values of both signs.
pub fn random_claims<R: Rng>(rng: &mut R, family: &ModelFamily, signed: bool) -> ClaimFamily {
    let kinds = if signed { 4 } else { 3 };
    let strike = rng.random_range(60.0..160.0);
    let claims = match rng.random_range(0..kinds) {
        0 => ClaimFamily::from_fn(family, |_, _| rng.random_range(0.0..100.0)),
        1 => ClaimFamily::payoff(family, |s| (s - strike).max(0.0)),
        2 => ClaimFamily::payoff(family, |s| (strike - s).max(0.0)),
        _ => ClaimFamily::from_fn(family, |_, _| rng.random_range(-50.0..100.0)),
    };
    claims.expect("generated claims cover the family")
}

/// Initial transfer in `[-2, 2]` and sparse trades of size up to 2,
/// occasionally buying and selling at the same node.
pub fn random_strategy<R: Rng>(rng: &mut R, tree: &ScenarioTree) -> Strategy {
    let mut s = Strategy::hold(tree, rng.random_range(-2.0..2.0));
    for n in 0..tree.len() {
        let roll: f64 = rng.random();
        let (buy, sell) = if roll < 0.3 {
            (rng.random_range(0.0..2.0), 0.0)
        } else if roll < 0.6 {
            (0.0, rng.random_range(0.0..2.0))
        } else if roll < 0.7 {
            (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0))
        } else {
            (0.0, 0.0)
        };
        s.set_trade(n, buy, sell);
    }
    s
}

/// Binomial family with a single model and no costs; `up`, `down` and
/// `p_up` drawn so that the model is arbitrage free.
pub fn random_binomial<R: Rng>(rng: &mut R, levels: RangeInclusive<usize>) -> ModelFamily {
    let levels = rng.random_range(levels);
    let s0 = rng.random_range(50.0..200.0);
    let up = rng.random_range(1.01..1.5);
    let down = rng.random_range(0.6..0.99);
    let p_up = rng.random_range(0.2..0.8);
    let (tree, field) = build_binomial(levels, s0, up, down, p_up).expect("parameters in range");
    ModelFamily::new(tree, vec![field], 0.0).expect("single model")
}

/// Normalised consistent price system: a random convex combination of
/// `vertices` optimal dual solutions for random objectives.
pub fn random_cps<R: Rng>(rng: &mut R, family: &ModelFamily, vertices: usize) -> Result<ConsistentPriceSystem, DualError> {
    let tree = family.tree();
    let mut z = vec![vec![0.0; tree.leaves().len()]; family.fields().len()];
    let mut m = vec![0.0; tree.len()];
    let weights = branch_probs(rng, vertices.max(1));
    for w in weights {
        let objective = ClaimFamily::from_fn(family, |_, _| rng.random_range(-1.0..1.0))?;
        let run = solve_dual(family, &objective, &SolveOptions::default())?;
        let cps = run.certificate.cps;
        for (acc, part) in z.iter_mut().zip(&cps.z_terminal) {
            for (a, v) in acc.iter_mut().zip(part) {
                *a += w * v;
            }
        }
        for (a, v) in m.iter_mut().zip(&cps.m) {
            *a += w * v;
        }
    }
    Ok(ConsistentPriceSystem::new(family, z, m))
}

/// Random corridor `lower <= upper`. Half the time the corridor is built
/// around a martingale and is feasible; otherwise one node's corridor is
/// shifted, which usually (not always) breaks feasibility.
pub fn random_corridor<R: Rng>(rng: &mut R, tree: &ScenarioTree) -> (Vec<f64>, Vec<f64>) {
    let mut m = vec![0.0; tree.len()];
    m[tree.root()] = rng.random_range(50.0..150.0);
    for n in 0..tree.len() {
        let children = tree.children(n);
        if children.is_empty() {
            continue;
        }
        let d: Vec<f64> = children.iter().map(|_| rng.random_range(-20.0..20.0)).collect();
        let mean: f64 = children.iter().zip(&d).map(|(&c, x)| tree.node(c).branch_prob * x).sum();
        for (&c, x) in children.iter().zip(&d) {
            m[c] = m[n] + x - mean;
        }
    }
    let width = rng.random_range(0.5..10.0);
    let mut lower: Vec<f64> = m.iter().map(|v| v - rng.random_range(0.0..width)).collect();
    let mut upper: Vec<f64> = m.iter().map(|v| v + rng.random_range(0.0..width)).collect();
    if rng.random_bool(0.5) {
        let n = rng.random_range(0..tree.len());
        let shift = rng.random_range(-6.0 * width..6.0 * width);
        lower[n] += shift;
        upper[n] += shift;
    }
    (lower, upper)
}
