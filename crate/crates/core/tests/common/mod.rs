//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use hedge_core::lp::{solve, LpBuilder, LpStatus, Relation, Sense};
use hedge_core::tree::{binary_tree, ClaimFamily, ModelFamily, PriceField, ScenarioTree};

/// One-step 120/80 tree, call struck at 100.
pub fn one_step(lambda: f64) -> (ModelFamily, ClaimFamily) {
    let tree = binary_tree(1, 0.5).unwrap();
    let field = PriceField::new(&tree, "theta", vec![100.0, 120.0, 80.0]).unwrap();
    let fam = ModelFamily::new(tree, vec![field], lambda).unwrap();
    let claims = ClaimFamily::payoff(&fam, |s| (s - 100.0).max(0.0)).unwrap();
    (fam, claims)
}

/// Two models on one step, frictionless, call struck at 100.
pub fn two_models() -> (ModelFamily, ClaimFamily) {
    let tree = binary_tree(1, 0.5).unwrap();
    let a = PriceField::new(&tree, "theta1", vec![100.0, 120.0, 80.0]).unwrap();
    let b = PriceField::new(&tree, "theta2", vec![100.0, 130.0, 90.0]).unwrap();
    let fam = ModelFamily::new(tree, vec![a, b], 0.0).unwrap();
    let claims = ClaimFamily::payoff(&fam, |s| (s - 100.0).max(0.0)).unwrap();
    (fam, claims)
}

/// Both successors sit above the root price.
pub fn sure_up(lambda: f64) -> ModelFamily {
    let tree = binary_tree(1, 0.5).unwrap();
    let field = PriceField::new(&tree, "a", vec![100.0, 130.0, 125.0]).unwrap();
    ModelFamily::new(tree, vec![field], lambda).unwrap()
}

/// Risk-neutral backward induction on a binary tree whose children end in
/// `u` / `d`, with the one-step measure `q = (S - S_d) / (S_u - S_d)`.
pub fn backward_induction(tree: &ScenarioTree, prices: &[f64], leaf_values: &[f64]) -> f64 {
    let mut v = vec![0.0; tree.len()];
    for (&l, &g) in tree.leaves().iter().zip(leaf_values) {
        v[l] = g;
    }
    let mut order: Vec<usize> = (0..tree.len()).collect();
    order.sort_by_key(|&n| std::cmp::Reverse(tree.node(n).t));
    for n in order {
        let children = tree.children(n);
        if children.is_empty() {
            continue;
        }
        let up = *children.iter().find(|&&c| tree.id(c).ends_with('u')).unwrap();
        let down = *children.iter().find(|&&c| tree.id(c).ends_with('d')).unwrap();
        let q = (prices[n] - prices[down]) / (prices[up] - prices[down]);
        v[n] = q * v[up] + (1.0 - q) * v[down];
    }
    v[tree.root()]
}

/// Feasibility of `lower <= M <= upper` with `M` a martingale, decided by
/// the LP solver.
pub fn sandwich_lp_feasible(tree: &ScenarioTree, lower: &[f64], upper: &[f64]) -> bool {
    let mut b = LpBuilder::new(Sense::Minimize);
    for n in 0..tree.len() {
        b.add_var(lower[n], upper[n], 0.0);
    }
    for n in 0..tree.len() {
        let children = tree.children(n);
        if children.is_empty() {
            continue;
        }
        let mut row = vec![(n, -1.0)];
        row.extend(children.iter().map(|&c| (c, tree.node(c).branch_prob)));
        b.add_row(Relation::Eq, 0.0, &row);
    }
    let sol = solve(&b.build().unwrap()).unwrap();
    sol.status == LpStatus::Optimal
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
