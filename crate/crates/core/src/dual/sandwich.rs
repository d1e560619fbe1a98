//! Martingales squeezed between two adapted processes.

use std::collections::BTreeMap;

use super::DualError;
use crate::tree::{ScenarioTree, TreeError};

/// Outcome of [`fit_sandwich_martingale`].
#[derive(Debug, Clone, PartialEq)]
pub enum SandwichFit {
    /// Martingale values per node, inside the corridor.
    Martingale(Vec<f64>),
    /// No martingale fits: at `node` the children's reachable conditional
    /// means `[lo, hi]` miss the node's own corridor.
    Infeasible { node: usize, lo: f64, hi: f64 },
}

impl SandwichFit {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SandwichFit::Martingale(_))
    }
}

/// Finds a martingale `m` with `lower <= m <= upper` at every node.
///
/// The backward pass computes, for each node, the interval of values a
/// martingale inside the corridor can take there. The forward pass starts
/// at the midpoint of the root interval and places each node's children at
/// the same relative position inside their own intervals, which makes the
/// conditional mean come out exactly right.
pub fn fit_sandwich_martingale(
    tree: &ScenarioTree,
    lower: &[f64],
    upper: &[f64],
) -> Result<SandwichFit, DualError> {
    if lower.len() != tree.len() || upper.len() != tree.len() {
        return Err(DualError::Tree(TreeError::InvariantViolation(format!(
            "corridor has {}/{} values, tree has {} nodes",
            lower.len(),
            upper.len(),
            tree.len()
        ))));
    }
    for n in 0..tree.len() {
        if !(lower[n] <= upper[n]) {
            return Err(DualError::BoundsOutOfOrder {
                node: tree.id(n).to_string(),
                lower: lower[n],
                upper: upper[n],
            });
        }
    }

    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    for n in (0..tree.len()).rev() {
        if tree.is_leaf(n) {
            continue;
        }
        let (mut reach_lo, mut reach_hi) = (0.0, 0.0);
        for &c in tree.children(n) {
            let p = tree.node(c).branch_prob;
            reach_lo += p * lo[c];
            reach_hi += p * hi[c];
        }
        let a = reach_lo.max(lower[n]);
        let b = reach_hi.min(upper[n]);
        if a > b {
            let slack = 1e-12 * a.abs().max(b.abs()).max(1.0);
            if a - b > slack {
                return Ok(SandwichFit::Infeasible {
                    node: n,
                    lo: reach_lo,
                    hi: reach_hi,
                });
            }
            let mid = 0.5 * (a + b);
            lo[n] = mid;
            hi[n] = mid;
        } else {
            lo[n] = a;
            hi[n] = b;
        }
    }

    let mut m = vec![0.0; tree.len()];
    m[tree.root()] = 0.5 * (lo[tree.root()] + hi[tree.root()]);
    for n in 0..tree.len() {
        let children = tree.children(n);
        if children.is_empty() {
            continue;
        }
        let (mut l, mut u) = (0.0, 0.0);
        for &c in children {
            let p = tree.node(c).branch_prob;
            l += p * lo[c];
            u += p * hi[c];
        }
        let t = if u > l { ((m[n] - l) / (u - l)).clamp(0.0, 1.0) } else { 0.0 };
        for &c in children {
            m[c] = lo[c] + t * (hi[c] - lo[c]);
        }
    }
    Ok(SandwichFit::Martingale(m))
}

/// [`fit_sandwich_martingale`] with the corridor keyed by node id. Every
/// node must appear in both maps.
pub fn fit_sandwich_by_id(
    tree: &ScenarioTree,
    lower: &BTreeMap<String, f64>,
    upper: &BTreeMap<String, f64>,
) -> Result<SandwichFit, DualError> {
    let collect = |map: &BTreeMap<String, f64>, which: &str| -> Result<Vec<f64>, DualError> {
        for id in map.keys() {
            tree.lookup(id)?;
        }
        tree.nodes()
            .iter()
            .map(|n| {
                map.get(&n.id).copied().ok_or_else(|| {
                    DualError::Tree(TreeError::InvariantViolation(format!(
                        "{which} bound missing for node {:?}",
                        n.id
                    )))
                })
            })
            .collect()
    };
    fit_sandwich_martingale(tree, &collect(lower, "lower")?, &collect(upper, "upper")?)
}
