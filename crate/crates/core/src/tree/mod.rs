//! Finite scenario trees and the price models that live on them.
//!
//! A [`ScenarioTree`] encodes a filtered probability space: nodes at depth
//! `t` are the atoms of the time-`t` sigma-algebra and branch probabilities
//! define the reference measure. Every model in a [`ModelFamily`] labels the
//! *same* tree with its own positive prices, so all models share one
//! stochastic basis.

mod build;
mod json;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

pub use build::{build_binomial, build_kernel_model, binary_tree, Kernel, Transform};
pub use json::{load_document, load_family, save_family, FamilyDocument};

/// Tolerance on the sum of a node's child branch probabilities.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("non-positive price {value} at node {node}")]
    NonPositivePrice { node: String, value: f64 },
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("claim for model {theta:?} does not cover leaf {leaf:?}")]
    CoverageError { theta: String, leaf: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub parent: Option<String>,
    pub t: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub parent: Option<usize>,
    pub t: usize,
    /// Conditional probability of reaching this node from its parent.
    pub branch_prob: f64,
}

/// Rooted event tree with branch probabilities.
///
/// Nodes are stored in breadth-first order, so parents precede children and
/// the leaves below any node occupy a contiguous slice of [`Self::leaves`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    horizon: usize,
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
    leaves: Vec<usize>,
    leaf_pos: Vec<Option<usize>>,
    leaf_range: Vec<(usize, usize)>,
    prob: Vec<f64>,
}

impl ScenarioTree {
    pub fn new(horizon: usize, specs: Vec<NodeSpec>) -> Result<Self, TreeError> {
        let bad = |msg: String| Err(TreeError::InvariantViolation(msg));
        if horizon < 1 {
            return bad(format!("horizon must be at least 1, got {horizon}"));
        }
        let mut by_id: HashMap<&str, usize> = HashMap::new();
        for (k, s) in specs.iter().enumerate() {
            if by_id.insert(s.id.as_str(), k).is_some() {
                return bad(format!("duplicate node id {:?}", s.id));
            }
        }
        let roots: Vec<usize> = (0..specs.len()).filter(|&k| specs[k].parent.is_none()).collect();
        if roots.len() != 1 {
            return bad(format!("expected exactly one root, found {}", roots.len()));
        }
        let root = roots[0];
        if specs[root].t != 0 {
            return bad(format!("root {:?} has t = {}, expected 0", specs[root].id, specs[root].t));
        }
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
        for (k, s) in specs.iter().enumerate() {
            if !(s.p > 0.0 && s.p <= 1.0) {
                return bad(format!("node {:?} has branch probability {} outside (0, 1]", s.id, s.p));
            }
            if let Some(parent) = &s.parent {
                let Some(&pk) = by_id.get(parent.as_str()) else {
                    return bad(format!("node {:?} references unknown parent {parent:?}", s.id));
                };
                if specs[pk].t + 1 != s.t {
                    return bad(format!(
                        "node {:?} has t = {} but its parent {parent:?} has t = {}",
                        s.id, s.t, specs[pk].t
                    ));
                }
                kids[pk].push(k);
            }
        }

        // Breadth-first renumbering.
        let mut order = vec![root];
        let mut head = 0;
        while head < order.len() {
            let k = order[head];
            order.extend(kids[k].iter().copied());
            head += 1;
        }
        if order.len() != specs.len() {
            return bad("some nodes are not reachable from the root".into());
        }
        let mut new_of = vec![0usize; specs.len()];
        for (new, &old) in order.iter().enumerate() {
            new_of[old] = new;
        }
        let mut nodes = Vec::with_capacity(specs.len());
        let mut children = vec![Vec::new(); specs.len()];
        for &old in &order {
            let s = &specs[old];
            let parent = s.parent.as_ref().map(|p| new_of[by_id[p.as_str()]]);
            nodes.push(Node {
                id: s.id.clone(),
                parent,
                t: s.t,
                branch_prob: s.p,
            });
            children[new_of[old]] = kids[old].iter().map(|&c| new_of[c]).collect();
        }

        for (n, node) in nodes.iter().enumerate() {
            if children[n].is_empty() {
                if node.t != horizon {
                    return bad(format!(
                        "leaf {:?} has t = {}, expected horizon {horizon}",
                        node.id, node.t
                    ));
                }
            } else {
                let sum: f64 = children[n].iter().map(|&c| nodes[c].branch_prob).sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return bad(format!(
                        "children of node {:?} have probabilities summing to {sum}",
                        node.id
                    ));
                }
            }
        }
        if nodes[0].branch_prob != 1.0 {
            // root probability is irrelevant; normalise it
            nodes[0].branch_prob = 1.0;
        }

        let mut prob = vec![1.0; nodes.len()];
        for n in 1..nodes.len() {
            prob[n] = prob[nodes[n].parent.unwrap()] * nodes[n].branch_prob;
        }
        let leaves: Vec<usize> = (0..nodes.len()).filter(|&n| children[n].is_empty()).collect();
        let mut leaf_pos = vec![None; nodes.len()];
        for (k, &l) in leaves.iter().enumerate() {
            leaf_pos[l] = Some(k);
        }
        let mut leaf_range = vec![(usize::MAX, 0); nodes.len()];
        for n in (0..nodes.len()).rev() {
            if let Some(k) = leaf_pos[n] {
                leaf_range[n] = (k, k + 1);
            }
            if let Some(p) = nodes[n].parent {
                let (lo, hi) = leaf_range[n];
                let r = &mut leaf_range[p];
                r.0 = r.0.min(lo);
                r.1 = r.1.max(hi);
            }
        }
        let index = nodes.iter().enumerate().map(|(k, n)| (n.id.clone(), k)).collect();
        Ok(ScenarioTree {
            horizon,
            nodes,
            children,
            index,
            leaves,
            leaf_pos,
            leaf_range,
            prob,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn root(&self) -> usize {
        0
    }
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
    pub fn node(&self, n: usize) -> &Node {
        &self.nodes[n]
    }
    pub fn id(&self, n: usize) -> &str {
        &self.nodes[n].id
    }
    pub fn parent(&self, n: usize) -> Option<usize> {
        self.nodes[n].parent
    }
    pub fn children(&self, n: usize) -> &[usize] {
        &self.children[n]
    }
    pub fn is_leaf(&self, n: usize) -> bool {
        self.children[n].is_empty()
    }
    /// Leaf node indices, in tree order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }
    pub fn leaf_position(&self, n: usize) -> Option<usize> {
        self.leaf_pos[n]
    }
    /// Positions (into [`Self::leaves`]) of the leaves below `n`.
    pub fn leaf_range(&self, n: usize) -> std::ops::Range<usize> {
        let (lo, hi) = self.leaf_range[n];
        lo..hi
    }
    /// Unconditional probability of node `n`.
    pub fn prob(&self, n: usize) -> f64 {
        self.prob[n]
    }
    pub fn lookup(&self, id: &str) -> Result<usize, TreeError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| TreeError::UnknownNode(id.to_string()))
    }

    /// Node indices from the root down to `n`, inclusive.
    pub fn path(&self, n: usize) -> Vec<usize> {
        let mut path = vec![n];
        let mut cur = n;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Ancestor of `n` at depth `t` (`n` itself when `t` equals its depth).
    pub fn ancestor_at(&self, mut n: usize, t: usize) -> usize {
        assert!(t <= self.nodes[n].t, "depth {t} is below node {}", self.nodes[n].id);
        while self.nodes[n].t > t {
            n = self.nodes[n].parent.unwrap();
        }
        n
    }

    /// `E[X | node]` for every node, where `X` is given by its leaf values.
    pub fn conditional_expectation(&self, leaf_values: &[f64]) -> Vec<f64> {
        assert_eq!(leaf_values.len(), self.leaves.len());
        let mut out = vec![0.0; self.nodes.len()];
        for n in (0..self.nodes.len()).rev() {
            out[n] = match self.leaf_pos[n] {
                Some(k) => leaf_values[k],
                None => self.children[n]
                    .iter()
                    .map(|&c| self.nodes[c].branch_prob * out[c])
                    .sum(),
            };
        }
        out
    }

    /// Evaluates a depth-`t` measurable quantity, given per node, at every
    /// leaf.
    pub fn lift_to_leaves(&self, node_values: &[f64], t: usize) -> Vec<f64> {
        self.leaves
            .iter()
            .map(|&l| node_values[self.ancestor_at(l, t)])
            .collect()
    }

    /// `E[X]` under the reference measure.
    pub fn expectation(&self, leaf_values: &[f64]) -> f64 {
        self.leaves
            .iter()
            .zip(leaf_values)
            .map(|(&l, v)| self.prob[l] * v)
            .sum()
    }

    /// Checks that a depth-`t` node's conditional mean of `values` over its
    /// children matches its own value: `values[n] = Σ p(c|n) values[c]`.
    pub fn martingale_defect(&self, values: &[f64], n: usize) -> f64 {
        if self.is_leaf(n) {
            return 0.0;
        }
        let mean: f64 = self.children[n]
            .iter()
            .map(|&c| self.nodes[c].branch_prob * values[c])
            .sum();
        values[n] - mean
    }
}

/// Positive prices of one model at every tree node.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceField {
    pub theta: String,
    prices: Vec<f64>,
}

impl PriceField {
    pub fn new(tree: &ScenarioTree, theta: impl Into<String>, prices: Vec<f64>) -> Result<Self, TreeError> {
        if prices.len() != tree.len() {
            return Err(TreeError::InvariantViolation(format!(
                "{} prices for {} nodes",
                prices.len(),
                tree.len()
            )));
        }
        for (n, &s) in prices.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(TreeError::NonPositivePrice {
                    node: tree.id(n).to_string(),
                    value: s,
                });
            }
        }
        Ok(PriceField {
            theta: theta.into(),
            prices,
        })
    }

    pub fn renamed(mut self, theta: impl Into<String>) -> Self {
        self.theta = theta.into();
        self
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn at(&self, n: usize) -> f64 {
        self.prices[n]
    }
}

/// A set of price models on one shared tree with a common proportional
/// transaction cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFamily {
    tree: ScenarioTree,
    fields: Vec<PriceField>,
    lambda: f64,
}

impl ModelFamily {
    /// `lambda` must lie in `[0, 1)`; zero is admitted for frictionless
    /// reference computations.
    pub fn new(tree: ScenarioTree, fields: Vec<PriceField>, lambda: f64) -> Result<Self, TreeError> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(TreeError::InvariantViolation(format!(
                "transaction cost {lambda} outside [0, 1)"
            )));
        }
        if fields.is_empty() {
            return Err(TreeError::InvariantViolation("family has no models".into()));
        }
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.theta.as_str()) {
                return Err(TreeError::InvariantViolation(format!(
                    "duplicate model id {:?}",
                    f.theta
                )));
            }
            if f.prices.len() != tree.len() {
                return Err(TreeError::InvariantViolation(format!(
                    "model {:?} prices {} nodes, tree has {}",
                    f.theta,
                    f.prices.len(),
                    tree.len()
                )));
            }
        }
        Ok(ModelFamily {
            tree,
            fields,
            lambda,
        })
    }

    pub fn tree(&self) -> &ScenarioTree {
        &self.tree
    }
    pub fn fields(&self) -> &[PriceField] {
        &self.fields
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn is_frictionless(&self) -> bool {
        self.lambda == 0.0
    }
    pub fn thetas(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.theta.as_str())
    }

    pub fn model_index(&self, theta: &str) -> Result<usize, TreeError> {
        self.fields
            .iter()
            .position(|f| f.theta == theta)
            .ok_or_else(|| TreeError::UnknownModel(theta.to_string()))
    }

    pub fn model(&self, theta: &str) -> Result<&PriceField, TreeError> {
        self.model_index(theta).map(|k| &self.fields[k])
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, TreeError> {
        ModelFamily::new(self.tree.clone(), self.fields.clone(), lambda)
    }

    /// Sub-family on the listed models, in the given order.
    pub fn restrict(&self, thetas: &[&str]) -> Result<Self, TreeError> {
        let fields = thetas
            .iter()
            .map(|t| self.model(t).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        ModelFamily::new(self.tree.clone(), fields, self.lambda)
    }
}

/// Terminal claim values, one per (model, leaf).
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimFamily {
    thetas: Vec<String>,
    // [model][leaf position]
    values: Vec<Vec<f64>>,
}

impl ClaimFamily {
    /// Builds claims covering `family`, evaluating `f(model_index, leaf_node)`.
    pub fn from_fn(family: &ModelFamily, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, TreeError> {
        let tree = family.tree();
        let values: Vec<Vec<f64>> = (0..family.fields().len())
            .map(|k| tree.leaves().iter().map(|&l| f(k, l)).collect())
            .collect();
        Self::from_values(family, values)
    }

    /// The same payoff function of the terminal price under every model.
    pub fn payoff(family: &ModelFamily, g: impl Fn(f64) -> f64) -> Result<Self, TreeError> {
        Self::from_fn(family, |k, l| g(family.fields()[k].at(l)))
    }

    /// `values[model][leaf position]`, models in family order.
    pub fn from_values(family: &ModelFamily, values: Vec<Vec<f64>>) -> Result<Self, TreeError> {
        let tree = family.tree();
        if values.len() != family.fields().len() {
            return Err(TreeError::InvariantViolation(format!(
                "claims given for {} models, family has {}",
                values.len(),
                family.fields().len()
            )));
        }
        for (k, row) in values.iter().enumerate() {
            let theta = &family.fields()[k].theta;
            if row.len() != tree.leaves().len() {
                let leaf = tree.leaves().get(row.len()).map(|&l| tree.id(l)).unwrap_or("?");
                return Err(TreeError::CoverageError {
                    theta: theta.clone(),
                    leaf: leaf.to_string(),
                });
            }
            if let Some(pos) = row.iter().position(|v| !v.is_finite()) {
                return Err(TreeError::InvariantViolation(format!(
                    "claim for model {theta:?} at leaf {:?} is not finite",
                    tree.id(tree.leaves()[pos])
                )));
            }
        }
        Ok(ClaimFamily {
            thetas: family.fields().iter().map(|f| f.theta.clone()).collect(),
            values,
        })
    }

    /// Builds from id-keyed maps, reporting the first uncovered (model, leaf).
    pub fn from_maps(
        family: &ModelFamily,
        maps: &HashMap<String, HashMap<String, f64>>,
    ) -> Result<Self, TreeError> {
        let tree = family.tree();
        for theta in maps.keys() {
            family.model_index(theta)?;
        }
        let mut values = Vec::new();
        for field in family.fields() {
            let map = maps.get(&field.theta);
            let mut row = Vec::with_capacity(tree.leaves().len());
            for &l in tree.leaves() {
                match map.and_then(|m| m.get(tree.id(l))) {
                    Some(&v) => row.push(v),
                    None => {
                        return Err(TreeError::CoverageError {
                            theta: field.theta.clone(),
                            leaf: tree.id(l).to_string(),
                        })
                    }
                }
            }
            if let Some(map) = map {
                let stray = map
                    .keys()
                    .find(|id| tree.lookup(id).map_or(true, |n| !tree.is_leaf(n)));
                if let Some(id) = stray {
                    return Err(TreeError::InvariantViolation(format!(
                        "claim for model {:?} names {id:?}, which is not a leaf",
                        field.theta
                    )));
                }
            }
            values.push(row);
        }
        Self::from_values(family, values)
    }

    pub fn thetas(&self) -> &[String] {
        &self.thetas
    }

    /// Leaf values of model `k`, in leaf order.
    pub fn values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().flatten().all(|&v| v >= 0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks that these claims were built for `family`'s models.
    pub fn check_covers(&self, family: &ModelFamily) -> Result<(), TreeError> {
        for (k, field) in family.fields().iter().enumerate() {
            let Some(j) = self.thetas.iter().position(|t| *t == field.theta) else {
                let leaf = family.tree().id(family.tree().leaves()[0]).to_string();
                return Err(TreeError::CoverageError {
                    theta: field.theta.clone(),
                    leaf,
                });
            };
            if j != k || self.values[j].len() != family.tree().leaves().len() {
                return Err(TreeError::InvariantViolation(format!(
                    "claims are not aligned with model {:?}",
                    field.theta
                )));
            }
        }
        Ok(())
    }

    /// Claims restricted to `thetas`, matching [`ModelFamily::restrict`].
    pub fn restrict(&self, thetas: &[&str]) -> Result<Self, TreeError> {
        let mut names = Vec::new();
        let mut values = Vec::new();
        for t in thetas {
            let k = self
                .thetas
                .iter()
                .position(|x| x == t)
                .ok_or_else(|| TreeError::UnknownModel(t.to_string()))?;
            names.push(self.thetas[k].clone());
            values.push(self.values[k].clone());
        }
        Ok(ClaimFamily {
            thetas: names,
            values,
        })
    }

    /// `c * G + shift`, applied to every value.
    pub fn affine(&self, c: f64, shift: f64) -> Self {
        ClaimFamily {
            thetas: self.thetas.clone(),
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| c * v + shift).collect())
                .collect(),
        }
    }
}
