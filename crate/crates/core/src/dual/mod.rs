//! Consistent price systems in the robust sense.
//!
//! A system is a family of nonnegative terminal densities `Z^θ_T`, one per
//! model, together with a single martingale `M` that stays inside the
//! aggregated bid/ask corridor
//! `Σ_θ (1-λ) Z^θ_t S^θ_t <= M_t <= Σ_θ (1+λ) Z^θ_t S^θ_t` at every node,
//! where `Z^θ_t = E[Z^θ_T | F_t]`.

mod lp;
mod sandwich;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::LpError;
use crate::tree::{ClaimFamily, ModelFamily, ScenarioTree, TreeError};
use crate::wealth::{wealth_values, Strategy};

pub use lp::{build_dual, build_dual_with_layout, fit_positive_cps, solve_dual, DualCertificate, DualLayout, DualRun, PositiveCps};
pub use sandwich::{fit_sandwich_by_id, fit_sandwich_martingale, SandwichFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("lower bound {lower} exceeds upper bound {upper} at node {node:?}")]
    BoundsOutOfOrder { node: String, lower: f64, upper: f64 },
    #[error("part for model {theta:?} is not a consistent price system: {detail}")]
    InvalidPart { theta: String, detail: String },
    #[error("invalid pasting weights: {0}")]
    InvalidWeights(String),
    #[error("no consistent price system exists for this family")]
    NoConsistentPriceSystem,
    #[error("solver failure: {0}")]
    Solver(String),
}

/// Model and leaves `A` with `E[Z^θ_T 1_A] > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub model: usize,
    pub leaves: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistentPriceSystem {
    /// `z_terminal[model][leaf position]`, models in family order.
    pub z_terminal: Vec<Vec<f64>>,
    /// Martingale value per node.
    pub m: Vec<f64>,
    pub witness: Option<Witness>,
}

/// A consistent price system for one model on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleModelCps {
    pub z_terminal: Vec<f64>,
    pub m: Vec<f64>,
}

fn mass(tree: &ScenarioTree, z: &[f64]) -> f64 {
    tree.expectation(z)
}

impl ConsistentPriceSystem {
    /// Builds a system and picks its witness: the model with the largest
    /// total mass, restricted to the leaves where its density is positive.
    pub fn new(family: &ModelFamily, z_terminal: Vec<Vec<f64>>, m: Vec<f64>) -> Self {
        let witness = Self::pick_witness(family.tree(), &z_terminal);
        ConsistentPriceSystem { z_terminal, m, witness }
    }

    fn pick_witness(tree: &ScenarioTree, z: &[Vec<f64>]) -> Option<Witness> {
        let (model, best) = z
            .iter()
            .enumerate()
            .map(|(k, zk)| (k, mass(tree, zk)))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if !(best > 0.0) {
            return None;
        }
        let leaves = z[model]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(pos, _)| pos)
            .collect();
        Some(Witness { model, leaves })
    }

    /// `part` placed on model `k`, zero density elsewhere.
    pub fn embed(family: &ModelFamily, k: usize, part: &SingleModelCps) -> Self {
        let leaves = family.tree().leaves().len();
        let mut z = vec![vec![0.0; leaves]; family.fields().len()];
        z[k] = part.z_terminal.clone();
        Self::new(family, z, part.m.clone())
    }

    /// `Z^θ_t` at every node for model `k`.
    pub fn z_at(&self, tree: &ScenarioTree, k: usize) -> Vec<f64> {
        tree.conditional_expectation(&self.z_terminal[k])
    }

    /// `E[Σ_θ Z^θ_T]`.
    pub fn total_mass(&self, tree: &ScenarioTree) -> f64 {
        self.z_terminal.iter().map(|z| mass(tree, z)).sum()
    }

    /// Rescaled so that `E[Σ_θ Z^θ_T] = 1`.
    pub fn normalized(&self, tree: &ScenarioTree) -> Self {
        let c = self.total_mass(tree);
        assert!(c > 0.0, "cannot normalise a system without mass");
        ConsistentPriceSystem {
            z_terminal: self
                .z_terminal
                .iter()
                .map(|z| z.iter().map(|v| v / c).collect())
                .collect(),
            m: self.m.iter().map(|v| v / c).collect(),
            witness: self.witness.clone(),
        }
    }

    /// `E[Σ_θ Z^θ_T G^θ]`.
    pub fn price(&self, tree: &ScenarioTree, claims: &ClaimFamily) -> f64 {
        self.z_terminal
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let zg: Vec<f64> = z.iter().zip(claims.values(k)).map(|(a, b)| a * b).collect();
                tree.expectation(&zg)
            })
            .sum()
    }

    pub fn model_part(&self, k: usize) -> SingleModelCps {
        SingleModelCps {
            z_terminal: self.z_terminal[k].clone(),
            m: self.m.clone(),
        }
    }

    pub fn to_value(&self, family: &ModelFamily) -> serde_json::Value {
        let tree = family.tree();
        let z = family
            .fields()
            .iter()
            .zip(&self.z_terminal)
            .map(|(f, zk)| {
                let leaves = tree
                    .leaves()
                    .iter()
                    .zip(zk)
                    .map(|(&l, v)| (tree.id(l).to_string(), *v))
                    .collect();
                (f.theta.clone(), leaves)
            })
            .collect();
        let m = (0..tree.len()).map(|n| (tree.id(n).to_string(), self.m[n])).collect();
        let witness = self.witness.as_ref().map(|w| WitnessDoc {
            theta: family.fields()[w.model].theta.clone(),
            leaves: w.leaves.iter().map(|&p| tree.id(tree.leaves()[p]).to_string()).collect(),
        });
        serde_json::to_value(CpsDoc { z, m, witness }).expect("cps serialises")
    }

    /// Parses the JSON form. Models missing from `"z"` get zero density; a
    /// missing witness is recomputed.
    pub fn from_value(family: &ModelFamily, value: &serde_json::Value) -> Result<Self, DualError> {
        let doc: CpsDoc = serde_json::from_value(value.clone())
            .map_err(|e| TreeError::SchemaError(e.to_string()))?;
        let tree = family.tree();
        let mut z = vec![vec![0.0; tree.leaves().len()]; family.fields().len()];
        for (theta, leaves) in &doc.z {
            let k = family.model_index(theta)?;
            for (id, v) in leaves {
                let n = tree.lookup(id)?;
                let pos = tree.leaf_position(n).ok_or_else(|| {
                    TreeError::InvariantViolation(format!("density for {theta:?} names non-leaf {id:?}"))
                })?;
                z[k][pos] = *v;
            }
        }
        for id in doc.m.keys() {
            tree.lookup(id)?;
        }
        let m = tree
            .nodes()
            .iter()
            .map(|n| {
                doc.m.get(&n.id).copied().ok_or_else(|| {
                    DualError::Tree(TreeError::InvariantViolation(format!("m missing for node {:?}", n.id)))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let witness = match doc.witness {
            None => Self::pick_witness(tree, &z),
            Some(w) => {
                let model = family.model_index(&w.theta)?;
                let leaves = w
                    .leaves
                    .iter()
                    .map(|id| {
                        let n = tree.lookup(id)?;
                        tree.leaf_position(n).ok_or_else(|| {
                            TreeError::InvariantViolation(format!("witness names non-leaf {id:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(Witness { model, leaves })
            }
        };
        Ok(ConsistentPriceSystem { z_terminal: z, m, witness })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WitnessDoc {
    theta: String,
    leaves: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CpsDoc {
    z: BTreeMap<String, BTreeMap<String, f64>>,
    m: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    witness: Option<WitnessDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { detail: String },
    NegativeDensity { theta: String, leaf: String, value: f64 },
    MissingWitness,
    WitnessNotPositive { theta: String, mass: f64 },
    Tower { theta: String, node: String, defect: f64 },
    Sandwich { node: String, side: Side, m: f64, bound: f64 },
    Martingale { node: String, defect: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { detail } => write!(f, "shape: {detail}"),
            Violation::NegativeDensity { theta, leaf, value } => {
                write!(f, "density of {theta:?} at leaf {leaf:?} is {value}")
            }
            Violation::MissingWitness => write!(f, "no model carries positive mass"),
            Violation::WitnessNotPositive { theta, mass } => {
                write!(f, "witness for {theta:?} has mass {mass}")
            }
            Violation::Tower { theta, node, defect } => {
                write!(f, "density of {theta:?} at {node:?} off its conditional mean by {defect}")
            }
            Violation::Sandwich { node, side, m, bound } => {
                let word = if *side == Side::Lower { "below bid" } else { "above ask" };
                write!(f, "m({node}) = {m} is {word} {bound}")
            }
            Violation::Martingale { node, defect } => {
                write!(f, "martingale condition fails at {node:?} by {defect}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CpsReport {
    pub violations: Vec<Violation>,
}

impl CpsReport {
    pub fn valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn scaled(tol: f64, x: f64) -> f64 {
    tol * x.abs().max(1.0)
}

/// Nonnegativity, tower, corridor and martingale checks shared by robust
/// and single-model systems. `models` pairs model indices with densities.
fn check_corridor(
    family: &ModelFamily,
    models: &[(usize, &[f64])],
    m: &[f64],
    tol: f64,
    out: &mut Vec<Violation>,
) {
    let tree = family.tree();
    let lam = family.lambda();
    let mut bid = vec![0.0; tree.len()];
    let mut ask = vec![0.0; tree.len()];
    for &(k, z) in models {
        let theta = &family.fields()[k].theta;
        for (pos, &v) in z.iter().enumerate() {
            if !(v >= 0.0) {
                out.push(Violation::NegativeDensity {
                    theta: theta.clone(),
                    leaf: tree.id(tree.leaves()[pos]).to_string(),
                    value: v,
                });
            }
        }
        let zt = tree.conditional_expectation(z);
        for n in 0..tree.len() {
            let defect = tree.martingale_defect(&zt, n);
            if defect.abs() > scaled(tol, zt[n]) {
                out.push(Violation::Tower {
                    theta: theta.clone(),
                    node: tree.id(n).to_string(),
                    defect,
                });
            }
            let s = family.fields()[k].at(n);
            bid[n] += (1.0 - lam) * zt[n] * s;
            ask[n] += (1.0 + lam) * zt[n] * s;
        }
    }
    for n in 0..tree.len() {
        if m[n] < bid[n] - scaled(tol, bid[n]) {
            out.push(Violation::Sandwich {
                node: tree.id(n).to_string(),
                side: Side::Lower,
                m: m[n],
                bound: bid[n],
            });
        }
        if m[n] > ask[n] + scaled(tol, ask[n]) {
            out.push(Violation::Sandwich {
                node: tree.id(n).to_string(),
                side: Side::Upper,
                m: m[n],
                bound: ask[n],
            });
        }
        let defect = tree.martingale_defect(m, n);
        if defect.abs() > scaled(tol, m[n]) {
            out.push(Violation::Martingale {
                node: tree.id(n).to_string(),
                defect,
            });
        }
    }
}

/// Checks every defining condition of a robust consistent price system and
/// reports each failure with the node and model it concerns. Comparisons
/// allow `tol` relative to the magnitude of the compared values (absolute
/// below 1).
pub fn validate_cps(family: &ModelFamily, cps: &ConsistentPriceSystem, tol: f64) -> CpsReport {
    let tree = family.tree();
    let mut violations = Vec::new();
    let shape_ok = cps.z_terminal.len() == family.fields().len()
        && cps.z_terminal.iter().all(|z| z.len() == tree.leaves().len())
        && cps.m.len() == tree.len();
    if !shape_ok {
        violations.push(Violation::Shape {
            detail: "density or martingale does not match the family".into(),
        });
        return CpsReport { violations };
    }
    match &cps.witness {
        None => violations.push(Violation::MissingWitness),
        Some(w) => {
            let mass: f64 = w
                .leaves
                .iter()
                .map(|&p| tree.prob(tree.leaves()[p]) * cps.z_terminal[w.model][p])
                .sum();
            if !(mass > 0.0) {
                violations.push(Violation::WitnessNotPositive {
                    theta: family.fields()[w.model].theta.clone(),
                    mass,
                });
            }
        }
    }
    let models: Vec<(usize, &[f64])> = cps.z_terminal.iter().map(|z| z.as_slice()).enumerate().collect();
    check_corridor(family, &models, &cps.m, tol, &mut violations);
    CpsReport { violations }
}

/// Validates a single-model system against model `k`'s own corridor.
pub fn validate_single(family: &ModelFamily, k: usize, part: &SingleModelCps, tol: f64) -> CpsReport {
    let tree = family.tree();
    let mut violations = Vec::new();
    if part.z_terminal.len() != tree.leaves().len() || part.m.len() != tree.len() {
        violations.push(Violation::Shape {
            detail: "density or martingale does not match the tree".into(),
        });
        return CpsReport { violations };
    }
    check_corridor(family, &[(k, &part.z_terminal)], &part.m, tol, &mut violations);
    CpsReport { violations }
}

/// Pastes single-model systems into a robust one:
/// `Z^θ = w_θ Z^θ_part` and `M = Σ_θ w_θ M^θ_part`.
///
/// Models without a part get zero density. Weights must be nonnegative and
/// sum to one, and every part must be valid for its own model.
pub fn paste_cps(
    family: &ModelFamily,
    parts: &HashMap<String, SingleModelCps>,
    weights: &HashMap<String, f64>,
    tol: f64,
) -> Result<ConsistentPriceSystem, DualError> {
    let tree = family.tree();
    if parts.len() != weights.len() || parts.keys().any(|t| !weights.contains_key(t)) {
        return Err(DualError::InvalidWeights("weights and parts name different models".into()));
    }
    let mut total = 0.0;
    for (theta, &w) in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(DualError::InvalidWeights(format!("weight {w} for {theta:?}")));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(DualError::InvalidWeights(format!("weights sum to {total}")));
    }
    let mut z = vec![vec![0.0; tree.leaves().len()]; family.fields().len()];
    let mut m = vec![0.0; tree.len()];
    for (theta, part) in parts {
        let k = family.model_index(theta)?;
        let report = validate_single(family, k, part, tol);
        if let Some(v) = report.violations.first() {
            return Err(DualError::InvalidPart {
                theta: theta.clone(),
                detail: v.to_string(),
            });
        }
        let w = weights[theta];
        z[k] = part.z_terminal.iter().map(|v| w * v).collect();
        for (acc, v) in m.iter_mut().zip(&part.m) {
            *acc += w * v;
        }
    }
    Ok(ConsistentPriceSystem::new(family, z, m))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakDualityReport {
    /// `E[Σ_θ Z^θ_T W⁰_T(θ)]`, never positive for a valid system.
    pub expected_terminal_wealth: f64,
    /// `E[Σ_θ Z^θ_T G^θ]`.
    pub dual_value: f64,
    /// `E[Σ_θ Z^θ_T]`.
    pub mass: f64,
    /// Whether `W^z_T >= G` holds (to `tol`) at every model and leaf.
    pub superhedges: bool,
    /// `z · mass - dual_value`.
    pub gap: f64,
    pub holds: bool,
}

/// Evaluates both sides of the weak-duality inequality for one strategy
/// and one system.
pub fn weak_duality_check(
    family: &ModelFamily,
    claims: &ClaimFamily,
    strategy: &Strategy,
    z: f64,
    cps: &ConsistentPriceSystem,
    tol: f64,
) -> WeakDualityReport {
    let tree = family.tree();
    let mut zw = 0.0;
    let mut superhedges = true;
    for k in 0..family.fields().len() {
        let w0 = wealth_values(family, strategy, 0.0, k);
        let terminal: Vec<f64> = tree.leaves().iter().map(|&l| w0[l]).collect();
        let prod: Vec<f64> = terminal.iter().zip(&cps.z_terminal[k]).map(|(a, b)| a * b).collect();
        zw += tree.expectation(&prod);
        superhedges &= terminal
            .iter()
            .zip(claims.values(k))
            .all(|(w, g)| z + w >= g - scaled(tol, *g));
    }
    let mass = cps.total_mass(tree);
    let dual_value = cps.price(tree, claims);
    let gap = z * mass - dual_value;
    let holds = zw <= tol && (!superhedges || gap >= -scaled(tol, dual_value));
    WeakDualityReport {
        expected_terminal_wealth: zw,
        dual_value,
        mass,
        superhedges,
        gap,
        holds,
    }
}
