//! The dual pricing program and the positive-density feasibility program.

use super::{fit_sandwich_martingale, validate_single, ConsistentPriceSystem, DualError, SandwichFit, SingleModelCps};
use crate::lp::{solve_with, LpBuilder, LpProblem, LpSolution, LpStatus, Relation, Sense, SolveOptions, TOL_FEAS};
use crate::tree::{ClaimFamily, ModelFamily};

/// Column and row positions of [`build_dual`].
///
/// Columns: `y^θ(ℓ) = P(ℓ) Z^θ_T(ℓ)` for every model and leaf, then `m(n)`
/// for every node. Rows: the normalisation, one martingale row per internal
/// node, then a bid row and an ask row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct DualLayout {
    models: usize,
    leaves: usize,
    nodes: usize,
    internal: Vec<usize>,
}

impl DualLayout {
    fn new(family: &ModelFamily) -> Self {
        let tree = family.tree();
        DualLayout {
            models: family.fields().len(),
            leaves: tree.leaves().len(),
            nodes: tree.len(),
            internal: (0..tree.len()).filter(|&n| !tree.is_leaf(n)).collect(),
        }
    }
    pub fn y(&self, k: usize, leaf_pos: usize) -> usize {
        k * self.leaves + leaf_pos
    }
    pub fn m(&self, n: usize) -> usize {
        self.models * self.leaves + n
    }
    pub fn num_vars(&self) -> usize {
        self.models * self.leaves + self.nodes
    }
    pub fn normalization_row(&self) -> usize {
        0
    }
    pub fn martingale_rows(&self) -> std::ops::Range<usize> {
        1..1 + self.internal.len()
    }
    pub fn bid_row(&self, n: usize) -> usize {
        1 + self.internal.len() + 2 * n
    }
    pub fn ask_row(&self, n: usize) -> usize {
        self.bid_row(n) + 1
    }

    /// Splits a solution vector into densities per model and `m` per node.
    pub fn decode(&self, family: &ModelFamily, x: &[f64]) -> ConsistentPriceSystem {
        let tree = family.tree();
        let z = (0..self.models)
            .map(|k| {
                tree.leaves()
                    .iter()
                    .enumerate()
                    .map(|(pos, &l)| {
                        let y = x[self.y(k, pos)];
                        // Round-off below zero is not a real negative density.
                        let y = if y < 0.0 && y > -TOL_FEAS { 0.0 } else { y };
                        y / tree.prob(l)
                    })
                    .collect()
            })
            .collect();
        let m = (0..self.nodes).map(|n| x[self.m(n)]).collect();
        ConsistentPriceSystem::new(family, z, m)
    }

    /// Inverse of [`Self::decode`].
    pub fn encode(&self, family: &ModelFamily, cps: &ConsistentPriceSystem) -> Vec<f64> {
        let tree = family.tree();
        let mut x = vec![0.0; self.num_vars()];
        for k in 0..self.models {
            for (pos, &l) in tree.leaves().iter().enumerate() {
                x[self.y(k, pos)] = tree.prob(l) * cps.z_terminal[k][pos];
            }
        }
        for n in 0..self.nodes {
            x[self.m(n)] = cps.m[n];
        }
        x
    }
}

/// Adds the martingale and corridor rows for the models in `models`, with
/// `y` columns given by `ycol(k, leaf_pos)` and `m` columns by `mcol(n)`.
fn corridor_rows(
    b: &mut LpBuilder,
    family: &ModelFamily,
    models: &[usize],
    ycol: impl Fn(usize, usize) -> usize,
    mcol: impl Fn(usize) -> usize,
) {
    let tree = family.tree();
    let lam = family.lambda();
    for n in 0..tree.len() {
        if tree.is_leaf(n) {
            continue;
        }
        let mut row = vec![(mcol(n), 1.0)];
        for &c in tree.children(n) {
            row.push((mcol(c), -tree.node(c).branch_prob));
        }
        b.add_row(Relation::Eq, 0.0, &row);
    }
    for n in 0..tree.len() {
        for (factor, relation) in [(1.0 - lam, Relation::Le), (1.0 + lam, Relation::Ge)] {
            let mut row = Vec::new();
            for &k in models {
                let s = family.fields()[k].at(n);
                for pos in tree.leaf_range(n) {
                    row.push((ycol(k, pos), factor * s));
                }
            }
            row.push((mcol(n), -tree.prob(n)));
            b.add_row(relation, 0.0, &row);
        }
    }
}

pub fn build_dual(family: &ModelFamily, claims: &ClaimFamily) -> Result<LpProblem, DualError> {
    build_dual_with_layout(family, claims).map(|(p, _)| p)
}

/// Maximises `Σ_θ Σ_ℓ y^θ(ℓ) G^θ(ℓ)` over normalised consistent price
/// systems.
pub fn build_dual_with_layout(
    family: &ModelFamily,
    claims: &ClaimFamily,
) -> Result<(LpProblem, DualLayout), DualError> {
    claims.check_covers(family)?;
    let layout = DualLayout::new(family);
    let tree = family.tree();
    let mut b = LpBuilder::new(Sense::Maximize);
    for k in 0..layout.models {
        for pos in 0..layout.leaves {
            b.add_var(0.0, f64::INFINITY, claims.values(k)[pos]);
        }
    }
    for _ in 0..tree.len() {
        b.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
    }
    let all: Vec<(usize, f64)> = (0..layout.models * layout.leaves).map(|c| (c, 1.0)).collect();
    b.add_row(Relation::Eq, 1.0, &all);
    let models: Vec<usize> = (0..layout.models).collect();
    corridor_rows(&mut b, family, &models, |k, p| layout.y(k, p), |n| layout.m(n));
    Ok((b.build()?, layout))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub value: f64,
    pub cps: ConsistentPriceSystem,
    /// `|E[Σ_θ Z^θ_T] - 1|`.
    pub normalization_residual: f64,
}

impl DualCertificate {
    pub fn to_value(&self, family: &ModelFamily) -> serde_json::Value {
        serde_json::json!({
            "value": self.value,
            "cps": self.cps.to_value(family),
            "normalization_residual": self.normalization_residual,
        })
    }

    pub fn from_value(family: &ModelFamily, value: &serde_json::Value) -> Result<Self, DualError> {
        let field = |name: &str| {
            value.get(name).ok_or_else(|| {
                DualError::Tree(crate::tree::TreeError::SchemaError(format!("dual certificate lacks {name:?}")))
            })
        };
        let number = |name: &str| -> Result<f64, DualError> {
            field(name)?.as_f64().ok_or_else(|| {
                DualError::Tree(crate::tree::TreeError::SchemaError(format!("{name:?} is not a number")))
            })
        };
        Ok(DualCertificate {
            value: number("value")?,
            cps: ConsistentPriceSystem::from_value(family, field("cps")?)?,
            normalization_residual: number("normalization_residual")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DualRun {
    pub certificate: DualCertificate,
    pub problem: LpProblem,
    pub layout: DualLayout,
    pub solution: LpSolution,
}

/// Solves the dual program. The certificate value is recomputed from the
/// decoded system rather than copied from the solver.
pub fn solve_dual(family: &ModelFamily, claims: &ClaimFamily, options: &SolveOptions) -> Result<DualRun, DualError> {
    let (problem, layout) = build_dual_with_layout(family, claims)?;
    let solution = solve_with(&problem, options)?;
    match solution.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(DualError::NoConsistentPriceSystem),
        LpStatus::Unbounded => return Err(DualError::Solver("dual program reported unbounded".into())),
    }
    let cps = layout.decode(family, &solution.primal);
    let tree = family.tree();
    let certificate = DualCertificate {
        value: cps.price(tree, claims),
        normalization_residual: (cps.total_mass(tree) - 1.0).abs(),
        cps,
    };
    Ok(DualRun {
        certificate,
        problem,
        layout,
        solution,
    })
}

/// Outcome of [`fit_positive_cps`].
#[derive(Debug, Clone, PartialEq)]
pub enum PositiveCps {
    Found(SingleModelCps),
    /// Row multipliers proving that no density `Z >= 1` fits.
    None { farkas: Vec<f64> },
}

/// Looks for a consistent price system of model `theta` alone whose
/// density is at least 1 at every leaf.
///
/// Among feasible densities the one with the least total mass is taken;
/// the martingale is then refitted to that density's corridor with
/// [`fit_sandwich_martingale`], so it is the same for equal densities.
pub fn fit_positive_cps(family: &ModelFamily, theta: &str, options: &SolveOptions) -> Result<PositiveCps, DualError> {
    let k = family.model_index(theta)?;
    let tree = family.tree();
    let leaves = tree.leaves().len();
    let mut b = LpBuilder::new(Sense::Minimize);
    for &l in tree.leaves() {
        b.add_var(tree.prob(l), f64::INFINITY, 1.0);
    }
    for _ in 0..tree.len() {
        b.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
    }
    corridor_rows(&mut b, family, &[k], |_, p| p, |n| leaves + n);
    let problem = b.build()?;
    let solution = solve_with(&problem, options)?;
    match solution.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok(PositiveCps::None {
                farkas: solution.farkas.unwrap_or_default(),
            })
        }
        LpStatus::Unbounded => return Err(DualError::Solver("positive-density program unbounded".into())),
    }
    let z: Vec<f64> = tree
        .leaves()
        .iter()
        .enumerate()
        .map(|(pos, &l)| (solution.primal[pos] / tree.prob(l)).max(1.0))
        .collect();
    let lp_m: Vec<f64> = solution.primal[leaves..].to_vec();
    let zt = tree.conditional_expectation(&z);
    let lam = family.lambda();
    let s = family.fields()[k].prices();
    let lower: Vec<f64> = (0..tree.len()).map(|n| (1.0 - lam) * zt[n] * s[n]).collect();
    let upper: Vec<f64> = (0..tree.len()).map(|n| (1.0 + lam) * zt[n] * s[n]).collect();
    let m = match fit_sandwich_martingale(tree, &lower, &upper)? {
        SandwichFit::Martingale(m) => m,
        SandwichFit::Infeasible { .. } => lp_m,
    };
    let part = SingleModelCps { z_terminal: z, m };
    let report = validate_single(family, k, &part, TOL_FEAS);
    if let Some(v) = report.violations.first() {
        return Err(DualError::Solver(format!("positive system for {theta:?} fails validation: {v}")));
    }
    Ok(PositiveCps::Found(part))
}
