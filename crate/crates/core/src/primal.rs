//! Superhedging linear program and free-lunch detection.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dual::{fit_positive_cps, DualError, PositiveCps, SingleModelCps};
use crate::lp::{solve_with, LpBuilder, LpError, LpProblem, LpSolution, LpStatus, Relation, Sense, SolveOptions, TOL_FEAS};
use crate::tree::{ClaimFamily, ModelFamily, TreeError};
use crate::wealth::{admissibility_floor, remove_redundancy, wealth_values, Strategy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimalError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error("model {theta:?} admits a free lunch; the superhedging price is unbounded below")]
    FreeLunch { theta: String },
    #[error("superhedging program infeasible")]
    Infeasible,
}

/// Column and row positions of [`build_primal`].
///
/// Columns: `z`, `h0⁺`, `h0⁻`, then `buys(n)`, `sells(n)` interleaved per
/// node. Rows: for every model and leaf, the bid-side and ask-side
/// linearisation of terminal wealth; then, when a floor is requested, the
/// same pair for `W⁰` at every model and node (pairs that vanish
/// identically are skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalLayout {
    models: usize,
    leaves: usize,
    nodes: usize,
    floor: Option<f64>,
}

impl PrimalLayout {
    pub const Z: usize = 0;
    pub const H0_PLUS: usize = 1;
    pub const H0_MINUS: usize = 2;

    pub fn buy(&self, n: usize) -> usize {
        3 + 2 * n
    }
    pub fn sell(&self, n: usize) -> usize {
        4 + 2 * n
    }
    pub fn num_vars(&self) -> usize {
        3 + 2 * self.nodes
    }
    /// Terminal row for model `k` at leaf position `pos`; `ask` selects
    /// the `(1+λ)` linearisation.
    pub fn terminal_row(&self, k: usize, pos: usize, ask: bool) -> usize {
        2 * (k * self.leaves + pos) + ask as usize
    }
    pub fn floor(&self) -> Option<f64> {
        self.floor
    }

    /// Strategy encoded in a solution vector, before any cleaning.
    pub fn strategy(&self, family: &ModelFamily, x: &[f64]) -> Strategy {
        let tree = family.tree();
        let clip = |v: f64| v.max(0.0);
        let buys = (0..self.nodes).map(|n| clip(x[self.buy(n)])).collect();
        let sells = (0..self.nodes).map(|n| clip(x[self.sell(n)])).collect();
        let h0 = clip(x[Self::H0_PLUS]) - clip(x[Self::H0_MINUS]);
        Strategy::new(tree, h0, buys, sells).expect("decoded strategy is well formed")
    }

    /// Maps row duals of the terminal rows onto the dual program's
    /// variables: `y = a + b` per model and leaf, `m` at leaves from the
    /// bid/ask weights, and `m` at internal nodes by conditional mean.
    pub fn dual_point(&self, family: &ModelFamily, duals: &[f64]) -> Vec<f64> {
        let tree = family.tree();
        let lam = family.lambda();
        let mut x = vec![0.0; self.models * self.leaves + self.nodes];
        let mut m_leaf = vec![0.0; self.leaves];
        for k in 0..self.models {
            for (pos, &l) in tree.leaves().iter().enumerate() {
                let a = duals[self.terminal_row(k, pos, false)];
                let b = duals[self.terminal_row(k, pos, true)];
                x[k * self.leaves + pos] = a + b;
                let s = family.fields()[k].at(l);
                m_leaf[pos] += (a * (1.0 - lam) + b * (1.0 + lam)) * s / tree.prob(l);
            }
        }
        let m = tree.conditional_expectation(&m_leaf);
        x[self.models * self.leaves..].copy_from_slice(&m);
        x
    }
}

/// Coefficients of one linearisation of `W⁰(n)` under model `k`, valued at
/// closing price `q`.
fn wealth_row(family: &ModelFamily, layout: &PrimalLayout, k: usize, n: usize, q: f64) -> Vec<(usize, f64)> {
    let tree = family.tree();
    let lam = family.lambda();
    let s = family.fields()[k].prices();
    let s0 = s[tree.root()];
    let mut row = vec![
        (PrimalLayout::H0_PLUS, -(1.0 + lam) * s0 + q),
        (PrimalLayout::H0_MINUS, (1.0 - lam) * s0 - q),
    ];
    for u in tree.path(n) {
        row.push((layout.buy(u), -(1.0 + lam) * s[u] + q));
        row.push((layout.sell(u), (1.0 - lam) * s[u] - q));
    }
    row
}

pub fn build_primal(family: &ModelFamily, claims: &ClaimFamily) -> Result<LpProblem, PrimalError> {
    build_primal_with(family, claims, None).map(|(p, _)| p)
}

/// Minimal `z` such that `W^z_T >= G` under every model. With `floor =
/// Some(x)` the rows `W⁰(n) >= -x` are added at every model and node.
pub fn build_primal_with(
    family: &ModelFamily,
    claims: &ClaimFamily,
    floor: Option<f64>,
) -> Result<(LpProblem, PrimalLayout), PrimalError> {
    claims.check_covers(family)?;
    let tree = family.tree();
    let lam = family.lambda();
    let layout = PrimalLayout {
        models: family.fields().len(),
        leaves: tree.leaves().len(),
        nodes: tree.len(),
        floor,
    };
    let mut b = LpBuilder::new(Sense::Minimize);
    b.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
    for _ in 1..layout.num_vars() {
        b.add_var(0.0, f64::INFINITY, 0.0);
    }
    for k in 0..layout.models {
        let s = family.fields()[k].prices();
        for (pos, &l) in tree.leaves().iter().enumerate() {
            for factor in [1.0 - lam, 1.0 + lam] {
                let mut row = wealth_row(family, &layout, k, l, factor * s[l]);
                row.push((PrimalLayout::Z, 1.0));
                b.add_row(Relation::Ge, claims.values(k)[pos], &row);
            }
        }
    }
    if let Some(x) = floor {
        for k in 0..layout.models {
            let s = family.fields()[k].prices();
            for n in 0..tree.len() {
                for factor in [1.0 - lam, 1.0 + lam] {
                    let row = wealth_row(family, &layout, k, n, factor * s[n]);
                    if row.iter().all(|(_, c)| *c == 0.0) {
                        // W⁰ at the root with no trade is identically zero.
                        if -x > 0.0 {
                            return Err(PrimalError::Infeasible);
                        }
                        continue;
                    }
                    b.add_row(Relation::Ge, -x, &row);
                }
            }
        }
    }
    Ok((b.build()?, layout))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalCertificate {
    pub price: f64,
    pub strategy: Strategy,
    /// `slacks[model][leaf position] = W^z_T - G`, evaluated directly.
    pub slacks: Vec<Vec<f64>>,
    /// Smallest `x` with the strategy `x`-admissible under every model.
    pub floor: f64,
}

impl PrimalCertificate {
    /// Recomputes slacks and floor from `price` and `strategy` alone.
    pub fn evaluate(family: &ModelFamily, claims: &ClaimFamily, price: f64, strategy: Strategy) -> Self {
        let tree = family.tree();
        let slacks = (0..family.fields().len())
            .map(|k| {
                let w = wealth_values(family, &strategy, price, k);
                tree.leaves()
                    .iter()
                    .zip(claims.values(k))
                    .map(|(&l, g)| w[l] - g)
                    .collect()
            })
            .collect();
        let floor = admissibility_floor(family, &strategy);
        PrimalCertificate {
            price,
            strategy,
            slacks,
            floor,
        }
    }

    /// Most negative slack after re-evaluating the strategy.
    pub fn worst_slack(&self, family: &ModelFamily, claims: &ClaimFamily) -> f64 {
        let fresh = Self::evaluate(family, claims, self.price, self.strategy.clone());
        fresh.slacks.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether the strategy superhedges at `price` (to `tol`) and is
    /// admissible with the recorded floor.
    pub fn verify(&self, family: &ModelFamily, claims: &ClaimFamily, tol: f64) -> bool {
        let fresh = Self::evaluate(family, claims, self.price, self.strategy.clone());
        let hedges = fresh
            .slacks
            .iter()
            .enumerate()
            .all(|(k, row)| row.iter().zip(claims.values(k)).all(|(s, g)| *s >= -tol * g.abs().max(1.0)));
        hedges && fresh.floor <= self.floor + tol * self.floor.max(1.0)
    }

    pub fn to_value(&self, family: &ModelFamily) -> serde_json::Value {
        let tree = family.tree();
        let slacks: BTreeMap<String, BTreeMap<String, f64>> = family
            .fields()
            .iter()
            .zip(&self.slacks)
            .map(|(f, row)| {
                let leaves = tree
                    .leaves()
                    .iter()
                    .zip(row)
                    .map(|(&l, v)| (tree.id(l).to_string(), *v))
                    .collect();
                (f.theta.clone(), leaves)
            })
            .collect();
        serde_json::json!({
            "price": self.price,
            "strategy": self.strategy.to_value(tree),
            "slacks": slacks,
            "floor": self.floor,
        })
    }

    /// Reads the price and strategy back; slacks and floor are recomputed,
    /// not trusted.
    pub fn from_value(family: &ModelFamily, claims: &ClaimFamily, value: &serde_json::Value) -> Result<Self, TreeError> {
        let price = value
            .get("price")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| TreeError::SchemaError("primal certificate lacks a numeric \"price\"".into()))?;
        let strategy = value
            .get("strategy")
            .ok_or_else(|| TreeError::SchemaError("primal certificate lacks \"strategy\"".into()))?;
        let strategy = Strategy::from_value(family.tree(), strategy)?;
        Ok(Self::evaluate(family, claims, price, strategy))
    }
}

#[derive(Debug, Clone)]
pub struct PrimalRun {
    pub certificate: PrimalCertificate,
    pub problem: LpProblem,
    pub layout: PrimalLayout,
    pub solution: LpSolution,
    /// Strategy read straight from the solution, before cleaning.
    pub raw_strategy: Strategy,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PrimalOptions {
    pub floor: Option<f64>,
    pub solve: SolveOptions,
}

pub fn solve_superhedge(family: &ModelFamily, claims: &ClaimFamily) -> Result<PrimalCertificate, PrimalError> {
    solve_primal(family, claims, &PrimalOptions::default()).map(|r| r.certificate)
}

/// Solves the superhedging program. On an unbounded program the offending
/// model is named by running free-lunch detection on each model.
pub fn solve_primal(
    family: &ModelFamily,
    claims: &ClaimFamily,
    options: &PrimalOptions,
) -> Result<PrimalRun, PrimalError> {
    let (problem, layout) = build_primal_with(family, claims, options.floor)?;
    let solution = solve_with(&problem, &options.solve)?;
    match solution.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(PrimalError::Infeasible),
        LpStatus::Unbounded => {
            for field in family.fields() {
                if let FreeLunchVerdict::FreeLunch { .. } = detect_free_lunch(family, &field.theta)? {
                    return Err(PrimalError::FreeLunch {
                        theta: field.theta.clone(),
                    });
                }
            }
            return Err(PrimalError::FreeLunch {
                theta: family.thetas().collect::<Vec<_>>().join(","),
            });
        }
    }
    let raw_strategy = layout.strategy(family, &solution.primal);
    let price = solution.objective;
    let certificate = PrimalCertificate::evaluate(family, claims, price, remove_redundancy(&raw_strategy));
    Ok(PrimalRun {
        certificate,
        problem,
        layout,
        solution,
        raw_strategy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum FreeLunchVerdict {
    NoFreeLunch(SingleModelCps),
    FreeLunch {
        strategy: Strategy,
        /// Smallest admissibility floor of `strategy`. Positive whenever
        /// λ > 0, since the first purchase is marked to the bid at once.
        floor: f64,
        /// `W⁰_T` at every leaf, all nonnegative and some positive.
        terminal: Vec<f64>,
    },
}

impl FreeLunchVerdict {
    pub fn is_free_lunch(&self) -> bool {
        matches!(self, FreeLunchVerdict::FreeLunch { .. })
    }
}

/// Decides whether model `theta` alone admits a free lunch.
///
/// The model is free of lunches when it carries a consistent price system
/// with density at least 1. Otherwise the dual feasibility problem yields
/// a strategy whose terminal liquidation value is nonnegative at every
/// leaf and positive somewhere; it is found by maximising
/// `Σ_ℓ min(W⁰_T(ℓ), 1)` over strategies.
pub fn detect_free_lunch(family: &ModelFamily, theta: &str) -> Result<FreeLunchVerdict, PrimalError> {
    let k = family.model_index(theta)?;
    if let PositiveCps::Found(cps) = fit_positive_cps(family, theta, &SolveOptions::default())? {
        return Ok(FreeLunchVerdict::NoFreeLunch(cps));
    }
    let single = family.restrict(&[theta])?;
    let tree = family.tree();
    let lam = family.lambda();
    let s = family.fields()[k].prices();
    let layout = PrimalLayout {
        models: 1,
        leaves: tree.leaves().len(),
        nodes: tree.len(),
        floor: None,
    };
    let mut b = LpBuilder::new(Sense::Maximize);
    b.add_var(0.0, 0.0, 0.0);
    for _ in 1..layout.num_vars() {
        b.add_var(0.0, f64::INFINITY, 0.0);
    }
    for &l in tree.leaves() {
        let gain = b.add_var(0.0, 1.0, 1.0);
        for factor in [1.0 - lam, 1.0 + lam] {
            let mut row = wealth_row(&single, &layout, 0, l, factor * s[l]);
            row.push((gain, -1.0));
            b.add_row(Relation::Ge, 0.0, &row);
        }
    }
    let problem = b.build()?;
    let solution = solve_with(&problem, &SolveOptions::default())?;
    if solution.status != LpStatus::Optimal || solution.objective <= TOL_FEAS {
        return Err(PrimalError::Dual(DualError::Solver(format!(
            "model {theta:?} has no positive price system but no arbitrage was found (status {:?}, value {})",
            solution.status, solution.objective
        ))));
    }
    let strategy = remove_redundancy(&layout.strategy(&single, &solution.primal));
    let w = wealth_values(&single, &strategy, 0.0, 0);
    let terminal = tree.leaves().iter().map(|&l| w[l]).collect();
    Ok(FreeLunchVerdict::FreeLunch {
        floor: admissibility_floor(&single, &strategy),
        strategy,
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{binary_tree, build_binomial, PriceField};

    fn one_step(lambda: f64) -> (ModelFamily, ClaimFamily) {
        let (tree, field) = build_binomial(1, 100.0, 1.2, 0.8, 0.5).unwrap();
        let fam = ModelFamily::new(tree, vec![field], lambda).unwrap();
        let claims = ClaimFamily::payoff(&fam, |s| (s - 100.0).max(0.0)).unwrap();
        (fam, claims)
    }

    fn two_models() -> (ModelFamily, ClaimFamily) {
        let tree = binary_tree(1, 0.5).unwrap();
        let a = PriceField::new(&tree, "theta1", vec![100.0, 120.0, 80.0]).unwrap();
        let b = PriceField::new(&tree, "theta2", vec![100.0, 130.0, 90.0]).unwrap();
        let fam = ModelFamily::new(tree, vec![a, b], 0.0).unwrap();
        let claims = ClaimFamily::payoff(&fam, |s| (s - 100.0).max(0.0)).unwrap();
        (fam, claims)
    }

    #[test]
    fn one_step_price_and_hedge() {
        let (fam, claims) = one_step(0.05);
        let cert = solve_superhedge(&fam, &claims).unwrap();
        assert!((cert.price - 290.0 / 19.0).abs() < 1e-9);
        assert!((cert.strategy.h0 - 10.0 / 19.0).abs() < 1e-9);
        assert!(cert.verify(&fam, &claims, TOL_FEAS));
    }

    #[test]
    fn one_step_wide_spread() {
        let (fam, claims) = one_step(0.1);
        let cert = solve_superhedge(&fam, &claims).unwrap();
        assert!((cert.price - 20.0).abs() < 1e-9);
        assert!(cert.verify(&fam, &claims, TOL_FEAS));
    }

    #[test]
    fn two_model_robust_premium() {
        let (fam, claims) = two_models();
        let cert = solve_superhedge(&fam, &claims).unwrap();
        assert!((cert.price - 12.0).abs() < 1e-9);
        assert!((cert.strategy.h0 - 0.6).abs() < 1e-9);
        for (theta, price) in [("theta1", 10.0), ("theta2", 7.5)] {
            let single = solve_superhedge(&fam.restrict(&[theta]).unwrap(), &claims.restrict(&[theta]).unwrap()).unwrap();
            assert!((single.price - price).abs() < 1e-9, "{theta}");
        }
    }

    #[test]
    fn zero_claim_costs_nothing() {
        let (fam, _) = one_step(0.05);
        let zero = ClaimFamily::payoff(&fam, |_| 0.0).unwrap();
        let cert = solve_superhedge(&fam, &zero).unwrap();
        assert!(cert.price.abs() < 1e-12);
    }

    #[test]
    fn certificate_json_round_trip() {
        let (fam, claims) = two_models();
        let cert = solve_superhedge(&fam, &claims).unwrap();
        let back = PrimalCertificate::from_value(&fam, &claims, &cert.to_value(&fam)).unwrap();
        assert_eq!(back, cert);
    }

    fn sure_up(lambda: f64) -> ModelFamily {
        let tree = binary_tree(1, 0.5).unwrap();
        let field = PriceField::new(&tree, "a", vec![100.0, 130.0, 125.0]).unwrap();
        ModelFamily::new(tree, vec![field], lambda).unwrap()
    }

    #[test]
    fn sure_up_market() {
        match detect_free_lunch(&sure_up(0.05), "a").unwrap() {
            FreeLunchVerdict::FreeLunch { terminal, floor, strategy } => {
                assert!(terminal.iter().all(|w| *w >= 0.0) && terminal.iter().any(|w| *w > 0.0));
                assert!(strategy.h0 > 0.0 || strategy.buys()[0] > 0.0);
                assert!(floor > 0.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(!detect_free_lunch(&sure_up(0.2), "a").unwrap().is_free_lunch());

        let fam = sure_up(0.05);
        let claims = ClaimFamily::payoff(&fam, |_| 0.0).unwrap();
        assert!(matches!(
            solve_superhedge(&fam, &claims),
            Err(PrimalError::FreeLunch { ref theta }) if theta == "a"
        ));
    }

    #[test]
    fn floor_rows_keep_value() {
        let (fam, claims) = one_step(0.05);
        let opts = PrimalOptions {
            floor: Some(290.0 / 19.0),
            ..Default::default()
        };
        let run = solve_primal(&fam, &claims, &opts).unwrap();
        assert!((run.certificate.price - 290.0 / 19.0).abs() < 1e-9);
        assert_eq!(run.layout.floor(), Some(290.0 / 19.0));
        assert!(run.problem.num_rows() > 2);
    }
}
