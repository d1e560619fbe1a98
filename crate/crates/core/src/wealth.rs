//! Trading strategies under proportional costs and their liquidation value.
//!
//! Trades attach to nodes: `buys[n]` and `sells[n]` are the nonnegative
//! increments of the cumulative buy and sell processes executed at node `n`
//! at price `S(n)`. The initial transfer `h0` is executed at the root
//! price, and the position after trading at `n` is
//! `φ(n) = h0 + Σ_{u ⪯ n} (buys[u] - sells[u])`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::lp::TOL_FEAS;
use crate::tree::{ModelFamily, ScenarioTree, TreeError};

#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub h0: f64,
    buys: Vec<f64>,
    sells: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyDoc {
    h0: f64,
    #[serde(default)]
    buys: BTreeMap<String, f64>,
    #[serde(default)]
    sells: BTreeMap<String, f64>,
}

impl Strategy {
    pub fn zero(tree: &ScenarioTree) -> Self {
        Strategy {
            h0: 0.0,
            buys: vec![0.0; tree.len()],
            sells: vec![0.0; tree.len()],
        }
    }

    /// Initial transfer only.
    pub fn hold(tree: &ScenarioTree, h0: f64) -> Self {
        Strategy {
            h0,
            ..Strategy::zero(tree)
        }
    }

    pub fn new(tree: &ScenarioTree, h0: f64, buys: Vec<f64>, sells: Vec<f64>) -> Result<Self, TreeError> {
        if buys.len() != tree.len() || sells.len() != tree.len() {
            return Err(TreeError::InvariantViolation(format!(
                "strategy covers {}/{} nodes, tree has {}",
                buys.len(),
                sells.len(),
                tree.len()
            )));
        }
        if !h0.is_finite() {
            return Err(TreeError::InvariantViolation(format!("h0 = {h0}")));
        }
        for n in 0..tree.len() {
            for (what, v) in [("buy", buys[n]), ("sell", sells[n])] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(TreeError::InvariantViolation(format!(
                        "{what} increment {v} at node {:?} must be finite and nonnegative",
                        tree.id(n)
                    )));
                }
            }
        }
        Ok(Strategy { h0, buys, sells })
    }

    pub fn buys(&self) -> &[f64] {
        &self.buys
    }
    pub fn sells(&self) -> &[f64] {
        &self.sells
    }

    pub fn set_trade(&mut self, n: usize, buy: f64, sell: f64) {
        assert!(buy >= 0.0 && sell >= 0.0, "trade increments must be nonnegative");
        self.buys[n] = buy;
        self.sells[n] = sell;
    }

    /// `t * self + (1 - t) * other`, componentwise.
    pub fn mix(&self, t: f64, other: &Strategy) -> Strategy {
        let lerp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        Strategy {
            h0: t * self.h0 + (1.0 - t) * other.h0,
            buys: lerp(&self.buys, &other.buys),
            sells: lerp(&self.sells, &other.sells),
        }
    }

    /// Position after trading at each node.
    pub fn positions(&self, tree: &ScenarioTree) -> Vec<f64> {
        let mut phi = vec![0.0; tree.len()];
        for n in 0..tree.len() {
            let before = tree.parent(n).map_or(self.h0, |p| phi[p]);
            phi[n] = before + self.buys[n] - self.sells[n];
        }
        phi
    }

    pub fn from_json(tree: &ScenarioTree, bytes: &[u8]) -> Result<Self, TreeError> {
        let doc: StrategyDoc =
            serde_json::from_slice(bytes).map_err(|e| TreeError::SchemaError(e.to_string()))?;
        Self::from_doc(tree, doc)
    }

    pub fn from_value(tree: &ScenarioTree, value: &serde_json::Value) -> Result<Self, TreeError> {
        let doc: StrategyDoc = serde_json::from_value(value.clone())
            .map_err(|e| TreeError::SchemaError(e.to_string()))?;
        Self::from_doc(tree, doc)
    }

    fn from_doc(tree: &ScenarioTree, doc: StrategyDoc) -> Result<Self, TreeError> {
        let mut buys = vec![0.0; tree.len()];
        let mut sells = vec![0.0; tree.len()];
        for (id, v) in &doc.buys {
            buys[tree.lookup(id)?] = *v;
        }
        for (id, v) in &doc.sells {
            sells[tree.lookup(id)?] = *v;
        }
        Strategy::new(tree, doc.h0, buys, sells)
    }

    /// JSON form; nodes without trades are omitted.
    pub fn to_value(&self, tree: &ScenarioTree) -> serde_json::Value {
        let sparse = |v: &[f64]| -> BTreeMap<String, f64> {
            v.iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(n, x)| (tree.id(n).to_string(), *x))
                .collect()
        };
        serde_json::to_value(StrategyDoc {
            h0: self.h0,
            buys: sparse(&self.buys),
            sells: sparse(&self.sells),
        })
        .expect("strategy serialises")
    }
}

/// Liquidation value `W^z` under model `k` at every node, evaluated term by
/// term: initial transfer at the root ask/bid, every later trade at its
/// node's ask/bid, then the position closed at the bid (long) or ask
/// (short).
pub fn wealth_values(family: &ModelFamily, strategy: &Strategy, z: f64, k: usize) -> Vec<f64> {
    let tree = family.tree();
    let lam = family.lambda();
    let s = family.fields()[k].prices();
    let s0 = s[tree.root()];
    let h0 = strategy.h0;
    let initial = z - h0.max(0.0) * s0 * (1.0 + lam) + (-h0).max(0.0) * s0 * (1.0 - lam);
    let phi = strategy.positions(tree);
    let mut cash = vec![0.0; tree.len()];
    let mut out = vec![0.0; tree.len()];
    for n in 0..tree.len() {
        let before = tree.parent(n).map_or(initial, |p| cash[p]);
        cash[n] = before - (1.0 + lam) * s[n] * strategy.buys[n] + (1.0 - lam) * s[n] * strategy.sells[n];
        out[n] = cash[n] + phi[n].max(0.0) * (1.0 - lam) * s[n] - (-phi[n]).max(0.0) * (1.0 + lam) * s[n];
    }
    out
}

/// Liquidation value of `strategy` with initial capital `z` under model
/// `theta` at node `node_id`.
pub fn liquidation_value(
    family: &ModelFamily,
    strategy: &Strategy,
    z: f64,
    theta: &str,
    node_id: &str,
) -> Result<f64, TreeError> {
    let k = family.model_index(theta)?;
    let tree = family.tree();
    let node = tree.lookup(node_id)?;
    let lam = family.lambda();
    let s = family.fields()[k].prices();
    let s0 = s[tree.root()];
    let h0 = strategy.h0;
    let mut w = z - h0.max(0.0) * s0 * (1.0 + lam) + (-h0).max(0.0) * s0 * (1.0 - lam);
    let mut phi = h0;
    for u in tree.path(node) {
        w -= (1.0 + lam) * s[u] * strategy.buys[u];
        w += (1.0 - lam) * s[u] * strategy.sells[u];
        phi += strategy.buys[u] - strategy.sells[u];
    }
    let sn = s[node];
    Ok(w + phi.max(0.0) * (1.0 - lam) * sn - (-phi).max(0.0) * (1.0 + lam) * sn)
}

/// The same value as [`liquidation_value`], written as cash plus the
/// cheaper of the two linear closing valuations,
/// `cash + min(φ(1-λ)S, φ(1+λ)S)`. The initial transfer is folded into the
/// root trade.
pub fn liquidation_value_min_form(
    family: &ModelFamily,
    strategy: &Strategy,
    z: f64,
    theta: &str,
    node_id: &str,
) -> Result<f64, TreeError> {
    let k = family.model_index(theta)?;
    let tree = family.tree();
    let node = tree.lookup(node_id)?;
    let lam = family.lambda();
    let s = family.fields()[k].prices();
    let mut cash = z;
    let mut phi = 0.0;
    let trade = |buy: f64, sell: f64, price: f64, cash: &mut f64, phi: &mut f64| {
        *cash += -(1.0 + lam) * price * buy + (1.0 - lam) * price * sell;
        *phi += buy - sell;
    };
    trade(strategy.h0.max(0.0), (-strategy.h0).max(0.0), s[tree.root()], &mut cash, &mut phi);
    for u in tree.path(node) {
        trade(strategy.buys[u], strategy.sells[u], s[u], &mut cash, &mut phi);
    }
    let bid = phi * (1.0 - lam) * s[node];
    let ask = phi * (1.0 + lam) * s[node];
    Ok(cash + bid.min(ask))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelAdmissibility {
    pub theta: String,
    pub admissible: bool,
    /// First node (breadth-first) where `W⁰ < -x`.
    pub witness: Option<String>,
    pub min_wealth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub floor: f64,
    pub models: Vec<ModelAdmissibility>,
}

impl AdmissibilityReport {
    /// Admissible under every model.
    pub fn robust(&self) -> bool {
        self.models.iter().all(|m| m.admissible)
    }

    pub fn violation(&self) -> Option<(&str, &str)> {
        self.models
            .iter()
            .find_map(|m| m.witness.as_deref().map(|w| (m.theta.as_str(), w)))
    }
}

/// Checks `W⁰ >= -x` at every node under every model, up to
/// [`TOL_FEAS`] of rounding.
pub fn check_admissible(family: &ModelFamily, strategy: &Strategy, x: f64) -> AdmissibilityReport {
    let tree = family.tree();
    let models = (0..family.fields().len())
        .map(|k| {
            let w = wealth_values(family, strategy, 0.0, k);
            let witness = w.iter().position(|&v| v < -x - TOL_FEAS).map(|n| tree.id(n).to_string());
            ModelAdmissibility {
                theta: family.fields()[k].theta.clone(),
                admissible: witness.is_none(),
                witness,
                min_wealth: w.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    AdmissibilityReport { floor: x, models }
}

/// Smallest `x >= 0` for which the strategy is admissible under every model.
pub fn admissibility_floor(family: &ModelFamily, strategy: &Strategy) -> f64 {
    (0..family.fields().len())
        .flat_map(|k| wealth_values(family, strategy, 0.0, k))
        .fold(0.0, |acc, w| acc.max(-w))
}

/// Cancels simultaneous buying and selling at each node.
pub fn remove_redundancy(strategy: &Strategy) -> Strategy {
    let mut out = strategy.clone();
    for n in 0..out.buys.len() {
        let both = out.buys[n].min(out.sells[n]);
        out.buys[n] -= both;
        out.sells[n] -= both;
    }
    out
}

/// Total traded volume along the path to `leaf_id`, including `|h0|`.
pub fn total_variation(tree: &ScenarioTree, strategy: &Strategy, leaf_id: &str) -> Result<f64, TreeError> {
    let leaf = tree.lookup(leaf_id)?;
    if !tree.is_leaf(leaf) {
        return Err(TreeError::UnknownNode(format!("{leaf_id} (not a leaf)")));
    }
    Ok(strategy.h0.abs()
        + tree
            .path(leaf)
            .iter()
            .map(|&u| strategy.buys[u] + strategy.sells[u])
            .sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WealthReport {
    /// `values[model][node]`
    pub values: Vec<Vec<f64>>,
    /// Minimum over all nodes, per model.
    pub running_min: Vec<f64>,
    /// Per leaf, in leaf order.
    pub total_variation: Vec<f64>,
}

pub fn wealth_report(family: &ModelFamily, strategy: &Strategy, z: f64, exec: Execution) -> WealthReport {
    let tree = family.tree();
    let values = exec.map_range(family.fields().len(), |k| wealth_values(family, strategy, z, k));
    let running_min = values
        .iter()
        .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let total_variation = tree
        .leaves()
        .iter()
        .map(|&l| total_variation(tree, strategy, tree.id(l)).unwrap())
        .collect();
    WealthReport {
        values,
        running_min,
        total_variation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::build_binomial;

    fn one_step(lambda: f64) -> ModelFamily {
        let (tree, field) = build_binomial(1, 100.0, 1.2, 0.8, 0.5).unwrap();
        ModelFamily::new(tree, vec![field], lambda).unwrap()
    }

    #[test]
    fn zero_strategy_keeps_capital() {
        let fam = one_step(0.05);
        let s = Strategy::zero(fam.tree());
        for n in fam.tree().nodes() {
            assert_eq!(liquidation_value(&fam, &s, 7.5, "binomial", &n.id).unwrap(), 7.5);
        }
    }

    #[test]
    fn hedge_of_call_at_leaves() {
        let fam = one_step(0.05);
        let s = Strategy::hold(fam.tree(), 10.0 / 19.0);
        let z = 290.0 / 19.0;
        let up = liquidation_value(&fam, &s, z, "binomial", "u").unwrap();
        let down = liquidation_value(&fam, &s, z, "binomial", "d").unwrap();
        assert!((up - 20.0).abs() < 1e-12, "{up}");
        assert!(down.abs() < 1e-12, "{down}");
    }

    #[test]
    fn short_initial_transfer() {
        let fam = one_step(0.05);
        let s = Strategy::hold(fam.tree(), -1.0);
        let w = liquidation_value(&fam, &s, 3.0, "binomial", "u").unwrap();
        assert!((w - (3.0 + 0.95 * 100.0 - 1.05 * 120.0)).abs() < 1e-12);
    }

    #[test]
    fn unknown_ids() {
        let fam = one_step(0.05);
        let s = Strategy::zero(fam.tree());
        assert!(matches!(
            liquidation_value(&fam, &s, 0.0, "nope", "u"),
            Err(TreeError::UnknownModel(_))
        ));
        assert!(matches!(
            liquidation_value(&fam, &s, 0.0, "binomial", "x"),
            Err(TreeError::UnknownNode(_))
        ));
        assert!(total_variation(fam.tree(), &s, "x").is_err());
    }

    #[test]
    fn admissibility_examples() {
        let fam = one_step(0.05);
        let zero = Strategy::zero(fam.tree());
        assert!(check_admissible(&fam, &zero, 0.0).robust());

        let hedge = Strategy::hold(fam.tree(), 10.0 / 19.0);
        let report = check_admissible(&fam, &hedge, 290.0 / 19.0);
        assert!(report.robust());
        assert!((report.models[0].min_wealth + 290.0 / 19.0).abs() < 1e-12);

        let one = Strategy::hold(fam.tree(), 1.0);
        let report = check_admissible(&fam, &one, 0.0);
        assert!(!report.robust());
        assert_eq!(report.violation(), Some(("binomial", "root")));
        let w = liquidation_value(&fam, &one, 0.0, "binomial", "root").unwrap();
        assert!((w + 10.0).abs() < 1e-12);
    }

    #[test]
    fn redundancy_removal() {
        let fam = one_step(0.05);
        let tree = fam.tree();
        let mut s = Strategy::zero(tree);
        s.set_trade(0, 3.0, 3.0);
        let clean = remove_redundancy(&s);
        assert_eq!(clean.buys()[0], 0.0);
        assert_eq!(clean.sells()[0], 0.0);
        for id in ["root", "u", "d"] {
            let before = liquidation_value(&fam, &s, 0.0, "binomial", id).unwrap();
            let after = liquidation_value(&fam, &clean, 0.0, "binomial", id).unwrap();
            assert!((after - before - 3.0 * 2.0 * 0.05 * 100.0).abs() < 1e-12);
        }
        assert_eq!(remove_redundancy(&clean), clean);

        let mut s = Strategy::zero(tree);
        s.set_trade(1, 5.0, 2.0);
        let clean = remove_redundancy(&s);
        assert_eq!((clean.buys()[1], clean.sells()[1]), (3.0, 0.0));
    }

    #[test]
    fn variation_counts_both_directions() {
        let (tree, _) = build_binomial(2, 100.0, 1.2, 0.8, 0.5).unwrap();
        let mut s = Strategy::zero(&tree);
        assert_eq!(total_variation(&tree, &s, "uu").unwrap(), 0.0);
        s.set_trade(tree.lookup("u").unwrap(), 1.0, 0.0);
        s.set_trade(tree.lookup("uu").unwrap(), 0.0, 1.0);
        assert_eq!(total_variation(&tree, &s, "uu").unwrap(), 2.0);
        let hedge = Strategy::hold(&tree, 10.0 / 19.0);
        assert!((total_variation(&tree, &hedge, "dd").unwrap() - 10.0 / 19.0).abs() < 1e-15);
    }

    #[test]
    fn strategy_json_round_trip() {
        let (tree, _) = build_binomial(2, 100.0, 1.2, 0.8, 0.5).unwrap();
        let mut s = Strategy::hold(&tree, -0.25);
        s.set_trade(tree.lookup("ud").unwrap(), 0.5, 0.0);
        let v = s.to_value(&tree);
        assert_eq!(Strategy::from_value(&tree, &v).unwrap(), s);
        let parsed = Strategy::from_json(&tree, br#"{"h0": 1, "sells": {"u": 2}}"#).unwrap();
        assert_eq!(parsed.sells()[tree.lookup("u").unwrap()], 2.0);
        assert!(Strategy::from_json(&tree, br#"{"h0": 1, "buys": {"u": -2}}"#).is_err());
    }
}
