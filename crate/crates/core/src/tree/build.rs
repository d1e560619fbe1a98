//! Tree generators.

use serde::{Deserialize, Serialize};

use super::{NodeSpec, PriceField, ScenarioTree, TreeError};

/// Non-recombining binary tree of depth `levels`.
///
/// Node ids spell the path of moves: the root is `"root"`, its children are
/// `"u"` and `"d"`, then `"uu"`, `"ud"`, and so on.
pub fn binary_tree(levels: usize, p_up: f64) -> Result<ScenarioTree, TreeError> {
    if levels < 1 {
        return Err(TreeError::ParamOutOfRange(format!("levels = {levels}, need >= 1")));
    }
    if !(p_up > 0.0 && p_up < 1.0) {
        return Err(TreeError::ParamOutOfRange(format!("p_up = {p_up} outside (0, 1)")));
    }
    let mut specs = vec![NodeSpec {
        id: "root".into(),
        parent: None,
        t: 0,
        p: 1.0,
    }];
    let mut frontier = vec![String::new()];
    for t in 1..=levels {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for path in &frontier {
            let parent = if path.is_empty() { "root".to_string() } else { path.clone() };
            for (step, p) in [('u', p_up), ('d', 1.0 - p_up)] {
                let id = format!("{path}{step}");
                specs.push(NodeSpec {
                    id: id.clone(),
                    parent: Some(parent.clone()),
                    t,
                    p,
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    ScenarioTree::new(levels, specs)
}

/// Up/down signs (+1 / -1) along the path to `n`, root excluded.
fn step_signs(tree: &ScenarioTree, n: usize) -> Vec<f64> {
    tree.path(n)
        .iter()
        .skip(1)
        .map(|&k| if tree.id(k).ends_with('u') { 1.0 } else { -1.0 })
        .collect()
}

/// Binomial price tree: `S = s0 * up^#up * down^#down` at every node.
pub fn build_binomial(
    levels: usize,
    s0: f64,
    up: f64,
    down: f64,
    p_up: f64,
) -> Result<(ScenarioTree, PriceField), TreeError> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(TreeError::ParamOutOfRange(format!("s0 = {s0}, need > 0")));
    }
    if !(up > 1.0 && up.is_finite()) {
        return Err(TreeError::ParamOutOfRange(format!("up = {up}, need > 1")));
    }
    if !(down > 0.0 && down < 1.0) {
        return Err(TreeError::ParamOutOfRange(format!("down = {down} outside (0, 1)")));
    }
    let tree = binary_tree(levels, p_up)?;
    let mut prices = vec![s0; tree.len()];
    for n in 1..tree.len() {
        let parent = tree.parent(n).unwrap();
        let factor = if tree.id(n).ends_with('u') { up } else { down };
        prices[n] = prices[parent] * factor;
    }
    let field = PriceField::new(&tree, "binomial", prices)?;
    Ok((tree, field))
}

/// Kernels `K(t, s)` for `1 <= s <= t <= levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Constant { value: f64 },
    /// `(t - s + 1)^(H - 1/2)`, a discretised fractional kernel.
    Power { hurst: f64 },
    /// Explicit lower-triangular weights, `values[t - 1][s - 1]`.
    Matrix { values: Vec<Vec<f64>> },
}

impl Kernel {
    pub fn eval(&self, t: usize, s: usize) -> f64 {
        match self {
            Kernel::Constant { value } => *value,
            Kernel::Power { hurst } => ((t - s + 1) as f64).powf(hurst - 0.5),
            Kernel::Matrix { values } => values[t - 1][s - 1],
        }
    }

    fn check(&self, levels: usize) -> Result<(), TreeError> {
        if let Kernel::Matrix { values } = self {
            for t in 1..=levels {
                if values.get(t - 1).map_or(true, |row| row.len() < t) {
                    return Err(TreeError::ParamOutOfRange(format!(
                        "kernel matrix row {t} needs {t} entries"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The positive map applied to the driving sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Transform {
    Exp,
    /// `x + shift`; every node value must come out positive.
    Shifted { shift: f64 },
}

impl Transform {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Transform::Exp => x.exp(),
            Transform::Shifted { shift } => x + shift,
        }
    }
}

/// Binary-tree discretisation of `S_t = F(∫ mu ds + ∫ K(t, s) dW_s)`.
///
/// Brownian increments become `±increment` steps with probability 1/2 each
/// and `Δt = 1 / levels`. At a depth-`t` node with signs `e_1..e_t` the
/// price is `F(Σ mu[s] Δt + Σ K(t, s) e_s increment)`; the kernel
/// re-weights every past step at each date, so prices are path dependent.
pub fn build_kernel_model(
    levels: usize,
    mu: &[f64],
    kernel: impl Fn(usize, usize) -> f64,
    increment: f64,
    transform: Transform,
) -> Result<(ScenarioTree, PriceField), TreeError> {
    if !(increment > 0.0 && increment.is_finite()) {
        return Err(TreeError::ParamOutOfRange(format!("increment = {increment}, need > 0")));
    }
    if mu.len() < levels {
        return Err(TreeError::ParamOutOfRange(format!(
            "mu has {} entries for {levels} levels",
            mu.len()
        )));
    }
    let tree = binary_tree(levels, 0.5)?;
    let dt = 1.0 / levels as f64;
    let prices: Vec<f64> = (0..tree.len())
        .map(|n| {
            let signs = step_signs(&tree, n);
            let t = signs.len();
            let drift: f64 = mu[..t].iter().map(|m| m * dt).sum();
            let noise: f64 = signs
                .iter()
                .enumerate()
                .map(|(i, e)| kernel(t, i + 1) * e * increment)
                .sum();
            transform.apply(drift + noise)
        })
        .collect();
    let field = PriceField::new(&tree, "kernel", prices)?;
    Ok((tree, field))
}

impl Kernel {
    /// [`build_kernel_model`] with this kernel, after checking its shape.
    pub fn build(
        &self,
        levels: usize,
        mu: &[f64],
        increment: f64,
        transform: Transform,
    ) -> Result<(ScenarioTree, PriceField), TreeError> {
        self.check(levels)?;
        build_kernel_model(levels, mu, |t, s| self.eval(t, s), increment, transform)
    }
}
