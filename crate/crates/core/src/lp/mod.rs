//! Standard linear programs and a reference simplex solver.
//!
//! Every hedging computation in this crate reduces to an [`LpProblem`]:
//! a sparse constraint matrix with per-row relations and per-variable
//! interval bounds. [`solve`] runs a two-phase primal simplex with Bland's
//! rule and returns an [`LpSolution`] carrying a certificate for whichever
//! status it reaches; [`verify_solution`] re-checks such a certificate
//! against the problem data alone.

pub mod field;
mod simplex;
mod verify;

use std::fmt::{self, Write as _};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use verify::{
    primal_residual, verify_farkas, verify_ray, verify_solution, CertificateCheck, SolutionReport,
};

/// Primal feasibility tolerance used throughout the crate.
pub const TOL_FEAS: f64 = 1e-9;
/// Admissible primal/dual objective gap.
pub const TOL_GAP: f64 = 1e-7;
/// Largest instance (by nonzero count) accepted in exact-rational mode.
pub const EXACT_MAX_NONZEROS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("exact mode accepts at most {EXACT_MAX_NONZEROS} nonzeros, problem has {0}")]
    ExactTooLarge(usize),
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "=" => Some(Relation::Eq),
            "<=" => Some(Relation::Le),
            ">=" => Some(Relation::Ge),
            _ => None,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowBound {
    pub relation: Relation,
    pub rhs: f64,
}

/// A validated linear program.
///
/// Construct through [`LpBuilder`]; the fields are private so every value of
/// this type satisfies the index, finiteness and non-degeneracy invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    sense: Sense,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<RowBound>,
    // sorted by (row, col), no duplicates, no explicit zeros
    entries: Vec<(usize, usize, f64)>,
}

impl LpProblem {
    pub fn sense(&self) -> Sense {
        self.sense
    }
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn rows(&self) -> &[RowBound] {
        &self.rows
    }
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }
    pub fn nonzeros(&self) -> usize {
        self.entries.len()
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.rows.len()];
        for &(r, c, a) in &self.entries {
            act[r] += a * x[c];
        }
        act
    }

    /// `A^T y`.
    pub fn transpose_times(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.objective.len()];
        for &(r, c, a) in &self.entries {
            out[c] += a * y[r];
        }
        out
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Debug dump, one line per row: `<relation> <b> : <col>:<coef> ...`.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::new();
        let mut k = 0;
        for (r, row) in self.rows.iter().enumerate() {
            write!(out, "{} {} :", row.relation, row.rhs).unwrap();
            while k < self.entries.len() && self.entries[k].0 == r {
                let (_, c, a) = self.entries[k];
                write!(out, " {c}:{a}").unwrap();
                k += 1;
            }
            out.push('\n');
        }
        out
    }
}

/// Incremental constructor for [`LpProblem`].
#[derive(Debug, Clone)]
pub struct LpBuilder {
    sense: Sense,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<RowBound>,
    entries: Vec<(usize, usize, f64)>,
}

impl LpBuilder {
    pub fn new(sense: Sense) -> Self {
        LpBuilder {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
            entries: Vec::new(),
        }
    }

    /// Adds a variable with bounds `[lo, hi]` (infinite values allowed) and
    /// objective coefficient `cost`; returns its column index.
    pub fn add_var(&mut self, lo: f64, hi: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.objective.len() - 1
    }

    pub fn set_cost(&mut self, col: usize, cost: f64) {
        self.objective[col] = cost;
    }

    /// Adds a constraint row; exact zero coefficients are dropped.
    pub fn add_row(&mut self, relation: Relation, rhs: f64, coefs: &[(usize, f64)]) -> usize {
        let r = self.rows.len();
        self.rows.push(RowBound { relation, rhs });
        self.entries
            .extend(coefs.iter().filter(|(_, a)| *a != 0.0).map(|&(c, a)| (r, c, a)));
        r
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn build(self) -> Result<LpProblem, LpError> {
        LpProblem::from_parts(
            self.sense,
            self.objective,
            self.lower,
            self.upper,
            self.rows,
            self.entries,
        )
    }
}

impl LpProblem {
    /// Validates raw parts. Entries may arrive in any order.
    pub fn from_parts(
        sense: Sense,
        objective: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        rows: Vec<RowBound>,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self, LpError> {
        let bad = |msg: String| Err(LpError::MalformedProblem(msg));
        let n = objective.len();
        if lower.len() != n || upper.len() != n {
            return bad(format!(
                "bound vectors have lengths {}/{} for {n} variables",
                lower.len(),
                upper.len()
            ));
        }
        for (j, c) in objective.iter().enumerate() {
            if !c.is_finite() {
                return bad(format!("objective coefficient of column {j} is {c}"));
            }
        }
        for j in 0..n {
            let (lo, hi) = (lower[j], upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY || lo > hi
            {
                return bad(format!("column {j} has invalid bounds [{lo}, {hi}]"));
            }
        }
        for (r, row) in rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return bad(format!("row {r} has non-finite right-hand side {}", row.rhs));
            }
        }
        entries.retain(|e| e.2 != 0.0);
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_used = vec![false; rows.len()];
        for (k, &(r, c, a)) in entries.iter().enumerate() {
            if r >= rows.len() || c >= n {
                return bad(format!("entry ({r}, {c}) out of range"));
            }
            if !a.is_finite() {
                return bad(format!("entry ({r}, {c}) is {a}"));
            }
            if k > 0 && entries[k - 1].0 == r && entries[k - 1].1 == c {
                return bad(format!("duplicate entry ({r}, {c})"));
            }
            row_used[r] = true;
        }
        if let Some(r) = row_used.iter().position(|u| !u) {
            return bad(format!("row {r} has no nonzero coefficient"));
        }
        Ok(LpProblem {
            sense,
            objective,
            lower,
            upper,
            rows,
            entries,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Rational solution values, present when solved in exact mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactValues {
    pub objective: BigRational,
    pub primal: Vec<BigRational>,
}

/// Outcome of [`solve`].
///
/// Dual values follow the sensitivity convention: `dual[i]` is the rate of
/// change of the optimal objective with respect to row `i`'s right-hand
/// side. For a minimisation this makes `>=` rows nonnegative and `<=` rows
/// nonpositive; for a maximisation the signs flip.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point, or a feasible point on the unbounded ray's base when
    /// unbounded; empty when infeasible.
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    /// `±inf` when unbounded or infeasible.
    pub objective: f64,
    /// Row multipliers `u` proving infeasibility: `u` has the sign of its
    /// row relation (`>=` rows nonnegative, `<=` nonpositive) and
    /// `sup { (A^T u) x : lo <= x <= hi } < u . b`.
    pub farkas: Option<Vec<f64>>,
    /// Improving direction from `primal` along which the problem stays
    /// feasible.
    pub ray: Option<Vec<f64>>,
    pub iterations: usize,
    pub exact: Option<ExactValues>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arithmetic {
    #[default]
    Float,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveOptions {
    pub arithmetic: Arithmetic,
    pub max_iterations: Option<usize>,
}

impl SolveOptions {
    pub fn exact() -> Self {
        SolveOptions {
            arithmetic: Arithmetic::Exact,
            ..Default::default()
        }
    }
}

/// Solves in double precision.
pub fn solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    solve_with(problem, &SolveOptions::default())
}

pub fn solve_with(problem: &LpProblem, options: &SolveOptions) -> Result<LpSolution, LpError> {
    match options.arithmetic {
        Arithmetic::Float => {
            let scaling = Scaling::equilibrate(problem);
            let scaled = scaling.apply(problem);
            let out = simplex::solve_generic::<f64>(&scaled, options.max_iterations)?;
            Ok(scaling.unscale(out.to_solution(&scaled)))
        }
        Arithmetic::Exact => {
            if problem.nonzeros() > EXACT_MAX_NONZEROS {
                return Err(LpError::ExactTooLarge(problem.nonzeros()));
            }
            let out = simplex::solve_generic::<BigRational>(problem, options.max_iterations)?;
            let mut solution = out.to_solution(problem);
            if let Some(objective) = &out.objective {
                solution.exact = Some(ExactValues {
                    objective: objective.clone(),
                    primal: out.x.clone(),
                });
            }
            Ok(solution)
        }
    }
}

/// Power-of-two row and column scale factors; applying them is exact in
/// binary floating point.
struct Scaling {
    row: Vec<f64>,
    col: Vec<f64>,
}

fn pow2_near(x: f64) -> f64 {
    2f64.powi(x.log2().round() as i32)
}

impl Scaling {
    /// Geometric-mean equilibration, a few alternating passes.
    fn equilibrate(p: &LpProblem) -> Self {
        let mut row = vec![1.0; p.num_rows()];
        let mut col = vec![1.0; p.num_vars()];
        for _ in 0..4 {
            let mut lo = vec![f64::INFINITY; p.num_rows()];
            let mut hi = vec![0.0f64; p.num_rows()];
            for &(r, c, a) in p.entries() {
                let v = (a * row[r] * col[c]).abs();
                lo[r] = lo[r].min(v);
                hi[r] = hi[r].max(v);
            }
            for r in 0..p.num_rows() {
                if hi[r] > 0.0 {
                    row[r] /= pow2_near((lo[r] * hi[r]).sqrt());
                }
            }
            let mut lo = vec![f64::INFINITY; p.num_vars()];
            let mut hi = vec![0.0f64; p.num_vars()];
            for &(r, c, a) in p.entries() {
                let v = (a * row[r] * col[c]).abs();
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
            for c in 0..p.num_vars() {
                if hi[c] > 0.0 {
                    col[c] /= pow2_near((lo[c] * hi[c]).sqrt());
                }
            }
        }
        Scaling { row, col }
    }

    /// `A' = R A C`, `b' = R b`, `c' = C c`, bounds divided by `C`.
    fn apply(&self, p: &LpProblem) -> LpProblem {
        LpProblem {
            sense: p.sense,
            objective: p.objective.iter().zip(&self.col).map(|(c, s)| c * s).collect(),
            lower: p.lower.iter().zip(&self.col).map(|(l, s)| l / s).collect(),
            upper: p.upper.iter().zip(&self.col).map(|(u, s)| u / s).collect(),
            rows: p
                .rows
                .iter()
                .zip(&self.row)
                .map(|(r, s)| RowBound {
                    relation: r.relation,
                    rhs: r.rhs * s,
                })
                .collect(),
            entries: p
                .entries
                .iter()
                .map(|&(r, c, a)| (r, c, a * self.row[r] * self.col[c]))
                .collect(),
        }
    }

    fn unscale(&self, mut s: LpSolution) -> LpSolution {
        let mul = |v: &mut Vec<f64>, f: &[f64]| v.iter_mut().zip(f).for_each(|(x, k)| *x *= k);
        if !s.primal.is_empty() {
            mul(&mut s.primal, &self.col);
        }
        if !s.dual.is_empty() {
            mul(&mut s.dual, &self.row);
        }
        if let Some(u) = s.farkas.as_mut() {
            mul(u, &self.row);
        }
        if let Some(d) = s.ray.as_mut() {
            mul(d, &self.col);
        }
        s
    }
}
