//! Dense two-phase primal simplex with Bland's rule.
//!
//! The problem is first brought to `min c'x', A'x' = b', x' >= 0, b' >= 0`:
//! finite lower bounds are shifted out, upper-only bounds are reflected, free
//! columns are split, and finite two-sided boxes become explicit `<=` rows.
//! Once a terminal basis is found the basic solution, the duals and any
//! certificate are recomputed from the original standard-form columns by a
//! fresh LU solve rather than read off the accumulated tableau.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::Field;
use super::{LpError, LpProblem, LpSolution, LpStatus, Relation, Sense};

#[derive(Debug, Clone, Copy)]
enum ColMap {
    Shift { col: usize, lo: f64 },
    Flip { col: usize, hi: f64 },
    Split { pos: usize, neg: usize },
}

pub(super) struct Outcome<T> {
    status: LpStatus,
    pub(super) x: Vec<T>,
    y: Vec<T>,
    pub(super) objective: Option<T>,
    farkas: Option<Vec<T>>,
    ray: Option<Vec<T>>,
    iterations: usize,
}

impl<T: Field> Outcome<T> {
    pub(super) fn to_solution(&self, problem: &LpProblem) -> LpSolution {
        let conv = |v: &Vec<T>| v.iter().map(Field::to_f64).collect::<Vec<f64>>();
        let objective = match (&self.objective, self.status, problem.sense()) {
            (Some(v), _, _) => v.to_f64(),
            (None, LpStatus::Unbounded, Sense::Minimize) => f64::NEG_INFINITY,
            (None, LpStatus::Unbounded, Sense::Maximize) => f64::INFINITY,
            (None, _, Sense::Minimize) => f64::INFINITY,
            (None, _, Sense::Maximize) => f64::NEG_INFINITY,
        };
        LpSolution {
            status: self.status,
            primal: conv(&self.x),
            dual: conv(&self.y),
            objective,
            farkas: self.farkas.as_ref().map(conv),
            ray: self.ray.as_ref().map(conv),
            iterations: self.iterations,
            exact: None,
        }
    }
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    obj: Vec<T>,
    obj_rhs: T,
    /// Columns still updated by pivots; artificials that have left the
    /// basis after phase I are dropped.
    live: Vec<bool>,
}

impl<T: Field> Tableau<T> {
    fn pivot(&mut self, r: usize, e: usize) {
        let piv = self.rows[r][e].clone();
        let mut prow = std::mem::take(&mut self.rows[r]);
        for v in prow.iter_mut() {
            if !v.is_exact_zero() {
                *v = v.div(&piv);
            }
        }
        prow[e] = T::one();
        let prhs = self.rhs[r].div(&piv);
        let nz: Vec<usize> = (0..prow.len())
            .filter(|&k| self.live[k] && !prow[k].is_exact_zero())
            .collect();

        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[e].clone();
            if f.is_exact_zero() {
                continue;
            }
            for &k in &nz {
                row[k].sub_mul_assign(&f, &prow[k]);
            }
            row[e] = T::zero();
            self.rhs[i].sub_mul_assign(&f, &prhs);
        }
        let f = self.obj[e].clone();
        if !f.is_exact_zero() {
            for &k in &nz {
                self.obj[k].sub_mul_assign(&f, &prow[k]);
            }
            self.obj[e] = T::zero();
            self.obj_rhs.sub_mul_assign(&f, &prhs);
        }
        self.rows[r] = prow;
        self.rhs[r] = prhs;
        self.basis[r] = e;
    }

    /// Installs reduced costs for cost vector `c`.
    fn price(&mut self, c: &[T]) {
        let mut obj = c.to_vec();
        let mut obj_rhs = T::zero();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = &c[self.basis[i]];
            if cb.is_exact_zero() {
                continue;
            }
            for (k, v) in row.iter().enumerate() {
                if !v.is_exact_zero() {
                    obj[k].sub_mul_assign(cb, v);
                }
            }
            obj_rhs.sub_mul_assign(cb, &self.rhs[i]);
        }
        self.obj = obj;
        self.obj_rhs = obj_rhs;
    }

    /// Recomputes `B^-1 A` and `B^-1 b` from the original columns, removing
    /// accumulated round-off. Returns false (leaving the tableau untouched)
    /// when the basis matrix is numerically singular.
    /// With `clamp`, small negative levels left by round-off are set to
    /// zero.
    fn reinvert(&mut self, original_rows: &[Vec<T>], original_rhs: &[T], clamp: bool) -> bool {
        let b: Vec<Vec<T>> = original_rows
            .iter()
            .map(|row| self.basis.iter().map(|&c| row[c].clone()).collect())
            .collect();
        let Some(lu) = Lu::factor(b) else {
            return false;
        };
        let m = self.rows.len();
        let ncols = self.live.len();
        let mut col = vec![T::zero(); m];
        for j in 0..ncols {
            if !self.live[j] {
                continue;
            }
            let mut any = false;
            for i in 0..m {
                col[i] = original_rows[i][j].clone();
                any |= !col[i].is_exact_zero();
            }
            let solved = if any { lu.solve(&col) } else { vec![T::zero(); m] };
            for (i, v) in solved.into_iter().enumerate() {
                self.rows[i][j] = if v.is_exact_zero() || v.to_f64().abs() < 1e-14 { T::zero() } else { v };
            }
        }
        for (i, &c) in self.basis.iter().enumerate() {
            for (k, row) in self.rows.iter_mut().enumerate() {
                row[c] = if k == i { T::one() } else { T::zero() };
            }
        }
        self.rhs = lu
            .solve(original_rhs)
            .into_iter()
            .map(|v| if clamp && v.to_f64() < 0.0 { T::zero() } else { v })
            .collect();
        true
    }
}

enum Termination {
    Optimal,
    Unbounded(usize),
}

/// Pivots between reinversions in floating point.
const REINVERT_EVERY: usize = 100;
/// Consecutive degenerate pivots after which a stalled tableau is
/// perturbed (float) or priced by Bland's rule (exact).
const STALL_LIMIT: usize = 50;
/// Perturbations allowed per phase before float pricing also falls back
/// to Bland's rule.
const MAX_PERTURBATIONS: usize = 5;
/// Relative size of the random shifts added to basic levels.
const PERTURBATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    /// Most negative reduced cost; ratio ties go to the largest pivot.
    Dantzig,
    /// Lowest index enters, lowest basic index leaves on ties. Finite in
    /// exact arithmetic.
    Bland,
}

struct Phase<'a, T> {
    enterable: &'a [bool],
    cost: &'a [T],
    /// `Some(n_real)` in phase II: basic artificials must stay at zero.
    pin_artificials: Option<usize>,
    original_rows: &'a [Vec<T>],
    original_rhs: &'a [T],
}

/// Raises every basic level by a small random amount, which is the same
/// as solving with right-hand side `b + B ε`. Returns that right-hand side
/// so later reinversions stay consistent with the tableau.
fn perturb<T: Field>(tab: &mut Tableau<T>, original_rows: &[Vec<T>], original_rhs: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut b = original_rhs.to_vec();
    for i in 0..tab.rows.len() {
        let level = tab.rhs[i].to_f64().max(0.0);
        let eps = T::from_f64(PERTURBATION * (1.0 + rng.random::<f64>()) * (1.0 + level));
        tab.rhs[i] = tab.rhs[i].add(&eps);
        let c = tab.basis[i];
        for (k, row) in original_rows.iter().enumerate() {
            if !row[c].is_exact_zero() {
                b[k] = b[k].add(&row[c].mul(&eps));
            }
        }
    }
    b
}

/// Dual simplex pivots that drive negative basic levels back to zero
/// while keeping reduced costs nonnegative. Used once a perturbation has
/// been removed, when the levels are off by round-off-sized amounts.
fn restore_feasibility<T: Field>(
    tab: &mut Tableau<T>,
    phase: &Phase<'_, T>,
    iterations: &mut usize,
    limit: usize,
) -> Result<(), LpError> {
    loop {
        let worst = (0..tab.rows.len())
            .filter(|&i| tab.rhs[i].to_f64() < -HARRIS_DELTA)
            .min_by(|&a, &b| tab.rhs[a].to_f64().total_cmp(&tab.rhs[b].to_f64()));
        let Some(r) = worst else {
            return Ok(());
        };
        let entering = (0..phase.enterable.len())
            .filter(|&j| phase.enterable[j] && tab.live[j] && tab.rows[r][j].is_negative())
            .min_by(|&a, &b| {
                let ratio = |j: usize| tab.obj[j].to_f64().max(0.0) / -tab.rows[r][j].to_f64();
                ratio(a).total_cmp(&ratio(b))
            });
        let Some(e) = entering else {
            // Nothing can repair this row; the caller's clamping takes over.
            return Ok(());
        };
        *iterations += 1;
        if *iterations > limit {
            return Err(LpError::IterationLimit(limit));
        }
        tab.pivot(r, e);
    }
}

/// Primal simplex iterations with Dantzig pricing.
///
/// After [`STALL_LIMIT`] degenerate pivots in a row, an exact tableau
/// switches to Bland's rule until a step makes progress. A float tableau
/// is perturbed instead; the perturbation is removed at termination and
/// any resulting infeasibility repaired by dual pivots before iterating
/// on. Float tableaux are also rebuilt from the original columns every
/// [`REINVERT_EVERY`] pivots and once more before any termination is
/// accepted.
fn iterate<T: Field>(
    tab: &mut Tableau<T>,
    phase: &Phase<'_, T>,
    iterations: &mut usize,
    limit: usize,
) -> Result<Termination, LpError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut stalled = 0;
    let mut perturbed: Option<Vec<T>> = None;
    let mut perturbations = 0;
    // The incoming tableau may carry round-off from an earlier phase.
    let mut since_reinvert = 1;
    loop {
        if !T::EXACT && since_reinvert >= REINVERT_EVERY {
            let rhs = perturbed.as_deref().unwrap_or(phase.original_rhs);
            if tab.reinvert(phase.original_rows, rhs, true) {
                tab.price(phase.cost);
            }
            since_reinvert = 0;
        }
        if !T::EXACT && stalled >= STALL_LIMIT && perturbed.is_none() && perturbations < MAX_PERTURBATIONS {
            perturbed = Some(perturb(tab, phase.original_rows, phase.original_rhs, &mut rng));
            perturbations += 1;
            stalled = 0;
        }
        let rule = if stalled >= STALL_LIMIT { Rule::Bland } else { Rule::Dantzig };
        let mut improving = (0..phase.enterable.len()).filter(|&j| phase.enterable[j] && tab.obj[j].is_negative());
        let entering = match rule {
            Rule::Bland => improving.next(),
            Rule::Dantzig => improving.min_by(|&a, &b| {
                if tab.obj[a].lt(&tab.obj[b]) {
                    std::cmp::Ordering::Less
                } else if tab.obj[b].lt(&tab.obj[a]) {
                    std::cmp::Ordering::Greater
                } else {
                    a.cmp(&b)
                }
            }),
        };
        let outcome = match entering {
            None => Some(Termination::Optimal),
            Some(e) => match leaving_row(tab, e, phase.pin_artificials, rule) {
                None => Some(Termination::Unbounded(e)),
                Some((r, degenerate)) => {
                    *iterations += 1;
                    if *iterations > limit {
                        return Err(LpError::IterationLimit(limit));
                    }
                    stalled = if degenerate { stalled + 1 } else { 0 };
                    tab.pivot(r, e);
                    since_reinvert += 1;
                    None
                }
            },
        };
        if let Some(term) = outcome {
            if T::EXACT {
                return Ok(term);
            }
            if perturbed.take().is_some() {
                if tab.reinvert(phase.original_rows, phase.original_rhs, false) {
                    tab.price(phase.cost);
                }
                restore_feasibility(tab, phase, iterations, limit)?;
                stalled = 0;
            } else if since_reinvert == 0 {
                return Ok(term);
            }
            since_reinvert = REINVERT_EVERY;
        }
    }
}

/// Primal infeasibility tolerated by the float ratio test.
const HARRIS_DELTA: f64 = 1e-9;

/// Ratio test for entering column `e`; returns the pivot row and whether
/// the step is degenerate.
///
/// With `pin_artificials = Some(n_real)` (phase II), a basic artificial
/// blocks with ratio zero whenever its entry is nonzero, so it stays at
/// level zero. Exact tableaux use the textbook minimum ratio. Float
/// tableaux use Harris's two passes: the first finds the longest step
/// that keeps every basic variable above `-HARRIS_DELTA`, the second picks
/// the largest pivot among rows blocking within that step.
fn leaving_row<T: Field>(
    tab: &Tableau<T>,
    e: usize,
    pin_artificials: Option<usize>,
    rule: Rule,
) -> Option<(usize, bool)> {
    // (row, level, pivot magnitude)
    let mut candidates: Vec<(usize, T, T)> = Vec::new();
    for i in 0..tab.rows.len() {
        let a = &tab.rows[i][e];
        let pinned = pin_artificials.is_some_and(|n_real| tab.basis[i] >= n_real);
        if pinned && !a.is_zero() {
            candidates.push((i, T::zero(), a.abs()));
        } else if a.is_positive() {
            let rhs = if tab.rhs[i].is_negative() { T::zero() } else { tab.rhs[i].clone() };
            candidates.push((i, rhs, a.clone()));
        }
    }
    if candidates.is_empty() {
        return None;
    }
    let by_pivot = |a: &&(usize, T, T), b: &&(usize, T, T)| {
        if a.2.lt(&b.2) {
            std::cmp::Ordering::Less
        } else if b.2.lt(&a.2) {
            std::cmp::Ordering::Greater
        } else {
            tab.basis[b.0].cmp(&tab.basis[a.0])
        }
    };
    if T::EXACT {
        let ratio = |c: &(usize, T, T)| c.1.div(&c.2);
        let min = candidates.iter().map(ratio).fold(None::<T>, |acc, r| match acc {
            Some(b) if !r.lt(&b) => Some(b),
            _ => Some(r),
        })?;
        let tied: Vec<_> = candidates.iter().filter(|c| ratio(c).approx_eq(&min)).collect();
        let chosen = match rule {
            Rule::Bland => tied.into_iter().min_by_key(|c| tab.basis[c.0]),
            Rule::Dantzig => tied.into_iter().max_by(by_pivot),
        };
        return chosen.map(|c| (c.0, min.is_exact_zero()));
    }
    let level = |c: &(usize, T, T)| c.1.to_f64();
    let pivot = |c: &(usize, T, T)| c.2.to_f64();
    let bound = candidates
        .iter()
        .map(|c| (level(c) + HARRIS_DELTA) / pivot(c))
        .fold(f64::INFINITY, f64::min);
    let within: Vec<_> = candidates.iter().filter(|c| level(c) / pivot(c) <= bound).collect();
    let chosen = match rule {
        Rule::Bland => within.into_iter().min_by_key(|c| tab.basis[c.0]),
        Rule::Dantzig => within.into_iter().max_by(by_pivot),
    };
    chosen.map(|c| (c.0, level(c) / pivot(c) <= HARRIS_DELTA))
}

struct Lu<T> {
    lu: Vec<Vec<T>>,
    perm: Vec<usize>,
}

impl<T: Field> Lu<T> {
    fn factor(mut a: Vec<Vec<T>>) -> Option<Self> {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k][k].abs();
            for (i, row) in a.iter().enumerate().skip(k + 1) {
                let v = row[k].abs();
                if best.lt(&v) {
                    best = v;
                    p = i;
                }
            }
            let singular = if T::EXACT {
                best.is_exact_zero()
            } else {
                best.to_f64() < 1e-13
            };
            if singular {
                return None;
            }
            a.swap(k, p);
            perm.swap(k, p);
            let (head, tail) = a.split_at_mut(k + 1);
            let pivot_row = &head[k];
            for row in tail.iter_mut() {
                if row[k].is_exact_zero() {
                    continue;
                }
                let f = row[k].div(&pivot_row[k]);
                for j in k + 1..n {
                    if !pivot_row[j].is_exact_zero() {
                        row[j].sub_mul_assign(&f, &pivot_row[j]);
                    }
                }
                row[k] = f;
            }
        }
        Some(Lu { lu: a, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.len();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            for j in 0..i {
                let (l, xj) = (self.lu[i][j].clone(), x[j].clone());
                x[i].sub_mul_assign(&l, &xj);
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let (u, xj) = (self.lu[i][j].clone(), x[j].clone());
                x[i].sub_mul_assign(&u, &xj);
            }
            x[i] = x[i].div(&self.lu[i][i]);
        }
        x
    }

    fn solve_transpose(&self, c: &[T]) -> Vec<T> {
        let n = self.lu.len();
        // U^T w = c
        let mut w: Vec<T> = c.to_vec();
        for i in 0..n {
            for j in 0..i {
                let (u, wj) = (self.lu[j][i].clone(), w[j].clone());
                w[i].sub_mul_assign(&u, &wj);
            }
            w[i] = w[i].div(&self.lu[i][i]);
        }
        // L^T v = w
        for i in (0..n).rev() {
            for j in i + 1..n {
                let (l, wj) = (self.lu[j][i].clone(), w[j].clone());
                w[i].sub_mul_assign(&l, &wj);
            }
        }
        let mut y = vec![T::zero(); n];
        for (i, v) in w.into_iter().enumerate() {
            y[self.perm[i]] = v;
        }
        y
    }
}

pub(super) fn solve_generic<T: Field>(
    problem: &LpProblem,
    max_iterations: Option<usize>,
) -> Result<Outcome<T>, LpError> {
    let n_orig = problem.num_vars();
    let m_orig = problem.num_rows();
    let maximize = problem.sense() == Sense::Maximize;

    // Column transformation.
    let mut colmap = Vec::with_capacity(n_orig);
    let mut n_struct = 0;
    let mut box_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n_orig {
        let (lo, hi) = (problem.lower()[j], problem.upper()[j]);
        let map = if lo.is_finite() {
            if hi.is_finite() {
                box_rows.push((n_struct, hi - lo));
            }
            ColMap::Shift { col: n_struct, lo }
        } else if hi.is_finite() {
            ColMap::Flip { col: n_struct, hi }
        } else {
            n_struct += 1;
            ColMap::Split {
                pos: n_struct - 1,
                neg: n_struct,
            }
        };
        n_struct += 1;
        colmap.push(map);
    }

    let m = m_orig + box_rows.len();
    let n_slack = problem
        .rows()
        .iter()
        .filter(|r| r.relation != Relation::Eq)
        .count()
        + box_rows.len();
    let n_real = n_struct + n_slack;

    let mut rows: Vec<Vec<T>> = vec![vec![T::zero(); n_real]; m];
    let mut rhs: Vec<T> = Vec::with_capacity(m);
    let mut slack_of_row: Vec<Option<(usize, T)>> = vec![None; m];

    for row in problem.rows() {
        rhs.push(T::from_f64(row.rhs));
    }
    for &(r, c, a) in problem.entries() {
        let at = T::from_f64(a);
        match colmap[c] {
            ColMap::Shift { col, lo } => {
                if lo != 0.0 {
                    rhs[r].sub_mul_assign(&at, &T::from_f64(lo));
                }
                rows[r][col] = at;
            }
            ColMap::Flip { col, hi } => {
                if hi != 0.0 {
                    rhs[r].sub_mul_assign(&at, &T::from_f64(hi));
                }
                rows[r][col] = at.neg();
            }
            ColMap::Split { pos, neg } => {
                rows[r][neg] = at.neg();
                rows[r][pos] = at;
            }
        }
    }
    let mut next_slack = n_struct;
    for (r, row) in problem.rows().iter().enumerate() {
        let coef = match row.relation {
            Relation::Eq => continue,
            Relation::Le => T::one(),
            Relation::Ge => T::one().neg(),
        };
        rows[r][next_slack] = coef.clone();
        slack_of_row[r] = Some((next_slack, coef));
        next_slack += 1;
    }
    for (k, &(col, width)) in box_rows.iter().enumerate() {
        let r = m_orig + k;
        rows[r][col] = T::one();
        rows[r][next_slack] = T::one();
        slack_of_row[r] = Some((next_slack, T::one()));
        rhs.push(T::from_f64(width));
        next_slack += 1;
    }

    // Costs in minimisation form.
    let mut cost = vec![T::zero(); n_real];
    for (j, &c) in problem.objective().iter().enumerate() {
        let c = if maximize { -c } else { c };
        if c == 0.0 {
            continue;
        }
        let ct = T::from_f64(c);
        match colmap[j] {
            ColMap::Shift { col, .. } => cost[col] = ct,
            ColMap::Flip { col, .. } => cost[col] = ct.neg(),
            ColMap::Split { pos, neg } => {
                cost[neg] = ct.neg();
                cost[pos] = ct;
            }
        }
    }

    // Nonnegative right-hand sides, initial basis.
    let mut sign = vec![1i8; m];
    let mut basis = Vec::with_capacity(m);
    let mut needs_art = Vec::new();
    for r in 0..m {
        // A `>=` row with zero right-hand side is flipped too, so its
        // slack can start basic.
        let is_ge = r < m_orig && problem.rows()[r].relation == Relation::Ge;
        let negative = if T::EXACT {
            rhs[r].is_negative() || (is_ge && rhs[r].is_exact_zero())
        } else {
            let v = rhs[r].to_f64();
            v < 0.0 || (is_ge && v == 0.0)
        };
        if negative {
            sign[r] = -1;
            rhs[r] = rhs[r].neg();
            for v in rows[r].iter_mut() {
                if !v.is_exact_zero() {
                    *v = v.neg();
                }
            }
        }
        match &slack_of_row[r] {
            Some((col, coef)) if (sign[r] == 1) == coef.is_positive() => basis.push(*col),
            _ => {
                basis.push(usize::MAX);
                needs_art.push(r);
            }
        }
    }
    let n_art = needs_art.len();
    let ncols = n_real + n_art;
    for row in rows.iter_mut() {
        row.resize(ncols, T::zero());
    }
    for (k, &r) in needs_art.iter().enumerate() {
        rows[r][n_real + k] = T::one();
        basis[r] = n_real + k;
    }
    cost.resize(ncols, T::zero());

    let original_rows = rows.clone();
    let original_rhs = rhs.clone();
    let enterable: Vec<bool> = (0..ncols).map(|j| j < n_real).collect();
    let limit = max_iterations.unwrap_or_else(|| 100_000.max(200 * (m + ncols)));
    let mut iterations = 0;

    let mut tab = Tableau {
        rows,
        rhs,
        basis,
        obj: Vec::new(),
        obj_rhs: T::zero(),
        live: vec![true; ncols],
    };

    let basis_lu = |basis: &[usize]| {
        let b: Vec<Vec<T>> = original_rows
            .iter()
            .map(|row| basis.iter().map(|&c| row[c].clone()).collect())
            .collect();
        Lu::factor(b)
    };

    // Phase I.
    if n_art > 0 {
        let phase1_cost: Vec<T> = (0..ncols)
            .map(|j| if j >= n_real { T::one() } else { T::zero() })
            .collect();
        tab.price(&phase1_cost);
        let phase = Phase {
            enterable: &enterable,
            cost: &phase1_cost,
            pin_artificials: None,
            original_rows: &original_rows,
            original_rhs: &original_rhs,
        };
        iterate(&mut tab, &phase, &mut iterations, limit)?;
        let infeasibility = tab.obj_rhs.neg();
        let scale = original_rhs
            .iter()
            .map(|v| v.to_f64().abs())
            .fold(1.0, f64::max);
        let infeasible = if T::EXACT {
            infeasibility.is_positive()
        } else {
            infeasibility.to_f64() > 1e-9 * scale
        };
        if infeasible {
            let cb: Vec<T> = tab.basis.iter().map(|&c| phase1_cost[c].clone()).collect();
            let w = match basis_lu(&tab.basis) {
                Some(lu) => lu.solve_transpose(&cb),
                None => tableau_duals(&tab, &phase1_cost, &original_rows),
            };
            let farkas = (0..m_orig)
                .map(|r| if sign[r] < 0 { w[r].neg() } else { w[r].clone() })
                .collect();
            return Ok(Outcome {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                y: Vec::new(),
                objective: None,
                farkas: Some(farkas),
                ray: None,
                iterations,
            });
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] < n_real {
                continue;
            }
            let best = (0..n_real)
                .filter(|&j| !tab.rows[r][j].is_zero())
                .max_by(|&a, &b| tab.rows[r][a].abs().to_f64().total_cmp(&tab.rows[r][b].abs().to_f64()));
            if let Some(j) = best {
                tab.pivot(r, j);
            }
        }
    }

    // Phase II.
    let basic_art: Vec<usize> = tab.basis.iter().copied().filter(|&c| c >= n_real).collect();
    for j in n_real..ncols {
        tab.live[j] = basic_art.contains(&j);
    }
    tab.price(&cost);
    let phase = Phase {
        enterable: &enterable,
        cost: &cost,
        pin_artificials: Some(n_real),
        original_rows: &original_rows,
        original_rhs: &original_rhs,
    };
    let term = iterate(&mut tab, &phase, &mut iterations, limit)?;

    let lu = basis_lu(&tab.basis);
    let x_basic = match &lu {
        Some(lu) => lu.solve(&original_rhs),
        None => tab.rhs.clone(),
    };
    let mut x_std = vec![T::zero(); ncols];
    for (k, &c) in tab.basis.iter().enumerate() {
        x_std[c] = x_basic[k].clone();
    }
    let to_original = |v: &[T], with_offsets: bool| -> Vec<T> {
        colmap
            .iter()
            .map(|map| match *map {
                ColMap::Shift { col, lo } => {
                    if with_offsets {
                        T::from_f64(lo).add(&v[col])
                    } else {
                        v[col].clone()
                    }
                }
                ColMap::Flip { col, hi } => {
                    if with_offsets {
                        T::from_f64(hi).sub(&v[col])
                    } else {
                        v[col].neg()
                    }
                }
                ColMap::Split { pos, neg } => v[pos].sub(&v[neg]),
            })
            .collect()
    };
    let x = to_original(&x_std, true);

    match term {
        Termination::Unbounded(e) => {
            let col: Vec<T> = original_rows.iter().map(|row| row[e].clone()).collect();
            let d = match &lu {
                Some(lu) => lu.solve(&col),
                None => tab.rows.iter().map(|row| row[e].clone()).collect(),
            };
            let mut dir = vec![T::zero(); ncols];
            for (k, &c) in tab.basis.iter().enumerate() {
                dir[c] = d[k].neg();
            }
            dir[e] = T::one();
            let mut ray = to_original(&dir, false);
            let scale = ray.iter().fold(T::zero(), |acc, v| {
                let a = v.abs();
                if acc.lt(&a) {
                    a
                } else {
                    acc
                }
            });
            if !scale.is_exact_zero() {
                for v in ray.iter_mut() {
                    *v = v.div(&scale);
                }
            }
            Ok(Outcome {
                status: LpStatus::Unbounded,
                x,
                y: Vec::new(),
                objective: None,
                farkas: None,
                ray: Some(ray),
                iterations,
            })
        }
        Termination::Optimal => {
            let cb: Vec<T> = tab.basis.iter().map(|&c| cost[c].clone()).collect();
            let y_std = match &lu {
                Some(lu) => lu.solve_transpose(&cb),
                None => tableau_duals(&tab, &cost, &original_rows),
            };
            let y = (0..m_orig)
                .map(|r| {
                    let flip = (sign[r] < 0) != maximize;
                    if flip {
                        y_std[r].neg()
                    } else {
                        y_std[r].clone()
                    }
                })
                .collect();
            let objective = problem
                .objective()
                .iter()
                .zip(&x)
                .filter(|(c, _)| **c != 0.0)
                .fold(T::zero(), |acc, (c, v)| acc.add(&T::from_f64(*c).mul(v)));
            Ok(Outcome {
                status: LpStatus::Optimal,
                x,
                y,
                objective: Some(objective),
                farkas: None,
                ray: None,
                iterations,
            })
        }
    }
}

/// Fallback duals read from the reduced costs of each row's initial
/// identity column.
fn tableau_duals<T: Field>(tab: &Tableau<T>, cost: &[T], original_rows: &[Vec<T>]) -> Vec<T> {
    let m = original_rows.len();
    let ncols = cost.len();
    let mut tab = Tableau {
        rows: tab.rows.clone(),
        rhs: tab.rhs.clone(),
        basis: tab.basis.clone(),
        obj: Vec::new(),
        obj_rhs: T::zero(),
        live: tab.live.clone(),
    };
    tab.price(cost);
    (0..m)
        .map(|r| {
            let unit = (0..ncols).find(|&j| {
                original_rows[r][j].to_f64() == 1.0
                    && original_rows
                        .iter()
                        .enumerate()
                        .all(|(i, row)| i == r || row[j].is_exact_zero())
            });
            match unit {
                Some(j) => cost[j].sub(&tab.obj[j]),
                None => T::zero(),
            }
        })
        .collect()
}
