//! Certificate checks computed from problem data alone.

use super::{LpProblem, LpSolution, Relation, Sense};

/// Residuals of an optimal primal/dual pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionReport {
    pub max_primal_residual: f64,
    pub max_dual_residual: f64,
    pub max_complementarity: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// Index of the worst primal row, if any row is violated.
    pub worst_row: Option<usize>,
}

impl SolutionReport {
    pub fn within(&self, tol_feas: f64, tol_gap: f64) -> bool {
        self.max_primal_residual <= tol_feas
            && self.max_dual_residual <= tol_feas
            && self.duality_gap <= tol_gap
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub valid: bool,
    /// Strict-inequality slack of the certificate; positive when valid.
    pub margin: f64,
    pub detail: String,
}

fn row_violation(relation: Relation, activity: f64, rhs: f64) -> f64 {
    match relation {
        Relation::Le => (activity - rhs).max(0.0),
        Relation::Ge => (rhs - activity).max(0.0),
        Relation::Eq => (activity - rhs).abs(),
    }
}

/// Largest constraint or bound violation of `x`, with the offending row.
pub fn primal_residual(problem: &LpProblem, x: &[f64]) -> (f64, Option<usize>) {
    let act = problem.activities(x);
    let mut worst = 0.0;
    let mut worst_row = None;
    for (r, row) in problem.rows().iter().enumerate() {
        let v = row_violation(row.relation, act[r], row.rhs);
        if v > worst {
            worst = v;
            worst_row = Some(r);
        }
    }
    for (j, &v) in x.iter().enumerate() {
        let over = (problem.lower()[j] - v).max(v - problem.upper()[j]).max(0.0);
        if over > worst {
            worst = over;
        }
    }
    (worst, worst_row)
}

/// Recomputes primal/dual residuals and the duality gap of an optimal
/// solution by direct substitution.
pub fn verify_solution(problem: &LpProblem, solution: &LpSolution) -> SolutionReport {
    let x = &solution.primal;
    let y = &solution.dual;
    let minimize = problem.sense() == Sense::Minimize;
    let (max_primal_residual, worst_row) = primal_residual(problem, x);
    let act = problem.activities(x);

    let mut dual_res: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut dual_obj = 0.0;
    for (r, row) in problem.rows().iter().enumerate() {
        // sensitivity sign: tightening direction
        let wrong_sign = match (row.relation, minimize) {
            (Relation::Eq, _) => 0.0,
            (Relation::Ge, true) | (Relation::Le, false) => (-y[r]).max(0.0),
            (Relation::Le, true) | (Relation::Ge, false) => y[r].max(0.0),
        };
        dual_res = dual_res.max(wrong_sign);
        comp = comp.max((y[r] * (act[r] - row.rhs)).abs());
        dual_obj += y[r] * row.rhs;
    }
    let at_y = problem.transpose_times(y);
    for j in 0..problem.num_vars() {
        let r = problem.objective()[j] - at_y[j];
        let (lo, hi) = (problem.lower()[j], problem.upper()[j]);
        // which bound the reduced cost pushes against
        let toward_lower = if minimize { r > 0.0 } else { r < 0.0 };
        let bound = if toward_lower { lo } else { hi };
        if bound.is_finite() {
            dual_obj += r * bound;
            comp = comp.max((r * (x[j] - bound)).abs());
        } else {
            dual_res = dual_res.max(r.abs());
        }
    }
    let primal_obj = problem.objective_value(x);
    SolutionReport {
        max_primal_residual,
        max_dual_residual: dual_res,
        max_complementarity: comp,
        primal_objective: primal_obj,
        dual_objective: dual_obj,
        duality_gap: (primal_obj - dual_obj).abs(),
        worst_row,
    }
}

/// Checks an infeasibility certificate `u` (one multiplier per row).
pub fn verify_farkas(problem: &LpProblem, u: &[f64]) -> CertificateCheck {
    const TOL: f64 = 1e-9;
    if u.len() != problem.num_rows() {
        return CertificateCheck {
            valid: false,
            margin: f64::NAN,
            detail: format!("{} multipliers for {} rows", u.len(), problem.num_rows()),
        };
    }
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return CertificateCheck {
            valid: false,
            margin: 0.0,
            detail: "zero multiplier vector".into(),
        };
    }
    let u: Vec<f64> = u.iter().map(|v| v / scale).collect();
    for (r, row) in problem.rows().iter().enumerate() {
        let bad = match row.relation {
            Relation::Ge => u[r] < -TOL,
            Relation::Le => u[r] > TOL,
            Relation::Eq => false,
        };
        if bad {
            return CertificateCheck {
                valid: false,
                margin: f64::NAN,
                detail: format!("row {r} multiplier {} has the wrong sign", u[r]),
            };
        }
    }
    let d = problem.transpose_times(&u);
    let mut sup = 0.0;
    for (j, &dj) in d.iter().enumerate() {
        if dj.abs() <= TOL {
            continue;
        }
        let bound = if dj > 0.0 {
            problem.upper()[j]
        } else {
            problem.lower()[j]
        };
        if !bound.is_finite() {
            return CertificateCheck {
                valid: false,
                margin: f64::NAN,
                detail: format!("column {j} combination {dj} is unbounded over the box"),
            };
        }
        sup += dj * bound;
    }
    let ub: f64 = u.iter().zip(problem.rows()).map(|(v, row)| v * row.rhs).sum();
    let margin = ub - sup;
    CertificateCheck {
        valid: margin > TOL,
        margin,
        detail: format!("u.b = {ub}, sup over box = {sup}"),
    }
}

/// Checks that `ray` is a feasible improving direction from the feasible
/// point `base`.
pub fn verify_ray(problem: &LpProblem, base: &[f64], ray: &[f64]) -> CertificateCheck {
    const TOL: f64 = 1e-9;
    let fail = |detail: String| CertificateCheck {
        valid: false,
        margin: f64::NAN,
        detail,
    };
    if ray.len() != problem.num_vars() || base.len() != problem.num_vars() {
        return fail("dimension mismatch".into());
    }
    let (res, _) = primal_residual(problem, base);
    if res > 1e-7 {
        return fail(format!("base point violates constraints by {res}"));
    }
    let act = problem.activities(ray);
    for (r, row) in problem.rows().iter().enumerate() {
        let bad = match row.relation {
            Relation::Le => act[r] > TOL,
            Relation::Ge => act[r] < -TOL,
            Relation::Eq => act[r].abs() > TOL,
        };
        if bad {
            return fail(format!("row {r} moves by {} along the ray", act[r]));
        }
    }
    for (j, &v) in ray.iter().enumerate() {
        if (problem.lower()[j].is_finite() && v < -TOL) || (problem.upper()[j].is_finite() && v > TOL)
        {
            return fail(format!("column {j} leaves its bounds along the ray"));
        }
    }
    let slope = problem.objective_value(ray);
    let margin = match problem.sense() {
        Sense::Minimize => -slope,
        Sense::Maximize => slope,
    };
    CertificateCheck {
        valid: margin > TOL,
        margin,
        detail: format!("objective slope {slope}"),
    }
}
