use hedge_core::lp::{
    solve, solve_with, verify_farkas, verify_ray, verify_solution, LpBuilder, LpProblem, LpStatus,
    Relation, Sense, SolveOptions, TOL_FEAS, TOL_GAP,
};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INF: f64 = f64::INFINITY;

fn one_step_problem() -> LpProblem {
    let mut b = LpBuilder::new(Sense::Minimize);
    let z = b.add_var(-INF, INF, 1.0);
    let h = b.add_var(0.0, INF, 0.0);
    b.add_row(Relation::Ge, 20.0, &[(z, 1.0), (h, 9.0)]);
    b.add_row(Relation::Ge, 0.0, &[(z, 1.0), (h, -29.0)]);
    b.build().unwrap()
}

#[test]
fn single_variable_bound() {
    let mut b = LpBuilder::new(Sense::Minimize);
    let x = b.add_var(0.0, INF, 1.0);
    b.add_row(Relation::Ge, 3.0, &[(x, 1.0)]);
    let p = b.build().unwrap();
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.primal[0] - 3.0).abs() < 1e-12);
    assert!((s.objective - 3.0).abs() < 1e-12);
    assert!((s.dual[0] - 1.0).abs() < 1e-12);
}

#[test]
fn contradictory_bounds_give_farkas() {
    let mut b = LpBuilder::new(Sense::Minimize);
    let x = b.add_var(0.0, INF, 0.0);
    b.add_row(Relation::Le, -1.0, &[(x, 1.0)]);
    let p = b.build().unwrap();
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Infeasible);
    let check = verify_farkas(&p, s.farkas.as_ref().unwrap());
    assert!(check.valid, "{check:?}");
}

#[test]
fn free_ray_is_unbounded() {
    let mut b = LpBuilder::new(Sense::Maximize);
    let x = b.add_var(-INF, INF, 1.0);
    b.add_row(Relation::Ge, 0.0, &[(x, 1.0)]);
    let p = b.build().unwrap();
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Unbounded);
    let ray = s.ray.as_ref().unwrap();
    assert!((ray[0] - 1.0).abs() < 1e-12);
    assert!(verify_ray(&p, &s.primal, ray).valid);
    assert_eq!(s.objective, INF);
}

#[test]
fn two_constraint_intersection() {
    let p = one_step_problem();
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.primal[0] - 290.0 / 19.0).abs() < 1e-12);
    assert!((s.primal[1] - 10.0 / 19.0).abs() < 1e-12);
    let report = verify_solution(&p, &s);
    assert!(report.max_primal_residual <= 1e-9);
    assert!(report.max_dual_residual <= 1e-9);
    assert!(report.duality_gap <= 1e-9);
}

#[test]
fn exact_mode_pins_rational_optimum() {
    let p = one_step_problem();
    let s = solve_with(&p, &SolveOptions::exact()).unwrap();
    let exact = s.exact.unwrap();
    assert_eq!(exact.objective, BigRational::new(290.into(), 19.into()));
    assert_eq!(exact.primal[1], BigRational::new(10.into(), 19.into()));
}

#[test]
fn perturbed_primal_shows_violation() {
    let p = one_step_problem();
    let mut s = solve(&p).unwrap();
    s.primal[0] -= 1.0;
    let report = verify_solution(&p, &s);
    assert!(report.max_primal_residual >= 1.0 - TOL_FEAS);
    assert!(report.worst_row.is_some());
}

#[test]
fn equality_feasibility_has_zero_residual() {
    let mut b = LpBuilder::new(Sense::Minimize);
    let x = b.add_var(0.0, INF, 0.0);
    let y = b.add_var(0.0, INF, 0.0);
    b.add_row(Relation::Eq, 4.0, &[(x, 1.0), (y, 1.0)]);
    b.add_row(Relation::Eq, 1.0, &[(x, 1.0), (y, -1.0)]);
    let p = b.build().unwrap();
    let s = solve(&p).unwrap();
    let report = verify_solution(&p, &s);
    assert_eq!(report.max_primal_residual, 0.0);
    assert_eq!(report.duality_gap, 0.0);
}

#[test]
fn bounded_and_flipped_columns() {
    // max x + y with x in [-2, 5], y <= 3, x + y <= 6
    let mut b = LpBuilder::new(Sense::Maximize);
    let x = b.add_var(-2.0, 5.0, 1.0);
    let y = b.add_var(-INF, 3.0, 2.0);
    b.add_row(Relation::Le, 6.0, &[(x, 1.0), (y, 1.0)]);
    let p = b.build().unwrap();
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective - 9.0).abs() < 1e-12, "{}", s.objective);
    let report = verify_solution(&p, &s);
    assert!(report.within(TOL_FEAS, TOL_GAP), "{report:?}");
}

#[test]
fn deterministic() {
    let p = one_step_problem();
    assert_eq!(solve(&p).unwrap(), solve(&p).unwrap());
}

fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let n = rng.random_range(1..=30);
    let m = rng.random_range(1..=30);
    let sense = if rng.random_bool(0.5) {
        Sense::Minimize
    } else {
        Sense::Maximize
    };
    let mut b = LpBuilder::new(sense);
    for _ in 0..n {
        let (lo, hi) = match rng.random_range(0..5) {
            0 => (-INF, INF),
            1 => (rng.random_range(-10.0..0.0), INF),
            2 => (-INF, rng.random_range(0.0..10.0)),
            3 => {
                let lo = rng.random_range(-10.0..5.0);
                (lo, lo + rng.random_range(0.0..10.0))
            }
            _ => (0.0, INF),
        };
        let cost = rng.random_range(-10.0..10.0);
        b.add_var(lo, hi, cost);
    }
    for _ in 0..m {
        let mut coefs = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.5) {
                coefs.push((j, rng.random_range(-10.0..10.0)));
            }
        }
        if coefs.is_empty() {
            coefs.push((rng.random_range(0..n), rng.random_range(1.0..10.0)));
        }
        let rel = match rng.random_range(0..3) {
            0 => Relation::Eq,
            1 => Relation::Le,
            _ => Relation::Ge,
        };
        b.add_row(rel, rng.random_range(-10.0..10.0), &coefs);
    }
    b.build().unwrap()
}

#[test]
fn random_lps_certify() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut counts = [0usize; 3];
    for case in 0..500 {
        let p = random_lp(&mut rng);
        let s = solve(&p).unwrap();
        match s.status {
            LpStatus::Optimal => {
                counts[0] += 1;
                let r = verify_solution(&p, &s);
                let scale = 1.0 + s.objective.abs();
                assert!(
                    r.max_primal_residual <= TOL_FEAS && r.max_dual_residual <= TOL_FEAS,
                    "case {case}: {r:?}"
                );
                assert!(r.duality_gap <= TOL_GAP * scale, "case {case}: {r:?}");
            }
            LpStatus::Infeasible => {
                counts[1] += 1;
                let c = verify_farkas(&p, s.farkas.as_ref().unwrap());
                assert!(c.valid, "case {case}: {c:?}\n{}", p.to_debug_text());
            }
            LpStatus::Unbounded => {
                counts[2] += 1;
                let c = verify_ray(&p, &s.primal, s.ray.as_ref().unwrap());
                assert!(c.valid, "case {case}: {c:?}");
            }
        }
    }
    // the generator should exercise every outcome
    assert!(counts.iter().all(|&c| c > 10), "{counts:?}");
}

#[test]
fn debug_dump_round_trips_through_text() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = random_lp(&mut rng);
    let text = p.to_debug_text();
    assert_eq!(text.lines().count(), p.num_rows());
    let mut parsed = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let (head, tail) = line.split_once(" :").unwrap();
        let (rel, rhs) = head.split_once(' ').unwrap();
        assert_eq!(Relation::parse(rel), Some(p.rows()[r].relation));
        assert_eq!(rhs.parse::<f64>().unwrap(), p.rows()[r].rhs);
        for tok in tail.split_whitespace() {
            let (c, a) = tok.split_once(':').unwrap();
            parsed.push((r, c.parse::<usize>().unwrap(), a.parse::<f64>().unwrap()));
        }
    }
    assert_eq!(parsed, p.entries());
}
