//! The five run modes. Each returns a JSON report whose `verdict` alone
//! decides the exit code, plus any certificate files to write.

use std::collections::BTreeMap;
use std::time::Instant;

use hedge_core::dual::{
    fit_sandwich_by_id, solve_dual, validate_cps, validate_single, ConsistentPriceSystem, CpsReport,
    DualCertificate, DualError, SandwichFit,
};
use hedge_core::exec::Execution;
use hedge_core::lp::{LpError, SolveOptions};
use hedge_core::primal::{detect_free_lunch, solve_primal, FreeLunchVerdict, PrimalCertificate, PrimalError, PrimalOptions};
use hedge_core::tree::{load_document, save_family, ClaimFamily, ModelFamily};
use hedge_core::wealth::wealth_values;
use serde_json::{json, Value};

use crate::config::{read_file, Mode, Run};
use crate::error::CliError;

pub struct Outcome {
    pub report: Value,
    pub files: Vec<(&'static str, String)>,
    pub summary: String,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        passed(&self.report)
    }
}

pub fn passed(report: &Value) -> bool {
    report.get("verdict").and_then(Value::as_str) == Some("PASS")
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("json values serialise")
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn run(run: &Run) -> Result<Outcome, CliError> {
    match run.mode {
        Mode::Solve => solve(run),
        Mode::Generate => generate(run),
        Mode::DetectArbitrage => detect_arbitrage(run),
        Mode::CheckCps => check_cps(run),
        Mode::FitSandwich => fit_sandwich(run),
    }
}

fn exact_requested() -> bool {
    std::env::var("HEDGE_EXACT").is_ok_and(|v| v == "1")
}

/// Runs `f` in the requested arithmetic. An exact solve that is too large
/// is retried in floating point with a warning.
fn with_fallback<T, E>(
    exact: bool,
    what: &str,
    f: impl Fn(SolveOptions) -> Result<T, E>,
    too_large: impl Fn(&E) -> bool,
) -> (Result<T, E>, &'static str) {
    if exact {
        match f(SolveOptions::exact()) {
            Err(e) if too_large(&e) => {
                eprintln!("warning: {what} program too large for exact arithmetic, solving in floating point");
            }
            other => return (other, "exact"),
        }
    }
    (f(SolveOptions::default()), "float")
}

fn require_claims(claims: Option<ClaimFamily>, mode: Mode) -> Result<ClaimFamily, CliError> {
    claims.ok_or_else(|| {
        CliError::Schema(format!(
            "mode {:?} needs claims: add \"claims\" to the family document or \"claim\" to the config",
            mode.name()
        ))
    })
}

fn violations(report: &CpsReport) -> Vec<String> {
    report.violations.iter().map(ToString::to_string).collect()
}

fn scaled(tol: f64, x: f64) -> f64 {
    tol * x.abs().max(1.0)
}

fn thetas(family: &ModelFamily) -> Vec<String> {
    family.thetas().map(String::from).collect()
}

fn solve(run: &Run) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let (family, claims) = run.family()?;
    let claims = require_claims(claims, run.mode)?;
    let tree = family.tree();
    let exec = Execution::default();
    let exact = exact_requested();
    let floor = run.config.floor;

    let ((primal, primal_arith, primal_ms), (dual, dual_arith, dual_ms)) = exec.join(
        || {
            let t = Instant::now();
            let (r, arith) = with_fallback(
                exact,
                "primal",
                |solve| solve_primal(&family, &claims, &PrimalOptions { floor, solve }),
                |e| matches!(e, PrimalError::Lp(LpError::ExactTooLarge(_))),
            );
            (r, arith, millis(t))
        },
        || {
            let t = Instant::now();
            let (r, arith) = with_fallback(
                exact,
                "dual",
                |solve| solve_dual(&family, &claims, &solve),
                |e| matches!(e, DualError::Lp(LpError::ExactTooLarge(_))),
            );
            (r, arith, millis(t))
        },
    );

    let mut reasons = Vec::new();
    let primal = match primal {
        Ok(r) => Some(r.certificate),
        Err(PrimalError::FreeLunch { theta }) => {
            reasons.push(format!("model {theta:?} admits a free lunch; the superhedging price is unbounded below"));
            None
        }
        Err(PrimalError::Infeasible) => {
            reasons.push("no admissible strategy superhedges the claim".to_string());
            None
        }
        Err(e) => return Err(e.into()),
    };
    let dual = match dual {
        Ok(r) => Some(r.certificate),
        Err(DualError::NoConsistentPriceSystem) => {
            reasons.push("no consistent price system exists for this family".to_string());
            None
        }
        Err(e) => return Err(e.into()),
    };

    // Re-derive every number from the certificates rather than the solver.
    let primal_check = primal.as_ref().map(|cert| {
        let fresh = PrimalCertificate::evaluate(&family, &claims, cert.price, cert.strategy.clone());
        let verified = cert.verify(&family, &claims, run.tol_feas);
        let worst = fresh.slacks.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        if !verified {
            reasons.push(format!("primal certificate fails re-evaluation (worst slack {worst:e})"));
        }
        (verified, worst, fresh.floor)
    });
    let dual_check = dual.as_ref().map(|cert| {
        let report = validate_cps(&family, &cert.cps, run.tol_feas);
        let value = cert.cps.normalized(tree).price(tree, &claims);
        if !report.valid() {
            reasons.push(format!("dual certificate invalid: {}", violations(&report).join("; ")));
        }
        (report, value)
    });
    let gap = match (&primal, &dual_check) {
        (Some(p), Some((_, d))) => Some((p.price - d).abs()),
        _ => None,
    };
    if let Some(g) = gap {
        if g > run.tol_gap {
            reasons.push(format!("duality gap {g:e} exceeds {:e}", run.tol_gap));
        }
    }
    let ok = primal_check.as_ref().is_some_and(|c| c.0)
        && dual_check.as_ref().is_some_and(|c| c.0.valid())
        && gap.is_some_and(|g| g <= run.tol_gap);

    let t = Instant::now();
    let names = thetas(&family);
    let per_model = exec.map(&names, |theta| -> Result<(Option<f64>, bool), CliError> {
        let single = family.restrict(&[theta.as_str()])?;
        let single_claims = claims.restrict(&[theta.as_str()])?;
        let options = PrimalOptions {
            floor,
            solve: SolveOptions::default(),
        };
        let price = match solve_primal(&single, &single_claims, &options) {
            Ok(r) => Some(r.certificate.price),
            Err(PrimalError::FreeLunch { .. } | PrimalError::Infeasible) => None,
            Err(e) => return Err(e.into()),
        };
        let lunch = detect_free_lunch(&family, theta)?.is_free_lunch();
        Ok((price, lunch))
    });
    let individual_ms = millis(t);
    let mut individual = BTreeMap::new();
    let mut arbitrage = BTreeMap::new();
    for (theta, r) in names.iter().zip(per_model) {
        let (price, lunch) = r?;
        individual.insert(theta.clone(), price);
        arbitrage.insert(theta.clone(), if lunch { "free_lunch" } else { "no_free_lunch" });
    }

    let report = json!({
        "mode": "solve",
        "verdict": verdict(ok),
        "reasons": reasons,
        "primal": primal.as_ref().map(|p| p.price),
        "dual": dual_check.as_ref().map(|d| d.1),
        "gap": gap,
        "solver_dual": dual.as_ref().map(|d| d.value),
        "individual_prices": individual,
        "arbitrage": arbitrage,
        "certificates": {
            "primal": primal_check.as_ref().map(|(verified, worst, floor)| json!({
                "verified": verified,
                "worst_slack": worst,
                "floor": floor,
            })),
            "dual": dual_check.as_ref().zip(dual.as_ref()).map(|((report, _), cert)| json!({
                "valid": report.valid(),
                "violations": violations(report),
                "normalization_residual": cert.normalization_residual,
            })),
        },
        "lambda": family.lambda(),
        "models": names,
        "floor": floor,
        "tolerances": { "gap": run.tol_gap, "feas": run.tol_feas },
        "arithmetic": { "primal": primal_arith, "dual": dual_arith },
        "times_ms": {
            "primal": primal_ms,
            "dual": dual_ms,
            "individual": individual_ms,
            "total": millis(start),
        },
    });
    let mut files = Vec::new();
    if let Some(p) = &primal {
        files.push(("primal_cert.json", pretty(&p.to_value(&family))));
    }
    if let Some(d) = &dual {
        files.push(("dual_cert.json", pretty(&d.to_value(&family))));
    }
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x}"));
    let summary = format!(
        "{} primal {} dual {} gap {}",
        verdict(ok),
        show(primal.as_ref().map(|p| p.price)),
        show(dual_check.as_ref().map(|d| d.1)),
        show(gap)
    );
    Ok(Outcome { report, files, summary })
}

fn generate(run: &Run) -> Result<Outcome, CliError> {
    let (family, claims) = run.family()?;
    let text = save_family(&family, claims.as_ref());
    let back = load_document(text.as_bytes())?;
    let ok = back.family == family && back.claims == claims;
    let report = json!({
        "mode": "generate",
        "verdict": verdict(ok),
        "file": "family.json",
        "nodes": family.tree().len(),
        "horizon": family.tree().horizon(),
        "models": thetas(&family),
        "lambda": family.lambda(),
        "claims": claims.is_some(),
    });
    let summary = format!(
        "{} wrote family.json with {} nodes and {} model(s)",
        verdict(ok),
        family.tree().len(),
        family.fields().len()
    );
    Ok(Outcome {
        report,
        files: vec![("family.json", text)],
        summary,
    })
}

fn detect_arbitrage(run: &Run) -> Result<Outcome, CliError> {
    let (family, _) = run.family()?;
    let tree = family.tree();
    let names = thetas(&family);
    let tol = run.tol_feas;
    let results = Execution::default().map(&names, |theta| -> Result<(bool, Value), CliError> {
        let k = family.model_index(theta)?;
        Ok(match detect_free_lunch(&family, theta)? {
            FreeLunchVerdict::NoFreeLunch(part) => {
                let check = validate_single(&family, k, &part, tol);
                let single = family.restrict(&[theta.as_str()])?;
                let cps = ConsistentPriceSystem::embed(&single, 0, &part);
                (
                    check.valid(),
                    json!({
                        "verdict": "no_free_lunch",
                        "verified": check.valid(),
                        "violations": violations(&check),
                        "cps": cps.to_value(&single),
                    }),
                )
            }
            FreeLunchVerdict::FreeLunch {
                strategy,
                floor,
                terminal,
            } => {
                let w = wealth_values(&family, &strategy, 0.0, k);
                let leaf_values: Vec<f64> = tree.leaves().iter().map(|&l| w[l]).collect();
                let verified = leaf_values.iter().all(|v| *v >= -tol) && leaf_values.iter().any(|v| *v > tol);
                let terminal: BTreeMap<&str, f64> = tree
                    .leaves()
                    .iter()
                    .zip(&terminal)
                    .map(|(&l, v)| (tree.id(l), *v))
                    .collect();
                (
                    false,
                    json!({
                        "verdict": "free_lunch",
                        "verified": verified,
                        "strategy": strategy.to_value(tree),
                        "floor": floor,
                        "terminal": terminal,
                    }),
                )
            }
        })
    });
    let mut models = BTreeMap::new();
    let mut all_clear = true;
    let mut lunches = Vec::new();
    for (theta, r) in names.iter().zip(results) {
        let (clear, entry) = r?;
        if entry["verdict"] == "free_lunch" {
            lunches.push(theta.clone());
        }
        all_clear &= clear;
        models.insert(theta.clone(), entry);
    }
    let report = json!({
        "mode": "detect-arbitrage",
        "verdict": verdict(all_clear),
        "lambda": family.lambda(),
        "models": models,
        "tolerances": { "feas": tol },
    });
    let summary = if lunches.is_empty() {
        format!("{} no free lunch in {} model(s)", verdict(all_clear), names.len())
    } else {
        format!("{} free lunch in {}", verdict(all_clear), lunches.join(", "))
    };
    Ok(Outcome {
        report,
        files: Vec::new(),
        summary,
    })
}

fn read_json(run: &Run, path: &std::path::Path) -> Result<Value, CliError> {
    let path = run.resolve(path);
    serde_json::from_slice(&read_file(&path)?).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn check_cps(run: &Run) -> Result<Outcome, CliError> {
    let (family, claims) = run.family()?;
    let tree = family.tree();
    let cps_path = run.config.cps.as_ref().expect("checked when loading");
    let doc = read_json(run, cps_path)?;
    // Either a bare system or a dual certificate wrapping one.
    let (cps, recorded) = if doc.get("cps").is_some() {
        let cert = DualCertificate::from_value(&family, &doc)?;
        (cert.cps, Some(cert.value))
    } else {
        (ConsistentPriceSystem::from_value(&family, &doc)?, None)
    };
    let check = validate_cps(&family, &cps, run.tol_feas);
    let mut reasons: Vec<String> = violations(&check);
    let dual = claims.as_ref().map(|c| cps.normalized(tree).price(tree, c));

    let primal = match &run.config.primal_cert {
        None => None,
        Some(path) => {
            let claims = require_claims(claims.clone(), run.mode)?;
            let value = read_json(run, path)?;
            let cert = PrimalCertificate::from_value(&family, &claims, &value)?;
            let recorded_floor = value.get("floor").and_then(Value::as_f64).unwrap_or(cert.floor);
            let verified = cert.verify(&family, &claims, run.tol_feas)
                && cert.floor <= recorded_floor + scaled(run.tol_feas, recorded_floor);
            if !verified {
                reasons.push("primal certificate fails re-evaluation".to_string());
            }
            Some((cert.price, verified))
        }
    };
    let gap = primal.zip(dual).map(|((p, _), d)| (p - d).abs());
    if let Some(g) = gap {
        if g > run.tol_gap {
            reasons.push(format!("duality gap {g:e} exceeds {:e}", run.tol_gap));
        }
    }
    let ok = check.valid() && primal.is_none_or(|p| p.1) && gap.is_none_or(|g| g <= run.tol_gap);
    let report = json!({
        "mode": "check-cps",
        "verdict": verdict(ok),
        "valid": check.valid(),
        "violations": check.violations,
        "reasons": reasons,
        "total_mass": cps.total_mass(tree),
        "dual": dual,
        "recorded_dual": recorded,
        "primal": primal.map(|p| p.0),
        "primal_verified": primal.map(|p| p.1),
        "gap": gap,
        "lambda": family.lambda(),
        "tolerances": { "gap": run.tol_gap, "feas": run.tol_feas },
    });
    let summary = match dual {
        Some(d) => format!("{} value {d}", verdict(ok)),
        None => format!("{} {} violation(s)", verdict(ok), check.violations.len()),
    };
    Ok(Outcome {
        report,
        files: Vec::new(),
        summary,
    })
}

fn fit_sandwich(run: &Run) -> Result<Outcome, CliError> {
    let (family, _) = run.family()?;
    let tree = family.tree();
    let (lower, upper) = run.corridor()?;
    let tol = run.tol_feas;
    let (ok, body, summary) = match fit_sandwich_by_id(tree, &lower, &upper)? {
        SandwichFit::Martingale(m) => {
            let inside = (0..tree.len()).all(|n| {
                let (lo, hi) = (lower[tree.id(n)], upper[tree.id(n)]);
                m[n] >= lo - scaled(tol, lo) && m[n] <= hi + scaled(tol, hi)
            });
            let fair = (0..tree.len()).all(|n| tree.martingale_defect(&m, n).abs() <= scaled(tol, m[n]));
            let values: BTreeMap<&str, f64> = (0..tree.len()).map(|n| (tree.id(n), m[n])).collect();
            let ok = inside && fair;
            (
                ok,
                json!({ "feasible": true, "verified": ok, "martingale": values }),
                format!("{} martingale found", verdict(ok)),
            )
        }
        SandwichFit::Infeasible { node, lo, hi } => (
            false,
            json!({
                "feasible": false,
                "witness": {
                    "node": tree.id(node),
                    "reachable": [lo, hi],
                    "corridor": [lower[tree.id(node)], upper[tree.id(node)]],
                },
            }),
            format!("FAIL no martingale fits the corridor at node {:?}", tree.id(node)),
        ),
    };
    let mut report = json!({
        "mode": "fit-sandwich",
        "verdict": verdict(ok),
        "tolerances": { "feas": tol },
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut report, body) {
        dst.extend(src);
    }
    Ok(Outcome {
        report,
        files: Vec::new(),
        summary,
    })
}
