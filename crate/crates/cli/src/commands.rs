use std::process::ExitCode;
use std::time::Instant;

use bilocal::alm::{alm_solve, median, rate_diagnostics, AlmConfig, AlmRecord, AlmTrace};
use bilocal::grid::{grid_search, GridConfig, GridError};
use bilocal::lower::{check_jacobian_uniqueness, solve_lower, Tolerances};
use bilocal::numerics::{fd_jacobian, Matrix, FD_STEP_FIRST};
use bilocal::optimality::{
    check_first_order_fp, check_mfcq_fp, check_second_order_fp, recover_multipliers, Mode, OptimalityError,
};
use bilocal::problem::{fixture_text, load_problem, BilevelProblem, PrimalDualPoint, ProblemError, UpperMultiplier};
use bilocal::sensitivity::implicit_jacobians;
use bilocal::verify::run_all;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::report::{indices, mat, num, opt_num, problem_hash, vec, Report};
use crate::{Output, Source};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Load(String),
    #[error("{0}")]
    Dimension(String),
    #[error("{0}")]
    GridUnsupported(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Load(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::GridUnsupported(_) => 4,
        }
    }
}

fn failed<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Failed(e.to_string())
}

fn load(source: &Source) -> Result<(BilevelProblem, String), CliError> {
    let text = match (&source.problem, &source.fixture) {
        (Some(path), _) => {
            std::fs::read_to_string(path).map_err(|e| CliError::Load(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => fixture_text(name).map_err(|e| CliError::Load(e.to_string()))?.to_string(),
        (None, None) => return Err(CliError::Load("no problem given".into())),
    };
    let p = load_problem(&text).map_err(|e| match e {
        ProblemError::DimensionMismatch { .. } => CliError::Dimension(e.to_string()),
        other => CliError::Load(other.to_string()),
    })?;
    let hash = problem_hash(&p.to_problem_text());
    Ok((p, hash))
}

/// `v`, or zeros when absent; the length must match.
fn fit(what: &str, v: Option<Vec<f64>>, len: usize) -> Result<Vec<f64>, CliError> {
    match v {
        None => Ok(vec![0.0; len]),
        Some(v) if v.len() == len => Ok(v),
        Some(v) => Err(CliError::Dimension(format!("--{what}: expected {len} values, got {}", v.len()))),
    }
}

fn finish(mut report: Report, output: &Output, started: Instant, code: ExitCode) -> Result<ExitCode, CliError> {
    if output.wall_time {
        report.wall_time = Some(started.elapsed().as_secs_f64());
    }
    if let Some(path) = &output.json {
        std::fs::write(path, report.to_json()).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    }
    Ok(code)
}

fn point_json(u: &PrimalDualPoint) -> Value {
    let mut m = Map::new();
    m.insert("x".into(), vec(&u.x));
    m.insert("y".into(), vec(&u.y));
    m.insert("mu".into(), vec(&u.mu));
    m.insert("xi".into(), vec(&u.xi));
    Value::Object(m)
}

fn multiplier_json(l: &UpperMultiplier) -> Value {
    let mut m = Map::new();
    m.insert("upper_eq".into(), vec(&l.upper_eq));
    m.insert("upper_ineq".into(), vec(&l.upper_ineq));
    m.insert("stationarity".into(), vec(&l.stationarity));
    m.insert("lower_eq".into(), vec(&l.lower_eq));
    m.insert("complementarity".into(), vec(&l.complementarity));
    Value::Object(m)
}

fn verdict_word(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "n/a",
    }
}

fn print_matrix(name: &str, m: &Matrix) {
    println!("{name} =");
    for r in m.to_rows() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:>12.6}")).collect();
        println!("  [{}]", cells.join(" "));
    }
}

pub struct CheckInput {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
    pub lam_h: Option<Vec<f64>>,
    pub lam_g: Option<Vec<f64>>,
}

pub fn check(
    argv: &[String],
    source: &Source,
    input: CheckInput,
    output: &Output,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let (p, hash) = load(source)?;
    let d = p.dims();
    let u = PrimalDualPoint {
        x: fit("x", Some(input.x), d.n)?,
        y: fit("y", Some(input.y), d.m)?,
        mu: fit("mu", input.mu, d.r)?,
        xi: fit("xi", input.xi, d.s)?,
    };
    let lam_h = fit("lamH", input.lam_h, d.p)?;
    let lam_g = fit("lamG", input.lam_g, d.q)?;
    let t = Tolerances::default();

    let mut report = Report::new(argv.to_vec());
    report.problem_hash = Some(hash);
    report.inputs.insert("point".into(), point_json(&u));
    report.inputs.insert("lamH".into(), vec(&lam_h));
    report.inputs.insert("lamG".into(), vec(&lam_g));
    let mut tol = Map::new();
    for (k, v) in [("kkt", t.kkt), ("active", t.active), ("licq_rel", t.licq_rel), ("psd", t.psd), ("mfcq", t.mfcq)] {
        tol.insert(k.into(), num(v));
    }
    report.inputs.insert("tolerances".into(), Value::Object(tol));

    let mut rows: Vec<(&str, Option<bool>, String)> = Vec::new();
    let mut verdict = |report: &mut Report, key: &str, label: &'static str, v: Option<bool>, note: String| {
        report.verdicts.insert(key.into(), v.map_or(Value::Null, Value::Bool));
        rows.push((label, v, note));
    };

    let ju = check_jacobian_uniqueness(&p, &u.x, &u.y, &u.mu, &u.xi, &t).map_err(failed)?;
    report.evidence.insert("kkt_residual_norm".into(), num(ju.kkt_residual_norm));
    report.evidence.insert("min_singular_value".into(), opt_num(ju.min_singular_value));
    report.evidence.insert("strict_comp_margin".into(), opt_num(ju.strict_comp_margin));
    report.evidence.insert("reduced_hessian_min_eig".into(), opt_num(ju.reduced_hessian_min_eig));
    report.evidence.insert("null_space_dim".into(), Value::from(ju.null_space_dim));
    let mut sets = Map::new();
    sets.insert("alpha".into(), indices(&ju.active.alpha));
    sets.insert("beta".into(), indices(&ju.active.beta));
    sets.insert("gamma".into(), indices(&ju.active.gamma));
    report.evidence.insert("active_sets".into(), Value::Object(sets));
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
    verdict(&mut report, "lower_kkt", "lower KKT", Some(ju.kkt_ok), format!("residual {:.3e}", ju.kkt_residual_norm));
    verdict(&mut report, "lower_licq", "lower LICQ", Some(ju.licq_ok), format!("min singular value {}", fmt(ju.min_singular_value)));
    verdict(
        &mut report,
        "lower_strict_complementarity",
        "lower strict complementarity",
        Some(ju.strict_comp_ok),
        format!("margin {}", fmt(ju.strict_comp_margin)),
    );
    verdict(
        &mut report,
        "lower_second_order",
        "lower second-order sufficiency",
        ju.sosc_ok,
        format!("min eigenvalue {}", fmt(ju.reduced_hessian_min_eig)),
    );
    verdict(&mut report, "jacobian_uniqueness", "Jacobian uniqueness", Some(ju.holds()), String::new());

    let error_note = |report: &mut Report, key: &str, e: &OptimalityError| {
        report.evidence.insert(format!("{key}_error"), Value::String(e.to_string()));
        e.to_string()
    };

    let lam = match recover_multipliers(&p, &u, &lam_h, &lam_g, &t) {
        Ok(l) => {
            report.matrices.insert("multipliers".into(), multiplier_json(&l));
            verdict(&mut report, "multiplier_recovery", "multiplier recovery", Some(true), String::new());
            Some(l)
        }
        Err(e) => {
            let note = error_note(&mut report, "multiplier_recovery", &e);
            verdict(&mut report, "multiplier_recovery", "multiplier recovery", Some(false), note);
            None
        }
    };

    match check_mfcq_fp(&p, &u, &t) {
        Ok(m) => {
            report.evidence.insert("mfcq_min_singular_value".into(), opt_num(m.min_singular_value));
            report.evidence.insert("mfcq_margin".into(), opt_num(m.margin));
            verdict(&mut report, "mfcq", "MFCQ (reformulation)", Some(m.holds), format!("min singular value {}", fmt(m.min_singular_value)));
        }
        Err(e) => {
            let note = error_note(&mut report, "mfcq", &e);
            verdict(&mut report, "mfcq", "MFCQ (reformulation)", None, note);
        }
    }

    let labels = [
        ("first_order", "first order (reformulation)"),
        ("second_order_necessary", "second-order necessary"),
        ("second_order_sufficient", "second-order sufficient"),
    ];
    match &lam {
        None => {
            for (key, label) in labels {
                verdict(&mut report, key, label, None, "needs multipliers".into());
            }
        }
        Some(lam) => {
            match check_first_order_fp(&p, &u, lam, &t) {
                Ok(f) => {
                    report.evidence.insert("sigma".into(), num(f.sigma));
                    verdict(&mut report, labels[0].0, labels[0].1, Some(f.holds), format!("sigma {:.3e}", f.sigma));
                }
                Err(e) => {
                    let note = error_note(&mut report, labels[0].0, &e);
                    verdict(&mut report, labels[0].0, labels[0].1, None, note);
                }
            }
            for (mode, (key, label)) in [(Mode::Necessary, labels[1]), (Mode::Sufficient, labels[2])] {
                match check_second_order_fp(&p, &u, lam, mode, &t) {
                    Ok(s) => {
                        report.evidence.insert(format!("{key}_min_eig"), num(s.min_eig));
                        report.evidence.insert(format!("{key}_cone_dim"), Value::from(s.cone_dim));
                        report.evidence.insert(format!("{key}_over_approximation"), Value::Bool(s.over_approximation));
                        report.matrices.insert(format!("{key}_reduced_hessian"), mat(&s.reduced_hessian));
                        verdict(&mut report, key, label, Some(s.holds), format!("min eigenvalue {:.6e} on a {}-dim cone", s.min_eig, s.cone_dim));
                    }
                    // the cone is {0}: nothing to test
                    Err(OptimalityError::EmptyCone) => {
                        report.evidence.insert(format!("{key}_cone_dim"), Value::from(0));
                        verdict(&mut report, key, label, Some(true), "critical cone is {0}".into());
                    }
                    Err(e) => {
                        let note = error_note(&mut report, key, &e);
                        verdict(&mut report, key, label, None, note);
                    }
                }
            }
        }
    }

    for (label, v, note) in &rows {
        println!("{label:<32} {:<5} {note}", verdict_word(*v));
    }
    finish(report, output, started, ExitCode::SUCCESS)
}

pub fn sens(
    argv: &[String],
    source: &Source,
    x: &[f64],
    start: [Option<Vec<f64>>; 3],
    output: &Output,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let (p, hash) = load(source)?;
    let d = p.dims();
    let x = fit("x", Some(x.to_vec()), d.n)?;
    let [y0, mu0, xi0] = start;
    let (y0, mu0, xi0) = (fit("y0", y0, d.m)?, fit("mu0", mu0, d.r)?, fit("xi0", xi0, d.s)?);
    let s = solve_lower(&p, &x, &y0, &mu0, &xi0, 1e-13, 100).map_err(failed)?;
    if !s.converged {
        return Err(failed(format!("lower solve did not converge (residual {:.3e})", s.residual)));
    }
    let t = Tolerances::default();
    let sens = implicit_jacobians(&p, &x, &s.y, &s.mu, &s.xi, &t).map_err(failed)?;
    let resolve = |xx: &[f64]| {
        solve_lower(&p, xx, &s.y, &s.mu, &s.xi, 1e-13, 100)
            .ok()
            .filter(|r| r.converged)
            .map_or_else(|| vec![f64::NAN; d.kkt_len()], |r| [r.y, r.mu, r.xi].concat())
    };
    let fd = fd_jacobian(resolve, &x, FD_STEP_FIRST).map_err(failed)?;
    let blocks = [("Jy", &sens.jy, 0, d.m), ("Jmu", &sens.jmu, d.m, d.r), ("Jxi", &sens.jxi, d.m + d.r, d.s)];

    let mut report = Report::new(argv.to_vec());
    report.problem_hash = Some(hash);
    report.inputs.insert("x".into(), vec(&x));
    report.evidence.insert(
        "lower_solution".into(),
        point_json(&PrimalDualPoint::new(&x, &s.y, &s.mu, &s.xi)),
    );
    report.evidence.insert("cond_estimate".into(), num(sens.cond_estimate));
    println!("lower solution y = {:?}, mu = {:?}, xi = {:?}", s.y, s.mu, s.xi);
    println!("K condition estimate {:.3e}", sens.cond_estimate);
    let mut worst: f64 = 0.0;
    println!("{:<6} {:>14}", "block", "max |an - fd|");
    for (name, m, r0, rows) in blocks {
        let fd_block = fd.block(r0, 0, rows, d.n);
        let delta = m.sub(&fd_block).max_abs();
        worst = if delta.is_nan() { f64::NAN } else { worst.max(delta) };
        print_matrix(name, m);
        println!("{name:<6} {delta:>14.3e}");
        report.matrices.insert(name.into(), mat(m));
        report.matrices.insert(format!("{name}_fd"), mat(&fd_block));
        report.evidence.insert(format!("{name}_max_delta"), num(delta));
    }
    report.verdicts.insert("fd_agreement".into(), Value::Bool(worst <= 1e-6));
    finish(report, output, started, ExitCode::SUCCESS)
}

pub struct SolveInput {
    pub start: [Option<Vec<f64>>; 4],
    pub lam0: Option<Vec<f64>>,
    pub rho0: f64,
    pub rho_growth: f64,
    pub tol: f64,
    pub max_outer: usize,
    pub rate_sweep: bool,
}

fn record_json(r: &AlmRecord) -> Value {
    let mut m = Map::new();
    m.insert("k".into(), Value::from(r.k));
    m.insert("rho".into(), num(r.rho));
    m.insert("sigma".into(), num(r.sigma));
    m.insert("inner_tol".into(), num(r.inner_tol));
    m.insert("inner_iterations".into(), Value::from(r.inner_iterations));
    m.insert("inner_grad_norm".into(), num(r.inner_grad_norm));
    m.insert("step_norm".into(), num(r.step_norm));
    m.insert("accepted".into(), Value::Bool(r.accepted));
    m.insert("u".into(), point_json(&r.u));
    m.insert("lambda".into(), multiplier_json(&r.lambda));
    Value::Object(m)
}

fn status_name(t: &AlmTrace) -> String {
    format!("{:?}", t.status)
}

pub fn solve(
    argv: &[String],
    source: &Source,
    input: SolveInput,
    output: &Output,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let (p, hash) = load(source)?;
    let d = p.dims();
    let [x0, y0, mu0, xi0] = input.start;
    let u0 = PrimalDualPoint {
        x: fit("x0", x0, d.n)?,
        y: fit("y0", y0, d.m)?,
        mu: fit("mu0", mu0, d.r)?,
        xi: fit("xi0", xi0, d.s)?,
    };
    let lam0 = UpperMultiplier::unflatten(&d, &fit("lam0", input.lam0, d.multiplier_len())?)
        .map_err(|e| CliError::Dimension(e.to_string()))?;
    let cfg = AlmConfig {
        rho0: input.rho0,
        rho_growth: input.rho_growth,
        outer_tol: input.tol,
        max_outer: input.max_outer,
        ..AlmConfig::default()
    };
    let trace = alm_solve(&p, &u0, &lam0, &cfg).map_err(failed)?;

    let mut report = Report::new(argv.to_vec());
    report.problem_hash = Some(hash);
    report.inputs.insert("u0".into(), point_json(&u0));
    report.inputs.insert("lam0".into(), multiplier_json(&lam0));
    report.inputs.insert("rho0".into(), num(cfg.rho0));
    report.inputs.insert("rho_growth".into(), num(cfg.rho_growth));
    report.inputs.insert("tol".into(), num(cfg.outer_tol));
    report.inputs.insert("max_outer".into(), Value::from(cfg.max_outer));
    report.verdicts.insert("converged".into(), Value::Bool(trace.converged()));
    report.evidence.insert("status".into(), Value::String(status_name(&trace)));
    report.evidence.insert("outer_iterations".into(), Value::from(trace.outer_iterations));
    report.evidence.insert("sigma".into(), num(trace.sigma));
    report.evidence.insert("u".into(), point_json(&trace.u));
    report.evidence.insert("lambda".into(), multiplier_json(&trace.lambda));
    report.trace = Some(Value::Array(trace.records.iter().map(record_json).collect()));

    println!("{:>4} {:>10} {:>12} {:>8} {:>9}", "k", "rho", "sigma", "inner", "accepted");
    for r in &trace.records {
        println!("{:>4} {:>10.1e} {:>12.4e} {:>8} {:>9}", r.k, r.rho, r.sigma, r.inner_iterations, r.accepted);
    }
    println!(
        "status {} after {} outer iterations, sigma {:.3e}",
        status_name(&trace),
        trace.outer_iterations,
        trace.sigma
    );
    println!("x = {:?}\ny = {:?}\nmu = {:?}\nxi = {:?}", trace.u.x, trace.u.y, trace.u.mu, trace.u.xi);

    if input.rate_sweep {
        // reference: the solution polished to a tighter tolerance
        let polish = AlmConfig {
            outer_tol: (cfg.outer_tol * 1e-3).max(1e-13),
            ..cfg
        };
        let (u_ref, l_ref) = match alm_solve(&p, &trace.u, &trace.lambda, &polish) {
            Ok(t) if t.sigma < trace.sigma => (t.u, t.lambda),
            _ => (trace.u.clone(), trace.lambda.clone()),
        };
        let mut runs = Vec::new();
        let mut medians = Vec::new();
        println!("{:>8} {:>12} {:>14}", "rho", "status", "median q");
        for rho in [10.0, 100.0, 1000.0] {
            let fixed = AlmConfig {
                rho0: rho,
                rho_growth: 1.0,
                ..cfg
            };
            let t = alm_solve(&p, &u0, &lam0, &fixed).map_err(failed)?;
            let q = rate_diagnostics(&t, &u_ref, &l_ref).unwrap_or_default();
            let med = if q.is_empty() { f64::NAN } else { median(&q) };
            println!("{:>8.0e} {:>12} {:>14.4e}", rho, status_name(&t), med);
            let mut m = Map::new();
            m.insert("rho".into(), num(rho));
            m.insert("status".into(), Value::String(status_name(&t)));
            m.insert("quotients".into(), vec(&q));
            m.insert("median_quotient".into(), num(med));
            runs.push(Value::Object(m));
            medians.push(med);
        }
        let ordered = medians.windows(2).all(|w| w[0] > w[1]);
        println!("median quotient strictly decreasing: {ordered}");
        report.evidence.insert("rate_sweep".into(), Value::Array(runs));
        report.verdicts.insert("rate_ordering".into(), Value::Bool(ordered));
    }
    finish(report, output, started, ExitCode::SUCCESS)
}

pub fn grid(
    argv: &[String],
    source: &Source,
    x_range: (f64, f64),
    y_range: (f64, f64),
    step: f64,
    output: &Output,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let (p, hash) = load(source)?;
    let cfg = GridConfig::new(x_range, y_range, step);
    let result = grid_search(&p, &cfg).map_err(|e| match e {
        GridError::Unsupported { .. } => CliError::GridUnsupported(e.to_string()),
        other => failed(other),
    })?;

    let mut report = Report::new(argv.to_vec());
    report.problem_hash = Some(hash);
    report.inputs.insert("x_range".into(), vec(&[x_range.0, x_range.1]));
    report.inputs.insert("y_range".into(), vec(&[y_range.0, y_range.1]));
    report.inputs.insert("step".into(), num(step));
    report.inputs.insert("feas_tol".into(), num(cfg.feas_tol));
    report.verdicts.insert("feasible_pair_found".into(), Value::Bool(result.is_some()));
    let Some(r) = result else {
        println!("no feasible pair on the grid");
        return finish(report, output, started, ExitCode::SUCCESS);
    };
    println!("best pair x = {:?}, y = {:?}", r.x, r.y);
    println!("upper objective {:.9}, lower objective {:.9}", r.upper_value, r.lower_value);
    println!("lower-level minimizers at this x:");
    println!("  {:<28} {:>14} {:>7} {:>9} {:>14} {:>9}", "y", "lower value", "global", "upper ok", "upper value", "selected");
    let mut mins = Vec::new();
    for z in &r.minimizers {
        println!(
            "  {:<28} {:>14.9} {:>7} {:>9} {:>14.9} {:>9}",
            format!("{:?}", z.y),
            z.lower_value,
            z.global,
            z.upper_feasible,
            z.upper_value,
            z.selected
        );
        let mut m = Map::new();
        m.insert("y".into(), vec(&z.y));
        m.insert("lower_value".into(), num(z.lower_value));
        m.insert("global".into(), Value::Bool(z.global));
        m.insert("upper_feasible".into(), Value::Bool(z.upper_feasible));
        m.insert("upper_value".into(), num(z.upper_value));
        m.insert("selected".into(), Value::Bool(z.selected));
        mins.push(Value::Object(m));
    }
    report.evidence.insert("x".into(), vec(&r.x));
    report.evidence.insert("y".into(), vec(&r.y));
    report.evidence.insert("upper_value".into(), num(r.upper_value));
    report.evidence.insert("lower_value".into(), num(r.lower_value));
    report.evidence.insert("x_points".into(), Value::from(r.x_points));
    report.evidence.insert("y_points".into(), Value::from(r.y_points));
    report.evidence.insert("lower_minimizers".into(), Value::Array(mins));
    finish(report, output, started, ExitCode::SUCCESS)
}

pub fn verify(argv: &[String], output: &Output, started: Instant) -> Result<ExitCode, CliError> {
    let suite = run_all();
    let mut report = Report::new(argv.to_vec());
    for c in &suite.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        report.verdicts.insert(c.name.into(), Value::Bool(c.passed));
        report.evidence.insert(c.name.into(), Value::String(c.detail.clone()));
    }
    let ok = suite.all_passed();
    println!("{}", if ok { "all invariants hold" } else { "invariant failures" });
    finish(report, output, started, if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
