//! `cyma run`: one configured job, its artifacts and exit status.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use super::checks::{run_checks, CheckOptions, Suite};
use super::config::{Mode, RunConfig};
use crate::envelope::{envelope_obstacle_oracle, envelope_penalized, EnvelopeOptions};
use crate::error::{Error, Result};
use crate::geometry::{build_metric, HermitianField, MetricSpec, ScalarField, TorusGrid};
use crate::io::{write_field, Field, FieldMeta};
use crate::ma::{gauduchon_factor_with_stats, omega_phi, trace_diagnostics};
use crate::solver::{
    continuity_path, default_delta_schedule, default_eps_schedule, lambda_path, newton_solve,
    solve_calabi, solve_degenerate, solve_singular, DensitySpec, KltDensitySpec, MaProblem,
    MaSolution, PathResult, SolverSettings, SINGULAR_TOL, SMOOTH_TOL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

pub const MONITOR_HEADER: &str = "step,residual,osc_phi,max_laplacian,c_or_b,mass";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Replaces `output.directory` (taken relative to the working directory).
    pub out: Option<PathBuf>,
    pub no_timestamp: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// `None` on configuration errors, when nothing is written.
    pub out_dir: Option<PathBuf>,
    pub message: String,
}

/// One row of `monitors.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct MonitorRow {
    pub step: f64,
    pub residual: f64,
    pub osc_phi: f64,
    pub max_laplacian: f64,
    pub c_or_b: f64,
    pub mass: f64,
}

impl MonitorRow {
    fn from_solution(step: f64, s: &MaSolution, constant: f64) -> Self {
        Self {
            step,
            residual: s.residual,
            osc_phi: s.diagnostics.osc,
            max_laplacian: s.diagnostics.trace.max_laplacian,
            c_or_b: constant,
            mass: s.diagnostics.mass,
        }
    }
}

pub fn monitors_csv(rows: &[MonitorRow]) -> String {
    let mut out = String::from(MONITOR_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e}\n",
            r.step, r.residual, r.osc_phi, r.max_laplacian, r.c_or_b, r.mass
        ));
    }
    out
}

/// Everything a job produces besides the exit code.
struct Artifacts {
    field: Option<ScalarField>,
    monitors: Vec<MonitorRow>,
    summary: Value,
    /// Check mode: the overall verdict.
    checks_pass: Option<bool>,
}

/// Inputs resolved from the config before anything is written.
struct Prepared {
    cfg: RunConfig,
    grid: TorusGrid,
    omega: HermitianField,
    settings: SolverSettings,
    job: Job,
}

enum Job {
    Solve {
        log_f: ScalarField,
        lambda: f64,
        t: Option<Vec<f64>>,
    },
    Calabi {
        density: DensitySpec,
        js: Option<Vec<usize>>,
    },
    Envelope {
        g: ScalarField,
        opts: EnvelopeOptions,
    },
    Degenerate {
        theta: HermitianField,
        density: DensitySpec,
        eps: Vec<f64>,
    },
    Singular {
        klt: KltDensitySpec,
        delta: Vec<f64>,
    },
    Gauduchon,
    Check {
        suite: Suite,
    },
}

pub fn run(config_path: &Path, opts: &RunOptions) -> RunOutcome {
    let prepared = match prepare(config_path) {
        Ok(p) => p,
        Err(e) => {
            return RunOutcome {
                exit_code: EXIT_CONFIG,
                out_dir: None,
                message: e.to_string(),
            }
        }
    };
    let out_dir = match &opts.out {
        Some(d) => d.clone(),
        None => config_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&prepared.cfg.output.directory),
    };
    let start = Instant::now();
    let result = execute(&prepared, !opts.no_timestamp);
    let elapsed = start.elapsed().as_secs_f64();
    match write_artifacts(&prepared, &out_dir, result, opts.no_timestamp, elapsed) {
        Ok((code, message)) => RunOutcome {
            exit_code: code,
            out_dir: Some(out_dir),
            message,
        },
        Err(e) => RunOutcome {
            exit_code: EXIT_SOLVER,
            out_dir: Some(out_dir),
            message: format!("could not write artifacts: {e}"),
        },
    }
}

fn config_err(key: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {e}"))
}

fn prepare(config_path: &Path) -> Result<Prepared> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let cfg = RunConfig::from_json(&text)?;
    let grid = cfg.grid()?;
    let p = &cfg.problem;
    let default_tol = if p.mode == Mode::Singular {
        SINGULAR_TOL
    } else {
        SMOOTH_TOL
    };
    let settings = SolverSettings {
        tol: cfg.solver.tol.unwrap_or(default_tol),
        max_newton: cfg.solver.max_newton,
    };
    // The degenerate form is theta; the reference metric is then flat.
    let omega = match &cfg.metric {
        MetricSpec::Degenerate { .. } => HermitianField::identity(&grid),
        m => build_metric(&grid, m).map_err(|e| config_err("metric", e))?,
    };
    let sample = |key: &str,
                  s: &Option<super::config::FourierSeries>,
                  default: f64|
     -> Result<ScalarField> {
        match s {
            Some(s) => s.sample(&grid).map_err(|e| config_err(key, e)),
            None => Ok(ScalarField::constant(&grid, default)),
        }
    };
    let density = |key: &str| -> Result<DensitySpec> {
        DensitySpec::from_values(&sample(key, &p.f, 1.0)?).map_err(|e| config_err(key, e))
    };
    let schedules = &cfg.solver.schedules;
    let job = match p.mode {
        Mode::Solve => Job::Solve {
            log_f: sample("problem.f", &p.f, 0.0)?,
            lambda: p.lambda.unwrap_or(1.0),
            t: schedules.t.clone(),
        },
        Mode::Calabi => Job::Calabi {
            density: density("problem.f")?,
            js: schedules.lambda_js.clone(),
        },
        Mode::Envelope => Job::Envelope {
            g: sample("problem.obstacle", &p.obstacle, 0.0)?,
            opts: EnvelopeOptions {
                schedule: schedules
                    .lambda
                    .clone()
                    .unwrap_or_else(crate::envelope::default_lambda_schedule),
                tol: cfg.solver.tol.unwrap_or(EnvelopeOptions::default().tol),
                max_newton: cfg.solver.max_newton,
                ..EnvelopeOptions::default()
            },
        },
        Mode::Degenerate => Job::Degenerate {
            theta: build_metric(&grid, &cfg.metric).map_err(|e| config_err("metric", e))?,
            density: density("problem.f")?,
            eps: schedules.eps.clone().unwrap_or_else(default_eps_schedule),
        },
        Mode::Singular => {
            let k = p
                .klt
                .as_ref()
                .ok_or_else(|| config_err("problem.klt", "missing"))?;
            let mut klt = KltDensitySpec::new(&grid, k.points.clone(), k.exponents.clone(), 0.0)
                .map_err(|e| config_err("problem.klt", e))?;
            if let Some(f) = &p.f {
                let log_f = f.sample(&grid)?.map(f64::ln).map_err(|_| {
                    config_err("problem.f", "smooth factor must be positive at every node")
                })?;
                klt = klt.with_smooth_factor(log_f)?;
            }
            klt.check_lp(p.p_exponent)
                .map_err(|e| config_err("problem.klt", e))?;
            Job::Singular {
                klt,
                delta: schedules
                    .delta
                    .clone()
                    .unwrap_or_else(|| default_delta_schedule(&grid)),
            }
        }
        Mode::Gauduchon => Job::Gauduchon,
        Mode::Check => Job::Check {
            suite: Suite::parse(p.suite.as_deref().unwrap_or("all"))
                .map_err(|e| config_err("problem.suite", e))?,
        },
    };
    Ok(Prepared {
        cfg,
        grid,
        omega,
        settings,
        job,
    })
}

fn solution_summary(s: &MaSolution) -> Value {
    json!({
        "c": s.c,
        "b": s.b,
        "residual": s.residual,
        "iterations": s.iterations,
        "positivity_margin": s.positivity_margin,
        "osc_phi": s.diagnostics.osc,
        "max_laplacian": s.diagnostics.trace.max_laplacian,
        "mass": s.diagnostics.mass,
        "spectral_tail": s.phi.spectral_tail(),
    })
}

fn path_summary(path: &PathResult) -> Value {
    json!({
        "schedule": path.schedule,
        "constants": path.constants,
        "refinements": path.refinements,
        "max_osc": path.max_osc(),
    })
}

fn path_monitors(path: &PathResult) -> Vec<MonitorRow> {
    path.schedule
        .iter()
        .zip(&path.solutions)
        .zip(&path.constants)
        .map(|((t, s), c)| MonitorRow::from_solution(*t, s, *c))
        .collect()
}

fn path_artifacts(path: &PathResult, extra: Value) -> Artifacts {
    let last = path.last().expect("paths hold at least one step");
    let mut summary = json!({ "solution": solution_summary(last), "path": path_summary(path) });
    if let (Value::Object(m), Value::Object(e)) = (&mut summary, extra) {
        m.extend(e);
    }
    Artifacts {
        field: Some(last.phi.clone()),
        monitors: path_monitors(path),
        summary,
        checks_pass: None,
    }
}

/// A path failure keeps the accepted prefix for the artifacts.
fn split_partial(e: Error) -> (Error, Option<PathResult>) {
    let partial = match &e {
        Error::PathAborted { partial, .. } if !partial.solutions.is_empty() => {
            Some((**partial).clone())
        }
        _ => None,
    };
    (e, partial)
}

type Executed = std::result::Result<Artifacts, (Error, Option<Box<Artifacts>>)>;

fn execute(p: &Prepared, timing: bool) -> Executed {
    let plain = |e: Error| (e, None);
    let with_partial = |e: Error| {
        let (e, partial) = split_partial(e);
        (
            e,
            partial.map(|path| Box::new(path_artifacts(&path, json!({})))),
        )
    };
    match &p.job {
        Job::Solve { log_f, lambda, t } => match t {
            Some(t) => {
                let path =
                    continuity_path(&p.omega, log_f, t, &p.settings).map_err(with_partial)?;
                Ok(path_artifacts(&path, json!({})))
            }
            None => {
                let problem = MaProblem::new(&p.omega, *lambda, DensitySpec::Smooth(log_f.clone()))
                    .map_err(plain)?
                    .with_tol(p.settings.tol)
                    .with_max_newton(p.settings.max_newton);
                let s = newton_solve(&problem, None).map_err(plain)?;
                Ok(Artifacts {
                    monitors: vec![MonitorRow::from_solution(1.0, &s, s.c)],
                    summary: json!({ "solution": solution_summary(&s) }),
                    field: Some(s.phi),
                    checks_pass: None,
                })
            }
        },
        Job::Calabi { density, js } => {
            let s = solve_calabi(&p.omega, density, p.cfg.problem.p_exponent, &p.settings)
                .map_err(plain)?;
            let mut summary = json!({ "solution": solution_summary(&s) });
            let mut monitors = Vec::new();
            if let Some(js) = js {
                let lp = lambda_path(&p.omega, density, js, &p.settings).map_err(plain)?;
                monitors = path_monitors(&lp.path);
                summary["lambda_path"] = json!({
                    "js": js,
                    "b": lp.path.constants,
                    "extrapolated_c": lp.c,
                    "gap_to_c": (lp.c - s.c).abs(),
                });
            }
            monitors.push(MonitorRow::from_solution(0.0, &s, s.c));
            Ok(Artifacts {
                field: Some(s.phi),
                monitors,
                summary,
                checks_pass: None,
            })
        }
        Job::Envelope { g, opts } => envelope_job(p, g, opts),
        Job::Degenerate {
            theta,
            density,
            eps,
        } => {
            let path = solve_degenerate(theta, &p.omega, density, eps, &p.settings)
                .map_err(with_partial)?;
            Ok(path_artifacts(&path, json!({})))
        }
        Job::Singular { klt, delta } => {
            let path = solve_singular(&p.omega, klt, delta, p.cfg.problem.p_exponent, &p.settings)
                .map_err(with_partial)?;
            let last = &path.last().expect("nonempty").phi;
            let tail = crate::solver::far_field_tail(last, &klt.points, 0.2);
            Ok(path_artifacts(&path, json!({ "far_field_tail": tail })))
        }
        Job::Gauduchon => {
            let gf = gauduchon_factor_with_stats(&p.omega).map_err(plain)?;
            Ok(Artifacts {
                summary: json!({
                    "gauduchon": {
                        "residual": gf.residual,
                        "krylov_iterations": gf.krylov_iterations,
                        "min": gf.h.min(),
                        "max": gf.h.max(),
                    }
                }),
                field: Some(gf.h),
                monitors: Vec::new(),
                checks_pass: None,
            })
        }
        Job::Check { suite } => {
            let report = run_checks(
                *suite,
                &CheckOptions {
                    timing,
                    ..CheckOptions::default()
                },
            );
            let pass = report.pass;
            Ok(Artifacts {
                field: None,
                monitors: Vec::new(),
                summary: json!({ "checks": serde_json::to_value(&report).expect("report serializes") }),
                checks_pass: Some(pass),
            })
        }
    }
}

fn envelope_job(p: &Prepared, g: &ScalarField, opts: &EnvelopeOptions) -> Executed {
    let r = envelope_penalized(&p.omega, g, opts).map_err(|e| (e, None))?;
    let mut monitors = Vec::new();
    for (step, phi) in r.lambda_trace.iter().zip(&r.phis) {
        let tilde = omega_phi(&p.omega, phi).map_err(|e| (e, None))?;
        let trace = trace_diagnostics(&p.omega, &tilde).map_err(|e| (e, None))?;
        let mass = tilde.det_field().iter().sum::<f64>() * p.grid.cell_volume();
        monitors.push(MonitorRow {
            step: step.lambda,
            residual: step.residual,
            osc_phi: phi.osc(),
            max_laplacian: trace.max_laplacian,
            c_or_b: step.lambda,
            mass,
        });
    }
    let steps: Vec<Value> = r
        .lambda_trace
        .iter()
        .map(|s| {
            json!({
                "lambda": s.lambda,
                "sup_distance": s.sup_distance,
                "residual": s.residual,
                "newton_iterations": s.newton_iterations,
                "positivity_margin": s.positivity_margin,
                "max_trace": s.max_trace,
                "orthogonality_defect": s.orthogonality_defect,
            })
        })
        .collect();
    let sandwich: Vec<Value> = r
        .sandwich
        .iter()
        .map(|s| json!({"lambda": s.lambda, "lower_slack": s.lower_slack, "upper_slack": s.upper_slack}))
        .collect();
    let mut summary = json!({
        "envelope": {
            "lambda_trace": steps,
            "sandwich": sandwich,
            "min_sandwich_slack": r.min_sandwich_slack(),
            "orthogonality_defect": r.orthogonality_defect,
            "eps_contact": r.eps_contact,
            "contact_nodes": r.contact_mask.iter().filter(|c| **c).count(),
            "upper_constant": r.upper_constant,
        }
    });
    let flat_curve = p.grid.n() == 1 && matches!(p.cfg.metric, MetricSpec::Flat);
    if flat_curve && r.failure.is_none() {
        let oracle = envelope_obstacle_oracle(&p.omega, g).map_err(|e| (e, None))?;
        summary["envelope"]["oracle_sup_distance"] =
            json!(r.p.sup_distance(&oracle).map_err(|e| (e, None))?);
    }
    let failure = r.failure.clone();
    let artifacts = Artifacts {
        field: Some(r.p),
        monitors,
        summary,
        checks_pass: None,
    };
    match failure {
        Some(msg) => Err((Error::Infeasible(msg), Some(Box::new(artifacts)))),
        None => Ok(artifacts),
    }
}

fn write_artifacts(
    p: &Prepared,
    out_dir: &Path,
    result: Executed,
    no_timestamp: bool,
    elapsed: f64,
) -> Result<(i32, String)> {
    fs::create_dir_all(out_dir)?;
    let (artifacts, error) = match result {
        Ok(a) => (Some(a), None),
        Err((e, partial)) => (partial.map(|a| *a), Some(e.to_string())),
    };
    let mut report = json!({
        "mode": p.cfg.problem.mode,
        "config": serde_json::to_value(&p.cfg)?,
        "version": env!("CARGO_PKG_VERSION"),
    });
    if let Some(a) = &artifacts {
        if let (Value::Object(m), Value::Object(s)) = (&mut report, &a.summary) {
            m.extend(s.clone());
        }
        if let (Some(field), true) = (&a.field, p.cfg.output.emit_fields) {
            let f = Field::Scalar(field.clone());
            let mut meta = FieldMeta::for_field(&f);
            meta.spec = serde_json::to_value(&p.cfg.metric)?;
            meta.parameters = json!({ "problem": p.cfg.problem, "solver": p.cfg.solver });
            write_field(&out_dir.join("solution.cyf"), &f, Some(meta))?;
        }
        if p.cfg.output.emit_csv && !a.monitors.is_empty() {
            fs::write(out_dir.join("monitors.csv"), monitors_csv(&a.monitors))?;
        }
    }
    let checks_failed = artifacts.as_ref().and_then(|a| a.checks_pass) == Some(false);
    let (code, status) = match (&error, checks_failed) {
        (Some(_), _) => (EXIT_SOLVER, "failed"),
        (None, true) => (EXIT_SOLVER, "checks_failed"),
        (None, false) => (EXIT_OK, "ok"),
    };
    report["status"] = json!(status);
    if let Some(e) = &error {
        report["error"] = json!(e);
    }
    if !no_timestamp {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        report["generated_at_unix"] = json!(now);
        report["wall_time_seconds"] = json!(elapsed);
    }
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let message = match error {
        Some(e) => format!("solver failure: {e}"),
        None if checks_failed => "one or more checks failed".to_string(),
        None => format!("wrote {}", out_dir.display()),
    };
    Ok((code, message))
}
