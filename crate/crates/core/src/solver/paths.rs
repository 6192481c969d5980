//! Single solves and the parameter-path drivers built on the Newton engine.

use crate::error::{Error, Result};
use crate::geometry::{HermitianField, ScalarField};

use super::newton::NewtonOutcome;
use super::{
    finish, DensitySpec, KltDensitySpec, MaProblem, MaSolution, MaSystem, Normalization,
    PathResult, SolverSettings,
};

/// Consecutive halvings allowed between two accepted path steps.
const MAX_REFINEMENTS: usize = 10;
/// A continuity step whose Newton line search needs more than this many
/// halvings left the basin of the warm start and is bisected instead.
pub const PATH_MAX_HALVINGS: usize = 2;

fn abort(parameter: f64, refinements: usize, err: &Error, partial: PathResult) -> Error {
    Error::PathAborted {
        parameter,
        refinements,
        reason: err.to_string(),
        partial: Box::new(partial),
    }
}

/// Solves a problem with `lambda > 0` from `init` (default 0).
pub fn newton_solve(problem: &MaProblem, init: Option<&ScalarField>) -> Result<MaSolution> {
    problem.validate()?;
    if problem.lambda <= 0.0 {
        return Err(Error::UnsupportedSpec(
            "newton_solve needs lambda > 0; use solve_calabi for lambda = 0".into(),
        ));
    }
    let omega = &problem.omega;
    let grid = omega.grid();
    let log_f = problem.density.log_density()?;
    log_f.check_grid(grid)?;
    let zeros;
    let init = match init {
        Some(phi) => {
            phi.check_grid(grid)?;
            phi.values()
        }
        None => {
            zeros = vec![0.0; grid.len()];
            &zeros
        }
    };
    let system = MaSystem::new(omega, omega, problem.lambda, log_f.values(), false);
    let outcome = system.solve(init, 0.0, &problem.settings().newton())?;
    finish(&system, omega, outcome, Normalization::None)
}

/// Dispatches on `lambda`: Newton for `lambda > 0`, the bordered Calabi
/// solve (with `p_exponent = 2`) for `lambda = 0`.
pub fn solve(problem: &MaProblem) -> Result<MaSolution> {
    if problem.lambda > 0.0 {
        newton_solve(problem, None)
    } else {
        solve_calabi(&problem.omega, &problem.density, 2.0, &problem.settings())
    }
}

/// Bordered solve of `(base + dd^c u)^n = e^{f + b} omega^n` for `(u, b)`.
fn bordered(
    base: &HermitianField,
    omega: &HermitianField,
    log_f: &[f64],
    init: &[f64],
    b0: Option<f64>,
    settings: &SolverSettings,
) -> Result<MaSolution> {
    let system = MaSystem::new(base, omega, 0.0, log_f, true);
    let b0 = b0.unwrap_or_else(|| system.initial_constant(init));
    let outcome: NewtonOutcome = system.solve(init, b0, &settings.newton())?;
    finish(&system, omega, outcome, Normalization::SupZero)
}

fn check_density(
    omega: &HermitianField,
    density: &DensitySpec,
    p_exponent: f64,
) -> Result<ScalarField> {
    if !(p_exponent > 1.0) {
        return Err(Error::Infeasible(format!(
            "p_exponent must exceed 1, got {p_exponent}"
        )));
    }
    if let DensitySpec::Klt(k) = density {
        k.check_lp(p_exponent)?;
    }
    let log_f = density.log_density()?;
    log_f.check_grid(omega.grid())?;
    let norm = super::log_lp_norm(&log_f, p_exponent);
    if !norm.is_finite() {
        return Err(Error::KltViolation(format!(
            "||f||_{p_exponent} is not finite on the grid"
        )));
    }
    Ok(log_f)
}

/// `(omega + dd^c phi)^n = c f omega^n`, `sup phi = 0`, with `c` unknown.
///
/// Runs bordered Newton; if that fails, the `lambda_j = 1/j` path supplies a
/// warm start and the bordered solve is retried once.
pub fn solve_calabi(
    omega: &HermitianField,
    density: &DensitySpec,
    p_exponent: f64,
    settings: &SolverSettings,
) -> Result<MaSolution> {
    if omega.min_eig() <= 0.0 {
        return Err(Error::Positivity("reference metric is not positive".into()));
    }
    let log_f = check_density(omega, density, p_exponent)?;
    let zeros = vec![0.0; omega.grid().len()];
    match bordered(omega, omega, log_f.values(), &zeros, None, settings) {
        Ok(sol) => Ok(sol),
        Err(first) => {
            let path = lambda_path(omega, density, &super::DEFAULT_LAMBDA_JS, settings)
                .map_err(|_| first)?;
            let last = path.path.last().expect("nonempty lambda path");
            let init = last.phi.shifted(-last.phi.max());
            bordered(
                omega,
                omega,
                log_f.values(),
                init.values(),
                Some(path.b),
                settings,
            )
        }
    }
}

/// Value at 0 of the polynomial through `(xs[i], ys[i])` (Neville).
pub fn richardson_extrapolate(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mut p = ys.to_vec();
    let m = xs.len();
    for k in 1..m {
        for i in 0..m - k {
            p[i] = (xs[i + k] * p[i] - xs[i] * p[i + 1]) / (xs[i + k] - xs[i]);
        }
    }
    p[0]
}

/// The `lambda_j = 1/j` approximation of the Calabi constant.
#[derive(Clone, Debug)]
pub struct LambdaPath {
    /// Schedule holds `lambda_j`, constants hold `b_j = sup(phi_j) / j`.
    pub path: PathResult,
    /// Extrapolation of `b_j` to `lambda = 0`.
    pub b: f64,
    pub c: f64,
}

/// Solves `(omega + dd^c phi_j)^n = e^{phi_j / j} f omega^n` for each `j`
/// and extrapolates `b_j = sup(phi_j) / j` to `j = infinity`.
pub fn lambda_path(
    omega: &HermitianField,
    density: &DensitySpec,
    js: &[usize],
    settings: &SolverSettings,
) -> Result<LambdaPath> {
    if js.is_empty() || js.contains(&0) {
        return Err(Error::UnsupportedSpec(
            "lambda path needs positive j values".into(),
        ));
    }
    let log_f = density.log_density()?;
    log_f.check_grid(omega.grid())?;
    let mut path = PathResult::default();
    let mut init = vec![0.0; omega.grid().len()];
    let mut prev: Option<(usize, f64)> = None;
    for &j in js {
        let lambda = 1.0 / j as f64;
        if let Some((pj, pb)) = prev {
            // phi_j is close to j b + (sup-normalized potential).
            let shift = (j as f64 - pj as f64) * pb;
            init.iter_mut().for_each(|v| *v += shift);
        }
        let system = MaSystem::new(omega, omega, lambda, log_f.values(), false);
        let outcome = match system.solve(&init, 0.0, &settings.newton()) {
            Ok(o) => o,
            Err(e) => return Err(abort(lambda, 0, &e, path)),
        };
        let sol = finish(&system, omega, outcome, Normalization::None)?;
        let b = sol.phi.max() * lambda;
        init = sol.phi.values().to_vec();
        let from = path.solutions.len().checked_sub(1);
        path.push(lambda, sol, b, from);
        prev = Some((j, b));
    }
    let b = richardson_extrapolate(&path.schedule, &path.constants);
    Ok(LambdaPath {
        path,
        b,
        c: b.exp(),
    })
}

/// The continuity family `(omega + dd^c phi_t)^n = e^{phi_t + t f} omega^n`
/// along `t_schedule`, warm-started, with step bisection on failure.
pub fn continuity_path(
    omega: &HermitianField,
    log_f: &ScalarField,
    t_schedule: &[f64],
    settings: &SolverSettings,
) -> Result<PathResult> {
    log_f.check_grid(omega.grid())?;
    if t_schedule.first() != Some(&0.0)
        || t_schedule.last() != Some(&1.0)
        || t_schedule.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::UnsupportedSpec(
            "t schedule must increase strictly from 0 to 1".into(),
        ));
    }
    let len = omega.grid().len();
    let mut newton = settings.newton();
    newton.max_halvings = PATH_MAX_HALVINGS;
    let attempt = |t: f64, init: &[f64]| -> Result<MaSolution> {
        let rhs: Vec<f64> = log_f.values().iter().map(|v| t * v).collect();
        let system = MaSystem::new(omega, omega, 1.0, &rhs, false);
        let outcome = system.solve(init, 0.0, &newton)?;
        finish(&system, omega, outcome, Normalization::None)
    };

    let mut path = PathResult::default();
    let first =
        attempt(0.0, &vec![0.0; len]).map_err(|e| abort(0.0, 0, &e, PathResult::default()))?;
    path.push(0.0, first, 1.0, None);
    let mut current = 0.0;
    for &target in &t_schedule[1..] {
        let mut next = target;
        let mut halvings = 0;
        while current < target {
            let last = path.solutions.len() - 1;
            match attempt(next, path.solutions[last].phi.values()) {
                Ok(sol) => {
                    path.push(next, sol, 1.0, Some(last));
                    current = next;
                    next = target;
                    halvings = 0;
                }
                Err(e) => {
                    if halvings == MAX_REFINEMENTS {
                        let refinements = path.refinements;
                        return Err(abort(next, refinements, &e, path));
                    }
                    halvings += 1;
                    path.refinements += 1;
                    next = 0.5 * (current + next);
                }
            }
        }
    }
    Ok(path)
}

/// `(theta + eps_j omega + dd^c u_j)^n = c_j f omega^n` along decreasing
/// `eps_j`, sup-normalized, with geometric refinement of rejected steps.
pub fn solve_degenerate(
    theta: &HermitianField,
    omega: &HermitianField,
    density: &DensitySpec,
    eps_schedule: &[f64],
    settings: &SolverSettings,
) -> Result<PathResult> {
    let grid = omega.grid();
    theta.check_grid(grid)?;
    let theta_min = theta.min_eig();
    if theta_min < -crate::geometry::SEMIPOSITIVE_TOL {
        return Err(Error::Positivity(format!(
            "theta is not semipositive (min eigenvalue {theta_min:e})"
        )));
    }
    let theta_volume: f64 = theta.det_field().iter().sum::<f64>() * grid.cell_volume();
    if theta_volume <= 0.0 {
        return Err(Error::Infeasible("theta has zero volume (not big)".into()));
    }
    if eps_schedule.is_empty()
        || eps_schedule.iter().any(|e| !(*e > 0.0))
        || eps_schedule.windows(2).any(|w| !(w[1] < w[0]))
    {
        return Err(Error::UnsupportedSpec(
            "eps schedule must be positive and strictly decreasing".into(),
        ));
    }
    let log_f = check_density(omega, density, 2.0)?;
    let zeros = vec![0.0; grid.len()];
    let attempt = |eps: f64, init: &[f64]| -> Result<MaSolution> {
        let base = theta.add(&omega.scale(eps))?;
        match bordered(&base, omega, log_f.values(), init, None, settings) {
            Err(Error::Positivity(_)) => {
                bordered(&base, omega, log_f.values(), &zeros, None, settings)
            }
            other => other,
        }
    };

    let mut path = PathResult::default();
    let first = attempt(eps_schedule[0], &zeros)
        .map_err(|e| abort(eps_schedule[0], 0, &e, PathResult::default()))?;
    let c = first.c;
    path.push(eps_schedule[0], first, c, None);
    let mut current = eps_schedule[0];
    for &target in &eps_schedule[1..] {
        let mut next = target;
        let mut halvings = 0;
        while current > target {
            let last = path.solutions.len() - 1;
            match attempt(next, path.solutions[last].phi.values()) {
                Ok(sol) => {
                    let c = sol.c;
                    path.push(next, sol, c, Some(last));
                    current = next;
                    next = target;
                    halvings = 0;
                }
                Err(e) => {
                    if halvings == MAX_REFINEMENTS {
                        let refinements = path.refinements;
                        return Err(abort(next, refinements, &e, path));
                    }
                    halvings += 1;
                    path.refinements += 1;
                    next = (current * next).sqrt();
                }
            }
        }
    }
    Ok(path)
}

/// Calabi solves with the mollified klt densities `f_delta` along
/// decreasing `delta`, warm-started.
pub fn solve_singular(
    omega: &HermitianField,
    klt: &KltDensitySpec,
    delta_schedule: &[f64],
    p_exponent: f64,
    settings: &SolverSettings,
) -> Result<PathResult> {
    klt.check_lp(p_exponent)?;
    if delta_schedule.is_empty() || delta_schedule.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::UnsupportedSpec(
            "delta schedule must be nonnegative".into(),
        ));
    }
    let mut path = PathResult::default();
    let mut init = vec![0.0; omega.grid().len()];
    let mut b0 = None;
    for &delta in delta_schedule {
        let spec = klt.with_delta(delta);
        let log_f = check_density(omega, &DensitySpec::Klt(spec), p_exponent)?;
        match bordered(omega, omega, log_f.values(), &init, b0, settings) {
            Ok(sol) => {
                init = sol.phi.values().to_vec();
                b0 = Some(sol.b);
                let from = path.solutions.len().checked_sub(1);
                let c = sol.c;
                path.push(delta, sol, c, from);
            }
            Err(e) => return Err(abort(delta, 0, &e, path)),
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neville_recovers_polynomial() {
        let xs = [0.25, 0.125, 0.0625, 0.03125];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x + 0.5 * x * x * x).collect();
        assert!((richardson_extrapolate(&xs, &ys) - 2.0).abs() < 1e-13);
    }
}
