//! Newton and continuity-method solvers for
//! `(omega + dd^c phi)^n = c e^{lambda phi + f} omega^n`.

mod klt;
mod newton;
mod paths;

use crate::error::{Error, Result};
use crate::geometry::{HermitianField, ScalarField};
use crate::ma::{trace_diagnostics, TraceDiagnostics};

pub use klt::{far_field_tail, log_lp_norm, periodic_distance_sq, KltDensitySpec};
pub use paths::{
    continuity_path, lambda_path, newton_solve, richardson_extrapolate, solve, solve_calabi,
    solve_degenerate, solve_singular, LambdaPath, PATH_MAX_HALVINGS,
};

pub(crate) use newton::{MaSystem, NewtonSettings};

/// Default residual target for smooth densities.
pub const SMOOTH_TOL: f64 = 1e-9;
/// Default residual target for singular densities.
pub const SINGULAR_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_NEWTON: usize = 50;
/// `j` values of the `lambda_j = 1/j` validation path.
pub const DEFAULT_LAMBDA_JS: [usize; 4] = [4, 8, 16, 32];

/// `t = 0, 1/8, ..., 1`.
pub fn default_t_schedule() -> Vec<f64> {
    (0..=8).map(|k| k as f64 / 8.0).collect()
}

/// `eps_j = 2^-j`, `j = 1..6`.
pub fn default_eps_schedule() -> Vec<f64> {
    (1..=6).map(|j| 0.5f64.powi(j)).collect()
}

/// `delta = 4h, 2h, h` for the grid spacing `h`.
pub fn default_delta_schedule(grid: &crate::geometry::TorusGrid) -> Vec<f64> {
    let h = grid.min_spacing();
    vec![4.0 * h, 2.0 * h, h]
}

/// Right-hand side density.
#[derive(Clone, Debug)]
pub enum DensitySpec {
    /// A strictly positive smooth density, stored as its logarithm.
    Smooth(ScalarField),
    Klt(KltDensitySpec),
}

impl DensitySpec {
    /// Wraps pointwise density values; they must be positive at every node.
    pub fn from_values(f: &ScalarField) -> Result<Self> {
        if f.values().iter().all(|v| *v <= 0.0) || f.mean() <= 0.0 {
            return Err(Error::Infeasible(format!(
                "density has nonpositive integral (mean {:e})",
                f.mean()
            )));
        }
        if f.min() <= 0.0 {
            return Err(Error::Positivity(format!(
                "smooth density must be positive at grid nodes (min {:e}); use a klt density for zeros",
                f.min()
            )));
        }
        Ok(DensitySpec::Smooth(f.map(f64::ln)?))
    }

    pub fn log_density(&self) -> Result<ScalarField> {
        match self {
            DensitySpec::Smooth(f) => Ok(f.clone()),
            DensitySpec::Klt(k) => k.log_density(),
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, DensitySpec::Klt(k) if k.exponents.iter().any(|a| *a != 0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `lambda > 0`: the equation fixes `phi` itself.
    None,
    /// `lambda = 0`: `sup phi = 0` and the constant is an unknown.
    SupZero,
}

/// A single Monge-Ampere problem.
#[derive(Clone, Debug)]
pub struct MaProblem {
    pub omega: HermitianField,
    pub lambda: f64,
    pub density: DensitySpec,
    pub normalization: Normalization,
    pub tol: f64,
    pub max_newton: usize,
}

impl MaProblem {
    pub fn new(omega: &HermitianField, lambda: f64, density: DensitySpec) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::UnsupportedSpec(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        let tol = if density.is_singular() {
            SINGULAR_TOL
        } else {
            SMOOTH_TOL
        };
        let normalization = if lambda > 0.0 {
            Normalization::None
        } else {
            Normalization::SupZero
        };
        let p = Self {
            omega: omega.clone(),
            lambda,
            density,
            normalization,
            tol,
            max_newton: DEFAULT_MAX_NEWTON,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_newton(mut self, max_newton: usize) -> Self {
        self.max_newton = max_newton;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if (self.normalization == Normalization::SupZero) != (self.lambda == 0.0) {
            return Err(Error::UnsupportedSpec(
                "sup-zero normalization is used exactly when lambda = 0".into(),
            ));
        }
        if let DensitySpec::Smooth(f) = &self.density {
            f.check_grid(self.omega.grid())?;
        }
        if self.omega.min_eig() <= 0.0 {
            return Err(Error::Positivity(format!(
                "reference metric is not positive (min eigenvalue {:e})",
                self.omega.min_eig()
            )));
        }
        Ok(())
    }

    pub(crate) fn settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol,
            max_newton: self.max_newton,
        }
    }
}

/// Residual target and Newton cap shared by the path drivers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: SMOOTH_TOL,
            max_newton: DEFAULT_MAX_NEWTON,
        }
    }
}

impl SolverSettings {
    pub fn singular() -> Self {
        Self {
            tol: SINGULAR_TOL,
            ..Self::default()
        }
    }

    pub(crate) fn newton(&self) -> NewtonSettings {
        NewtonSettings::new(self.tol, self.max_newton)
    }
}

#[derive(Clone, Debug)]
pub struct SolutionDiagnostics {
    pub trace: TraceDiagnostics,
    pub osc: f64,
    /// `int (base + dd^c phi)^n`.
    pub mass: f64,
    pub krylov_iterations: usize,
    /// Smallest damping factor accepted by the line search.
    pub min_step: f64,
}

#[derive(Clone, Debug)]
pub struct MaSolution {
    pub phi: ScalarField,
    /// `e^b`; 1 when `lambda > 0`.
    pub c: f64,
    pub b: f64,
    /// Sup-norm of `log ma_density - lambda phi - f - b`.
    pub residual: f64,
    pub iterations: usize,
    pub positivity_margin: f64,
    pub diagnostics: SolutionDiagnostics,
}

/// A family of solves along a parameter schedule.
#[derive(Clone, Debug, Default)]
pub struct PathResult {
    /// Parameter values actually solved, including inserted refinements.
    pub schedule: Vec<f64>,
    pub solutions: Vec<MaSolution>,
    /// `c` per step (or `b` for the `lambda_j` path).
    pub constants: Vec<f64>,
    /// Index of the step each solve was warm-started from.
    pub warm_start: Vec<Option<usize>>,
    pub refinements: usize,
}

impl PathResult {
    pub fn last(&self) -> Option<&MaSolution> {
        self.solutions.last()
    }

    /// Largest `osc(phi)` over the path.
    pub fn max_osc(&self) -> f64 {
        self.solutions
            .iter()
            .map(|s| s.diagnostics.osc)
            .fold(0.0, f64::max)
    }

    fn push(&mut self, t: f64, sol: MaSolution, constant: f64, from: Option<usize>) {
        self.schedule.push(t);
        self.solutions.push(sol);
        self.constants.push(constant);
        self.warm_start.push(from);
    }
}

/// Assembles the solution record for `base + dd^c phi`, with traces and
/// densities measured against `omega`.
pub(crate) fn finish(
    system: &MaSystem<'_>,
    omega: &HermitianField,
    outcome: newton::NewtonOutcome,
    normalization: Normalization,
) -> Result<MaSolution> {
    let grid = omega.grid();
    let mut phi = outcome.phi;
    if normalization == Normalization::SupZero {
        let sup = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        phi.iter_mut().for_each(|v| *v -= sup);
    }
    let (residual, margin) = system.residual_sup(&phi, outcome.b);
    let phi = ScalarField::new(grid, phi)?;
    let tilde = crate::ma::omega_phi(system.base, &phi)?;
    let trace = trace_diagnostics(omega, &tilde)?;
    let mass = tilde.det_field().iter().sum::<f64>() * grid.cell_volume();
    Ok(MaSolution {
        c: outcome.b.exp(),
        b: outcome.b,
        residual,
        iterations: outcome.iterations,
        positivity_margin: margin,
        diagnostics: SolutionDiagnostics {
            trace,
            osc: phi.osc(),
            mass,
            krylov_iterations: outcome.krylov_iterations,
            min_step: outcome.min_step,
        },
        phi,
    })
}
