//! The omega-psh envelope `P(g)` by exponential penalization, an obstacle
//! problem oracle on curves, and the orthogonality diagnostic.

use crate::error::{Error, Result};
use crate::geometry::{
    ddc_mats, flat_shifted_solve, HermMat, HermitianField, ScalarField, TorusGrid,
};
use crate::krylov::gmres;
use crate::ma::{omega_phi, trace_diagnostics};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeOptions {
    /// Increasing penalization parameters, the first at least 1.
    pub schedule: Vec<f64>,
    /// Sup-norm target for `det ratio - e^{lambda (phi - g)}`.
    pub tol: f64,
    pub max_newton: usize,
    /// Smallest eigenvalue of `omega + dd^c phi` tolerated in iterates.
    pub tol_psh: f64,
    /// Contact threshold; `None` means `1e-3 osc(g)`.
    pub eps_contact: Option<f64>,
}

/// `lambda_k = 10 * 2^k`, `k = 0..10`.
pub fn default_lambda_schedule() -> Vec<f64> {
    (0..=10).map(|k| 10.0 * 2f64.powi(k)).collect()
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            schedule: default_lambda_schedule(),
            tol: 1e-10,
            max_newton: 50,
            tol_psh: 1e-6,
            eps_contact: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LambdaStep {
    pub lambda: f64,
    /// `sup |phi_lambda - phi_previous|`; `None` for the first step.
    pub sup_distance: Option<f64>,
    pub residual: f64,
    pub newton_iterations: usize,
    pub positivity_margin: f64,
    /// `max Tr_omega(omega + dd^c phi_lambda)`.
    pub max_trace: f64,
    pub orthogonality_defect: f64,
}

/// Slack in the two barrier inequalities; negative means violated.
#[derive(Clone, Copy, Debug)]
pub struct SandwichEntry {
    pub lambda: f64,
    /// `min (phi_lambda - lower barrier)`.
    pub lower_slack: f64,
    /// `min (upper barrier - phi_lambda)`.
    pub upper_slack: f64,
}

#[derive(Clone, Debug)]
pub struct EnvelopeResult {
    /// `phi` at the last solved `lambda`.
    pub p: ScalarField,
    pub lambda_trace: Vec<LambdaStep>,
    /// Every `phi_lambda`, in schedule order.
    pub phis: Vec<ScalarField>,
    /// Barriers checked against `p` itself.
    pub sandwich: Vec<SandwichEntry>,
    pub contact_mask: Vec<bool>,
    pub eps_contact: f64,
    pub orthogonality_defect: f64,
    /// `max(0, sup log(omega_g^n / omega^n))`.
    pub upper_constant: f64,
    pub inf_g: f64,
    /// Set when Newton failed part-way; the result covers the solved prefix.
    pub failure: Option<String>,
}

impl EnvelopeResult {
    /// Barrier slacks of every stored `phi_lambda` against a reference
    /// envelope (e.g. the obstacle oracle).
    pub fn sandwich_against(&self, p_ref: &ScalarField) -> Result<Vec<SandwichEntry>> {
        self.phis
            .iter()
            .zip(&self.lambda_trace)
            .map(|(phi, step)| {
                sandwich_entry(phi, p_ref, step.lambda, self.inf_g, self.upper_constant)
            })
            .collect()
    }

    pub fn min_sandwich_slack(&self) -> f64 {
        self.sandwich
            .iter()
            .map(|s| s.lower_slack.min(s.upper_slack))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contact_field(&self) -> ScalarField {
        let v = self
            .contact_mask
            .iter()
            .map(|&c| if c { 1.0 } else { 0.0 })
            .collect();
        ScalarField::new(self.p.grid(), v).expect("finite mask")
    }

    /// `max Tr / min Tr` of the per-step maximal traces with `lambda` in `[lo, hi]`.
    pub fn trace_ratio(&self, lo: f64, hi: f64) -> f64 {
        let traces: Vec<f64> = self
            .lambda_trace
            .iter()
            .filter(|s| s.lambda >= lo && s.lambda <= hi)
            .map(|s| s.max_trace)
            .collect();
        let max = traces.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = traces.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

fn sandwich_entry(
    phi: &ScalarField,
    p: &ScalarField,
    lambda: f64,
    inf_g: f64,
    upper: f64,
) -> Result<SandwichEntry> {
    phi.check_grid(p.grid())?;
    let n = phi.grid().n() as f64;
    let mut lower_slack = f64::INFINITY;
    let mut upper_slack = f64::INFINITY;
    for (&f, &q) in phi.values().iter().zip(p.values()) {
        let lower = (1.0 - 1.0 / lambda) * q + inf_g / lambda - n * lambda.ln() / lambda;
        lower_slack = lower_slack.min(f - lower);
        upper_slack = upper_slack.min(q + upper / lambda - f);
    }
    Ok(SandwichEntry {
        lambda,
        lower_slack,
        upper_slack,
    })
}

/// `int_{P < g - eps} max(0, (omega + dd^c P)^n)`.
pub fn orthogonality_defect(
    omega: &HermitianField,
    p: &ScalarField,
    g: &ScalarField,
    eps_contact: f64,
) -> Result<f64> {
    g.check_grid(omega.grid())?;
    let tilde = omega_phi(omega, p)?;
    let sum: f64 = tilde
        .mats()
        .iter()
        .zip(p.values().iter().zip(g.values()))
        .filter(|(_, (pv, gv))| **pv < **gv - eps_contact)
        .map(|(m, _)| m.det().max(0.0))
        .sum();
    Ok(sum * omega.grid().cell_volume())
}

/// `(omega + dd^c phi)^n = e^{lambda (phi - g)} omega^n` in difference form,
/// which stays finite where the density underflows.
struct Penalized<'a> {
    grid: &'a TorusGrid,
    omega: &'a HermitianField,
    det_omega: Vec<f64>,
    g: &'a [f64],
    lambda: f64,
}

struct PenalizedEval {
    mats: Vec<HermMat>,
    residual: Vec<f64>,
    weight: Vec<f64>,
    sup: f64,
    margin: f64,
}

impl Penalized<'_> {
    fn residual_from(&self, mats: Vec<HermMat>, phi: &[f64]) -> PenalizedEval {
        let len = self.grid.len();
        let mut residual = Vec::with_capacity(len);
        let mut weight = Vec::with_capacity(len);
        let mut sup = 0.0f64;
        let mut margin = f64::INFINITY;
        for i in 0..len {
            let e = (self.lambda * (phi[i] - self.g[i])).exp();
            let r = mats[i].det() / self.det_omega[i] - e;
            sup = if r.is_finite() {
                sup.max(r.abs())
            } else {
                f64::INFINITY
            };
            margin = margin.min(mats[i].min_eig());
            residual.push(r);
            weight.push(self.lambda * e);
        }
        PenalizedEval {
            mats,
            residual,
            weight,
            sup,
            margin,
        }
    }

    fn evaluate(&self, phi: &[f64]) -> PenalizedEval {
        let h = ddc_mats(self.grid, phi);
        let mats = self
            .omega
            .mats()
            .iter()
            .zip(&h)
            .map(|(a, b)| a.add(b))
            .collect();
        self.residual_from(mats, phi)
    }

    fn solve(
        &self,
        phi0: &[f64],
        opts: &EnvelopeOptions,
    ) -> Result<(Vec<f64>, PenalizedEval, usize)> {
        let grid = self.grid;
        let len = grid.len();
        let n = grid.n() as f64;
        let mut phi = phi0.to_vec();
        let mut ev = self.evaluate(&phi);
        let mut iterations = 0;
        while ev.sup > opts.tol {
            if iterations >= opts.max_newton {
                return Err(Error::IterationLimit {
                    what: "penalized Newton",
                    limit: opts.max_newton,
                    residual: ev.sup,
                });
            }
            let adj: Vec<HermMat> = ev
                .mats
                .iter()
                .zip(&self.det_omega)
                .map(|(m, d)| m.adjugate().scale(1.0 / d))
                .collect();
            let kappa = adj.iter().map(HermMat::trace).sum::<f64>() / (n * len as f64);
            // Only the mean mode needs the shift; a small one preconditions the
            // free region far better than the average weight.
            let shift = 1e-3 * ev.weight.iter().sum::<f64>() / len as f64;
            let weight = &ev.weight;
            let apply = |x: &[f64], out: &mut [f64]| {
                let h = ddc_mats(grid, x);
                for i in 0..len {
                    out[i] = adj[i].trace_product(&h[i]) - weight[i] * x[i];
                }
            };
            let precond = |r: &[f64], out: &mut [f64]| {
                out.copy_from_slice(&flat_shifted_solve(grid, kappa, shift, r));
            };
            let rhs: Vec<f64> = ev.residual.iter().map(|r| -r).collect();
            let mut dphi = vec![0.0; len];
            // Linear-solve error lands on the determinant, so it must stay well
            // below tol_psh where the density underflows.
            let krylov_tol = (1e-2 * opts.tol_psh / ev.sup).clamp(1e-10, 1e-3);
            gmres(apply, precond, &rhs, &mut dphi, krylov_tol, 60, 2000);
            let hd = ddc_mats(grid, &dphi);

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..=30 {
                let mats = ev
                    .mats
                    .iter()
                    .zip(&hd)
                    .map(|(a, b)| a.add_scaled(b, step))
                    .collect();
                let trial: Vec<f64> = phi.iter().zip(&dphi).map(|(p, d)| p + step * d).collect();
                let t = self.residual_from(mats, &trial);
                if t.margin >= -opts.tol_psh && (t.sup < ev.sup || t.sup <= opts.tol) {
                    accepted = Some((trial, t));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((trial, t)) => {
                    phi = trial;
                    ev = t;
                    iterations += 1;
                }
                None => {
                    return Err(Error::PositivityCollapse {
                        iteration: iterations,
                        residual: ev.sup,
                    })
                }
            }
        }
        Ok((phi, ev, iterations))
    }
}

/// Solves the penalized equations along `opts.schedule`, warm-started, and
/// returns the last `phi` as the envelope approximation.
pub fn envelope_penalized(
    omega: &HermitianField,
    g: &ScalarField,
    opts: &EnvelopeOptions,
) -> Result<EnvelopeResult> {
    let grid = omega.grid();
    g.check_grid(grid)?;
    if omega.min_eig() <= 0.0 {
        return Err(Error::Positivity("reference metric is not positive".into()));
    }
    let schedule = &opts.schedule;
    if schedule.is_empty() || schedule[0] < 1.0 || schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::UnsupportedSpec(
            "lambda schedule must increase and start at >= 1".into(),
        ));
    }
    let det_omega: Vec<f64> = omega.mats().iter().map(HermMat::det).collect();
    let omega_g = omega_phi(omega, g)?;
    let log_ratio_sup = omega_g
        .mats()
        .iter()
        .zip(&det_omega)
        .map(|(m, d)| (m.det() / d).ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let upper_constant = if log_ratio_sup.is_nan() {
        0.0
    } else {
        log_ratio_sup.max(0.0)
    };
    let inf_g = g.min();
    let eps_contact = opts.eps_contact.unwrap_or(1e-3 * g.osc());

    let mut phi = vec![inf_g; grid.len()];
    let mut phis: Vec<ScalarField> = Vec::new();
    let mut trace: Vec<LambdaStep> = Vec::new();
    let mut failure = None;
    for &lambda in schedule {
        let system = Penalized {
            grid,
            omega,
            det_omega: det_omega.clone(),
            g: g.values(),
            lambda,
        };
        match system.solve(&phi, opts) {
            Ok((next, ev, iterations)) => {
                let field = ScalarField::new(grid, next.clone())?;
                let tilde = HermitianField::from_mats_unchecked(grid, ev.mats);
                let tr = trace_diagnostics(omega, &tilde)?;
                let max_trace = tr.tr_omega_tilde.max();
                trace.push(LambdaStep {
                    lambda,
                    sup_distance: phis.last().map(|p| p.sup_distance(&field)).transpose()?,
                    residual: ev.sup,
                    newton_iterations: iterations,
                    positivity_margin: ev.margin,
                    max_trace,
                    orthogonality_defect: orthogonality_defect(omega, &field, g, eps_contact)?,
                });
                phis.push(field);
                phi = next;
            }
            Err(e) => {
                if phis.is_empty() {
                    return Err(e);
                }
                failure = Some(format!("lambda = {lambda}: {e}"));
                break;
            }
        }
    }

    let p = phis.last().expect("at least one solved lambda").clone();
    let sandwich = phis
        .iter()
        .zip(&trace)
        .map(|(phi, step)| sandwich_entry(phi, &p, step.lambda, inf_g, upper_constant))
        .collect::<Result<Vec<_>>>()?;
    let contact_mask = p
        .values()
        .iter()
        .zip(g.values())
        .map(|(pv, gv)| *pv >= gv - eps_contact)
        .collect();
    let orthogonality_defect = trace.last().map(|s| s.orthogonality_defect).unwrap_or(0.0);
    Ok(EnvelopeResult {
        p,
        lambda_trace: trace,
        phis,
        sandwich,
        contact_mask,
        eps_contact,
        orthogonality_defect,
        upper_constant,
        inf_g,
        failure,
    })
}

/// Largest `u <= g` with `Delta u >= -2` on a flat curve, by red-black
/// projected SOR on the 5-point Laplacian in `(x, y)`.
#[derive(Clone, Debug)]
pub struct ObstacleSolution {
    pub u: ScalarField,
    pub sweeps: usize,
    /// `max` over nodes of `min(g - u, |Delta u + 2|)`.
    pub complementarity: f64,
}

/// Nodes count as converged when `g - u <= CONTACT_TOL` or
/// `|Delta u + 2| <= LAPLACIAN_TOL`.
pub const CONTACT_TOL: f64 = 1e-10;
pub const LAPLACIAN_TOL: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 1_000_000;

pub fn envelope_obstacle_oracle(omega: &HermitianField, g: &ScalarField) -> Result<ScalarField> {
    envelope_obstacle_oracle_with_stats(omega, g).map(|s| s.u)
}

pub fn envelope_obstacle_oracle_with_stats(
    omega: &HermitianField,
    g: &ScalarField,
) -> Result<ObstacleSolution> {
    let grid = omega.grid();
    g.check_grid(grid)?;
    if grid.n() != 1 {
        return Err(Error::UnsupportedSpec(
            "the obstacle oracle is defined on curves only".into(),
        ));
    }
    if omega.mats().iter().any(|m| (m.a11 - 1.0).abs() > 1e-14) {
        return Err(Error::UnsupportedSpec(
            "the obstacle oracle needs the flat metric".into(),
        ));
    }
    let res = grid.res();
    let (hx, hy) = (grid.spacing(0), grid.spacing(1));
    let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    let diag = 2.0 * (cx + cy);
    let omega_sor = 2.0 / (1.0 + (2.0 * std::f64::consts::PI / res as f64).sin());
    let gv = g.values();
    let mut u = gv.to_vec();
    let at = |i: usize, j: usize| i * res + j;
    let laplacian = |u: &[f64], i: usize, j: usize| {
        let (ip, im) = ((i + 1) % res, (i + res - 1) % res);
        let (jp, jm) = ((j + 1) % res, (j + res - 1) % res);
        cx * (u[at(ip, j)] + u[at(im, j)]) + cy * (u[at(i, jp)] + u[at(i, jm)]) - diag * u[at(i, j)]
    };
    let status = |u: &[f64]| {
        let mut done = true;
        let mut comp = 0.0f64;
        for i in 0..res {
            for j in 0..res {
                let gap = gv[at(i, j)] - u[at(i, j)];
                let lap = laplacian(u, i, j) + 2.0;
                comp = comp.max(gap.min(lap.abs()));
                if !(gap <= CONTACT_TOL || lap.abs() <= LAPLACIAN_TOL) || lap < -LAPLACIAN_TOL {
                    done = false;
                }
            }
        }
        (done, comp)
    };

    let mut sweeps = 0;
    loop {
        if sweeps % 20 == 0 {
            let (done, comp) = status(&u);
            if done {
                return Ok(ObstacleSolution {
                    u: ScalarField::new(grid, u)?,
                    sweeps,
                    complementarity: comp,
                });
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::IterationLimit {
                    what: "projected SOR",
                    limit: MAX_SWEEPS,
                    residual: comp,
                });
            }
        }
        for color in 0..2 {
            for i in 0..res {
                let start = (i + color) % 2;
                for j in (start..res).step_by(2) {
                    let r = laplacian(&u, i, j) + 2.0;
                    let k = at(i, j);
                    u[k] = (u[k] + omega_sor * r / diag).min(gv[k]);
                }
            }
        }
        sweeps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn psh_obstacle_is_its_own_envelope() {
        let grid = TorusGrid::new(1, 32).unwrap();
        let w = HermitianField::identity(&grid);
        let g = ScalarField::from_fn(&grid, |x| 0.03 * (2.0 * PI * x[0]).cos()).unwrap();
        let u = envelope_obstacle_oracle(&w, &g).unwrap();
        assert!(u.sup_distance(&g).unwrap() < 1e-10);
        assert_eq!(orthogonality_defect(&w, &g, &g, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn oracle_rejects_surfaces() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let w = HermitianField::identity(&grid);
        let g = ScalarField::zeros(&grid);
        assert!(matches!(
            envelope_obstacle_oracle(&w, &g),
            Err(Error::UnsupportedSpec(_))
        ));
    }

    #[test]
    fn zero_obstacle() {
        let grid = TorusGrid::new(1, 16).unwrap();
        let w = HermitianField::identity(&grid);
        let g = ScalarField::zeros(&grid);
        let opts = EnvelopeOptions {
            schedule: vec![10.0, 100.0],
            ..EnvelopeOptions::default()
        };
        let r = envelope_penalized(&w, &g, &opts).unwrap();
        assert!(r.p.sup_norm() < 1e-12);
        assert!(r.min_sandwich_slack() >= -1e-8);
    }
}
