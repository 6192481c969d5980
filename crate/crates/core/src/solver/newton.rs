//! Damped inexact Newton on the log-residual
//! `r = log det(base + H phi) - log det(omega) - lambda phi - f - b`.

use crate::error::{Error, Result};
use crate::geometry::{ddc_mats, flat_shifted_solve, HermMat, HermitianField, TorusGrid};
use crate::krylov::gmres;

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Relative GMRES target per Newton step.
    pub krylov_tol: f64,
    pub restart: usize,
    pub max_krylov: usize,
}

impl NewtonSettings {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            max_halvings: 30,
            krylov_tol: 1e-3,
            restart: 60,
            max_krylov: 600,
        }
    }
}

/// One Monge-Ampere equation in residual form. With `bordered` the constant
/// `b` is an unknown and `phi` is kept mean-zero.
pub(crate) struct MaSystem<'a> {
    pub grid: &'a TorusGrid,
    pub base: &'a HermitianField,
    pub log_vol: Vec<f64>,
    pub lambda: f64,
    pub rhs: &'a [f64],
    pub bordered: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct NewtonOutcome {
    pub phi: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    pub krylov_iterations: usize,
    /// Smallest accepted damping factor.
    pub min_step: f64,
}

struct Eval {
    mats: Vec<HermMat>,
    residual: Vec<f64>,
    sup: f64,
    margin: f64,
}

impl<'a> MaSystem<'a> {
    pub fn new(
        base: &'a HermitianField,
        omega: &HermitianField,
        lambda: f64,
        rhs: &'a [f64],
        bordered: bool,
    ) -> Self {
        Self {
            grid: base.grid(),
            base,
            log_vol: omega.mats().iter().map(|m| m.det().ln()).collect(),
            lambda,
            rhs,
            bordered,
        }
    }

    fn residual_from(&self, mats: &[HermMat], phi: &[f64], b: f64) -> (Vec<f64>, f64, f64) {
        let mut margin = f64::INFINITY;
        let mut sup = 0.0f64;
        let residual: Vec<f64> = mats
            .iter()
            .enumerate()
            .map(|(i, m)| {
                margin = margin.min(m.min_eig());
                let r = m.det().ln() - self.log_vol[i] - self.lambda * phi[i] - self.rhs[i] - b;
                sup = if r.is_nan() {
                    f64::INFINITY
                } else {
                    sup.max(r.abs())
                };
                r
            })
            .collect();
        (residual, sup, margin)
    }

    fn evaluate(&self, phi: &[f64], b: f64) -> Eval {
        let h = ddc_mats(self.grid, phi);
        let mats: Vec<HermMat> = self
            .base
            .mats()
            .iter()
            .zip(&h)
            .map(|(g, h)| g.add(h))
            .collect();
        let (residual, sup, margin) = self.residual_from(&mats, phi, b);
        Eval {
            mats,
            residual,
            sup,
            margin,
        }
    }

    /// Sup-norm residual and positivity margin of a candidate.
    pub fn residual_sup(&self, phi: &[f64], b: f64) -> (f64, f64) {
        let ev = self.evaluate(phi, b);
        (ev.sup, ev.margin)
    }

    /// Best constant `b` for a given `phi`: the mean of the unshifted residual.
    pub fn initial_constant(&self, phi: &[f64]) -> f64 {
        let ev = self.evaluate(phi, 0.0);
        ev.residual.iter().sum::<f64>() / ev.residual.len() as f64
    }

    pub fn solve(&self, phi0: &[f64], b0: f64, settings: &NewtonSettings) -> Result<NewtonOutcome> {
        let len = self.grid.len();
        let mut phi = phi0.to_vec();
        if self.bordered {
            let mean = phi.iter().sum::<f64>() / len as f64;
            phi.iter_mut().for_each(|v| *v -= mean);
        }
        let mut b = if self.bordered { b0 } else { 0.0 };
        let mut ev = self.evaluate(&phi, b);
        if !(ev.margin > 0.0) {
            return Err(Error::Positivity(format!(
                "initial guess is not strictly psh (margin {:e})",
                ev.margin
            )));
        }
        let mut iterations = 0;
        let mut krylov_iterations = 0;
        let mut min_step = 1.0f64;

        while ev.sup > settings.tol {
            if iterations >= settings.max_iter {
                return Err(Error::IterationLimit {
                    what: "Newton",
                    limit: settings.max_iter,
                    residual: ev.sup,
                });
            }
            let (dphi, db, kits) = self.newton_direction(&ev, settings);
            krylov_iterations += kits;
            let hd = ddc_mats(self.grid, &dphi);

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..=settings.max_halvings {
                let mats: Vec<HermMat> = ev
                    .mats
                    .iter()
                    .zip(&hd)
                    .map(|(g, h)| g.add_scaled(h, step))
                    .collect();
                let trial: Vec<f64> = phi.iter().zip(&dphi).map(|(p, d)| p + step * d).collect();
                let (residual, sup, margin) = self.residual_from(&mats, &trial, b + step * db);
                if margin > 0.0 && (sup < ev.sup || sup <= settings.tol) {
                    accepted = Some((
                        trial,
                        Eval {
                            mats,
                            residual,
                            sup,
                            margin,
                        },
                    ));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((trial, new_ev)) => {
                    phi = trial;
                    b += step * db;
                    ev = if new_ev.sup <= settings.tol {
                        self.evaluate(&phi, b)
                    } else {
                        new_ev
                    };
                    min_step = min_step.min(step);
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

        Ok(NewtonOutcome {
            phi,
            b,
            iterations,
            krylov_iterations,
            min_step,
        })
    }

    /// Solves `J (dphi, db) = -r` inexactly. `J chi = Tr(G^{-1} H chi) - lambda chi`,
    /// bordered by `-db` and the gauge `mean(dphi) = 0` when `b` is unknown.
    fn newton_direction(&self, ev: &Eval, settings: &NewtonSettings) -> (Vec<f64>, f64, usize) {
        let grid = self.grid;
        let len = grid.len();
        let inv: Vec<HermMat> = ev.mats.iter().map(HermMat::inverse).collect();
        let n = grid.n() as f64;
        let kappa = inv.iter().map(HermMat::trace).sum::<f64>() / (n * len as f64);
        let lambda = self.lambda;
        let jac = |x: &[f64], out: &mut [f64]| {
            let h = ddc_mats(grid, &x[..len]);
            for i in 0..len {
                out[i] = inv[i].trace_product(&h[i]) - lambda * x[i];
            }
        };

        if self.bordered {
            let mut rhs: Vec<f64> = ev.residual.iter().map(|r| -r).collect();
            rhs.push(0.0);
            let apply = |x: &[f64], out: &mut [f64]| {
                jac(x, out);
                let db = x[len];
                for o in out[..len].iter_mut() {
                    *o -= db;
                }
                out[len] = x[..len].iter().sum::<f64>() / len as f64;
            };
            let precond = |r: &[f64], out: &mut [f64]| {
                let mean = r[..len].iter().sum::<f64>() / len as f64;
                let centered: Vec<f64> = r[..len].iter().map(|v| v - mean).collect();
                let u = flat_shifted_solve(grid, kappa, 0.0, &centered);
                for i in 0..len {
                    out[i] = u[i] + r[len];
                }
                out[len] = -mean;
            };
            let mut x = vec![0.0; len + 1];
            let stats = gmres(
                apply,
                precond,
                &rhs,
                &mut x,
                settings.krylov_tol,
                settings.restart,
                settings.max_krylov,
            );
            let db = x[len];
            x.truncate(len);
            // Keep the gauge exact.
            let mean = x.iter().sum::<f64>() / len as f64;
            x.iter_mut().for_each(|v| *v -= mean);
            (x, db, stats.iterations)
        } else {
            let rhs: Vec<f64> = ev.residual.iter().map(|r| -r).collect();
            let precond = |r: &[f64], out: &mut [f64]| {
                out.copy_from_slice(&flat_shifted_solve(grid, kappa, lambda, r));
            };
            let mut x = vec![0.0; len];
            let stats = gmres(
                jac,
                precond,
                &rhs,
                &mut x,
                settings.krylov_tol,
                settings.restart,
                settings.max_krylov,
            );
            (x, 0.0, stats.iterations)
        }
    }
}
