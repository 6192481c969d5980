//! Mollified klt-type densities `prod (|z - p_i|^2 + delta^2)^{a_i} e^{s}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{ScalarField, TorusGrid};

#[derive(Clone, Debug)]
pub struct KltDensitySpec {
    pub grid: TorusGrid,
    /// Real coordinates of each singular point (`2n` entries).
    pub points: Vec<Vec<f64>>,
    pub exponents: Vec<f64>,
    /// Logarithm of the smooth factor.
    pub smooth_factor: Option<ScalarField>,
    pub delta: f64,
}

/// Smooth periodic replacement for `|x - p|^2`: agrees with it up to
/// `O(|x - p|^4)` near `p` and is periodic in every real direction.
pub fn periodic_distance_sq(grid: &TorusGrid, x: &[f64], p: &[f64]) -> f64 {
    grid.periods()
        .iter()
        .zip(x.iter().zip(p))
        .map(|(&per, (&xa, &pa))| {
            let s = (PI * (xa - pa) / per).sin() * per / PI;
            s * s
        })
        .sum()
}

impl KltDensitySpec {
    pub fn new(
        grid: &TorusGrid,
        points: Vec<Vec<f64>>,
        exponents: Vec<f64>,
        delta: f64,
    ) -> Result<Self> {
        let spec = Self {
            grid: grid.clone(),
            points,
            exponents,
            smooth_factor: None,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_smooth_factor(mut self, log_factor: ScalarField) -> Result<Self> {
        log_factor.check_grid(&self.grid)?;
        self.smooth_factor = Some(log_factor);
        Ok(self)
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.exponents.len() {
            return Err(Error::KltViolation(format!(
                "{} points but {} exponents",
                self.points.len(),
                self.exponents.len()
            )));
        }
        let d = self.grid.real_dim();
        if let Some(p) = self.points.iter().find(|p| p.len() != d) {
            return Err(Error::KltViolation(format!(
                "singular point {p:?} needs {d} real coordinates"
            )));
        }
        if let Some(a) = self
            .exponents
            .iter()
            .find(|a| !(**a > -1.0) || !a.is_finite())
        {
            return Err(Error::KltViolation(format!("exponent {a} is not > -1")));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::KltViolation(format!(
                "mollification {} < 0",
                self.delta
            )));
        }
        Ok(())
    }

    /// `(|z - p|^2)^{a p}` is locally integrable in complex dimension `n`
    /// iff `a p > -n`; fails with a klt violation otherwise.
    pub fn check_lp(&self, p_exponent: f64) -> Result<()> {
        if !(p_exponent > 1.0) {
            return Err(Error::Infeasible(format!(
                "p_exponent must exceed 1, got {p_exponent}"
            )));
        }
        let n = self.grid.n() as f64;
        for (pt, a) in self.points.iter().zip(&self.exponents) {
            if a * p_exponent <= -n {
                return Err(Error::KltViolation(format!(
                    "exponent {a} at {pt:?} is not in L^{p_exponent}: need a p > -{n}"
                )));
            }
        }
        Ok(())
    }

    /// `log f_delta` sampled on the grid. Fails if a point sits on a node
    /// with `delta = 0`.
    pub fn log_density(&self) -> Result<ScalarField> {
        self.validate()?;
        let d = self.grid.real_dim();
        let d2 = self.delta * self.delta;
        let mut values = match &self.smooth_factor {
            Some(s) => s.values().to_vec(),
            None => vec![0.0; self.grid.len()],
        };
        for (pt, &a) in self.points.iter().zip(&self.exponents) {
            if a == 0.0 {
                continue;
            }
            for (i, v) in values.iter_mut().enumerate() {
                let rho = periodic_distance_sq(&self.grid, &self.grid.coords(i)[..d], pt);
                *v += a * (rho + d2).ln();
            }
        }
        ScalarField::new(&self.grid, values).map_err(|_| {
            Error::KltViolation(
                "density is singular at a grid node; offset the points or mollify".into(),
            )
        })
    }
}

/// `log ||e^f||_p` for a log-density `f`, by plain grid sums.
pub fn log_lp_norm(log_f: &ScalarField, p: f64) -> f64 {
    let grid = log_f.grid();
    let max = log_f.max();
    let s: f64 = log_f.values().iter().map(|v| (p * (v - max)).exp()).sum();
    max + (s * grid.cell_volume()).ln() / p
}

/// Spectral tail of `phi` times a window that vanishes to high order within
/// `0.75 r` of every point and is 1 (up to `1e-4`) beyond distance `r`.
pub fn far_field_tail(phi: &ScalarField, points: &[Vec<f64>], r: f64) -> f64 {
    let grid = phi.grid();
    let d = grid.real_dim();
    let r0 = 0.75 * r;
    let scale = r0 * r0;
    let values = phi
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = &grid.coords(i)[..d];
            let w: f64 = points
                .iter()
                .map(|p| 1.0 - (-(periodic_distance_sq(grid, x, p) / scale).powi(4)).exp())
                .product();
            w * v
        })
        .collect();
    ScalarField::new(grid, values).map_or(f64::NAN, |f| f.spectral_tail())
}
