use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::calculus::ddc_top_coefficient;
use super::field::{HermMat, HermitianField, ScalarField};
use super::grid::TorusGrid;
use crate::error::{Error, Result};

/// Concrete reference forms on the model tori.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    /// `omega = sum i dz_j ^ dzbar_j`.
    Flat,
    /// `omega_eps = i (1 + eps cos 2 pi x_2) dz_1 ^ dzbar_1 + i dz_2 ^ dzbar_2` on a
    /// complex surface; `dd^c omega_eps != 0` for `eps > 0`.
    HermitianNonkahler { epsilon: f64 },
    /// `theta = (1 - amplitude cos 2 pi x) i dz ^ dzbar` on a curve. Only
    /// `amplitude = 1` is accepted: the form is then semipositive with a
    /// single zero at `x = 0`.
    Degenerate {
        #[serde(default = "unit_amplitude")]
        amplitude: f64,
    },
}

fn unit_amplitude() -> f64 {
    1.0
}

impl MetricSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            MetricSpec::Flat => Ok(()),
            MetricSpec::HermitianNonkahler { epsilon } => {
                if n != 2 {
                    return Err(Error::UnsupportedSpec(
                        "hermitian_nonkahler metric needs complex dimension 2".into(),
                    ));
                }
                if !(0.0..1.0).contains(&epsilon) {
                    return Err(Error::Positivity(format!(
                        "hermitian_nonkahler needs 0 <= epsilon < 1, got {epsilon}"
                    )));
                }
                Ok(())
            }
            MetricSpec::Degenerate { amplitude } => {
                if n != 1 {
                    return Err(Error::UnsupportedSpec(
                        "degenerate reference form is defined on curves only".into(),
                    ));
                }
                if (amplitude - 1.0).abs() > 1e-10 {
                    return Err(Error::UnsupportedSpec(format!(
                        "degenerate amplitude must be 1 (single zero eigenvalue), got {amplitude}"
                    )));
                }
                Ok(())
            }
        }
    }
}

pub fn build_metric(grid: &TorusGrid, spec: &MetricSpec) -> Result<HermitianField> {
    spec.validate(grid.n())?;
    match *spec {
        MetricSpec::Flat => Ok(HermitianField::identity(grid)),
        MetricSpec::HermitianNonkahler { epsilon } => {
            let p = grid.periods()[2];
            let mats = (0..grid.len())
                .map(|i| {
                    let x2 = grid.coords(i)[2];
                    HermMat::diag(2, 1.0 + epsilon * (2.0 * PI * x2 / p).cos(), 1.0)
                })
                .collect();
            HermitianField::from_mats(grid, mats)
        }
        MetricSpec::Degenerate { amplitude } => {
            let p = grid.periods()[0];
            let mats = (0..grid.len())
                .map(|i| {
                    let x = grid.coords(i)[0];
                    HermMat::scalar(1.0 - amplitude * (2.0 * PI * x / p).cos())
                })
                .collect();
            HermitianField::from_mats(grid, mats)
        }
    }
}

/// Potential `chi` with `theta = omega + dd^c chi` for the degenerate form,
/// i.e. `chi = P^2 cos(2 pi x / P) / (2 pi^2)`; `rho = -chi` makes
/// `theta + dd^c rho = omega`.
pub fn degenerate_potential(grid: &TorusGrid) -> Result<ScalarField> {
    if grid.n() != 1 {
        return Err(Error::UnsupportedSpec(
            "degenerate reference form is defined on curves only".into(),
        ));
    }
    let p = grid.periods()[0];
    ScalarField::from_fn(grid, |x| {
        p * p * (2.0 * PI * x[0] / p).cos() / (2.0 * PI * PI)
    })
}

/// Sup-norm of the scalar coefficient of `dd^c omega` (against the flat
/// `omega_0^n`). Zero exactly when the Guan-Li condition holds on the grid.
///
/// On a curve `dd^c omega` has degree 4 > 2 and vanishes; on a surface
/// `dd^c(omega^2)` has degree 6 > 4 and vanishes, so only `dd^c omega` is
/// measured there.
pub fn closedness_defect(omega: &HermitianField) -> f64 {
    ddc_top_coefficient(omega)
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ddc, min_eigenvalue_field};

    #[test]
    fn flat_is_identity_and_positive() {
        let g = TorusGrid::new(2, 8).unwrap();
        let w = build_metric(&g, &MetricSpec::Flat).unwrap();
        assert!(w.mats().iter().all(|m| *m == HermMat::identity(2)));
        assert_eq!(w.positivity(), crate::geometry::Positivity::Positive);
        assert!(closedness_defect(&w) < 1e-12);
    }

    #[test]
    fn degenerate_min_eig_at_origin() {
        let g = TorusGrid::new(1, 64).unwrap();
        let theta = build_metric(&g, &MetricSpec::Degenerate { amplitude: 1.0 }).unwrap();
        let m = min_eigenvalue_field(&theta);
        assert!(m.min().abs() < 1e-10);
        assert_eq!(m.values()[0], 0.0);
        assert!(closedness_defect(&theta) < 1e-12);
        // theta = omega + dd^c chi
        let chi = degenerate_potential(&g).unwrap();
        let rebuilt = ddc(&chi).unwrap().add_identity(1.0);
        assert!(rebuilt.sup_distance(&theta).unwrap() < 1e-12);
    }

    #[test]
    fn nonkahler_defect() {
        let g = TorusGrid::new(2, 16).unwrap();
        let w = build_metric(&g, &MetricSpec::HermitianNonkahler { epsilon: 0.1 }).unwrap();
        let d = closedness_defect(&w);
        assert!((d - PI * PI * 0.1).abs() < 1e-10, "{d}");
        let w0 = build_metric(&g, &MetricSpec::HermitianNonkahler { epsilon: 0.0 }).unwrap();
        assert!(closedness_defect(&w0) < 1e-12);
    }

    #[test]
    fn varying_in_x1_is_closed() {
        // a(x_1) dz_1 ^ dzbar_1 satisfies dd^c omega = 0.
        let g = TorusGrid::new(2, 16).unwrap();
        let mats = (0..g.len())
            .map(|i| HermMat::diag(2, 1.0 + 0.1 * (2.0 * PI * g.coords(i)[0]).cos(), 1.0))
            .collect();
        let w = HermitianField::from_mats(&g, mats).unwrap();
        assert!(closedness_defect(&w) < 1e-12);
    }

    #[test]
    fn exact_perturbation_is_closed() {
        let g = TorusGrid::new(2, 16).unwrap();
        let u = ScalarField::from_fn(&g, |x| {
            0.01 * (2.0 * PI * (x[0] + 2.0 * x[3])).sin() + 0.02 * (2.0 * PI * (x[1] - x[2])).cos()
        })
        .unwrap();
        // fourth derivatives of size ~60 leave ~1e-11 of round-off
        let w = ddc(&u).unwrap().add_identity(1.0);
        let d = closedness_defect(&w);
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn spec_errors() {
        let g1 = TorusGrid::new(1, 8).unwrap();
        let g2 = TorusGrid::new(2, 8).unwrap();
        assert!(matches!(
            build_metric(&g1, &MetricSpec::HermitianNonkahler { epsilon: 0.1 }),
            Err(Error::UnsupportedSpec(_))
        ));
        assert!(matches!(
            build_metric(&g2, &MetricSpec::HermitianNonkahler { epsilon: 1.0 }),
            Err(Error::Positivity(_))
        ));
        assert!(build_metric(&g2, &MetricSpec::Degenerate { amplitude: 1.0 }).is_err());
    }
}
