use num_complex::Complex64;

use super::field::{HermMat, HermitianField, ScalarField};
use super::grid::TorusGrid;
use crate::error::{Error, Result};

/// Complex Hessian `dd^c phi`, with `(dd^c phi)_{j kbar} = 2 d^2 phi / dz_j dzbar_k`,
/// computed spectrally. Exact on trigonometric polynomials below Nyquist.
pub fn ddc(phi: &ScalarField) -> Result<HermitianField> {
    if let Some(v) = phi.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidField(format!("non-finite value {v}")));
    }
    let grid = phi.grid();
    Ok(HermitianField::from_mats_unchecked(
        grid,
        ddc_mats(grid, phi.values()),
    ))
}

pub(crate) fn ddc_mats(grid: &TorusGrid, values: &[f64]) -> Vec<HermMat> {
    let spectral = grid.spectral();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let hat = spectral.forward_real(&centered);
    if grid.n() == 1 {
        let mut d: Vec<Complex64> = hat
            .iter()
            .zip(spectral.symbol(0, 0))
            .map(|(h, s)| h * s)
            .collect();
        spectral.inverse(&mut d);
        d.iter().map(|c| HermMat::scalar(c.re)).collect()
    } else {
        // Both diagonal entries are real fields: pack them as re/im of one
        // inverse transform.
        let i = Complex64::new(0.0, 1.0);
        let mut diag: Vec<Complex64> = hat
            .iter()
            .zip(spectral.symbol(0, 0).iter().zip(spectral.symbol(1, 1)))
            .map(|(h, (s11, s22))| h * (s11 + i * s22))
            .collect();
        let mut off: Vec<Complex64> = hat
            .iter()
            .zip(spectral.symbol(0, 1))
            .map(|(h, s)| h * s)
            .collect();
        spectral.inverse(&mut diag);
        spectral.inverse(&mut off);
        diag.iter()
            .zip(&off)
            .map(|(d, o)| HermMat::two(d.re, d.im, *o))
            .collect()
    }
}

/// `Tr_I dd^c u = Delta u / 2` applied spectrally.
#[cfg(test)]
pub(crate) fn flat_trace(grid: &TorusGrid, values: &[f64]) -> Vec<f64> {
    let spectral = grid.spectral();
    let mut hat = spectral.forward_real(values);
    for (h, s) in hat.iter_mut().zip(spectral.trace_symbol()) {
        *h *= s;
    }
    spectral.inverse(&mut hat);
    hat.iter().map(|c| c.re).collect()
}

/// Solves `(kappa * Tr_I dd^c - shift) u = r` spectrally. For `shift == 0`
/// the mean mode is dropped (pseudo-inverse on mean-zero functions).
pub(crate) fn flat_shifted_solve(grid: &TorusGrid, kappa: f64, shift: f64, r: &[f64]) -> Vec<f64> {
    let spectral = grid.spectral();
    let mut hat = spectral.forward_real(r);
    for (h, s) in hat.iter_mut().zip(spectral.trace_symbol()) {
        let sym = kappa * s - shift;
        if sym.abs() < 1e-300 {
            *h = Complex64::new(0.0, 0.0);
        } else {
            *h /= sym;
        }
    }
    spectral.inverse(&mut hat);
    hat.iter().map(|c| c.re).collect()
}

/// Scalar coefficient of the top-degree form `dd^c beta` for a (1,1)-form
/// `beta` on a complex surface, measured against the flat `omega_0^2`:
///
/// `d1 dbar1 b22 + d2 dbar2 b11 - d1 dbar2 b21 - d2 dbar1 b12`.
///
/// Identically zero for `n = 1` (no (2,2)-forms on a curve).
pub(crate) fn ddc_top_coefficient(beta: &HermitianField) -> Vec<f64> {
    let grid = beta.grid();
    if grid.n() == 1 {
        return vec![0.0; grid.len()];
    }
    let spectral = grid.spectral();
    let mats = beta.mats();
    let mut b11: Vec<Complex64> = mats.iter().map(|m| Complex64::new(m.a11, 0.0)).collect();
    let mut b22: Vec<Complex64> = mats.iter().map(|m| Complex64::new(m.a22, 0.0)).collect();
    let mut b12: Vec<Complex64> = mats.iter().map(|m| m.a12).collect();
    let mut b21: Vec<Complex64> = mats.iter().map(|m| m.a12.conj()).collect();
    for b in [&mut b11, &mut b22, &mut b12, &mut b21] {
        spectral.forward(b);
    }
    let (s11, s22, s12, s21) = (
        spectral.symbol(0, 0),
        spectral.symbol(1, 1),
        spectral.symbol(0, 1),
        spectral.symbol(1, 0),
    );
    let mut out: Vec<Complex64> = (0..grid.len())
        .map(|k| 0.5 * (s11[k] * b22[k] + s22[k] * b11[k] - s12[k] * b21[k] - s21[k] * b12[k]))
        .collect();
    spectral.inverse(&mut out);
    out.iter().map(|c| c.re).collect()
}

/// Second-order central-difference counterpart of [`ddc`].
///
/// Independent of the spectral path; used to measure convergence order and
/// as a cross-check.
pub fn fd_ddc(phi: &ScalarField) -> HermitianField {
    let grid = phi.grid();
    let n = grid.n();
    let d = grid.real_dim();
    let res = grid.res();
    let v = phi.values();
    let h: Vec<f64> = (0..d).map(|a| grid.spacing(a)).collect();

    let at = |m: &[usize; 4], shifts: &[(usize, isize)]| -> f64 {
        let mut mm = *m;
        for &(axis, s) in shifts {
            mm[axis] = ((mm[axis] as isize + s).rem_euclid(res as isize)) as usize;
        }
        v[grid.flat_index(&mm[..d])]
    };
    let second = |m: &[usize; 4], a: usize, b: usize| -> f64 {
        if a == b {
            (at(m, &[(a, 1)]) - 2.0 * at(m, &[]) + at(m, &[(a, -1)])) / (h[a] * h[a])
        } else {
            (at(m, &[(a, 1), (b, 1)]) - at(m, &[(a, 1), (b, -1)]) - at(m, &[(a, -1), (b, 1)])
                + at(m, &[(a, -1), (b, -1)]))
                / (4.0 * h[a] * h[b])
        }
    };

    let mats = (0..grid.len())
        .map(|idx| {
            let m = grid.multi_index(idx);
            let entry = |j: usize, k: usize| -> Complex64 {
                let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
                let re = second(&m, xj, xk) + second(&m, yj, yk);
                let im = if j == k {
                    0.0
                } else {
                    second(&m, xj, yk) - second(&m, yj, xk)
                };
                0.5 * Complex64::new(re, im) * grid.ddc_sign()
            };
            if n == 1 {
                HermMat::scalar(entry(0, 0).re)
            } else {
                HermMat::two(entry(0, 0).re, entry(1, 1).re, entry(0, 1))
            }
        })
        .collect();
    HermitianField::from_mats_unchecked(grid, mats)
}

/// Periodic quadrature `cell * sum s * det(vol)`.
pub fn integrate(s: &ScalarField, vol: &HermitianField) -> Result<f64> {
    s.check_grid(vol.grid())?;
    let sum: f64 = s
        .values()
        .iter()
        .zip(vol.mats())
        .map(|(v, m)| v * m.det())
        .sum();
    Ok(sum * s.grid().cell_volume())
}

/// Pointwise smallest eigenvalue.
pub fn min_eigenvalue_field(a: &HermitianField) -> ScalarField {
    ScalarField::from_vec_unchecked(a.grid(), a.mats().iter().map(HermMat::min_eig).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, res: usize) -> TorusGrid {
        TorusGrid::new(n, res).unwrap()
    }

    #[test]
    fn ddc_of_constant_vanishes() {
        let g = grid(2, 8);
        let h = ddc(&ScalarField::constant(&g, 7.0)).unwrap();
        assert!(
            h.sup_distance(&HermitianField::from_mats_unchecked(
                &g,
                vec![HermMat::zero(2); g.len()]
            ))
            .unwrap()
                < 1e-13
        );
    }

    #[test]
    fn ddc_cos_n1() {
        let g = grid(1, 32);
        let phi = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let h = ddc(&phi).unwrap();
        assert!((h.at(0).a11 + 2.0 * PI * PI).abs() < 1e-12);
        // central differences at h = 1/256 agree to O(h^2)
        let fine = grid(1, 256);
        let phi = ScalarField::from_fn(&fine, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let fd = fd_ddc(&phi);
        assert!((fd.at(0).a11 + 2.0 * PI * PI).abs() < 2e-3);
    }

    #[test]
    fn ddc_off_diagonal_n2() {
        let g = grid(2, 8);
        let phi = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[2]).sin())
            .unwrap();
        let h = ddc(&phi).unwrap();
        let a12 = h.at(0).a12;
        assert!((a12.re - 2.0 * PI * PI).abs() < 1e-11, "{a12}");
        assert!(a12.im.abs() < 1e-11);
        assert!(h.at(0).a11.abs() < 1e-11);
    }

    #[test]
    fn ddc_imaginary_part_sign() {
        // (dd^c u)_{1 2bar} = (1/2)[u_x1x2 + u_y1y2 + i(u_x1y2 - u_y1x2)]
        let g = grid(2, 8);
        let phi = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[3]).sin())
            .unwrap();
        let h = ddc(&phi).unwrap();
        let a12 = h.at(0).a12;
        assert!(a12.re.abs() < 1e-11);
        assert!((a12.im - 2.0 * PI * PI).abs() < 1e-11, "{a12}");
    }

    #[test]
    fn flat_solve_inverts_trace() {
        let g = grid(1, 16);
        let u = ScalarField::from_fn(&g, |x| {
            (2.0 * PI * x[0]).sin() + 0.3 * (4.0 * PI * x[1]).cos()
        })
        .unwrap();
        let t = flat_trace(&g, u.values());
        let back = flat_shifted_solve(&g, 1.0, 0.0, &t);
        for (a, b) in back.iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn integrate_mismatched_grids() {
        let s = ScalarField::zeros(&grid(1, 8));
        let vol = HermitianField::identity(&grid(1, 16));
        assert!(matches!(integrate(&s, &vol), Err(Error::GridMismatch)));
    }

    #[test]
    fn integrate_basic() {
        let g = grid(1, 16);
        let vol = HermitianField::identity(&g);
        assert!((integrate(&ScalarField::constant(&g, 1.0), &vol).unwrap() - 1.0).abs() < 1e-15);
        let c = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        assert!(integrate(&c, &vol).unwrap().abs() < 1e-14);
    }

    #[test]
    fn min_eig_diag() {
        let g = grid(2, 8);
        let a = HermitianField::constant(&g, HermMat::diag(2, 2.0, 0.5)).unwrap();
        let m = min_eigenvalue_field(&a);
        assert!(m.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
        let id = min_eigenvalue_field(&HermitianField::identity(&g));
        assert!(id.values().iter().all(|v| *v == 1.0));
    }
}
