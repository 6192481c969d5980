//! The Monge-Ampere density, its linearization, trace quantities, total
//! mass, the mixed AM-GM slack and the Gauduchon conformal factor.

use crate::error::{Error, Result};
use crate::geometry::{
    ddc_mats, ddc_top_coefficient, flat_shifted_solve, HermMat, HermitianField, ScalarField,
};
use crate::krylov::gmres;

/// Pointwise `(omega + dd^c phi)^n / omega^n`.
#[derive(Clone, Debug)]
pub struct DensityRatio {
    pub values: ScalarField,
    /// Smallest eigenvalue of `omega + dd^c phi` over the grid.
    pub positivity_margin: f64,
}

/// `Tr_omega(omega~)`, `Tr_omega~(omega)` and `sup(Tr_omega(omega~) - n)`.
#[derive(Clone, Debug)]
pub struct TraceDiagnostics {
    pub tr_omega_tilde: ScalarField,
    pub tr_tilde_omega: ScalarField,
    pub max_laplacian: f64,
}

/// Margin below which `omega + dd^c phi` is treated as singular.
pub const SINGULAR_MARGIN: f64 = 1e-12;

/// `omega + dd^c phi` as a field.
pub fn omega_phi(omega: &HermitianField, phi: &ScalarField) -> Result<HermitianField> {
    phi.check_grid(omega.grid())?;
    let h = ddc_mats(omega.grid(), phi.values());
    Ok(HermitianField::from_mats_unchecked(
        omega.grid(),
        omega.mats().iter().zip(&h).map(|(g, h)| g.add(h)).collect(),
    ))
}

pub fn ma_density(omega: &HermitianField, phi: &ScalarField) -> Result<DensityRatio> {
    let tilde = omega_phi(omega, phi)?;
    let values = tilde
        .mats()
        .iter()
        .zip(omega.mats())
        .map(|(t, g)| t.det() / g.det())
        .collect();
    Ok(DensityRatio {
        values: ScalarField::from_vec_unchecked(omega.grid(), values),
        positivity_margin: tilde.min_eig(),
    })
}

/// Laplacian of `chi` with respect to `omega + dd^c phi`:
/// `Tr((g + H phi)^{-1} H chi)`, the derivative of `log ma_density` at `phi`
/// in direction `chi`.
pub fn linearized_ma(
    omega: &HermitianField,
    phi: &ScalarField,
    chi: &ScalarField,
) -> Result<ScalarField> {
    chi.check_grid(omega.grid())?;
    let tilde = omega_phi(omega, phi)?;
    let margin = tilde.min_eig();
    if margin <= SINGULAR_MARGIN {
        return Err(Error::SingularMatrix { margin });
    }
    let h = ddc_mats(omega.grid(), chi.values());
    let values = tilde
        .mats()
        .iter()
        .zip(&h)
        .map(|(t, hc)| t.inverse().trace_product(hc))
        .collect();
    Ok(ScalarField::from_vec_unchecked(omega.grid(), values))
}

/// `int_X (omega + dd^c phi)^n`, by the same quadrature as
/// [`crate::geometry::integrate`].
pub fn mass(omega: &HermitianField, phi: &ScalarField) -> Result<f64> {
    let tilde = omega_phi(omega, phi)?;
    Ok(tilde.mats().iter().map(HermMat::det).sum::<f64>() * omega.grid().cell_volume())
}

pub fn trace_diagnostics(
    omega: &HermitianField,
    tilde: &HermitianField,
) -> Result<TraceDiagnostics> {
    tilde.check_grid(omega.grid())?;
    let grid = omega.grid();
    let n = grid.n() as f64;
    let mut tr_w = Vec::with_capacity(grid.len());
    let mut tr_t = Vec::with_capacity(grid.len());
    for (g, t) in omega.mats().iter().zip(tilde.mats()) {
        tr_w.push(g.inverse().trace_product(t));
        tr_t.push(t.inverse().trace_product(g));
    }
    let max_laplacian = tr_w.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v - n));
    Ok(TraceDiagnostics {
        tr_omega_tilde: ScalarField::from_vec_unchecked(grid, tr_w),
        tr_tilde_omega: ScalarField::from_vec_unchecked(grid, tr_t),
        max_laplacian,
    })
}

/// Minimum over the grid of `Tr_{omega_g}(omega~) - n (omega~^n / omega_g^n)^{1/n}`.
/// Non-negative by the AM-GM inequality for positive Hermitian matrices.
pub fn mixed_amgm_defect(tilde: &HermitianField, omega_g: &HermitianField) -> Result<f64> {
    tilde.check_grid(omega_g.grid())?;
    let n = tilde.n() as f64;
    Ok(tilde
        .mats()
        .iter()
        .zip(omega_g.mats())
        .map(|(t, g)| {
            let tr = g.inverse().trace_product(t);
            tr - n * (t.det() / g.det()).powf(1.0 / n)
        })
        .fold(f64::INFINITY, f64::min))
}

/// Outcome of [`gauduchon_factor_with_stats`].
#[derive(Clone, Debug)]
pub struct GauduchonFactor {
    pub h: ScalarField,
    /// Sup-norm of the scalar coefficient of `dd^c (h omega)`.
    pub residual: f64,
    pub krylov_iterations: usize,
}

/// Conformal factor `h > 0`, mean 1, with `dd^c((h omega)^{n-1}) = 0`.
pub fn gauduchon_factor(omega: &HermitianField) -> Result<ScalarField> {
    gauduchon_factor_with_stats(omega).map(|g| g.h)
}

/// The residual target for the Gauduchon kernel solve.
pub const GAUDUCHON_TOL: f64 = 1e-9;

pub fn gauduchon_factor_with_stats(omega: &HermitianField) -> Result<GauduchonFactor> {
    let grid = omega.grid();
    if grid.n() == 1 {
        return Ok(GauduchonFactor {
            h: ScalarField::constant(grid, 1.0),
            residual: 0.0,
            krylov_iterations: 0,
        });
    }
    let margin = omega.min_eig();
    if margin <= 0.0 {
        return Err(Error::Positivity(format!(
            "Gauduchon factor needs a positive metric (min eigenvalue {margin:e})"
        )));
    }

    // L(h) = coefficient of dd^c(h omega) is linear in h; its range is
    // mean-zero and its kernel is spanned by the Gauduchon factor. Writing
    // h = 1 + v with mean(v) = 0 turns the kernel problem into L v = -L(1)
    // on mean-zero functions.
    let apply_l = |v: &[f64], out: &mut [f64]| {
        let hv = HermitianField::from_mats_unchecked(
            grid,
            omega
                .mats()
                .iter()
                .zip(v)
                .map(|(m, &s)| m.scale(s))
                .collect(),
        );
        out.copy_from_slice(&ddc_top_coefficient(&hv));
    };
    let kappa = omega.mats().iter().map(|m| m.trace()).sum::<f64>() / (2.0 * grid.len() as f64);
    let precond = |r: &[f64], out: &mut [f64]| {
        out.copy_from_slice(&flat_shifted_solve(grid, 0.5 * kappa, 0.0, r));
    };
    let rhs: Vec<f64> = ddc_top_coefficient(omega).iter().map(|v| -v).collect();
    let mut v = vec![0.0; grid.len()];
    let stats = gmres(apply_l, precond, &rhs, &mut v, 1e-14, 60, 3000);

    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mut h: Vec<f64> = v.iter().map(|x| 1.0 + x - mean).collect();
    let hmean = h.iter().sum::<f64>() / h.len() as f64;
    h.iter_mut().for_each(|x| *x /= hmean);
    let h = ScalarField::from_vec_unchecked(grid, h);
    let residual = ddc_top_coefficient(&omega.conformal(&h)?)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if residual > GAUDUCHON_TOL {
        return Err(Error::IterationLimit {
            what: "Gauduchon kernel solve",
            limit: 3000,
            residual,
        });
    }
    if h.min() <= 0.0 {
        return Err(Error::Positivity(format!(
            "Gauduchon factor lost positivity (min {})",
            h.min()
        )));
    }
    Ok(GauduchonFactor {
        h,
        residual,
        krylov_iterations: stats.iterations,
    })
}
