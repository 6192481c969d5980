//! Periodic model geometry: grids on complex tori, spectral `dd^c`, metric
//! constructors and quadrature.

mod calculus;
mod field;
mod grid;
mod metric;

pub use calculus::{ddc, fd_ddc, integrate, min_eigenvalue_field};
pub(crate) use calculus::{ddc_mats, ddc_top_coefficient, flat_shifted_solve};
pub use field::{
    HermMat, HermitianField, Positivity, ScalarField, HERMITIAN_TOL, SEMIPOSITIVE_TOL,
};
pub use grid::TorusGrid;
pub use metric::{build_metric, closedness_defect, degenerate_potential, MetricSpec};
