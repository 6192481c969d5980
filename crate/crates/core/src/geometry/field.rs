use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use super::grid::TorusGrid;
use crate::error::{Error, Result};

/// Tolerance on `|A - A*|` accepted when a Hermitian field is built from raw
/// entries.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Real grid function.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub(crate) fn from_vec_unchecked(grid: &TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self::from_vec_unchecked(grid, vec![c; grid.len()])
    }

    /// Samples `f` at every node; `f` receives the `2n` real coordinates.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = grid.real_dim();
        let values = (0..grid.len()).map(|i| f(&grid.coords(i)[..d])).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Oscillation `max - min`.
    pub fn osc(&self) -> f64 {
        self.max() - self.min()
    }

    /// Grid average (equals the normalized integral against flat volume).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self::from_vec_unchecked(&self.grid, self.values.iter().map(|v| v + c).collect())
    }

    /// Sup-distance between two fields on the same grid.
    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        self.check_grid(other.grid())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub(crate) fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        if self.grid.same_as(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Fraction of (non-mean) spectral energy carried by modes whose
    /// max-norm index exceeds `res / 3`, i.e. the top third of resolved
    /// frequencies.
    pub fn spectral_tail(&self) -> f64 {
        let spectral = self.grid.spectral();
        let hat = spectral.forward_real(&self.values);
        let cutoff = self.grid.res() / 3;
        let mut total = 0.0;
        let mut tail = 0.0;
        for (c, &m) in hat.iter().zip(spectral.mode_norm()) {
            if m == 0 {
                continue;
            }
            let e = c.norm_sqr();
            total += e;
            if m > cutoff {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

impl Add<&ScalarField> for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        assert!(self.grid.same_as(&rhs.grid), "grid mismatch");
        let v = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(a, b)| a + b)
            .collect();
        ScalarField::from_vec_unchecked(&self.grid, v)
    }
}

impl Sub<&ScalarField> for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        assert!(self.grid.same_as(&rhs.grid), "grid mismatch");
        let v = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(a, b)| a - b)
            .collect();
        ScalarField::from_vec_unchecked(&self.grid, v)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        ScalarField::from_vec_unchecked(&self.grid, self.values.iter().map(|v| v * rhs).collect())
    }
}

/// Hermitian `n x n` coefficient matrix (n <= 2) of a real (1,1)-form
/// `sum i A_{j kbar} dz_j ^ dzbar_k` at one point.
///
/// For `n = 1` only `a11` is meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermMat {
    pub n: usize,
    pub a11: f64,
    pub a22: f64,
    pub a12: Complex64,
}

impl HermMat {
    pub fn scalar(a: f64) -> Self {
        Self {
            n: 1,
            a11: a,
            a22: 0.0,
            a12: Complex64::new(0.0, 0.0),
        }
    }

    pub fn two(a11: f64, a22: f64, a12: Complex64) -> Self {
        Self {
            n: 2,
            a11,
            a22,
            a12,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(n, 1.0, 1.0)
    }

    pub fn zero(n: usize) -> Self {
        Self::diag(n, 0.0, 0.0)
    }

    pub fn diag(n: usize, a11: f64, a22: f64) -> Self {
        if n == 1 {
            Self::scalar(a11)
        } else {
            Self::two(a11, a22, Complex64::new(0.0, 0.0))
        }
    }

    /// Entry `(j, k)`.
    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        match (j, k) {
            (0, 0) => Complex64::new(self.a11, 0.0),
            (1, 1) => Complex64::new(self.a22, 0.0),
            (0, 1) => self.a12,
            (1, 0) => self.a12.conj(),
            _ => panic!("entry ({j}, {k}) out of range"),
        }
    }

    pub fn trace(&self) -> f64 {
        if self.n == 1 {
            self.a11
        } else {
            self.a11 + self.a22
        }
    }

    pub fn det(&self) -> f64 {
        if self.n == 1 {
            self.a11
        } else {
            self.a11 * self.a22 - self.a12.norm_sqr()
        }
    }

    /// Smallest eigenvalue, closed form.
    pub fn min_eig(&self) -> f64 {
        if self.n == 1 {
            self.a11
        } else {
            let mean = 0.5 * (self.a11 + self.a22);
            let half = 0.5 * (self.a11 - self.a22);
            mean - (half * half + self.a12.norm_sqr()).sqrt()
        }
    }

    /// Adjugate `det(A) A^{-1}`, defined even for singular `A`.
    pub fn adjugate(&self) -> Self {
        if self.n == 1 {
            Self::scalar(1.0)
        } else {
            Self::two(self.a22, self.a11, -self.a12)
        }
    }

    pub fn inverse(&self) -> Self {
        let det = self.det();
        self.adjugate().scale(1.0 / det)
    }

    /// `Tr(self * other)`, real for Hermitian arguments.
    pub fn trace_product(&self, other: &HermMat) -> f64 {
        if self.n == 1 {
            self.a11 * other.a11
        } else {
            self.a11 * other.a11 + self.a22 * other.a22 + 2.0 * (self.a12 * other.a12.conj()).re
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            a11: self.a11 * s,
            a22: self.a22 * s,
            a12: self.a12 * s,
        }
    }

    pub fn add(&self, other: &HermMat) -> Self {
        Self {
            n: self.n,
            a11: self.a11 + other.a11,
            a22: self.a22 + other.a22,
            a12: self.a12 + other.a12,
        }
    }

    pub fn add_scaled(&self, other: &HermMat, s: f64) -> Self {
        Self {
            n: self.n,
            a11: self.a11 + s * other.a11,
            a22: self.a22 + s * other.a22,
            a12: self.a12 + other.a12 * s,
        }
    }

    fn is_finite(&self) -> bool {
        self.a11.is_finite()
            && self.a22.is_finite()
            && self.a12.re.is_finite()
            && self.a12.im.is_finite()
    }
}

/// Positivity class of a Hermitian field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Positivity {
    Positive,
    Semipositive,
    Indefinite,
}

/// Semipositivity allows this much negative round-off.
pub const SEMIPOSITIVE_TOL: f64 = 1e-10;

/// Grid of Hermitian coefficient matrices.
#[derive(Clone, Debug)]
pub struct HermitianField {
    grid: TorusGrid,
    mats: Vec<HermMat>,
}

impl HermitianField {
    /// Builds a field from `n^2` complex entries per point (row-major per
    /// matrix), rejecting entries that are not Hermitian within
    /// [`HERMITIAN_TOL`].
    pub fn from_entries(grid: &TorusGrid, entries: &[Complex64]) -> Result<Self> {
        let n = grid.n();
        if entries.len() != grid.len() * n * n {
            return Err(Error::InvalidField(format!(
                "expected {} entries, got {}",
                grid.len() * n * n,
                entries.len()
            )));
        }
        let mut mats = Vec::with_capacity(grid.len());
        for (i, e) in entries.chunks_exact(n * n).enumerate() {
            if e.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::InvalidField(format!(
                    "non-finite entry at point {i}"
                )));
            }
            let mat = if n == 1 {
                if e[0].im.abs() > HERMITIAN_TOL {
                    return Err(Error::InvalidField(format!(
                        "non-Hermitian entry at point {i}"
                    )));
                }
                HermMat::scalar(e[0].re)
            } else {
                let defect = e[0]
                    .im
                    .abs()
                    .max(e[3].im.abs())
                    .max((e[1] - e[2].conj()).norm());
                if defect > HERMITIAN_TOL {
                    return Err(Error::InvalidField(format!(
                        "non-Hermitian entry at point {i} (defect {defect:e})"
                    )));
                }
                HermMat::two(e[0].re, e[3].re, 0.5 * (e[1] + e[2].conj()))
            };
            mats.push(mat);
        }
        Ok(Self {
            grid: grid.clone(),
            mats,
        })
    }

    pub fn from_mats(grid: &TorusGrid, mats: Vec<HermMat>) -> Result<Self> {
        if mats.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} matrices, got {}",
                grid.len(),
                mats.len()
            )));
        }
        if mats.iter().any(|m| m.n != grid.n()) {
            return Err(Error::InvalidField(
                "matrix size differs from grid dimension".into(),
            ));
        }
        if let Some(i) = mats.iter().position(|m| !m.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite entry at point {i}"
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            mats,
        })
    }

    pub(crate) fn from_mats_unchecked(grid: &TorusGrid, mats: Vec<HermMat>) -> Self {
        Self {
            grid: grid.clone(),
            mats,
        }
    }

    pub fn constant(grid: &TorusGrid, mat: HermMat) -> Result<Self> {
        Self::from_mats(grid, vec![mat; grid.len()])
    }

    pub fn identity(grid: &TorusGrid) -> Self {
        Self::from_mats_unchecked(grid, vec![HermMat::identity(grid.n()); grid.len()])
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn mats(&self) -> &[HermMat] {
        &self.mats
    }

    pub fn at(&self, idx: usize) -> &HermMat {
        &self.mats[idx]
    }

    /// Flattened `n^2` complex entries per point, row-major.
    pub fn entries(&self) -> Vec<Complex64> {
        let n = self.n();
        let mut out = Vec::with_capacity(self.mats.len() * n * n);
        for m in &self.mats {
            for j in 0..n {
                for k in 0..n {
                    out.push(m.entry(j, k));
                }
            }
        }
        out
    }

    pub fn add(&self, other: &HermitianField) -> Result<Self> {
        self.check_grid(other.grid())?;
        Ok(Self::from_mats_unchecked(
            &self.grid,
            self.mats
                .iter()
                .zip(&other.mats)
                .map(|(a, b)| a.add(b))
                .collect(),
        ))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_mats_unchecked(&self.grid, self.mats.iter().map(|m| m.scale(s)).collect())
    }

    /// `self + s * identity`.
    pub fn add_identity(&self, s: f64) -> Self {
        let id = HermMat::identity(self.n());
        Self::from_mats_unchecked(
            &self.grid,
            self.mats.iter().map(|m| m.add_scaled(&id, s)).collect(),
        )
    }

    /// Pointwise conformal rescaling `h * self`.
    pub fn conformal(&self, h: &ScalarField) -> Result<Self> {
        h.check_grid(&self.grid)?;
        Ok(Self::from_mats_unchecked(
            &self.grid,
            self.mats
                .iter()
                .zip(h.values())
                .map(|(m, &s)| m.scale(s))
                .collect(),
        ))
    }

    pub fn det_field(&self) -> Vec<f64> {
        self.mats.iter().map(HermMat::det).collect()
    }

    pub fn min_eig(&self) -> f64 {
        self.mats
            .iter()
            .map(HermMat::min_eig)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn positivity(&self) -> Positivity {
        let m = self.min_eig();
        if m > 0.0 {
            Positivity::Positive
        } else if m >= -SEMIPOSITIVE_TOL {
            Positivity::Semipositive
        } else {
            Positivity::Indefinite
        }
    }

    pub fn sup_distance(&self, other: &HermitianField) -> Result<f64> {
        self.check_grid(other.grid())?;
        Ok(self.mats.iter().zip(&other.mats).fold(0.0, |m, (a, b)| {
            m.max((a.a11 - b.a11).abs())
                .max((a.a22 - b.a22).abs())
                .max((a.a12 - b.a12).norm())
        }))
    }

    pub(crate) fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        if self.grid.same_as(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}
