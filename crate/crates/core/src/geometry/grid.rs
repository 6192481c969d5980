use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on the flat torus `C^n / (Z^n + i Z^n)` (scaled by
/// the per-axis periods).
///
/// Real axes are ordered `(x_1, y_1, x_2, y_2)` with `z_j = x_j + i y_j`;
/// values are stored row-major with `x_1` varying slowest. The grid owns the
/// FFT plans and the Fourier symbols of the complex Hessian, so cloning is
/// cheap (one `Arc`).
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<GridInner>,
}

struct GridInner {
    n: usize,
    res: usize,
    periods: Vec<f64>,
    spectral: Spectral,
}

impl TorusGrid {
    /// Grid with unit periods on every real axis.
    pub fn new(n: usize, res: usize) -> Result<Self> {
        Self::with_periods(n, res, &vec![1.0; 2 * n])
    }

    pub fn with_periods(n: usize, res: usize, periods: &[f64]) -> Result<Self> {
        Self::build(n, res, periods, 1.0)
    }

    /// Copy of this grid whose complex Hessian carries the given sign.
    ///
    /// Only meant for mutation testing of the check suites; every other
    /// caller should use the correctly signed grid.
    #[doc(hidden)]
    pub fn with_ddc_sign(&self, sign: f64) -> Result<Self> {
        Self::build(self.n(), self.res(), self.periods(), sign)
    }

    fn build(n: usize, res: usize, periods: &[f64], sign: f64) -> Result<Self> {
        if !(n == 1 || n == 2) {
            return Err(Error::InvalidGrid(format!(
                "complex dimension must be 1 or 2, got {n}"
            )));
        }
        if res < 8 || !res.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "resolution must be a power of two >= 8, got {res}"
            )));
        }
        if periods.len() != 2 * n {
            return Err(Error::InvalidGrid(format!(
                "expected {} periods, got {}",
                2 * n,
                periods.len()
            )));
        }
        if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "period must be positive, got {p}"
            )));
        }
        let spectral = Spectral::new(n, res, periods, sign);
        Ok(Self {
            inner: Arc::new(GridInner {
                n,
                res,
                periods: periods.to_vec(),
                spectral,
            }),
        })
    }

    /// Complex dimension.
    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn res(&self) -> usize {
        self.inner.res
    }

    pub fn real_dim(&self) -> usize {
        2 * self.inner.n
    }

    pub fn periods(&self) -> &[f64] {
        &self.inner.periods
    }

    /// Total number of grid points, `res^(2n)`.
    pub fn len(&self) -> usize {
        self.inner.spectral.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.inner.periods[axis] / self.inner.res as f64
    }

    /// Smallest spacing over all real axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.real_dim())
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Volume of one grid cell, the quadrature weight of every node.
    pub fn cell_volume(&self) -> f64 {
        (0..self.real_dim()).map(|a| self.spacing(a)).product()
    }

    /// Total volume `prod periods`.
    pub fn volume(&self) -> f64 {
        self.inner.periods.iter().product()
    }

    pub fn ddc_sign(&self) -> f64 {
        self.inner.spectral.sign
    }

    /// Integer grid coordinates of a flat index.
    pub fn multi_index(&self, idx: usize) -> [usize; 4] {
        let res = self.inner.res;
        let d = self.real_dim();
        let mut out = [0usize; 4];
        let mut rem = idx;
        for axis in (0..d).rev() {
            out[axis] = rem % res;
            rem /= res;
        }
        out
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        let res = self.inner.res;
        m.iter().fold(0, |acc, &i| acc * res + (i % res))
    }

    /// Physical coordinates of a node; only the first `2n` entries are used.
    pub fn coords(&self, idx: usize) -> [f64; 4] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 4];
        for (axis, xa) in x.iter_mut().enumerate().take(self.real_dim()) {
            *xa = m[axis] as f64 * self.spacing(axis);
        }
        x
    }

    pub(crate) fn spectral(&self) -> &Spectral {
        &self.inner.spectral
    }

    /// Grids agree in dimension, resolution, periods and derivative sign.
    pub fn same_as(&self, other: &TorusGrid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self == other
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n
            && self.inner.res == other.inner.res
            && self.inner.periods == other.inner.periods
            && self.inner.spectral.sign == other.inner.spectral.sign
    }
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.inner.n)
            .field("res", &self.inner.res)
            .field("periods", &self.inner.periods)
            .finish()
    }
}

/// FFT plans plus the Fourier symbols of `dd^c` on one grid.
///
/// The symbol of `(dd^c u)_{j k} = 2 d^2 u / dz_j dzbar_k` is
/// `-(1/2) conj(zeta_j) zeta_k` with `zeta_j = k_{x_j} + i k_{y_j}`. Diagonal
/// entries use the full squared wavenumber; off-diagonal entries drop the
/// Nyquist mode, whose first derivative is not representable.
pub(crate) struct Spectral {
    pub(crate) len: usize,
    res: usize,
    dims: usize,
    n: usize,
    sign: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `symbols[j * n + k]` for the `(j, k)` entry.
    symbols: Vec<Vec<Complex64>>,
    /// Symbol of the flat trace `Tr_I dd^c = Delta / 2`.
    trace: Vec<f64>,
    /// Max-norm of the integer mode index, used by spectral-tail monitors.
    mode_norm: Vec<usize>,
}

impl Spectral {
    fn new(n: usize, res: usize, periods: &[f64], sign: f64) -> Self {
        let dims = 2 * n;
        let len = res.pow(dims as u32);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(res);
        let inv = planner.plan_fft_inverse(res);

        let signed_mode = |m: usize| -> i64 {
            if m < res / 2 {
                m as i64
            } else {
                m as i64 - res as i64
            }
        };
        let k_full: Vec<Vec<f64>> = periods
            .iter()
            .map(|&p| {
                (0..res)
                    .map(|m| 2.0 * PI * signed_mode(m) as f64 / p)
                    .collect()
            })
            .collect();
        let k_odd: Vec<Vec<f64>> = k_full
            .iter()
            .map(|ks| {
                ks.iter()
                    .enumerate()
                    .map(|(m, &k)| if m == res / 2 { 0.0 } else { k })
                    .collect()
            })
            .collect();

        let mut symbols = vec![vec![Complex64::new(0.0, 0.0); len]; n * n];
        let mut trace = vec![0.0; len];
        let mut mode_norm = vec![0usize; len];
        let mut m = [0usize; 4];
        for idx in 0..len {
            let mut rem = idx;
            for axis in (0..dims).rev() {
                m[axis] = rem % res;
                rem /= res;
            }
            mode_norm[idx] = (0..dims)
                .map(|a| signed_mode(m[a]).unsigned_abs() as usize)
                .max()
                .unwrap_or(0);
            for j in 0..n {
                for k in 0..n {
                    let s = if j == k {
                        let kx = k_full[2 * j][m[2 * j]];
                        let ky = k_full[2 * j + 1][m[2 * j + 1]];
                        Complex64::new(-0.5 * (kx * kx + ky * ky), 0.0)
                    } else {
                        let zj =
                            Complex64::new(k_odd[2 * j][m[2 * j]], k_odd[2 * j + 1][m[2 * j + 1]]);
                        let zk =
                            Complex64::new(k_odd[2 * k][m[2 * k]], k_odd[2 * k + 1][m[2 * k + 1]]);
                        -0.5 * zj.conj() * zk
                    };
                    symbols[j * n + k][idx] = s * sign;
                }
                trace[idx] += symbols[j * n + j][idx].re;
            }
        }

        Self {
            len,
            res,
            dims,
            n,
            sign,
            fwd,
            inv,
            symbols,
            trace,
            mode_norm,
        }
    }

    pub(crate) fn symbol(&self, j: usize, k: usize) -> &[Complex64] {
        &self.symbols[j * self.n + k]
    }

    pub(crate) fn trace_symbol(&self) -> &[f64] {
        &self.trace
    }

    pub(crate) fn mode_norm(&self) -> &[usize] {
        &self.mode_norm
    }

    pub(crate) fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Normalized inverse transform.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len(), self.len);
        let fft = if inverse { &self.inv } else { &self.fwd };
        let res = self.res;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut lines = vec![Complex64::new(0.0, 0.0); self.len];
        for axis in 0..self.dims {
            let stride = res.pow((self.dims - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = stride * res;
            // Gather every line along `axis` contiguously, transform, scatter.
            let mut line = 0;
            for outer in (0..self.len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    let dst = &mut lines[line * res..(line + 1) * res];
                    for (t, d) in dst.iter_mut().enumerate() {
                        *d = data[base + t * stride];
                    }
                    line += 1;
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            line = 0;
            for outer in (0..self.len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    let src = &lines[line * res..(line + 1) * res];
                    for (t, s) in src.iter().enumerate() {
                        data[base + t * stride] = *s;
                    }
                    line += 1;
                }
            }
        }
    }
}
