//! Restarted, right-preconditioned GMRES for the matrix-free linearized
//! operators.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final `|b - A x| / |b|` (true residual, recomputed at each restart).
    pub rel_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from the contents of `x`.
///
/// `apply(v, out)` writes `A v`; `precond(v, out)` writes `M^{-1} v`.
pub fn gmres<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> KrylovStats
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]),
{
    let len = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovStats {
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }
    let m = restart.max(1);
    let mut r = vec![0.0; len];
    let mut w = vec![0.0; len];
    let mut z = vec![0.0; len];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut total = 0;

    loop {
        apply(x, &mut w);
        for i in 0..len {
            r[i] = b[i] - w[i];
        }
        let beta = norm(&r);
        let rel = beta / b_norm;
        if rel <= tol || total >= max_iter {
            return KrylovStats {
                iterations: total,
                rel_residual: rel,
                converged: rel <= tol,
            };
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;

        let mut k = 0;
        while k < m && total < max_iter {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            // Modified Gram-Schmidt.
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hess[i][k] = h;
                for (wj, vj) in w.iter_mut().zip(v) {
                    *wj -= h * vj;
                }
            }
            let h_next = norm(&w);
            hess[k + 1][k] = h_next;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            let breakdown = h_next <= 1e-14 * beta;
            if !breakdown {
                basis.push(w.iter().map(|v| v / h_next).collect());
            }
            if g[k].abs() / b_norm <= tol || breakdown {
                break;
            }
        }

        // Back-substitute the k x k triangular system, then update x.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hess[i][j] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 {
                s / hess[i][i]
            } else {
                0.0
            };
        }
        let mut update = vec![0.0; len];
        for (yi, v) in y.iter().zip(&basis) {
            for (u, vj) in update.iter_mut().zip(v) {
                *u += yi * vj;
            }
        }
        precond(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        // Tridiagonal convection-diffusion matrix.
        let n = 50;
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = 4.0 * v[i] - 1.5 * left - 0.5 * right;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; n];
        let stats = gmres(
            apply,
            |v, o| o.copy_from_slice(v),
            &b,
            &mut x,
            1e-12,
            10,
            500,
        );
        assert!(stats.converged, "{stats:?}");
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err = ax
            .iter()
            .zip(&b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let b = vec![1.0; 20];
        let mut x = vec![0.0; 20];
        let stats = gmres(
            |v, o| {
                for i in 0..20 {
                    o[i] = d[i] * v[i];
                }
            },
            |v, o| {
                for i in 0..20 {
                    o[i] = v[i] / d[i];
                }
            },
            &b,
            &mut x,
            1e-13,
            5,
            50,
        );
        assert!(stats.converged);
        assert!(stats.iterations <= 1);
    }
}
