use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{axpy, dot, norm, Matrix};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 300;

/// Fixed seed for the Krylov starting vector, so results are reproducible.
const START_SEED: u64 = 0x005e_ed1a_2c05;

/// Iteration limits for [`lanczos_min_eig`].
#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl LanczosOptions {
    pub fn for_dim(d: usize) -> Self {
        Self {
            max_iters: d.clamp(2, DEFAULT_MAX_ITERS),
            tol: DEFAULT_TOL,
        }
    }
}

/// Smallest eigenvalue of a symmetric positive definite matrix.
///
/// Runs Lanczos with full reorthogonalization from a fixed pseudo-random
/// start vector and stops once the smallest Ritz pair `(θ, q)` has residual
/// `‖Φq − θq‖ ≤ tol·θ`. Reaching `d` iterations, or an invariant Krylov
/// subspace, gives the exact Ritz spectrum and also terminates.
pub fn lanczos_min_eig(phi: &Matrix, max_iters: usize, tol: f64) -> Result<f64> {
    if !phi.is_square() {
        return Err(Error::DimensionMismatch {
            expected: phi.rows(),
            found: phi.cols(),
        });
    }
    if max_iters < 2 {
        return Err(Error::InvalidParameter("Lanczos needs max_iters >= 2".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("Lanczos tolerance must be positive".into()));
    }
    let d = phi.rows();
    if d == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if d == 1 {
        return Ok(phi[(0, 0)]);
    }
    let k_max = max_iters.min(d);
    let scale = phi.frobenius_norm();

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut q: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let q_norm = norm(&q);
    q.iter_mut().for_each(|x| *x /= q_norm);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k_max);
    let mut alpha: Vec<f64> = Vec::with_capacity(k_max);
    let mut beta: Vec<f64> = Vec::with_capacity(k_max);
    let mut w = vec![0.0; d];

    for k in 0..k_max {
        phi.matvec_into(&q, &mut w);
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q);
        alpha.push(a);
        // Classical Gram–Schmidt twice against the whole basis.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm(&w);

        let (theta, last) = smallest_ritz_pair(&alpha, &beta)?;
        let residual = b * last.abs();
        let exhausted = k + 1 == d || b <= 1e-14 * scale;
        if residual <= tol * theta.abs() || exhausted {
            log::debug!("lanczos converged after {} iterations, residual {residual:.3e}", k + 1);
            return Ok(theta);
        }
        beta.push(b);
        q = w.iter().map(|x| x / b).collect();
    }
    Err(Error::NoConvergence(k_max))
}

/// Smallest eigenvalue of the tridiagonal matrix `(alpha, beta)` and the
/// last component of its unit eigenvector.
fn smallest_ritz_pair(alpha: &[f64], beta: &[f64]) -> Result<(f64, f64)> {
    let n = alpha.len();
    let mut diag = alpha.to_vec();
    let mut off = vec![0.0; n];
    off[..n - 1].copy_from_slice(&beta[..n - 1]);
    let mut last = vec![0.0; n];
    last[n - 1] = 1.0;
    tql_last_row(&mut diag, &mut off, &mut last)?;
    let (idx, theta) = diag
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty tridiagonal");
    Ok((theta, last[idx]))
}

/// All eigenvalues of a symmetric tridiagonal matrix, ascending.
///
/// `off[i]` couples rows `i` and `i + 1`; it must have length `diag.len() - 1`.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if off.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: off.len(),
        });
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n];
    tql_last_row(&mut d, &mut e, &mut z)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
///
/// On return `d` holds the eigenvalues. Only one row `z` of the eigenvector
/// matrix is carried through the rotations, which is all the Lanczos
/// residual estimate needs.
fn tql_last_row(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence(iter));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
