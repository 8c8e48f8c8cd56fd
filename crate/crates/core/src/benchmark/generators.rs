//! Covariance generators for benchmark problems.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{BoxConstraints, Constraints, GaussianSpec, MtnProblem};

/// Random correlation matrix from the LKJ(η) distribution, onion method.
///
/// The Cholesky factor is grown one row at a time: the new off-diagonal
/// column is `z = L w` with `w = √y·u`, `y ~ Beta(k/2, β)` and `u` uniform
/// on the unit sphere, so the new factor row is `(w, √(1 − y))`.
pub fn gen_lkj<R: Rng + ?Sized>(d: usize, eta: f64, rng: &mut R) -> Result<Matrix> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("LKJ needs d >= 2, got {d}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("LKJ needs eta > 0, got {eta}")));
    }
    let beta_dist = |a: f64, b: f64| {
        Beta::new(a, b).map_err(|e| Error::InvalidParameter(format!("beta({a}, {b}): {e}")))
    };
    let mut beta = eta + (d as f64 - 2.0) / 2.0;
    let r12 = 2.0 * beta_dist(beta, beta)?.sample(rng) - 1.0;

    let mut corr = Matrix::identity(d);
    corr[(0, 1)] = r12;
    corr[(1, 0)] = r12;
    // Lower Cholesky factor of the leading block, row-major.
    let mut chol = Matrix::zeros(d, d);
    chol[(0, 0)] = 1.0;
    chol[(1, 0)] = r12;
    chol[(1, 1)] = (1.0 - r12 * r12).sqrt();

    for k in 2..d {
        beta -= 0.5;
        let y = beta_dist(k as f64 / 2.0, beta)?.sample(rng);
        let mut u: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let len = dot(&u, &u).sqrt();
        let scale = y.sqrt() / len;
        for ui in u.iter_mut() {
            *ui *= scale;
        }
        for j in 0..k {
            let z = dot(&chol.row(j)[..=j], &u[..=j]);
            corr[(k, j)] = z;
            corr[(j, k)] = z;
        }
        chol.row_mut(k)[..k].copy_from_slice(&u);
        chol[(k, k)] = (1.0 - y).sqrt();
    }
    Ok(corr)
}

/// Unit diagonal with every off-diagonal equal to `rho`.
///
/// Positive definite exactly when `−1/(d−1) < rho < 1`.
pub fn gen_compound_symmetric(d: usize, rho: f64) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if d > 1 {
        // Same pivot index a Cholesky factorization would fail at.
        if !(rho < 1.0) {
            return Err(Error::NotPositiveDefinite(1));
        }
        if !(1.0 + (d as f64 - 1.0) * rho > 0.0) {
            return Err(Error::NotPositiveDefinite(d - 1));
        }
    }
    Ok(Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho }))
}

/// Gaussian with covariance `cov` truncated to `x > 0`.
pub fn positive_orthant_case(cov: Matrix, mean: Vec<f64>) -> Result<MtnProblem> {
    let d = mean.len();
    let gauss = GaussianSpec::with_covariance(mean, cov)?;
    MtnProblem::new(gauss, Constraints::Box(BoxConstraints::positive_orthant(d)))
}
