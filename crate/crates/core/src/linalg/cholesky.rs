use super::{dot, Matrix};
use crate::error::{Error, Result};

/// Pivots at or below this fraction of the largest diagonal entry are
/// treated as a loss of definiteness.
const PIVOT_RTOL: f64 = 1e-14;

/// Upper-triangular factor `U` with strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperTriangular {
    data: Matrix,
}

impl UpperTriangular {
    /// Wraps `m` after checking it is square, upper triangular, with a
    /// positive diagonal.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                found: m.cols(),
            });
        }
        for i in 0..m.rows() {
            if !(m[(i, i)] > 0.0) {
                return Err(Error::SingularDiagonal(i));
            }
            if (0..i).any(|j| m[(i, j)] != 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "entry below the diagonal in row {i} is non-zero"
                )));
            }
        }
        Ok(Self { data: m })
    }

    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    /// Reconstructs `UᵀU`.
    pub fn gram_transpose(&self) -> Matrix {
        let n = self.dim();
        let u = &self.data;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                // (UᵀU)_ij = Σ_{k ≤ min(i,j)} U_ki U_kj
                let v: f64 = (0..=i).map(|k| u[(k, i)] * u[(k, j)]).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// `U x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| dot(&self.data.row(i)[i..], &x[i..])).collect()
    }

    /// `Uᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.data.row(i)[i..];
            for (o, &u) in out[i..].iter_mut().zip(row) {
                *o += u * xi;
            }
        }
        out
    }
}

/// Factorizes a symmetric positive definite matrix as `M = UᵀU`.
pub fn cholesky_upper(m: &Matrix) -> Result<UpperTriangular> {
    m.check_symmetric()?;
    let n = m.rows();
    let max_diag = m.diag().into_iter().fold(0.0_f64, f64::max);
    if !(max_diag > 0.0) {
        return Err(Error::NotPositiveDefinite(0));
    }
    let floor = PIVOT_RTOL * max_diag;

    // Row-oriented Cholesky–Banachiewicz on L = Uᵀ keeps inner products contiguous.
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let pivot = m[(i, i)] - s;
                if !(pivot > floor) {
                    return Err(Error::NotPositiveDefinite(i));
                }
                l[(i, i)] = pivot.sqrt();
            } else {
                l[(i, j)] = (m[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Ok(UpperTriangular { data: l.transpose() })
}

/// Solves `U y = b`, or `Uᵀ y = b` when `transposed`.
pub fn solve_triangular(u: &UpperTriangular, b: &[f64], transposed: bool) -> Result<Vec<f64>> {
    let n = u.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let m = u.as_matrix();
    if let Some(i) = (0..n).find(|&i| m[(i, i)] == 0.0) {
        return Err(Error::SingularDiagonal(i));
    }
    let mut y = b.to_vec();
    if transposed {
        // Forward substitution, column-oriented so each step reads one row of U.
        for i in 0..n {
            let yi = y[i] / m[(i, i)];
            y[i] = yi;
            let row = m.row(i);
            for j in (i + 1)..n {
                y[j] -= row[j] * yi;
            }
        }
    } else {
        for i in (0..n).rev() {
            let row = m.row(i);
            let s = dot(&row[i + 1..], &y[i + 1..]);
            y[i] = (y[i] - s) / row[i];
        }
    }
    Ok(y)
}

/// Inverts a symmetric positive definite matrix through its Cholesky factor.
pub fn invert_spd(m: &Matrix) -> Result<Matrix> {
    let u = cholesky_upper(m)?;
    let n = u.dim();
    // Column k of M⁻¹ solves UᵀU x = e_k; stored as row k since M⁻¹ is symmetric.
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for k in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[k] = 1.0;
        let z = solve_triangular(&u, &e, true)?;
        let col = solve_triangular(&u, &z, false)?;
        inv.row_mut(k).copy_from_slice(&col);
    }
    inv.symmetrize();
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64) -> Matrix {
        Matrix::from_rows(&[[a, b], [b, c]]).unwrap()
    }

    #[test]
    fn identity_factor() {
        let u = cholesky_upper(&Matrix::identity(4)).unwrap();
        assert_eq!(u.as_matrix(), &Matrix::identity(4));
    }

    #[test]
    fn diagonal_factor() {
        let u = cholesky_upper(&m2(4.0, 0.0, 9.0)).unwrap();
        assert_eq!(u.as_matrix(), &Matrix::from_diag(&[2.0, 3.0]));
    }

    #[test]
    fn two_by_two_factor() {
        let m = m2(2.0, 1.0, 2.0);
        let u = cholesky_upper(&m).unwrap();
        let s2 = 2f64.sqrt();
        let expected = Matrix::from_rows(&[[s2, 1.0 / s2], [0.0, 1.5f64.sqrt()]]).unwrap();
        assert!(u.as_matrix().max_abs_diff(&expected) < 1e-15);
        let recon = u.gram_transpose();
        assert!(recon.max_abs_diff(&m) <= 1e-10 * m.frobenius_norm());
    }

    #[test]
    fn indefinite_reports_pivot() {
        let err = cholesky_upper(&m2(1.0, 2.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(1)));
        let err = cholesky_upper(&m2(-1.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(0)));
    }

    #[test]
    fn asymmetric_rejected() {
        let m = Matrix::from_rows(&[[2.0, 1.0], [0.5, 2.0]]).unwrap();
        assert!(matches!(cholesky_upper(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn triangular_solves() {
        let id = UpperTriangular::new(Matrix::identity(2)).unwrap();
        assert_eq!(solve_triangular(&id, &[3.0, 4.0], false).unwrap(), vec![3.0, 4.0]);
        let d = UpperTriangular::new(Matrix::from_diag(&[2.0, 4.0])).unwrap();
        assert_eq!(solve_triangular(&d, &[2.0, 8.0], true).unwrap(), vec![1.0, 2.0]);

        let u = cholesky_upper(&m2(2.0, 1.0, 2.0)).unwrap();
        let b = [1.0, 1.0];
        for transposed in [false, true] {
            let y = solve_triangular(&u, &b, transposed).unwrap();
            let back = if transposed { u.tr_mul_vec(&y) } else { u.mul_vec(&y) };
            for (x, want) in back.iter().zip(&b) {
                assert!((x - want).abs() <= 1e-10);
            }
        }
        // Back substitution by hand: y₂ = 1/√1.5, y₁ = (1 − y₂/√2)/√2.
        let y = solve_triangular(&u, &b, false).unwrap();
        let y2 = 1.0 / 1.5f64.sqrt();
        let y1 = (1.0 - y2 / 2f64.sqrt()) / 2f64.sqrt();
        assert!((y[0] - y1).abs() < 1e-14 && (y[1] - y2).abs() < 1e-14);
    }

    #[test]
    fn solve_dimension_mismatch() {
        let id = UpperTriangular::new(Matrix::identity(2)).unwrap();
        assert!(matches!(
            solve_triangular(&id, &[1.0], false),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn upper_triangular_validation() {
        let lower = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!(UpperTriangular::new(lower).is_err());
        let zero_diag = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            UpperTriangular::new(zero_diag),
            Err(Error::SingularDiagonal(1))
        ));
    }

    #[test]
    fn inverses() {
        assert_eq!(invert_spd(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let inv = invert_spd(&Matrix::from_diag(&[2.0, 5.0])).unwrap();
        assert!(inv.max_abs_diff(&Matrix::from_diag(&[0.5, 0.2])) < 1e-15);
        let inv = invert_spd(&m2(2.0, 1.0, 2.0)).unwrap();
        let expected = m2(2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0);
        assert!(inv.max_abs_diff(&expected) < 1e-14);
        let prod = m2(2.0, 1.0, 2.0).matmul(&inv).unwrap();
        assert!(prod.frobenius_distance(&Matrix::identity(2)) <= 1e-8 * 2.0);
    }
}
