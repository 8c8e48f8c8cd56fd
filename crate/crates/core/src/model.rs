//! Truncated multivariate normal targets.
//!
//! A problem is a Gaussian `N(μ, Σ)` (given either through `Σ` or through
//! the precision `Φ = Σ⁻¹`) restricted either to a box `l ≤ x ≤ u` or to a
//! polytope `Fx + g ≥ 0`. Expensive derived quantities (Cholesky factor,
//! precision, smallest precision eigenvalue) are cached by [`MtnProblem::prepare`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky_upper, invert_spd, lanczos_min_eig, Matrix, UpperTriangular};

/// Initial points closer than this to a wall are rejected.
pub const INTERIOR_TOL: f64 = 1e-12;

/// Above this dimension a failed Lanczos run is reported instead of being
/// retried with a full-length Krylov basis.
pub const DENSE_EIG_FALLBACK_MAX_DIM: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Covariance,
    Precision,
}

/// Mean plus one SPD matrix (covariance or precision), with lazily
/// populated caches.
#[derive(Clone, Debug)]
pub struct GaussianSpec {
    mean: Vec<f64>,
    kind: MatrixKind,
    matrix: Matrix,
    chol_upper: Option<UpperTriangular>,
    derived_precision: Option<Matrix>,
    lambda_min: Option<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, kind: MatrixKind, matrix: Matrix) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if matrix.rows() != d || matrix.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.rows(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("mean has non-finite entries".into()));
        }
        matrix.check_symmetric()?;
        Ok(Self {
            mean,
            kind,
            matrix,
            chol_upper: None,
            derived_precision: None,
            lambda_min: None,
        })
    }

    pub fn with_covariance(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        Self::new(mean, MatrixKind::Covariance, cov)
    }

    pub fn with_precision(mean: Vec<f64>, prec: Matrix) -> Result<Self> {
        Self::new(mean, MatrixKind::Precision, prec)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// The matrix supplied at construction.
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Cached `U` with `matrix() = UᵀU`.
    pub fn chol_upper(&self) -> Option<&UpperTriangular> {
        self.chol_upper.as_ref()
    }

    /// The precision matrix, if given or already derived.
    pub fn precision(&self) -> Option<&Matrix> {
        match self.kind {
            MatrixKind::Precision => Some(&self.matrix),
            MatrixKind::Covariance => self.derived_precision.as_ref(),
        }
    }

    pub fn lambda_min(&self) -> Option<f64> {
        self.lambda_min
    }
}

/// Element-wise bounds `l ≤ x ≤ u`; infinities mark open sides.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxConstraints {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxConstraints {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || *l == f64::INFINITY || *u == f64::NEG_INFINITY || l >= u {
                return Err(Error::InvalidBounds(i));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `x ≥ 0` in every coordinate.
    pub fn positive_orthant(d: usize) -> Self {
        Self {
            lower: vec![0.0; d],
            upper: vec![f64::INFINITY; d],
        }
    }

    pub fn unbounded(d: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; d],
            upper: vec![f64::INFINITY; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// Clamps `x` into the box in place.
    pub fn clamp(&self, x: &mut [f64]) {
        for (xi, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *xi = xi.clamp(*l, *u);
        }
    }
}

/// General linear constraints `Fx + g ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraints {
    f: Matrix,
    g: Vec<f64>,
}

impl LinearConstraints {
    pub fn new(f: Matrix, g: Vec<f64>) -> Result<Self> {
        if f.rows() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: f.rows(),
                found: g.len(),
            });
        }
        for j in 0..f.rows() {
            let row = f.row(j);
            if row.iter().any(|x| !x.is_finite()) || !g[j].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "constraint row {j} has non-finite entries"
                )));
            }
            if row.iter().all(|&x| x == 0.0) {
                return Err(Error::ZeroConstraintRow(j));
            }
        }
        Ok(Self { f, g })
    }

    /// No constraints on a `d`-dimensional space.
    pub fn unconstrained(d: usize) -> Self {
        Self {
            f: Matrix::zeros(0, d),
            g: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.f.cols()
    }

    /// Number of constraint rows `m`.
    pub fn count(&self) -> usize {
        self.g.len()
    }

    pub fn f(&self) -> &Matrix {
        &self.f
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// `Fx + g`.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.f.matvec(x);
        for (si, gi) in s.iter_mut().zip(&self.g) {
            *si += gi;
        }
        s
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.slacks(x).iter().all(|&s| s >= 0.0)
    }
}

/// Rewrites box bounds as `Fx + g ≥ 0`, one row per finite bound.
///
/// Lower bounds come first in coordinate order, then upper bounds.
pub fn box_to_linear(bounds: &BoxConstraints) -> LinearConstraints {
    let d = bounds.dim();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut g = Vec::new();
    for (i, &l) in bounds.lower.iter().enumerate() {
        if l.is_finite() {
            let mut r = vec![0.0; d];
            r[i] = 1.0;
            rows.push(r);
            g.push(-l);
        }
    }
    for (i, &u) in bounds.upper.iter().enumerate() {
        if u.is_finite() {
            let mut r = vec![0.0; d];
            r[i] = -1.0;
            rows.push(r);
            g.push(u);
        }
    }
    let f = if rows.is_empty() {
        Matrix::zeros(0, d)
    } else {
        Matrix::from_rows(&rows).expect("rows share length d")
    };
    LinearConstraints { f, g }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraints {
    Box(BoxConstraints),
    Linear(LinearConstraints),
}

impl Constraints {
    pub fn dim(&self) -> usize {
        match self {
            Constraints::Box(b) => b.dim(),
            Constraints::Linear(l) => l.dim(),
        }
    }

    /// The constraints in `Fx + g ≥ 0` form.
    pub fn to_linear(&self) -> LinearConstraints {
        match self {
            Constraints::Box(b) => box_to_linear(b),
            Constraints::Linear(l) => l.clone(),
        }
    }

    pub fn as_box(&self) -> Option<&BoxConstraints> {
        match self {
            Constraints::Box(b) => Some(b),
            Constraints::Linear(_) => None,
        }
    }

    /// Closed-set membership, with `tol` of slack allowed on linear rows.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Constraints::Box(b) => b.contains(x),
            Constraints::Linear(l) => l.slacks(x).iter().all(|&s| s >= -tol),
        }
    }
}

/// Cached quantities [`MtnProblem::prepare`] can compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Need {
    /// Cholesky factor of whichever matrix was supplied.
    CholeskyOfGiven,
    PrecisionMatrix,
    /// Smallest eigenvalue of the precision matrix.
    MinEigenvalue,
}

/// Outcome of one [`MtnProblem::prepare`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct Preparation {
    /// Wall-clock seconds spent in this call.
    pub t_pre: f64,
    /// Caches populated by this call, in the order they were filled.
    pub computed: Vec<Need>,
}

#[derive(Clone, Debug)]
pub struct MtnProblem {
    gaussian: GaussianSpec,
    constraints: Constraints,
    prep_seconds: f64,
}

impl MtnProblem {
    pub fn new(gaussian: GaussianSpec, constraints: Constraints) -> Result<Self> {
        if gaussian.dim() != constraints.dim() {
            return Err(Error::DimensionMismatch {
                expected: gaussian.dim(),
                found: constraints.dim(),
            });
        }
        Ok(Self {
            gaussian,
            constraints,
            prep_seconds: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.gaussian.dim()
    }

    pub fn gaussian(&self) -> &GaussianSpec {
        &self.gaussian
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }

    /// Total seconds spent across all `prepare` calls.
    pub fn prep_seconds(&self) -> f64 {
        self.prep_seconds
    }

    /// Checks that `x0` lies strictly inside the feasible set.
    ///
    /// For box constraints the reported index is the coordinate; for linear
    /// constraints it is the row of `F`.
    pub fn validate_initial(&self, x0: &[f64]) -> Result<()> {
        let d = self.dim();
        if x0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x0.len(),
            });
        }
        if let Some(i) = x0.iter().position(|x| !x.is_finite()) {
            return Err(Error::InfeasibleStart(i));
        }
        match &self.constraints {
            Constraints::Box(b) => {
                for (i, &x) in x0.iter().enumerate() {
                    if x - b.lower[i] <= INTERIOR_TOL || b.upper[i] - x <= INTERIOR_TOL {
                        return Err(Error::InfeasibleStart(i));
                    }
                }
            }
            Constraints::Linear(l) => {
                if let Some(j) = l.slacks(x0).iter().position(|&s| s <= INTERIOR_TOL) {
                    return Err(Error::InfeasibleStart(j));
                }
            }
        }
        Ok(())
    }

    /// A strictly feasible starting point when none is supplied.
    ///
    /// For boxes each coordinate starts 0.1 inside a one-sided bound, at the
    /// midpoint of a finite interval (or nearer the mean if that is inside),
    /// and at the mean when unbounded. For linear constraints the mean is
    /// used if it is strictly feasible; otherwise the caller must supply one.
    pub fn default_initial(&self) -> Result<Vec<f64>> {
        let mean = self.gaussian.mean();
        let x0 = match &self.constraints {
            Constraints::Box(b) => (0..self.dim())
                .map(|i| {
                    let (l, u, m) = (b.lower[i], b.upper[i], mean[i]);
                    match (l.is_finite(), u.is_finite()) {
                        (false, false) => m,
                        (true, false) => m.max(l + 0.1),
                        (false, true) => m.min(u - 0.1),
                        (true, true) => {
                            let margin = 0.25 * (u - l);
                            m.clamp(l + margin, u - margin)
                        }
                    }
                })
                .collect(),
            Constraints::Linear(_) => mean.to_vec(),
        };
        self.validate_initial(&x0)?;
        Ok(x0)
    }

    /// Populates the requested caches, skipping any already present.
    pub fn prepare(&mut self, needs: &[Need]) -> Result<Preparation> {
        let start = Instant::now();
        let mut computed = Vec::new();
        let g = &mut self.gaussian;

        if needs.contains(&Need::CholeskyOfGiven) && g.chol_upper.is_none() {
            g.chol_upper = Some(cholesky_upper(&g.matrix)?);
            computed.push(Need::CholeskyOfGiven);
        }
        let wants_precision = needs.contains(&Need::PrecisionMatrix) || needs.contains(&Need::MinEigenvalue);
        if wants_precision && g.precision().is_none() {
            g.derived_precision = Some(invert_spd(&g.matrix)?);
            computed.push(Need::PrecisionMatrix);
        }
        if needs.contains(&Need::MinEigenvalue) && g.lambda_min.is_none() {
            let prec = g.precision().expect("precision populated above");
            let lambda = min_eigenvalue(prec)?;
            if !(lambda > 0.0) {
                return Err(Error::NotPositiveDefinite(0));
            }
            g.lambda_min = Some(lambda);
            computed.push(Need::MinEigenvalue);
        }

        let t_pre = start.elapsed().as_secs_f64();
        self.prep_seconds += t_pre;
        Ok(Preparation { t_pre, computed })
    }
}

fn min_eigenvalue(prec: &Matrix) -> Result<f64> {
    let d = prec.rows();
    let opts = linalg::LanczosOptions::for_dim(d);
    match lanczos_min_eig(prec, opts.max_iters, opts.tol) {
        Err(Error::NoConvergence(k)) if d <= DENSE_EIG_FALLBACK_MAX_DIM => {
            log::warn!("lanczos stalled after {k} iterations; retrying with a full Krylov basis");
            // A d-step reorthogonalized run tridiagonalizes the whole matrix.
            lanczos_min_eig(prec, d.max(2), opts.tol)
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn orthant_problem(d: usize) -> MtnProblem {
        let g = GaussianSpec::with_precision(vec![0.0; d], Matrix::identity(d)).unwrap();
        MtnProblem::new(g, Constraints::Box(BoxConstraints::positive_orthant(d))).unwrap()
    }

    #[test]
    fn interior_start_accepted() {
        orthant_problem(2).validate_initial(&[0.1, 0.1]).unwrap();
    }

    #[test]
    fn sign_violation_reports_coordinate() {
        let err = orthant_problem(2).validate_initial(&[0.1, -0.1]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart(1)));
    }

    #[test]
    fn boundary_start_rejected() {
        let err = orthant_problem(2).validate_initial(&[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart(0)));
        let err = orthant_problem(2).validate_initial(&[1.0, 5e-13]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart(1)));
    }

    #[test]
    fn wrong_length_start() {
        let err = orthant_problem(2).validate_initial(&[0.1]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn linear_violation_reports_row() {
        let g = GaussianSpec::with_precision(vec![0.0; 2], Matrix::identity(2)).unwrap();
        let lin = LinearConstraints::new(Matrix::from_rows(&[[1.0, 1.0]]).unwrap(), vec![-1.0]).unwrap();
        let p = MtnProblem::new(g, Constraints::Linear(lin)).unwrap();
        assert!(matches!(p.validate_initial(&[0.4, 0.4]), Err(Error::InfeasibleStart(0))));
        p.validate_initial(&[0.6, 0.6]).unwrap();
    }

    #[test]
    fn box_to_linear_half_line() {
        let b = BoxConstraints::new(vec![0.0], vec![f64::INFINITY]).unwrap();
        let l = box_to_linear(&b);
        assert_eq!(l.f(), &Matrix::from_rows(&[[1.0]]).unwrap());
        assert_eq!(l.g(), &[0.0]);
    }

    #[test]
    fn box_to_linear_two_bounds() {
        let b = BoxConstraints::new(vec![-1.0], vec![2.0]).unwrap();
        let l = box_to_linear(&b);
        assert_eq!(l.f(), &Matrix::from_rows(&[[1.0], [-1.0]]).unwrap());
        assert_eq!(l.g(), &[1.0, 2.0]);
    }

    #[test]
    fn box_to_linear_unconstrained() {
        let l = box_to_linear(&BoxConstraints::unbounded(2));
        assert_eq!(l.count(), 0);
        assert_eq!(l.dim(), 2);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            BoxConstraints::new(vec![1.0], vec![1.0]),
            Err(Error::InvalidBounds(0))
        ));
        assert!(matches!(
            LinearConstraints::new(Matrix::from_rows(&[[0.0, 0.0]]).unwrap(), vec![1.0]),
            Err(Error::ZeroConstraintRow(0))
        ));
        let g = GaussianSpec::with_precision(vec![0.0; 2], Matrix::identity(2)).unwrap();
        assert!(MtnProblem::new(g, Constraints::Box(BoxConstraints::positive_orthant(3))).is_err());
        assert!(GaussianSpec::with_covariance(vec![0.0; 3], Matrix::identity(2)).is_err());
    }

    #[test]
    fn prepare_min_eigenvalue() {
        let mut p = orthant_problem(4);
        let prep = p.prepare(&[Need::MinEigenvalue]).unwrap();
        assert!((p.gaussian().lambda_min().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(prep.computed, vec![Need::MinEigenvalue]);

        let g = GaussianSpec::with_precision(vec![0.0; 2], Matrix::from_diag(&[1.0, 4.0])).unwrap();
        let mut p = MtnProblem::new(g, Constraints::Box(BoxConstraints::unbounded(2))).unwrap();
        p.prepare(&[Need::MinEigenvalue]).unwrap();
        assert!((p.gaussian().lambda_min().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prepare_precision_from_covariance() {
        let cov = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let g = GaussianSpec::with_covariance(vec![0.0; 2], cov.clone()).unwrap();
        let mut p = MtnProblem::new(g, Constraints::Box(BoxConstraints::unbounded(2))).unwrap();
        let prep = p.prepare(&[Need::PrecisionMatrix]).unwrap();
        assert_eq!(prep.computed, vec![Need::PrecisionMatrix]);
        let prec = p.gaussian().precision().unwrap();
        let want = Matrix::from_rows(&[[2.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        assert!(prec.max_abs_diff(&want) < 1e-14);
        let id = cov.matmul(prec).unwrap();
        assert!(id.frobenius_distance(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn prepare_is_idempotent() {
        let cov = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let g = GaussianSpec::with_covariance(vec![0.0; 2], cov).unwrap();
        let mut p = MtnProblem::new(g, Constraints::Box(BoxConstraints::unbounded(2))).unwrap();
        let all = [Need::CholeskyOfGiven, Need::PrecisionMatrix, Need::MinEigenvalue];
        let first = p.prepare(&all).unwrap();
        assert_eq!(first.computed.len(), 3);
        let snapshot = p.gaussian().clone();
        let second = p.prepare(&all).unwrap();
        assert!(second.computed.is_empty());
        assert_eq!(p.gaussian().chol_upper(), snapshot.chol_upper());
        assert_eq!(p.gaussian().precision(), snapshot.precision());
        assert_eq!(p.gaussian().lambda_min(), snapshot.lambda_min());
    }

    #[test]
    fn prepare_rejects_indefinite() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let g = GaussianSpec::with_covariance(vec![0.0; 2], m).unwrap();
        let mut p = MtnProblem::new(g, Constraints::Box(BoxConstraints::unbounded(2))).unwrap();
        assert!(matches!(
            p.prepare(&[Need::CholeskyOfGiven]),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    fn bounds_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..=10).prop_flat_map(|d| {
            prop::collection::vec(
                (
                    prop_oneof![Just(f64::NEG_INFINITY), -3.0..1.0f64],
                    prop_oneof![Just(f64::INFINITY), 0.0..4.0f64],
                ),
                d,
            )
            .prop_map(|pairs| {
                pairs
                    .into_iter()
                    .map(|(l, u)| if l < u { (l, u) } else { (l, l + 1.0) })
                    .unzip()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn box_and_linear_membership_agree(
            (lower, upper) in bounds_strategy(),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let d = lower.len();
            let b = BoxConstraints::new(lower, upper).unwrap();
            let lin = box_to_linear(&b);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..1000 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
                prop_assert_eq!(b.contains(&x), lin.contains(&x));
            }
        }
    }
}
