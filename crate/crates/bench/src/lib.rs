//! Fixtures shared by the criterion benchmarks.

use trunc_gauss::benchmark::{BenchmarkCase, CaseSpec};
use trunc_gauss::{MtnProblem, Need};

/// Fixed seed so every run benchmarks the same matrices.
pub const FIXTURE_SEED: u64 = 2024;

/// A positive-orthant LKJ problem of dimension `d`, prepared for every method.
pub fn prepared_lkj(d: usize) -> MtnProblem {
    prepared(CaseSpec::Lkj { d, eta: 1.0 })
}

/// The compound-symmetric problem with correlation `rho`, fully prepared.
pub fn prepared_compound(d: usize, rho: f64) -> MtnProblem {
    prepared(CaseSpec::Compound { d, rho })
}

fn prepared(spec: CaseSpec) -> MtnProblem {
    let BenchmarkCase { mut problem, .. } = spec.build(FIXTURE_SEED).expect("valid fixture");
    problem
        .prepare(&[Need::CholeskyOfGiven, Need::PrecisionMatrix, Need::MinEigenvalue])
        .expect("fixture is SPD");
    problem
}
