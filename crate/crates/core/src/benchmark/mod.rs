//! Benchmark problems, the Gibbs reference sampler and the efficiency harness.

pub mod generators;
pub mod gibbs;
pub mod harness;
pub mod truncnorm;

pub use generators::{gen_compound_symmetric, gen_lkj, positive_orthant_case};
pub use gibbs::{gibbs_oracle, GibbsSampler};
pub use harness::{
    csv_row, run_benchmark, BenchOptions, BenchmarkCase, CaseSpec, CellResult, CellStatus, Generator,
    CSV_HEADER, DEFAULT_BUDGET_SECONDS, DEFAULT_TARGET_ESS, INITIAL_ITERATIONS,
};
