//! Exact-trajectory Hamiltonian Monte Carlo for truncated multivariate
//! normal distributions.
//!
//! Two samplers are provided:
//!
//! * [`harmonic`] uses Gaussian momentum. After whitening, trajectories are
//!   rotations and wall hits have closed-form times, for box or general
//!   linear constraints.
//! * [`zigzag`] uses Laplace momentum. Trajectories are piecewise linear in
//!   the original coordinates and support box constraints, optionally with
//!   a no-U-turn integration time.
//!
//! ```no_run
//! use trunc_gauss::{sample, BoxConstraints, Constraints, GaussianSpec, Matrix, Method, MtnProblem, SamplerConfig};
//!
//! let gauss = GaussianSpec::with_precision(vec![0.0; 10], Matrix::identity(10))?;
//! let mut problem = MtnProblem::new(gauss, Constraints::Box(BoxConstraints::positive_orthant(10)))?;
//! let mut rng = trunc_gauss::rng::stream(42, "example");
//! let x0 = problem.default_initial()?;
//! let chain = sample(Method::Zigzag, &mut problem, &x0, 1000, 0.1, &SamplerConfig::default(), &mut rng)?;
//! println!("ESS_min = {:.1}", chain.ess_min);
//! # Ok::<(), trunc_gauss::Error>(())
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod diagnostics;
pub mod error;
pub mod harmonic;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod zigzag;

pub use diagnostics::{ChainResult, Metrics};
pub use error::{Error, Result};
pub use harmonic::{harmonic_sample, HarmonicOptions, HarmonicSampler};
pub use linalg::Matrix;
pub use model::{BoxConstraints, Constraints, GaussianSpec, LinearConstraints, MatrixKind, MtnProblem, Need};
pub use sampler::{build_sampler, run_chain, sample, Method, Sampler, SamplerConfig, DEFAULT_BURN_IN};
pub use zigzag::{zigzag_sample, ZigzagConfig, ZigzagOverrides, ZigzagSampler};
