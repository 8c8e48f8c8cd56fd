//! Systematic-scan Gibbs sampler, used as a reference in low dimension.
//!
//! Each full conditional of a Gaussian with precision `Φ` is
//! `N(μᵢ − Σ_{j≠i} Φᵢⱼ(xⱼ − μⱼ)/Φᵢᵢ, 1/Φᵢᵢ)`, truncated to `[lᵢ, uᵢ]`.

use std::time::Instant;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{BoxConstraints, Constraints, MtnProblem};
use crate::sampler::Sampler;

use super::truncnorm::truncnorm;

/// Largest dimension the oracle accepts.
pub const GIBBS_MAX_DIM: usize = 10;

pub struct GibbsSampler {
    phi: Matrix,
    mean: Vec<f64>,
    bounds: BoxConstraints,
    cond_sd: Vec<f64>,
    x: Vec<f64>,
    setup_seconds: f64,
}

impl GibbsSampler {
    /// Needs the precision matrix cached on the problem.
    pub fn new(problem: &MtnProblem, x0: &[f64]) -> Result<Self> {
        let start = Instant::now();
        let Constraints::Box(bounds) = problem.constraints() else {
            return Err(Error::UnsupportedConstraints("gibbs oracle supports box constraints only"));
        };
        let d = problem.dim();
        if d > GIBBS_MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "gibbs oracle is limited to d <= {GIBBS_MAX_DIM}, got {d}"
            )));
        }
        problem.validate_initial(x0)?;
        let gauss = problem.gaussian();
        let phi = gauss.precision().ok_or(Error::MissingCache("precision"))?.clone();
        let cond_sd = phi.diag().iter().map(|p| p.sqrt().recip()).collect();
        Ok(Self {
            phi,
            mean: gauss.mean().to_vec(),
            bounds: bounds.clone(),
            cond_sd,
            x: x0.to_vec(),
            setup_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

impl Sampler for GibbsSampler {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn setup_seconds(&self) -> f64 {
        self.setup_seconds
    }

    fn position(&self) -> &[f64] {
        &self.x
    }

    fn step(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        for i in 0..self.x.len() {
            let row = self.phi.row(i);
            let shift: f64 = (0..self.x.len())
                .filter(|&j| j != i)
                .map(|j| row[j] * (self.x[j] - self.mean[j]))
                .sum();
            let m = self.mean[i] - shift / row[i];
            self.x[i] = truncnorm(m, self.cond_sd[i], self.bounds.lower()[i], self.bounds.upper()[i], rng)?;
        }
        Ok(())
    }
}

/// Runs `n` Gibbs sweeps on a problem with cached precision and returns the
/// `n × d` draws.
pub fn gibbs_oracle(problem: &MtnProblem, x0: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Matrix> {
    let mut sampler = GibbsSampler::new(problem, x0)?;
    let d = sampler.dim();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        sampler.step(rng)?;
        data.extend_from_slice(sampler.position());
    }
    Matrix::from_vec(n, d, data)
}
