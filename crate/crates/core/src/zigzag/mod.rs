//! Zigzag HMC: Hamiltonian dynamics with Laplace momentum.
//!
//! With kinetic energy `‖p‖₁` the velocity is `sign(p)`, so trajectories
//! are piecewise linear and can be simulated exactly event by event. The
//! sampler works in the original coordinates and needs the precision
//! matrix; only box constraints are supported.

mod dynamics;
mod nuts;

pub use dynamics::{
    advance_segment, apply_event, momentum_at, next_boundary_event, next_gradient_event,
    zigzag_propose, Event, EventKind,
};
pub use nuts::nuts_propose;

use std::time::Instant;

use rand::{Rng, RngCore};

use crate::diagnostics::ChainResult;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{BoxConstraints, Constraints, MtnProblem};
use crate::sampler::{run_chain, Sampler};

pub const DEFAULT_MAX_TREE_DEPTH: usize = 10;
pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

/// Target density and bounds the dynamics run against.
#[derive(Clone, Debug)]
pub struct ZigzagModel {
    pub(crate) phi: Matrix,
    pub(crate) mean: Vec<f64>,
    pub(crate) bounds: BoxConstraints,
}

impl ZigzagModel {
    pub fn new(phi: Matrix, mean: Vec<f64>, bounds: BoxConstraints) -> Result<Self> {
        let d = mean.len();
        if phi.rows() != d || phi.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: phi.rows(),
            });
        }
        if bounds.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bounds.dim(),
            });
        }
        Ok(Self { phi, mean, bounds })
    }

    pub fn from_problem(problem: &MtnProblem) -> Result<Self> {
        let Constraints::Box(bounds) = problem.constraints() else {
            return Err(Error::UnsupportedConstraints("zigzag supports box constraints only"));
        };
        let gauss = problem.gaussian();
        let phi = gauss.precision().ok_or(Error::MissingCache("precision"))?;
        Self::new(phi.clone(), gauss.mean().to_vec(), bounds.clone())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> &Matrix {
        &self.phi
    }

    pub fn bounds(&self) -> &BoxConstraints {
        &self.bounds
    }
}

/// Position, momentum and the caches needed for O(d) event updates.
#[derive(Clone, Debug, PartialEq)]
pub struct ZigzagState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `sign(p)`, entries ±1.
    pub v: Vec<f64>,
    /// `Φ(x − μ)`.
    pub grad: Vec<f64>,
    /// `Φv`.
    pub phi_v: Vec<f64>,
}

impl ZigzagState {
    /// Builds a state and its caches from scratch, O(d²).
    pub fn new(model: &ZigzagModel, x: Vec<f64>, p: Vec<f64>) -> Self {
        let v: Vec<f64> = p.iter().map(|&pi| if pi < 0.0 { -1.0 } else { 1.0 }).collect();
        let centered: Vec<f64> = x.iter().zip(&model.mean).map(|(a, b)| a - b).collect();
        let grad = model.phi.matvec(&centered);
        let phi_v = model.phi.matvec(&v);
        Self { x, p, v, grad, phi_v }
    }

    /// `½(x − μ)ᵀΦ(x − μ) + ‖p‖₁`, using the cached gradient.
    pub fn hamiltonian(&self, model: &ZigzagModel) -> f64 {
        let centered: Vec<f64> = self.x.iter().zip(&model.mean).map(|(a, b)| a - b).collect();
        0.5 * dot(&centered, &self.grad) + self.p.iter().map(|p| p.abs()).sum::<f64>()
    }

    /// Largest cache error relative to a fresh computation.
    pub fn cache_error(&self, model: &ZigzagModel) -> f64 {
        let fresh = Self::new(model, self.x.clone(), self.p.clone());
        let err = |a: &[f64], b: &[f64]| {
            let scale = 1.0 + a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
        };
        err(&self.grad, &fresh.grad).max(err(&self.phi_v, &model.phi.matvec(&self.v)))
    }

    /// Time reversal: negates momentum, velocity and `Φv`.
    pub(crate) fn reverse(&mut self) {
        for i in 0..self.p.len() {
            self.p[i] = -self.p[i];
            self.v[i] = -self.v[i];
            self.phi_v[i] = -self.phi_v[i];
        }
    }
}

/// `d` independent standard Laplace draws.
pub fn refresh_momentum<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| loop {
            let w = rng.random::<f64>() - 0.5;
            if w != 0.0 && w.abs() != 0.5 {
                break -w.signum() * (1.0 - 2.0 * w.abs()).ln();
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZigzagConfig {
    /// Integration time per proposal.
    pub time: f64,
    /// Segment length of the NUTS tree.
    pub t_base: f64,
    pub use_nuts: bool,
    pub max_tree_depth: usize,
    pub max_events_per_proposal: usize,
}

impl ZigzagConfig {
    /// `T = √2·λ_min^(−1/2)` and `t_base = 0.1·λ_min^(−1/2)`.
    pub fn from_lambda_min(lambda_min: f64, use_nuts: bool) -> Result<Self> {
        if !(lambda_min > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "smallest precision eigenvalue must be positive, got {lambda_min}"
            )));
        }
        let scale = lambda_min.sqrt().recip();
        Ok(Self {
            time: std::f64::consts::SQRT_2 * scale,
            t_base: 0.1 * scale,
            use_nuts,
            max_tree_depth: DEFAULT_MAX_TREE_DEPTH,
            max_events_per_proposal: DEFAULT_MAX_EVENTS,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.time > 0.0 && self.time.is_finite()) || !(self.t_base > 0.0 && self.t_base.is_finite()) {
            return Err(Error::InvalidParameter(
                "integration time and base time must be positive".into(),
            ));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::InvalidParameter("max tree depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// User overrides applied on top of the eigenvalue-based defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ZigzagOverrides {
    pub time: Option<f64>,
    pub t_base: Option<f64>,
    pub max_tree_depth: Option<usize>,
}

impl ZigzagOverrides {
    /// Needs `λ_min` cached on the problem.
    pub fn resolve(&self, problem: &MtnProblem, use_nuts: bool) -> Result<ZigzagConfig> {
        let lambda = problem
            .gaussian()
            .lambda_min()
            .ok_or(Error::MissingCache("lambda_min"))?;
        let mut cfg = ZigzagConfig::from_lambda_min(lambda, use_nuts)?;
        if let Some(t) = self.time {
            cfg.time = t;
        }
        if let Some(t) = self.t_base {
            cfg.t_base = t;
        }
        if let Some(depth) = self.max_tree_depth {
            cfg.max_tree_depth = depth;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Zigzag (or zigzag-NUTS) chain over a prepared problem.
pub struct ZigzagSampler {
    model: ZigzagModel,
    config: ZigzagConfig,
    x: Vec<f64>,
    setup_seconds: f64,
    events: u64,
}

impl ZigzagSampler {
    pub fn new(problem: &MtnProblem, x0: &[f64], config: ZigzagConfig) -> Result<Self> {
        let start = Instant::now();
        let model = ZigzagModel::from_problem(problem)?;
        problem.validate_initial(x0)?;
        config.validate()?;
        Ok(Self {
            model,
            config,
            x: x0.to_vec(),
            setup_seconds: start.elapsed().as_secs_f64(),
            events: 0,
        })
    }

    pub fn config(&self) -> &ZigzagConfig {
        &self.config
    }

    pub fn model(&self) -> &ZigzagModel {
        &self.model
    }
}

impl Sampler for ZigzagSampler {
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
        let p = refresh_momentum(rng, self.x.len());
        let state = ZigzagState::new(&self.model, std::mem::take(&mut self.x), p);
        let (x, n) = if self.config.use_nuts {
            nuts_propose(&state, &self.model, &self.config, rng)?
        } else {
            let mut s = state;
            let n = zigzag_propose(
                &mut s,
                &self.model,
                self.config.time,
                self.config.max_events_per_proposal,
                |_, _| {},
            )?;
            (s.x, n)
        };
        self.events += n as u64;
        self.x = x;
        Ok(())
    }

    fn event_count(&self) -> u64 {
        self.events
    }
}

/// Runs a zigzag chain of `n` iterations on a prepared problem.
pub fn zigzag_sample(
    problem: &MtnProblem,
    x0: &[f64],
    n: usize,
    burn_in_frac: f64,
    config: ZigzagConfig,
    rng: &mut dyn RngCore,
) -> Result<ChainResult> {
    let mut sampler = ZigzagSampler::new(problem, x0, config)?;
    run_chain(&mut sampler, n, burn_in_frac, problem.prep_seconds(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianSpec, LinearConstraints, Need};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn laplace_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let p = refresh_momentum(&mut rng, n);
        let nf = n as f64;
        let mean = p.iter().sum::<f64>() / nf;
        let var = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        // Var = 2, fourth moment 24 so Var(p²) = 20.
        assert!(mean.abs() < 3.0 * (2.0 / nf).sqrt(), "{mean}");
        assert!((var - 2.0).abs() < 3.0 * (20.0 / nf).sqrt(), "{var}");
        let tail = p.iter().filter(|x| x.abs() > 3.0).count() as f64 / nf;
        let q = (-3.0f64).exp();
        assert!((tail - q).abs() < 3.0 * (q * (1.0 - q) / nf).sqrt(), "{tail}");

        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(refresh_momentum(&mut a, 8), refresh_momentum(&mut b, 8));
    }

    #[test]
    fn default_time_from_min_eigenvalue() {
        let g = GaussianSpec::with_precision(vec![0.0; 2], Matrix::from_diag(&[1.0, 4.0])).unwrap();
        let mut p = MtnProblem::new(g, Constraints::Box(BoxConstraints::unbounded(2))).unwrap();
        assert!(matches!(
            ZigzagOverrides::default().resolve(&p, false),
            Err(Error::MissingCache(_))
        ));
        p.prepare(&[Need::PrecisionMatrix, Need::MinEigenvalue]).unwrap();
        let cfg = ZigzagOverrides::default().resolve(&p, false).unwrap();
        assert!((cfg.time - std::f64::consts::SQRT_2).abs() < 1e-9);
        assert!((cfg.t_base - 0.1).abs() < 1e-9);
        let over = ZigzagOverrides {
            time: Some(-1.0),
            ..Default::default()
        };
        assert!(over.resolve(&p, false).is_err());
    }

    #[test]
    fn linear_constraints_rejected() {
        let g = GaussianSpec::with_precision(vec![0.0; 2], Matrix::identity(2)).unwrap();
        let lin = LinearConstraints::new(Matrix::identity(2), vec![0.0; 2]).unwrap();
        let mut p = MtnProblem::new(g, Constraints::Linear(lin)).unwrap();
        p.prepare(&[Need::PrecisionMatrix, Need::MinEigenvalue]).unwrap();
        let cfg = ZigzagConfig::from_lambda_min(1.0, false).unwrap();
        let err = ZigzagSampler::new(&p, &[1.0, 1.0], cfg).err().unwrap();
        assert_eq!(err.to_string(), Error::UnsupportedConstraints("zigzag supports box constraints only").to_string());
    }

    #[test]
    fn cache_stays_coherent_over_a_proposal() {
        let phi = Matrix::from_rows(&[[2.0, 0.6, 0.1], [0.6, 1.5, -0.3], [0.1, -0.3, 1.0]]).unwrap();
        let m = ZigzagModel::new(phi, vec![0.5, 0.0, -0.2], BoxConstraints::positive_orthant(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = vec![0.3, 0.4, 0.5];
        for _ in 0..200 {
            let mut s = ZigzagState::new(&m, x, refresh_momentum(&mut rng, 3));
            zigzag_propose(&mut s, &m, 2.0, 100_000, |st, _| {
                assert!(st.cache_error(&m) < 1e-8);
                assert!(st.x.iter().all(|&xi| xi >= 0.0));
                assert!(st.v.iter().all(|&vi| vi == 1.0 || vi == -1.0));
            })
            .unwrap();
            x = s.x;
        }
    }
}
