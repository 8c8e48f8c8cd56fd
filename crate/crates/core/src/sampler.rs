//! Common driver for the Markov chain samplers.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::RngCore;

use crate::benchmark::gibbs::GibbsSampler;
use crate::diagnostics::{summarize, ChainResult, Timings};
use crate::error::{Error, Result};
use crate::harmonic::{HarmonicOptions, HarmonicSampler};
use crate::linalg::Matrix;
use crate::model::{MtnProblem, Need};
use crate::zigzag::{ZigzagOverrides, ZigzagSampler};

/// Default fraction of each chain discarded as burn-in.
pub const DEFAULT_BURN_IN: f64 = 0.1;

/// A Markov chain over a fixed problem.
pub trait Sampler: Send {
    fn dim(&self) -> usize;

    /// Pre-processing seconds spent when the sampler was built.
    fn setup_seconds(&self) -> f64;

    /// Current state of the chain.
    fn position(&self) -> &[f64];

    /// Advances the chain by one iteration.
    fn step(&mut self, rng: &mut dyn RngCore) -> Result<()>;

    /// Bounces or events simulated so far.
    fn event_count(&self) -> u64 {
        0
    }
}

/// Sampling methods exposed through the library and CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Harmonic,
    Zigzag,
    ZigzagNuts,
    GibbsOracle,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Harmonic,
        Method::Zigzag,
        Method::ZigzagNuts,
        Method::GibbsOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Harmonic => "harmonic",
            Method::Zigzag => "zigzag",
            Method::ZigzagNuts => "zigzag-nuts",
            Method::GibbsOracle => "gibbs-oracle",
        }
    }

    /// Caches the method reads from a prepared problem.
    pub fn needs(self) -> &'static [Need] {
        match self {
            Method::Harmonic => &[Need::CholeskyOfGiven],
            Method::Zigzag | Method::ZigzagNuts => &[Need::PrecisionMatrix, Need::MinEigenvalue],
            Method::GibbsOracle => &[Need::PrecisionMatrix],
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// Per-method tuning knobs; everything defaults to the built-in rules.
#[derive(Clone, Debug, Default)]
pub struct SamplerConfig {
    pub harmonic: HarmonicOptions,
    pub zigzag: ZigzagOverrides,
}

/// Builds a sampler for an already prepared problem.
pub fn build_sampler(
    method: Method,
    problem: &MtnProblem,
    x0: &[f64],
    config: &SamplerConfig,
) -> Result<Box<dyn Sampler>> {
    Ok(match method {
        Method::Harmonic => Box::new(HarmonicSampler::new(problem, x0, config.harmonic.clone())?),
        Method::Zigzag => Box::new(ZigzagSampler::new(problem, x0, config.zigzag.resolve(problem, false)?)?),
        Method::ZigzagNuts => Box::new(ZigzagSampler::new(problem, x0, config.zigzag.resolve(problem, true)?)?),
        Method::GibbsOracle => Box::new(GibbsSampler::new(problem, x0)?),
    })
}

/// Number of draws kept from `n` iterations after burn-in.
pub fn retained_count(n: usize, burn_in_frac: f64) -> usize {
    // The epsilon absorbs representation error in e.g. 10 · (1 − 0.3).
    ((n as f64 * (1.0 - burn_in_frac)) + 1e-9).floor() as usize
}

/// Accumulates draws and per-iteration wall time from a sampler.
#[derive(Clone, Debug)]
pub struct ChainRecorder {
    dim: usize,
    draws: Vec<f64>,
    iter_seconds: Vec<f64>,
}

impl ChainRecorder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            draws: Vec::new(),
            iter_seconds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.iter_seconds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iter_seconds.is_empty()
    }

    /// Runs `iterations` more steps, recording each state.
    pub fn extend(&mut self, sampler: &mut dyn Sampler, iterations: usize, rng: &mut dyn RngCore) -> Result<()> {
        self.draws.reserve(iterations * self.dim);
        self.iter_seconds.reserve(iterations);
        for _ in 0..iterations {
            let start = Instant::now();
            sampler.step(rng)?;
            self.iter_seconds.push(start.elapsed().as_secs_f64());
            self.draws.extend_from_slice(sampler.position());
        }
        Ok(())
    }

    /// Drops the burn-in prefix and summarizes what remains.
    pub fn finish(&self, burn_in_frac: f64, t_pre: f64, target_ess: f64, event_count: u64) -> Result<ChainResult> {
        if !(0.0..1.0).contains(&burn_in_frac) {
            return Err(Error::InvalidParameter(format!(
                "burn-in fraction must lie in [0, 1), got {burn_in_frac}"
            )));
        }
        let n = self.len();
        let kept = retained_count(n, burn_in_frac);
        let skip = n - kept;
        let samples = Matrix::from_vec(kept, self.dim, self.draws[skip * self.dim..].to_vec())?;
        let wall_time_sampling = self.iter_seconds[skip..].iter().sum();
        let mut res = summarize(
            samples,
            Timings {
                t_pre,
                wall_time_sampling,
            },
            target_ess,
        )?;
        res.event_count = event_count;
        Ok(res)
    }
}

/// Runs `n` iterations and summarizes the retained draws.
///
/// `t_pre` should cover problem preparation; the sampler's own setup time
/// is added to it.
pub fn run_chain(
    sampler: &mut dyn Sampler,
    n: usize,
    burn_in_frac: f64,
    t_pre: f64,
    rng: &mut dyn RngCore,
) -> Result<ChainResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut rec = ChainRecorder::new(sampler.dim());
    rec.extend(sampler, n, rng)?;
    rec.finish(burn_in_frac, t_pre + sampler.setup_seconds(), 0.0, sampler.event_count())
}

/// Prepares `problem` for `method`, builds the sampler and runs it.
///
/// The reported `t_pre` is all preparation time accumulated on `problem`.
pub fn sample(
    method: Method,
    problem: &mut MtnProblem,
    x0: &[f64],
    n: usize,
    burn_in_frac: f64,
    config: &SamplerConfig,
    rng: &mut dyn RngCore,
) -> Result<ChainResult> {
    problem.prepare(method.needs())?;
    let mut sampler = build_sampler(method, problem, x0, config)?;
    run_chain(sampler.as_mut(), n, burn_in_frac, problem.prep_seconds(), rng)
}
