//! Effective sample size, moment checks and the run-time decomposition
//! used to compare samplers:
//!
//! ```text
//! n_es   = L / ESS_min             iterations per effective sample
//! t_iter = wall_time · n_es / L    seconds per effective sample
//! t1     = t_pre + t_iter
//! t100   = t_pre + 100 · t_iter
//! ```

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Shortest series [`ess_univariate`] accepts.
pub const MIN_SERIES_LEN: usize = 10;

/// Autocovariance `γ_k = (1/L) Σ_t (x_t − x̄)(x_{t+k} − x̄)` for all lags,
/// computed by zero-padded FFT.
pub fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf[..n].iter().map(|c| c.re * scale).collect()
}

/// Effective sample size of one chain.
///
/// `ESS = L / τ` with `τ = −1 + 2 Σ_m Γ_m`, `Γ_m = ρ_{2m} + ρ_{2m+1}`,
/// truncated at the first non-positive pair and forced monotone
/// (Geyer's initial monotone sequence). The result is clipped to `(0, L]`.
pub fn ess_univariate(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(Error::InvalidParameter(format!(
            "ESS needs at least {MIN_SERIES_LEN} draws, got {n}"
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("series has non-finite values".into()));
    }
    if series.iter().all(|&x| x == series[0]) {
        return Err(Error::DegenerateSeries);
    }
    let acov = autocovariance(series);
    if !(acov[0] > 0.0) {
        return Err(Error::DegenerateSeries);
    }
    let rho = |k: usize| acov[k] / acov[0];

    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = -1.0 + 2.0 * sum;
    let len = n as f64;
    Ok(if tau <= 1.0 { len } else { len / tau })
}

/// Per-column ESS of an `n × d` sample matrix.
pub fn ess_columns(samples: &Matrix) -> Result<Vec<f64>> {
    (0..samples.cols())
        .map(|j| ess_univariate(&samples.column(j)))
        .collect()
}

/// Sample mean and its Monte Carlo standard error `sd / √ESS`.
pub fn mean_and_se(series: &[f64]) -> Result<(f64, f64)> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let ess = ess_univariate(series)?;
    Ok((mean, (var / ess).sqrt()))
}

/// Raw wall-clock inputs to [`summarize`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    /// Pre-processing seconds (factorizations, eigenvalue, whitening).
    pub t_pre: f64,
    /// Seconds spent producing the retained iterations.
    pub wall_time_sampling: f64,
}

/// A finished chain with its efficiency summary.
#[derive(Clone, Debug)]
pub struct ChainResult {
    /// Retained draws, one row per iteration.
    pub samples: Matrix,
    pub t_pre: f64,
    pub wall_time_sampling: f64,
    pub ess: Vec<f64>,
    pub ess_min: f64,
    /// Retained chain length `L`.
    pub n_iterations: usize,
    /// Iterations per effective sample, `L / ESS_min`.
    pub n_es: f64,
    /// Seconds per effective sample.
    pub t_iter: f64,
    pub t1: f64,
    pub t100: f64,
    /// Whether `ESS_min` reached the requested target.
    pub target_reached: bool,
    /// Wall bounces (harmonic) or dynamics events (zigzag) over the whole run.
    pub event_count: u64,
}

impl ChainResult {
    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            ess: self.ess.clone(),
            ess_min: self.ess_min,
            n_es: self.n_es,
            t_pre_s: self.t_pre,
            t_iter_s: self.t_iter,
            t1_s: self.t1,
            t100_s: self.t100,
            n_iterations: self.n_iterations,
        }
    }
}

/// Serialized efficiency summary of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ess: Vec<f64>,
    pub ess_min: f64,
    pub n_es: f64,
    pub t_pre_s: f64,
    pub t_iter_s: f64,
    pub t1_s: f64,
    pub t100_s: f64,
    pub n_iterations: usize,
}

/// Derives the timing decomposition from known ESS values.
pub fn decompose_times(
    n_iterations: usize,
    ess_min: f64,
    timings: Timings,
) -> (f64, f64, f64, f64) {
    let n_es = n_iterations as f64 / ess_min;
    let t_iter = timings.wall_time_sampling * n_es / n_iterations as f64;
    let t1 = timings.t_pre + t_iter;
    let t100 = timings.t_pre + 100.0 * t_iter;
    (n_es, t_iter, t1, t100)
}

/// Computes per-dimension ESS and the timing decomposition for a chain.
pub fn summarize(samples: Matrix, timings: Timings, target_ess: f64) -> Result<ChainResult> {
    let n = samples.rows();
    if n < MIN_SERIES_LEN {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_SERIES_LEN} retained draws, got {n}"
        )));
    }
    let ess = ess_columns(&samples)?;
    let ess_min = ess.iter().copied().fold(f64::INFINITY, f64::min);
    let (n_es, t_iter, t1, t100) = decompose_times(n, ess_min, timings);
    Ok(ChainResult {
        samples,
        t_pre: timings.t_pre,
        wall_time_sampling: timings.wall_time_sampling,
        ess,
        ess_min,
        n_iterations: n,
        n_es,
        t_iter,
        t1,
        t100,
        target_reached: ess_min >= target_ess,
        event_count: 0,
    })
}

/// One dimension of a [`MomentReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct MomentLine {
    pub dim: usize,
    pub sample_mean: f64,
    pub reference_mean: f64,
    pub standard_error: f64,
    /// `(sample_mean − reference_mean) / standard_error`.
    pub z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MomentReport {
    pub lines: Vec<MomentLine>,
}

impl MomentReport {
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &MomentLine> {
        self.lines.iter().filter(|l| !l.pass)
    }
}

/// Compares sample means with reference means, in units of the
/// ESS-adjusted standard error.
///
/// The standard deviation comes from the reference covariance diagonal
/// when one is supplied and from the samples otherwise.
pub fn moment_check(
    samples: &Matrix,
    reference_mean: &[f64],
    reference_cov: Option<&Matrix>,
    tolerance_se: f64,
) -> Result<MomentReport> {
    let d = samples.cols();
    if reference_mean.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: reference_mean.len(),
        });
    }
    let mut lines = Vec::with_capacity(d);
    for j in 0..d {
        let col = samples.column(j);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = match reference_cov {
            Some(c) => c[(j, j)],
            None => col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0),
        };
        let ess = ess_univariate(&col)?;
        let se = (var / ess).sqrt();
        let z = (mean - reference_mean[j]) / se;
        lines.push(MomentLine {
            dim: j,
            sample_mean: mean,
            reference_mean: reference_mean[j],
            standard_error: se,
            z,
            pass: z.abs() <= tolerance_se,
        });
    }
    Ok(MomentReport { lines })
}
