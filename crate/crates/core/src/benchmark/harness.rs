//! Head-to-head efficiency runs over a table of (case, method) cells.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::diagnostics::ChainResult;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::MtnProblem;
use crate::rng::{cell_stream, stream};
use crate::sampler::{build_sampler, ChainRecorder, Method, SamplerConfig, DEFAULT_BURN_IN};

use super::generators::{gen_compound_symmetric, gen_lkj, positive_orthant_case};

pub const DEFAULT_TARGET_ESS: f64 = 100.0;
pub const DEFAULT_BUDGET_SECONDS: f64 = 3600.0;
/// Iterations in the first batch; each later batch doubles the chain.
pub const INITIAL_ITERATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Lkj,
    CompoundSymmetric,
    Identity,
    FromFile,
}

/// One problem of a benchmark table.
#[derive(Clone, Debug)]
pub struct BenchmarkCase {
    pub name: String,
    pub problem: MtnProblem,
    pub generator: Generator,
    pub seed: u64,
}

impl BenchmarkCase {
    pub fn dim(&self) -> usize {
        self.problem.dim()
    }
}

/// A generated case description such as `lkj:d=100` or
/// `compound:d=400,rho=0.9`.
#[derive(Clone, Debug, PartialEq)]
pub enum CaseSpec {
    Lkj { d: usize, eta: f64 },
    Compound { d: usize, rho: f64 },
    Identity { d: usize },
}

impl CaseSpec {
    /// Builds the zero-mean positive-orthant problem this spec describes.
    pub fn build(&self, seed: u64) -> Result<BenchmarkCase> {
        let (cov, generator) = match *self {
            CaseSpec::Lkj { d, eta } => {
                let mut rng = stream(seed, &format!("gen/lkj/d{d}"));
                (gen_lkj(d, eta, &mut rng)?, Generator::Lkj)
            }
            CaseSpec::Compound { d, rho } => (gen_compound_symmetric(d, rho)?, Generator::CompoundSymmetric),
            CaseSpec::Identity { d } => {
                if d == 0 {
                    return Err(Error::InvalidParameter("dimension must be at least 1".into()));
                }
                (Matrix::identity(d), Generator::Identity)
            }
        };
        let d = cov.rows();
        Ok(BenchmarkCase {
            name: self.to_string(),
            problem: positive_orthant_case(cov, vec![0.0; d])?,
            generator,
            seed,
        })
    }
}

impl fmt::Display for CaseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseSpec::Lkj { d, eta } if *eta == 1.0 => write!(f, "lkj:d={d}"),
            CaseSpec::Lkj { d, eta } => write!(f, "lkj:d={d},eta={eta}"),
            CaseSpec::Compound { d, rho } => write!(f, "compound:d={d},rho={rho}"),
            CaseSpec::Identity { d } => write!(f, "identity:d={d}"),
        }
    }
}

impl FromStr for CaseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidParameter(format!("case `{s}`: {msg}"));
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let (mut d, mut eta, mut rho) = (None, 1.0, None);
        for kv in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{kv}`")))?;
            let num = || v.parse::<f64>().map_err(|_| bad(format!("`{k}` is not a number")));
            match k.trim() {
                "d" => d = Some(v.parse::<usize>().map_err(|_| bad("`d` must be a positive integer".into()))?),
                "eta" => eta = num()?,
                "rho" => rho = Some(num()?),
                other => return Err(bad(format!("unknown parameter `{other}`"))),
            }
        }
        let d = d.ok_or_else(|| bad("missing `d`".into()))?;
        match kind {
            "lkj" => Ok(CaseSpec::Lkj { d, eta }),
            "compound" => Ok(CaseSpec::Compound {
                d,
                rho: rho.ok_or_else(|| bad("missing `rho`".into()))?,
            }),
            "identity" => Ok(CaseSpec::Identity { d }),
            other => Err(bad(format!("unknown generator `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub target_ess: f64,
    /// Wall-clock limit per cell, including pre-processing.
    pub time_budget_s: f64,
    pub workers: usize,
    pub seed: u64,
    pub burn_in_frac: f64,
    pub sampler: SamplerConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            target_ess: DEFAULT_TARGET_ESS,
            time_budget_s: DEFAULT_BUDGET_SECONDS,
            workers: 1,
            seed: 0,
            burn_in_frac: DEFAULT_BURN_IN,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Finished,
    /// Budget ran out before the target ESS was reached.
    DidNotFinish,
    Failed(String),
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStatus::Finished => f.write_str("ok"),
            CellStatus::DidNotFinish => f.write_str("DNF"),
            CellStatus::Failed(msg) => write!(f, "error: {msg}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub case: String,
    pub dim: usize,
    pub method: Method,
    pub status: CellStatus,
    /// Summary of the longest chain run; absent when it was too short.
    pub result: Option<ChainResult>,
}

/// Runs every method on every case.
///
/// Each cell prepares a fresh copy of its problem, then samples in doubling
/// batches until `ESS_min` reaches the target or the budget runs out. Cell
/// failures are recorded in the table rather than aborting the run. Rows come
/// back in case-major order regardless of the worker count.
pub fn run_benchmark(cases: &[BenchmarkCase], methods: &[Method], opts: &BenchOptions) -> Vec<CellResult> {
    let cells: Vec<(usize, usize)> = (0..cases.len())
        .flat_map(|c| (0..methods.len()).map(move |m| (c, m)))
        .collect();
    let results: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let workers = opts.workers.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(c, m)) = cells.get(k) else { break };
                let cell = run_cell(&cases[c], c, methods[m], m, opts);
                results.lock().expect("result table poisoned")[k] = Some(cell);
            });
        }
    });
    results
        .into_inner()
        .expect("result table poisoned")
        .into_iter()
        .map(|r| r.expect("every cell is filled"))
        .collect()
}

fn run_cell(case: &BenchmarkCase, case_idx: usize, method: Method, method_idx: usize, opts: &BenchOptions) -> CellResult {
    let (status, result) = match sample_cell(case, case_idx, method, method_idx, opts) {
        Ok((status, result)) => (status, result),
        Err(e) => {
            log::warn!("{} / {method}: {e}", case.name);
            (CellStatus::Failed(e.to_string()), None)
        }
    };
    CellResult {
        case: case.name.clone(),
        dim: case.dim(),
        method,
        status,
        result,
    }
}

fn sample_cell(
    case: &BenchmarkCase,
    case_idx: usize,
    method: Method,
    method_idx: usize,
    opts: &BenchOptions,
) -> Result<(CellStatus, Option<ChainResult>)> {
    let start = Instant::now();
    let mut problem = case.problem.clone();
    problem.prepare(method.needs())?;
    let x0 = problem.default_initial()?;
    let mut sampler = build_sampler(method, &problem, &x0, &opts.sampler)?;
    let t_pre = problem.prep_seconds() + sampler.setup_seconds();
    let mut rng = cell_stream(opts.seed, case_idx, method_idx);

    let mut rec = ChainRecorder::new(problem.dim());
    let mut last = None;
    let mut batch = INITIAL_ITERATIONS;
    loop {
        let mut out_of_time = false;
        for _ in 0..batch {
            if start.elapsed().as_secs_f64() > opts.time_budget_s {
                out_of_time = true;
                break;
            }
            rec.extend(sampler.as_mut(), 1, &mut rng)?;
        }
        match rec.finish(opts.burn_in_frac, t_pre, opts.target_ess, sampler.event_count()) {
            Ok(res) => {
                let done = res.target_reached;
                last = Some(res);
                if done {
                    return Ok((CellStatus::Finished, last));
                }
            }
            // Too few retained draws or a stuck coordinate: keep sampling.
            Err(Error::InvalidParameter(_) | Error::DegenerateSeries) => {}
            Err(e) => return Err(e),
        }
        if out_of_time {
            return Ok((CellStatus::DidNotFinish, last));
        }
        batch = rec.len();
    }
}

/// Summary table header.
pub const CSV_HEADER: &str = "case,d,method,t_pre_s,t_iter_s,t1_s,t100_s,status";

/// One summary row; timing fields are empty when no chain summary exists.
pub fn csv_row(cell: &CellResult) -> String {
    let times = match &cell.result {
        Some(r) => format!("{},{},{},{}", r.t_pre, r.t_iter, r.t1, r.t100),
        None => ",,,".to_string(),
    };
    let status = cell.status.to_string().replace([',', '\n'], ";");
    format!("{},{},{},{},{}", cell.case, cell.dim, cell.method, times, status)
}
