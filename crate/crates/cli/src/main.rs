// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use trunc_gauss::benchmark::{
    csv_row, run_benchmark, BenchOptions, BenchmarkCase, CaseSpec, CellResult, Generator, CSV_HEADER,
    DEFAULT_BUDGET_SECONDS, DEFAULT_TARGET_ESS,
};
use trunc_gauss::diagnostics::MIN_SERIES_LEN;
use trunc_gauss::io::{read_problem, write_json, write_problem, write_samples_file};
use trunc_gauss::rng::stream;
use trunc_gauss::sampler::retained_count;
use trunc_gauss::{build_sampler, run_chain, Method, Metrics, SamplerConfig, DEFAULT_BURN_IN};

/// Exit code for invalid input or configuration.
const EXIT_INVALID: u8 = 2;
/// Exit code for failures inside a sampler.
const EXIT_SAMPLER: u8 = 3;
/// Exit code for problems writing output.
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "trunc-gauss", version, about = "Sample truncated multivariate normals with exact HMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples for a problem file.
    Sample(SampleArgs),
    /// Run the efficiency benchmark over generated or file-loaded cases.
    Bench(BenchArgs),
    /// Write a generated benchmark problem as JSON.
    Gen(GenArgs),
}

#[derive(Args, Default)]
struct Overrides {
    /// Integration time (fixed for harmonic, per proposal for zigzag).
    #[arg(long = "time", value_name = "T")]
    time: Option<f64>,
    /// Zigzag-NUTS base step length.
    #[arg(long = "tbase")]
    t_base: Option<f64>,
    /// Zigzag-NUTS maximum tree depth.
    #[arg(long = "max-depth")]
    max_depth: Option<usize>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value = "harmonic")]
    method: String,
    /// Total iterations, including burn-in.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of iterations discarded as burn-in.
    #[arg(long = "burn-in", default_value_t = DEFAULT_BURN_IN)]
    burn_in: f64,
    #[arg(long = "out-samples", default_value = "samples.csv")]
    out_samples: PathBuf,
    #[arg(long = "out-metrics", default_value = "metrics.json")]
    out_metrics: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct BenchArgs {
    /// Case such as `lkj:d=100`, `compound:d=400,rho=0.9`, `identity:d=10`
    /// or `file:path.json`; repeatable.
    #[arg(long = "case", required = true)]
    cases: Vec<String>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "harmonic,zigzag")]
    method: Vec<String>,
    #[arg(long = "budget-s", default_value_t = DEFAULT_BUDGET_SECONDS)]
    budget_s: f64,
    #[arg(long = "target-ess", default_value_t = DEFAULT_TARGET_ESS)]
    target_ess: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "burn-in", default_value_t = DEFAULT_BURN_IN)]
    burn_in: f64,
    #[arg(long = "out-dir", default_value = "bench-out")]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Lkj,
    Compound,
    Identity,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long)]
    d: usize,
    /// Off-diagonal correlation for `compound`.
    #[arg(long)]
    rho: Option<f64>,
    /// LKJ shape; 1 is uniform over correlation matrices.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn invalid(message: impl ToString) -> Failure {
    fail(EXIT_INVALID, message)
}

#[derive(Serialize)]
struct SampleReport<'a> {
    method: &'a str,
    seed: u64,
    dim: usize,
    n: usize,
    burn_in: f64,
    event_count: u64,
    #[serde(flatten)]
    metrics: Metrics,
}

#[derive(Serialize)]
struct CellReport<'a> {
    case: &'a str,
    d: usize,
    method: &'a str,
    status: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
}

fn sampler_config(o: &Overrides) -> Result<SamplerConfig, Failure> {
    let mut cfg = SamplerConfig::default();
    for (flag, value) in [("--time", o.time), ("--tbase", o.t_base)] {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{flag} must be positive and finite, got {v}")));
            }
        }
    }
    if o.max_depth == Some(0) {
        return Err(invalid("--max-depth must be at least 1"));
    }
    if let Some(t) = o.time {
        cfg.harmonic.randomize_time = false;
        cfg.harmonic.fixed_time = t;
    }
    cfg.zigzag.time = o.time;
    cfg.zigzag.t_base = o.t_base;
    cfg.zigzag.max_tree_depth = o.max_depth;
    Ok(cfg)
}

fn check_burn_in(b: f64) -> Result<(), Failure> {
    if !(0.0..1.0).contains(&b) {
        return Err(invalid(format!("--burn-in must lie in [0, 1), got {b}")));
    }
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<(), Failure> {
    let method: Method = args.method.parse().map_err(invalid)?;
    check_burn_in(args.burn_in)?;
    if args.n == 0 {
        return Err(invalid("--n must be at least 1"));
    }
    let kept = retained_count(args.n, args.burn_in);
    if kept < MIN_SERIES_LEN {
        return Err(invalid(format!(
            "only {kept} draws would remain after burn-in; at least {MIN_SERIES_LEN} are needed"
        )));
    }
    let config = sampler_config(&args.overrides)?;
    let (mut problem, init) = read_problem(&args.problem)
        .map_err(|e| invalid(format!("{}: {e}", args.problem.display())))?;
    let x0 = match init {
        Some(x) => x,
        None => problem.default_initial().map_err(invalid)?,
    };
    problem.prepare(method.needs()).map_err(invalid)?;
    let mut sampler = build_sampler(method, &problem, &x0, &config).map_err(invalid)?;

    let mut rng = stream(args.seed, &format!("sample/{method}"));
    log::info!("running {method} for {} iterations in d={}", args.n, problem.dim());
    let result = run_chain(sampler.as_mut(), args.n, args.burn_in, problem.prep_seconds(), &mut rng)
        .map_err(|e| fail(EXIT_SAMPLER, format!("{method} sampler failed: {e}")))?;

    write_samples_file(&args.out_samples, &result.samples).map_err(|e| fail(EXIT_IO, e))?;
    let report = SampleReport {
        method: method.name(),
        seed: args.seed,
        dim: result.dim(),
        n: args.n,
        burn_in: args.burn_in,
        event_count: result.event_count,
        metrics: result.metrics(),
    };
    write_json(&args.out_metrics, &report).map_err(|e| fail(EXIT_IO, e))?;
    log::info!("ESS_min = {:.1} over {} draws", result.ess_min, result.n_iterations);
    Ok(())
}

fn load_case(text: &str, seed: u64) -> Result<BenchmarkCase, Failure> {
    if let Some(path) = text.strip_prefix("file:") {
        let path = Path::new(path);
        let (problem, _) = read_problem(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().map_or_else(|| text.to_string(), |s| s.to_string_lossy().into_owned());
        return Ok(BenchmarkCase {
            name,
            problem,
            generator: Generator::FromFile,
            seed,
        });
    }
    let spec: CaseSpec = text.parse().map_err(invalid)?;
    spec.build(seed).map_err(|e| invalid(format!("case `{text}`: {e}")))
}

/// File-name-safe version of a case label.
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let methods = args
        .method
        .iter()
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    check_burn_in(args.burn_in)?;
    if !(args.budget_s > 0.0) {
        return Err(invalid("--budget-s must be positive"));
    }
    if !(args.target_ess > 0.0 && args.target_ess.is_finite()) {
        return Err(invalid("--target-ess must be positive and finite"));
    }
    if args.workers == 0 {
        return Err(invalid("--workers must be at least 1"));
    }
    let cases = args
        .cases
        .iter()
        .map(|c| load_case(c, args.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = BenchOptions {
        target_ess: args.target_ess,
        time_budget_s: args.budget_s,
        workers: args.workers,
        seed: args.seed,
        burn_in_frac: args.burn_in,
        sampler: sampler_config(&args.overrides)?,
    };

    fs::create_dir_all(&args.out_dir).map_err(|e| fail(EXIT_IO, e))?;
    let cells = run_benchmark(&cases, &methods, &opts);
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for (i, cell) in cells.iter().enumerate() {
        csv.push_str(&csv_row(cell));
        csv.push('\n');
        write_cell(&args.out_dir, i, cell)?;
        log::info!("{} / {}: {}", cell.case, cell.method, cell.status);
    }
    fs::write(args.out_dir.join("summary.csv"), csv).map_err(|e| fail(EXIT_IO, e))?;
    Ok(())
}

fn write_cell(dir: &Path, index: usize, cell: &CellResult) -> Result<(), Failure> {
    let report = CellReport {
        case: &cell.case,
        d: cell.dim,
        method: cell.method.name(),
        status: cell.status.to_string(),
        metrics: cell.result.as_ref().map(|r| r.metrics()),
    };
    let path = dir.join(format!("{index:03}_{}_{}.json", slug(&cell.case), cell.method));
    write_json(&path, &report).map_err(|e| fail(EXIT_IO, e))
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let spec = match args.kind {
        GenKind::Lkj => CaseSpec::Lkj { d: args.d, eta: args.eta },
        GenKind::Compound => CaseSpec::Compound {
            d: args.d,
            rho: args.rho.ok_or_else(|| invalid("--rho is required for compound"))?,
        },
        GenKind::Identity => CaseSpec::Identity { d: args.d },
    };
    let case = spec.build(args.seed).map_err(|e| invalid(format!("{spec}: {e}")))?;
    write_problem(&args.out, &case.problem, None).map_err(|e| fail(EXIT_IO, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRUNC_GAUSS_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
