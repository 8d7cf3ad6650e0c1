//! The `contab` command line.
//!
//! Every command prints one JSON document to stdout. Errors print
//! `{"error": {...}}` and exit with 2 (bad input), 3 (unmet precondition)
//! or 4 (numerical failure). Every flag can also be set through an
//! environment variable named `CONTAB_<FLAG>`, e.g. `CONTAB_SEED=7`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::bounds::alpha_factor;
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_t_prime_direct, estimate_t_prime_simplex, DirectConfig, EstimateReport, McmcConfig, Method,
    SimplexConfig,
};
use crate::exact::{fisher_yates_total, weighted_total_exact, weighted_total_integer, DEFAULT_BUDGET};
use crate::flows::{count_flows_exact, estimate_flows, reduce_flow_problem, FlowEstimateConfig, FlowProblem};
use crate::problem::ProblemInstance;
use crate::random::RandomSource;
use crate::scaling::{DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::suites::{run_suite, Suite};

/// Enumeration budget for the optional oracle run inside `estimate`.
const ORACLE_BUDGET: u64 = 2_000_000;

#[derive(Debug, Parser)]
#[command(name = "contab", version, about = "Exact and approximate totals of weighted contingency tables")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random stream.
    #[arg(long, global = true, env = "CONTAB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, env = "CONTAB_THREADS")]
    pub threads: Option<usize>,
    /// Indented JSON.
    #[arg(long, global = true, env = "CONTAB_PRETTY")]
    pub pretty: bool,
    /// Include wall-clock timings (makes output run-dependent).
    #[arg(long, global = true, env = "CONTAB_TIMINGS")]
    pub timings: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact total by enumeration, with the Fisher–Yates total.
    Exact(ExactArgs),
    /// Estimate T′ and the bracket [T′, α·T′].
    Estimate(EstimateArgs),
    /// Count integer flows on a directed acyclic graph.
    Flows(FlowsArgs),
    /// Run a randomized self-test suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    /// Problem JSON: {"rows": [...], "cols": [...], "weights": [[...]]}.
    pub problem: PathBuf,
    /// Maximum enumeration nodes.
    #[arg(long, env = "CONTAB_BUDGET", default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Direct,
    Simplex,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Direct => Method::Direct,
            MethodArg::Simplex => Method::Simplex,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, env = "CONTAB_METHOD", default_value = "direct")]
    pub method: MethodArg,
    /// Monte Carlo samples for the direct method.
    #[arg(long, env = "CONTAB_SAMPLES", default_value_t = 10_000)]
    pub samples: u64,
    /// Simplex truncation: the δ-interior keeps at least a 1 − ε share.
    #[arg(long, env = "CONTAB_EPS", default_value_t = 0.1)]
    pub eps: f64,
    /// Explicit δ, overriding the one derived from --eps.
    #[arg(long, env = "CONTAB_DELTA")]
    pub delta: Option<f64>,
    /// Scaling tolerance.
    #[arg(long, env = "CONTAB_TOL", default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Scaling iteration cap.
    #[arg(long, env = "CONTAB_MAX_ITERS", default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Value put in place of zero weights.
    #[arg(long, env = "CONTAB_ZERO_WEIGHT")]
    pub zero_weight: Option<f64>,
    /// Sampler settings for the simplex method, as JSON or a path to JSON.
    #[arg(long, env = "CONTAB_MCMC")]
    pub mcmc: Option<String>,
    /// Write per-sample traces as CSV.
    #[arg(long, env = "CONTAB_TRACE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub problem: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Enumeration budget for the exact comparison (0 skips it).
    #[arg(long, env = "CONTAB_BUDGET", default_value_t = ORACLE_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct FlowsArgs {
    /// Graph JSON: {"vertices": [...], "edges": [["a", "b"], ...], "excess": {...}}.
    pub graph: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long, env = "CONTAB_BUDGET", default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    /// Estimate even when the exact count is feasible.
    #[arg(long, env = "CONTAB_ESTIMATE")]
    pub estimate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Scaling,
    #[value(alias = "theorem12")]
    Expectation,
    Bounds,
    #[value(alias = "lemma42")]
    Identity,
    Lipschitz,
    Flows,
    All,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum, env = "CONTAB_SUITE", default_value = "all")]
    pub suite: SuiteArg,
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn load_problem(path: &Path) -> Result<ProblemInstance> {
    ProblemInstance::from_json(&read(path)?)
}

fn load_mcmc(arg: &Option<String>) -> Result<McmcConfig> {
    match arg {
        None => Ok(McmcConfig::default()),
        Some(s) if s.trim_start().starts_with('{') => McmcConfig::from_json(s),
        Some(path) => McmcConfig::from_json(&read(Path::new(path))?),
    }
}

impl EstimatorArgs {
    fn direct(&self) -> DirectConfig {
        DirectConfig {
            samples: self.samples,
            tol: self.tol,
            max_iters: self.max_iters,
            zero_substitute: self.zero_weight,
        }
    }

    fn simplex(&self) -> Result<SimplexConfig> {
        Ok(SimplexConfig {
            epsilon: self.eps,
            delta: self.delta,
            tol: self.tol,
            max_iters: self.max_iters,
            zero_substitute: self.zero_weight,
            mcmc: load_mcmc(&self.mcmc)?,
        })
    }

    fn echo(&self) -> Value {
        json!({
            "method": self.method,
            "samples": self.samples,
            "eps": self.eps,
            "delta": self.delta,
            "tol": self.tol,
            "max_iters": self.max_iters,
            "zero_weight": self.zero_weight,
            "mcmc": load_mcmc(&self.mcmc).ok(),
        })
    }
}

/// Integer `T` as a JSON number when it is exact, else the float.
fn total_value(problem: &ProblemInstance, budget: u64) -> Result<(Value, f64, u64)> {
    let exact = weighted_total_exact(problem, budget)?;
    let value = match weighted_total_integer(problem, budget)? {
        Some(t) if t <= u64::MAX as u128 => json!(t as u64),
        _ => json!(exact.value),
    };
    Ok((value, exact.value, exact.table_count))
}

fn cmd_exact(args: &ExactArgs) -> Result<(Value, Map<String, Value>)> {
    let problem = load_problem(&args.problem)?;
    let (t, _, tables) = total_value(&problem, args.budget)?;
    let mut out = Map::new();
    out.insert("T".into(), t);
    out.insert("tables".into(), json!(tables));
    out.insert("N".into(), json!(problem.total()));
    match fisher_yates_total(&problem, args.budget) {
        Ok(fy) => {
            out.insert(
                "fisher_yates".into(),
                json!({
                    "value": fy.value(),
                    "enumeration": fy.enumeration,
                    "permanent_route": fy.permanent_route,
                    "route_gap": fy.route_gap(),
                }),
            );
        }
        Err(Error::Infeasible(_)) => {
            out.insert("fisher_yates".into(), Value::Null);
        }
        Err(e) => return Err(e),
    }
    let alpha = alpha_factor(problem.row_margins(), problem.col_margins());
    out.insert("alpha".into(), serde_json::to_value(alpha)?);
    let config = json!({ "problem": args.problem, "budget": args.budget });
    Ok((config, out))
}

fn write_trace(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    Ok(())
}

fn run_estimate(
    problem: &ProblemInstance,
    est: &EstimatorArgs,
    source: &RandomSource,
) -> Result<EstimateReport> {
    match est.method {
        MethodArg::Direct => {
            let run = estimate_t_prime_direct(problem, &est.direct(), source)?;
            if let Some(path) = &est.trace {
                let rows = run.log_sigmas.iter().enumerate().map(|(k, v)| format!("{k},{v:e}"));
                write_trace(path, "sample,log_sigma", rows)?;
            }
            Ok(run.report)
        }
        MethodArg::Simplex => {
            let report = estimate_t_prime_simplex(problem, &est.simplex()?, source)?;
            if let (Some(path), Some(d)) = (&est.trace, &report.simplex) {
                let row = format!("{},{:e},{:e},{:e}", d.stages, d.delta, d.ln_integral, d.ln_integral_stderr);
                write_trace(path, "stages,delta,ln_integral,ln_integral_stderr", std::iter::once(row))?;
            }
            Ok(report)
        }
    }
}

fn cmd_estimate(args: &EstimateArgs, seed: u64) -> Result<(Value, Map<String, Value>)> {
    let problem = load_problem(&args.problem)?;
    let source = RandomSource::new(seed);
    let report = run_estimate(&problem, &args.estimator, &source)?;
    let mut out = Map::new();
    out.insert("T_prime".into(), json!(report.t_prime));
    out.insert("bracket".into(), json!(report.t_bracket));
    out.insert("certified_interval".into(), json!(report.certified_interval()));
    if args.budget > 0 {
        match total_value(&problem, args.budget) {
            Ok((t, value, _)) => {
                out.insert(
                    "exact".into(),
                    json!({ "T": t, "in_bracket": report.brackets(value) }),
                );
            }
            Err(Error::BudgetExceeded { .. }) => {
                out.insert("exact".into(), Value::Null);
            }
            Err(e) => return Err(e),
        }
    }
    out.insert("estimate".into(), serde_json::to_value(&report)?);
    let mut config = args.estimator.echo();
    config["problem"] = json!(args.problem);
    config["budget"] = json!(args.budget);
    Ok((config, out))
}

fn cmd_flows(args: &FlowsArgs, seed: u64) -> Result<(Value, Map<String, Value>)> {
    let flow = FlowProblem::from_json(&read(&args.graph)?)?;
    let reduction = reduce_flow_problem(&flow)?;
    let mut out = Map::new();
    out.insert("connected".into(), json!(flow.is_connected()));
    out.insert(
        "reduction".into(),
        json!({
            "z": reduction.z,
            "rows": reduction.problem.row_margins(),
            "cols": reduction.problem.col_margins(),
        }),
    );
    let exact = match count_flows_exact(&flow, args.budget) {
        Ok(c) => Some(c),
        Err(Error::BudgetExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    out.insert("flows".into(), json!(exact));
    if exact.is_none() || args.estimate {
        let est = &args.estimator;
        let cfg = FlowEstimateConfig {
            method: est.method.into(),
            zero_substitute: est.zero_weight,
            sensitivity: true,
            direct: est.direct(),
            simplex: est.simplex()?,
        };
        let e = estimate_flows(&flow, &cfg, &RandomSource::new(seed))?;
        if let Some(c) = exact {
            out.insert("in_bracket".into(), json!(e.report.brackets(c as f64)));
        }
        out.insert("estimate".into(), serde_json::to_value(&e)?);
    }
    let mut config = args.estimator.echo();
    config["graph"] = json!(args.graph);
    config["budget"] = json!(args.budget);
    config["estimate"] = json!(args.estimate);
    Ok((config, out))
}

fn cmd_validate(args: &ValidateArgs, seed: u64) -> Result<(Value, Map<String, Value>)> {
    let suites: Vec<Suite> = match args.suite {
        SuiteArg::Scaling => vec![Suite::Scaling],
        SuiteArg::Expectation => vec![Suite::Expectation],
        SuiteArg::Bounds => vec![Suite::Bounds],
        SuiteArg::Identity => vec![Suite::Identity],
        SuiteArg::Lipschitz => vec![Suite::Lipschitz],
        SuiteArg::Flows => vec![Suite::Flows],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let reports: Vec<_> = suites.into_iter().map(|s| run_suite(s, seed)).collect();
    let mut out = Map::new();
    out.insert("passed".into(), json!(reports.iter().all(|r| r.passed)));
    out.insert("suites".into(), serde_json::to_value(&reports)?);
    Ok((json!({ "suite": format!("{:?}", args.suite).to_lowercase() }), out))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Exact(_) => "exact",
        Command::Estimate(_) => "estimate",
        Command::Flows(_) => "flows",
        Command::Validate(_) => "validate",
    }
}

fn error_json(e: &Error) -> Value {
    json!({
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
            "exit_code": e.exit_code(),
        }
    })
}

fn render(value: &Value, pretty: bool) -> String {
    if pretty {
        serde_json::to_string_pretty(value).expect("JSON values serialize")
    } else {
        serde_json::to_string(value).expect("JSON values serialize")
    }
}

/// Runs a parsed command; returns the exit code and the JSON document.
pub fn execute(cli: &Cli, argv: &[String]) -> (i32, String) {
    let started = Instant::now();
    let seed = cli.global.seed;
    let dispatch = || match &cli.command {
        Command::Exact(a) => cmd_exact(a),
        Command::Estimate(a) => cmd_estimate(a, seed),
        Command::Flows(a) => cmd_flows(a, seed),
        Command::Validate(a) => cmd_validate(a, seed),
    };
    let result = match cli.global.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(dispatch),
            Err(e) => Err(Error::InvalidConfig(format!("thread pool: {e}"))),
        },
        None => dispatch(),
    };
    match result {
        Ok((config, results)) => {
            let mut doc = Map::new();
            doc.insert("command".into(), json!(command_name(&cli.command)));
            doc.insert("args".into(), json!(argv));
            doc.insert("seed".into(), json!(seed));
            doc.insert("rng".into(), json!(crate::random::ALGORITHM));
            doc.insert("config".into(), config);
            doc.extend(results);
            if cli.global.timings {
                doc.insert(
                    "timings".into(),
                    json!({ "wall_seconds": started.elapsed().as_secs_f64() }),
                );
            }
            (0, render(&Value::Object(doc), cli.global.pretty))
        }
        Err(e) => (e.exit_code(), render(&error_json(&e), cli.global.pretty)),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Help and version requests return exit code 0 with their text.
pub fn run<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match Cli::try_parse_from(&args) {
        Ok(cli) => {
            let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
            execute(&cli, &argv)
        }
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => (0, e.to_string()),
                _ => {
                    let v = json!({
                        "error": { "kind": "usage", "message": e.to_string(), "exit_code": 2 }
                    });
                    (2, render(&v, false))
                }
            }
        }
    }
}
