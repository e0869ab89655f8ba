//! Command-line front end.
//!
//! Exit codes: 0 success, 1 computational or file error, 2 usage error,
//! 3 when `verify` finishes with a failing suite.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::commutator::{self, RhoEstimate, RhoMethod, MIN_SEQUENCE_LEN};
use crate::error::Error;
use crate::growth::{self, DEFAULT_SAMPLES_PER_CIRCLE, MIN_COEFFICIENTS};
use crate::holo::{self, FunctionSpec, DEFAULT_NODES, MIN_NODES};
use crate::io;
use crate::matrix::{spectral_radius, ComplexMatrix};
use crate::suites::{self, Suite, TrialConfig, DEFAULT_SEQUENCE_LEN};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SUITE_FAILURE: i32 = 3;

/// Thread cap for the rayon pool; unset or 0 means one per core.
pub const THREADS_ENV: &str = "SPECDIST_THREADS";

#[derive(Parser, Debug)]
#[command(name = "specdist", version, about = "Spectral semidistance, growth and functional calculus on complex matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct PairArgs {
    /// Matrix file for a
    #[arg(long)]
    a: PathBuf,
    /// Matrix file for b
    #[arg(long)]
    b: PathBuf,
    /// Commutator sequence length
    #[arg(long, default_value_t = DEFAULT_SEQUENCE_LEN)]
    n: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// rho(a, b) from the commutator sequence
    Rho {
        #[command(flatten)]
        pair: PairArgs,
        /// Print the full report (sequence and oracle estimates)
        #[arg(long)]
        detail: bool,
    },
    /// d_rho(a, b) = max(rho(a, b), rho(b, a))
    Drho {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        detail: bool,
    },
    /// Decide quasinilpotent equivalence of a and b
    Equiv {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Order and type of e^{la} e^{-lb} by coefficients and by disk sampling
    Growth {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Number of Taylor coefficients
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Samples per circle for the disk route
        #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_CIRCLE)]
        samples: usize,
    },
    /// f(a) by contour quadrature
    Funcalc {
        #[arg(long)]
        a: PathBuf,
        /// exp | log[:angle] | poly:c0,c1,... | rational:plus | rational:minus | pow:k
        #[arg(long)]
        f: FunctionSpec,
        #[arg(long)]
        out: PathBuf,
        /// Quadrature nodes per circle
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
    },
    /// Riesz idempotents of a and the quasinilpotent remainder
    Riesz {
        #[arg(long)]
        a: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Absolute eigenvalue clustering tolerance (default scales with ||a||)
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run theorem suites and write report.json and summary.csv
    Verify {
        /// all, or a comma-separated list of suite names
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Commutator sequence length used inside the suites
        #[arg(long, default_value_t = DEFAULT_SEQUENCE_LEN)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Compute(Error),
    SuiteFailure(Vec<String>),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Compute(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Serialize)]
struct RhoLine {
    value: f64,
    method: RhoMethod,
    converged: bool,
}

impl From<&RhoEstimate> for RhoLine {
    fn from(e: &RhoEstimate) -> Self {
        RhoLine {
            value: e.value,
            method: e.method,
            converged: e.converged,
        }
    }
}

#[derive(Serialize)]
struct EquivLine {
    equivalent: bool,
    conclusive: bool,
    tolerance: f64,
    value: f64,
    method: RhoMethod,
    converged: bool,
}

fn load(path: &Path) -> CliResult<ComplexMatrix> {
    Ok(io::parse_matrix(path)?)
}

fn load_pair(pair: &PairArgs) -> CliResult<(ComplexMatrix, ComplexMatrix)> {
    if pair.n < MIN_SEQUENCE_LEN {
        return Err(usage(format!("--n must be at least {MIN_SEQUENCE_LEN}")));
    }
    Ok((load(&pair.a)?, load(&pair.b)?))
}

fn parse_suites(s: &str) -> CliResult<Vec<Suite>> {
    if s == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim) {
        let suite: Suite = name.parse().map_err(|e: Error| usage(e.to_string()))?;
        if !out.contains(&suite) {
            out.push(suite);
        }
    }
    Ok(out)
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Rho { pair, detail } => {
            let (a, b) = load_pair(&pair)?;
            let report = commutator::rho(&a, &b, pair.n)?;
            if detail {
                io::print_line(&io::to_json(&report, true)?)?;
            } else {
                io::print_line(&io::to_json(&RhoLine::from(&report.estimate), false)?)?;
            }
        }
        Command::Drho { pair, detail } => {
            let (a, b) = load_pair(&pair)?;
            let report = commutator::d_rho(&a, &b, pair.n)?;
            if detail {
                io::print_line(&io::to_json(&report, true)?)?;
            } else {
                io::print_line(&io::to_json(&RhoLine::from(&report.estimate), false)?)?;
            }
        }
        Command::Equiv { pair, tol } => {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(usage("--tol must be positive"));
            }
            let (a, b) = load_pair(&pair)?;
            let v = commutator::is_quasinilpotent_equivalent(&a, &b, pair.n, tol)?;
            let e = &v.distance.estimate;
            let line = EquivLine {
                equivalent: v.equivalent,
                conclusive: v.conclusive,
                tolerance: v.tolerance,
                value: e.value,
                method: e.method,
                converged: e.converged,
            };
            io::print_line(&io::to_json(&line, false)?)?;
        }
        Command::Growth { a, b, n, samples } => {
            if n < MIN_COEFFICIENTS {
                return Err(usage(format!("--n must be at least {MIN_COEFFICIENTS}")));
            }
            if samples < 32 {
                return Err(usage("--samples must be at least 32"));
            }
            let (a, b) = (load(&a)?, load(&b)?);
            let coefficients = growth::order_type_from_coefficients(&growth::coefficient_lognorms(&a, &b, n)?)?;
            let disk = growth::order_type_from_disk_sampling(&a, &b, &growth::default_radii(&a, &b), samples)?;
            #[derive(Serialize)]
            struct Out {
                coefficients: growth::GrowthEstimate,
                disk: growth::GrowthEstimate,
            }
            io::print_line(&io::to_json(&Out { coefficients, disk }, true)?)?;
        }
        Command::Funcalc { a, f, out, nodes } => {
            if nodes < MIN_NODES {
                return Err(usage(format!("--nodes must be at least {MIN_NODES}")));
            }
            let a = load(&a)?;
            let contour = holo::auto_contour(&f, &a)?.with_nodes(nodes);
            let fa = holo::holo_apply(&f, &a, &contour)?;
            io::write_matrix(&fa, &out)?;
            #[derive(Serialize)]
            struct CircleOut {
                center: [f64; 2],
                radius: f64,
                nodes: usize,
            }
            #[derive(Serialize)]
            struct Out {
                function: String,
                out: String,
                circles: Vec<CircleOut>,
            }
            let circles = contour
                .circles
                .iter()
                .map(|c| CircleOut {
                    center: [c.center.re, c.center.im],
                    radius: c.radius,
                    nodes: c.nodes,
                })
                .collect();
            let line = Out {
                function: f.to_string(),
                out: out.display().to_string(),
                circles,
            };
            io::print_line(&io::to_json(&line, false)?)?;
        }
        Command::Riesz { a, out, tol } => {
            if let Some(t) = tol {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(usage("--tol must be positive"));
                }
            }
            let a = load(&a)?;
            let dec = match tol {
                Some(t) => holo::riesz_idempotents(&a, t)?,
                None => holo::riesz_idempotents_default(&a)?,
            };
            #[derive(Serialize)]
            struct ClusterOut {
                eigenvalue: [f64; 2],
                multiplicity: usize,
                file: String,
            }
            #[derive(Serialize)]
            struct Out {
                clusters: Vec<ClusterOut>,
                remainder: String,
                remainder_spectral_radius: f64,
                residuals: holo::IdempotentResiduals,
            }
            let mut clusters = Vec::with_capacity(dec.clusters.len());
            for (k, c) in dec.clusters.iter().enumerate() {
                let path = out.join(format!("idempotent_{k}.json"));
                io::write_matrix(&c.idempotent, &path)?;
                clusters.push(ClusterOut {
                    eigenvalue: [c.eigenvalue.re, c.eigenvalue.im],
                    multiplicity: c.multiplicity,
                    file: path.display().to_string(),
                });
            }
            let rpath = out.join("remainder.json");
            io::write_matrix(&dec.remainder, &rpath)?;
            let line = Out {
                clusters,
                remainder: rpath.display().to_string(),
                remainder_spectral_radius: spectral_radius(&dec.remainder)?,
                residuals: dec.residuals(&a),
            };
            io::print_line(&io::to_json(&line, true)?)?;
        }
        Command::Verify {
            suite,
            trials,
            dim,
            seed,
            n,
            out,
        } => {
            let list = parse_suites(&suite)?;
            let mut config = TrialConfig::new(list[0], dim, trials, seed);
            config.len = n;
            config.validate().map_err(|e| usage(e.to_string()))?;
            let runs = suites::run_suites(&config, &list)?;
            let (report, csv) = io::write_verify_outputs(&out, &runs)?;
            let summaries: Vec<_> = runs.iter().map(|r| r.summary.clone()).collect();
            print!("{}", io::summary_csv(&summaries));
            eprintln!("wrote {} and {}", report.display(), csv.display());
            let failed: Vec<String> = runs
                .iter()
                .filter(|r| !r.summary.passed())
                .map(|r| r.summary.suite.to_string())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::SuiteFailure(failed));
            }
        }
    }
    Ok(())
}

fn thread_count() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("{THREADS_ENV} must be a non-negative integer, got '{s}'"))),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(usage(format!("{THREADS_ENV}: {e}"))),
    }
}

fn run_parsed(cli: Cli) -> CliResult<()> {
    let threads = thread_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(format!("cannot build thread pool: {e}")))?;
    pool.install(|| execute(cli.command))
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("specdist: usage error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Compute(Error::MatrixFile(e))) => {
            eprintln!("specdist: error[{}]: {e}", e.code());
            EXIT_COMPUTE
        }
        Err(CliError::Compute(e)) => {
            eprintln!("specdist: error: {e}");
            EXIT_COMPUTE
        }
        Err(CliError::SuiteFailure(names)) => {
            eprintln!("specdist: failing suites: {}", names.join(", "));
            EXIT_SUITE_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_cli(["specdist", "bogus"]), EXIT_USAGE);
        assert_eq!(run_cli(["specdist", "rho", "--a", "x.json"]), EXIT_USAGE);
        assert_eq!(run_cli(["specdist", "funcalc", "--a", "x", "--f", "sin", "--out", "y"]), EXIT_USAGE);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_cli(["specdist", "verify", "--suite", "nope", "--out", out]), EXIT_USAGE);
        assert_eq!(run_cli(["specdist", "verify", "--dim", "40", "--out", out]), EXIT_USAGE);
    }

    #[test]
    fn suite_lists() {
        assert_eq!(parse_suites("all").unwrap().len(), Suite::ALL.len());
        assert_eq!(parse_suites("fct, gelfand,fct").unwrap(), vec![Suite::Fct, Suite::Gelfand]);
    }
}
