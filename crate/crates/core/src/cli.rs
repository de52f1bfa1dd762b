//! The `bfpool` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid arguments or model
//! document, 3 unstable model, 4 size or oracle guard exceeded, 5 oracle
//! comparison outside tolerance.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::document::ModelDocument;
use crate::error::Error;
use crate::generic::{performance_report_with, SolverConfig};
use crate::model::{PoolModel, Stability};
use crate::oracle::{sequence_measure_check, simulate_oi_queue, truncated_stationary_metrics};
use crate::report::{analyze, SolverChoice};
use crate::structured::DEFAULT_MAX_EXPANSION;
use crate::sweep::{compare, sweep, Range, SweepParameter, SweepTable};

pub const EXIT_IO: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_GUARD: i32 = 4;
pub const EXIT_TOLERANCE: i32 = 5;

/// Discrepancy allowed between the sequence-state measure and `Φ(x)λ^x`.
pub const SEQUENCE_TOLERANCE: f64 = 1e-12;
/// Relative rounding slack granted to the solver when comparing against a
/// truncation bracket.
pub const SOLVER_SLACK: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "bfpool",
    version,
    about = "Performance metrics for server pools under balanced fairness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Solver {
    Auto,
    Generic,
    Structured,
}

impl From<Solver> for SolverChoice {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Auto => SolverChoice::Auto,
            Solver::Generic => SolverChoice::Generic,
            Solver::Structured => SolverChoice::Structured,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum OracleKind {
    Truncation,
    Simulation,
    Sequence,
}

#[derive(Debug, Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute every metric of a model document.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        solver: Solver,
        /// Include the wall-clock solve time in the report.
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Sweep one parameter of a model document.
    #[command(group = clap::ArgGroup::new("param").required(true))]
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, group = "param", value_name = "START:STOP:STEP")]
        rho: Option<Range>,
        #[arg(long, group = "param", value_name = "START:STOP:STEP")]
        d: Option<Range>,
        #[arg(long = "k", group = "param", value_name = "START:STOP:STEP")]
        k: Option<Range>,
        /// Share of the first job type.
        #[arg(long, group = "param", value_name = "START:STOP:STEP")]
        mix: Option<Range>,
        #[arg(long, value_enum, default_value = "auto")]
        solver: Solver,
        /// Add a service-rate column per class.
        #[arg(long)]
        per_class: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[command(flatten)]
        out: Output,
    },
    /// Compare global, ring and line assignments of d servers out of K.
    Compare {
        #[arg(long = "k")]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, value_name = "START:STOP:STEP")]
        rho: Range,
        /// Add the service rate of every line class.
        #[arg(long)]
        per_class: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[command(flatten)]
        out: Output,
    },
    /// Check the solver against an independent oracle.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        oracle: OracleKind,
        /// Truncation level, or the longest enumerated sequence.
        #[arg(long)]
        nmax: Option<usize>,
        /// Simulated events, warmup included.
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Decide the stability condition by subset enumeration.
    Stability {
        #[arg(long)]
        model: PathBuf,
        /// Required margin, as a fraction of the total service rate.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[command(flatten)]
        out: Output,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::UnstableModel { .. } | Error::Overloaded(_) => EXIT_UNSTABLE,
            Error::TooManyServers { .. }
            | Error::ExpansionTooLarge { .. }
            | Error::TooManyGroups { .. }
            | Error::TailNotGeometric { .. }
            | Error::EnumerationTooLarge(_) => EXIT_GUARD,
            _ => EXIT_SCHEMA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

/// One solver/oracle comparison of a `check` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub solver: Option<f64>,
    pub oracle: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub within: bool,
    /// Whether the overall verdict depends on this comparison.
    pub required: bool,
}

impl Comparison {
    fn new(
        metric: &str,
        solver: Option<f64>,
        oracle: f64,
        discrepancy: f64,
        tolerance: f64,
    ) -> Self {
        Comparison {
            metric: metric.into(),
            solver,
            oracle,
            discrepancy,
            tolerance,
            within: discrepancy <= tolerance,
            required: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub oracle: String,
    pub pass: bool,
    pub comparisons: Vec<Comparison>,
}

fn read_document(path: &Path) -> Result<ModelDocument, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    ModelDocument::from_json(&text).map_err(|e| Failure {
        code: EXIT_SCHEMA,
        message: format!("{}: {e}", path.display()),
    })
}

fn explicit_model(doc: &ModelDocument) -> Result<PoolModel, Failure> {
    Ok(match doc {
        ModelDocument::Explicit(raw) => PoolModel::validate(raw)?,
        ModelDocument::Structured(s) => s.expand(DEFAULT_MAX_EXPANSION)?,
    })
}

fn emit(out: &Output, text: &str) -> Result<(), Failure> {
    match &out.output {
        Some(path) => std::fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure {
                    code: EXIT_IO,
                    message: e.to_string(),
                })
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn emit_table(out: &Output, table: &SweepTable, format: Format) -> Result<(), Failure> {
    let text = match format {
        Format::Json => to_json(table),
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf).expect("writing to memory");
            String::from_utf8(buf).expect("csv output is utf-8")
        }
    };
    emit(out, &text)
}

fn check(
    doc: &ModelDocument,
    oracle: OracleKind,
    nmax: Option<usize>,
    events: u64,
    seed: u64,
) -> Result<CheckReport, Failure> {
    let model = explicit_model(doc)?;
    let mut comparisons = Vec::new();
    match oracle {
        OracleKind::Truncation => {
            let exact = performance_report_with(&model, SolverConfig::from_env())?;
            let t = truncated_stationary_metrics(&model, nmax.unwrap_or(60))?;
            for (name, solver, est) in [("psi", exact.psi, t.psi), ("L", exact.l_total, t.l_total)]
            {
                comparisons.push(Comparison::new(
                    name,
                    Some(solver),
                    est.value,
                    (solver - est.value).abs(),
                    est.error_bound + SOLVER_SLACK * solver.abs(),
                ));
            }
        }
        OracleKind::Simulation => {
            let exact = performance_report_with(&model, SolverConfig::from_env())?;
            let sim = simulate_oi_queue(&model, events, events / 10, seed)?;
            comparisons.push(Comparison::new(
                "L",
                Some(exact.l_total),
                sim.l_total.mean,
                (exact.l_total - sim.l_total.mean).abs(),
                sim.l_total.half_width_95,
            ));
            let mut psi = Comparison::new(
                "psi",
                Some(exact.psi),
                sim.psi.mean,
                (exact.psi - sim.psi.mean).abs(),
                sim.psi.half_width_95,
            );
            psi.required = false;
            comparisons.push(psi);
        }
        OracleKind::Sequence => {
            let discrepancy = sequence_measure_check(&model, nmax.unwrap_or(4))?;
            comparisons.push(Comparison::new(
                "sequence_measure",
                None,
                discrepancy,
                discrepancy,
                SEQUENCE_TOLERANCE,
            ));
        }
    }
    let pass = comparisons.iter().filter(|c| c.required).all(|c| c.within);
    let oracle = serde_json::to_value(oracle).expect("serializes");
    Ok(CheckReport {
        oracle: oracle.as_str().unwrap_or_default().into(),
        pass,
        comparisons,
    })
}

fn execute(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Analyze {
            model,
            solver,
            timing,
            out,
        } => {
            let doc = read_document(&model)?;
            let start = Instant::now();
            let mut report = analyze(&doc, solver.into(), SolverConfig::from_env())?;
            if timing {
                report.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(&out, &to_json(&report))?;
            Ok(0)
        }
        Command::Sweep {
            model,
            rho,
            d,
            k,
            mix,
            solver,
            per_class,
            format,
            out,
        } => {
            let doc = read_document(&model)?;
            let (param, range) = match (rho, d, k, mix) {
                (Some(r), _, _, _) => (SweepParameter::Rho, r),
                (_, Some(r), _, _) => (SweepParameter::D, r),
                (_, _, Some(r), _) => (SweepParameter::K, r),
                (_, _, _, Some(r)) => (SweepParameter::Mix, r),
                _ => {
                    return Err(Failure {
                        code: EXIT_SCHEMA,
                        message: "give one of --rho, --d, --k, --mix".into(),
                    })
                }
            };
            let table = sweep(
                &doc,
                param,
                &range,
                solver.into(),
                per_class,
                SolverConfig::from_env(),
            )?;
            emit_table(&out, &table, format)?;
            Ok(0)
        }
        Command::Compare {
            k,
            d,
            rho,
            per_class,
            format,
            out,
        } => {
            let table = compare(k, d, &rho, per_class)?;
            emit_table(&out, &table, format)?;
            Ok(0)
        }
        Command::Check {
            model,
            oracle,
            nmax,
            events,
            seed,
            out,
        } => {
            let doc = read_document(&model)?;
            let report = check(&doc, oracle, nmax, events, seed)?;
            emit(&out, &to_json(&report))?;
            Ok(if report.pass { 0 } else { EXIT_TOLERANCE })
        }
        Command::Stability { model, eps, out } => {
            let doc = read_document(&model)?;
            let pool = explicit_model(&doc)?;
            let verdict = pool.stability_check(eps, SolverConfig::from_env().max_servers)?;
            emit(&out, &to_json(&verdict))?;
            Ok(match verdict {
                Stability::Stable => 0,
                Stability::Unstable { .. } => EXIT_UNSTABLE,
            })
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error() {
        assert_eq!(
            Failure::from(Error::UnstableModel { witness: vec![1] }).code,
            EXIT_UNSTABLE
        );
        assert_eq!(
            Failure::from(Error::EnumerationTooLarge("x".into())).code,
            EXIT_GUARD
        );
        assert_eq!(
            Failure::from(Error::EmptyServerSet { class: 1 }).code,
            EXIT_SCHEMA
        );
    }

    #[test]
    fn argument_errors() {
        assert_eq!(run(["bfpool", "analyze"]), 2);
        assert_eq!(
            run(["bfpool", "sweep", "--model", "m.json", "--rho", "0:1:0.1", "--d", "1"]),
            2
        );
        assert_eq!(
            run([
                "bfpool",
                "compare",
                "--k",
                "5",
                "--d",
                "2",
                "--rho",
                "0.5:0.1:0.1"
            ]),
            2
        );
    }

    #[test]
    fn missing_file_is_io_failure() {
        assert_eq!(
            run(["bfpool", "analyze", "--model", "/nonexistent/model.json"]),
            EXIT_IO
        );
    }
}
