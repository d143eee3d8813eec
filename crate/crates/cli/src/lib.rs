//! The `pgv` command: check, run and graph Priority GV programs.
//!
//! Results go to standard output (or the `--output` file) and diagnostics to
//! standard error. Exit codes are listed in [`exit`].

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use priority_sesh::graded::{DeadlockPolicy, RunError};
use priority_sesh::pgv::{comm_graph, compile, parse, EvalError, Term};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const TYPE_ERROR: i32 = 1;
    pub const PARSE_ERROR: i32 = 2;
    pub const IO_ERROR: i32 = 3;
    pub const DEADLOCK: i32 = 10;
    pub const CANCELLED: i32 = 11;
    /// Any other failure while running: a thread panicked, an endpoint
    /// escaped the run, or a runtime protocol check failed.
    pub const RUNTIME_ERROR: i32 = 12;
}

#[derive(Debug, Parser)]
#[command(name = "pgv", version, about = "Check, run and graph Priority GV programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Typecheck a program and print its type and bounds.
    Check(Options),
    /// Typecheck and run a program and print its value.
    Run(Options),
    /// Print the communication graph of a program in DOT.
    Graph(Options),
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// The program to read.
    pub path: PathBuf,
    /// Report priority violations as warnings instead of errors.
    #[arg(long)]
    pub no_priority_check: bool,
    /// Give up on a run after this many milliseconds.
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    pub timeout: u64,
    /// Write the result here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// What a command produced.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Report {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Report {
    fn fail(code: i32, message: impl std::fmt::Display) -> Self {
        Report { code, stdout: String::new(), stderr: format!("error: {message}\n") }
    }
}

fn load(opts: &Options) -> Result<Term, Report> {
    let src = fs::read_to_string(&opts.path)
        .map_err(|e| Report::fail(exit::IO_ERROR, format!("cannot read {}: {e}", opts.path.display())))?;
    parse(&src).map_err(|e| Report::fail(exit::PARSE_ERROR, e))
}

fn warnings(violations: &[priority_sesh::pgv::TypeError]) -> String {
    violations.iter().map(|v| format!("warning: {v}\n")).collect()
}

fn check(opts: &Options) -> Result<Report, Report> {
    let term = load(opts)?;
    let compiled = compile(&term, !opts.no_priority_check).map_err(eval_failure)?;
    Ok(Report {
        code: exit::OK,
        stdout: format!("OK : {}\n", compiled.checked.typed),
        stderr: warnings(&compiled.checked.violations),
    })
}

fn run(opts: &Options) -> Result<Report, Report> {
    let term = load(opts)?;
    let compiled = compile(&term, !opts.no_priority_check).map_err(eval_failure)?;
    let stderr = warnings(&compiled.checked.violations);
    let policy = DeadlockPolicy { precise: true, timeout: Duration::from_millis(opts.timeout) };
    match priority_sesh::graded::run_sesh(compiled.computation, policy) {
        Ok(v) => Ok(Report { code: exit::OK, stdout: format!("{v}\n"), stderr }),
        Err(e) => {
            let mut r = eval_failure(EvalError::Run(e));
            r.stderr.insert_str(0, &stderr);
            Err(r)
        }
    }
}

fn graph(opts: &Options) -> Result<Report, Report> {
    let term = load(opts)?;
    let compiled = compile(&term, !opts.no_priority_check).map_err(eval_failure)?;
    let g = comm_graph(&compiled.checked.typed);
    Ok(Report { code: exit::OK, stdout: g.to_dot(), stderr: warnings(&compiled.checked.violations) })
}

fn eval_failure(e: EvalError) -> Report {
    let code = match &e {
        EvalError::Type(_) => exit::TYPE_ERROR,
        EvalError::Run(RunError::Deadlock(_)) => exit::DEADLOCK,
        EvalError::Run(RunError::Failed(f)) if f.is_cancellation() => exit::CANCELLED,
        EvalError::Translate(_) | EvalError::Run(_) => exit::RUNTIME_ERROR,
    };
    Report::fail(code, e)
}

/// Runs a command, writing its result to `--output` if given.
pub fn execute(command: &Command) -> Report {
    let (opts, result) = match command {
        Command::Check(o) => (o, check(o)),
        Command::Run(o) => (o, run(o)),
        Command::Graph(o) => (o, graph(o)),
    };
    let mut report = result.unwrap_or_else(|r| r);
    if let Some(path) = &opts.output {
        if let Err(e) = fs::write(path, &report.stdout) {
            return Report::fail(exit::IO_ERROR, format!("cannot write {}: {e}", path.display()));
        }
        report.stdout.clear();
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(path: PathBuf) -> Options {
        Options { path, no_priority_check: false, timeout: 5000, output: None }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let r = execute(&Command::Check(opts("/nonexistent/x.pgv".into())));
        assert_eq!(r.code, exit::IO_ERROR);
        assert!(r.stdout.is_empty());
        assert!(r.stderr.starts_with("error: cannot read"));
    }

    #[test]
    fn timeout_must_be_positive() {
        assert!(Cli::try_parse_from(["pgv", "run", "x.pgv", "--timeout", "0"]).is_err());
        let cli = Cli::try_parse_from(["pgv", "run", "x.pgv", "--timeout", "1"]).unwrap();
        match cli.command {
            Command::Run(o) => assert_eq!(o.timeout, 1),
            other => panic!("unexpected {other:?}"),
        }
        let cli = Cli::try_parse_from(["pgv", "graph", "x.pgv"]).unwrap();
        match cli.command {
            Command::Graph(o) => {
                assert_eq!(o.timeout, 5000);
                assert!(!o.no_priority_check);
                assert!(o.output.is_none());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn output_file_receives_the_result() {
        let dir = std::env::temp_dir().join(format!("pgv-cli-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let src = dir.join("p.pgv");
        let out = dir.join("out.txt");
        fs::write(&src, "(\\x: Int. x * 2) 21").unwrap();
        let mut o = opts(src);
        o.output = Some(out.clone());
        let r = execute(&Command::Run(o));
        assert_eq!(r.code, exit::OK);
        assert!(r.stdout.is_empty());
        assert_eq!(fs::read_to_string(&out).unwrap(), "42\n");
        fs::remove_dir_all(&dir).unwrap();
    }
}
