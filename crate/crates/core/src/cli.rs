//! Command-line front end. Exit codes: 0 success, 1 certificate failure,
//! 2 bad flags or unusable input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{run_matrix, run_suite, run_with_stream, RunOptions, Suite};
use crate::certify::certify_parts;
use crate::error::{Error, Result};
use crate::io::{generate, load_matrix, save_matrix, InstanceKind, InstanceSpec, MatrixFormat};
use crate::linalg::{DenseMatrix, SpdForm};
use crate::report::{read_json, write_json, Algorithm, RunReport};
use crate::streaming::{file_source, InitialWeights, InverseMode, RowStream};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERTIFICATE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "JE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "john-ellipsoid", version, about = "Approximate John ellipsoids of {x : |Ax|_inf <= 1}")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic instance.
    Gen(GenArgs),
    /// Solve one instance and write a JSON report.
    Solve(SolveArgs),
    /// Re-check the certificate of a report against its matrix.
    Certify(CertifyArgs),
    /// Run a benchmark suite and emit an aggregate JSON report.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: InstanceKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1e3)]
    scale_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<MatrixFormat>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    algo: Algorithm,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<MatrixFormat>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    certify: bool,
    /// Override the iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Drift exponent of the lazy solver.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_enum, default_value = "per-pass")]
    inverse: InverseMode,
    #[arg(long, value_enum, default_value = "d-over-n")]
    initial: InitialWeights,
    /// Omit `Q` and the weights from the report.
    #[arg(long)]
    no_solution: bool,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<MatrixFormat>,
    #[arg(long)]
    report: PathBuf,
    /// Defaults to the eps recorded in the report.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Written to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    let outcome = match cli.command {
        Command::Gen(args) => gen(args),
        Command::Solve(args) => solve(args),
        Command::Certify(args) => recertify(args),
        Command::Bench(args) => bench(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    if threads == 0 {
        return Err(Error::InvalidParameter(format!("{THREADS_ENV} must be positive")));
    }
    // A second call in the same process (tests) finds the pool built already.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn format_of(path: &Path, explicit: Option<MatrixFormat>) -> Result<MatrixFormat> {
    explicit.map_or_else(|| MatrixFormat::from_path(path), Ok)
}

fn certificate_code(passed: Option<bool>) -> i32 {
    match passed {
        Some(false) => EXIT_CERTIFICATE,
        _ => EXIT_OK,
    }
}

fn gen(args: GenArgs) -> Result<i32> {
    if args.kind == InstanceKind::File {
        return Err(Error::InvalidParameter("gen cannot write a `file` instance".into()));
    }
    let format = format_of(&args.out, args.format)?;
    let spec = InstanceSpec {
        scale_max: args.scale_max,
        ..InstanceSpec::new(args.kind, args.n, args.d, args.seed)
    };
    let m = generate(&spec)?;
    save_matrix(&args.out, &m, format)?;
    eprintln!("wrote {} ({} x {})", args.out.display(), m.rows(), m.cols());
    Ok(EXIT_OK)
}

fn solve(args: SolveArgs) -> Result<i32> {
    let format = format_of(&args.input, args.format)?;
    let opts = RunOptions {
        certify: args.certify,
        iterations: args.iterations,
        theta: args.theta,
        inverse: args.inverse,
        initial: args.initial,
        keep_solution: !args.no_solution,
        ..RunOptions::new(args.algo, args.eps, args.seed)
    };
    let label = args.input.display().to_string();
    let report = if args.algo == Algorithm::Streaming && format != MatrixFormat::MatrixMarket {
        let mut stream = RowStream::new(file_source(&args.input, format)?);
        run_with_stream(None, &mut stream, &label, &opts)?
    } else {
        let a = load_matrix(&args.input, format)?;
        run_matrix(&a, &label, &opts)?
    };
    write_json(&args.out, &report)?;
    if let Some(c) = &report.certificate {
        eprintln!(
            "max row form {:.6}, weight mass {:.6}: {}",
            c.max_row_form,
            c.weight_mass,
            if c.passed() { "certified" } else { "certificate FAILED" }
        );
    }
    Ok(certificate_code(report.passed()))
}

fn recertify(args: CertifyArgs) -> Result<i32> {
    let a = load_matrix(&args.input, format_of(&args.input, args.format)?)?;
    let report: RunReport = read_json(&args.report)?;
    let solution = report
        .solution
        .as_ref()
        .ok_or_else(|| Error::Format("report carries no solution".into()))?;
    if solution.weights.is_empty() {
        return Err(Error::Format(
            "report carries no weights (streaming runs record them only with --certify)".into(),
        ));
    }
    let q = SpdForm::new(DenseMatrix::from_rows(&solution.quadratic)?)?;
    let eps = args.eps.unwrap_or(report.config.eps);
    let cert = certify_parts(&a, &q, &solution.weights, eps)?;
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &cert)?;
    writeln!(stdout)?;
    Ok(certificate_code(Some(cert.passed())))
}

fn bench(args: BenchArgs) -> Result<i32> {
    let report = run_suite(args.suite, args.seed)?;
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &report)?;
            writeln!(stdout)?;
        }
    }
    let s = &report.summary;
    eprintln!(
        "{}: {} runs, {} passed, {} failed, {} errors",
        report.suite, s.runs, s.passed, s.failed, s.errors
    );
    Ok(if s.errors > 0 {
        EXIT_INPUT
    } else if s.failed > 0 {
        EXIT_CERTIFICATE
    } else {
        EXIT_OK
    })
}
