use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use thiserror::Error;
use usd_core::bb84::{find_mu0, sweep};
use usd_core::certificate::{certificate_residuals, fit_certificate_with, verify_certificate};
use usd_core::fidelity::failure_lower_bound;
use usd_core::io::{
    format_sig12, parse_json, sweep_csv, to_json, CertifyInputDoc, CertifyReportDoc,
    OracleReportDoc, PovmDoc, ProblemDoc, SolveReportDoc,
};
use usd_core::oracle::{oracle_optimize, OracleSettings, DEFAULT_MAX_ITERS, DEFAULT_RESTARTS};
use usd_core::problem::{validate_povm, validate_problem};
use usd_core::{solve_with, Tolerances, UsdError, UsdProblem};

#[derive(Parser, Debug)]
#[command(
    name = "usd",
    version,
    about = "Optimal unambiguous discrimination of two mixed states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem file and write the report.
    Solve {
        #[command(flatten)]
        io: FileArgs,
        #[command(flatten)]
        tol: TolArgs,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Check a measurement against the optimality conditions.
    Certify {
        #[command(flatten)]
        io: FileArgs,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Run the numerical optimizer on a problem file.
    Oracle {
        #[command(flatten)]
        io: FileArgs,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Failure probabilities of the coherent-state BB84 questions over a range of mean photon numbers.
    #[command(name = "bb84-sweep")]
    Bb84Sweep {
        #[arg(long, default_value_t = 0.05)]
        mu_start: f64,
        #[arg(long, default_value_t = 3.0)]
        mu_end: f64,
        #[arg(long, default_value_t = 0.05)]
        mu_step: f64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Mean photon number above which the bit-value question reaches the fidelity bound.
    #[command(name = "bb84-mu0")]
    Bb84Mu0 {
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct FileArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Divide each density matrix by its trace before use.
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args, Debug)]
struct TolArgs {
    #[arg(long, value_parser = positive)]
    tol_psd: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_rank: Option<f64>,
}

impl TolArgs {
    fn tolerances(&self) -> Tolerances {
        let mut t = Tolerances::default();
        if let Some(x) = self.tol_psd {
            t.psd = x;
        }
        if let Some(x) = self.tol_rank {
            t.rank = x;
        }
        t
    }
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESTARTS, value_parser = clap::value_parser!(usize))]
    restarts: usize,
}

impl OracleArgs {
    fn settings(&self) -> OracleSettings {
        OracleSettings {
            restarts: self.restarts.max(1),
            max_iters: DEFAULT_MAX_ITERS,
            seed: self.seed,
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("{x} is not a positive number")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: UsdError },
    #[error(transparent)]
    Usd(#[from] UsdError),
    #[error("certification failed")]
    NotCertified,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::NotCertified => 1,
            CliError::Usd(e) if e.is_input_error() => 1,
            CliError::Usd(_) => 2,
        }
    }
}

fn read_doc<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_json(&text).map_err(|source| CliError::Parse {
        path: path.to_owned(),
        source,
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        }),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn load_problem(doc: &ProblemDoc, renormalize: bool) -> Result<UsdProblem, CliError> {
    let p = doc.to_problem(renormalize)?;
    validate_problem(&p).into_result()?;
    Ok(p)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { io, tol, oracle } => {
            let doc: ProblemDoc = read_doc(&io.input)?;
            let p = load_problem(&doc, io.renormalize)?;
            let report = solve_with(&p, &tol.tolerances(), &oracle.settings())?;
            emit(
                io.output.as_deref(),
                &to_json(&SolveReportDoc::new(&p, &report)),
            )
        }
        Command::Certify { io, tol } => certify(&io, &tol.tolerances()),
        Command::Oracle { io, oracle } => {
            let doc: ProblemDoc = read_doc(&io.input)?;
            let p = load_problem(&doc, io.renormalize)?;
            let settings = oracle.settings();
            let res = oracle_optimize(&p, settings.restarts, settings.max_iters, settings.seed)?;
            let report = OracleReportDoc {
                best_q: res.best_q,
                iterations: res.iterations,
                converged: res.converged,
                restarts_used: res.restarts_used,
                seed: settings.seed,
                lower_bound: failure_lower_bound(&p)?,
                povm: PovmDoc::from_povm(&res.best_povm),
            };
            emit(io.output.as_deref(), &to_json(&report))
        }
        Command::Bb84Sweep {
            mu_start,
            mu_end,
            mu_step,
            output,
            tol,
        } => {
            let rows = sweep(mu_start, mu_end, mu_step, &tol.tolerances())?;
            emit(output.as_deref(), &sweep_csv(&rows))
        }
        Command::Bb84Mu0 { output } => {
            let mu0 = find_mu0()?;
            emit(output.as_deref(), &format!("{}\n", format_sig12(mu0)))
        }
    }
}

fn certify(io: &FileArgs, tol: &Tolerances) -> Result<(), CliError> {
    let doc: CertifyInputDoc = read_doc(&io.input)?;
    let p = load_problem(&doc.problem, io.renormalize)?;
    let m = doc.povm.to_povm(p.dim())?;
    let mut checks = validate_povm(&p, &m, tol.povm);
    let (certificate, fitted) = match &doc.certificate {
        Some(c) => (Some(c.to_certificate(p.dim())?), false),
        None => (fit_certificate_with(&p, &m, tol.certificate), true),
    };
    let residuals = match &certificate {
        Some(c) => {
            checks.extend(verify_certificate(&p, &m, c, tol.certificate));
            Some(certificate_residuals(&p, &m, c)?)
        }
        None => {
            checks.flag("certificate.found", false, f64::NAN);
            None
        }
    };
    let report = CertifyReportDoc {
        passed: checks.is_valid(),
        fitted,
        success_trace: certificate.as_ref().map(|c| c.success_trace),
        residuals,
        checks,
    };
    emit(io.output.as_deref(), &to_json(&report))?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::NotCertified)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
