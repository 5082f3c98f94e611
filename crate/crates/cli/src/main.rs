use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use bandlimit_cli::result::write_spectrum_csv;
use bandlimit_cli::{run, spectrum_report, Input, ResultFile, SolverKind};
use clap::{ArgGroup, Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SolverArg {
    Riccati,
    LqPmp,
    Transfer,
    TransferFreq,
    Shooting,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Riccati => SolverKind::Riccati,
            SolverArg::LqPmp => SolverKind::LqPmp,
            SolverArg::Transfer => SolverKind::Transfer,
            SolverArg::TransferFreq => SolverKind::TransferFreq,
            SolverArg::Shooting => SolverKind::Shooting,
        }
    }
}

/// Solve and certify a frequency-constrained optimal control problem.
#[derive(Debug, Parser)]
#[command(name = "bandlimit", version)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "builtin"])))]
struct Args {
    /// Problem file (JSON).
    #[arg(long, short)]
    input: Option<PathBuf>,

    /// Use a catalog problem instead of a file: scalar_integrator,
    /// double_integrator or affine_toy.
    #[arg(long)]
    builtin: Option<String>,

    /// Result file; printed to stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,

    #[arg(long, value_enum)]
    solver: Option<SolverArg>,

    /// Override a field, e.g. `--set boundary.xf=[1,0]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Certificate tolerance.
    #[arg(long)]
    tolerance: Option<f64>,

    /// Also write the per-channel spectrum table as CSV.
    #[arg(long, value_name = "CSV")]
    spectrum: Option<PathBuf>,

    /// No summary on stderr.
    #[arg(long, short)]
    quiet: bool,
}

fn summary(result: &ResultFile) -> String {
    let mut line = format!(
        "{}: {:?} (exit {})",
        result.solver.name(),
        result.status,
        result.exit_code
    );
    if let Some(cost) = result.cost {
        line += &format!(", cost {cost:.12e}");
    }
    if let Some(cert) = &result.certificate {
        line += &format!(
            ", certificate {}",
            if cert.passed { "passed" } else { "failed" }
        );
    }
    if let Some(message) = &result.diagnostics.message {
        line += &format!("\n  {message}");
    }
    for w in &result.diagnostics.warnings {
        line += &format!("\n  warning: {w}");
    }
    line
}

fn main() -> ExitCode {
    // Usage errors exit with 1 like other spec errors; clap's default 2 means
    // an infeasible problem here.
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let mut overrides = args.overrides.clone();
    if let Some(solver) = args.solver {
        overrides.push(format!("solver={}", SolverKind::from(solver).name()));
    }
    if let Some(tol) = args.tolerance {
        overrides.push(format!("options.tolerance={tol:?}"));
    }
    let input = match (&args.input, &args.builtin) {
        (Some(path), _) => Input::Path(path),
        (None, Some(name)) => Input::Builtin(name),
        (None, None) => unreachable!("clap requires one source"),
    };

    let outcome = run(input, args.output.as_deref(), &overrides);
    if let Some(err) = &outcome.error {
        eprintln!("error: {err}");
    }
    let mut code = outcome.exit_code;
    if let Some(result) = &outcome.result {
        if args.output.is_none() {
            match result.to_json() {
                Ok(json) => {
                    let _ = io::stdout().write_all(json.as_bytes());
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code = 1;
                }
            }
        }
        if let Some(path) = &args.spectrum {
            let written = File::create(path).map_err(|e| e.to_string()).and_then(|f| {
                write_spectrum_csv(&spectrum_report(result), BufWriter::new(f))
                    .map_err(|e| e.to_string())
            });
            if let Err(e) = written {
                eprintln!("error: cannot write {}: {e}", path.display());
                code = 1;
            }
        }
        if !args.quiet {
            eprintln!("{}", summary(result));
        }
    }
    ExitCode::from(code as u8)
}
