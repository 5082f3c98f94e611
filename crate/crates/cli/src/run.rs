//! Loading, solver dispatch and exit codes.

use std::fs;
use std::path::Path;

use bandlimit::extremal::{
    adjoint_backward, classify_normality_freq, verify_pmp, ExtremalLift, NormalityVerdict,
};
use bandlimit::lq::{self, LqSolution, LqStatus};
use bandlimit::problem::{ControlSet, DynamicsModel, ProblemSpec, StateSet};
use bandlimit::shooting::{newton_solve, NewtonOptions, CERTIFICATE_TOLERANCE};
use bandlimit::spectrum::{uncertainty_check, DEFAULT_SUPPORT_TOLERANCE};
use bandlimit::{Error, Trajectory};
use nalgebra::DVector;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, FieldError};
use crate::file::{ProblemFile, SolverKind};
use crate::locate;
use crate::overrides::Override;
use crate::result::{channel_spectra, rows, Diagnostics, Multipliers, ResultFile, Status};

/// Certificate tolerance of the LQ solvers when the file sets none.
pub const LQ_TOLERANCE: f64 = 1e-7;

/// Exit code for unreadable or invalid problem files.
pub const EXIT_SPEC_ERROR: i32 = 1;

#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub file: ProblemFile,
    pub spec: ProblemSpec,
    pub solver: SolverKind,
    pub input_digest: String,
    pub overrides: Vec<String>,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `text`, applies `overrides` and validates the result. Errors carry
/// the offending field and, when it comes from `text`, its line.
pub fn load(text: &str, overrides: &[String]) -> Result<LoadedProblem, Vec<FieldError>> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| {
        vec![FieldError {
            field: "(document)".into(),
            line: Some(e.line()),
            message: e.to_string(),
        }]
    })?;

    let parsed: Vec<Override> = overrides
        .iter()
        .map(|raw| Override::parse(raw))
        .collect::<Result<_, _>>()
        .map_err(|e| vec![e])?;
    let errs: Vec<FieldError> = parsed
        .iter()
        .filter_map(|o| o.apply(&mut doc).err())
        .collect();
    if !errs.is_empty() {
        return Err(errs);
    }

    let anchor = |mut e: FieldError| {
        match parsed.iter().find(|o| o.covers(&e.field)) {
            Some(o) => e.message = format!("{} (set by --set {})", e.message, o.path),
            None => e.line = locate::line_of(text, &e.field),
        }
        e
    };

    let file: ProblemFile = serde_path_to_error::deserialize(doc).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." {
            "(document)".into()
        } else {
            field
        };
        vec![anchor(FieldError::new(field, e.into_inner().to_string()))]
    })?;
    let spec = file
        .to_spec()
        .map_err(|errs| errs.into_iter().map(anchor).collect::<Vec<_>>())?;
    let solver = resolve_solver(&file, &spec).map_err(|e| vec![anchor(e)])?;

    Ok(LoadedProblem {
        file,
        spec,
        solver,
        input_digest: digest(text.as_bytes()),
        overrides: overrides.to_vec(),
    })
}

/// Picks the requested solver, or a default, and checks it can handle the
/// problem.
pub fn resolve_solver(file: &ProblemFile, spec: &ProblemSpec) -> Result<SolverKind, FieldError> {
    let lti = spec.lti_matrices().is_some();
    let fixed_end = spec.final_state().is_some();
    let banned = spec.frequency_constraint().map_or(0, |fc| fc.row_count()) > 0;
    let solver = match file.solver {
        Some(s) => s,
        None if !lti => SolverKind::Shooting,
        None if fixed_end => SolverKind::TransferFreq,
        None => SolverKind::Riccati,
    };
    let reject = |message: String| Err(FieldError::new("solver", message));
    let name = solver.name();

    let n = spec.horizon;
    if let Some(t) = (1..n).find(|&t| matches!(spec.state_sets[t], StateSet::Fixed(_))) {
        return Err(FieldError::new(
            format!("state_sets[{t}]"),
            "interior fixed states are not supported by any solver",
        ));
    }
    if solver != SolverKind::Shooting && !lti {
        return reject(format!("{name} needs LTI dynamics; use shooting"));
    }
    match solver {
        SolverKind::Riccati | SolverKind::LqPmp => {
            if fixed_end {
                return reject(format!(
                    "{name} needs a free final state; use transfer or transfer_freq"
                ));
            }
            if banned {
                return reject(format!("{name} cannot enforce banned frequencies"));
            }
        }
        SolverKind::Transfer | SolverKind::TransferFreq | SolverKind::Shooting => {
            if !fixed_end {
                return reject(format!("{name} needs a fixed final state (boundary.xf)"));
            }
            if solver == SolverKind::Transfer && banned {
                return reject(
                    "transfer cannot enforce banned frequencies; use transfer_freq".into(),
                );
            }
        }
    }
    Ok(solver)
}

/// Outcome of one solver call, before certification.
struct Attempt {
    status: Status,
    trajectory: Option<Trajectory>,
    lift: Option<ExtremalLift>,
    cost: Option<f64>,
    normality: Option<NormalityVerdict>,
    diagnostics: Diagnostics,
}

impl Attempt {
    fn failed(status: Status, message: String) -> Self {
        Self {
            status,
            trajectory: None,
            lift: None,
            cost: None,
            normality: None,
            diagnostics: Diagnostics {
                message: Some(message),
                ..Diagnostics::default()
            },
        }
    }
}

/// Box constraints are checked by the certificate but not enforced.
fn relaxed(spec: &ProblemSpec) -> (ProblemSpec, Vec<String>) {
    let mut warnings = Vec::new();
    let mut out = spec.clone();
    if spec
        .control_sets
        .iter()
        .any(|s| matches!(s, ControlSet::Box { .. }))
    {
        warnings.push(
            "control boxes are verified by the certificate, not enforced by the solver".into(),
        );
        out = out.with_control_sets(vec![ControlSet::Free; spec.horizon]);
    }
    if spec
        .state_sets
        .iter()
        .any(|s| matches!(s, StateSet::Box { .. }))
    {
        warnings
            .push("state boxes are verified by the certificate, not enforced by the solver".into());
        let sets = spec
            .state_sets
            .iter()
            .map(|s| match s {
                StateSet::Box { .. } => StateSet::Free,
                other => other.clone(),
            })
            .collect();
        out = out.with_state_sets(sets);
    }
    match bandlimit::problem::validate(&out) {
        Ok(valid) => (valid, warnings),
        Err(_) => (spec.clone(), warnings),
    }
}

fn lq_attempt(spec: &ProblemSpec, sol: LqSolution) -> bandlimit::Result<Attempt> {
    let status = match sol.status {
        LqStatus::Solved => Status::Solved,
        LqStatus::Infeasible => Status::Infeasible,
        LqStatus::Singular => Status::Singular,
    };
    let diagnostics = Diagnostics {
        lsq_residual: Some(sol.lsq_residual),
        ..Diagnostics::default()
    };
    if status != Status::Solved {
        return Ok(Attempt {
            status,
            diagnostics: Diagnostics {
                message: Some(format!(
                    "stacked system least-squares residual {:e}",
                    sol.lsq_residual
                )),
                ..diagnostics
            },
            ..Attempt::failed(status, String::new())
        });
    }
    let lift = ExtremalLift::recover(spec, &sol.trajectory, 1.0, sol.nu, sol.adjoints)?;
    Ok(Attempt {
        status,
        trajectory: Some(sol.trajectory),
        lift: Some(lift),
        cost: Some(sol.cost),
        normality: None,
        diagnostics,
    })
}

fn solve_with(loaded: &LoadedProblem, work: &ProblemSpec) -> bandlimit::Result<Attempt> {
    let spec = &loaded.spec;
    let x0 = spec.initial_state().expect("x0 is always fixed").clone();
    let xf = spec.final_state().cloned();
    let horizon = spec.horizon;
    let fc = spec.frequency_constraint().expect("validated");

    let lti = match &spec.dynamics {
        DynamicsModel::Lti { a, b } => Some((a, b)),
        _ => None,
    };
    let weights = spec.quadratic_weights();

    let normality = match (lti, &xf) {
        (Some((a, b)), Some(_)) => Some(classify_normality_freq(a, b, horizon, fc)?),
        _ => None,
    };

    let mut attempt = match loaded.solver {
        SolverKind::Riccati => {
            let ((a, b), (q, r)) = (lti.expect("checked"), weights.expect("checked"));
            let (dp, traj) = lq::riccati_solve(a, b, q, r, horizon, &x0)?;
            let n = spec.state_dim();
            let zeros = vec![DVector::zeros(n); horizon + 1];
            let adjoints = adjoint_backward(
                &traj,
                1.0,
                &DVector::zeros(0),
                &zeros[horizon],
                &zeros,
                spec,
            )?;
            let lift = ExtremalLift::recover(spec, &traj, 1.0, DVector::zeros(0), adjoints)?;
            Attempt {
                status: Status::Solved,
                trajectory: Some(traj),
                lift: Some(lift),
                cost: Some(dp.cost),
                normality: None,
                diagnostics: Diagnostics::default(),
            }
        }
        SolverKind::LqPmp => {
            let ((a, b), (q, r)) = (lti.expect("checked"), weights.expect("checked"));
            lq_attempt(spec, lq::lq_pmp_solve(a, b, q, r, horizon, &x0)?)?
        }
        SolverKind::Transfer => {
            let ((a, b), (q, r)) = (lti.expect("checked"), weights.expect("checked"));
            let xf = xf.as_ref().expect("checked");
            lq_attempt(spec, lq::lq_transfer_solve(a, b, q, r, horizon, &x0, xf)?)?
        }
        SolverKind::TransferFreq => {
            let ((a, b), (q, r)) = (lti.expect("checked"), weights.expect("checked"));
            let xf = xf.as_ref().expect("checked");
            match lq::lq_transfer_freq_solve(a, b, q, r, horizon, &x0, xf, fc) {
                Ok(sol) => lq_attempt(spec, sol)?,
                Err(Error::AbnormalRegime(verdict)) => Attempt {
                    normality: Some(verdict),
                    ..Attempt::failed(
                        Status::Abnormal,
                        "every feasible control is abnormal; the cost cannot select among them"
                            .into(),
                    )
                },
                Err(e) => return Err(e),
            }
        }
        SolverKind::Shooting => {
            let xf = xf.as_ref().expect("checked");
            let defaults = NewtonOptions::default();
            let opts = NewtonOptions {
                max_iterations: loaded
                    .file
                    .options
                    .max_iterations
                    .unwrap_or(defaults.max_iterations),
                ..defaults
            };
            match newton_solve(work, &x0, xf, None, &opts) {
                Ok(res) => {
                    let cost = spec.total_cost(&res.trajectory.controls, &res.trajectory.states)?;
                    Attempt {
                        status: if res.converged {
                            Status::Solved
                        } else {
                            Status::NotConverged
                        },
                        trajectory: Some(res.trajectory),
                        lift: Some(res.lift),
                        cost: Some(cost),
                        normality: None,
                        diagnostics: Diagnostics {
                            iterations: Some(res.iterations),
                            final_residual: Some(res.final_residual),
                            trace: res.trace,
                            warnings: res.warning.into_iter().collect(),
                            ..Diagnostics::default()
                        },
                    }
                }
                Err(e @ Error::RankDeficient { .. }) => {
                    Attempt::failed(Status::Singular, e.to_string())
                }
                Err(e) => return Err(e),
            }
        }
    };
    if attempt.normality.is_none() {
        attempt.normality = normality;
    }
    Ok(attempt)
}

/// Runs the solver selected for `loaded` and certifies its output against
/// the full problem, including constraints the solver relaxed.
pub fn solve(loaded: &LoadedProblem) -> ResultFile {
    let spec = &loaded.spec;
    let (work, mut warnings) = relaxed(spec);
    let mut attempt = solve_with(loaded, &work).unwrap_or_else(|e| {
        let status = match e {
            Error::Singular { .. } | Error::RankDeficient { .. } => Status::Singular,
            _ => Status::NotConverged,
        };
        Attempt::failed(status, e.to_string())
    });
    warnings.append(&mut attempt.diagnostics.warnings);
    attempt.diagnostics.warnings = warnings;

    let tolerance = loaded
        .file
        .options
        .tolerance
        .unwrap_or(match loaded.solver {
            SolverKind::Shooting => CERTIFICATE_TOLERANCE,
            _ => LQ_TOLERANCE,
        });
    let mut certificate = None;
    if let (Status::Solved, Some(traj), Some(lift)) =
        (attempt.status, &attempt.trajectory, &attempt.lift)
    {
        match verify_pmp(traj, lift, spec, tolerance) {
            Ok(cert) => {
                if !cert.passed {
                    attempt.status = Status::CertificateFailed;
                    attempt.diagnostics.message = Some(format!(
                        "certificate failed: {}",
                        cert.failures().join(", ")
                    ));
                }
                certificate = Some(cert);
            }
            Err(e) => {
                attempt.status = Status::CertificateFailed;
                attempt.diagnostics.message = Some(e.to_string());
            }
        }
    }

    let (states, controls) = attempt
        .trajectory
        .as_ref()
        .map(|t| (rows(&t.states), rows(&t.controls)))
        .unwrap_or_default();
    let spectra = channel_spectra(&controls, &spec.supports).unwrap_or_default();
    let uncertainty = attempt
        .trajectory
        .as_ref()
        .and_then(|t| uncertainty_check(&t.controls, DEFAULT_SUPPORT_TOLERANCE).ok())
        .unwrap_or_default();

    ResultFile {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input_digest: loaded.input_digest.clone(),
        overrides: loaded.overrides.clone(),
        solver: loaded.solver,
        status: attempt.status,
        exit_code: attempt.status.exit_code(),
        horizon: spec.horizon,
        cost: attempt.cost,
        states,
        controls,
        multipliers: attempt.lift.as_ref().map(Multipliers::from),
        spectra,
        certificate,
        normality: attempt.normality,
        uncertainty,
        diagnostics: attempt.diagnostics,
    }
}

/// Where the problem text comes from.
#[derive(Debug, Clone)]
pub enum Input<'a> {
    Path(&'a Path),
    Builtin(&'a str),
}

#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub result: Option<ResultFile>,
    pub error: Option<CliError>,
}

fn read_input(input: &Input<'_>) -> Result<String, CliError> {
    match input {
        Input::Path(path) => fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.display().to_string(),
            source,
        }),
        Input::Builtin(name) => {
            let file = crate::builtin::problem(name).ok_or_else(|| {
                CliError::Spec(vec![FieldError::new(
                    "--builtin",
                    format!(
                        "unknown problem `{name}` (known: {})",
                        crate::builtin::PROBLEMS.join(", ")
                    ),
                )])
            })?;
            let mut text =
                serde_json::to_string_pretty(&file).map_err(|e| CliError::Encode(e.to_string()))?;
            text.push('\n');
            Ok(text)
        }
    }
}

/// Loads, solves and writes the result to `output` (or returns it only when
/// `output` is `None`). Spec errors exit with 1 and write nothing.
pub fn run(input: Input<'_>, output: Option<&Path>, overrides: &[String]) -> Outcome {
    let spec_error = |error| Outcome {
        exit_code: EXIT_SPEC_ERROR,
        result: None,
        error: Some(error),
    };
    let text = match read_input(&input) {
        Ok(t) => t,
        Err(e) => return spec_error(e),
    };
    let loaded = match load(&text, overrides) {
        Ok(l) => l,
        Err(errs) => return spec_error(CliError::Spec(errs)),
    };
    let result = solve(&loaded);
    let mut error = None;
    if let Some(path) = output {
        let written = result.to_json().and_then(|json| {
            fs::write(path, json).map_err(|source| CliError::Write {
                path: path.display().to_string(),
                source,
            })
        });
        if let Err(e) = written {
            error = Some(e);
        }
    }
    Outcome {
        exit_code: if error.is_some() {
            EXIT_SPEC_ERROR
        } else {
            result.exit_code
        },
        result: Some(result),
        error,
    }
}
