//! Named toy models and complete example problems.

use bandlimit::problem::{AffineToy, ControlAffineDynamics, EvalResult};
use nalgebra::{DMatrix, DVector};

use crate::file::{
    Boundary, CostEntry, DynamicsEntry, DynamicsKind, ProblemFile, SolveOptions, SolverKind,
};

/// Names accepted by `--builtin`.
pub const PROBLEMS: [&str; 3] = ["scalar_integrator", "double_integrator", "affine_toy"];

const DEFAULT_GAIN: f64 = 0.1;

pub fn dynamics_names(kind: DynamicsKind) -> Vec<&'static str> {
    match kind {
        DynamicsKind::Lti => vec!["scalar_integrator", "double_integrator"],
        DynamicsKind::ControlAffine => vec!["affine_toy"],
    }
}

/// `(A, B)` of a builtin LTI model.
pub fn lti(name: &str) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    match name {
        "scalar_integrator" => Some((DMatrix::identity(1, 1), DMatrix::identity(1, 1))),
        "double_integrator" => Some((
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
        )),
        _ => None,
    }
}

/// `(Q, R)` used when a builtin model is given without a cost.
pub fn default_cost(name: &str) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let n = match name {
        "scalar_integrator" => 1,
        "double_integrator" => 2,
        "affine_toy" => return Some((DMatrix::identity(1, 1), DMatrix::identity(1, 1))),
        _ => return None,
    };
    Some((DMatrix::zeros(n, n), DMatrix::identity(1, 1)))
}

/// The scalar toy with its gain recorded in the label, so a problem file can
/// be written back from a [`bandlimit::problem::ProblemSpec`].
#[derive(Debug, Clone)]
pub struct CatalogToy {
    inner: AffineToy,
    label: String,
}

impl CatalogToy {
    pub fn new(gain: f64) -> Self {
        Self {
            inner: AffineToy { gain },
            label: format!("affine_toy(gain={gain:?})"),
        }
    }
}

pub fn control_affine(name: &str, gain: Option<f64>) -> Option<CatalogToy> {
    (name == "affine_toy").then(|| CatalogToy::new(gain.unwrap_or(DEFAULT_GAIN)))
}

/// Inverse of the [`CatalogToy`] label.
pub fn parse_label(label: &str) -> Option<(String, f64)> {
    let gain = label.strip_prefix("affine_toy(gain=")?.strip_suffix(')')?;
    Some(("affine_toy".into(), gain.parse().ok()?))
}

impl ControlAffineDynamics for CatalogToy {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }

    fn drift(&self, t: usize, x: &DVector<f64>) -> EvalResult<DVector<f64>> {
        self.inner.drift(t, x)
    }

    fn drift_jacobian(&self, t: usize, x: &DVector<f64>) -> EvalResult<DMatrix<f64>> {
        self.inner.drift_jacobian(t, x)
    }

    fn input_matrix(&self, t: usize, x: &DVector<f64>) -> EvalResult<DMatrix<f64>> {
        self.inner.input_matrix(t, x)
    }

    fn input_matrix_jacobians(&self, t: usize, x: &DVector<f64>) -> EvalResult<Vec<DMatrix<f64>>> {
        self.inner.input_matrix_jacobians(t, x)
    }

    fn label(&self) -> Option<&str> {
        Some(&self.label)
    }
}

fn named(kind: DynamicsKind, name: &str) -> DynamicsEntry {
    DynamicsEntry {
        kind,
        a: None,
        b: None,
        name: Some(name.into()),
        gain: None,
    }
}

/// A complete example problem.
pub fn problem(name: &str) -> Option<ProblemFile> {
    let file = match name {
        // Minimum-energy transfer 0 → 4 in four steps; the optimum is u ≡ 1.
        "scalar_integrator" => ProblemFile {
            horizon: 4,
            dynamics: named(DynamicsKind::Lti, name),
            cost: Some(CostEntry {
                q: vec![vec![0.0]],
                r: vec![vec![1.0]],
            }),
            boundary: Boundary {
                x0: vec![0.0],
                xf: Some(vec![4.0]),
            },
            control_sets: None,
            state_sets: None,
            banned_frequencies: vec![vec![1]],
            solver: Some(SolverKind::TransferFreq),
            options: SolveOptions::default(),
        },
        "double_integrator" => ProblemFile {
            horizon: 10,
            dynamics: named(DynamicsKind::Lti, name),
            cost: Some(CostEntry {
                q: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                r: vec![vec![1.0]],
            }),
            boundary: Boundary {
                x0: vec![0.0, 0.0],
                xf: Some(vec![1.0, 0.0]),
            },
            control_sets: None,
            state_sets: None,
            banned_frequencies: vec![vec![2, 3]],
            solver: Some(SolverKind::TransferFreq),
            options: SolveOptions::default(),
        },
        "affine_toy" => ProblemFile {
            horizon: 6,
            dynamics: named(DynamicsKind::ControlAffine, name),
            cost: Some(CostEntry {
                q: vec![vec![1.0]],
                r: vec![vec![1.0]],
            }),
            boundary: Boundary {
                x0: vec![0.0],
                xf: Some(vec![1.0]),
            },
            control_sets: None,
            state_sets: None,
            banned_frequencies: vec![vec![3]],
            solver: Some(SolverKind::Shooting),
            options: SolveOptions::default(),
        },
        _ => return None,
    };
    Some(file)
}
