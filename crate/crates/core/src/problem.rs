//! The optimal control problem: dynamics, stage costs, per-stage state and
//! control sets, and the frequency constraint built from banned supports.
//!
//! User-supplied evaluators must be pure. They report failures as `Err(String)`,
//! which the crate wraps with the stage and call site.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectrum::{build_frequency_constraint, FrequencyConstraint, SupportSpec};

pub type EvalResult<T> = std::result::Result<T, String>;

/// General stage dynamics `x_{t+1} = f_t(x_t, u_t)`.
pub trait StageDynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn eval(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<DVector<f64>>;
    /// `∂f_t/∂x`, `n × n`.
    fn jacobian_x(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<DMatrix<f64>>;
    /// `∂f_t/∂u`, `n × m`.
    fn jacobian_u(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<DMatrix<f64>>;
    /// Name of a builtin model, used when serializing problems.
    fn label(&self) -> Option<&str> {
        None
    }
}

/// Control-affine dynamics `x_{t+1} = a_t(x_t) + b_t(x_t) u_t`.
pub trait ControlAffineDynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn drift(&self, t: usize, x: &DVector<f64>) -> EvalResult<DVector<f64>>;
    fn drift_jacobian(&self, t: usize, x: &DVector<f64>) -> EvalResult<DMatrix<f64>>;
    /// `b_t(x)`, `n × m`.
    fn input_matrix(&self, t: usize, x: &DVector<f64>) -> EvalResult<DMatrix<f64>>;
    /// `∂b_t^{(j)}/∂x` for each column `j`, each `n × n`.
    fn input_matrix_jacobians(&self, t: usize, x: &DVector<f64>) -> EvalResult<Vec<DMatrix<f64>>>;
    fn label(&self) -> Option<&str> {
        None
    }
}

/// General stage cost `c_t(x, u)`.
pub trait StageCost: Send + Sync + fmt::Debug {
    fn value(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<f64>;
    fn grad_x(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<DVector<f64>>;
    fn grad_u(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<DVector<f64>>;
    fn label(&self) -> Option<&str> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum DynamicsModel {
    General(Arc<dyn StageDynamics>),
    ControlAffine(Arc<dyn ControlAffineDynamics>),
    Lti { a: DMatrix<f64>, b: DMatrix<f64> },
}

fn eval_err(what: &str, t: usize, message: String) -> Error {
    Error::Evaluation {
        tag: format!("{what} at stage {t}"),
        message,
    }
}

fn check_len(what: &str, t: usize, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::shape(&format!("{what} at stage {t}"), n, v.len()));
    }
    Ok(())
}

fn check_shape(what: &str, t: usize, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::shape(
            &format!("{what} at stage {t}"),
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

impl DynamicsModel {
    pub fn lti(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        DynamicsModel::Lti { a, b }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            DynamicsModel::General(f) => f.state_dim(),
            DynamicsModel::ControlAffine(f) => f.state_dim(),
            DynamicsModel::Lti { a, .. } => a.nrows(),
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            DynamicsModel::General(f) => f.control_dim(),
            DynamicsModel::ControlAffine(f) => f.control_dim(),
            DynamicsModel::Lti { b, .. } => b.ncols(),
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            DynamicsModel::General(f) => f.label(),
            DynamicsModel::ControlAffine(f) => f.label(),
            DynamicsModel::Lti { .. } => None,
        }
    }

    pub fn is_lti(&self) -> bool {
        matches!(self, DynamicsModel::Lti { .. })
    }

    pub fn eval(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let out = match self {
            DynamicsModel::General(f) => f.eval(t, x, u).map_err(|e| eval_err("f", t, e))?,
            DynamicsModel::ControlAffine(f) => {
                let drift = f.drift(t, x).map_err(|e| eval_err("drift", t, e))?;
                let input = f
                    .input_matrix(t, x)
                    .map_err(|e| eval_err("input matrix", t, e))?;
                check_shape(
                    "input matrix",
                    t,
                    &input,
                    self.state_dim(),
                    self.control_dim(),
                )?;
                check_len("drift", t, &drift, self.state_dim())?;
                drift + input * u
            }
            DynamicsModel::Lti { a, b } => a * x + b * u,
        };
        check_len("f", t, &out, self.state_dim())?;
        Ok(out)
    }

    pub fn jacobian_x(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.state_dim();
        let out = match self {
            DynamicsModel::General(f) => {
                f.jacobian_x(t, x, u).map_err(|e| eval_err("df/dx", t, e))?
            }
            DynamicsModel::ControlAffine(f) => {
                let mut jac = f
                    .drift_jacobian(t, x)
                    .map_err(|e| eval_err("drift jacobian", t, e))?;
                check_shape("drift jacobian", t, &jac, n, n)?;
                let db = f
                    .input_matrix_jacobians(t, x)
                    .map_err(|e| eval_err("input matrix jacobian", t, e))?;
                if db.len() != self.control_dim() {
                    return Err(Error::shape(
                        &format!("input matrix jacobians at stage {t}"),
                        self.control_dim(),
                        db.len(),
                    ));
                }
                for (j, dbj) in db.iter().enumerate() {
                    check_shape("input matrix jacobian", t, dbj, n, n)?;
                    jac += dbj * u[j];
                }
                jac
            }
            DynamicsModel::Lti { a, .. } => a.clone(),
        };
        check_shape("df/dx", t, &out, n, n)?;
        Ok(out)
    }

    pub fn jacobian_u(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let out = match self {
            DynamicsModel::General(f) => {
                f.jacobian_u(t, x, u).map_err(|e| eval_err("df/du", t, e))?
            }
            DynamicsModel::ControlAffine(f) => f
                .input_matrix(t, x)
                .map_err(|e| eval_err("input matrix", t, e))?,
            DynamicsModel::Lti { b, .. } => b.clone(),
        };
        check_shape("df/du", t, &out, self.state_dim(), self.control_dim())?;
        Ok(out)
    }

    /// `∂/∂u (∂f_t/∂x)ᵀ p`, available in closed form for control-affine
    /// and LTI models: column `j` is `(∂b^{(j)}/∂x)ᵀ p`.
    pub fn mixed_adjoint_term(
        &self,
        t: usize,
        x: &DVector<f64>,
        p: &DVector<f64>,
    ) -> Option<Result<DMatrix<f64>>> {
        let (n, m) = (self.state_dim(), self.control_dim());
        match self {
            DynamicsModel::General(_) => None,
            DynamicsModel::Lti { .. } => Some(Ok(DMatrix::zeros(n, m))),
            DynamicsModel::ControlAffine(f) => Some(
                f.input_matrix_jacobians(t, x)
                    .map_err(|e| eval_err("input matrix jacobian", t, e))
                    .map(|db| {
                        let mut out = DMatrix::zeros(n, m);
                        for (j, dbj) in db.iter().enumerate() {
                            out.set_column(j, &(dbj.transpose() * p));
                        }
                        out
                    }),
            ),
        }
    }

    /// The same model behind the general evaluator interface.
    pub fn into_general(self) -> DynamicsModel {
        match self {
            DynamicsModel::General(_) => self,
            other => DynamicsModel::General(Arc::new(GeneralWrapper(other))),
        }
    }
}

#[derive(Debug)]
struct GeneralWrapper(DynamicsModel);

impl StageDynamics for GeneralWrapper {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.0.control_dim()
    }

    fn eval(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<DVector<f64>> {
        self.0.eval(t, x, u).map_err(|e| e.to_string())
    }

    fn jacobian_x(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<DMatrix<f64>> {
        self.0.jacobian_x(t, x, u).map_err(|e| e.to_string())
    }

    fn jacobian_u(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> EvalResult<DMatrix<f64>> {
        self.0.jacobian_u(t, x, u).map_err(|e| e.to_string())
    }

    fn label(&self) -> Option<&str> {
        self.0.label()
    }
}

#[derive(Debug, Clone)]
pub enum CostModel {
    General(Arc<dyn StageCost>),
    /// `½⟨x, Qx⟩ + ½⟨u, Ru⟩`.
    Quadratic {
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    },
}

impl CostModel {
    pub fn quadratic(q: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        CostModel::Quadratic { q, r }
    }

    pub fn value(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        match self {
            CostModel::General(c) => c.value(t, x, u).map_err(|e| eval_err("cost", t, e)),
            CostModel::Quadratic { q, r } => Ok(0.5 * x.dot(&(q * x)) + 0.5 * u.dot(&(r * u))),
        }
    }

    pub fn grad_x(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let g = match self {
            CostModel::General(c) => c.grad_x(t, x, u).map_err(|e| eval_err("dc/dx", t, e))?,
            CostModel::Quadratic { q, .. } => q * x,
        };
        check_len("dc/dx", t, &g, x.len())?;
        Ok(g)
    }

    pub fn grad_u(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let g = match self {
            CostModel::General(c) => c.grad_u(t, x, u).map_err(|e| eval_err("dc/du", t, e))?,
            CostModel::Quadratic { r, .. } => r * u,
        };
        check_len("dc/du", t, &g, u.len())?;
        Ok(g)
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            CostModel::General(c) => c.label(),
            CostModel::Quadratic { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateSet {
    Free,
    Fixed(DVector<f64>),
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl StateSet {
    /// Distance-like violation of `x ∈ X` in the max norm.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            StateSet::Free => 0.0,
            StateSet::Fixed(point) => (x - point).amax(),
            StateSet::Box { lower, upper } => box_violation(x, lower, upper),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlSet {
    Free,
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl ControlSet {
    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        match self {
            ControlSet::Free => 0.0,
            ControlSet::Box { lower, upper } => box_violation(u, lower, upper),
        }
    }
}

fn box_violation(v: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> f64 {
    v.iter()
        .zip(lower.iter().zip(upper.iter()))
        .map(|(&x, (&lo, &hi))| (lo - x).max(x - hi).max(0.0))
        .fold(0.0, f64::max)
}

/// One dimension/definiteness/bound violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(t) => write!(f, "stage {t}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationErrors(pub Vec<Violation>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.0 {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// Full input of the optimal control problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub horizon: usize,
    pub dynamics: DynamicsModel,
    pub cost: CostModel,
    /// `X_0..X_N`.
    pub state_sets: Vec<StateSet>,
    /// `U_0..U_{N-1}`.
    pub control_sets: Vec<ControlSet>,
    pub supports: SupportSpec,
    frequency_constraint: Option<FrequencyConstraint>,
}

impl ProblemSpec {
    /// Unconstrained problem: free states, free controls, nothing banned.
    pub fn new(horizon: usize, dynamics: DynamicsModel, cost: CostModel) -> Self {
        let m = dynamics.control_dim();
        Self {
            horizon,
            dynamics,
            cost,
            state_sets: vec![StateSet::Free; horizon + 1],
            control_sets: vec![ControlSet::Free; horizon],
            supports: SupportSpec::unconstrained(horizon.max(1), m),
            frequency_constraint: None,
        }
    }

    pub fn with_initial_state(mut self, x0: DVector<f64>) -> Self {
        self.state_sets[0] = StateSet::Fixed(x0);
        self.frequency_constraint = None;
        self
    }

    pub fn with_final_state(mut self, xf: DVector<f64>) -> Self {
        let n = self.horizon;
        self.state_sets[n] = StateSet::Fixed(xf);
        self.frequency_constraint = None;
        self
    }

    pub fn with_supports(mut self, supports: SupportSpec) -> Self {
        self.supports = supports;
        self.frequency_constraint = None;
        self
    }

    pub fn with_control_sets(mut self, sets: Vec<ControlSet>) -> Self {
        self.control_sets = sets;
        self.frequency_constraint = None;
        self
    }

    pub fn with_state_sets(mut self, sets: Vec<StateSet>) -> Self {
        self.state_sets = sets;
        self.frequency_constraint = None;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn is_validated(&self) -> bool {
        self.frequency_constraint.is_some()
    }

    /// The frequency constraint; present once the spec is validated.
    pub fn frequency_constraint(&self) -> Option<&FrequencyConstraint> {
        self.frequency_constraint.as_ref()
    }

    pub(crate) fn require_fc(&self) -> Result<&FrequencyConstraint> {
        self.frequency_constraint
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("problem specification is not validated".into()))
    }

    pub fn initial_state(&self) -> Option<&DVector<f64>> {
        match self.state_sets.first() {
            Some(StateSet::Fixed(x)) => Some(x),
            _ => None,
        }
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        match self.state_sets.last() {
            Some(StateSet::Fixed(x)) => Some(x),
            _ => None,
        }
    }

    /// `(Q, R)` for quadratic costs.
    pub fn quadratic_weights(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.cost {
            CostModel::Quadratic { q, r } => Some((q, r)),
            CostModel::General(_) => None,
        }
    }

    /// `(A, B)` for LTI dynamics.
    pub fn lti_matrices(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.dynamics {
            DynamicsModel::Lti { a, b } => Some((a, b)),
            _ => None,
        }
    }

    pub fn total_cost(&self, controls: &[DVector<f64>], states: &[DVector<f64>]) -> Result<f64> {
        controls.iter().enumerate().try_fold(0.0, |acc, (t, u)| {
            Ok(acc + self.cost.value(t, &states[t], u)?)
        })
    }

    /// Rolls the dynamics forward from `x0`.
    pub fn simulate(
        &self,
        x0: &DVector<f64>,
        controls: &[DVector<f64>],
    ) -> Result<Vec<DVector<f64>>> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for (t, u) in controls.iter().enumerate() {
            let next = self.dynamics.eval(t, &states[t], u)?;
            states.push(next);
        }
        Ok(states)
    }
}

const SYMMETRY_TOLERANCE: f64 = 1e-10;
const PSD_TOLERANCE: f64 = 1e-10;

/// Checks dimensions, definiteness and bounds, and builds the frequency
/// constraint. Every violation is reported, not just the first.
pub fn validate(spec: &ProblemSpec) -> std::result::Result<ProblemSpec, ValidationErrors> {
    let mut errs = Vec::new();
    let mut push = |stage: Option<usize>, field: String, message: String| {
        errs.push(Violation {
            stage,
            field,
            message,
        })
    };

    let horizon = spec.horizon;
    if horizon == 0 {
        push(None, "horizon".into(), "horizon must be at least 1".into());
    }
    let (n, m) = (spec.state_dim(), spec.control_dim());
    if n == 0 {
        push(
            None,
            "dynamics".into(),
            "state dimension must be positive".into(),
        );
    }
    if m == 0 {
        push(
            None,
            "dynamics".into(),
            "control dimension must be positive".into(),
        );
    }

    if let DynamicsModel::Lti { a, b } = &spec.dynamics {
        if a.nrows() != a.ncols() {
            push(
                None,
                "dynamics.A".into(),
                format!("A must be square, got {}x{}", a.nrows(), a.ncols()),
            );
        }
        if b.nrows() != a.nrows() {
            push(
                None,
                "dynamics.B".into(),
                format!("B must have {} rows, got {}", a.nrows(), b.nrows()),
            );
        }
    }

    if let CostModel::Quadratic { q, r } = &spec.cost {
        if q.shape() != (n, n) {
            push(
                None,
                "cost.Q".into(),
                format!("Q must be {n}x{n}, got {}x{}", q.nrows(), q.ncols()),
            );
        } else {
            if linalg::asymmetry(q) > SYMMETRY_TOLERANCE * (1.0 + linalg::max_abs(q)) {
                push(None, "cost.Q".into(), "Q not symmetric".into());
            }
            let lam = linalg::min_symmetric_eigenvalue(q);
            if lam < -PSD_TOLERANCE {
                push(
                    None,
                    "cost.Q".into(),
                    format!("Q not positive semidefinite (min eigenvalue {lam:e})"),
                );
            }
        }
        if r.shape() != (m, m) {
            push(
                None,
                "cost.R".into(),
                format!("R must be {m}x{m}, got {}x{}", r.nrows(), r.ncols()),
            );
        } else {
            if linalg::asymmetry(r) > SYMMETRY_TOLERANCE * (1.0 + linalg::max_abs(r)) {
                push(None, "cost.R".into(), "R not symmetric".into());
            }
            let lam = linalg::min_symmetric_eigenvalue(r);
            if lam <= PSD_TOLERANCE * (1.0 + linalg::max_abs(r)) {
                push(
                    None,
                    "cost.R".into(),
                    format!("R not positive definite (min eigenvalue {lam:e})"),
                );
            }
        }
    }

    if spec.state_sets.len() != horizon + 1 {
        push(
            None,
            "state_sets".into(),
            format!(
                "expected {} state sets, got {}",
                horizon + 1,
                spec.state_sets.len()
            ),
        );
    }
    for (t, set) in spec.state_sets.iter().enumerate() {
        match set {
            StateSet::Free => {}
            StateSet::Fixed(point) => {
                if point.len() != n {
                    push(
                        Some(t),
                        format!("state_sets[{t}].point"),
                        format!("expected length {n}, got {}", point.len()),
                    );
                }
            }
            StateSet::Box { lower, upper } => {
                check_box(&mut push, t, "state_sets", lower, upper, n);
            }
        }
    }

    if spec.control_sets.len() != horizon {
        push(
            None,
            "control_sets".into(),
            format!(
                "expected {horizon} control sets, got {}",
                spec.control_sets.len()
            ),
        );
    }
    for (t, set) in spec.control_sets.iter().enumerate() {
        if let ControlSet::Box { lower, upper } = set {
            check_box(&mut push, t, "control_sets", lower, upper, m);
        }
    }

    if spec.supports.channels() != m {
        push(
            None,
            "banned_frequencies".into(),
            format!("expected {m} channels, got {}", spec.supports.channels()),
        );
    }
    if horizon > 0 && spec.supports.horizon() != horizon {
        push(
            None,
            "banned_frequencies".into(),
            format!(
                "support horizon {} does not match horizon {horizon}",
                spec.supports.horizon()
            ),
        );
    }

    if !errs.is_empty() {
        return Err(ValidationErrors(errs));
    }

    let fc = build_frequency_constraint(&spec.supports, horizon, m).map_err(|e| {
        ValidationErrors(vec![Violation {
            stage: None,
            field: "banned_frequencies".into(),
            message: e.to_string(),
        }])
    })?;
    let mut out = spec.clone();
    out.frequency_constraint = Some(fc);
    Ok(out)
}

fn check_box(
    push: &mut impl FnMut(Option<usize>, String, String),
    t: usize,
    field: &str,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    dim: usize,
) {
    if lower.len() != dim || upper.len() != dim {
        push(
            Some(t),
            format!("{field}[{t}]"),
            format!(
                "bounds must have length {dim}, got {} and {}",
                lower.len(),
                upper.len()
            ),
        );
        return;
    }
    for i in 0..dim {
        if lower[i] > upper[i] {
            push(
                Some(t),
                format!("{field}[{t}].lower[{i}]"),
                format!(
                    "lower bound {} exceeds upper bound {} in coordinate {i}",
                    lower[i], upper[i]
                ),
            );
        }
    }
}

/// Max absolute deviation between supplied derivatives and central
/// finite differences, per block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub dynamics_x: f64,
    pub dynamics_u: f64,
    pub cost_x: f64,
    pub cost_u: f64,
}

impl JacobianReport {
    pub fn max(&self) -> f64 {
        self.dynamics_x
            .max(self.dynamics_u)
            .max(self.cost_x)
            .max(self.cost_u)
    }
}

/// Central difference step for a coordinate of magnitude `|v|`.
pub fn fd_step(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

pub fn check_jacobians(
    dynamics: &DynamicsModel,
    cost: &CostModel,
    samples: &[(usize, DVector<f64>, DVector<f64>)],
) -> Result<JacobianReport> {
    let mut report = JacobianReport::default();
    for (s, (t, x, u)) in samples.iter().enumerate() {
        let t = *t;
        let tagged = |e: Error| Error::Evaluation {
            tag: format!("sample {s} (t = {t})"),
            message: e.to_string(),
        };
        let jx = dynamics.jacobian_x(t, x, u).map_err(tagged)?;
        let ju = dynamics.jacobian_u(t, x, u).map_err(tagged)?;
        let gx = cost.grad_x(t, x, u).map_err(tagged)?;
        let gu = cost.grad_u(t, x, u).map_err(tagged)?;

        for i in 0..x.len() {
            let h = fd_step(x[i]);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let df = (dynamics.eval(t, &xp, u).map_err(tagged)?
                - dynamics.eval(t, &xm, u).map_err(tagged)?)
                / (2.0 * h);
            report.dynamics_x = report.dynamics_x.max((df - jx.column(i)).amax());
            let dc = (cost.value(t, &xp, u).map_err(tagged)?
                - cost.value(t, &xm, u).map_err(tagged)?)
                / (2.0 * h);
            report.cost_x = report.cost_x.max((dc - gx[i]).abs());
        }
        for j in 0..u.len() {
            let h = fd_step(u[j]);
            let (mut up, mut um) = (u.clone(), u.clone());
            up[j] += h;
            um[j] -= h;
            let df = (dynamics.eval(t, x, &up).map_err(tagged)?
                - dynamics.eval(t, x, &um).map_err(tagged)?)
                / (2.0 * h);
            report.dynamics_u = report.dynamics_u.max((df - ju.column(j)).amax());
            let dc = (cost.value(t, x, &up).map_err(tagged)?
                - cost.value(t, x, &um).map_err(tagged)?)
                / (2.0 * h);
            report.cost_u = report.cost_u.max((dc - gu[j]).abs());
        }
    }
    Ok(report)
}

/// `f(x, u) = x + (1 + γx)u`, scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineToy {
    pub gain: f64,
}

impl Default for AffineToy {
    fn default() -> Self {
        Self { gain: 0.1 }
    }
}

impl ControlAffineDynamics for AffineToy {
    fn state_dim(&self) -> usize {
        1
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn drift(&self, _t: usize, x: &DVector<f64>) -> EvalResult<DVector<f64>> {
        Ok(x.clone())
    }

    fn drift_jacobian(&self, _t: usize, _x: &DVector<f64>) -> EvalResult<DMatrix<f64>> {
        Ok(DMatrix::identity(1, 1))
    }

    fn input_matrix(&self, _t: usize, x: &DVector<f64>) -> EvalResult<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, 1.0 + self.gain * x[0]))
    }

    fn input_matrix_jacobians(
        &self,
        _t: usize,
        _x: &DVector<f64>,
    ) -> EvalResult<Vec<DMatrix<f64>>> {
        Ok(vec![DMatrix::from_element(1, 1, self.gain)])
    }

    fn label(&self) -> Option<&str> {
        Some("affine_toy")
    }
}
