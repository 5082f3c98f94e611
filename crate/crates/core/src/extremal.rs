//! Maximum-principle conditions for frequency-constrained problems.
//!
//! The Hamiltonian at stage `t` is
//!
//! ```text
//! H(η_c, ν; p, t, x, u) = ⟨p, f_t(x, u)⟩ − η_c·c_t(x, u) − ⟨ν, F_t u⟩
//! ```
//!
//! and the adjoint `p_t` pairs with the transition `x_t → x_{t+1}`, so the
//! recursion runs `p_{t−1} = ∂H/∂x(p_t, t, x_t, u_t) − η^x_t` for
//! `t = 1..N−1`. The transversality conditions are
//! `∂H/∂x(p_0, 0, x_0, u_0) = η^x_0` and `p_{N−1} = −η^x_N`.
//!
//! State-set multipliers live in polar cones: `⟨η, δ⟩ ≤ 0` for every
//! feasible direction `δ`. For a free stage that forces `η = 0`, a fixed
//! stage leaves `η` unconstrained, and for a box `η_i ≥ 0` at an active upper
//! bound, `η_i ≤ 0` at an active lower bound, `η_i = 0` otherwise.
//!
//! Certificate thresholds scale with the data: primal conditions pass when
//! `r ≤ tol·(1 + ‖(x, u)‖∞)`, and multiplier-dependent conditions pass when
//! `r ≤ tol·(|η_c| + S)` where `S` is the largest term entering that
//! condition. For a normal lift this is `tol·(1 + S)`, and the form stays
//! positively homogeneous in the lift.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{ControlSet, ProblemSpec, StateSet};
use crate::spectrum::{constraint_residual, FrequencyConstraint};
use crate::trajectory::Trajectory;

/// Dynamics residual accepted by [`adjoint_backward`].
pub const ADJOINT_INPUT_TOLERANCE: f64 = 1e-8;

/// Multipliers accompanying a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalLift {
    /// 1 for normal, 0 for abnormal lifts.
    pub eta_c: f64,
    pub nu: DVector<f64>,
    /// `p_0..p_{N-1}`.
    pub adjoints: Vec<DVector<f64>>,
    /// `η^x_0..η^x_N`.
    pub state_multipliers: Vec<DVector<f64>>,
}

impl ExtremalLift {
    /// Largest absolute multiplier entry.
    pub fn magnitude(&self) -> f64 {
        let p = self.adjoints.iter().map(|p| p.amax());
        let eta = self.state_multipliers.iter().map(|e| e.amax());
        p.chain(eta).fold(
            self.eta_c.abs().max(linalg::vec_max_abs(&self.nu)),
            f64::max,
        )
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            eta_c: self.eta_c * lambda,
            nu: &self.nu * lambda,
            adjoints: self.adjoints.iter().map(|p| p * lambda).collect(),
            state_multipliers: self.state_multipliers.iter().map(|e| e * lambda).collect(),
        }
    }

    /// Completes a lift from adjoints: endpoint multipliers come from
    /// transversality, interior ones from the adjoint recursion on
    /// constrained stages and are zero on free stages.
    pub fn recover(
        spec: &ProblemSpec,
        traj: &Trajectory,
        eta_c: f64,
        nu: DVector<f64>,
        adjoints: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let horizon = traj.horizon();
        let n = spec.state_dim();
        let mut eta = vec![DVector::zeros(n); horizon + 1];
        for t in 0..horizon {
            let (x, u) = (&traj.states[t], &traj.controls[t]);
            let dhdx = hamiltonian_state_gradient(spec, eta_c, &adjoints[t], t, x, u)?;
            if t == 0 {
                eta[0] = dhdx;
            } else if spec.state_sets[t] != StateSet::Free {
                eta[t] = dhdx - &adjoints[t - 1];
            }
        }
        eta[horizon] = -&adjoints[horizon - 1];
        Ok(Self {
            eta_c,
            nu,
            adjoints,
            state_multipliers: eta,
        })
    }
}

fn check_point(spec: &ProblemSpec, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
    if x.len() != spec.state_dim() {
        return Err(Error::shape(&format!("x_{t}"), spec.state_dim(), x.len()));
    }
    if u.len() != spec.control_dim() {
        return Err(Error::shape(&format!("u_{t}"), spec.control_dim(), u.len()));
    }
    Ok(())
}

pub fn evaluate_hamiltonian(
    eta_c: f64,
    nu: &DVector<f64>,
    p: &DVector<f64>,
    t: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    spec: &ProblemSpec,
) -> Result<f64> {
    check_point(spec, t, x, u)?;
    let fc = spec.require_fc()?;
    if nu.len() != fc.row_count() {
        return Err(Error::shape("nu", fc.row_count(), nu.len()));
    }
    if p.len() != spec.state_dim() {
        return Err(Error::shape("p", spec.state_dim(), p.len()));
    }
    let f = spec.dynamics.eval(t, x, u)?;
    let c = spec.cost.value(t, x, u)?;
    let freq = if fc.row_count() > 0 {
        nu.dot(&(fc.block(t) * u))
    } else {
        0.0
    };
    Ok(p.dot(&f) - eta_c * c - freq)
}

/// `∂H/∂x = (∂f_t/∂x)ᵀ p − η_c ∂c_t/∂x`.
pub fn hamiltonian_state_gradient(
    spec: &ProblemSpec,
    eta_c: f64,
    p: &DVector<f64>,
    t: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let jx = spec.dynamics.jacobian_x(t, x, u)?;
    let gx = spec.cost.grad_x(t, x, u)?;
    Ok(jx.transpose() * p - gx * eta_c)
}

/// `∂H/∂u = (∂f_t/∂u)ᵀ p − η_c ∂c_t/∂u − F_tᵀ ν`.
pub fn hamiltonian_control_gradient(
    spec: &ProblemSpec,
    eta_c: f64,
    nu: &DVector<f64>,
    p: &DVector<f64>,
    t: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let fc = spec.require_fc()?;
    let ju = spec.dynamics.jacobian_u(t, x, u)?;
    let gu = spec.cost.grad_u(t, x, u)?;
    let mut g = ju.transpose() * p - gu * eta_c;
    if fc.row_count() > 0 {
        g -= fc.block(t).transpose() * nu;
    }
    Ok(g)
}

/// `max_t ‖x_{t+1} − f_t(x_t, u_t)‖∞`.
pub fn dynamics_residual(spec: &ProblemSpec, traj: &Trajectory) -> Result<f64> {
    let mut worst = 0.0_f64;
    for t in 0..traj.horizon() {
        let f = spec.dynamics.eval(t, &traj.states[t], &traj.controls[t])?;
        worst = worst.max((&traj.states[t + 1] - f).amax());
    }
    Ok(worst)
}

fn check_trajectory(spec: &ProblemSpec, traj: &Trajectory) -> Result<()> {
    if traj.horizon() != spec.horizon || traj.states.len() != spec.horizon + 1 {
        return Err(Error::shape(
            "trajectory horizon",
            spec.horizon,
            traj.horizon(),
        ));
    }
    for t in 0..spec.horizon {
        check_point(spec, t, &traj.states[t], &traj.controls[t])?;
    }
    let last = &traj.states[spec.horizon];
    if last.len() != spec.state_dim() {
        return Err(Error::shape("x_N", spec.state_dim(), last.len()));
    }
    Ok(())
}

/// Runs the adjoint recursion backward from `p_{N−1} = −η^x_N`.
///
/// `state_multipliers` holds `η^x_t` for every stage `0..=N`; only the
/// interior entries are used. `nu` does not enter the recursion.
pub fn adjoint_backward(
    traj: &Trajectory,
    eta_c: f64,
    nu: &DVector<f64>,
    terminal: &DVector<f64>,
    state_multipliers: &[DVector<f64>],
    spec: &ProblemSpec,
) -> Result<Vec<DVector<f64>>> {
    check_trajectory(spec, traj)?;
    let fc = spec.require_fc()?;
    if nu.len() != fc.row_count() {
        return Err(Error::shape("nu", fc.row_count(), nu.len()));
    }
    let horizon = spec.horizon;
    let n = spec.state_dim();
    if terminal.len() != n {
        return Err(Error::shape("terminal multiplier", n, terminal.len()));
    }
    if state_multipliers.len() != horizon + 1 {
        return Err(Error::shape(
            "state multipliers",
            horizon + 1,
            state_multipliers.len(),
        ));
    }
    let residual = dynamics_residual(spec, traj)?;
    let limit = ADJOINT_INPUT_TOLERANCE * (1.0 + traj.max_abs());
    if residual > limit {
        return Err(Error::DynamicsResidual { residual, limit });
    }

    let mut adjoints = vec![DVector::zeros(n); horizon];
    adjoints[horizon - 1] = -terminal;
    for t in (1..horizon).rev() {
        let dhdx = hamiltonian_state_gradient(
            spec,
            eta_c,
            &adjoints[t],
            t,
            &traj.states[t],
            &traj.controls[t],
        )?;
        adjoints[t - 1] = dhdx - &state_multipliers[t];
    }
    Ok(adjoints)
}

/// One numerically checked condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl ConditionCheck {
    fn new(residual: f64, threshold: f64) -> Self {
        Self {
            residual,
            threshold,
            passed: residual <= threshold,
        }
    }
}

/// Per-condition residuals and verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmpCertificate {
    pub tolerance: f64,
    /// `η_c ≥ 0`.
    pub nonneg: bool,
    /// `p`, `η_c`, `ν` not all zero.
    pub nontrivial: bool,
    /// `x_t ∈ X_t`.
    pub state_feasibility: ConditionCheck,
    /// `u_t ∈ U_t`.
    pub control_feasibility: ConditionCheck,
    pub state_dyn: ConditionCheck,
    /// Interior adjoint recursion together with interior dual-cone membership.
    pub adjoint_dyn: ConditionCheck,
    /// Both endpoint conditions together with endpoint dual-cone membership.
    pub transversality: ConditionCheck,
    /// Most positive directional derivative of `H` along feasible control
    /// directions (0 when none is positive).
    pub hamiltonian_vi: ConditionCheck,
    pub freq: ConditionCheck,
    pub passed: bool,
}

impl PmpCertificate {
    /// Names of the failed conditions, in order.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.nonneg {
            out.push("nonneg");
        }
        if !self.nontrivial {
            out.push("nontrivial");
        }
        let checks = [
            ("state_feasibility", &self.state_feasibility),
            ("control_feasibility", &self.control_feasibility),
            ("state_dyn", &self.state_dyn),
            ("adjoint_dyn", &self.adjoint_dyn),
            ("transversality", &self.transversality),
            ("hamiltonian_vi", &self.hamiltonian_vi),
            ("freq", &self.freq),
        ];
        out.extend(checks.iter().filter(|(_, c)| !c.passed).map(|(n, _)| *n));
        out
    }
}

/// Violation of `η ∈` polar cone of the tent of `set` at `x`.
fn dual_cone_violation(
    set: &StateSet,
    x: &DVector<f64>,
    eta: &DVector<f64>,
    active_tol: f64,
) -> f64 {
    match set {
        StateSet::Free => eta.amax(),
        StateSet::Fixed(_) => 0.0,
        StateSet::Box { lower, upper } => (0..x.len())
            .map(|i| {
                let at_upper = x[i] >= upper[i] - active_tol;
                let at_lower = x[i] <= lower[i] + active_tol;
                match (at_lower, at_upper) {
                    (true, true) => 0.0,
                    (false, true) => (-eta[i]).max(0.0),
                    (true, false) => eta[i].max(0.0),
                    (false, false) => eta[i].abs(),
                }
            })
            .fold(0.0, f64::max),
    }
}

/// Most positive `⟨g, δ⟩` over the signed coordinate directions feasible at `u`.
fn worst_directional_derivative(
    set: &ControlSet,
    u: &DVector<f64>,
    g: &DVector<f64>,
    active_tol: f64,
) -> f64 {
    match set {
        ControlSet::Free => g.amax(),
        ControlSet::Box { lower, upper } => (0..u.len())
            .flat_map(|i| {
                let up = (u[i] < upper[i] - active_tol).then_some(g[i]);
                let down = (u[i] > lower[i] + active_tol).then_some(-g[i]);
                up.into_iter().chain(down)
            })
            .fold(0.0, f64::max),
    }
}

/// Numerically certifies the maximum-principle conditions for `traj` with
/// the multipliers in `lift`.
pub fn verify_pmp(
    traj: &Trajectory,
    lift: &ExtremalLift,
    spec: &ProblemSpec,
    tol: f64,
) -> Result<PmpCertificate> {
    check_trajectory(spec, traj)?;
    let fc: &FrequencyConstraint = spec.require_fc()?;
    let horizon = spec.horizon;
    let n = spec.state_dim();
    if lift.adjoints.len() != horizon || lift.adjoints.iter().any(|p| p.len() != n) {
        return Err(Error::shape(
            "adjoints",
            format!("{horizon} of length {n}"),
            lift.adjoints.len(),
        ));
    }
    if lift.state_multipliers.len() != horizon + 1
        || lift.state_multipliers.iter().any(|e| e.len() != n)
    {
        return Err(Error::shape(
            "state multipliers",
            format!("{} of length {n}", horizon + 1),
            lift.state_multipliers.len(),
        ));
    }
    if lift.nu.len() != fc.row_count() {
        return Err(Error::shape("nu", fc.row_count(), lift.nu.len()));
    }

    let primal_scale = traj.max_abs();
    let primal_threshold = tol * (1.0 + primal_scale);
    let eta_c = lift.eta_c;
    let p = &lift.adjoints;
    let eta = &lift.state_multipliers;

    let state_feasibility = spec
        .state_sets
        .iter()
        .zip(&traj.states)
        .map(|(set, x)| set.violation(x))
        .fold(0.0, f64::max);
    let control_feasibility = spec
        .control_sets
        .iter()
        .zip(&traj.controls)
        .map(|(set, u)| set.violation(u))
        .fold(0.0, f64::max);
    let state_dyn = dynamics_residual(spec, traj)?;
    let freq = constraint_residual(fc, &traj.controls)?.amax();

    let dhdx: Vec<DVector<f64>> = (0..horizon)
        .map(|t| {
            hamiltonian_state_gradient(spec, eta_c, &p[t], t, &traj.states[t], &traj.controls[t])
        })
        .collect::<Result<_>>()?;

    let mut adjoint_scale = 0.0_f64;
    let mut adjoint_res = 0.0_f64;
    for t in 1..horizon {
        let r = &p[t - 1] - (&dhdx[t] - &eta[t]);
        adjoint_res = adjoint_res.max(r.amax());
        adjoint_res = adjoint_res.max(dual_cone_violation(
            &spec.state_sets[t],
            &traj.states[t],
            &eta[t],
            primal_threshold,
        ));
        adjoint_scale = adjoint_scale
            .max(p[t - 1].amax())
            .max(dhdx[t].amax())
            .max(eta[t].amax());
    }

    let start = &dhdx[0] - &eta[0];
    let end = &p[horizon - 1] + &eta[horizon];
    let transversality_scale = dhdx[0]
        .amax()
        .max(eta[0].amax())
        .max(p[horizon - 1].amax())
        .max(eta[horizon].amax());
    let transversality = start
        .amax()
        .max(end.amax())
        .max(dual_cone_violation(
            &spec.state_sets[0],
            &traj.states[0],
            &eta[0],
            primal_threshold,
        ))
        .max(dual_cone_violation(
            &spec.state_sets[horizon],
            &traj.states[horizon],
            &eta[horizon],
            primal_threshold,
        ));

    let mut vi_scale = 0.0_f64;
    let mut vi_worst = 0.0_f64;
    for t in 0..horizon {
        let (x, u) = (&traj.states[t], &traj.controls[t]);
        let g = hamiltonian_control_gradient(spec, eta_c, &lift.nu, &p[t], t, x, u)?;
        let ju = spec.dynamics.jacobian_u(t, x, u)?;
        let gu = spec.cost.grad_u(t, x, u)?;
        vi_scale = vi_scale
            .max((ju.transpose() * &p[t]).amax())
            .max((gu * eta_c).amax());
        if fc.row_count() > 0 {
            vi_scale = vi_scale.max((fc.block(t).transpose() * &lift.nu).amax());
        }
        vi_worst = vi_worst.max(worst_directional_derivative(
            &spec.control_sets[t],
            u,
            &g,
            primal_threshold,
        ));
    }
    let dual_threshold = |scale: f64| tol * (eta_c.abs() + scale);

    let nonneg = eta_c >= 0.0;
    let nontrivial = eta_c != 0.0
        || lift.nu.iter().any(|&v| v != 0.0)
        || p.iter().any(|pt| pt.iter().any(|&v| v != 0.0));

    let cert = PmpCertificate {
        tolerance: tol,
        nonneg,
        nontrivial,
        state_feasibility: ConditionCheck::new(state_feasibility, primal_threshold),
        control_feasibility: ConditionCheck::new(control_feasibility, primal_threshold),
        state_dyn: ConditionCheck::new(state_dyn, primal_threshold),
        adjoint_dyn: ConditionCheck::new(adjoint_res, dual_threshold(adjoint_scale)),
        transversality: ConditionCheck::new(transversality, dual_threshold(transversality_scale)),
        hamiltonian_vi: ConditionCheck::new(vi_worst, dual_threshold(vi_scale)),
        freq: ConditionCheck::new(freq, primal_threshold),
        passed: false,
    };
    let passed = cert.failures().is_empty();
    Ok(PmpCertificate { passed, ..cert })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NormalityClass {
    AllNormal,
    AllAbnormal,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalityDims {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    /// Independent frequency rows.
    pub q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalityVerdict {
    pub classification: NormalityClass,
    pub rank_reachability: usize,
    pub rank_augmented: usize,
    pub dims: NormalityDims,
}

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidHorizon(0));
    }
    if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
        return Err(Error::shape(
            "(A, B)",
            "A square with B sharing its row count",
            format!(
                "A {}x{}, B {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            ),
        ));
    }
    Ok(())
}

/// `[B, AB, …, A^{k−1}B]`.
pub fn reachability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (n, m) = b.shape();
    let mut out = DMatrix::zeros(n, m * k);
    let mut block = b.clone();
    for i in 0..k {
        out.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// Without frequency constraints: controllable and `N ≥ n` implies every
/// extremal of the fixed-endpoint transfer is normal.
pub fn classify_normality_classic(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    horizon: usize,
) -> Result<NormalityVerdict> {
    check_pair(a, b, horizon)?;
    let (n, m) = b.shape();
    let rank = linalg::numerical_rank(&reachability_matrix(a, b, n));
    let classification = if rank == n && horizon >= n {
        NormalityClass::AllNormal
    } else {
        NormalityClass::Undetermined
    };
    Ok(NormalityVerdict {
        classification,
        rank_reachability: rank,
        rank_augmented: rank,
        dims: NormalityDims {
            n,
            m,
            horizon,
            q: 0,
        },
    })
}

/// Rows `Bᵀ(Aᵀ)^{N−1−t}` for `t = 0..N−1`, stacked: `mN × n`.
pub fn adjoint_reachability_stack(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    horizon: usize,
) -> DMatrix<f64> {
    let (n, m) = b.shape();
    let mut out = DMatrix::zeros(m * horizon, n);
    let at = a.transpose();
    let mut block = b.transpose();
    for t in (0..horizon).rev() {
        out.view_mut((t * m, 0), (m, n)).copy_from(&block);
        block *= &at;
    }
    out
}

/// Abnormal lifts of the frequency-constrained transfer solve
/// `R_stack p_{N−1} = G ν` with `G = [F_0ᵀ; …; F_{N−1}ᵀ]`. The constraint is
/// row-reduced first so that `q` counts independent rows.
///
/// `q + n > mN` forces a nontrivial solution (all abnormal); full column rank
/// `n + q` of `[R_stack | −G]` rules one out (all normal); anything else is
/// undetermined.
pub fn classify_normality_freq(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    horizon: usize,
    fc: &FrequencyConstraint,
) -> Result<NormalityVerdict> {
    check_pair(a, b, horizon)?;
    let (n, m) = b.shape();
    if fc.horizon() != horizon || fc.control_dim() != m {
        return Err(Error::shape(
            "frequency constraint (horizon, control dim)",
            format!("({horizon}, {m})"),
            format!("({}, {})", fc.horizon(), fc.control_dim()),
        ));
    }
    let reduced = fc.row_reduced();
    let q = reduced.row_count();
    let r_stack = adjoint_reachability_stack(a, b, horizon);
    let g = reduced.stacked().transpose();

    let mut augmented = DMatrix::zeros(m * horizon, n + q);
    augmented
        .view_mut((0, 0), (m * horizon, n))
        .copy_from(&r_stack);
    augmented
        .view_mut((0, n), (m * horizon, q))
        .copy_from(&(-g));

    let rank_reachability = linalg::numerical_rank(&r_stack);
    let rank_augmented = linalg::numerical_rank(&augmented);
    let classification = if q + n > m * horizon {
        NormalityClass::AllAbnormal
    } else if rank_augmented == n + q {
        NormalityClass::AllNormal
    } else {
        NormalityClass::Undetermined
    };
    Ok(NormalityVerdict {
        classification,
        rank_reachability,
        rank_augmented,
        dims: NormalityDims { n, m, horizon, q },
    })
}
