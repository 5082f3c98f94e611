//! Newton shooting on the two-point boundary value problem of the maximum
//! principle, in normal form (`η_c = 1`).
//!
//! The unknowns are `z = (x_1..x_{N−1}, u_0..u_{N−1}, p_0..p_{N−1}, ν)` and
//! the residual stacks, in order,
//!
//! - (a) `x_{t+1} − f_t(x_t, u_t)` for `t = 0..N−1`, with `x_0`, `x_N` fixed,
//! - (b) `p_{t−1} − (∂f_t/∂x)ᵀ p_t + ∂c_t/∂x` for `t = 1..N−1`,
//! - (c) `(∂f_t/∂u)ᵀ p_t − ∂c_t/∂u − F_tᵀ ν` for `t = 0..N−1`,
//! - (d) `Σ_t F_t u_t`.
//!
//! With both endpoints fixed `p_0` and `p_{N−1}` carry no boundary condition,
//! so the system is square. The frequency rows are replaced by an
//! orthonormal basis of their span first: duplicated rows would otherwise
//! make the Newton matrix singular. Multipliers are mapped back to the
//! problem's own rows when the result is packaged.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{verify_pmp, ExtremalLift, PmpCertificate};
use crate::linalg;
use crate::lq::{self, LqStatus};
use crate::problem::{fd_step, ControlSet, CostModel, DynamicsModel, ProblemSpec, StateSet};
use crate::spectrum::FrequencyConstraint;
use crate::trajectory::Trajectory;

/// Tolerance at which converged results are certified.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-6;

/// Dimensions of the stacked unknown vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackedLayout {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    /// Independent frequency rows.
    pub q: usize,
}

/// A named contiguous range of the stacked vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub symbol: String,
    pub start: usize,
    pub len: usize,
}

impl StackedLayout {
    pub fn len(&self) -> usize {
        let Self { n, m, horizon, q } = *self;
        (horizon - 1) * n + horizon * m + horizon * n + q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of interior state `x_t`, `1 ≤ t ≤ N−1`.
    pub fn x(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t < self.horizon);
        (t - 1) * self.n
    }

    pub fn u(&self, t: usize) -> usize {
        (self.horizon - 1) * self.n + t * self.m
    }

    pub fn p(&self, t: usize) -> usize {
        (self.horizon - 1) * self.n + self.horizon * self.m + t * self.n
    }

    pub fn nu(&self) -> usize {
        self.len() - self.q
    }

    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        for t in 1..self.horizon {
            out.push(Segment {
                symbol: format!("x_{t}"),
                start: self.x(t),
                len: self.n,
            });
        }
        for t in 0..self.horizon {
            out.push(Segment {
                symbol: format!("u_{t}"),
                start: self.u(t),
                len: self.m,
            });
        }
        for t in 0..self.horizon {
            out.push(Segment {
                symbol: format!("p_{t}"),
                start: self.p(t),
                len: self.n,
            });
        }
        out.push(Segment {
            symbol: "nu".into(),
            start: self.nu(),
            len: self.q,
        });
        out
    }
}

/// Flat unknown vector together with its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedUnknowns {
    pub layout: StackedLayout,
    pub values: DVector<f64>,
}

impl StackedUnknowns {
    pub fn zeros(layout: StackedLayout) -> Self {
        Self {
            layout,
            values: DVector::zeros(layout.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn control(&self, t: usize) -> DVector<f64> {
        self.values
            .rows(self.layout.u(t), self.layout.m)
            .into_owned()
    }

    pub fn adjoint(&self, t: usize) -> DVector<f64> {
        self.values
            .rows(self.layout.p(t), self.layout.n)
            .into_owned()
    }

    /// Multiplier in the coordinates of the row-reduced constraint.
    pub fn nu(&self) -> DVector<f64> {
        self.values
            .rows(self.layout.nu(), self.layout.q)
            .into_owned()
    }

    /// `x_0..x_N` with the given endpoints.
    pub fn states(&self, x0: &DVector<f64>, xf: &DVector<f64>) -> Vec<DVector<f64>> {
        let lay = self.layout;
        let mut out = Vec::with_capacity(lay.horizon + 1);
        out.push(x0.clone());
        for t in 1..lay.horizon {
            out.push(self.values.rows(lay.x(t), lay.n).into_owned());
        }
        out.push(xf.clone());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Absolute max-norm residual tolerance.
    pub tolerance: f64,
    pub backtrack: f64,
    pub min_step: f64,
    /// Use central differences for the whole residual Jacobian.
    pub finite_difference_jacobian: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            tolerance: 1e-10,
            backtrack: 0.5,
            min_step: 2f64.powi(-30),
            finite_difference_jacobian: false,
        }
    }
}

impl NewtonOptions {
    fn check(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 || self.max_iterations == 0 {
            return Err(Error::InvalidInput(format!(
                "Newton options need tolerance > 0 and max_iterations >= 1, got {} and {}",
                self.tolerance, self.max_iterations
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0)
            || !(self.min_step > 0.0 && self.min_step <= 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "Newton options need backtrack in (0, 1) and min_step in (0, 1], got {} and {}",
                self.backtrack, self.min_step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Residual max-norm after the step.
    pub residual: f64,
    /// Accepted step length; 0 for the initial record.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub trajectory: Trajectory,
    pub lift: ExtremalLift,
    pub unknowns: StackedUnknowns,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    /// Present when converged.
    pub certificate: Option<PmpCertificate>,
    pub warning: Option<String>,
}

/// Validated view of a problem for shooting.
struct System<'a> {
    spec: &'a ProblemSpec,
    x0: &'a DVector<f64>,
    xf: &'a DVector<f64>,
    full: &'a FrequencyConstraint,
    reduced: FrequencyConstraint,
    layout: StackedLayout,
}

impl<'a> System<'a> {
    fn new(spec: &'a ProblemSpec, x0: &'a DVector<f64>, xf: &'a DVector<f64>) -> Result<Self> {
        let full = spec.require_fc()?;
        match spec.dynamics {
            DynamicsModel::General(_) => {
                return Err(Error::Unsupported(
                    "general dynamics in shooting (needs LTI or control-affine)".into(),
                ))
            }
            DynamicsModel::Lti { .. } | DynamicsModel::ControlAffine(_) => {}
        }
        let horizon = spec.horizon;
        let n = spec.state_dim();
        for (name, x) in [("x0", x0), ("xf", xf)] {
            if x.len() != n {
                return Err(Error::shape(name, n, x.len()));
            }
        }
        for (t, set) in spec.state_sets.iter().enumerate() {
            let endpoint = t == 0 || t == horizon;
            match set {
                StateSet::Free => {}
                StateSet::Fixed(_) if endpoint => {}
                StateSet::Fixed(_) => {
                    return Err(Error::Unsupported(format!(
                        "FIXED state set at interior stage {t}"
                    )))
                }
                StateSet::Box { .. } => {
                    return Err(Error::Unsupported(format!("BOX state set at stage {t}")))
                }
            }
        }
        if let Some(t) = spec
            .control_sets
            .iter()
            .position(|s| matches!(s, ControlSet::Box { .. }))
        {
            return Err(Error::Unsupported(format!("BOX control set at stage {t}")));
        }
        let reduced = full.row_reduced();
        let layout = StackedLayout {
            n,
            m: spec.control_dim(),
            horizon,
            q: reduced.row_count(),
        };
        Ok(Self {
            spec,
            x0,
            xf,
            full,
            reduced,
            layout,
        })
    }

    fn check_unknowns(&self, z: &StackedUnknowns) -> Result<()> {
        if z.layout != self.layout || z.values.len() != self.layout.len() {
            return Err(Error::shape(
                "stacked unknowns",
                format!("{:?}", self.layout),
                format!("{:?} of length {}", z.layout, z.values.len()),
            ));
        }
        Ok(())
    }

    fn residual(&self, z: &StackedUnknowns) -> Result<DVector<f64>> {
        self.check_unknowns(z)?;
        let StackedLayout { n, m, horizon, q } = self.layout;
        let spec = self.spec;
        let states = z.states(self.x0, self.xf);
        let mut out = DVector::zeros(self.layout.len());
        let dyn_rows = 0;
        let adj_rows = horizon * n;
        let stat_rows = adj_rows + (horizon - 1) * n;
        let freq_rows = stat_rows + horizon * m;
        let mut freq = DVector::zeros(q);

        for t in 0..horizon {
            let (x, u, p) = (&states[t], z.control(t), z.adjoint(t));
            let f = spec.dynamics.eval(t, x, &u)?;
            out.rows_mut(dyn_rows + t * n, n)
                .copy_from(&(&states[t + 1] - f));

            if t >= 1 {
                let jx = spec.dynamics.jacobian_x(t, x, &u)?;
                let gx = spec.cost.grad_x(t, x, &u)?;
                let r = z.adjoint(t - 1) - jx.transpose() * &p + gx;
                out.rows_mut(adj_rows + (t - 1) * n, n).copy_from(&r);
            }

            let ju = spec.dynamics.jacobian_u(t, x, &u)?;
            let gu = spec.cost.grad_u(t, x, &u)?;
            let mut s = ju.transpose() * &p - gu;
            if q > 0 {
                let block = self.reduced.block(t);
                s -= block.transpose() * z.nu();
                freq += block * &u;
            }
            out.rows_mut(stat_rows + t * m, m).copy_from(&s);
        }
        out.rows_mut(freq_rows, q).copy_from(&freq);
        Ok(out)
    }

    fn jacobian(&self, z: &StackedUnknowns, finite_difference: bool) -> Result<DMatrix<f64>> {
        if finite_difference {
            return self.fd_jacobian(z);
        }
        self.check_unknowns(z)?;
        let lay = self.layout;
        let StackedLayout { n, m, horizon, q } = lay;
        let spec = self.spec;
        let states = z.states(self.x0, self.xf);
        let dim = lay.len();
        let mut jac = DMatrix::zeros(dim, dim);
        let adj_rows = horizon * n;
        let stat_rows = adj_rows + (horizon - 1) * n;
        let freq_rows = stat_rows + horizon * m;
        let eye = DMatrix::<f64>::identity(n, n);

        for t in 0..horizon {
            let (x, u, p) = (&states[t], z.control(t), z.adjoint(t));
            let jx = spec.dynamics.jacobian_x(t, x, &u)?;
            let ju = spec.dynamics.jacobian_u(t, x, &u)?;
            let interior = t >= 1;

            // (a) x_{t+1} − f_t(x_t, u_t)
            let row = t * n;
            if t + 1 < horizon {
                jac.view_mut((row, lay.x(t + 1)), (n, n)).copy_from(&eye);
            }
            if interior {
                jac.view_mut((row, lay.x(t)), (n, n)).copy_from(&(-&jx));
            }
            jac.view_mut((row, lay.u(t)), (n, m)).copy_from(&(-&ju));

            // Curvature: ∂(J_xᵀp)/∂u is the mixed term, ∂(J_uᵀp)/∂x its transpose.
            let mixed = spec
                .dynamics
                .mixed_adjoint_term(t, x, &p)
                .expect("shooting admits only LTI and control-affine dynamics")?;
            let (hxx, hxu, huu) = cost_hessians(spec, t, x, &u)?;

            // (b) p_{t−1} − J_xᵀ p_t + ∇_x c
            if interior {
                let row = adj_rows + (t - 1) * n;
                jac.view_mut((row, lay.p(t - 1)), (n, n)).copy_from(&eye);
                jac.view_mut((row, lay.p(t)), (n, n))
                    .copy_from(&(-jx.transpose()));
                let dxx = adjoint_state_curvature(spec, t, x, &u, &p)?;
                jac.view_mut((row, lay.x(t)), (n, n))
                    .copy_from(&(hxx - dxx));
                jac.view_mut((row, lay.u(t)), (n, m))
                    .copy_from(&(&hxu - &mixed));
            }

            // (c) J_uᵀ p_t − ∇_u c − F_tᵀ ν
            let row = stat_rows + t * m;
            jac.view_mut((row, lay.p(t)), (m, n))
                .copy_from(&ju.transpose());
            if interior {
                jac.view_mut((row, lay.x(t)), (m, n))
                    .copy_from(&(mixed.transpose() - hxu.transpose()));
            }
            jac.view_mut((row, lay.u(t)), (m, m)).copy_from(&(-huu));
            if q > 0 {
                let block = self.reduced.block(t);
                jac.view_mut((row, lay.nu()), (m, q))
                    .copy_from(&(-block.transpose()));
                // (d) Σ F_t u_t
                jac.view_mut((freq_rows, lay.u(t)), (q, m)).copy_from(block);
            }
        }
        Ok(jac)
    }

    fn fd_jacobian(&self, z: &StackedUnknowns) -> Result<DMatrix<f64>> {
        let dim = self.layout.len();
        let mut jac = DMatrix::zeros(dim, dim);
        let mut probe = z.clone();
        for k in 0..dim {
            let v = z.values[k];
            let h = fd_step(v);
            probe.values[k] = v + h;
            let plus = self.residual(&probe)?;
            probe.values[k] = v - h;
            let minus = self.residual(&probe)?;
            probe.values[k] = v;
            jac.set_column(k, &((plus - minus) / (2.0 * h)));
        }
        Ok(jac)
    }

    /// `F_fullᵀ ν_full = F_redᵀ ν_red`, minimum norm.
    fn full_multiplier(&self, nu_reduced: &DVector<f64>) -> DVector<f64> {
        if self.full.row_count() == 0 {
            return DVector::zeros(0);
        }
        let image = self.reduced.stacked().transpose() * nu_reduced;
        linalg::min_norm_solve(&self.full.stacked().transpose(), &image).0
    }

    fn reduced_multiplier(&self, nu_full: &DVector<f64>) -> DVector<f64> {
        if self.layout.q == 0 {
            return DVector::zeros(0);
        }
        self.reduced.stacked() * (self.full.stacked().transpose() * nu_full)
    }

    fn pack(
        &self,
        states: &[DVector<f64>],
        controls: &[DVector<f64>],
        adjoints: &[DVector<f64>],
        nu_full: &DVector<f64>,
    ) -> StackedUnknowns {
        let lay = self.layout;
        let mut z = StackedUnknowns::zeros(lay);
        for t in 1..lay.horizon {
            z.values.rows_mut(lay.x(t), lay.n).copy_from(&states[t]);
        }
        for t in 0..lay.horizon {
            z.values.rows_mut(lay.u(t), lay.m).copy_from(&controls[t]);
            z.values.rows_mut(lay.p(t), lay.n).copy_from(&adjoints[t]);
        }
        let nu = self.reduced_multiplier(nu_full);
        z.values.rows_mut(lay.nu(), lay.q).copy_from(&nu);
        z
    }

    /// The spec with both endpoints fixed at the shooting boundary values.
    fn endpoint_spec(&self) -> ProblemSpec {
        let mut spec = self.spec.clone();
        spec.state_sets[0] = StateSet::Fixed(self.x0.clone());
        spec.state_sets[self.layout.horizon] = StateSet::Fixed(self.xf.clone());
        spec
    }
}

/// Cost Hessian blocks `(∇²_xx c, ∇²_xu c, ∇²_uu c)`; central differences of
/// the gradients for general costs.
fn cost_hessians(
    spec: &ProblemSpec,
    t: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (n, m) = (x.len(), u.len());
    if let CostModel::Quadratic { q, r } = &spec.cost {
        return Ok((q.clone(), DMatrix::zeros(n, m), r.clone()));
    }
    let mut hxx = DMatrix::zeros(n, n);
    let mut hxu = DMatrix::zeros(n, m);
    let mut huu = DMatrix::zeros(m, m);
    let mut xp = x.clone();
    for k in 0..n {
        let h = fd_step(x[k]);
        xp[k] = x[k] + h;
        let plus = spec.cost.grad_x(t, &xp, u)?;
        xp[k] = x[k] - h;
        let minus = spec.cost.grad_x(t, &xp, u)?;
        xp[k] = x[k];
        hxx.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    let mut up = u.clone();
    for j in 0..m {
        let h = fd_step(u[j]);
        up[j] = u[j] + h;
        let (gx_plus, gu_plus) = (spec.cost.grad_x(t, x, &up)?, spec.cost.grad_u(t, x, &up)?);
        up[j] = u[j] - h;
        let (gx_minus, gu_minus) = (spec.cost.grad_x(t, x, &up)?, spec.cost.grad_u(t, x, &up)?);
        up[j] = u[j];
        hxu.set_column(j, &((gx_plus - gx_minus) / (2.0 * h)));
        huu.set_column(j, &((gu_plus - gu_minus) / (2.0 * h)));
    }
    Ok((hxx, hxu, huu))
}

/// `∂/∂x (J_x(x, u)ᵀ p)`: zero for LTI, central differences otherwise.
fn adjoint_state_curvature(
    spec: &ProblemSpec,
    t: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    if spec.dynamics.is_lti() {
        return Ok(DMatrix::zeros(n, n));
    }
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for k in 0..n {
        let h = fd_step(x[k]);
        xp[k] = x[k] + h;
        let plus = spec.dynamics.jacobian_x(t, &xp, u)?.transpose() * p;
        xp[k] = x[k] - h;
        let minus = spec.dynamics.jacobian_x(t, &xp, u)?.transpose() * p;
        xp[k] = x[k];
        out.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    Ok(out)
}

/// Layout of the stacked unknowns for `spec`.
pub fn stacked_layout(
    spec: &ProblemSpec,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
) -> Result<StackedLayout> {
    Ok(System::new(spec, x0, xf)?.layout)
}

/// Packs a trajectory, adjoints and a multiplier expressed in the problem's
/// own frequency rows into stacked unknowns.
pub fn pack_unknowns(
    spec: &ProblemSpec,
    traj: &Trajectory,
    adjoints: &[DVector<f64>],
    nu: &DVector<f64>,
) -> Result<StackedUnknowns> {
    let (x0, xf) = (&traj.states[0], &traj.states[traj.horizon()]);
    let sys = System::new(spec, x0, xf)?;
    if traj.horizon() != spec.horizon || adjoints.len() != spec.horizon {
        return Err(Error::shape(
            "trajectory horizon",
            spec.horizon,
            traj.horizon(),
        ));
    }
    if nu.len() != sys.full.row_count() {
        return Err(Error::shape("nu", sys.full.row_count(), nu.len()));
    }
    Ok(sys.pack(&traj.states, &traj.controls, adjoints, nu))
}

pub fn assemble_residual(
    z: &StackedUnknowns,
    spec: &ProblemSpec,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
) -> Result<DVector<f64>> {
    System::new(spec, x0, xf)?.residual(z)
}

/// Jacobian of [`assemble_residual`] with respect to `z`. Curvature terms of
/// the dynamics and of non-quadratic costs use central differences.
pub fn residual_jacobian(
    z: &StackedUnknowns,
    spec: &ProblemSpec,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
    finite_difference: bool,
) -> Result<DMatrix<f64>> {
    System::new(spec, x0, xf)?.jacobian(z, finite_difference)
}

/// Initial guess plus a warning when the zero fallback was used.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub unknowns: StackedUnknowns,
    pub warning: Option<String>,
}

/// LQ solution of the problem linearized about `(x0, 0)`; the zero vector
/// with a warning when that problem has no solution.
pub fn default_initialization(
    spec: &ProblemSpec,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
) -> Result<Initialization> {
    let sys = System::new(spec, x0, xf)?;
    let (n, m) = (sys.layout.n, sys.layout.m);
    let u0 = DVector::zeros(m);
    let a = spec.dynamics.jacobian_x(0, x0, &u0)?;
    let b = spec.dynamics.jacobian_u(0, x0, &u0)?;
    let (q, _, r) = cost_hessians(spec, 0, x0, &u0)?;

    let fallback = |reason: String| Initialization {
        unknowns: StackedUnknowns::zeros(sys.layout),
        warning: Some(format!("zero initialization: {reason}")),
    };
    if b.amax() == 0.0 {
        return Ok(fallback("linearized input matrix is zero".into()));
    }
    let sol = match lq::lq_transfer_freq_solve(&a, &b, &q, &r, spec.horizon, x0, xf, sys.full) {
        Ok(sol) => sol,
        Err(e) => return Ok(fallback(format!("linearized problem failed: {e}"))),
    };
    if sol.status != LqStatus::Solved {
        return Ok(fallback(
            format!("linearized problem is {:?}", sol.status).to_lowercase(),
        ));
    }
    debug_assert_eq!(sol.trajectory.state_dim(), n);
    Ok(Initialization {
        unknowns: sys.pack(
            &sol.trajectory.states,
            &sol.trajectory.controls,
            &sol.adjoints,
            &sol.nu,
        ),
        warning: None,
    })
}

fn solve_newton_step(jac: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if linalg::numerical_rank(jac) < jac.ncols() {
        return None;
    }
    let step = jac.clone().lu().solve(rhs)?;
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Damped Newton iteration from `init` (or [`default_initialization`]).
///
/// A step is accepted only if it does not increase the residual max-norm;
/// when no step length down to `min_step` qualifies, the iteration stops
/// unconverged.
pub fn newton_solve(
    spec: &ProblemSpec,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
    init: Option<StackedUnknowns>,
    opts: &NewtonOptions,
) -> Result<ShootingResult> {
    opts.check()?;
    let sys = System::new(spec, x0, xf)?;
    let (mut z, warning) = match init {
        Some(z) => {
            sys.check_unknowns(&z)?;
            (z, None)
        }
        None => {
            let init = default_initialization(spec, x0, xf)?;
            (init.unknowns, init.warning)
        }
    };

    let mut r = sys.residual(&z)?;
    let mut norm = r.amax();
    let mut trace = vec![IterationRecord {
        iteration: 0,
        residual: norm,
        step: 0.0,
    }];
    let mut iterations = 0;
    while norm > opts.tolerance && iterations < opts.max_iterations {
        let jac = sys.jacobian(&z, opts.finite_difference_jacobian)?;
        let Some(dz) = solve_newton_step(&jac, &(-&r)) else {
            return Err(Error::RankDeficient {
                iteration: iterations,
                residual: norm,
            });
        };
        iterations += 1;

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= opts.min_step {
            let trial = StackedUnknowns {
                layout: z.layout,
                values: &z.values + &dz * alpha,
            };
            if let Ok(tr) = sys.residual(&trial) {
                let tn = tr.amax();
                if tn.is_finite() && tn <= norm {
                    accepted = Some((trial, tr, tn));
                    break;
                }
            }
            alpha *= opts.backtrack;
        }
        let Some((trial, tr, tn)) = accepted else {
            break;
        };
        let stalled = tn == norm;
        z = trial;
        r = tr;
        norm = tn;
        trace.push(IterationRecord {
            iteration: iterations,
            residual: norm,
            step: alpha,
        });
        if stalled {
            break;
        }
    }
    let converged = norm <= opts.tolerance;

    let states = z.states(x0, xf);
    let controls: Vec<_> = (0..spec.horizon).map(|t| z.control(t)).collect();
    let adjoints: Vec<_> = (0..spec.horizon).map(|t| z.adjoint(t)).collect();
    let trajectory = Trajectory::new(states, controls);
    let cert_spec = sys.endpoint_spec();
    let nu = sys.full_multiplier(&z.nu());
    let lift = ExtremalLift::recover(&cert_spec, &trajectory, 1.0, nu, adjoints)?;
    let certificate = if converged {
        Some(verify_pmp(
            &trajectory,
            &lift,
            &cert_spec,
            CERTIFICATE_TOLERANCE,
        )?)
    } else {
        None
    };
    Ok(ShootingResult {
        trajectory,
        lift,
        unknowns: z,
        iterations,
        final_residual: norm,
        converged,
        trace,
        certificate,
        warning,
    })
}
