//! Exact solvers for linear-quadratic problems with stage cost
//! `½⟨x, Qx⟩ + ½⟨u, Ru⟩` and dynamics `x_{t+1} = Ax_t + Bu_t`.
//!
//! - [`riccati_solve`]: backward Riccati recursion, free final state.
//! - [`lq_pmp_solve`]: the same problem through the stacked linear system of
//!   state, adjoint and stationarity equations in normal form.
//! - [`lq_transfer_solve`] / [`lq_transfer_freq_solve`]: fixed-endpoint
//!   transfer, optionally with banned control frequencies, solved as one
//!   KKT system in `(x, u, p, ν)` with free boundary adjoints.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{classify_normality_freq, NormalityClass};
use crate::linalg;
use crate::spectrum::FrequencyConstraint;
use crate::trajectory::Trajectory;

/// A transfer is declared infeasible when the least-squares residual of the
/// stacked system exceeds `INFEASIBILITY_TOLERANCE · (1 + ‖rhs‖)`.
pub const INFEASIBILITY_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LqStatus {
    Solved,
    Infeasible,
    Singular,
}

/// Cost-to-go matrices `S_0..S_N` and gains `K_0..K_{N-1}` with `u_t = K_t x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub values: Vec<DMatrix<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    /// `½⟨x_0, S_0 x_0⟩`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqSolution {
    pub trajectory: Trajectory,
    /// `p_0..p_{N-1}`.
    pub adjoints: Vec<DVector<f64>>,
    /// Frequency multiplier, empty when there are no frequency rows.
    pub nu: DVector<f64>,
    pub cost: f64,
    pub status: LqStatus,
    /// `‖K z − rhs‖₂` of the stacked system.
    pub lsq_residual: f64,
}

/// Dimensions of an LQ instance, checked once up front.
#[derive(Debug, Clone, Copy)]
struct Dims {
    n: usize,
    m: usize,
    horizon: usize,
}

fn check_dims(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
) -> Result<Dims> {
    if horizon == 0 {
        return Err(Error::InvalidHorizon(0));
    }
    let n = a.nrows();
    let m = b.ncols();
    let expect = |name: &str, mat: &DMatrix<f64>, rows: usize, cols: usize| {
        if mat.shape() != (rows, cols) {
            Err(Error::shape(
                name,
                format!("{rows}x{cols}"),
                format!("{}x{}", mat.nrows(), mat.ncols()),
            ))
        } else {
            Ok(())
        }
    };
    expect("A", a, n, n)?;
    expect("B", b, n, m)?;
    expect("Q", q, n, n)?;
    expect("R", r, m, m)?;
    if x0.len() != n {
        return Err(Error::shape("x0", n, x0.len()));
    }
    Ok(Dims { n, m, horizon })
}

fn quadratic_cost(q: &DMatrix<f64>, r: &DMatrix<f64>, traj: &Trajectory) -> f64 {
    traj.controls
        .iter()
        .zip(&traj.states)
        .map(|(u, x)| 0.5 * x.dot(&(q * x)) + 0.5 * u.dot(&(r * u)))
        .sum()
}

pub fn riccati_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
) -> Result<(RiccatiSolution, Trajectory)> {
    let Dims { n, .. } = check_dims(a, b, q, r, horizon, x0)?;

    let mut values = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut gains = vec![DMatrix::zeros(b.ncols(), n); horizon];
    for t in (0..horizon).rev() {
        let next = &values[t + 1];
        let bt_s = b.transpose() * next;
        let gram = r + &bt_s * b;
        let chol = gram.cholesky().ok_or(Error::Singular { stage: t })?;
        let k = -chol.solve(&(&bt_s * a));
        let closed = a + b * &k;
        let s = closed.transpose() * next * &closed + k.transpose() * r * &k + q;
        // Symmetrize to keep rounding from accumulating over long horizons.
        values[t] = (&s + s.transpose()) * 0.5;
        gains[t] = k;
    }

    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(x0.clone());
    for (t, k) in gains.iter().enumerate() {
        let u = k * &states[t];
        states.push(a * &states[t] + b * &u);
        controls.push(u);
    }
    let cost = 0.5 * x0.dot(&(&values[0] * x0));
    Ok((
        RiccatiSolution {
            values,
            gains,
            cost,
        },
        Trajectory::new(states, controls),
    ))
}

/// Offsets of each unknown block in the stacked vector
/// `(x_0..x_N, u_0..u_{N-1}, p_0..p_{N-1}, ν)`.
#[derive(Debug, Clone, Copy)]
struct KktLayout {
    n: usize,
    m: usize,
    horizon: usize,
    q: usize,
}

impl KktLayout {
    fn x(&self, t: usize) -> usize {
        t * self.n
    }

    fn u(&self, t: usize) -> usize {
        (self.horizon + 1) * self.n + t * self.m
    }

    fn p(&self, t: usize) -> usize {
        (self.horizon + 1) * self.n + self.horizon * self.m + t * self.n
    }

    fn nu(&self) -> usize {
        self.p(self.horizon)
    }

    fn len(&self) -> usize {
        self.nu() + self.q
    }

    fn unpack(&self, z: &DVector<f64>) -> (Trajectory, Vec<DVector<f64>>, DVector<f64>) {
        let seg = |start: usize, len: usize| z.rows(start, len).into_owned();
        let states = (0..=self.horizon).map(|t| seg(self.x(t), self.n)).collect();
        let controls = (0..self.horizon).map(|t| seg(self.u(t), self.m)).collect();
        let adjoints = (0..self.horizon).map(|t| seg(self.p(t), self.n)).collect();
        (
            Trajectory::new(states, controls),
            adjoints,
            seg(self.nu(), self.q),
        )
    }
}

/// Builds rows shared by every stacked LQ system: `x_0 = x0`, the dynamics,
/// the interior adjoint recursion and stationarity. Returns the next free row.
#[allow(clippy::too_many_arguments)]
fn fill_common_rows(
    k: &mut DMatrix<f64>,
    rhs: &mut DVector<f64>,
    lay: &KktLayout,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    fc: Option<&FrequencyConstraint>,
) -> usize {
    let (n, m) = (lay.n, lay.m);
    let id = DMatrix::<f64>::identity(n, n);
    let mut row = 0;

    k.view_mut((row, lay.x(0)), (n, n)).copy_from(&id);
    rhs.rows_mut(row, n).copy_from(x0);
    row += n;

    // x_{t+1} − A x_t − B u_t = 0
    for t in 0..lay.horizon {
        k.view_mut((row, lay.x(t + 1)), (n, n)).copy_from(&id);
        k.view_mut((row, lay.x(t)), (n, n)).copy_from(&(-a));
        k.view_mut((row, lay.u(t)), (n, m)).copy_from(&(-b));
        row += n;
    }

    // p_{t−1} − Aᵀ p_t + Q x_t = 0
    let at = a.transpose();
    for t in 1..lay.horizon {
        k.view_mut((row, lay.p(t - 1)), (n, n)).copy_from(&id);
        k.view_mut((row, lay.p(t)), (n, n)).copy_from(&(-&at));
        k.view_mut((row, lay.x(t)), (n, n)).copy_from(q);
        row += n;
    }

    // R u_t − Bᵀ p_t + F_tᵀ ν = 0
    let bt = b.transpose();
    for t in 0..lay.horizon {
        k.view_mut((row, lay.u(t)), (m, m)).copy_from(r);
        k.view_mut((row, lay.p(t)), (m, n)).copy_from(&(-&bt));
        if let Some(fc) = fc {
            k.view_mut((row, lay.nu()), (m, lay.q))
                .copy_from(&fc.block(t).transpose());
        }
        row += m;
    }
    row
}

/// Free-endpoint LQ through the stacked normal-form maximum-principle system
/// `x_{t+1} = Ax_t + Bu_t`, `p_{t−1} = Aᵀp_t − Qx_t`, `Ru_t = Bᵀp_t`,
/// `x_0 = x0`, `p_{N−1} = 0`.
///
/// Since `p_{N−1} = 0`, the last control is always zero.
pub fn lq_pmp_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
) -> Result<LqSolution> {
    let Dims { n, m, horizon } = check_dims(a, b, q, r, horizon, x0)?;
    let lay = KktLayout {
        n,
        m,
        horizon,
        q: 0,
    };
    let dim = lay.len();
    let mut k = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut row = fill_common_rows(&mut k, &mut rhs, &lay, a, b, q, r, x0, None);
    k.view_mut((row, lay.p(horizon - 1)), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    row += n;
    debug_assert_eq!(row, dim);

    let empty = |status| {
        Ok(LqSolution {
            trajectory: Trajectory::new(
                vec![x0.clone(); horizon + 1],
                vec![DVector::zeros(m); horizon],
            ),
            adjoints: vec![DVector::zeros(n); horizon],
            nu: DVector::zeros(0),
            cost: f64::NAN,
            status,
            lsq_residual: f64::INFINITY,
        })
    };
    let Some(z) = k.clone().lu().solve(&rhs) else {
        return empty(LqStatus::Singular);
    };
    let lsq_residual = (&k * &z - &rhs).norm();
    if !lsq_residual.is_finite() || lsq_residual > INFEASIBILITY_TOLERANCE * (1.0 + rhs.norm()) {
        return empty(LqStatus::Singular);
    }
    let (trajectory, adjoints, nu) = lay.unpack(&z);
    let cost = quadratic_cost(q, r, &trajectory);
    Ok(LqSolution {
        trajectory,
        adjoints,
        nu,
        cost,
        status: LqStatus::Solved,
        lsq_residual,
    })
}

/// Fixed-endpoint transfer `x_0 = x0`, `x_N = xf` without frequency rows.
pub fn lq_transfer_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
) -> Result<LqSolution> {
    let dims = check_dims(a, b, q, r, horizon, x0)?;
    let fc = FrequencyConstraint::unconstrained(horizon, dims.m);
    solve_transfer(a, b, q, r, dims, x0, xf, &fc)
}

/// Fixed-endpoint transfer with `Σ_t F_t u_t = 0`.
///
/// Refuses to run with [`Error::AbnormalRegime`] when the normality
/// classifier proves every extremal abnormal. When the rows of `F` are
/// dependent the multiplier `ν` is not unique; the minimum-norm solution of
/// the stacked system is returned.
#[allow(clippy::too_many_arguments)]
pub fn lq_transfer_freq_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
    fc: &FrequencyConstraint,
) -> Result<LqSolution> {
    let dims = check_dims(a, b, q, r, horizon, x0)?;
    if fc.horizon() != horizon || fc.control_dim() != dims.m {
        return Err(Error::shape(
            "frequency constraint (horizon, control dim)",
            format!("({horizon}, {})", dims.m),
            format!("({}, {})", fc.horizon(), fc.control_dim()),
        ));
    }
    let verdict = classify_normality_freq(a, b, horizon, fc)?;
    if verdict.classification == NormalityClass::AllAbnormal {
        return Err(Error::AbnormalRegime(verdict));
    }
    solve_transfer(a, b, q, r, dims, x0, xf, fc)
}

#[allow(clippy::too_many_arguments)]
fn solve_transfer(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    dims: Dims,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
    fc: &FrequencyConstraint,
) -> Result<LqSolution> {
    let Dims { n, m, horizon } = dims;
    if xf.len() != n {
        return Err(Error::shape("xf", n, xf.len()));
    }
    let lay = KktLayout {
        n,
        m,
        horizon,
        q: fc.row_count(),
    };
    let dim = lay.len();
    let mut k = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut row = fill_common_rows(&mut k, &mut rhs, &lay, a, b, q, r, x0, Some(fc));

    k.view_mut((row, lay.x(horizon)), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    rhs.rows_mut(row, n).copy_from(xf);
    row += n;

    for t in 0..horizon {
        k.view_mut((row, lay.u(t)), (lay.q, m))
            .copy_from(fc.block(t));
    }
    row += lay.q;
    debug_assert_eq!(row, dim);

    let (z, lsq_residual) = linalg::min_norm_solve(&k, &rhs);
    let status = if lsq_residual > INFEASIBILITY_TOLERANCE * (1.0 + rhs.norm()) {
        LqStatus::Infeasible
    } else {
        LqStatus::Solved
    };
    let (trajectory, adjoints, nu) = lay.unpack(&z);
    let cost = quadratic_cost(q, r, &trajectory);
    Ok(LqSolution {
        trajectory,
        adjoints,
        nu,
        cost,
        status,
        lsq_residual,
    })
}

/// `max_t ‖R u_t − Bᵀ p_t + F_tᵀ ν‖∞`.
pub fn stationarity_residual(
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    fc: &FrequencyConstraint,
    sol: &LqSolution,
) -> f64 {
    sol.trajectory
        .controls
        .iter()
        .zip(&sol.adjoints)
        .enumerate()
        .map(|(t, (u, p))| {
            let mut g = r * u - b.transpose() * p;
            if fc.row_count() > 0 {
                g += fc.block(t).transpose() * &sol.nu;
            }
            g.amax()
        })
        .fold(0.0, f64::max)
}
