//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the solvers under test; the frequency rows are
//! rebuilt from a naive DFT double sum and the QP, null-space and nonlinear
//! program oracles use their own linear algebra paths.

#![allow(dead_code)]

pub mod fixtures;

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;

/// `(1/√N) Σ_t x_t exp(−i2πξt/N)` by direct summation.
pub fn naive_dft(signal: &[f64]) -> Vec<C64> {
    let n = signal.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|xi| {
            let mut acc = C64::new(0.0, 0.0);
            for (t, &x) in signal.iter().enumerate() {
                let angle = -2.0 * PI * (xi as f64) * (t as f64) / (n as f64);
                acc += C64::new(angle.cos(), angle.sin()) * x;
            }
            acc * scale
        })
        .collect()
}

/// Real rows (over time-stacked controls `u_0..u_{N−1}`) that vanish exactly
/// when every banned component of every channel is zero. Rows may repeat.
pub fn naive_band_rows(banned: &[Vec<usize>], horizon: usize, m: usize) -> DMatrix<f64> {
    let scale = 1.0 / (horizon as f64).sqrt();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, list) in banned.iter().enumerate() {
        for &xi in list {
            let mut re = vec![0.0; horizon * m];
            let mut im = vec![0.0; horizon * m];
            for t in 0..horizon {
                let angle = -2.0 * PI * (xi as f64) * (t as f64) / (horizon as f64);
                re[t * m + k] = angle.cos() * scale;
                im[t * m + k] = angle.sin() * scale;
            }
            rows.push(re);
            rows.push(im);
        }
    }
    let mut out = DMatrix::zeros(rows.len(), horizon * m);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Eigenvectors of `MᵀM` with eigenvalue at most `rel·λ_max`: a basis of
/// the numerical null space of `M`.
pub fn brute_null_space(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] <= rel * lmax.max(1e-300))
        .collect();
    let mut basis = DMatrix::zeros(m.ncols(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    basis
}

/// Orthonormal basis (as rows) of the span of the rows of `f`.
pub fn brute_row_basis(f: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    if f.nrows() == 0 {
        return DMatrix::zeros(0, f.ncols());
    }
    let eig = SymmetricEigen::new(f.transpose() * f);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > rel * lmax)
        .collect();
    let mut out = DMatrix::zeros(keep.len(), f.ncols());
    for (r, &i) in keep.iter().enumerate() {
        out.set_row(r, &eig.eigenvectors.column(i).transpose());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleVerdict {
    Normal,
    Abnormal,
    Undetermined,
}

/// Normality of the frequency-constrained transfer by direct null-space
/// computation of `[R_stack | −G]`, with `R_stack` rows `Bᵀ(Aᵀ)^{N−1−t}`.
pub fn brute_normality(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    horizon: usize,
    banned: &[Vec<usize>],
) -> (OracleVerdict, usize) {
    let (n, m) = b.shape();
    let rows = naive_band_rows(banned, horizon, m);
    let basis = brute_row_basis(&rows, 1e-10);
    let q = basis.nrows();
    let mut aug = DMatrix::zeros(m * horizon, n + q);
    for t in 0..horizon {
        let mut power = DMatrix::<f64>::identity(n, n);
        for _ in 0..(horizon - 1 - t) {
            power = a.transpose() * power;
        }
        let block = b.transpose() * power;
        aug.view_mut((t * m, 0), (m, n)).copy_from(&block);
    }
    if q > 0 {
        aug.view_mut((0, n), (m * horizon, q))
            .copy_from(&(-basis.transpose()));
    }
    let nullity = brute_null_space(&aug, 1e-12).ncols();
    let verdict = if q + n > m * horizon {
        OracleVerdict::Abnormal
    } else if nullity == 0 {
        OracleVerdict::Normal
    } else {
        OracleVerdict::Undetermined
    };
    (verdict, nullity)
}

/// Equality-constrained QP `min ½wᵀHw + gᵀw  s.t.  Cw = d` by the null-space
/// method. Returns `None` when the constraints are inconsistent.
pub fn null_space_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Option<DVector<f64>> {
    // Particular solution w0 = Cᵀ (CCᵀ)⁺ d through a symmetric eigensolve.
    let eig = SymmetricEigen::new(c * c.transpose());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mut coeffs = eig.eigenvectors.transpose() * d;
    for (ci, &l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *ci = if l > 1e-14 * lmax { *ci / l } else { 0.0 };
    }
    let w0 = c.transpose() * (&eig.eigenvectors * coeffs);
    if (c * &w0 - d).amax() > 1e-8 * (1.0 + d.amax()) {
        return None;
    }
    let z = brute_null_space(c, 1e-14);
    if z.ncols() == 0 {
        return Some(w0);
    }
    let hr = z.transpose() * h * &z;
    let gr = z.transpose() * (h * &w0 + g);
    let y = hr.cholesky()?.solve(&(-gr));
    Some(w0 + z * y)
}

/// `(controls, states, cost)`.
pub type OracleSolution = (Vec<DVector<f64>>, Vec<DVector<f64>>, f64);

/// Condensed frequency-constrained LQ transfer solved as a dense QP over the
/// stacked controls. Returns `(controls, states, cost)`.
#[allow(clippy::too_many_arguments)]
pub fn qp_transfer_oracle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
    banned: &[Vec<usize>],
) -> Option<OracleSolution> {
    let (n, m) = b.shape();
    let dim = m * horizon;
    // x_t = Φ_t x0 + Γ_t w
    let mut phi = vec![DMatrix::<f64>::identity(n, n)];
    let mut gamma = vec![DMatrix::<f64>::zeros(n, dim)];
    for t in 0..horizon {
        let next_phi = a * &phi[t];
        let mut next_gamma = a * &gamma[t];
        let mut cols = next_gamma.view_mut((0, t * m), (n, m));
        cols += b;
        phi.push(next_phi);
        gamma.push(next_gamma);
    }
    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    for t in 0..horizon {
        h += gamma[t].transpose() * q * &gamma[t];
        g += gamma[t].transpose() * q * (&phi[t] * x0);
        let mut block = h.view_mut((t * m, t * m), (m, m));
        block += r;
    }
    let band = naive_band_rows(banned, horizon, m);
    let mut c = DMatrix::zeros(n + band.nrows(), dim);
    c.view_mut((0, 0), (n, dim)).copy_from(&gamma[horizon]);
    c.view_mut((n, 0), (band.nrows(), dim)).copy_from(&band);
    let mut d = DVector::zeros(n + band.nrows());
    d.rows_mut(0, n).copy_from(&(xf - &phi[horizon] * x0));

    let w = null_space_qp(&h, &g, &c, &d)?;
    let controls: Vec<DVector<f64>> = (0..horizon)
        .map(|t| w.rows(t * m, m).into_owned())
        .collect();
    let states: Vec<DVector<f64>> = (0..=horizon)
        .map(|t| &phi[t] * x0 + &gamma[t] * &w)
        .collect();
    let cost = (0..horizon)
        .map(|t| {
            0.5 * states[t].dot(&(q * &states[t])) + 0.5 * controls[t].dot(&(r * &controls[t]))
        })
        .sum();
    Some((controls, states, cost))
}

fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, w: &[f64]) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + w[i].abs());
            probe[i] = w[i] + h;
            let plus = f(&probe);
            probe[i] = w[i] - h;
            let minus = f(&probe);
            probe[i] = w[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Unconstrained BFGS with Armijo backtracking and central-difference
/// gradients.
pub fn bfgs(f: &dyn Fn(&[f64]) -> f64, start: &[f64], iterations: usize, gtol: f64) -> Vec<f64> {
    let dim = start.len();
    let mut w = DVector::from_column_slice(start);
    let mut fw = f(w.as_slice());
    let mut grad = DVector::from_vec(fd_gradient(f, w.as_slice()));
    let mut hinv = DMatrix::<f64>::identity(dim, dim);
    for _ in 0..iterations {
        if grad.amax() <= gtol {
            break;
        }
        let mut dir = -(&hinv * &grad);
        if dir.dot(&grad) >= 0.0 {
            hinv = DMatrix::identity(dim, dim);
            dir = -grad.clone();
        }
        let slope = dir.dot(&grad);
        let mut step = 1.0;
        let mut next = None;
        while step > 1e-14 {
            let trial = &w + &dir * step;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fw + 1e-4 * step * slope {
                next = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft)) = next else {
            break;
        };
        let new_grad = DVector::from_vec(fd_gradient(f, trial.as_slice()));
        let s = &trial - &w;
        let y = &new_grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-16 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(dim, dim);
            let left = &eye - &s * y.transpose() * rho;
            let right = &eye - &y * s.transpose() * rho;
            hinv = &left * &hinv * &right + &s * s.transpose() * rho;
        }
        w = trial;
        fw = ft;
        grad = new_grad;
    }
    w.as_slice().to_vec()
}

/// `min J(w)  s.t.  c(w) = 0` by an augmented Lagrangian around [`bfgs`].
/// Returns the minimizer and its constraint violation.
pub fn augmented_lagrangian(
    cost: &dyn Fn(&[f64]) -> f64,
    constraints: &dyn Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
) -> (Vec<f64>, f64) {
    let mut w = start.to_vec();
    let mut lambda = vec![0.0; constraints(start).len()];
    let mut rho = 10.0;
    let mut violation = f64::INFINITY;
    for _ in 0..40 {
        let lam = lambda.clone();
        let lagrangian = |v: &[f64]| {
            let c = constraints(v);
            cost(v)
                + c.iter().zip(&lam).map(|(ci, li)| li * ci).sum::<f64>()
                + 0.5 * rho * c.iter().map(|ci| ci * ci).sum::<f64>()
        };
        w = bfgs(&lagrangian, &w, 500, 1e-11);
        let c = constraints(&w);
        let new_violation = c.iter().fold(0.0_f64, |acc, ci| acc.max(ci.abs()));
        for (li, ci) in lambda.iter_mut().zip(&c) {
            *li += rho * ci;
        }
        if new_violation > 0.25 * violation {
            rho *= 4.0;
        }
        violation = new_violation;
        if violation < 1e-12 {
            break;
        }
    }
    (w, violation)
}

/// Direct transcription of a scalar control-affine problem
/// `x_{t+1} = x_t + (1 + γx_t)u_t`, cost `Σ ½x_t² + ½u_t²`, `x_N = xf`, with
/// optional linear equality rows on `u`. Best of several seeded starts.
pub fn toy_transcription_oracle(
    gain: f64,
    horizon: usize,
    x0: f64,
    xf: f64,
    band: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
    starts: usize,
) -> (Vec<f64>, f64) {
    let rollout = |u: &[f64]| {
        let mut x = vec![x0];
        for &ut in u {
            let last = *x.last().unwrap();
            x.push(last + (1.0 + gain * last) * ut);
        }
        x
    };
    let cost = |u: &[f64]| {
        let x = rollout(u);
        (0..horizon)
            .map(|t| 0.5 * x[t] * x[t] + 0.5 * u[t] * u[t])
            .sum::<f64>()
    };
    let constraints = |u: &[f64]| {
        let x = rollout(u);
        let mut c = vec![x[horizon] - xf];
        for i in 0..band.nrows() {
            c.push((0..horizon).map(|t| band[(i, t)] * u[t]).sum());
        }
        c
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in 0..starts {
        let start: Vec<f64> = if s == 0 {
            vec![(xf - x0) / horizon as f64; horizon]
        } else {
            (0..horizon).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let (u, violation) = augmented_lagrangian(&cost, &constraints, &start);
        if violation > 1e-9 {
            continue;
        }
        let value = cost(&u);
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((u, value));
        }
    }
    best.expect("no multi-start run reached feasibility")
}

/// Random square matrix rescaled to spectral radius `radius`.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let rho = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    if rho < 1e-9 {
        return a;
    }
    a * (radius / rho)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// `LLᵀ` with `L` of the given rank, plus `shift·I`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, shift: f64) -> DMatrix<f64> {
    let l = random_matrix(rng, n, rank);
    let mut out = &l * l.transpose() + DMatrix::identity(n, n) * shift;
    out = (&out + out.transpose()) * 0.5;
    out
}

/// Random LQ data `(A, B, Q, R)`.
pub fn random_lq(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let radius = rng.gen_range(0.5..1.1);
    let a = random_stable(rng, n, radius);
    let b = random_matrix(rng, n, m);
    let rank = rng.gen_range(0..=n);
    let q = random_psd(rng, n, rank, 0.0);
    let r = random_psd(rng, m, m, 0.1);
    (a, b, q, r)
}

/// Random banned lists: each channel bans a random subset of `0..N`.
pub fn random_bans(
    rng: &mut ChaCha8Rng,
    horizon: usize,
    m: usize,
    density: f64,
) -> Vec<Vec<usize>> {
    (0..m)
        .map(|_| (0..horizon).filter(|_| rng.gen_bool(density)).collect())
        .collect()
}

pub fn max_rel_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let scale = a
        .iter()
        .chain(b)
        .map(|v| v.amax())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
        / scale
}
