//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, SVD};

/// Absolute floor below which a singular value is always treated as zero.
pub const RANK_FLOOR: f64 = 1e-12;

/// Threshold for treating singular values as zero: `max(rows, cols)·σ_max·1e-14`,
/// never below [`RANK_FLOOR`].
pub fn rank_threshold(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    (rows.max(cols) as f64 * sigma_max * 1e-14).max(RANK_FLOOR)
}

/// Thin singular value decomposition `m = U·diag(σ)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    fn from_nalgebra(svd: SVD<f64, Dyn, Dyn>) -> Option<Self> {
        Some(Self {
            u: svd.u?,
            singular_values: svd.singular_values,
            v_t: svd.v_t?,
        })
    }

    fn transposed(self) -> Self {
        Self {
            u: self.v_t.transpose(),
            singular_values: self.singular_values,
            v_t: self.u.transpose(),
        }
    }

    fn reconstruction_error(&self, m: &DMatrix<f64>) -> f64 {
        let scaled = &self.u * DMatrix::from_diagonal(&self.singular_values);
        max_abs(&(scaled * &self.v_t - m))
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values.iter().cloned().fold(0.0, f64::max)
    }
}

/// SVD that checks its own reconstruction.
///
/// nalgebra's default deflation threshold can stop early on rank-deficient
/// matrices and return factors that do not reproduce `m`. Tighter
/// thresholds and the transposed problem are tried in turn; the most
/// accurate factorization is kept.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    let dims = m.nrows().max(m.ncols()).max(1) as f64;
    let accept = 64.0 * dims * f64::EPSILON * max_abs(m).max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, Svd)> = None;
    for eps in [1e-22, 1e-19, f64::EPSILON] {
        for transpose in [false, true] {
            let target = if transpose { m.transpose() } else { m.clone() };
            let Some(raw) = SVD::try_new(target, true, true, eps, 100_000) else {
                continue;
            };
            let Some(mut candidate) = Svd::from_nalgebra(raw) else {
                continue;
            };
            if transpose {
                candidate = candidate.transposed();
            }
            let err = candidate.reconstruction_error(m);
            if err <= accept {
                return candidate;
            }
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, candidate));
            }
        }
    }
    match best {
        Some((_, candidate)) => candidate,
        None => Svd::from_nalgebra(SVD::new(m.clone(), true, true))
            .expect("both factors were requested"),
    }
}

/// Numerical rank under [`rank_threshold`]. Empty matrices have rank 0.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let dec = svd(m);
    let tol = rank_threshold(m.nrows(), m.ncols(), dec.max_singular_value());
    dec.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Orthonormal basis (as rows) of the row space of `m`.
pub fn row_space_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    if m.nrows() == 0 || cols == 0 {
        return DMatrix::zeros(0, cols);
    }
    let dec = svd(m);
    let tol = rank_threshold(m.nrows(), cols, dec.max_singular_value());
    let keep: Vec<usize> = (0..dec.singular_values.len())
        .filter(|&i| dec.singular_values[i] > tol)
        .collect();
    let mut basis = DMatrix::zeros(keep.len(), cols);
    for (r, &i) in keep.iter().enumerate() {
        basis.set_row(r, &dec.v_t.row(i));
    }
    basis
}

/// Minimum-norm least-squares solve of `k z = rhs`.
///
/// Returns the solution and the residual norm `‖k z − rhs‖₂`.
pub fn min_norm_solve(k: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
    if k.ncols() == 0 {
        return (DVector::zeros(0), rhs.norm());
    }
    if k.nrows() == 0 {
        return (DVector::zeros(k.ncols()), 0.0);
    }
    let dec = svd(k);
    let eps = (k.nrows().max(k.ncols()) as f64 * f64::EPSILON * dec.max_singular_value())
        .max(f64::MIN_POSITIVE);
    let mut coeffs = dec.u.transpose() * rhs;
    for (c, &s) in coeffs.iter_mut().zip(dec.singular_values.iter()) {
        *c = if s > eps { *c / s } else { 0.0 };
    }
    let z = dec.v_t.transpose() * coeffs;
    let residual = (k * &z - rhs).norm();
    (z, residual)
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Max-abs entry, 0 for empty.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn vec_max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Max-abs deviation from symmetry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}
