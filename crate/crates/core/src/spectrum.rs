//! Unitary DFT machinery and the frequency constraint map.
//!
//! A control trajectory `u_0..u_{N-1}` with `m` channels is constrained by
//! banning selected DFT components of each channel. Because the signals are
//! real, each banned component becomes a real row and an imaginary row; rows
//! that vanish identically are dropped and the rest are partitioned into
//! per-stage blocks `F_t ∈ R^{q×m}` so the constraint reads `Σ_t F_t u_t = 0`.
//!
//! Frequencies are 0-based: index `ξ` pairs with the exponent
//! `exp(-i2πξt/N)`. Supports written as `{1..N}` elsewhere map to
//! `{0..N-1}` by subtracting one.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub type Complex64 = Complex<f64>;

/// Rows whose max-abs entry falls below this are treated as identically zero.
pub const ZERO_ROW_THRESHOLD: f64 = 1e-12;

/// Default tolerance used to classify entries as zero when counting supports.
pub const DEFAULT_SUPPORT_TOLERANCE: f64 = 1e-10;

/// `exp(-i2πk/N)/√N` with the exponent reduced mod `N` for accuracy.
fn unit_root(k: usize, n: usize) -> Complex64 {
    let angle = -2.0 * PI * ((k % n) as f64) / (n as f64);
    Complex::new(angle.cos(), angle.sin()) / (n as f64).sqrt()
}

/// The unitary DFT matrix `Φ` with entry `(ξ, t) = ω^{ξt}/√N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DftMatrix {
    size: usize,
    entries: DMatrix<Complex64>,
}

impl DftMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn entry(&self, xi: usize, t: usize) -> Complex64 {
        self.entries[(xi, t)]
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.entries.map(|c| c.re)
    }

    pub fn imag_part(&self) -> DMatrix<f64> {
        self.entries.map(|c| c.im)
    }

    /// `‖Φ*Φ − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let gram = self.entries.adjoint() * &self.entries;
        let id = DMatrix::<Complex64>::identity(self.size, self.size);
        (gram - id).iter().fold(0.0, |acc, c| acc.max(c.norm()))
    }
}

pub fn build_dft_matrix(n: usize) -> Result<DftMatrix> {
    if n == 0 {
        return Err(Error::InvalidHorizon(0));
    }
    let entries = DMatrix::from_fn(n, n, |xi, t| unit_root(xi * t, n));
    Ok(DftMatrix { size: n, entries })
}

/// DFT components `û_ξ` of one real channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub components: Vec<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.norm()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.arg()).collect()
    }

    /// Worst violation of `û_{N−ξ} = conj(û_ξ)`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let n = self.components.len();
        (1..n)
            .map(|xi| (self.components[n - xi] - self.components[xi].conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Unitary DFT of a real signal; equals `Φ·u`.
pub fn forward_dft(signal: &[f64]) -> Result<Spectrum> {
    let n = signal.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let components = (0..n)
        .map(|xi| {
            signal
                .iter()
                .enumerate()
                .fold(Complex::new(0.0, 0.0), |acc, (t, &u)| {
                    acc + unit_root(xi * t, n) * u
                })
        })
        .collect();
    Ok(Spectrum { components })
}

/// Per-channel banned frequency sets over a horizon `N`.
///
/// The allowed sets `W^(k)` are the complements of the banned sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSpec {
    horizon: usize,
    banned: Vec<BTreeSet<usize>>,
}

impl SupportSpec {
    pub fn from_banned(horizon: usize, banned: &[Vec<usize>]) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidHorizon(0));
        }
        let mut sets = Vec::with_capacity(banned.len());
        for (channel, list) in banned.iter().enumerate() {
            if let Some(&index) = list.iter().find(|&&i| i >= horizon) {
                return Err(Error::FrequencyIndex {
                    channel,
                    index,
                    horizon,
                });
            }
            sets.push(list.iter().copied().collect());
        }
        Ok(Self {
            horizon,
            banned: sets,
        })
    }

    pub fn from_allowed(horizon: usize, allowed: &[Vec<usize>]) -> Result<Self> {
        let banned: Vec<Vec<usize>> = allowed
            .iter()
            .enumerate()
            .map(|(channel, list)| {
                if let Some(&index) = list.iter().find(|&&i| i >= horizon) {
                    return Err(Error::FrequencyIndex {
                        channel,
                        index,
                        horizon,
                    });
                }
                Ok((0..horizon).filter(|xi| !list.contains(xi)).collect())
            })
            .collect::<Result<_>>()?;
        Self::from_banned(horizon, &banned)
    }

    /// No banned frequencies on any of `channels` channels.
    pub fn unconstrained(horizon: usize, channels: usize) -> Self {
        Self {
            horizon,
            banned: vec![BTreeSet::new(); channels],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.banned.len()
    }

    pub fn banned(&self, channel: usize) -> &BTreeSet<usize> {
        &self.banned[channel]
    }

    pub fn allowed(&self, channel: usize) -> BTreeSet<usize> {
        (0..self.horizon)
            .filter(|xi| !self.banned[channel].contains(xi))
            .collect()
    }

    pub fn is_banned(&self, channel: usize, xi: usize) -> bool {
        self.banned[channel].contains(&xi)
    }

    pub fn banned_lists(&self) -> Vec<Vec<usize>> {
        self.banned
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect()
    }

    /// Closes every banned set under `ξ ↦ N − ξ (mod N)`.
    pub fn symmetrized(&self) -> Self {
        let n = self.horizon;
        let banned = self
            .banned
            .iter()
            .map(|set| set.iter().flat_map(|&xi| [xi, (n - xi) % n]).collect())
            .collect();
        Self { horizon: n, banned }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Real,
    Imag,
}

/// Which banned component a constraint row enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLabel {
    pub channel: usize,
    pub frequency: usize,
    pub part: Part,
}

/// Blocks `F_0..F_{N-1}` of the frequency constraint map `Σ_t F_t u_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyConstraint {
    horizon: usize,
    control_dim: usize,
    blocks: Vec<DMatrix<f64>>,
    row_count: usize,
    row_labels: Vec<RowLabel>,
    effective_rank: usize,
    canonical_supports: SupportSpec,
}

impl FrequencyConstraint {
    /// The empty constraint (`q = 0`).
    pub fn unconstrained(horizon: usize, control_dim: usize) -> Self {
        Self {
            horizon,
            control_dim,
            blocks: vec![DMatrix::zeros(0, control_dim); horizon],
            row_count: 0,
            row_labels: Vec::new(),
            effective_rank: 0,
            canonical_supports: SupportSpec::unconstrained(horizon, control_dim),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    /// Number of constraint rows `q`.
    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn effective_rank(&self) -> usize {
        self.effective_rank
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, t: usize) -> &DMatrix<f64> {
        &self.blocks[t]
    }

    /// One label per row; empty for row-reduced constraints.
    pub fn row_labels(&self) -> &[RowLabel] {
        &self.row_labels
    }

    pub fn canonical_supports(&self) -> &SupportSpec {
        &self.canonical_supports
    }

    pub fn is_unconstrained(&self) -> bool {
        self.row_count == 0
    }

    /// `[F_0 … F_{N-1}]` acting on time-stacked controls, `q × mN`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (q, m) = (self.row_count(), self.control_dim);
        let mut out = DMatrix::zeros(q, m * self.horizon);
        for (t, block) in self.blocks.iter().enumerate() {
            out.view_mut((0, t * m), (q, m)).copy_from(block);
        }
        out
    }

    /// The same constraint with rows replaced by an orthonormal basis of
    /// their span, so that `row_count == effective_rank`.
    pub fn row_reduced(&self) -> Self {
        let basis = linalg::row_space_basis(&self.stacked());
        let (q, m) = (basis.nrows(), self.control_dim);
        let blocks = (0..self.horizon)
            .map(|t| basis.view((0, t * m), (q, m)).into_owned())
            .collect();
        Self {
            horizon: self.horizon,
            control_dim: m,
            blocks,
            row_count: q,
            row_labels: Vec::new(),
            effective_rank: q,
            canonical_supports: self.canonical_supports.clone(),
        }
    }
}

/// Permutation `P` with `P·(u^(1); …; u^(m)) = (u_0; …; u_{N-1})`.
///
/// Channel-stacked index `k·N + t` maps to time-stacked index `t·m + k`.
pub fn stacking_permutation(channels: usize, horizon: usize) -> DMatrix<f64> {
    let dim = channels * horizon;
    let mut p = DMatrix::zeros(dim, dim);
    for k in 0..channels {
        for t in 0..horizon {
            p[(t * channels + k, k * horizon + t)] = 1.0;
        }
    }
    p
}

pub fn build_frequency_constraint(
    supports: &SupportSpec,
    horizon: usize,
    control_dim: usize,
) -> Result<FrequencyConstraint> {
    if horizon == 0 {
        return Err(Error::InvalidHorizon(0));
    }
    if supports.channels() != control_dim {
        return Err(Error::ChannelCount {
            expected: control_dim,
            actual: supports.channels(),
        });
    }
    if supports.horizon() != horizon {
        return Err(Error::shape(
            "support specification horizon",
            horizon,
            supports.horizon(),
        ));
    }
    let canonical = supports.symmetrized();
    let (n, m) = (horizon, control_dim);
    let phi = build_dft_matrix(n)?;

    // Band-stop selection of the block-diagonal DFT, real rows then imaginary
    // rows, in channel-stacked coordinates.
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for part in [Part::Real, Part::Imag] {
        for k in 0..m {
            for &xi in canonical.banned(k) {
                let mut row = vec![0.0; m * n];
                for t in 0..n {
                    let c = phi.entry(xi, t);
                    row[k * n + t] = match part {
                        Part::Real => c.re,
                        Part::Imag => c.im,
                    };
                }
                rows.push(row);
                labels.push(RowLabel {
                    channel: k,
                    frequency: xi,
                    part,
                });
            }
        }
    }

    let p_inv = stacking_permutation(m, n).transpose();
    let mut kept_rows = Vec::new();
    let mut kept_labels = Vec::new();
    for (row, label) in rows.into_iter().zip(labels) {
        let row = DMatrix::from_row_slice(1, m * n, &row) * &p_inv;
        if linalg::max_abs(&row) >= ZERO_ROW_THRESHOLD {
            kept_rows.push(row);
            kept_labels.push(label);
        }
    }

    let q = kept_rows.len();
    let mut stacked = DMatrix::zeros(q, m * n);
    for (i, row) in kept_rows.iter().enumerate() {
        stacked.set_row(i, &row.row(0));
    }
    let effective_rank = linalg::numerical_rank(&stacked);
    let blocks = (0..n)
        .map(|t| stacked.view((0, t * m), (q, m)).into_owned())
        .collect();

    Ok(FrequencyConstraint {
        horizon: n,
        control_dim: m,
        blocks,
        row_count: q,
        row_labels: kept_labels,
        effective_rank,
        canonical_supports: canonical,
    })
}

/// `Σ_t F_t u_t`.
pub fn constraint_residual(
    fc: &FrequencyConstraint,
    controls: &[DVector<f64>],
) -> Result<DVector<f64>> {
    if controls.len() != fc.horizon {
        return Err(Error::shape(
            "control trajectory length",
            fc.horizon,
            controls.len(),
        ));
    }
    let mut r = DVector::zeros(fc.row_count());
    for (t, (block, u)) in fc.blocks.iter().zip(controls).enumerate() {
        if u.len() != fc.control_dim {
            return Err(Error::shape(
                &format!("control u_{t}"),
                fc.control_dim,
                u.len(),
            ));
        }
        r += block * u;
    }
    Ok(r)
}

/// Time/frequency support counts for one control channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub channel: usize,
    pub time_support: usize,
    pub freq_support: usize,
    /// `2√N`.
    pub lower_bound: f64,
    /// True for identically-zero channels, where the bound does not apply.
    pub vacuous: bool,
    pub satisfied: bool,
}

/// Checks `|supp(u)| + |supp(û)| ≥ 2√N` channel by channel.
///
/// Entries with magnitude at most `tolerance` count as zero.
pub fn uncertainty_check(
    controls: &[DVector<f64>],
    tolerance: f64,
) -> Result<Vec<UncertaintyReport>> {
    let n = controls.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty control trajectory".into()));
    }
    let m = controls[0].len();
    let lower_bound = 2.0 * (n as f64).sqrt();
    (0..m)
        .map(|k| {
            let signal: Vec<f64> = controls.iter().map(|u| u[k]).collect();
            let time_support = signal.iter().filter(|v| v.abs() > tolerance).count();
            let spectrum = forward_dft(&signal)?;
            let freq_support = spectrum
                .components
                .iter()
                .filter(|c| c.norm() > tolerance)
                .count();
            let vacuous = time_support == 0;
            Ok(UncertaintyReport {
                channel: k,
                time_support,
                freq_support,
                lower_bound,
                vacuous,
                satisfied: vacuous || (time_support + freq_support) as f64 >= lower_bound,
            })
        })
        .collect()
}
