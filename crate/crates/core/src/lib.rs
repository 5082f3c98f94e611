//! Synthesis and certification of optimal control trajectories for
//! discrete-time systems under state, control-magnitude and
//! control-frequency constraints.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectrum`]: unitary DFT machinery and the conversion of banned
//!   frequency sets into the real equality constraint `Σ_t F_t u_t = 0`.
//! - [`problem`]: dynamics, costs, state/control sets and validation.
//! - [`lq`]: exact linear-quadratic solvers (Riccati recursion, the stacked
//!   maximum-principle linear system, fixed-endpoint and frequency-constrained
//!   transfers).
//! - [`extremal`]: the Hamiltonian, the adjoint backward pass, the
//!   maximum-principle certificate and normality classification.
//! - [`shooting`]: damped Newton iteration on the stacked two-point boundary
//!   value residual for control-affine systems.
//!
//! Frequencies are 0-based DFT indices `0..N`, and the DFT uses the unitary
//! `1/√N` scaling everywhere.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod extremal;
pub mod linalg;
pub mod lq;
pub mod problem;
pub mod shooting;
pub mod spectrum;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::Trajectory;
