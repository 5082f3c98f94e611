//! Problem construction shared by the integration tests.

use std::sync::Arc;

use bandlimit::problem::{validate, AffineToy, CostModel, DynamicsModel, ProblemSpec};
use bandlimit::spectrum::SupportSpec;
use nalgebra::{DMatrix, DVector};

/// Validated LTI problem with `x_0` fixed, optional fixed `x_N` and bans.
#[allow(clippy::too_many_arguments)]
pub fn lti_spec(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
    xf: Option<&DVector<f64>>,
    banned: &[Vec<usize>],
) -> ProblemSpec {
    let mut spec = ProblemSpec::new(
        horizon,
        DynamicsModel::lti(a.clone(), b.clone()),
        CostModel::quadratic(q.clone(), r.clone()),
    )
    .with_initial_state(x0.clone());
    if let Some(xf) = xf {
        spec = spec.with_final_state(xf.clone());
    }
    if !banned.is_empty() {
        spec = spec.with_supports(SupportSpec::from_banned(horizon, banned).unwrap());
    }
    validate(&spec).unwrap()
}

/// The scalar toy `x + (1 + γx)u` with `Q = R = 1`.
pub fn toy_spec(gain: f64, horizon: usize, x0: f64, xf: f64, banned: &[usize]) -> ProblemSpec {
    let one = DMatrix::from_element(1, 1, 1.0);
    let mut spec = ProblemSpec::new(
        horizon,
        DynamicsModel::ControlAffine(Arc::new(AffineToy { gain })),
        CostModel::quadratic(one.clone(), one),
    )
    .with_initial_state(DVector::from_element(1, x0))
    .with_final_state(DVector::from_element(1, xf));
    if !banned.is_empty() {
        spec = spec.with_supports(SupportSpec::from_banned(horizon, &[banned.to_vec()]).unwrap());
    }
    validate(&spec).unwrap()
}
