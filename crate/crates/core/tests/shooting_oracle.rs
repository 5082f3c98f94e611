mod common;

use bandlimit::extremal::verify_pmp;
use bandlimit::lq::{self, LqStatus};
use bandlimit::shooting::{
    assemble_residual, default_initialization, newton_solve, residual_jacobian, stacked_layout,
    NewtonOptions, StackedUnknowns,
};
use bandlimit::spectrum::forward_dft;
use common::fixtures::{lti_spec, toy_spec};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

#[test]
fn toy_matches_direct_transcription() {
    let spec = toy_spec(0.1, 6, 0.0, 1.0, &[]);
    let result = newton_solve(
        &spec,
        &scalar(0.0),
        &scalar(1.0),
        None,
        &NewtonOptions::default(),
    )
    .unwrap();
    assert!(result.converged);
    assert!(result.iterations <= 10, "{} iterations", result.iterations);
    let cost = spec
        .total_cost(&result.trajectory.controls, &result.trajectory.states)
        .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (u, oracle) =
        toy_transcription_oracle(0.1, 6, 0.0, 1.0, &DMatrix::zeros(0, 6), &mut rng, 8);
    assert!((cost - oracle).abs() <= 1e-8, "{cost} vs {oracle}");
    let controls: Vec<_> = u.iter().map(|&v| scalar(v)).collect();
    assert!(max_rel_diff(&result.trajectory.controls, &controls) <= 1e-5);
}

#[test]
fn toy_with_ban_nulls_the_component_and_costs_more() {
    let opts = NewtonOptions::default();
    let free = toy_spec(0.1, 6, 0.0, 1.0, &[]);
    let banned = toy_spec(0.1, 6, 0.0, 1.0, &[3]);
    let base = newton_solve(&free, &scalar(0.0), &scalar(1.0), None, &opts).unwrap();
    let result = newton_solve(&banned, &scalar(0.0), &scalar(1.0), None, &opts).unwrap();
    assert!(result.converged);
    assert!(result.certificate.as_ref().unwrap().passed);
    let spectrum = forward_dft(&result.trajectory.channel(0)).unwrap();
    assert!(spectrum.components[3].norm() <= 1e-8);

    let cost = |spec: &bandlimit::problem::ProblemSpec, r: &bandlimit::shooting::ShootingResult| {
        spec.total_cost(&r.trajectory.controls, &r.trajectory.states)
            .unwrap()
    };
    assert!(cost(&banned, &result) >= cost(&free, &base));

    let band = naive_band_rows(&[vec![3]], 6, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (_, oracle) = toy_transcription_oracle(0.1, 6, 0.0, 1.0, &band, &mut rng, 8);
    assert!((cost(&banned, &result) - oracle).abs() <= 1e-8);
}

#[test]
fn analytic_jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for banned in [vec![], vec![3], vec![1, 2]] {
        let spec = toy_spec(0.3, 6, 0.2, -0.5, &banned);
        let (x0, xf) = (scalar(0.2), scalar(-0.5));
        let layout = stacked_layout(&spec, &x0, &xf).unwrap();
        for _ in 0..10 {
            let mut z = StackedUnknowns::zeros(layout);
            for v in z.values.iter_mut() {
                *v = rng.gen_range(-1.5..1.5);
            }
            let analytic = residual_jacobian(&z, &spec, &x0, &xf, false).unwrap();
            let fd = residual_jacobian(&z, &spec, &x0, &xf, true).unwrap();
            let err = (&analytic - &fd).amax();
            assert!(err <= 1e-5 * analytic.amax().max(1.0), "{err}");
        }
    }
}

#[test]
fn finite_difference_newton_agrees_with_analytic() {
    let spec = toy_spec(0.1, 6, 0.0, 1.0, &[3]);
    let (x0, xf) = (scalar(0.0), scalar(1.0));
    let analytic = newton_solve(&spec, &x0, &xf, None, &NewtonOptions::default()).unwrap();
    let opts = NewtonOptions {
        finite_difference_jacobian: true,
        ..NewtonOptions::default()
    };
    let fd = newton_solve(&spec, &x0, &xf, None, &opts).unwrap();
    assert!(fd.converged);
    assert!(fd.trajectory.max_deviation(&analytic.trajectory) <= 1e-8);
}

#[test]
fn unconverged_runs_report_without_certificate() {
    let spec = toy_spec(0.1, 6, 0.0, 1.0, &[]);
    let opts = NewtonOptions {
        max_iterations: 1,
        tolerance: 1e-300,
        ..NewtonOptions::default()
    };
    let result = newton_solve(&spec, &scalar(0.0), &scalar(1.0), None, &opts).unwrap();
    assert!(!result.converged);
    assert!(result.certificate.is_none());
    assert_eq!(result.trace.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lti_newton_is_exact_in_one_step(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let horizon = rng.gen_range(n + 2..=9);
        let (a, b, q, r) = random_lq(&mut rng, n, m);
        let bans = random_bans(&mut rng, horizon, m, 0.15);
        let (x0, xf) = (random_vector(&mut rng, n), random_vector(&mut rng, n));
        let spec = lti_spec(&a, &b, &q, &r, horizon, &x0, Some(&xf), &bans);
        let fc = spec.frequency_constraint().unwrap();
        let Ok(exact) = lq::lq_transfer_freq_solve(&a, &b, &q, &r, horizon, &x0, &xf, fc) else {
            return Ok(());
        };
        prop_assume!(exact.status == LqStatus::Solved);

        let init = default_initialization(&spec, &x0, &xf).unwrap();
        prop_assert!(assemble_residual(&init.unknowns, &spec, &x0, &xf).unwrap().amax() <= 1e-9);

        let layout = stacked_layout(&spec, &x0, &xf).unwrap();
        let mut z = StackedUnknowns::zeros(layout);
        for v in z.values.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let Ok(result) = newton_solve(&spec, &x0, &xf, Some(z), &NewtonOptions::default()) else {
            // Rank-deficient Newton systems are legitimate for undetermined regimes.
            return Ok(());
        };
        prop_assert!(result.converged);
        prop_assert_eq!(result.iterations, 1);
        prop_assert_eq!(result.trace[1].step, 1.0);
        prop_assert!(result.trajectory.max_deviation(&exact.trajectory) <= 1e-6);
        let cert = result.certificate.unwrap();
        prop_assert!(cert.passed, "{:?}", cert.failures());
    }

    #[test]
    fn converged_toy_runs_are_certified(gain in -0.2..0.2f64, xf in -1.5..1.5f64, ban in 0usize..6) {
        let spec = toy_spec(gain, 6, 0.0, xf, &[ban]);
        let (x0, xf) = (scalar(0.0), scalar(xf));
        let Ok(result) = newton_solve(&spec, &x0, &xf, None, &NewtonOptions::default()) else {
            return Ok(());
        };
        for pair in result.trace.windows(2) {
            prop_assert!(pair[1].residual <= pair[0].residual);
        }
        if result.converged {
            prop_assert!(result.final_residual <= 1e-10);
            prop_assert!(result.certificate.as_ref().unwrap().passed);
            let cert = verify_pmp(&result.trajectory, &result.lift, &spec, 1e-6).unwrap();
            prop_assert!(cert.passed, "{:?}", cert.failures());
        }
    }
}
