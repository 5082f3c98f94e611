//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is always
//! printed; the process exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use bandlimit::extremal::{classify_normality_freq, verify_pmp, ExtremalLift, NormalityClass};
use bandlimit::lq::{self, LqStatus};
use bandlimit::shooting::{newton_solve, stacked_layout, NewtonOptions, StackedUnknowns};
use bandlimit::spectrum::{
    build_dft_matrix, forward_dft, uncertainty_check, DEFAULT_SUPPORT_TOLERANCE,
};
use common::fixtures::{lti_spec, toy_spec};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Control trajectories collected for the uncertainty diagnostic.
type Solved = Vec<Vec<DVector<f64>>>;

fn controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let mut blocks = DMatrix::zeros(n, b.ncols() * n);
    let mut power = b.clone();
    for i in 0..n {
        blocks
            .view_mut((0, i * b.ncols()), (n, b.ncols()))
            .copy_from(&power);
        power = a * power;
    }
    let sv = blocks.singular_values();
    sv.min() > 1e-6 * sv.max()
}

fn ac1_riccati_vs_pmp() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=3);
        let horizon = rng.gen_range(1..=20);
        let (a, b, q, r) = random_lq(&mut rng, n, m);
        let x0 = random_vector(&mut rng, n);
        let (_, dp) = lq::riccati_solve(&a, &b, &q, &r, horizon, &x0).unwrap();
        let pmp = lq::lq_pmp_solve(&a, &b, &q, &r, horizon, &x0).unwrap();
        if pmp.status != LqStatus::Solved {
            return Outcome::new(false, "stacked system reported singular");
        }
        let dev = max_rel_diff(&dp.states, &pmp.trajectory.states)
            .max(max_rel_diff(&dp.controls, &pmp.trajectory.controls));
        worst = worst.max(dev);
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst <= 1e-8 && elapsed < Duration::from_secs(10),
        format!("100 instances, max rel deviation {worst:.2e} (<= 1e-8), {elapsed:.2?} (< 10 s)"),
    )
}

fn banned_magnitude(controls: &[DVector<f64>], banned: &[Vec<usize>]) -> f64 {
    let horizon = controls.len();
    let mut worst = 0.0_f64;
    for (k, list) in banned.iter().enumerate() {
        let signal: Vec<f64> = controls.iter().map(|u| u[k]).collect();
        let spectrum = forward_dft(&signal).unwrap();
        for &xi in list {
            worst = worst.max(spectrum.components[xi].norm());
            worst = worst.max(spectrum.components[(horizon - xi) % horizon].norm());
        }
    }
    worst
}

fn ac2_frequency_nulling(solved: &mut Solved) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut count, mut worst_band, mut worst_stat) = (0, 0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=3);
        let horizon = rng.gen_range(n + 2..=16);
        let (a, b, q, r) = random_lq(&mut rng, n, m);
        let bans = random_bans(&mut rng, horizon, m, 0.25);
        let (x0, xf) = (random_vector(&mut rng, n), random_vector(&mut rng, n));
        let spec = lti_spec(&a, &b, &q, &r, horizon, &x0, Some(&xf), &bans);
        let fc = spec.frequency_constraint().unwrap();
        let Ok(sol) = lq::lq_transfer_freq_solve(&a, &b, &q, &r, horizon, &x0, &xf, fc) else {
            continue;
        };
        if sol.status != LqStatus::Solved {
            continue;
        }
        count += 1;
        worst_band = worst_band.max(banned_magnitude(&sol.trajectory.controls, &bans));
        worst_stat = worst_stat.max(lq::stationarity_residual(&b, &r, fc, &sol));
        solved.push(sol.trajectory.controls);
    }
    Outcome::new(
        count > 0 && worst_band <= 1e-9 && worst_stat <= 1e-9,
        format!(
            "{count} solved, banned magnitude {worst_band:.2e} (<= 1e-9), stationarity {worst_stat:.2e} (<= 1e-9)"
        ),
    )
}

fn ac3_qp_oracle(solved: &mut Solved) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut compared, mut worst_cost, mut worst_u) = (0, 0.0_f64, 0.0_f64);
    let mut mismatched_status = 0;
    while compared < 50 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=3);
        let horizon = rng.gen_range(n + 2..=60 / m);
        let (a, b, q, r) = random_lq(&mut rng, n, m);
        let bans = random_bans(&mut rng, horizon, m, 0.2);
        let (x0, xf) = (random_vector(&mut rng, n), random_vector(&mut rng, n));
        let spec = lti_spec(&a, &b, &q, &r, horizon, &x0, Some(&xf), &bans);
        let fc = spec.frequency_constraint().unwrap();
        let Ok(sol) = lq::lq_transfer_freq_solve(&a, &b, &q, &r, horizon, &x0, &xf, fc) else {
            continue;
        };
        let oracle = qp_transfer_oracle(&a, &b, &q, &r, horizon, &x0, &xf, &bans);
        match (sol.status, oracle) {
            (LqStatus::Solved, Some((controls, _, cost))) => {
                compared += 1;
                worst_cost = worst_cost.max((sol.cost - cost).abs() / cost.abs().max(1.0));
                worst_u = worst_u.max(max_rel_diff(&sol.trajectory.controls, &controls));
                solved.push(sol.trajectory.controls);
            }
            (LqStatus::Infeasible, None) => {}
            _ => mismatched_status += 1,
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst_cost <= 1e-7 && worst_u <= 1e-7 && mismatched_status == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{compared} instances, cost rel {worst_cost:.2e}, controls rel {worst_u:.2e} (<= 1e-7), \
             {mismatched_status} status mismatches, {elapsed:.2?} (< 30 s)"
        ),
    )
}

fn ac4_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut chains, mut worst_drop, mut worst_empty) = (0, 0.0_f64, 0.0_f64);
    for _ in 0..60 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let horizon = rng.gen_range(2 * n + 2..=14);
        let (a, b, q, r) = random_lq(&mut rng, n, m);
        let (x0, xf) = (random_vector(&mut rng, n), random_vector(&mut rng, n));

        let empty = lti_spec(&a, &b, &q, &r, horizon, &x0, Some(&xf), &[]);
        let plain = lq::lq_transfer_solve(&a, &b, &q, &r, horizon, &x0, &xf).unwrap();
        let freq = lq::lq_transfer_freq_solve(
            &a,
            &b,
            &q,
            &r,
            horizon,
            &x0,
            &xf,
            empty.frequency_constraint().unwrap(),
        )
        .unwrap();
        worst_empty = worst_empty
            .max((plain.cost - freq.cost).abs())
            .max(plain.trajectory.max_deviation(&freq.trajectory));

        let mut order: Vec<(usize, usize)> = (0..m)
            .flat_map(|k| (0..horizon).map(move |xi| (k, xi)))
            .collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut bans = vec![Vec::new(); m];
        let mut previous = if plain.status == LqStatus::Solved {
            plain.cost
        } else {
            continue;
        };
        chains += 1;
        for &(k, xi) in order.iter().take(horizon / 2) {
            bans[k].push(xi);
            let spec = lti_spec(&a, &b, &q, &r, horizon, &x0, Some(&xf), &bans);
            let fc = spec.frequency_constraint().unwrap();
            let Ok(sol) = lq::lq_transfer_freq_solve(&a, &b, &q, &r, horizon, &x0, &xf, fc) else {
                break;
            };
            if sol.status != LqStatus::Solved {
                break;
            }
            worst_drop = worst_drop.max(previous - sol.cost);
            previous = sol.cost;
        }
    }
    Outcome::new(
        chains > 0 && worst_drop <= 1e-10 && worst_empty <= 1e-10,
        format!(
            "{chains} nested chains, largest cost decrease {worst_drop:.2e} (<= 1e-10), \
             empty-ban deviation {worst_empty:.2e} (<= 1e-10)"
        ),
    )
}

fn ac5_normality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut abnormal, mut normal, mut undetermined) = (0, 0, 0, 0);
    for i in 0..100 {
        let (a, b, horizon, bans) = match i % 4 {
            // Many bans on a short horizon: q + n > mN.
            0 => {
                let n = rng.gen_range(2..=3);
                let horizon = rng.gen_range(2..=5);
                let a = random_stable(&mut rng, n, 0.9);
                let b = random_matrix(&mut rng, n, 1);
                (a, b, horizon, vec![(0..horizon).collect::<Vec<_>>()])
            }
            // No bans, controllable.
            1 => {
                let n = rng.gen_range(1..=4);
                let m = rng.gen_range(1..=2);
                let horizon = rng.gen_range(n..=8);
                let (a, b, _, _) = random_lq(&mut rng, n, m);
                (a, b, horizon, vec![Vec::new(); m])
            }
            // Uncontrollable pair.
            2 => {
                let n = rng.gen_range(2..=4);
                let a = DMatrix::identity(n, n) * 0.8;
                let b = random_matrix(&mut rng, n, 1);
                let horizon = rng.gen_range(n..=8);
                let bans = random_bans(&mut rng, horizon, 1, 0.2);
                (a, b, horizon, bans)
            }
            _ => {
                let n = rng.gen_range(1..=3);
                let m = rng.gen_range(1..=2);
                let horizon = rng.gen_range(2..=10);
                let (a, b, _, _) = random_lq(&mut rng, n, m);
                let bans = random_bans(&mut rng, horizon, m, 0.3);
                (a, b, horizon, bans)
            }
        };
        let m = b.ncols();
        let n = a.nrows();
        let spec = lti_spec(
            &a,
            &b,
            &DMatrix::zeros(n, n),
            &DMatrix::identity(m, m),
            horizon,
            &DVector::zeros(n),
            None,
            &bans,
        );
        let verdict =
            classify_normality_freq(&a, &b, horizon, spec.frequency_constraint().unwrap()).unwrap();
        let (oracle, _) = brute_normality(&a, &b, horizon, &bans);
        let expected = match oracle {
            OracleVerdict::Normal => NormalityClass::AllNormal,
            OracleVerdict::Abnormal => NormalityClass::AllAbnormal,
            OracleVerdict::Undetermined => NormalityClass::Undetermined,
        };
        if verdict.classification == expected {
            agree += 1;
        }
        match verdict.classification {
            NormalityClass::AllAbnormal => abnormal += 1,
            NormalityClass::AllNormal => normal += 1,
            NormalityClass::Undetermined => undetermined += 1,
        }
    }
    Outcome::new(
        agree == 100 && abnormal >= 5 && normal >= 5,
        format!(
            "{agree}/100 agree with null-space oracle; {abnormal} all-abnormal, {normal} all-normal, \
             {undetermined} undetermined"
        ),
    )
}

fn ac6_shooting(solved: &mut Solved) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = NewtonOptions::default();
    let mut one_step = true;
    let mut worst_lti = 0.0_f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let horizon = rng.gen_range(n + 2..=10);
        let (a, b, q, r) = random_lq(&mut rng, n, m);
        if !controllable(&a, &b) {
            continue;
        }
        let bans = random_bans(&mut rng, horizon, m, 0.15);
        let (x0, xf) = (random_vector(&mut rng, n), random_vector(&mut rng, n));
        let spec = lti_spec(&a, &b, &q, &r, horizon, &x0, Some(&xf), &bans);
        let fc = spec.frequency_constraint().unwrap();
        let Ok(exact) = lq::lq_transfer_freq_solve(&a, &b, &q, &r, horizon, &x0, &xf, fc) else {
            continue;
        };
        if exact.status != LqStatus::Solved {
            continue;
        }
        let layout = stacked_layout(&spec, &x0, &xf).unwrap();
        let mut init = StackedUnknowns::zeros(layout);
        for v in init.values.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let Ok(result) = newton_solve(&spec, &x0, &xf, Some(init), &opts) else {
            one_step = false;
            continue;
        };
        one_step &= result.converged && result.iterations == 1 && result.trace[1].step == 1.0;
        worst_lti = worst_lti.max(result.trajectory.max_deviation(&exact.trajectory));
    }

    let toy = toy_spec(0.1, 6, 0.0, 1.0, &[]);
    let (x0, xf) = (DVector::from_element(1, 0.0), DVector::from_element(1, 1.0));
    let result = newton_solve(&toy, &x0, &xf, None, &opts).unwrap();
    let cert_ok = result.certificate.as_ref().is_some_and(|c| c.passed);
    let cost = toy
        .total_cost(&result.trajectory.controls, &result.trajectory.states)
        .unwrap();
    let (_, oracle) =
        toy_transcription_oracle(0.1, 6, 0.0, 1.0, &DMatrix::zeros(0, 6), &mut rng, 8);
    let gap = (cost - oracle).abs();
    solved.push(result.trajectory.controls.clone());

    Outcome::new(
        one_step
            && worst_lti <= 1e-6
            && result.converged
            && result.iterations <= 60
            && cert_ok
            && gap <= 1e-6,
        format!(
            "LTI one undamped step: {one_step}, deviation {worst_lti:.2e} (<= 1e-6); toy converged in {} \
             iterations, certificate {}, cost gap to transcription oracle {gap:.2e} (<= 1e-6)",
            result.iterations,
            if cert_ok { "passed" } else { "failed" }
        ),
    )
}

fn ac7_verifier() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut certified, mut rejected_outputs) = (0, 0);
    let (mut perturbations, mut missed) = (0, 0);
    for i in 0..40 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let horizon = rng.gen_range(n + 2..=10);
        let (a, b, q, r) = random_lq(&mut rng, n, m);
        let (x0, xf) = (random_vector(&mut rng, n), random_vector(&mut rng, n));

        // Free endpoint via the stacked system and via Riccati.
        let free = lti_spec(&a, &b, &q, &r, horizon, &x0, None, &[]);
        let pmp = lq::lq_pmp_solve(&a, &b, &q, &r, horizon, &x0).unwrap();
        let lift = ExtremalLift::recover(
            &free,
            &pmp.trajectory,
            1.0,
            pmp.nu.clone(),
            pmp.adjoints.clone(),
        )
        .unwrap();
        let cert = verify_pmp(&pmp.trajectory, &lift, &free, 1e-7).unwrap();
        certified += 1;
        rejected_outputs += usize::from(!cert.passed);

        let (dp, traj) = lq::riccati_solve(&a, &b, &q, &r, horizon, &x0).unwrap();
        let adjoints: Vec<_> = (0..horizon)
            .map(|t| -(&dp.values[t + 1] * &traj.states[t + 1]))
            .collect();
        let lift = ExtremalLift::recover(&free, &traj, 1.0, DVector::zeros(0), adjoints).unwrap();
        let cert = verify_pmp(&traj, &lift, &free, 1e-7).unwrap();
        certified += 1;
        rejected_outputs += usize::from(!cert.passed);

        // Fixed endpoints with bans.
        let bans = if i % 2 == 0 {
            random_bans(&mut rng, horizon, m, 0.2)
        } else {
            Vec::new()
        };
        let fixed = lti_spec(&a, &b, &q, &r, horizon, &x0, Some(&xf), &bans);
        let fc = fixed.frequency_constraint().unwrap();
        let Ok(sol) = lq::lq_transfer_freq_solve(&a, &b, &q, &r, horizon, &x0, &xf, fc) else {
            continue;
        };
        if sol.status != LqStatus::Solved {
            continue;
        }
        let lift = ExtremalLift::recover(
            &fixed,
            &sol.trajectory,
            1.0,
            sol.nu.clone(),
            sol.adjoints.clone(),
        )
        .unwrap();
        let cert = verify_pmp(&sol.trajectory, &lift, &fixed, 1e-7).unwrap();
        certified += 1;
        rejected_outputs += usize::from(!cert.passed);

        for t in 0..horizon {
            for j in 0..m {
                let mut bumped = sol.trajectory.clone();
                bumped.controls[t][j] += 1e-3;
                let cert = verify_pmp(&bumped, &lift, &fixed, 1e-7).unwrap();
                perturbations += 1;
                missed += usize::from(cert.hamiltonian_vi.passed);
            }
        }
    }

    let toy = toy_spec(0.1, 6, 0.0, 1.0, &[3]);
    let (x0, xf) = (DVector::from_element(1, 0.0), DVector::from_element(1, 1.0));
    let result = newton_solve(&toy, &x0, &xf, None, &NewtonOptions::default()).unwrap();
    let cert = verify_pmp(&result.trajectory, &result.lift, &toy, 1e-7).unwrap();
    certified += 1;
    rejected_outputs += usize::from(!cert.passed);

    Outcome::new(
        rejected_outputs == 0 && perturbations > 0 && missed == 0,
        format!(
            "{certified} solver outputs, {rejected_outputs} rejected at 1e-7; \
             {perturbations} perturbed controls, {missed} not flagged by the Hamiltonian condition"
        ),
    )
}

fn ac8_dft() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_dft, mut worst_unitary) = (0.0_f64, 0.0_f64);
    for n in 1..=256 {
        let signal: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = forward_dft(&signal).unwrap();
        let naive = naive_dft(&signal);
        for (x, y) in fast.components.iter().zip(&naive) {
            worst_dft = worst_dft.max((x - y).norm());
        }
        worst_unitary = worst_unitary.max(build_dft_matrix(n).unwrap().unitarity_defect());
    }
    Outcome::new(
        worst_dft <= 1e-12 && worst_unitary <= 1e-12,
        format!("N = 1..256, oracle deviation {worst_dft:.2e}, unitarity defect {worst_unitary:.2e} (<= 1e-12)"),
    )
}

fn ac9_uncertainty(solved: &Solved) -> Outcome {
    let (mut channels, mut violations) = (0, 0);
    for controls in solved {
        for report in uncertainty_check(controls, DEFAULT_SUPPORT_TOLERANCE).unwrap() {
            if report.vacuous {
                continue;
            }
            channels += 1;
            violations += usize::from(!report.satisfied);
        }
    }
    Outcome::new(
        channels > 0 && violations == 0,
        format!("{channels} nonzero solved channels, {violations} violations of |supp u| + |supp û| >= 2√N"),
    )
}

fn main() -> ExitCode {
    let mut solved = Solved::new();
    let outcomes = [
        ("AC1", "DP/PMP equivalence", ac1_riccati_vs_pmp()),
        (
            "AC2",
            "frequency nulling",
            ac2_frequency_nulling(&mut solved),
        ),
        ("AC3", "QP-oracle equivalence", ac3_qp_oracle(&mut solved)),
        ("AC4", "cost monotonicity", ac4_monotonicity()),
        ("AC5", "normality classification", ac5_normality()),
        ("AC6", "shooting correctness", ac6_shooting(&mut solved)),
        ("AC7", "verifier soundness", ac7_verifier()),
        ("AC8", "DFT correctness", ac8_dft()),
        ("AC9", "uncertainty diagnostic", ac9_uncertainty(&solved)),
    ];
    let mut failed = 0;
    for (id, name, outcome) in &outcomes {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {id} {name}: {}", outcome.detail);
        failed += usize::from(!outcome.passed);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        outcomes.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
