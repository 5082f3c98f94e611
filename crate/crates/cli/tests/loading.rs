use bandlimit_cli::{load, solve, SolverKind, Status};

const DOUBLE: &str = r#"{
  "horizon": 10,
  "dynamics": {"kind": "lti", "name": "double_integrator"},
  "boundary": {
    "x0": [0, 0],
    "xf": [1, 0]
  },
  "banned_frequencies": [[2]]
}
"#;

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn builtin_dynamics_pick_up_the_default_cost_and_solver() {
    let loaded = load(DOUBLE, &[]).unwrap();
    assert_eq!(loaded.solver, SolverKind::TransferFreq);
    let (q, r) = loaded.spec.quadratic_weights().unwrap();
    assert_eq!(q.amax(), 0.0);
    assert_eq!(r[(0, 0)], 1.0);
    let result = solve(&loaded);
    assert_eq!(result.status, Status::Solved);
}

#[test]
fn errors_point_at_the_line_of_the_field() {
    let text = DOUBLE.replace("\"xf\": [1, 0]", "\"xf\": [1]");
    let errs = load(&text, &[]).unwrap_err();
    assert_eq!(errs.len(), 1);
    assert_eq!(errs[0].field, "boundary.xf");
    assert_eq!(errs[0].line, Some(6));
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let text = DOUBLE.replace("\"x0\"", "\"x_0\"");
    let errs = load(&text, &[]).unwrap_err();
    assert_eq!(errs[0].field, "boundary.x_0");
    assert!(
        errs[0].message.contains("unknown field"),
        "{}",
        errs[0].message
    );
    assert_eq!(errs[0].line, Some(5));
}

#[test]
fn override_errors_name_the_override_instead_of_a_line() {
    let errs = load(DOUBLE, &strings(&["boundary.x0=[0]"])).unwrap_err();
    assert_eq!(errs[0].field, "boundary.x0");
    assert_eq!(errs[0].line, None);
    assert!(errs[0].message.contains("--set boundary.x0"));

    let errs = load(DOUBLE, &strings(&["horizon"])).unwrap_err();
    assert!(errs[0].message.contains("key=value"));
}

#[test]
fn several_problems_are_reported_together() {
    let text = DOUBLE
        .replace("\"name\": \"double_integrator\"", "\"name\": \"pendulum\"")
        .replace("[[2]]", "[[2], [1]]");
    let errs = load(&text, &[]).unwrap_err();
    assert!(errs
        .iter()
        .any(|e| e.field == "dynamics.name" && e.line == Some(3)));
}

#[test]
fn overrides_change_the_digest_free_input_but_are_recorded() {
    let plain = load(DOUBLE, &[]).unwrap();
    let shifted = load(DOUBLE, &strings(&["boundary.xf=[2,0]"])).unwrap();
    assert_eq!(plain.input_digest, shifted.input_digest);
    assert_eq!(shifted.overrides, strings(&["boundary.xf=[2,0]"]));
    assert_eq!(shifted.spec.final_state().unwrap()[0], 2.0);
}

#[test]
fn interior_fixed_states_are_unsupported() {
    let text = DOUBLE.replace(
        "\"banned_frequencies\"",
        "\"state_sets\": [\"free\", \"free\", \"free\", {\"fixed\": [0.5, 0]}, \"free\", \"free\", \"free\", \"free\", \"free\", \"free\", \"free\"],\n  \"banned_frequencies\"",
    );
    let errs = load(&text, &[]).unwrap_err();
    assert_eq!(errs[0].field, "state_sets[3]");
}
