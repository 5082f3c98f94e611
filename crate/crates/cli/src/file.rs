//! Problem file schema and its conversion to and from [`ProblemSpec`].
//!
//! Matrices are row-major nested lists. Stage sets are either one entry
//! applied to every stage or a full per-stage list.

use std::sync::Arc;

use bandlimit::problem::{validate, ControlSet, CostModel, DynamicsModel, ProblemSpec, StateSet};
use bandlimit::spectrum::SupportSpec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::builtin;
use crate::error::FieldError;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub horizon: usize,
    pub dynamics: DynamicsEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostEntry>,
    pub boundary: Boundary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_sets: Option<Stages<ControlSetEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_sets: Option<Stages<StateSetEntry>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub banned_frequencies: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverKind>,
    #[serde(default, skip_serializing_if = "SolveOptions::is_empty")]
    pub options: SolveOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    Lti,
    ControlAffine,
}

/// Either explicit `A`, `B` or the `name` of a builtin model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsEntry {
    pub kind: DynamicsKind,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Matrix>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Parameter of the `affine_toy` model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    #[serde(rename = "Q")]
    pub q: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    pub x0: Vec<f64>,
    /// `null` leaves the final state free.
    #[serde(default)]
    pub xf: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Stages<T> {
    PerStage(Vec<T>),
    All(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keyword {
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ControlSetEntry {
    Keyword(Keyword),
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum StateSetEntry {
    Keyword(Keyword),
    Fixed { fixed: Vec<f64> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Riccati,
    LqPmp,
    Transfer,
    TransferFreq,
    Shooting,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Riccati => "riccati",
            SolverKind::LqPmp => "lq_pmp",
            SolverKind::Transfer => "transfer",
            SolverKind::TransferFreq => "transfer_freq",
            SolverKind::Shooting => "shooting",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    /// Certificate tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Newton iteration cap for the shooting solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

impl SolveOptions {
    pub fn is_empty(&self) -> bool {
        self.tolerance.is_none() && self.max_iterations.is_none()
    }
}

fn to_matrix(field: &str, rows: &Matrix, errs: &mut Vec<FieldError>) -> Option<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        errs.push(FieldError::new(
            format!("{field}[{i}]"),
            format!("row has {} entries, expected {cols}", rows[i].len()),
        ));
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Matrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

impl ProblemFile {
    fn dynamics_model(&self, errs: &mut Vec<FieldError>) -> Option<DynamicsModel> {
        let d = &self.dynamics;
        match (&d.name, &d.a, &d.b) {
            (Some(name), None, None) => {
                let model = match d.kind {
                    DynamicsKind::Lti => builtin::lti(name).map(|(a, b)| DynamicsModel::lti(a, b)),
                    DynamicsKind::ControlAffine => builtin::control_affine(name, d.gain)
                        .map(|f| DynamicsModel::ControlAffine(Arc::new(f))),
                };
                if model.is_none() {
                    errs.push(FieldError::new(
                        "dynamics.name",
                        format!(
                            "no builtin {} model named `{name}` (known: {})",
                            kind_name(d.kind),
                            builtin::dynamics_names(d.kind).join(", ")
                        ),
                    ));
                }
                if d.gain.is_some() && d.kind == DynamicsKind::Lti {
                    errs.push(FieldError::new(
                        "dynamics.gain",
                        "gain applies only to control_affine models",
                    ));
                }
                model
            }
            (None, Some(a), Some(b)) if d.kind == DynamicsKind::Lti => {
                if d.gain.is_some() {
                    errs.push(FieldError::new(
                        "dynamics.gain",
                        "gain applies only to control_affine models",
                    ));
                }
                let a = to_matrix("dynamics.A", a, errs);
                let b = to_matrix("dynamics.B", b, errs);
                Some(DynamicsModel::lti(a?, b?))
            }
            (None, _, _) if d.kind == DynamicsKind::ControlAffine => {
                errs.push(FieldError::new(
                    "dynamics",
                    "control_affine dynamics must name a builtin model",
                ));
                None
            }
            _ => {
                errs.push(FieldError::new(
                    "dynamics",
                    "give either `name` or both `A` and `B`",
                ));
                None
            }
        }
    }

    fn cost_model(&self, errs: &mut Vec<FieldError>) -> Option<CostModel> {
        match &self.cost {
            Some(c) => {
                let q = to_matrix("cost.Q", &c.q, errs);
                let r = to_matrix("cost.R", &c.r, errs);
                Some(CostModel::quadratic(q?, r?))
            }
            None => match self
                .dynamics
                .name
                .as_deref()
                .and_then(builtin::default_cost)
            {
                Some((q, r)) => Some(CostModel::quadratic(q, r)),
                None => {
                    errs.push(FieldError::new("cost", "missing cost {Q, R}"));
                    None
                }
            },
        }
    }

    fn control_sets(&self, errs: &mut Vec<FieldError>) -> Vec<ControlSet> {
        let convert = |e: &ControlSetEntry| match e {
            ControlSetEntry::Keyword(Keyword::Free) => ControlSet::Free,
            ControlSetEntry::Box { lower, upper } => ControlSet::Box {
                lower: vector(lower),
                upper: vector(upper),
            },
        };
        match &self.control_sets {
            None => vec![ControlSet::Free; self.horizon],
            Some(Stages::All(e)) => vec![convert(e); self.horizon],
            Some(Stages::PerStage(list)) => {
                if list.len() != self.horizon {
                    errs.push(FieldError::new(
                        "control_sets",
                        format!("expected {} entries, got {}", self.horizon, list.len()),
                    ));
                }
                list.iter().map(convert).collect()
            }
        }
    }

    fn state_sets(&self, errs: &mut Vec<FieldError>) -> Vec<StateSet> {
        let convert = |e: &StateSetEntry| match e {
            StateSetEntry::Keyword(Keyword::Free) => StateSet::Free,
            StateSetEntry::Fixed { fixed } => StateSet::Fixed(vector(fixed)),
            StateSetEntry::Box { lower, upper } => StateSet::Box {
                lower: vector(lower),
                upper: vector(upper),
            },
        };
        let stages = self.horizon + 1;
        let mut sets = match &self.state_sets {
            None => vec![StateSet::Free; stages],
            Some(Stages::All(e)) => vec![convert(e); stages],
            Some(Stages::PerStage(list)) => {
                if list.len() != stages {
                    errs.push(FieldError::new(
                        "state_sets",
                        format!("expected {stages} entries, got {}", list.len()),
                    ));
                    return vec![StateSet::Free; stages];
                }
                list.iter().map(convert).collect()
            }
        };
        let explicit = matches!(self.state_sets, Some(Stages::PerStage(_)));
        let endpoints = [
            (0, Some(&self.boundary.x0), "boundary.x0"),
            (self.horizon, self.boundary.xf.as_ref(), "boundary.xf"),
        ];
        for (t, point, field) in endpoints {
            let Some(point) = point else { continue };
            if explicit && sets[t] != StateSet::Free {
                errs.push(FieldError::new(
                    format!("state_sets[{t}]"),
                    format!("stage {t} is already fixed by {field}; use \"free\" here"),
                ));
            }
            sets[t] = StateSet::Fixed(vector(point));
        }
        sets
    }

    /// Builds and validates the problem. Every error found is reported.
    pub fn to_spec(&self) -> Result<ProblemSpec, Vec<FieldError>> {
        let mut errs = Vec::new();
        let dynamics = self.dynamics_model(&mut errs);
        let cost = self.cost_model(&mut errs);
        let control_sets = self.control_sets(&mut errs);
        let state_sets = self.state_sets(&mut errs);
        let (Some(dynamics), Some(cost)) = (dynamics, cost) else {
            return Err(errs);
        };
        let m = dynamics.control_dim();
        let supports = if self.banned_frequencies.is_empty() {
            Some(SupportSpec::unconstrained(self.horizon.max(1), m))
        } else {
            match SupportSpec::from_banned(self.horizon, &self.banned_frequencies) {
                Ok(s) => Some(s),
                Err(bandlimit::Error::FrequencyIndex {
                    channel,
                    index,
                    horizon,
                }) => {
                    let pos = self.banned_frequencies[channel]
                        .iter()
                        .position(|&v| v == index)
                        .unwrap_or(0);
                    errs.push(FieldError::new(
                        format!("banned_frequencies[{channel}][{pos}]"),
                        format!("frequency {index} is outside 0..{horizon}"),
                    ));
                    None
                }
                Err(e) => {
                    errs.push(FieldError::new("banned_frequencies", e.to_string()));
                    None
                }
            }
        };
        if !errs.is_empty() {
            return Err(errs);
        }
        let spec = ProblemSpec::new(self.horizon, dynamics, cost)
            .with_control_sets(control_sets)
            .with_state_sets(state_sets)
            .with_supports(supports.expect("checked above"));
        validate(&spec).map_err(|v| {
            v.0.into_iter()
                .map(|v| FieldError::new(self.file_field(&v.field), v.message))
                .collect()
        })
    }

    /// Maps a validation field to where the value lives in the file.
    fn file_field(&self, field: &str) -> String {
        let n = self.horizon;
        let named = self.dynamics.name.is_some();
        if let Some(rest) = field.strip_prefix("state_sets[0].point") {
            return format!("boundary.x0{rest}");
        }
        if let Some(rest) = field.strip_prefix(&format!("state_sets[{n}].point")) {
            if self.boundary.xf.is_some() {
                return format!("boundary.xf{rest}");
            }
        }
        if let Some(rest) = field.strip_prefix("state_sets[") {
            if let Some(Stages::All(_)) = self.state_sets {
                let tail = rest.split_once(']').map_or("", |(_, t)| t);
                return format!("state_sets{tail}");
            }
        }
        if let Some(rest) = field.strip_prefix("control_sets[") {
            if let Some(Stages::All(_)) = self.control_sets {
                let tail = rest.split_once(']').map_or("", |(_, t)| t);
                return format!("control_sets{tail}");
            }
        }
        if field.starts_with("dynamics.") && named {
            return "dynamics.name".into();
        }
        if field.starts_with("cost.") && self.cost.is_none() {
            return "dynamics.name".into();
        }
        field.to_string()
    }

    /// Writes `spec` back as a problem file. Endpoint states must be fixed
    /// or free, and dynamics and cost must be representable.
    pub fn from_spec(
        spec: &ProblemSpec,
        solver: Option<SolverKind>,
        options: SolveOptions,
    ) -> Result<Self, FieldError> {
        let dynamics = match &spec.dynamics {
            DynamicsModel::Lti { a, b } => DynamicsEntry {
                kind: DynamicsKind::Lti,
                a: Some(from_matrix(a)),
                b: Some(from_matrix(b)),
                name: None,
                gain: None,
            },
            DynamicsModel::ControlAffine(f) => {
                let (name, gain) = f.label().and_then(builtin::parse_label).ok_or_else(|| {
                    FieldError::new("dynamics", "control-affine model is not a builtin")
                })?;
                DynamicsEntry {
                    kind: DynamicsKind::ControlAffine,
                    a: None,
                    b: None,
                    name: Some(name),
                    gain: Some(gain),
                }
            }
            DynamicsModel::General(_) => {
                return Err(FieldError::new(
                    "dynamics",
                    "general dynamics cannot be written to a problem file",
                ))
            }
        };
        let cost = match &spec.cost {
            CostModel::Quadratic { q, r } => CostEntry {
                q: from_matrix(q),
                r: from_matrix(r),
            },
            CostModel::General(_) => {
                return Err(FieldError::new(
                    "cost",
                    "general costs cannot be written to a problem file",
                ))
            }
        };

        let n = spec.horizon;
        let x0 = match &spec.state_sets[0] {
            StateSet::Fixed(x) => x.as_slice().to_vec(),
            _ => {
                return Err(FieldError::new(
                    "boundary.x0",
                    "initial state must be fixed",
                ))
            }
        };
        let xf = match &spec.state_sets[n] {
            StateSet::Fixed(x) => Some(x.as_slice().to_vec()),
            _ => None,
        };
        let covered = |t: usize| t == 0 || (t == n && xf.is_some());
        let needs_list = spec
            .state_sets
            .iter()
            .enumerate()
            .any(|(t, s)| !covered(t) && *s != StateSet::Free);
        let state_sets = needs_list.then(|| {
            Stages::PerStage(
                spec.state_sets
                    .iter()
                    .enumerate()
                    .map(|(t, s)| match s {
                        _ if covered(t) => StateSetEntry::Keyword(Keyword::Free),
                        StateSet::Free => StateSetEntry::Keyword(Keyword::Free),
                        StateSet::Fixed(x) => StateSetEntry::Fixed {
                            fixed: x.as_slice().to_vec(),
                        },
                        StateSet::Box { lower, upper } => StateSetEntry::Box {
                            lower: lower.as_slice().to_vec(),
                            upper: upper.as_slice().to_vec(),
                        },
                    })
                    .collect(),
            )
        });
        let control_sets = (!spec.control_sets.iter().all(|s| *s == ControlSet::Free)).then(|| {
            Stages::PerStage(
                spec.control_sets
                    .iter()
                    .map(|s| match s {
                        ControlSet::Free => ControlSetEntry::Keyword(Keyword::Free),
                        ControlSet::Box { lower, upper } => ControlSetEntry::Box {
                            lower: lower.as_slice().to_vec(),
                            upper: upper.as_slice().to_vec(),
                        },
                    })
                    .collect(),
            )
        });
        let banned = spec.supports.banned_lists();
        let banned_frequencies = if banned.iter().all(Vec::is_empty) {
            Vec::new()
        } else {
            banned
        };

        Ok(Self {
            horizon: n,
            dynamics,
            cost: Some(cost),
            boundary: Boundary { x0, xf },
            control_sets,
            state_sets,
            banned_frequencies,
            solver,
            options,
        })
    }
}

fn kind_name(kind: DynamicsKind) -> &'static str {
    match kind {
        DynamicsKind::Lti => "lti",
        DynamicsKind::ControlAffine => "control_affine",
    }
}
