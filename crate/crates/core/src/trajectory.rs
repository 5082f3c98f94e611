use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Paired state sequence `x_0..x_N` and control sequence `u_0..u_{N-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>) -> Self {
        debug_assert_eq!(states.len(), controls.len() + 1);
        Self { states, controls }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    pub fn control_dim(&self) -> usize {
        self.controls.first().map_or(0, |u| u.len())
    }

    /// Max-norm distance between two trajectories of the same shape.
    pub fn max_deviation(&self, other: &Trajectory) -> f64 {
        let xs = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).amax());
        let us = self
            .controls
            .iter()
            .zip(&other.controls)
            .map(|(a, b)| (a - b).amax());
        xs.chain(us).fold(0.0, f64::max)
    }

    /// Largest absolute entry over all states and controls.
    pub fn max_abs(&self) -> f64 {
        self.states
            .iter()
            .chain(&self.controls)
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }

    /// Control channel `k` as a length-N real signal.
    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.controls.iter().map(|u| u[k]).collect()
    }
}
