//! Result document and plot-ready spectrum tables.

use std::io::Write;

use bandlimit::extremal::{ExtremalLift, NormalityVerdict, PmpCertificate};
use bandlimit::shooting::IterationRecord;
use bandlimit::spectrum::{forward_dft, SupportSpec, UncertaintyReport};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::file::SolverKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Solved,
    Infeasible,
    Abnormal,
    NotConverged,
    Singular,
    CertificateFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Solved => 0,
            Status::Infeasible => 2,
            Status::Abnormal => 3,
            Status::NotConverged | Status::Singular | Status::CertificateFailed => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub eta_c: f64,
    /// `p_0..p_{N-1}`.
    pub adjoints: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
    /// `η^x_0..η^x_N`.
    pub state_multipliers: Vec<Vec<f64>>,
}

impl From<&ExtremalLift> for Multipliers {
    fn from(lift: &ExtremalLift) -> Self {
        Self {
            eta_c: lift.eta_c,
            adjoints: rows(&lift.adjoints),
            nu: lift.nu.as_slice().to_vec(),
            state_multipliers: rows(&lift.state_multipliers),
        }
    }
}

pub(crate) fn rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.as_slice().to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpectrum {
    pub channel: usize,
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
    /// Banned frequencies after conjugate symmetrization.
    pub banned: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Residual of the stacked linear system, LQ solvers only.
    pub lsq_residual: Option<f64>,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub trace: Vec<IterationRecord>,
    pub warnings: Vec<String>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the input bytes.
    pub input_digest: String,
    pub overrides: Vec<String>,
    pub solver: SolverKind,
    pub status: Status,
    pub exit_code: i32,
    pub horizon: usize,
    pub cost: Option<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub multipliers: Option<Multipliers>,
    pub spectra: Vec<ChannelSpectrum>,
    pub certificate: Option<PmpCertificate>,
    pub normality: Option<NormalityVerdict>,
    pub uncertainty: Vec<UncertaintyReport>,
    pub diagnostics: Diagnostics,
}

impl ResultFile {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Encode(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }
}

/// Spectrum of each control channel with its banned set.
pub fn channel_spectra(
    controls: &[Vec<f64>],
    supports: &SupportSpec,
) -> bandlimit::Result<Vec<ChannelSpectrum>> {
    let Some(first) = controls.first() else {
        return Ok(Vec::new());
    };
    let symmetric = supports.symmetrized();
    (0..first.len())
        .map(|k| {
            let signal: Vec<f64> = controls.iter().map(|u| u[k]).collect();
            let spectrum = forward_dft(&signal)?;
            Ok(ChannelSpectrum {
                channel: k,
                magnitude: spectrum.magnitudes(),
                phase: spectrum.phases(),
                banned: symmetric.banned(k).iter().copied().collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub channel: usize,
    pub frequency: usize,
    pub magnitude: f64,
    pub phase: f64,
    pub banned: bool,
}

/// One row per channel and frequency `ξ = 0..N−1`.
pub fn spectrum_report(result: &ResultFile) -> Vec<SpectrumRow> {
    result
        .spectra
        .iter()
        .flat_map(|s| {
            s.magnitude
                .iter()
                .zip(&s.phase)
                .enumerate()
                .map(|(xi, (&magnitude, &phase))| SpectrumRow {
                    channel: s.channel,
                    frequency: xi,
                    magnitude,
                    phase,
                    banned: s.banned.contains(&xi),
                })
        })
        .collect()
}

pub fn write_spectrum_csv(rows: &[SpectrumRow], out: impl Write) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Encode(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::Encode(e.to_string()))
}
