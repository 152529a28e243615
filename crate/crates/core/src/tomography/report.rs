//! Comparison of a reconstructed state with the ground truth.

use std::io::Write;

use crate::error::Result;
use crate::fock::{fidelity, trace_distance, DensityMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionReport {
    pub fidelity: f64,
    pub trace_distance: f64,
    /// Single-photon population `rho_{10,10} + rho_{01,01}`.
    pub eta_hat: f64,
    /// `|rho_{10,01}| / sqrt(rho_{10,10} rho_{01,01})`.
    pub visibility: f64,
    pub multi_photon_weight: f64,
    pub trace: f64,
}

/// Scalars describing how well `rho_hat` matches `rho_true`. Fidelity of an
/// unconstrained estimate uses its positive part.
pub fn reconstruction_report(
    rho_hat: &DensityMatrix,
    rho_true: &DensityMatrix,
) -> Result<ReconstructionReport> {
    let fid = fidelity(rho_hat, rho_true)?;
    let td = trace_distance(rho_hat, rho_true)?;
    let p10 = rho_hat.element(1, 0, 1, 0).re;
    let p01 = rho_hat.element(0, 1, 0, 1).re;
    let coherence = rho_hat.element(1, 0, 0, 1).norm();
    let denom = (p10 * p01).max(0.0).sqrt();
    let visibility = if denom > 0.0 { coherence / denom } else { 0.0 };
    Ok(ReconstructionReport {
        fidelity: fid,
        trace_distance: td,
        eta_hat: p10 + p01,
        visibility,
        multi_photon_weight: rho_hat.multi_photon_weight(),
        trace: rho_hat.trace(),
    })
}

impl ReconstructionReport {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("fidelity", format!("{:.10}", self.fidelity)),
            ("trace_distance", format!("{:.10}", self.trace_distance)),
            ("eta_hat", format!("{:.10}", self.eta_hat)),
            ("visibility", format!("{:.10}", self.visibility)),
            (
                "multi_photon_weight",
                format!("{:.10}", self.multi_photon_weight),
            ),
            ("trace", format!("{:.10}", self.trace)),
        ]
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, v) in self.key_values() {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    }
}
