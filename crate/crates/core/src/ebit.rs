//! The remotely prepared single-photon ebit `alpha |1,0> + beta e^{-i phi} |0,1>`
//! and its efficiency-degraded mixture with the two-mode vacuum.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockTruncation, TwoModeKet};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Pump wavelength after frequency doubling of a 786 nm laser.
pub const DEFAULT_PUMP_WAVELENGTH: f64 = 393e-9;
pub const DEFAULT_PULSE_SEPARATION: f64 = 12.3e-9;
pub const DEFAULT_EFFICIENCY: f64 = 0.605;
pub const DEFAULT_IDLER_BANDWIDTH: f64 = 50e9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParams {
    /// Pump wavelength in metres.
    pub pump_wavelength: f64,
    /// Time between consecutive pump pulses, seconds.
    pub pulse_separation: f64,
    /// Long-minus-short arm delay of the idler interferometer, seconds.
    pub interferometer_delay: f64,
    /// Amplitude transmission of the long interferometer arm.
    pub arm_transmission: f64,
    /// Overall preparation and detection efficiency.
    pub efficiency: f64,
    /// Idler filter bandwidth, Hz.
    pub idler_bandwidth: Option<f64>,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            pump_wavelength: DEFAULT_PUMP_WAVELENGTH,
            pulse_separation: DEFAULT_PULSE_SEPARATION,
            interferometer_delay: 2.0 * DEFAULT_PULSE_SEPARATION,
            arm_transmission: 1.0,
            efficiency: DEFAULT_EFFICIENCY,
            idler_bandwidth: Some(DEFAULT_IDLER_BANDWIDTH),
        }
    }
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pump_wavelength > 0.0 && self.pump_wavelength.is_finite()) {
            return Err(Error::invalid(
                "experiment.pump_wavelength",
                "must be positive",
            ));
        }
        if !(self.pulse_separation > 0.0 && self.pulse_separation.is_finite()) {
            return Err(Error::invalid(
                "experiment.pulse_separation",
                "must be positive",
            ));
        }
        if !self.interferometer_delay.is_finite() {
            return Err(Error::invalid(
                "experiment.interferometer_delay",
                "must be finite",
            ));
        }
        check_unit_interval("experiment.arm_transmission", self.arm_transmission)?;
        check_unit_interval("experiment.efficiency", self.efficiency)?;
        if let Some(sigma) = self.idler_bandwidth {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::invalid(
                    "experiment.idler_bandwidth",
                    "must be positive",
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_unit_interval(field: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(field, format!("{value} is outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDerivation {
    /// Ebit phase in `[0, 2 pi)`.
    pub phi: f64,
    /// Unreduced phase expressed in optical cycles of the pump.
    pub cycles: f64,
    pub warnings: Vec<String>,
}

/// Ebit phase `Omega_p (T_p - T/2)` from the physical delays.
///
/// The phase is of order 10^7 cycles for nanosecond delays, so it is formed in
/// units of cycles with an error-free product (`fma`) and only the fractional
/// part is scaled by `2 pi`. The residual absolute error is about
/// `|cycles| * 2^-52` cycles, dominated by the rounding of the inputs.
pub fn phi_from_delays(params: &ExperimentParams) -> Result<PhaseDerivation> {
    params.validate()?;
    let half_excess = params.pulse_separation - 0.5 * params.interferometer_delay;
    let cycles_per_second = SPEED_OF_LIGHT / params.pump_wavelength;
    let head = half_excess * cycles_per_second;
    let tail = half_excess.mul_add(cycles_per_second, -head);
    let frac = ((head - head.floor()) + tail).rem_euclid(1.0);
    let mut phi = TAU * frac;
    if phi >= TAU {
        phi = 0.0;
    }

    let mut warnings = Vec::new();
    if let Some(sigma) = params.idler_bandwidth {
        let limit = PI / params.pulse_separation;
        if sigma <= limit {
            warnings.push(format!(
                "idler bandwidth {sigma:e} does not exceed pi/T_p = {limit:e}; \
                 first-order interference between time-bins is not suppressed"
            ));
        }
    }
    Ok(PhaseDerivation {
        phi,
        cycles: head + tail,
        warnings,
    })
}

/// Heralded amplitudes when the long arm transmits amplitude `t`.
pub fn arm_loss_amplitudes(t: f64) -> Result<(f64, f64)> {
    check_unit_interval("arm_transmission", t)?;
    let norm = (1.0 + t * t).sqrt();
    Ok((1.0 / norm, t / norm))
}

/// `alpha |1,0> + beta e^{-i phi} |0,1>`.
pub fn make_ebit(alpha: f64, beta: f64, phi: f64, trunc: FockTruncation) -> Result<TwoModeKet> {
    if alpha < 0.0 || beta < 0.0 {
        return Err(Error::invalid(
            "alpha/beta",
            "amplitudes must be non-negative",
        ));
    }
    let norm = alpha * alpha + beta * beta;
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(
            "alpha/beta",
            format!("alpha^2 + beta^2 = {norm}, expected 1"),
        ));
    }
    if !phi.is_finite() {
        return Err(Error::invalid("phi", "must be finite"));
    }
    // Absorb the 1e-10 slack so the ket passes its own 1e-12 norm check.
    let (alpha, beta) = (alpha / norm.sqrt(), beta / norm.sqrt());
    let mut amplitudes = DVector::zeros(trunc.dim());
    amplitudes[trunc.index(1, 0)] = Complex64::new(alpha, 0.0);
    amplitudes[trunc.index(0, 1)] = Complex64::from_polar(beta, -phi);
    TwoModeKet::new(amplitudes, trunc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bell {
    /// `(|1,0> + |0,1>)/sqrt 2`
    Plus,
    /// `(|1,0> - |0,1>)/sqrt 2`
    Minus,
}

impl Bell {
    pub fn phi(self) -> f64 {
        match self {
            Bell::Plus => 0.0,
            Bell::Minus => PI,
        }
    }
}

pub fn bell_state(which: Bell, trunc: FockTruncation) -> TwoModeKet {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    make_ebit(a, a, which.phi(), trunc).expect("balanced amplitudes are normalised")
}

/// `(1 - eta) |0,0><0,0| + eta |psi><psi|`.
pub fn heralded_state(ket: &TwoModeKet, eta: f64) -> Result<DensityMatrix> {
    check_unit_interval("eta", eta)?;
    let trunc = ket.truncation();
    let mut elements = ket.projector().elements().scale(eta);
    elements[(0, 0)] += Complex64::new(1.0 - eta, 0.0);
    DensityMatrix::new(elements, trunc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trunc() -> FockTruncation {
        FockTruncation::default()
    }

    #[test]
    fn phase_vanishes_at_twice_the_pulse_separation() {
        let p = ExperimentParams::default();
        let d = phi_from_delays(&p).unwrap();
        assert_eq!(d.phi, 0.0);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn one_optical_period_flips_the_phase() {
        let period = DEFAULT_PUMP_WAVELENGTH / SPEED_OF_LIGHT;
        assert!((period - 1.3109e-15).abs() < 1e-19);
        let p = ExperimentParams {
            interferometer_delay: 2.0 * DEFAULT_PULSE_SEPARATION - period,
            ..Default::default()
        };
        let phi = phi_from_delays(&p).unwrap().phi;
        assert!((phi - PI).abs() < 1e-6, "phi = {phi}");
    }

    #[test]
    fn phase_is_periodic_in_the_delay() {
        // Period in T is 2 * (2 pi / Omega_p) = 2 lambda / c.
        let period = 2.0 * DEFAULT_PUMP_WAVELENGTH / SPEED_OF_LIGHT;
        let base = ExperimentParams {
            interferometer_delay: 2.0 * DEFAULT_PULSE_SEPARATION - 0.3 * period,
            ..Default::default()
        };
        let shifted = ExperimentParams {
            interferometer_delay: base.interferometer_delay + period,
            ..base.clone()
        };
        let a = phi_from_delays(&base).unwrap().phi;
        let b = phi_from_delays(&shifted).unwrap().phi;
        let diff = (a - b).rem_euclid(TAU);
        assert!(diff.min(TAU - diff) < 1e-6, "{a} vs {b}");
        assert!((a - 0.3 * TAU).abs() < 1e-6);
    }

    #[test]
    fn narrow_filter_warns_but_succeeds() {
        let p = ExperimentParams {
            idler_bandwidth: Some(1e8),
            ..Default::default()
        };
        let d = phi_from_delays(&p).unwrap();
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn invalid_delays_rejected() {
        let p = ExperimentParams {
            pump_wavelength: 0.0,
            ..Default::default()
        };
        assert!(phi_from_delays(&p).is_err());
        let p = ExperimentParams {
            efficiency: 1.2,
            ..Default::default()
        };
        assert!(matches!(
            phi_from_delays(&p),
            Err(Error::InvalidParameter { field, .. }) if field == "experiment.efficiency"
        ));
    }

    #[test]
    fn arm_loss_examples() {
        let (a, b) = arm_loss_amplitudes(1.0).unwrap();
        assert!((a - 0.5f64.sqrt()).abs() < 1e-15 && (b - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(arm_loss_amplitudes(0.0).unwrap(), (1.0, 0.0));
        let (a, b) = arm_loss_amplitudes(0.5).unwrap();
        assert!((a - 1.0 / 1.25f64.sqrt()).abs() < 1e-15);
        assert!((b - 0.5 / 1.25f64.sqrt()).abs() < 1e-15);
        assert!((a - 0.894_427).abs() < 1e-6 && (b - 0.447_214).abs() < 1e-6);
        assert!(arm_loss_amplitudes(1.01).is_err());
        assert!(arm_loss_amplitudes(-0.1).is_err());
    }

    #[test]
    fn bell_states() {
        let s = 0.5f64.sqrt();
        let plus = make_ebit(s, s, 0.0, trunc()).unwrap();
        assert!((plus.amplitude(1, 0) - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert!((plus.amplitude(0, 1) - Complex64::new(s, 0.0)).norm() < 1e-15);
        let minus = make_ebit(s, s, PI, trunc()).unwrap();
        assert!((minus.amplitude(0, 1) - Complex64::new(-s, 0.0)).norm() < 1e-15);
        assert_eq!(bell_state(Bell::Minus, trunc()), minus);

        let product = make_ebit(1.0, 0.0, 1.234, trunc()).unwrap();
        assert_eq!(product.amplitude(1, 0), Complex64::new(1.0, 0.0));
        assert_eq!(product.amplitude(0, 1).norm(), 0.0);
    }

    #[test]
    fn make_ebit_errors() {
        assert!(make_ebit(0.9, 0.9, 0.0, trunc()).is_err());
        assert!(make_ebit(-0.6, 0.8, 0.0, trunc()).is_err());
    }

    #[test]
    fn heralded_examples() {
        let plus = bell_state(Bell::Plus, trunc());
        let pure = heralded_state(&plus, 1.0).unwrap();
        assert!((pure.purity() - 1.0).abs() < 1e-14);

        let rho = heralded_state(&plus, 0.605).unwrap();
        assert!((rho.element(0, 0, 0, 0).re - 0.395).abs() < 1e-14);
        assert!((rho.element(1, 0, 1, 0).re - 0.3025).abs() < 1e-14);
        assert!((rho.element(0, 1, 0, 1).re - 0.3025).abs() < 1e-14);
        assert!((rho.element(1, 0, 0, 1) - Complex64::new(0.3025, 0.0)).norm() < 1e-14);

        let vac = heralded_state(&plus, 0.0).unwrap();
        assert_eq!(vac, DensityMatrix::vacuum(trunc()));
        assert!(heralded_state(&plus, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn equal_suppression_of_populations_and_coherence(
            t in 0.0f64..=1.0, phi in -7.0f64..7.0, eta in 0.0f64..=1.0
        ) {
            let (a, b) = arm_loss_amplitudes(t).unwrap();
            let rho = heralded_state(&make_ebit(a, b, phi, trunc()).unwrap(), eta).unwrap();
            prop_assert!(rho.is_physical());
            prop_assert!((rho.element(1, 0, 1, 0).re - eta * a * a).abs() < 1e-12);
            prop_assert!((rho.element(0, 1, 0, 1).re - eta * b * b).abs() < 1e-12);
            prop_assert!((rho.element(1, 0, 0, 1).norm() - eta * a * b).abs() < 1e-12);
            let eigen_count = rho.eigenvalues().iter().filter(|v| v.abs() > 1e-12).count();
            prop_assert!(eigen_count <= 2);
        }

        #[test]
        fn arm_loss_keeps_the_state_pure(t in 0.0f64..=1.0, phi in 0.0f64..6.3) {
            let (a, b) = arm_loss_amplitudes(t).unwrap();
            prop_assert!((a * a + b * b - 1.0).abs() < 1e-14);
            let rho = heralded_state(&make_ebit(a, b, phi, trunc()).unwrap(), 1.0).unwrap();
            prop_assert!((rho.purity() - 1.0).abs() < 1e-12);
        }
    }
}
