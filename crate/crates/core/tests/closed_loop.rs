//! Simulate, reconstruct, compare: the data generator is known exactly, so the
//! reconstruction must find it again.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

use ebit_core::fock::{fidelity, global_phase_average, DensityMatrix, FockTruncation};
use ebit_core::homodyne::{run_scan, ScanConfig};
use ebit_core::tomography::{ml_reconstruct, ReconstructionConfig};

/// `(1 - eta)|00><00| + eta |e><e|` with `|e> = a|10> + b e^{-i phi}|01>`,
/// written out element by element.
fn truth(eta: f64, a: f64, b: f64, phi: f64) -> DensityMatrix {
    let trunc = FockTruncation::new(4).unwrap();
    let (v00, v10, v01) = (0, 5, 1);
    let mut m = DMatrix::zeros(25, 25);
    m[(v00, v00)] = Complex64::new(1.0 - eta, 0.0);
    m[(v10, v10)] = Complex64::new(eta * a * a, 0.0);
    m[(v01, v01)] = Complex64::new(eta * b * b, 0.0);
    m[(v10, v01)] = Complex64::from_polar(eta * a * b, phi);
    m[(v01, v10)] = Complex64::from_polar(eta * a * b, -phi);
    DensityMatrix::new(m, trunc).unwrap()
}

fn matrix(n_samples: usize, min_fidelity: f64, seed: u64) {
    let mut failures = Vec::new();
    for &phi in &[0.0, FRAC_PI_2, PI] {
        for &eta in &[0.605, 1.0] {
            for &(ra, rb) in &[(1.0f64, 1.0f64), (2.0, 1.0)] {
                let norm = (ra * ra + rb * rb).sqrt();
                let (a, b) = (ra / norm, rb / norm);
                let samples = run_scan(&ScanConfig {
                    n_samples,
                    phi,
                    eta,
                    alpha: a,
                    beta: b,
                    seed,
                    include_vacuum_bin: false,
                    ..Default::default()
                })
                .unwrap();
                let ml = ml_reconstruct(&samples, &ReconstructionConfig::default()).unwrap();
                let f = fidelity(&global_phase_average(&ml.rho), &truth(eta, a, b, phi)).unwrap();
                if f < min_fidelity {
                    failures.push(format!(
                        "phi={phi:.4} eta={eta} a:b={ra}:{rb} fidelity={f:.5}"
                    ));
                }
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn fidelity_matrix_at_1e5_samples() {
    matrix(100_000, 0.95, 71);
}

#[test]
fn fidelity_matrix_at_1e6_samples() {
    matrix(1_000_000, 0.99, 72);
}
