//! Direct sampling with pattern functions.
//!
//! In the scaled variable `q = sqrt 2 x` the kernel is
//! `f_nm(q) = d/dq [psi_n(q) phi_m(q)]` for `n <= m`, where `psi_n` are the
//! normalized oscillator eigenfunctions and `phi_m` the irregular solutions,
//! `phi_0 = 2 pi^{1/4} e^{q^2/2} D(q)` with `D` the Dawson function and
//! `phi_{m+1}` obtained by the raising operator. Both families are carried in
//! Gaussian-scaled form so their products never overflow.
//!
//! `f_nm` is symmetric in `(n, m)` and satisfies
//! `int f_nm psi_a psi_b dx = 1` for `{a, b} = {n, m}` and `0` for every other
//! pair with `|a - b| = |n - m|`; the phase average removes all remaining pairs.
//!
//! The estimator only needs phases in `[0, pi]`: a record `(x1, x2, s)` is
//! equally a record `(x1, -x2, s + pi)` of the same state, and the kernel
//! contribution of the mirrored record is identical. Phase settings are
//! weighted by the trapezoid rule on the mirrored circle.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{
    check_samples, chunks, group_by_phase, BlockLayout, PhaseGroup, QuadratureGrid,
    ReconstructionConfig,
};
use crate::error::{Error, Result};
use crate::fock::{psi_table, DensityMatrix};
use crate::homodyne::QuadratureSample;
use crate::special::dawson;

/// Largest admissible orthogonality residual of the kernels.
pub const SELF_TEST_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternKernels {
    n_max: usize,
}

impl PatternKernels {
    pub fn new(n_max: usize) -> Self {
        Self { n_max }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `f_nm(x)` for all `n, m <= n_max`, row-major.
    pub fn table(&self, x: f64) -> Vec<f64> {
        let n = self.n_max;
        let q = SQRT_2 * x;
        let kappa = 2.0 * PI.powf(0.25);
        // psi~ = psi e^{q^2/2}, phi~ = phi e^{-q^2/2}
        let mut psi = vec![0.0; n + 2];
        let mut phi = vec![0.0; n + 2];
        psi[0] = PI.powf(-0.25);
        psi[1] = SQRT_2 * q * psi[0];
        phi[0] = kappa * dawson(q);
        phi[1] = (2.0 * q * phi[0] - kappa) / SQRT_2;
        for j in 1..=n {
            let (a, b) = (j as f64, (j + 1) as f64);
            psi[j + 1] = (SQRT_2 * q * psi[j] - a.sqrt() * psi[j - 1]) / b.sqrt();
            phi[j + 1] = (SQRT_2 * q * phi[j] - a.sqrt() * phi[j - 1]) / b.sqrt();
        }
        let mut out = vec![0.0; (n + 1) * (n + 1)];
        for lo in 0..=n {
            for hi in lo..=n {
                let d_psi = {
                    let down = if lo > 0 {
                        (lo as f64).sqrt() * psi[lo - 1]
                    } else {
                        0.0
                    };
                    (down - ((lo + 1) as f64).sqrt() * psi[lo + 1]) / SQRT_2
                };
                let d_phi = if hi == 0 {
                    -q * phi[0] + kappa
                } else {
                    ((hi as f64).sqrt() * phi[hi - 1] - ((hi + 1) as f64).sqrt() * phi[hi + 1])
                        / SQRT_2
                };
                let f = d_psi * phi[hi] + psi[lo] * d_phi;
                out[lo * (n + 1) + hi] = f;
                out[hi * (n + 1) + lo] = f;
            }
        }
        out
    }

    pub fn eval(&self, n: usize, m: usize, x: f64) -> f64 {
        self.table(x)[n * (self.n_max + 1) + m]
    }

    /// Worst residual of the orthogonality relations over all
    /// `n, m, a, b <= n_max` with `|a - b| = |n - m|`.
    pub fn orthogonality_residual(&self, grid: &QuadratureGrid) -> f64 {
        let n = self.n_max;
        let d = n + 1;
        let (xs, ws) = grid.nodes();
        // integrals[(n, m, a, b)]
        let mut integrals = vec![0.0; d * d * d * d];
        for (&x, &w) in xs.iter().zip(&ws) {
            let f = self.table(x);
            let psi = psi_table(n, x);
            for nm in 0..d * d {
                let wf = w * f[nm];
                for a in 0..d {
                    for b in 0..d {
                        integrals[(nm * d + a) * d + b] += wf * psi[a] * psi[b];
                    }
                }
            }
        }
        let mut worst: f64 = 0.0;
        for nn in 0..d {
            for m in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        if a.abs_diff(b) != nn.abs_diff(m) {
                            continue;
                        }
                        let expected = if (a == nn && b == m) || (a == m && b == nn) {
                            1.0
                        } else {
                            0.0
                        };
                        let got = integrals[((nn * d + m) * d + a) * d + b];
                        worst = worst.max((got - expected).abs());
                    }
                }
            }
        }
        worst
    }

    /// Fails with a diagnostic when the kernels are not accurate to [`SELF_TEST_TOL`].
    pub fn self_test(&self, grid: &QuadratureGrid) -> Result<f64> {
        let residual = self.orthogonality_residual(grid);
        if !(residual <= SELF_TEST_TOL) {
            return Err(Error::KernelSelfTest(format!(
                "orthogonality residual {residual:e} exceeds {SELF_TEST_TOL:e} at n_max={}",
                self.n_max
            )));
        }
        Ok(residual)
    }
}

#[derive(Debug, Clone)]
pub struct PatternResult {
    /// Hermitian but otherwise unconstrained estimate.
    pub rho: DensityMatrix,
    pub self_test_error: f64,
}

/// Trapezoid weight of each phase setting after mirroring `[0, pi]` onto the
/// full circle; sums to one.
fn phase_weights(groups: &[PhaseGroup]) -> Vec<f64> {
    let b = groups.len();
    (0..b)
        .map(|j| {
            let before = if j == 0 {
                groups[0].chi + PI - groups[b - 1].chi
            } else {
                groups[j].chi - groups[j - 1].chi
            };
            let after = if j + 1 == b {
                groups[0].chi + PI - groups[b - 1].chi
            } else {
                groups[j + 1].chi - groups[j].chi
            };
            (before + after) / 2.0 / PI
        })
        .collect()
}

pub fn pattern_reconstruct(
    samples: &[QuadratureSample],
    config: &ReconstructionConfig,
) -> Result<PatternResult> {
    check_samples(samples)?;
    let trunc = config.truncation()?;
    if let Some(s) = samples.iter().find(|s| !(0.0..=PI).contains(&s.chi)) {
        return Err(Error::invalid(
            "samples",
            format!("phase {} outside [0, pi]", s.chi),
        ));
    }
    let kernels = PatternKernels::new(trunc.n_max());
    let self_test_error = kernels.self_test(&config.quadrature_grid)?;

    let layout = BlockLayout::new(trunc);
    let groups = group_by_phase(samples);
    let weights = phase_weights(&groups);
    let work = chunks(&groups);
    let d = trunc.mode_dim();

    let partials: Vec<Vec<f64>> = work
        .par_iter()
        .map(|&(g, start, end)| {
            let mut acc = vec![0.0; layout.packed_len];
            for &(x1, x2) in &groups[g].pairs[start..end] {
                let f1 = kernels.table(x1);
                let f2 = kernels.table(x2);
                for (blk, &(bs, size)) in layout.blocks.iter().enumerate() {
                    let off = layout.offsets[blk];
                    for a in 0..size {
                        let (k, l) = layout.members[bs + a];
                        for b in 0..size {
                            let (m, n) = layout.members[bs + b];
                            acc[off + a * size + b] += f1[k * d + m] * f2[l * d + n];
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut estimate = DMatrix::<Complex64>::zeros(trunc.dim(), trunc.dim());
    for (&(g, _, _), acc) in work.iter().zip(&partials) {
        let group = &groups[g];
        let per_sample = weights[g] / group.pairs.len() as f64;
        for (blk, &(bs, size)) in layout.blocks.iter().enumerate() {
            let off = layout.offsets[blk];
            for a in 0..size {
                let l = layout.members[bs + a].1 as f64;
                for b in 0..size {
                    let n = layout.members[bs + b].1 as f64;
                    let v = Complex64::from_polar(
                        per_sample * acc[off + a * size + b],
                        (l - n) * group.chi,
                    );
                    estimate[layout.flat(blk, a, b)] += v;
                }
            }
        }
    }

    Ok(PatternResult {
        rho: DensityMatrix::from_estimate(estimate, trunc)?,
        self_test_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homodyne::{run_scan, uniform_phase_grid, ScanConfig};
    use crate::special::dawson;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn kernels_pass_orthogonality() {
        for n_max in 1..=6 {
            let residual = PatternKernels::new(n_max)
                .self_test(&QuadratureGrid::default())
                .unwrap();
            assert!(residual < 1e-8, "n_max={n_max}: {residual:e}");
        }
    }

    #[test]
    fn lowest_kernel_closed_form() {
        let k = PatternKernels::new(2);
        for &x in &[0.0, 0.3, -1.2, 2.5] {
            let q = SQRT_2 * x;
            let expected = 2.0 * (1.0 - 2.0 * q * dawson(q));
            assert!((k.eval(0, 0, x) - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn kernels_are_bounded_and_have_parity() {
        let k = PatternKernels::new(4);
        for &x in &[0.4, 1.7, 3.0, 5.0] {
            let plus = k.table(x);
            let minus = k.table(-x);
            for n in 0..=4 {
                for m in 0..=4 {
                    let sign = if (n + m) % 2 == 0 { 1.0 } else { -1.0 };
                    let i = n * 5 + m;
                    assert!((minus[i] - sign * plus[i]).abs() < 1e-9 * (1.0 + plus[i].abs()));
                    assert!(plus[i].abs() < 50.0);
                }
            }
        }
    }

    #[test]
    fn phase_weights_sum_to_one() {
        let groups: Vec<PhaseGroup> = uniform_phase_grid(5)
            .into_iter()
            .map(|chi| PhaseGroup { chi, pairs: vec![] })
            .collect();
        let w = phase_weights(&groups);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[0] - 0.125).abs() < 1e-15 && (w[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn vacuum_estimate() {
        let samples = run_scan(&ScanConfig {
            n_samples: 1_000_000,
            phase_grid: uniform_phase_grid(100),
            eta: 0.0,
            seed: 21,
            include_vacuum_bin: false,
            ..Default::default()
        })
        .unwrap();
        let r = pattern_reconstruct(&samples, &ReconstructionConfig::default()).unwrap();
        let e = r.rho.elements();
        assert!((e[(0, 0)].re - 1.0).abs() < 0.01);
        for i in 0..25 {
            for j in 0..25 {
                if (i, j) != (0, 0) {
                    assert!(e[(i, j)].norm() <= 0.01, "{i},{j}: {}", e[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn ebit_coherence_estimate() {
        let samples = run_scan(&ScanConfig {
            n_samples: 400_000,
            phase_grid: uniform_phase_grid(100),
            eta: 0.605,
            alpha: FRAC_1_SQRT_2,
            beta: FRAC_1_SQRT_2,
            phi: 0.8,
            seed: 22,
            include_vacuum_bin: false,
        })
        .unwrap();
        let r = pattern_reconstruct(&samples, &ReconstructionConfig::default()).unwrap();
        let c = r.rho.element(1, 0, 0, 1);
        let expected = Complex64::from_polar(0.3025, 0.8);
        assert!((c - expected).norm() < 0.02, "{c}");
    }
}
