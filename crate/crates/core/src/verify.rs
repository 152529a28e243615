//! End-to-end self-check: module invariants plus the closed simulate and
//! reconstruct loop, reported as a pass/fail table.
//!
//! Expected values are derived from the configured ebit (`eta`, `alpha`,
//! `beta`, `phi`), so the suite also runs for non-default parameters.
//! Statistical checks draw from streams disjoint from the scan bins.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::ebit::{heralded_state, make_ebit};
use crate::error::Result;
use crate::fock::{psi_table, DensityMatrix};
use crate::homodyne::{
    effective_phase, run_scan, JointPdf, PairSampler, QuadratureSample, ScanConfig,
};
use crate::special::gauss_hermite;
use crate::stats::{ks_distance, mean_variance, Histogram2d};
use crate::tomography::{
    ml_reconstruct, pattern_reconstruct, Method, PatternKernels, ReconstructionConfig,
};
use crate::wigner::{
    correlation_coordinates, export_section, w0, w1, wigner_from_rho, AnalyticEbit, Axis,
    PhasePoint4, Section, WignerSource, DEFAULT_X1Y1_FIXED,
};

pub const ELEMENT_TOL: f64 = 0.01;
pub const MULTI_PHOTON_LIMIT: f64 = 0.01;
pub const RUNTIME_LIMIT: Duration = Duration::from_secs(300);
pub const SUPPRESSION_TOL: f64 = 0.05;
pub const GRID_TOL: f64 = 0.015;
pub const FACTORIZATION_TOL: f64 = 1e-12;
pub const P_VALUE_MIN: f64 = 1e-3;
pub const VARIANCE_REL_TOL: f64 = 0.01;
pub const SWEEP_POINTS: usize = 25;
pub const SWEEP_SAMPLES: usize = 400_000;
pub const SWEEP_TOL: f64 = 0.003;
pub const SADDLE_TOL: f64 = 0.005;
pub const ESTIMATOR_TOL: f64 = 0.02;
/// Family-wise level of the bin-against-rest KS comparisons.
pub const KS_LEVEL: f64 = 0.05;

const FIT_SAMPLES: usize = 200_000;
const VARIANCE_SAMPLES: usize = 1_000_000;
/// Stream offset keeping the suite's own draws apart from the scan bins.
const STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity, formatted.
    pub value: String,
    /// Acceptance condition, formatted.
    pub limit: String,
}

impl Check {
    fn new(name: &str, passed: bool, value: String, limit: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            value,
            limit: limit.into(),
        }
    }

    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self::new(
            name,
            value <= limit,
            format!("{value:.3e}"),
            format!("<= {limit:e}"),
        )
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Tab-separated `check result value limit` table with a header row.
pub fn write_table<W: Write>(mut out: W, checks: &[Check]) -> std::io::Result<()> {
    writeln!(out, "check\tresult\tvalue\tlimit")?;
    for c in checks {
        let result = if c.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{}\t{}\t{}\t{}", c.name, result, c.value, c.limit)?;
    }
    Ok(())
}

fn stream(seed: u64, k: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_BASE + k);
    rng
}

fn draw(
    sampler: &PairSampler,
    chi: f64,
    n: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<(f64, f64)>> {
    (0..n).map(|_| sampler.sample(chi, rng)).collect()
}

/// Runs every check. `scan` describes the main dataset; the reconstruction
/// settings supply `n_max` and the iteration controls.
pub fn run_verify(scan: &ScanConfig, recon: &ReconstructionConfig) -> Result<Vec<Check>> {
    scan.validate()?;
    recon.validate()?;
    let ml_config = ReconstructionConfig {
        method: Method::MaxLikelihood,
        ..recon.clone()
    };
    let trunc = ml_config.truncation()?;
    let model = AnalyticEbit {
        alpha: scan.alpha,
        beta: scan.beta,
        phi: scan.phi,
        eta: scan.eta,
    };
    let truth = heralded_state(
        &make_ebit(scan.alpha, scan.beta, scan.phi, trunc)?,
        scan.eta,
    )?;
    let pdf = JointPdf::new(scan.eta, scan.alpha, scan.beta)?;
    let sampler = PairSampler::new(pdf);

    let mut checks = invariant_checks(&model, &truth, recon)?;

    let samples = run_scan(scan)?;
    let start = Instant::now();
    let ml = ml_reconstruct(&samples, &ml_config)?;
    let elapsed = start.elapsed();
    checks.push(Check::at_most(
        "ml.povm_normalization",
        ml.povm_normalization_error,
        1e-10,
    ));
    checks.push(Check::new(
        "ml.converged",
        ml.converged,
        format!("{} iterations", ml.iterations),
        format!("residual < {:e}", ml_config.convergence_tol),
    ));
    checks.extend(efficiency_checks(&ml.rho, &truth, elapsed));
    checks.push(suppression_check(&ml.rho));
    checks.extend(negativity_checks(&ml.rho, &model)?);
    checks.extend(marginal_checks(scan, &samples, &sampler)?);
    checks.extend(sweep_checks(scan, &sampler)?);

    let pattern = pattern_reconstruct(&samples, &ml_config)?;
    let diff = pattern.rho.elements() - ml.rho.elements();
    let max_diff = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
    checks.push(Check::at_most(
        "estimators.max_element_difference",
        max_diff,
        ESTIMATOR_TOL,
    ));

    checks.extend(bell_pair_checks(scan, &ml_config, &ml.rho, trunc)?);
    Ok(checks)
}

fn invariant_checks(
    model: &AnalyticEbit,
    truth: &DensityMatrix,
    recon: &ReconstructionConfig,
) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let (xs, ws) = recon.quadrature_grid.nodes();
    let mut worst: f64 = 0.0;
    let mut gram = vec![0.0; 81];
    for (&x, &w) in xs.iter().zip(&ws) {
        let t = psi_table(8, x);
        for a in 0..9 {
            for b in 0..9 {
                gram[a * 9 + b] += w * t[a] * t[b];
            }
        }
    }
    for a in 0..9 {
        for b in 0..9 {
            let expected = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((gram[a * 9 + b] - expected).abs());
        }
    }
    checks.push(Check::at_most("fock.orthonormality", worst, 1e-12));

    checks.push(Check::at_most(
        "wigner.factorization",
        factorization_residual(21),
        FACTORIZATION_TOL,
    ));

    // W is a Gaussian times a quadratic, so 8 Gauss-Hermite nodes per axis are exact.
    let (t, tw) = gauss_hermite(8);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let u: Vec<f64> = t
        .iter()
        .zip(&tw)
        .map(|(t, w)| w * (t * t).exp() * s)
        .collect();
    let mut norm = 0.0;
    let mut single_mode: f64 = 0.0;
    for (i, &a) in t.iter().enumerate() {
        for (j, &b) in t.iter().enumerate() {
            let mut inner = 0.0;
            for (k, &c) in t.iter().enumerate() {
                for (l, &d) in t.iter().enumerate() {
                    inner +=
                        u[k] * u[l] * model.wigner(PhasePoint4::new(a * s, b * s, c * s, d * s));
                }
            }
            norm += u[i] * u[j] * inner;
            let p1 = model.eta * model.alpha * model.alpha;
            let reduced = (1.0 - p1) * w0(a * s, b * s) + p1 * w1(a * s, b * s);
            single_mode = single_mode.max((inner - reduced).abs());
        }
    }
    checks.push(Check::at_most(
        "wigner.normalization",
        (norm - 1.0).abs(),
        1e-8,
    ));
    checks.push(Check::at_most(
        "wigner.single_mode_reduction",
        single_mode,
        1e-10,
    ));

    let mut equivalence: f64 = 0.0;
    for &(r, frac) in &[(0.0, 0.0), (0.5, 0.1), (1.0, 0.3), (1.5, 0.55), (2.0, 0.8)] {
        let ang = 2.0 * PI * frac;
        let p = PhasePoint4::new(
            r * ang.cos(),
            r * ang.sin(),
            0.7 * r * (3.0 * ang).sin(),
            -0.4 * r,
        );
        equivalence = equivalence.max((wigner_from_rho(truth, p) - model.wigner(p)).abs());
    }
    checks.push(Check::at_most(
        "wigner.density_equivalence",
        equivalence,
        1e-6,
    ));

    let residual = PatternKernels::new(recon.n_max).orthogonality_residual(&recon.quadrature_grid);
    checks.push(Check::at_most("pattern.orthogonality", residual, 1e-6));
    Ok(checks)
}

/// Largest deviation from the photon-times-vacuum product form in correlation
/// coordinates, over a `points^4` grid on `[-3, 3]^4`.
pub fn factorization_residual(points: usize) -> f64 {
    let axis: Vec<f64> = (0..points)
        .map(|i| -3.0 + 6.0 * i as f64 / (points - 1) as f64)
        .collect();
    let mut worst: f64 = 0.0;
    for &phi in &[0.0, FRAC_PI_4, FRAC_PI_2, PI] {
        let model = AnalyticEbit::balanced(phi, 1.0);
        for &x1 in &axis {
            for &y1 in &axis {
                for &x2 in &axis {
                    for &y2 in &axis {
                        let p = PhasePoint4::new(x1, y1, x2, y2);
                        let (xp, yp, xm, ym) = correlation_coordinates(p, phi);
                        worst = worst.max((model.wigner(p) - w1(xp, yp) * w0(xm, ym)).abs());
                    }
                }
            }
        }
    }
    worst
}

fn element_check(name: &str, got: f64, expected: f64) -> Check {
    Check::new(
        name,
        (got - expected).abs() <= ELEMENT_TOL,
        format!("{got:.4}"),
        format!("{expected:.4} +- {ELEMENT_TOL}"),
    )
}

fn efficiency_checks(rho: &DensityMatrix, truth: &DensityMatrix, elapsed: Duration) -> Vec<Check> {
    vec![
        element_check(
            "efficiency.rho_00_00",
            rho.element(0, 0, 0, 0).re,
            truth.element(0, 0, 0, 0).re,
        ),
        element_check(
            "efficiency.rho_10_10",
            rho.element(1, 0, 1, 0).re,
            truth.element(1, 0, 1, 0).re,
        ),
        element_check(
            "efficiency.rho_01_01",
            rho.element(0, 1, 0, 1).re,
            truth.element(0, 1, 0, 1).re,
        ),
        element_check(
            "efficiency.re_rho_10_01",
            rho.element(1, 0, 0, 1).re,
            truth.element(1, 0, 0, 1).re,
        ),
        element_check(
            "efficiency.im_rho_10_01",
            rho.element(1, 0, 0, 1).im,
            truth.element(1, 0, 0, 1).im,
        ),
        Check::at_most(
            "efficiency.multi_photon_weight",
            rho.multi_photon_weight(),
            MULTI_PHOTON_LIMIT,
        ),
        Check::new(
            "efficiency.ml_runtime",
            elapsed <= RUNTIME_LIMIT,
            format!("{:.1} s", elapsed.as_secs_f64()),
            format!("<= {} s", RUNTIME_LIMIT.as_secs()),
        ),
    ]
}

/// Coherence relative to the geometric mean of the single-photon populations;
/// for a balanced ebit this is `|rho_{10,01}| / rho_{10,10}`.
fn suppression_check(rho: &DensityMatrix) -> Check {
    let coherence = rho.element(1, 0, 0, 1).norm();
    let pop = (rho.element(1, 0, 1, 0).re * rho.element(0, 1, 0, 1).re)
        .max(0.0)
        .sqrt();
    let ratio = coherence / pop;
    Check::new(
        "suppression.coherence_ratio",
        (ratio - 1.0).abs() <= SUPPRESSION_TOL,
        format!("{ratio:.4}"),
        format!("1 +- {SUPPRESSION_TOL}"),
    )
}

fn negativity_checks(rho: &DensityMatrix, model: &AnalyticEbit) -> Result<Vec<Check>> {
    let (f1, f2) = DEFAULT_X1Y1_FIXED;
    let origin = wigner_from_rho(rho, PhasePoint4::new(0.0, 0.0, f1, f2));
    let analytic_origin = model.wigner(PhasePoint4::origin());
    let expected_origin = (1.0 - model.eta) * (2.0 / PI).powi(2) - model.eta * 4.0 / (PI * PI);
    let axis = Axis::default();
    let rec = export_section(
        WignerSource::Density(rho),
        Section::X1Y1,
        axis,
        axis,
        (f1, f2),
        0.0,
    )?;
    let ana = export_section(
        WignerSource::Analytic(*model),
        Section::X1Y1,
        axis,
        axis,
        (f1, f2),
        0.0,
    )?;
    let diff = rec.max_abs_difference(&ana)?;
    Ok(vec![
        Check::new(
            "negativity.reconstructed_origin",
            origin < 0.0,
            format!("{origin:.5}"),
            "< 0",
        ),
        Check::at_most(
            "negativity.analytic_origin",
            (analytic_origin - expected_origin).abs(),
            1e-12,
        ),
        Check::at_most("negativity.section_max_abs_difference", diff, GRID_TOL),
    ])
}

fn marginal_checks(
    scan: &ScanConfig,
    samples: &[QuadratureSample],
    sampler: &PairSampler,
) -> Result<Vec<Check>> {
    let pdf = sampler.pdf();
    let mut checks = Vec::new();
    for (k, &chi) in [0.0, FRAC_PI_2, PI].iter().enumerate() {
        let phase = scan.phi + chi;
        let mut rng = stream(scan.seed, k as u64);
        let mut hist = Histogram2d::new(-3.0, 3.0, 40);
        for (x1, x2) in draw(sampler, phase, FIT_SAMPLES, &mut rng)? {
            hist.add(x1, x2);
        }
        let fit = hist.chi_square(|a, b| pdf.density(a, b, phase))?;
        checks.push(Check::new(
            &format!("marginals.chi_square_{}", ["0", "pi_2", "pi"][k]),
            fit.p_value >= P_VALUE_MIN,
            format!("p={:.4}", fit.p_value),
            format!(">= {P_VALUE_MIN:e}"),
        ));
    }

    // each bin against the pooled rest, Bonferroni over bins and modes
    let bins = scan.phase_grid.len();
    let per_bin = scan.per_bin();
    let tests = 2 * bins;
    let c = (-(KS_LEVEL / tests as f64 / 2.0).ln() / 2.0).sqrt();
    let mut worst_ratio: f64 = 0.0;
    if bins > 1 {
        for mode in 0..2 {
            let values: Vec<f64> = samples
                .iter()
                .map(|s| if mode == 0 { s.x1 } else { s.x2 })
                .collect();
            for b in 0..bins {
                let own = &values[b * per_bin..(b + 1) * per_bin];
                let rest: Vec<f64> = values[..b * per_bin]
                    .iter()
                    .chain(&values[(b + 1) * per_bin..])
                    .copied()
                    .collect();
                let (n, m) = (own.len() as f64, rest.len() as f64);
                let crit = c * ((n + m) / (n * m)).sqrt();
                worst_ratio = worst_ratio.max(ks_distance(own, &rest) / crit);
            }
        }
    }
    checks.push(Check::new(
        "marginals.ks_phase_independence",
        worst_ratio <= 1.0,
        format!("{worst_ratio:.3} of critical"),
        format!("<= 1 (family level {KS_LEVEL})"),
    ));

    let mut rng = stream(scan.seed, 3);
    let pairs = draw(sampler, scan.phi, VARIANCE_SAMPLES, &mut rng)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (_, var_plus) = mean_variance(pairs.iter().map(|(a, b)| (a + b) * s));
    let (_, var_minus) = mean_variance(pairs.iter().map(|(a, b)| (a - b) * s));
    let cross = pdf.eta * pdf.alpha * pdf.beta * scan.phi.cos() / 2.0;
    let base = (1.0 + pdf.eta) / 4.0;
    for (name, got, expected) in [
        ("marginals.var_x_plus", var_plus, base + cross),
        ("marginals.var_x_minus", var_minus, base - cross),
    ] {
        let rel = (got - expected).abs() / expected;
        checks.push(Check::new(
            name,
            rel <= VARIANCE_REL_TOL,
            format!("{got:.5}"),
            format!("{expected:.5} +- {}%", VARIANCE_REL_TOL * 100.0),
        ));
    }
    Ok(checks)
}

fn product_mean(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|(a, b)| a * b).sum::<f64>() / pairs.len() as f64
}

fn sweep_checks(scan: &ScanConfig, sampler: &PairSampler) -> Result<Vec<Check>> {
    let pdf = sampler.pdf();
    let amplitude = pdf.eta * pdf.alpha * pdf.beta / 2.0;
    let mut worst: f64 = 0.0;
    let mut signs_ok = true;
    for j in 0..SWEEP_POINTS {
        let chi = PI * j as f64 / (SWEEP_POINTS - 1) as f64;
        let mut rng = stream(scan.seed, 10 + j as u64);
        let pairs = draw(sampler, scan.phi + chi, SWEEP_SAMPLES, &mut rng)?;
        let got = product_mean(&pairs);
        let expected = amplitude * (scan.phi + chi).cos();
        worst = worst.max((got - expected).abs());
        if expected.abs() > SWEEP_TOL && got.signum() != expected.signum() {
            signs_ok = false;
        }
    }
    // y2 is read out with the second oscillator turned by -pi/2
    let saddle = effective_phase(scan.phi + FRAC_PI_2, 0.0, -FRAC_PI_2);
    let mut rng = stream(scan.seed, 10 + SWEEP_POINTS as u64);
    let x1y2 = product_mean(&draw(sampler, saddle, SWEEP_SAMPLES, &mut rng)?);
    let expected_x1y2 = -amplitude * (scan.phi + FRAC_PI_2).sin();
    Ok(vec![
        Check::at_most("sweep.x1x2_max_deviation", worst, SWEEP_TOL),
        Check::new(
            "sweep.sign_follows_cos",
            signs_ok,
            signs_ok.to_string(),
            "sign matches wherever |expected| > tolerance",
        ),
        Check::new(
            "sweep.x1y2_at_saddle",
            (x1y2.abs() - expected_x1y2.abs()).abs() <= SADDLE_TOL,
            format!("{x1y2:.5}"),
            format!("|{:.5}| +- {SADDLE_TOL}", expected_x1y2.abs()),
        ),
    ])
}

fn bell_pair_checks(
    scan: &ScanConfig,
    config: &ReconstructionConfig,
    rho: &DensityMatrix,
    trunc: crate::fock::FockTruncation,
) -> Result<Vec<Check>> {
    let flipped = ScanConfig {
        phi: scan.phi + PI,
        seed: scan.seed ^ 0x9e37_79b9_7f4a_7c15,
        ..scan.clone()
    };
    let samples = run_scan(&flipped)?;
    let other = ml_reconstruct(&samples, config)?.rho;
    let truth = heralded_state(
        &make_ebit(scan.alpha, scan.beta, flipped.phi, trunc)?,
        scan.eta,
    )?;
    let a = rho.element(1, 0, 0, 1).re;
    let b = other.element(1, 0, 0, 1).re;
    let expected = truth.element(1, 0, 0, 1).re.abs();
    let flips = a * b < 0.0 || expected <= ELEMENT_TOL;
    Ok(vec![
        Check::new(
            "bell_pair.coherence_sign_flip",
            flips,
            format!("{a:.4} vs {b:.4}"),
            "opposite signs",
        ),
        element_check("bell_pair.abs_re_rho_10_01_first", a.abs(), expected),
        element_check("bell_pair.abs_re_rho_10_01_second", b.abs(), expected),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorization_holds_on_a_coarse_grid() {
        assert!(factorization_residual(5) < FACTORIZATION_TOL);
    }

    #[test]
    fn table_layout() {
        let checks = vec![
            Check::at_most("a", 0.5, 1.0),
            Check::new("b", false, "x".into(), "y"),
        ];
        let mut buf = Vec::new();
        write_table(&mut buf, &checks).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "check\tresult\tvalue\tlimit");
        assert_eq!(lines[1], "a\tPASS\t5.000e-1\t<= 1e0");
        assert_eq!(lines[2], "b\tFAIL\tx\ty");
        assert!(!all_passed(&checks));
    }

    #[test]
    fn invalid_configuration_is_rejected_before_sampling() {
        let scan = ScanConfig {
            eta: 1.2,
            ..ScanConfig::default()
        };
        assert!(run_verify(&scan, &ReconstructionConfig::default()).is_err());
    }
}
