//! Synthetic balanced-homodyne data for the heralded ebit.
//!
//! Both time-bins are measured with a fixed pair of local-oscillator pulses
//! while the ebit phase is scanned. The joint quadrature distribution depends
//! only on the effective phase `chi = phi + theta_1 - theta_2`, where `phi` is
//! the ebit phase and `theta_j` the LO phases in the `x cos(theta) - y sin(theta)`
//! convention, so scanning `phi` at fixed LOs and scanning the LO phase
//! difference at fixed `phi` produce the same data.
//!
//! Records store the scanned setting in `chi_rad`; the sampler draws from the
//! distribution at `config.phi + chi_rad`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;

use crate::ebit::check_unit_interval;
use crate::error::{Error, Result};

/// Standard deviation of a vacuum quadrature.
pub const VACUUM_SD: f64 = 0.5;
pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_BINS: usize = 100;
/// Proposals allowed per event in the rejection branch.
pub const REJECTION_CAP: usize = 10_000;
pub const GENERATOR_NAME: &str = "ChaCha20(seed_from_u64(seed),stream=bin)";

/// Effective phase seen by the detectors for ebit phase `phi` and LO phases
/// `theta1`, `theta2`.
pub fn effective_phase(phi: f64, theta1: f64, theta2: f64) -> f64 {
    phi + theta1 - theta2
}

fn vacuum_density(x: f64) -> f64 {
    (2.0 / PI).sqrt() * (-2.0 * x * x).exp()
}

/// Joint density of `(X1, X2)` for the heralded ebit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPdf {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl JointPdf {
    pub fn new(eta: f64, alpha: f64, beta: f64) -> Result<Self> {
        check_unit_interval("eta", eta)?;
        let norm = alpha * alpha + beta * beta;
        if alpha < 0.0 || beta < 0.0 || (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(
                "alpha/beta",
                format!("alpha^2 + beta^2 = {norm}"),
            ));
        }
        Ok(Self { eta, alpha, beta })
    }

    pub fn balanced(eta: f64) -> Result<Self> {
        Self::new(eta, FRAC_1_SQRT_2, FRAC_1_SQRT_2)
    }

    /// `x^T M x` for the single-photon component.
    fn photon_form(&self, x1: f64, x2: f64, chi: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        4.0 * a * a * x1 * x1 + 4.0 * b * b * x2 * x2 + 8.0 * a * b * x1 * x2 * chi.cos()
    }

    pub fn density(&self, x1: f64, x2: f64, chi: f64) -> f64 {
        let vac = vacuum_density(x1) * vacuum_density(x2);
        vac * ((1.0 - self.eta) + self.eta * self.photon_form(x1, x2, chi))
    }

    /// Marginal of `X1`; independent of `chi`.
    pub fn marginal_x1(&self, x1: f64) -> f64 {
        let photon_weight = self.eta * self.alpha * self.alpha;
        vacuum_density(x1) * ((1.0 - photon_weight) + photon_weight * 4.0 * x1 * x1)
    }
}

/// Joint quadrature density for the balanced-or-not ebit at effective phase `chi`.
pub fn joint_pdf(x1: f64, x2: f64, chi: f64, eta: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(JointPdf::new(eta, alpha, beta)?.density(x1, x2, chi))
}

/// Exact sampler for [`JointPdf`].
#[derive(Debug, Clone)]
pub struct PairSampler {
    pdf: JointPdf,
    vacuum: Normal<f64>,
    /// `g = u^2` of a single-photon quadrature `u`: Gamma(shape 3/2, rate 2).
    photon_sq: Gamma<f64>,
    /// Rejection envelope, independent N(0, 1/2) per quadrature.
    envelope: Normal<f64>,
}

impl PairSampler {
    pub fn new(pdf: JointPdf) -> Self {
        Self {
            pdf,
            vacuum: Normal::new(0.0, VACUUM_SD).expect("valid normal"),
            photon_sq: Gamma::new(1.5, 0.5).expect("valid gamma"),
            envelope: Normal::new(0.0, FRAC_1_SQRT_2).expect("valid normal"),
        }
    }

    pub fn pdf(&self) -> JointPdf {
        self.pdf
    }

    pub fn is_balanced(&self) -> bool {
        (self.pdf.alpha - self.pdf.beta).abs() < 1e-12
    }

    fn photon_quadrature<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = self.photon_sq.sample(rng).sqrt();
        if rng.random::<bool>() {
            u
        } else {
            -u
        }
    }

    /// One `(x1, x2)` pair at effective phase `chi`.
    pub fn sample<R: Rng + ?Sized>(&self, chi: f64, rng: &mut R) -> Result<(f64, f64)> {
        if rng.random::<f64>() >= self.pdf.eta {
            return Ok((self.vacuum.sample(rng), self.vacuum.sample(rng)));
        }
        if self.is_balanced() {
            Ok(self.sample_balanced_photon(chi, rng))
        } else {
            self.sample_photon_by_rejection(chi, rng)
        }
    }

    /// In `u = (x1 + x2)/sqrt 2`, `v = (x1 - x2)/sqrt 2` the photon density is
    /// `(1 + cos chi)/2 |psi_1(u)|^2 |psi_0(v)|^2 + (1 - cos chi)/2 (u <-> v)`.
    fn sample_balanced_photon<R: Rng + ?Sized>(&self, chi: f64, rng: &mut R) -> (f64, f64) {
        let photon = self.photon_quadrature(rng);
        let vac = self.vacuum.sample(rng);
        let (u, v) = if rng.random::<f64>() < 0.5 * (1.0 + chi.cos()) {
            (photon, vac)
        } else {
            (vac, photon)
        };
        ((u + v) * FRAC_1_SQRT_2, (u - v) * FRAC_1_SQRT_2)
    }

    /// Photon density `(2/pi) e^{-2r^2} Q(x)` with `Q <= 4 r^2`, against the
    /// envelope `(1/pi) e^{-r^2}`; the ratio is bounded by `8/e`.
    fn sample_photon_by_rejection<R: Rng + ?Sized>(
        &self,
        chi: f64,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        for _ in 0..REJECTION_CAP {
            let x1 = self.envelope.sample(rng);
            let x2 = self.envelope.sample(rng);
            let r2 = x1 * x1 + x2 * x2;
            let accept =
                std::f64::consts::E / 4.0 * (-r2).exp() * self.pdf.photon_form(x1, x2, chi);
            if rng.random::<f64>() < accept {
                return Ok((x1, x2));
            }
        }
        Err(Error::RejectionCap(REJECTION_CAP))
    }
}

/// One heralded event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSample {
    /// Scanned relative phase setting, in `[0, pi]`.
    pub chi: f64,
    /// Quadrature of time-bin n.
    pub x1: f64,
    /// Quadrature of time-bin n+1.
    pub x2: f64,
    /// Quadrature of the vacuum calibration bin (NaN when not recorded).
    pub x_vac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub n_samples: usize,
    /// Scanned phase settings in `[0, pi]`; events are split equally among them.
    pub phase_grid: Vec<f64>,
    /// Ebit phase; the sampler uses `phi + chi` for each setting `chi`.
    pub phi: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub include_vacuum_bin: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLES,
            phase_grid: uniform_phase_grid(DEFAULT_BINS),
            phi: 0.0,
            eta: crate::ebit::DEFAULT_EFFICIENCY,
            alpha: FRAC_1_SQRT_2,
            beta: FRAC_1_SQRT_2,
            seed: 1,
            include_vacuum_bin: true,
        }
    }
}

/// `bins` equally spaced phases covering `[0, pi]` inclusive.
pub fn uniform_phase_grid(bins: usize) -> Vec<f64> {
    match bins {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..bins)
            .map(|i| i as f64 / (bins - 1) as f64 * PI)
            .collect(),
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phase_grid.is_empty() {
            return Err(Error::invalid("scan.bins", "phase grid is empty"));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("scan.n_samples", "must be positive"));
        }
        if !self.n_samples.is_multiple_of(self.phase_grid.len()) {
            return Err(Error::invalid(
                "scan.n_samples",
                format!(
                    "{} is not divisible by the {} phase settings",
                    self.n_samples,
                    self.phase_grid.len()
                ),
            ));
        }
        if let Some(bad) = self.phase_grid.iter().find(|c| !(0.0..=PI).contains(*c)) {
            return Err(Error::invalid(
                "scan.phase_grid",
                format!("{bad} is outside [0, pi]"),
            ));
        }
        if !self.phi.is_finite() {
            return Err(Error::invalid("scan.phi", "must be finite"));
        }
        JointPdf::new(self.eta, self.alpha, self.beta)?;
        Ok(())
    }

    pub fn per_bin(&self) -> usize {
        self.n_samples / self.phase_grid.len()
    }

    pub fn metadata(&self) -> SampleMeta {
        SampleMeta {
            seed: Some(self.seed),
            eta: Some(self.eta),
            alpha: Some(self.alpha),
            beta: Some(self.beta),
            phi: Some(self.phi),
            n_samples: Some(self.n_samples),
            bins: Some(self.phase_grid.len()),
            generator: Some(GENERATOR_NAME.to_string()),
        }
    }
}

/// Random stream of one phase bin.
pub fn bin_rng(seed: u64, bin: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(bin as u64);
    rng
}

/// Draws every event of the scan. Bins are generated independently from their
/// own streams, so the output does not depend on thread scheduling; records are
/// ordered by bin, then by draw.
pub fn run_scan(config: &ScanConfig) -> Result<Vec<QuadratureSample>> {
    config.validate()?;
    let sampler = PairSampler::new(JointPdf::new(config.eta, config.alpha, config.beta)?);
    let per_bin = config.per_bin();
    let bins: Vec<Vec<QuadratureSample>> = config
        .phase_grid
        .par_iter()
        .enumerate()
        .map(|(bin, &chi)| {
            let mut rng = bin_rng(config.seed, bin);
            let effective = config.phi + chi;
            (0..per_bin)
                .map(|_| {
                    let (x1, x2) = sampler.sample(effective, &mut rng)?;
                    let x_vac = if config.include_vacuum_bin {
                        sampler.vacuum.sample(&mut rng)
                    } else {
                        f64::NAN
                    };
                    Ok(QuadratureSample { chi, x1, x2, x_vac })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(bins.into_iter().flatten().collect())
}

/// Header metadata of a sample file. Fields are optional when reading files
/// written elsewhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleMeta {
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub phi: Option<f64>,
    pub n_samples: Option<usize>,
    pub bins: Option<usize>,
    pub generator: Option<String>,
}

impl SampleMeta {
    fn to_comment(&self) -> String {
        let mut parts = Vec::new();
        macro_rules! push {
            ($name:literal, $field:expr) => {
                if let Some(v) = &$field {
                    parts.push(format!(concat!($name, "={}"), v));
                }
            };
        }
        push!("seed", self.seed);
        push!("eta", self.eta);
        push!("alpha", self.alpha);
        push!("beta", self.beta);
        push!("phi", self.phi);
        push!("n_samples", self.n_samples);
        push!("bins", self.bins);
        push!("generator", self.generator);
        format!("# {}", parts.join(" "))
    }

    fn absorb(&mut self, line_no: usize, comment: &str) -> Result<()> {
        for token in comment.split_whitespace() {
            let Some((key, value)) = token.split_once('=') else {
                continue;
            };
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|e| Error::parse(line_no, format!("`{key}`: {e}")))
            };
            let int = || {
                value
                    .parse::<u64>()
                    .map_err(|e| Error::parse(line_no, format!("`{key}`: {e}")))
            };
            match key {
                "seed" => self.seed = Some(int()?),
                "eta" => self.eta = Some(float()?),
                "alpha" => self.alpha = Some(float()?),
                "beta" => self.beta = Some(float()?),
                "phi" => self.phi = Some(float()?),
                "n_samples" => self.n_samples = Some(int()? as usize),
                "bins" => self.bins = Some(int()? as usize),
                "generator" => self.generator = Some(value.to_string()),
                _ => {}
            }
        }
        Ok(())
    }
}

pub const SAMPLE_HEADER: &str = "chi_rad,x1,x2,x_vac";

/// Writes the sample CSV. `extra_comments` become additional `#` lines after
/// the metadata line.
pub fn write_samples<W: Write>(
    mut out: W,
    meta: &SampleMeta,
    extra_comments: &[String],
    samples: &[QuadratureSample],
) -> std::io::Result<()> {
    writeln!(out, "{}", meta.to_comment())?;
    for c in extra_comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{SAMPLE_HEADER}")?;
    for s in samples {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            s.chi, s.x1, s.x2, s.x_vac
        )?;
    }
    Ok(())
}

/// Reads a sample CSV, reporting the first malformed line by number.
pub fn read_samples<R: BufRead>(input: R) -> Result<(SampleMeta, Vec<QuadratureSample>)> {
    let mut meta = SampleMeta::default();
    let mut samples = Vec::new();
    let mut seen_header = false;
    let mut last_line = 0;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            meta.absorb(line_no, comment)?;
            continue;
        }
        if !seen_header {
            if line != SAMPLE_HEADER {
                return Err(Error::parse(
                    line_no,
                    format!("expected header `{SAMPLE_HEADER}`, found `{line}`"),
                ));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let mut values = [0.0f64; 4];
        for (v, f) in values.iter_mut().zip(&fields) {
            *v = f
                .trim()
                .parse()
                .map_err(|e| Error::parse(line_no, format!("`{f}`: {e}")))?;
        }
        let [chi, x1, x2, x_vac] = values;
        if !(chi.is_finite() && x1.is_finite() && x2.is_finite()) {
            return Err(Error::parse(line_no, "non-finite quadrature"));
        }
        samples.push(QuadratureSample { chi, x1, x2, x_vac });
    }
    if !seen_header {
        return Err(Error::parse(last_line.max(1), "missing column header"));
    }
    if let Some(expected) = meta.n_samples {
        if expected != samples.len() {
            return Err(Error::parse(
                last_line,
                format!(
                    "file declares {expected} records but contains {}",
                    samples.len()
                ),
            ));
        }
    }
    Ok((meta, samples))
}

/// Sample variance of the calibration-bin quadrature, ignoring unrecorded entries.
pub fn vacuum_calibration_variance(samples: &[QuadratureSample]) -> Option<f64> {
    let vals: Vec<f64> = samples
        .iter()
        .map(|s| s.x_vac)
        .filter(|v| v.is_finite())
        .collect();
    if vals.len() < 2 {
        return None;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    Some(vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}
