//! Pipeline configuration: a TOML file with `experiment`, `scan`,
//! `reconstruction` and `output` tables, then command-line overrides.
//! Everything is validated before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ebit_core::ebit::{arm_loss_amplitudes, phi_from_delays, ExperimentParams, PhaseDerivation};
use ebit_core::homodyne::{uniform_phase_grid, ScanConfig, DEFAULT_BINS, DEFAULT_SAMPLES};
use ebit_core::tomography::{Method, QuadratureGrid, ReconstructionConfig};

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "EBIT_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "ebit-output";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub pump_wavelength: f64,
    pub pulse_separation: f64,
    pub interferometer_delay: f64,
    pub arm_transmission: f64,
    pub efficiency: f64,
    pub idler_bandwidth: Option<f64>,
    /// Ebit phase in radians; when absent it is derived from the delays.
    pub phi: Option<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let p = ExperimentParams::default();
        Self {
            pump_wavelength: p.pump_wavelength,
            pulse_separation: p.pulse_separation,
            interferometer_delay: p.interferometer_delay,
            arm_transmission: p.arm_transmission,
            efficiency: p.efficiency,
            idler_bandwidth: p.idler_bandwidth,
            phi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub n_samples: usize,
    pub bins: usize,
    pub seed: u64,
    pub include_vacuum_bin: bool,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLES,
            bins: DEFAULT_BINS,
            seed: 1,
            include_vacuum_bin: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionSection {
    pub method: String,
    pub n_max: usize,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub grid_half_width: f64,
    pub grid_panels: usize,
    pub grid_order: usize,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        let r = ReconstructionConfig::default();
        Self {
            method: r.method.name().to_string(),
            n_max: r.n_max,
            max_iterations: r.max_iterations,
            convergence_tol: r.convergence_tol,
            grid_half_width: r.quadrature_grid.half_width,
            grid_panels: r.quadrature_grid.panels,
            grid_order: r.quadrature_grid.order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: ExperimentSection,
    pub scan: ScanSection,
    pub reconstruction: ReconstructionSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BellChoice {
    Plus,
    Minus,
}

/// Per-field overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overall detection efficiency in [0, 1].
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Ebit phase in radians (accepts `pi`, `pi/2`, `0.5pi`).
    #[arg(long, global = true, value_parser = parse_angle)]
    pub phi: Option<f64>,
    /// Total number of sample pairs.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Number of phase bins over [0, pi].
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Amplitude transmission of the long arm in [0, 1].
    #[arg(long, global = true)]
    pub arm_transmission: Option<f64>,
    /// Balanced Bell state; sets the phase to 0 (plus) or pi (minus).
    #[arg(long, global = true, value_enum)]
    pub bell: Option<BellChoice>,
    /// `max_likelihood` (`ml`) or `pattern_function` (`pattern`).
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Photon-number cutoff per mode.
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Overrides both the config file and the environment variable.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub experiment: ExperimentParams,
    pub phase: PhaseDerivation,
    /// True when the phase was given directly rather than derived from delays.
    pub phase_given: bool,
    pub alpha: f64,
    pub beta: f64,
    pub scan: ScanConfig,
    pub reconstruction: ReconstructionConfig,
    pub output_dir: PathBuf,
    /// SHA-256 of the resolved configuration, recorded in output headers.
    pub digest: String,
}

/// `pi`, `-pi/2`, `0.25pi`, `3*pi/4` or a plain number.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase().replace(' ', "");
    let (body, divisor) = match t.split_once('/') {
        Some((b, d)) => (
            b.to_string(),
            d.parse::<f64>()
                .map_err(|e| format!("`{s}`: bad divisor: {e}"))?,
        ),
        None => (t.clone(), 1.0),
    };
    let value = if let Some(coef) = body.strip_suffix("pi") {
        let coef = coef.strip_suffix('*').unwrap_or(coef);
        let c = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))?,
        };
        c * std::f64::consts::PI
    } else {
        body.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))?
    };
    let v = value / divisor;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl PipelineConfig {
    pub fn load(o: &Overrides) -> Result<Self, CliError> {
        let mut file = read_file_config(o.config.as_deref())?;
        let e = &mut file.experiment;
        if let Some(v) = o.eta {
            e.efficiency = v;
        }
        if let Some(v) = o.arm_transmission {
            e.arm_transmission = v;
        }
        if let Some(v) = o.phi {
            e.phi = Some(v);
        }
        if let Some(b) = o.bell {
            e.arm_transmission = 1.0;
            e.phi = Some(match b {
                BellChoice::Plus => 0.0,
                BellChoice::Minus => std::f64::consts::PI,
            });
        }
        let s = &mut file.scan;
        if let Some(v) = o.samples {
            s.n_samples = v;
        }
        if let Some(v) = o.bins {
            s.bins = v;
        }
        if let Some(v) = o.seed {
            s.seed = v;
        }
        let r = &mut file.reconstruction;
        if let Some(v) = &o.method {
            r.method = v.clone();
        }
        if let Some(v) = o.n_max {
            r.n_max = v;
        }
        Self::resolve(file, o.output_dir.clone())
    }

    fn resolve(file: FileConfig, output_override: Option<PathBuf>) -> Result<Self, CliError> {
        let e = &file.experiment;
        let experiment = ExperimentParams {
            pump_wavelength: e.pump_wavelength,
            pulse_separation: e.pulse_separation,
            interferometer_delay: e.interferometer_delay,
            arm_transmission: e.arm_transmission,
            efficiency: e.efficiency,
            idler_bandwidth: e.idler_bandwidth,
        };
        experiment.validate()?;
        let mut phase = phi_from_delays(&experiment)?;
        let phase_given = e.phi.is_some();
        if let Some(phi) = e.phi {
            if !phi.is_finite() {
                return Err(CliError::Config("experiment.phi must be finite".into()));
            }
            phase.phi = phi;
        }
        let (alpha, beta) = arm_loss_amplitudes(e.arm_transmission)?;

        let s = &file.scan;
        if s.bins == 0 {
            return Err(CliError::Config("scan.bins must be positive".into()));
        }
        let scan = ScanConfig {
            n_samples: s.n_samples,
            phase_grid: uniform_phase_grid(s.bins),
            phi: phase.phi,
            eta: experiment.efficiency,
            alpha,
            beta,
            seed: s.seed,
            include_vacuum_bin: s.include_vacuum_bin,
        };
        scan.validate()?;

        let r = &file.reconstruction;
        let reconstruction = ReconstructionConfig {
            n_max: r.n_max,
            method: r.method.parse::<Method>()?,
            max_iterations: r.max_iterations,
            convergence_tol: r.convergence_tol,
            quadrature_grid: QuadratureGrid {
                half_width: r.grid_half_width,
                panels: r.grid_panels,
                order: r.grid_order,
            },
        };
        reconstruction.validate()?;

        let output_dir = output_override
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .or_else(|| file.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

        // The output directory is not part of the digest so that moving
        // outputs around does not change their content.
        let mut hashed = file.clone();
        hashed.output.dir = None;
        let canonical = toml::to_string(&hashed).map_err(|e| CliError::Config(e.to_string()))?;
        let digest = sha256_hex(canonical.as_bytes());

        Ok(Self {
            experiment,
            phase,
            phase_given,
            alpha,
            beta,
            scan,
            reconstruction,
            output_dir,
            digest,
        })
    }

    pub fn ensure_output_dir(&self) -> Result<&Path, CliError> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| CliError::io(&self.output_dir, e))?;
        Ok(&self.output_dir)
    }
}
