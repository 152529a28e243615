//! `ebit`: prepare, measure and reconstruct time-bin single-photon ebits.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! failure (non-convergence, failed self-test or failed verification),
//! 3 I/O error.

mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use ebit_core::ebit::{heralded_state, make_ebit};
use ebit_core::fock::{DensityMatrix, FockTruncation, TwoModeKet};
use ebit_core::homodyne::{read_samples, run_scan, vacuum_calibration_variance, write_samples};
use ebit_core::tomography::{reconstruct, reconstruction_report, Method};
use ebit_core::verify::{all_passed, run_verify, write_table};
use ebit_core::wigner::{
    contour_segments, export_section, AnalyticEbit, Axis, Section, WignerGrid, WignerSource,
    DEFAULT_CONTOUR_LEVELS,
};

use config::{parse_angle, sha256_file, Overrides, PipelineConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ebit_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    NotConverged(String),
    #[error("{0} verification check(s) failed")]
    VerifyFailed(usize),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        use ebit_core::Error as E;
        match self {
            CliError::Core(E::RejectionCap(_) | E::KernelSelfTest(_)) => 2,
            CliError::Core(E::Io(_)) | CliError::Io { .. } => 3,
            CliError::Core(_) | CliError::Config(_) => 1,
            CliError::NotConverged(_) | CliError::VerifyFailed(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ebit",
    version,
    about = "Simulate and reconstruct time-bin single-photon ebits"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the ground-truth ket and density matrix.
    State,
    /// Draw homodyne samples over the phase scan.
    Simulate,
    /// Reconstruct the density matrix from a sample file.
    Reconstruct {
        /// Sample CSV written by `simulate`.
        #[arg(value_name = "SAMPLES")]
        input: PathBuf,
    },
    /// Export 2-D sections of the Wigner function.
    Wigner(WignerArgs),
    /// Run the self-check suite and print a pass/fail table.
    Verify,
}

#[derive(Debug, clap::Args)]
struct WignerArgs {
    /// Density-matrix file; the analytic ebit of the configuration is used when absent.
    #[arg(long)]
    density: Option<PathBuf>,
    /// x1y1, x1x2, x1y2, xplus_yplus or xminus_yminus.
    #[arg(long, default_value = "x1y1")]
    section: String,
    /// The two quadratures held fixed, `a,b`.
    #[arg(long, allow_hyphen_values = true)]
    fixed: Option<String>,
    /// Axis range `min:max` shared by both axes.
    #[arg(long, default_value = "-3:3", allow_hyphen_values = true)]
    range: String,
    #[arg(long, default_value_t = 121)]
    points: usize,
    /// Phase sweep `start:stop:count` of the analytic state, e.g. `0:pi:25`.
    #[arg(long)]
    sweep_phi: Option<String>,
    /// With --density: also evaluate the analytic ebit and report the largest difference.
    #[arg(long)]
    compare: bool,
    /// Also write iso-contour segments at the default levels.
    #[arg(long)]
    contours: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let mut out = create(path)?;
    f(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn truth(
    cfg: &PipelineConfig,
    trunc: FockTruncation,
) -> Result<(TwoModeKet, DensityMatrix), CliError> {
    let ket = make_ebit(cfg.alpha, cfg.beta, cfg.phase.phi, trunc)?;
    let rho = heralded_state(&ket, cfg.experiment.efficiency)?;
    Ok((ket, rho))
}

fn cmd_state(cfg: &PipelineConfig) -> Result<(), CliError> {
    if cfg.phase_given {
        println!("phi = {} rad (given)", cfg.phase.phi);
    } else {
        println!(
            "phi = {} rad from delays ({} pump cycles)",
            cfg.phase.phi, cfg.phase.cycles
        );
    }
    for w in &cfg.phase.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "alpha = {}, beta = {}, eta = {}",
        cfg.alpha, cfg.beta, cfg.experiment.efficiency
    );

    let trunc = cfg.reconstruction.truncation()?;
    let (ket, rho) = truth(cfg, trunc)?;
    let dir = cfg.ensure_output_dir()?;
    let comments = vec![
        format!("config_sha256={}", cfg.digest),
        format!(
            "alpha={} beta={} phi={} eta={}",
            cfg.alpha, cfg.beta, cfg.phase.phi, cfg.experiment.efficiency
        ),
    ];

    let ket_path = dir.join("state_ket.txt");
    write_with(&ket_path, |out| {
        writeln!(out, "n_max={} layout=ket", trunc.n_max())?;
        for c in &comments {
            writeln!(out, "# {c}")?;
        }
        for i in 0..trunc.dim() {
            let (k, l) = trunc.pair(i);
            let a = ket.amplitudes()[i];
            writeln!(out, "{k},{l},{:.16e},{:.16e}", a.re, a.im)?;
        }
        Ok(())
    })?;
    let rho_path = dir.join("state_density.txt");
    write_with(&rho_path, |out| rho.write_text(out, &comments))?;
    println!("wrote {}", ket_path.display());
    println!("wrote {}", rho_path.display());
    Ok(())
}

fn cmd_simulate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let samples = run_scan(&cfg.scan)?;
    let dir = cfg.ensure_output_dir()?;
    let path = dir.join("samples.csv");
    let extra = vec![format!("config_sha256={}", cfg.digest)];
    write_with(&path, |out| {
        write_samples(out, &cfg.scan.metadata(), &extra, &samples)
    })?;
    println!(
        "wrote {} ({} records, {} per phase setting)",
        path.display(),
        samples.len(),
        cfg.scan.per_bin()
    );
    Ok(())
}

fn cmd_reconstruct(cfg: &PipelineConfig, samples_path: &Path) -> Result<(), CliError> {
    let samples_sha = sha256_file(samples_path)?;
    let (meta, samples) = read_samples(open(samples_path)?)?;
    let result = reconstruct(&samples, &cfg.reconstruction)?;
    let trunc = result.rho.truncation();

    // The file header describes the state that produced the data; the
    // configuration fills in whatever it leaves out.
    let eta = meta.eta.unwrap_or(cfg.experiment.efficiency);
    let alpha = meta.alpha.unwrap_or(cfg.alpha);
    let beta = meta.beta.unwrap_or(cfg.beta);
    let phi = meta.phi.unwrap_or(cfg.phase.phi);
    let truth = heralded_state(&make_ebit(alpha, beta, phi, trunc)?, eta)?;
    let report = reconstruction_report(&result.rho, &truth)?;

    let method = result.method;
    let mut lines: Vec<(String, String)> = vec![
        ("method".into(), method.to_string()),
        ("n_max".into(), trunc.n_max().to_string()),
        ("n_samples".into(), samples.len().to_string()),
    ];
    lines.extend(
        report
            .key_values()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v)),
    );
    if let Some(it) = result.iterations {
        lines.push(("iterations".into(), it.to_string()));
    }
    if let Some(ll) = result.log_likelihood {
        lines.push(("log_likelihood".into(), format!("{ll:.10}")));
    }
    lines.push(("converged".into(), result.converged.to_string()));
    if let Some(k) = result.kernel_self_test {
        lines.push(("kernel_orthogonality_residual".into(), format!("{k:.3e}")));
    }
    let vac =
        vacuum_calibration_variance(&samples).map_or("nan".to_string(), |v| format!("{v:.6}"));
    lines.push(("vacuum_variance".into(), vac));
    lines.push(("truth_eta".into(), eta.to_string()));
    lines.push(("truth_alpha".into(), alpha.to_string()));
    lines.push(("truth_beta".into(), beta.to_string()));
    lines.push(("truth_phi".into(), phi.to_string()));
    lines.push(("samples_sha256".into(), samples_sha.clone()));
    lines.push(("config_sha256".into(), cfg.digest.clone()));

    let dir = cfg.ensure_output_dir()?;
    let suffix = match method {
        Method::MaxLikelihood => "ml",
        Method::PatternFunction => "pattern",
    };
    let rho_path = dir.join(format!("density_{suffix}.txt"));
    let comments = vec![
        format!("method={method}"),
        format!("samples_sha256={samples_sha}"),
        format!("config_sha256={}", cfg.digest),
    ];
    write_with(&rho_path, |out| result.rho.write_text(out, &comments))?;
    let report_path = dir.join(format!("report_{suffix}.txt"));
    write_with(&report_path, |out| {
        for (k, v) in &lines {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    })?;
    for (k, v) in &lines {
        println!("{k}={v}");
    }
    if let Some(k) = result.kernel_self_test {
        eprintln!("pattern-function self-test passed (orthogonality residual {k:.3e})");
    }
    println!("wrote {}", rho_path.display());
    println!("wrote {}", report_path.display());
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "maximum likelihood did not converge within {} iterations; best iterate written",
            cfg.reconstruction.max_iterations
        )));
    }
    Ok(())
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), CliError> {
    let (a, b) = s
        .split_once([',', ':'])
        .ok_or_else(|| CliError::Config(format!("{what}: expected two values, got `{s}`")))?;
    let a = parse_angle(a).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
    let b = parse_angle(b).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
    Ok((a, b))
}

fn parse_sweep(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Config(format!("--sweep-phi: expected start:stop:count, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start = parse_angle(parts[0]).map_err(|_| bad())?;
    let stop = parse_angle(parts[1]).map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    Ok(match count {
        0 => return Err(bad()),
        1 => vec![start],
        n => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    })
}

fn write_grid(
    path: &Path,
    grid: &WignerGrid,
    provenance: &str,
    contours: bool,
) -> Result<(), CliError> {
    write_with(path, |out| grid.write_csv(out, Some(provenance)))?;
    println!("wrote {}", path.display());
    if contours {
        let stem = path.with_extension("");
        let cpath = PathBuf::from(format!("{}_contours.csv", stem.display()));
        write_with(&cpath, |out| {
            writeln!(out, "# section={} phi={}", grid.section, grid.phi)?;
            writeln!(out, "level,a0,b0,a1,b1")?;
            for level in DEFAULT_CONTOUR_LEVELS {
                for ((a0, b0), (a1, b1)) in contour_segments(grid, level) {
                    writeln!(out, "{level},{a0},{b0},{a1},{b1}")?;
                }
            }
            Ok(())
        })?;
        println!("wrote {}", cpath.display());
    }
    Ok(())
}

fn cmd_wigner(cfg: &PipelineConfig, args: &WignerArgs) -> Result<(), CliError> {
    let section: Section = args.section.parse()?;
    let fixed = match &args.fixed {
        Some(s) => parse_pair(s, "--fixed")?,
        None => section.default_fixed(),
    };
    let (lo, hi) = parse_pair(&args.range, "--range")?;
    let axis = Axis::new(lo, hi, args.points)?;
    let model = AnalyticEbit {
        alpha: cfg.alpha,
        beta: cfg.beta,
        phi: cfg.phase.phi,
        eta: cfg.experiment.efficiency,
    };
    if args.compare && args.density.is_none() {
        return Err(CliError::Config("--compare needs --density".into()));
    }
    let dir = cfg.ensure_output_dir()?.to_path_buf();
    let base = format!("config_sha256={}", cfg.digest);

    if let Some(sweep) = &args.sweep_phi {
        if args.density.is_some() {
            return Err(CliError::Config(
                "--sweep-phi varies the analytic state and cannot be combined with --density"
                    .into(),
            ));
        }
        for (k, phi) in parse_sweep(sweep)?.into_iter().enumerate() {
            let m = AnalyticEbit { phi, ..model };
            let grid = export_section(WignerSource::Analytic(m), section, axis, axis, fixed, phi)?;
            let path = dir.join(format!("wigner_{section}_sweep{k:03}.csv"));
            write_grid(&path, &grid, &base, args.contours)?;
        }
        return Ok(());
    }

    match &args.density {
        Some(path) => {
            let sha = sha256_file(path)?;
            let rho = DensityMatrix::read_text(open(path)?)?;
            let grid = export_section(
                WignerSource::Density(&rho),
                section,
                axis,
                axis,
                fixed,
                model.phi,
            )?;
            let provenance = format!("{base} density_sha256={sha}");
            write_grid(
                &dir.join(format!("wigner_{section}_density.csv")),
                &grid,
                &provenance,
                args.contours,
            )?;
            if args.compare {
                let analytic = export_section(
                    WignerSource::Analytic(model),
                    section,
                    axis,
                    axis,
                    fixed,
                    model.phi,
                )?;
                let diff = grid.max_abs_difference(&analytic)?;
                write_grid(
                    &dir.join(format!("wigner_{section}_analytic.csv")),
                    &analytic,
                    &base,
                    args.contours,
                )?;
                println!("max_abs_difference={diff:.6e}");
            }
        }
        None => {
            let grid = export_section(
                WignerSource::Analytic(model),
                section,
                axis,
                axis,
                fixed,
                model.phi,
            )?;
            write_grid(
                &dir.join(format!("wigner_{section}_analytic.csv")),
                &grid,
                &base,
                args.contours,
            )?;
        }
    }
    Ok(())
}

fn cmd_verify(cfg: &PipelineConfig) -> Result<(), CliError> {
    let checks = run_verify(&cfg.scan, &cfg.reconstruction)?;
    write_table(io::stdout().lock(), &checks)
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    let dir = cfg.ensure_output_dir()?;
    let path = dir.join("verify.tsv");
    write_with(&path, |out| {
        writeln!(out, "# config_sha256={}", cfg.digest)?;
        write_table(out, &checks)
    })?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if all_passed(&checks) {
        println!("all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failed))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&cli.overrides)?;
    match &cli.command {
        Command::State => cmd_state(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Reconstruct { input } => cmd_reconstruct(&cfg, input),
        Command::Wigner(args) => cmd_wigner(&cfg, args),
        Command::Verify => cmd_verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
