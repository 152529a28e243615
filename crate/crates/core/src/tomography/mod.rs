//! Density-matrix reconstruction from two-mode homodyne data.
//!
//! Only the relative phase of the two local oscillators is scanned, so
//! coherences between different total photon numbers `N = k + l` are not
//! observable. Both estimators work on the photon-number block-diagonal part
//! of the state, i.e. they reconstruct `global_phase_average(rho)`.

pub mod ml;
pub mod pattern;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockTruncation, DEFAULT_N_MAX};
use crate::homodyne::QuadratureSample;
use crate::special::gauss_legendre;

pub use ml::{ml_reconstruct, MlResult};
pub use pattern::{pattern_reconstruct, PatternKernels, PatternResult};
pub use report::{reconstruction_report, ReconstructionReport};

pub const DEFAULT_MAX_ITERATIONS: usize = 2000;
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-6;
pub const MIN_SAMPLES: usize = 1000;
/// Samples per work item of the parallel reductions.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    MaxLikelihood,
    PatternFunction,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MaxLikelihood => "max_likelihood",
            Method::PatternFunction => "pattern_function",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml" | "max_likelihood" => Ok(Method::MaxLikelihood),
            "pattern" | "pattern_function" => Ok(Method::PatternFunction),
            other => Err(Error::invalid(
                "reconstruction.method",
                format!("unknown method `{other}` (expected max_likelihood or pattern_function)"),
            )),
        }
    }
}

/// Composite Gauss-Legendre rule on `[-half_width, half_width]` in quadrature
/// units. Used for the kernel self-test and the POVM normalization check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    pub half_width: f64,
    pub panels: usize,
    pub order: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            half_width: 7.0,
            panels: 56,
            order: 16,
        }
    }
}

impl QuadratureGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::invalid(
                "reconstruction.grid_half_width",
                "must be positive",
            ));
        }
        if self.panels == 0 || self.order == 0 {
            return Err(Error::invalid(
                "reconstruction.grid_panels",
                "panels and order must be positive",
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let h = 2.0 * self.half_width / self.panels as f64;
        let mut xs = Vec::with_capacity(self.panels * self.order);
        let mut ws = Vec::with_capacity(self.panels * self.order);
        for p in 0..self.panels {
            let a = -self.half_width + h * p as f64;
            let (x, w) = gauss_legendre(self.order, a, a + h);
            xs.extend(x);
            ws.extend(w);
        }
        (xs, ws)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub n_max: usize,
    pub method: Method,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub quadrature_grid: QuadratureGrid,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            method: Method::MaxLikelihood,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
            quadrature_grid: QuadratureGrid::default(),
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        FockTruncation::new(self.n_max)
            .map_err(|_| Error::invalid("reconstruction.n_max", "must be at least 1"))?;
        if !(self.convergence_tol > 0.0) {
            return Err(Error::invalid(
                "reconstruction.convergence_tol",
                "must be positive",
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid(
                "reconstruction.max_iterations",
                "must be positive",
            ));
        }
        self.quadrature_grid.validate()
    }

    pub fn truncation(&self) -> Result<FockTruncation> {
        self.validate()?;
        FockTruncation::new(self.n_max)
    }
}

/// Outcome of either estimator.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rho: DensityMatrix,
    pub method: Method,
    /// ML only.
    pub iterations: Option<usize>,
    pub log_likelihood: Option<f64>,
    pub converged: bool,
    /// Pattern functions only: worst orthogonality residual.
    pub kernel_self_test: Option<f64>,
}

pub fn reconstruct(
    samples: &[QuadratureSample],
    config: &ReconstructionConfig,
) -> Result<Reconstruction> {
    match config.method {
        Method::MaxLikelihood => {
            let r = ml_reconstruct(samples, config)?;
            Ok(Reconstruction {
                rho: r.rho,
                method: Method::MaxLikelihood,
                iterations: Some(r.iterations),
                log_likelihood: Some(r.log_likelihood),
                converged: r.converged,
                kernel_self_test: None,
            })
        }
        Method::PatternFunction => {
            let r = pattern_reconstruct(samples, config)?;
            Ok(Reconstruction {
                rho: r.rho,
                method: Method::PatternFunction,
                iterations: None,
                log_likelihood: None,
                converged: true,
                kernel_self_test: Some(r.self_test_error),
            })
        }
    }
}

pub(crate) fn check_samples(samples: &[QuadratureSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.len() < MIN_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("{} records, at least {MIN_SAMPLES} needed", samples.len()),
        ));
    }
    if let Some(s) = samples
        .iter()
        .find(|s| !(s.chi.is_finite() && s.x1.is_finite() && s.x2.is_finite()))
    {
        return Err(Error::invalid(
            "samples",
            format!("non-finite record {s:?}"),
        ));
    }
    Ok(())
}

/// Samples sharing one phase setting.
#[derive(Debug, Clone)]
pub(crate) struct PhaseGroup {
    pub chi: f64,
    pub pairs: Vec<(f64, f64)>,
}

/// Groups by exact phase value, ordered by phase; within a group the input
/// order is kept.
pub(crate) fn group_by_phase(samples: &[QuadratureSample]) -> Vec<PhaseGroup> {
    let mut map: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for s in samples {
        // +0.0 so that -0.0 and 0.0 share a group
        map.entry((s.chi + 0.0).to_bits())
            .or_default()
            .push((s.x1, s.x2));
    }
    let mut groups: Vec<PhaseGroup> = map
        .into_iter()
        .map(|(bits, pairs)| PhaseGroup {
            chi: f64::from_bits(bits),
            pairs,
        })
        .collect();
    groups.sort_by(|a, b| a.chi.total_cmp(&b.chi));
    groups
}

/// Work items `(group, start, end)` of at most [`CHUNK`] samples each.
pub(crate) fn chunks(groups: &[PhaseGroup]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        let mut start = 0;
        while start < group.pairs.len() {
            let end = (start + CHUNK).min(group.pairs.len());
            out.push((g, start, end));
            start = end;
        }
    }
    out
}

/// Basis states grouped by total photon number.
#[derive(Debug, Clone)]
pub(crate) struct BlockLayout {
    pub trunc: FockTruncation,
    /// `(k, l)` of every member, blocks concatenated in order of `N`.
    pub members: Vec<(usize, usize)>,
    /// Start and size of each block within `members`.
    pub blocks: Vec<(usize, usize)>,
    /// Start of each block's dense `size x size` storage in a packed buffer.
    pub offsets: Vec<usize>,
    pub packed_len: usize,
}

impl BlockLayout {
    pub fn new(trunc: FockTruncation) -> Self {
        let mut members = Vec::new();
        let mut blocks = Vec::new();
        let mut offsets = Vec::new();
        let mut packed_len = 0;
        for block in trunc.photon_number_blocks() {
            blocks.push((members.len(), block.len()));
            offsets.push(packed_len);
            packed_len += block.len() * block.len();
            members.extend(block.into_iter().map(|i| trunc.pair(i)));
        }
        Self {
            trunc,
            members,
            blocks,
            offsets,
            packed_len,
        }
    }

    /// Flat density-matrix indices of packed entry `(a, b)` of block `blk`.
    pub fn flat(&self, blk: usize, a: usize, b: usize) -> (usize, usize) {
        let start = self.blocks[blk].0;
        let (k, l) = self.members[start + a];
        let (m, n) = self.members[start + b];
        (self.trunc.index(k, l), self.trunc.index(m, n))
    }
}
