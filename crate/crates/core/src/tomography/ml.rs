//! Iterative maximum-likelihood reconstruction.
//!
//! For a sample `(x1, x2)` taken at relative LO phase `s` the POVM element,
//! averaged over the unobserved common phase, is `sum_N w_N w_N^dagger` with
//! `(w_N)_{kl} = psi_k(x1) psi_l(x2) e^{i l s}` for `k + l = N`. Within one
//! phase setting `w = U_s u` with `u` real, so the per-sample work is done in
//! real arithmetic on `Re(U_s^dagger rho U_s)` and rotated back once per chunk.
//!
//! The update is `rho <- R^g rho R^g / Tr`, `R = (1/n) sum_i Pi_i / p_i`. The
//! exponent `g` starts at 1 and grows after every accepted step; a step that
//! lowers the likelihood is retried with `g = 1` and then with the diluted
//! operator `(I + eps R)/(1 + eps)` for halving `eps`, so the accepted sequence
//! of log-likelihoods never decreases. Iteration stops once a plain
//! `R rho R` step would move the state by less than the tolerance in trace
//! distance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{check_samples, chunks, group_by_phase, BlockLayout, PhaseGroup, ReconstructionConfig};
use crate::error::{Error, Result};
use crate::fock::{psi_table, trace_norm_half, DensityMatrix};
use crate::homodyne::QuadratureSample;

/// Below this dilution a failed step is taken as a stall at the optimum.
const MIN_DILUTION: f64 = 1e-10;
/// Largest tolerated deviation of the discretized POVM sum from the identity.
const POVM_NORMALIZATION_TOL: f64 = 1e-10;
/// Accepted steps raise the exponent of `R` geometrically up to this cap;
/// large exponents speed up the decay of populations the data exclude.
const EXPONENT_GROWTH: f64 = 1.5;
const MAX_EXPONENT: f64 = 16.0;
/// Two-mode states are indexed with `u8` in the likelihood kernel.
pub const MAX_N_MAX: usize = 15;

#[derive(Debug, Clone)]
pub struct MlResult {
    pub rho: DensityMatrix,
    /// Likelihood evaluations, i.e. passes over the data.
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Log-likelihood of every accepted iterate, starting with the initial state.
    pub history: Vec<f64>,
    /// `max |G - I|` of the discretized single-mode POVM integral.
    pub povm_normalization_error: f64,
}

/// Block-diagonal state, one dense Hermitian block per total photon number.
type Blocks = Vec<DMatrix<Complex64>>;

struct Prepared {
    layout: BlockLayout,
    groups: Vec<PhaseGroup>,
    /// Per group, `psi_0..psi_n(x1)` followed by `psi_0..psi_n(x2)` per sample.
    psi: Vec<Vec<f64>>,
    entries: Vec<Entry>,
    work: Vec<(usize, usize, usize)>,
    n_samples: f64,
}

struct Evaluation {
    log_likelihood: f64,
    r: Blocks,
}

pub fn ml_reconstruct(
    samples: &[QuadratureSample],
    config: &ReconstructionConfig,
) -> Result<MlResult> {
    check_samples(samples)?;
    let trunc = config.truncation()?;
    if trunc.n_max() > MAX_N_MAX {
        return Err(Error::invalid(
            "reconstruction.n_max",
            format!("at most {MAX_N_MAX} for max_likelihood"),
        ));
    }
    let povm_normalization_error = povm_normalization_error(config)?;

    let groups = group_by_phase(samples);
    let n = trunc.n_max();
    let psi = groups
        .par_iter()
        .map(|g| {
            let mut buf = Vec::with_capacity(g.pairs.len() * 2 * (n + 1));
            for &(x1, x2) in &g.pairs {
                buf.extend(psi_table(n, x1));
                buf.extend(psi_table(n, x2));
            }
            buf
        })
        .collect();
    let layout = BlockLayout::new(trunc);
    let prep = Prepared {
        entries: entries(&layout),
        layout,
        work: chunks(&groups),
        groups,
        psi,
        n_samples: samples.len() as f64,
    };

    let mut rho: Blocks = prep
        .layout
        .blocks
        .iter()
        .map(|&(_, size)| DMatrix::identity(size, size).scale(1.0 / trunc.dim() as f64))
        .map(to_complex)
        .collect();
    let mut current = evaluate(&prep, &rho);
    let mut history = vec![current.log_likelihood];
    let mut iterations = 1;
    let mut exponent = 1.0;
    let mut dilution: Option<f64> = None;
    let mut residual = fixed_point_residual(&rho, &current.r);

    while residual >= config.convergence_tol && iterations < config.max_iterations {
        let kind = match dilution {
            Some(eps) => Step::Diluted(eps),
            None => Step::Power(exponent),
        };
        let candidate = step(&rho, &current.r, kind);
        let next = evaluate(&prep, &candidate);
        iterations += 1;
        if next.log_likelihood >= current.log_likelihood {
            rho = candidate;
            current = next;
            history.push(current.log_likelihood);
            residual = fixed_point_residual(&rho, &current.r);
            if dilution.take().is_none() {
                exponent = (exponent * EXPONENT_GROWTH).min(MAX_EXPONENT);
            }
        } else if exponent > 1.0 {
            exponent = 1.0;
        } else {
            let eps = dilution.map_or(1.0, |e| e / 2.0);
            if eps < MIN_DILUTION {
                break;
            }
            dilution = Some(eps);
        }
    }

    Ok(MlResult {
        rho: assemble(&prep.layout, &rho)?,
        iterations,
        log_likelihood: current.log_likelihood,
        converged: residual < config.convergence_tol,
        history,
        povm_normalization_error,
    })
}

fn to_complex(m: DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// The POVM sums to the identity on the truncated space only if the grid
/// integrates every `psi_k psi_m` exactly enough; checked before iterating.
fn povm_normalization_error(config: &ReconstructionConfig) -> Result<f64> {
    let (xs, ws) = config.quadrature_grid.nodes();
    let n = config.n_max;
    let mut gram = vec![0.0; (n + 1) * (n + 1)];
    for (&x, &w) in xs.iter().zip(&ws) {
        let t = psi_table(n, x);
        for k in 0..=n {
            for m in 0..=n {
                gram[k * (n + 1) + m] += w * t[k] * t[m];
            }
        }
    }
    let err = (0..=n)
        .flat_map(|k| (0..=n).map(move |m| (k, m)))
        .map(|(k, m)| (gram[k * (n + 1) + m] - if k == m { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    if err > POVM_NORMALIZATION_TOL {
        return Err(Error::invalid(
            "reconstruction.quadrature_grid",
            format!("POVM integrates to identity only within {err:e}"),
        ));
    }
    Ok(err)
}

/// Upper-triangle entry `(a, b)`, `a <= b`, of one photon-number block.
#[derive(Debug, Clone, Copy)]
struct Entry {
    blk: usize,
    a: usize,
    b: usize,
    /// Flat indices `k l` of `u_a` and `u_b`.
    idx: [u8; 2],
    /// `l_a - l_b`.
    dl: f64,
}

fn entries(layout: &BlockLayout) -> Vec<Entry> {
    let mut out = Vec::new();
    for (blk, &(start, size)) in layout.blocks.iter().enumerate() {
        for a in 0..size {
            for b in a..size {
                let (ka, la) = layout.members[start + a];
                let (kb, lb) = layout.members[start + b];
                out.push(Entry {
                    blk,
                    a,
                    b,
                    idx: [
                        layout.trunc.index(ka, la) as u8,
                        layout.trunc.index(kb, lb) as u8,
                    ],
                    dl: la as f64 - lb as f64,
                });
            }
        }
    }
    out
}

/// Dot product with four independent partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut partial = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            partial[k] += x[k] * y[k];
        }
    }
    (partial[0] + partial[1]) + (partial[2] + partial[3]) + tail
}

/// Log-likelihood of `rho` and the normalized operator `R(rho)`.
///
/// With `uu_j = u_a u_b` over upper-triangle entries, `p = sum_j S_j uu_j`
/// where `S_j` is the rotated element, doubled off the diagonal.
fn evaluate(prep: &Prepared, rho: &Blocks) -> Evaluation {
    let entries = &prep.entries;
    let d = prep.layout.trunc.mode_dim();

    let rotated: Vec<Vec<f64>> = prep
        .groups
        .iter()
        .map(|g| {
            entries
                .iter()
                .map(|e| {
                    let phase = Complex64::from_polar(1.0, -e.dl * g.chi);
                    let v = (rho[e.blk][(e.a, e.b)] * phase).re;
                    if e.a == e.b {
                        v
                    } else {
                        2.0 * v
                    }
                })
                .collect()
        })
        .collect();

    let partials: Vec<(f64, Vec<f64>)> = prep
        .work
        .par_iter()
        .map(|&(g, start, end)| {
            let s = &rotated[g];
            let psi = &prep.psi[g];
            let mut acc = vec![0.0; entries.len()];
            let mut uu = vec![0.0; entries.len()];
            // u_{kl} = psi_k(x1) psi_l(x2), row-major; sized so u8 indices need no checks
            let mut u = [0.0; 256];
            let mut log_l = 0.0;
            for i in start..end {
                let row = &psi[i * 2 * d..(i + 1) * 2 * d];
                let (psi1, psi2) = row.split_at(d);
                for (k, &a) in psi1.iter().enumerate() {
                    for (u, &b) in u[k * d..(k + 1) * d].iter_mut().zip(psi2) {
                        *u = a * b;
                    }
                }
                for (v, e) in uu.iter_mut().zip(entries) {
                    *v = u[e.idx[0] as usize] * u[e.idx[1] as usize];
                }
                let p = dot(s, &uu).max(f64::MIN_POSITIVE);
                log_l += p.ln();
                let inv = 1.0 / p;
                for (acc, u) in acc.iter_mut().zip(&uu) {
                    *acc += u * inv;
                }
            }
            (log_l, acc)
        })
        .collect();

    let mut log_likelihood = 0.0;
    let mut r: Blocks = prep
        .layout
        .blocks
        .iter()
        .map(|&(_, size)| DMatrix::zeros(size, size))
        .collect();
    for (&(g, _, _), (log_l, acc)) in prep.work.iter().zip(&partials) {
        log_likelihood += log_l;
        let chi = prep.groups[g].chi;
        for (e, &v) in entries.iter().zip(acc) {
            let z = Complex64::from_polar(v, e.dl * chi);
            r[e.blk][(e.a, e.b)] += z;
            if e.a != e.b {
                r[e.blk][(e.b, e.a)] += z.conj();
            }
        }
    }
    for block in &mut r {
        *block /= Complex64::new(prep.n_samples, 0.0);
    }
    Evaluation { log_likelihood, r }
}

#[derive(Debug, Clone, Copy)]
enum Step {
    /// `R^gamma rho R^gamma`.
    Power(f64),
    /// `(I + eps R) rho (I + eps R)`, up to normalization.
    Diluted(f64),
}

fn hermitian_power(m: &DMatrix<Complex64>, gamma: f64) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&v| Complex64::new(v.max(0.0).powf(gamma), 0.0)),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

fn step(rho: &Blocks, r: &Blocks, kind: Step) -> Blocks {
    let mut next: Blocks = rho
        .iter()
        .zip(r)
        .map(|(rho, r)| {
            let op = match kind {
                Step::Power(1.0) => r.clone(),
                Step::Power(g) => hermitian_power(r, g),
                Step::Diluted(eps) => {
                    let size = r.nrows();
                    (DMatrix::identity(size, size) + r.scale(eps)).unscale(1.0 + eps)
                }
            };
            let m = &op * rho * &op;
            (&m + m.adjoint()).scale(0.5)
        })
        .collect();
    let tr: f64 = next
        .iter()
        .map(|b| b.diagonal().iter().map(|z| z.re).sum::<f64>())
        .sum();
    for b in &mut next {
        *b = b.unscale(tr);
    }
    next
}

/// Trace distance between `rho` and one plain `R rho R` step from it; zero
/// exactly at a fixed point.
fn fixed_point_residual(rho: &Blocks, r: &Blocks) -> f64 {
    blocks_trace_distance(rho, &step(rho, r, Step::Power(1.0)))
}

fn blocks_trace_distance(a: &Blocks, b: &Blocks) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| trace_norm_half(&(x - y)))
        .sum()
}

fn assemble(layout: &BlockLayout, rho: &Blocks) -> Result<DensityMatrix> {
    let d = layout.trunc.dim();
    let mut full = DMatrix::zeros(d, d);
    for (blk, &(_, size)) in layout.blocks.iter().enumerate() {
        for a in 0..size {
            for b in 0..size {
                full[layout.flat(blk, a, b)] = rho[blk][(a, b)];
            }
        }
    }
    DensityMatrix::new(full, layout.trunc)
}
