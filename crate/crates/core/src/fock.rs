//! Truncated two-mode Fock space.
//!
//! Quadratures follow `x = (a + a^dagger) / 2`, `y = (a - a^dagger) / 2i`, so the
//! vacuum has variance 1/4 in every quadrature. Two-mode basis states `|k, l>`
//! (k photons in time-bin n, l in time-bin n+1) are stored row-major at flat
//! index `k * (n_max + 1) + l`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Default photon-number cutoff per mode.
pub const DEFAULT_N_MAX: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockTruncation {
    n_max: usize,
}

impl FockTruncation {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::invalid("n_max", "must be at least 1"));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// States per mode.
    pub fn mode_dim(&self) -> usize {
        self.n_max + 1
    }

    /// Two-mode dimension `(n_max + 1)^2`.
    pub fn dim(&self) -> usize {
        self.mode_dim() * self.mode_dim()
    }

    pub fn index(&self, k: usize, l: usize) -> usize {
        debug_assert!(k <= self.n_max && l <= self.n_max);
        k * self.mode_dim() + l
    }

    pub fn pair(&self, index: usize) -> (usize, usize) {
        (index / self.mode_dim(), index % self.mode_dim())
    }

    /// Flat indices grouped by total photon number `k + l`, from 0 to `2 n_max`.
    pub fn photon_number_blocks(&self) -> Vec<Vec<usize>> {
        (0..=2 * self.n_max)
            .map(|total| {
                (0..=self.n_max)
                    .filter(|&k| total >= k && total - k <= self.n_max)
                    .map(|k| self.index(k, total - k))
                    .collect()
            })
            .collect()
    }
}

impl Default for FockTruncation {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
        }
    }
}

/// Quadrature wavefunction `<x|n>` in the variance-1/4 convention.
pub fn psi_n(n: usize, x: f64) -> f64 {
    psi_table(n, x)[n]
}

/// `[psi_0(x), ..., psi_{n_max}(x)]` by upward three-term recursion.
pub fn psi_table(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push((2.0 / PI).powf(0.25) * (-x * x).exp());
    if n_max >= 1 {
        out.push(2.0 * x * out[0]);
    }
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 * x * out[n] - nf.sqrt() * out[n - 1]) / (nf + 1.0).sqrt();
        out.push(next);
    }
    out
}

/// Single-mode projector vector with components `e^{i n theta} psi_n(x)`.
///
/// `v^dagger rho v` is the density of quadrature outcome `x` for local-oscillator
/// setting `theta`.
pub fn povm_vector(x: f64, theta: f64, trunc: FockTruncation) -> DVector<Complex64> {
    let psi = psi_table(trunc.n_max(), x);
    DVector::from_iterator(
        trunc.mode_dim(),
        psi.iter()
            .enumerate()
            .map(|(n, &p)| Complex64::from_polar(p, n as f64 * theta)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeKet {
    amplitudes: DVector<Complex64>,
    trunc: FockTruncation,
}

impl TwoModeKet {
    pub fn new(amplitudes: DVector<Complex64>, trunc: FockTruncation) -> Result<Self> {
        if amplitudes.len() != trunc.dim() {
            return Err(Error::DimensionMismatch {
                left: amplitudes.len(),
                right: trunc.dim(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "amplitudes",
                format!("squared norm is {norm}"),
            ));
        }
        Ok(Self { amplitudes, trunc })
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn truncation(&self) -> FockTruncation {
        self.trunc
    }

    pub fn amplitude(&self, k: usize, l: usize) -> Complex64 {
        self.amplitudes[self.trunc.index(k, l)]
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix {
            elements: &self.amplitudes * self.amplitudes.adjoint(),
            trunc: self.trunc,
        }
    }
}

/// Two-mode density matrix `rho_{kl,mn} = <k l| rho |m n>`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elements: DMatrix<Complex64>,
    trunc: FockTruncation,
}

impl DensityMatrix {
    /// Checked constructor: Hermitian, unit trace, positive semidefinite.
    pub fn new(elements: DMatrix<Complex64>, trunc: FockTruncation) -> Result<Self> {
        let rho = Self::from_estimate(elements, trunc)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Accepts an unconstrained estimate: only the shape is checked and the
    /// matrix is replaced by its Hermitian part. Trace and positivity are left
    /// as estimated.
    pub fn from_estimate(elements: DMatrix<Complex64>, trunc: FockTruncation) -> Result<Self> {
        let d = trunc.dim();
        if elements.nrows() != d || elements.ncols() != d {
            return Err(Error::DimensionMismatch {
                left: elements.nrows().max(elements.ncols()),
                right: d,
            });
        }
        let herm = (&elements + elements.adjoint()).scale(0.5);
        Ok(Self {
            elements: herm,
            trunc,
        })
    }

    pub fn vacuum(trunc: FockTruncation) -> Self {
        let mut elements = DMatrix::zeros(trunc.dim(), trunc.dim());
        elements[(0, 0)] = Complex64::new(1.0, 0.0);
        Self { elements, trunc }
    }

    pub fn maximally_mixed(trunc: FockTruncation) -> Self {
        let d = trunc.dim();
        Self {
            elements: DMatrix::identity(d, d).scale(1.0 / d as f64),
            trunc,
        }
    }

    /// Projector onto the basis state `|k, l>`.
    pub fn fock(k: usize, l: usize, trunc: FockTruncation) -> Self {
        let mut elements = DMatrix::zeros(trunc.dim(), trunc.dim());
        let i = trunc.index(k, l);
        elements[(i, i)] = Complex64::new(1.0, 0.0);
        Self { elements, trunc }
    }

    pub fn validate(&self) -> Result<()> {
        let asym = (&self.elements - self.elements.adjoint()).camax();
        if asym > HERMITIAN_TOL {
            return Err(Error::invalid(
                "density matrix",
                format!("not Hermitian ({asym:e})"),
            ));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::invalid("density matrix", format!("trace is {tr}")));
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -POSITIVITY_TOL {
            return Err(Error::invalid(
                "density matrix",
                format!("negative eigenvalue {min:e}"),
            ));
        }
        Ok(())
    }

    pub fn is_physical(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn truncation(&self) -> FockTruncation {
        self.trunc
    }

    /// `<k l| rho |m n>`.
    pub fn element(&self, k: usize, l: usize, m: usize, n: usize) -> Complex64 {
        self.elements[(self.trunc.index(k, l), self.trunc.index(m, n))]
    }

    pub fn trace(&self) -> f64 {
        self.elements.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.elements * &self.elements)
            .diagonal()
            .iter()
            .map(|z| z.re)
            .sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.elements.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Total population with `k + l >= 2`.
    pub fn multi_photon_weight(&self) -> f64 {
        (0..self.trunc.dim())
            .filter(|&i| {
                let (k, l) = self.trunc.pair(i);
                k + l >= 2
            })
            .map(|i| self.elements[(i, i)].re)
            .sum()
    }
}

impl DensityMatrix {
    /// Text form: `n_max=<k> layout=row-major`, optional `#` comment lines,
    /// then one `k,l,m,n,re,im` line per element in row-major order.
    pub fn write_text<W: Write>(&self, mut out: W, comments: &[String]) -> std::io::Result<()> {
        writeln!(out, "n_max={} layout=row-major", self.trunc.n_max())?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let d = self.trunc.dim();
        for i in 0..d {
            let (k, l) = self.trunc.pair(i);
            for j in 0..d {
                let (m, n) = self.trunc.pair(j);
                let z = self.elements[(i, j)];
                writeln!(out, "{k},{l},{m},{n},{:.16e},{:.16e}", z.re, z.im)?;
            }
        }
        Ok(())
    }

    /// Parses [`write_text`](Self::write_text) output. Every element must be
    /// present exactly once; the result is only required to be Hermitian, so
    /// unconstrained estimates round-trip.
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let trunc = loop {
            let Some((idx, line)) = lines.next() else {
                return Err(Error::parse(1, "empty density file"));
            };
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            break parse_density_header(idx + 1, line)?;
        };
        let d = trunc.dim();
        let mut elements = DMatrix::zeros(d, d);
        let mut seen = vec![false; d * d];
        let mut last_line = 1;
        for (idx, line) in lines {
            let line_no = idx + 1;
            last_line = line_no;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(Error::parse(
                    line_no,
                    format!("expected 6 fields, found {}", fields.len()),
                ));
            }
            let mut idx4 = [0usize; 4];
            for (v, f) in idx4.iter_mut().zip(&fields[..4]) {
                *v = f
                    .parse()
                    .map_err(|e| Error::parse(line_no, format!("`{f}`: {e}")))?;
                if *v > trunc.n_max() {
                    return Err(Error::parse(line_no, format!("index {v} exceeds n_max")));
                }
            }
            let mut z = [0.0f64; 2];
            for (v, f) in z.iter_mut().zip(&fields[4..]) {
                *v = f
                    .parse()
                    .map_err(|e| Error::parse(line_no, format!("`{f}`: {e}")))?;
            }
            let i = trunc.index(idx4[0], idx4[1]);
            let j = trunc.index(idx4[2], idx4[3]);
            if std::mem::replace(&mut seen[i * d + j], true) {
                return Err(Error::parse(line_no, "duplicate element"));
            }
            elements[(i, j)] = Complex64::new(z[0], z[1]);
        }
        let missing = seen.iter().filter(|s| !**s).count();
        if missing > 0 {
            return Err(Error::parse(
                last_line,
                format!("{missing} elements missing"),
            ));
        }
        let asym = (&elements - elements.adjoint()).camax();
        if asym > 1e-9 {
            return Err(Error::invalid(
                "density matrix",
                format!("not Hermitian ({asym:e})"),
            ));
        }
        Self::from_estimate(elements, trunc)
    }
}

fn parse_density_header(line_no: usize, line: &str) -> Result<FockTruncation> {
    let mut n_max = None;
    let mut layout_ok = false;
    for token in line.split_whitespace() {
        match token.split_once('=') {
            Some(("n_max", v)) => {
                n_max = Some(
                    v.parse::<usize>()
                        .map_err(|e| Error::parse(line_no, format!("n_max: {e}")))?,
                )
            }
            Some(("layout", "row-major")) => layout_ok = true,
            _ => {
                return Err(Error::parse(
                    line_no,
                    format!("unexpected header token `{token}`"),
                ))
            }
        }
    }
    match (n_max, layout_ok) {
        (Some(n), true) => {
            FockTruncation::new(n).map_err(|_| Error::parse(line_no, "n_max must be at least 1"))
        }
        _ => Err(Error::parse(
            line_no,
            "expected `n_max=<k> layout=row-major`",
        )),
    }
}

/// Removes every coherence between different total photon numbers, i.e.
/// averages `rho` over the global phase rotation `exp(i phi (N1 + N2))`.
pub fn global_phase_average(rho: &DensityMatrix) -> DensityMatrix {
    let trunc = rho.trunc;
    let d = trunc.dim();
    let elements = DMatrix::from_fn(d, d, |i, j| {
        let (k, l) = trunc.pair(i);
        let (m, n) = trunc.pair(j);
        if k + l == m + n {
            rho.elements[(i, j)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    DensityMatrix { elements, trunc }
}

/// Square root of a Hermitian matrix, clamping small negative eigenvalues.
fn hermitian_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&v| Complex64::new(v.max(0.0).sqrt(), 0.0)),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

fn same_shape(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.trunc != sigma.trunc {
        return Err(Error::DimensionMismatch {
            left: rho.trunc.dim(),
            right: sigma.trunc.dim(),
        });
    }
    Ok(())
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    same_shape(rho, sigma)?;
    let s = hermitian_sqrt(&rho.elements);
    let mut inner = &s * &sigma.elements * &s;
    inner = (&inner + inner.adjoint()).scale(0.5);
    let root_trace: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&v| v.max(0.0).sqrt())
        .sum();
    Ok((root_trace * root_trace).clamp(0.0, 1.0))
}

/// `1/2 ||rho - sigma||_1`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    same_shape(rho, sigma)?;
    Ok(trace_norm_half(&(&rho.elements - &sigma.elements)))
}

pub(crate) fn trace_norm_half(diff: &DMatrix<Complex64>) -> f64 {
    let herm = (diff + diff.adjoint()).scale(0.5);
    0.5 * SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gauss_hermite;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Random physical state from a Ginibre matrix, G G^dagger / Tr.
    fn random_state(seed: &[f64], trunc: FockTruncation) -> DensityMatrix {
        let d = trunc.dim();
        let g = DMatrix::from_fn(d, d, |i, j| {
            let a = seed[(i * d + j) % seed.len()];
            let b = seed[(i * 7 + j * 3 + 1) % seed.len()];
            c(a * (1.0 + i as f64).sin(), b * (2.0 + j as f64).cos())
        });
        let m = &g * g.adjoint();
        let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
        DensityMatrix::new(m.scale(1.0 / tr), trunc).unwrap()
    }

    #[test]
    fn truncation_indexing() {
        assert!(FockTruncation::new(0).is_err());
        let t = FockTruncation::new(3).unwrap();
        assert_eq!(t.dim(), 16);
        for i in 0..t.dim() {
            let (k, l) = t.pair(i);
            assert_eq!(t.index(k, l), i);
        }
        let blocks = t.photon_number_blocks();
        assert_eq!(blocks.len(), 7);
        assert_eq!(blocks.iter().map(Vec::len).sum::<usize>(), 16);
        assert_eq!(blocks[1], vec![t.index(0, 1), t.index(1, 0)]);
    }

    #[test]
    fn psi_values() {
        let c0 = (2.0 / PI).powf(0.25);
        assert!((psi_n(0, 0.0) - 0.893_244).abs() < 1e-6);
        assert!((psi_n(0, 0.0) - c0).abs() < 1e-15);
        assert_eq!(psi_n(1, 0.0), 0.0);
        let expected = c0 * 2.0 * 0.5 * (-0.25f64).exp();
        assert!((psi_n(1, 0.5) - expected).abs() < 1e-15);
        assert!((psi_n(1, 0.5) - 0.695_659).abs() < 1e-6);
        // closed form H_3(z) = 8z^3 - 12z, normalisation (2^3 3!)^{-1/2}
        let x: f64 = 0.37;
        let z = 2f64.sqrt() * x;
        let h3 = 8.0 * z.powi(3) - 12.0 * z;
        let closed = c0 * h3 * (-x * x).exp() / 48f64.sqrt();
        assert!((psi_n(3, x) - closed).abs() < 1e-14);
    }

    #[test]
    fn psi_orthonormal_under_gauss_hermite() {
        // int psi_n psi_m dx with x = t / sqrt 2: weight exp(-t^2)
        let (t, w) = gauss_hermite(60);
        for n in 0..=6 {
            for m in 0..=6 {
                let integral: f64 = t
                    .iter()
                    .zip(&w)
                    .map(|(&t, &w)| {
                        let x = t / 2f64.sqrt();
                        w * (t * t).exp() * psi_n(n, x) * psi_n(m, x) / 2f64.sqrt()
                    })
                    .sum();
                let expected = if n == m { 1.0 } else { 0.0 };
                assert!(
                    (integral - expected).abs() < 1e-8,
                    "n={n} m={m}: {integral}"
                );
            }
        }
    }

    #[test]
    fn povm_vector_examples() {
        let t1 = FockTruncation::new(1).unwrap();
        let v = povm_vector(0.0, 0.0, t1);
        assert!((v[0] - c(0.893_244, 0.0)).norm() < 1e-6);
        assert!(v[1].norm() < 1e-15);

        let v = povm_vector(0.5, PI, t1);
        assert!((v[0].re - psi_n(0, 0.5)).abs() < 1e-15);
        assert!((v[1] - c(-psi_n(1, 0.5), 0.0)).norm() < 1e-15);

        let v = povm_vector(0.5, PI / 2.0, t1);
        assert!((v[0] - c(psi_n(0, 0.5), 0.0)).norm() < 1e-15);
        assert!((v[1] - c(0.0, psi_n(1, 0.5))).norm() < 1e-15);
    }

    #[test]
    fn povm_completeness_at_fixed_phase() {
        let trunc = FockTruncation::new(4).unwrap();
        let (t, w) = gauss_hermite(60);
        for &theta in &[0.0, 0.7, PI / 2.0, 2.5] {
            let mut acc = DMatrix::<Complex64>::zeros(5, 5);
            for (&t, &w) in t.iter().zip(&w) {
                let x = t / 2f64.sqrt();
                let v = povm_vector(x, theta, trunc);
                acc += (&v * v.adjoint()).scale(w * (t * t).exp() / 2f64.sqrt());
            }
            let err = (acc - DMatrix::identity(5, 5)).camax();
            assert!(err < 1e-10, "theta={theta}: {err}");
        }
    }

    #[test]
    fn global_phase_average_drops_cross_number_coherence() {
        let trunc = FockTruncation::new(2).unwrap();
        let d = trunc.dim();
        let mut m = DMatrix::zeros(d, d);
        let i00 = trunc.index(0, 0);
        let i10 = trunc.index(1, 0);
        m[(i00, i00)] = c(0.5, 0.0);
        m[(i10, i10)] = c(0.5, 0.0);
        m[(i00, i10)] = c(0.2, 0.1);
        m[(i10, i00)] = c(0.2, -0.1);
        let rho = DensityMatrix::new(m, trunc).unwrap();
        let avg = global_phase_average(&rho);
        assert_eq!(avg.element(0, 0, 1, 0), c(0.0, 0.0));
        assert_eq!(avg.element(1, 0, 1, 0), c(0.5, 0.0));
    }

    #[test]
    fn global_phase_average_equals_discrete_rotation_average() {
        let trunc = FockTruncation::new(2).unwrap();
        let rho = random_state(&[0.3, -1.2, 0.7, 2.1, -0.4, 0.9, 1.6], trunc);
        // Average of U rho U^dagger over 8 equally spaced phases is exact for
        // total-number differences below 8.
        let d = trunc.dim();
        let steps = 8;
        let mut acc = DMatrix::<Complex64>::zeros(d, d);
        for s in 0..steps {
            let phi = 2.0 * PI * s as f64 / steps as f64;
            let u = DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| {
                let (k, l) = trunc.pair(i);
                Complex64::from_polar(1.0, phi * (k + l) as f64)
            }));
            acc += &u * rho.elements() * u.adjoint();
        }
        acc /= Complex64::new(steps as f64, 0.0);
        let avg = global_phase_average(&rho);
        assert!((acc - avg.elements()).camax() < 1e-14);
    }

    #[test]
    fn fidelity_examples() {
        let trunc = FockTruncation::default();
        let r10 = DensityMatrix::fock(1, 0, trunc);
        let r01 = DensityMatrix::fock(0, 1, trunc);
        assert!((fidelity(&r10, &r10).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&r10, &r01).unwrap() < 1e-12);

        let mut amps = DVector::zeros(trunc.dim());
        amps[trunc.index(1, 0)] = c(0.5f64.sqrt(), 0.0);
        amps[trunc.index(0, 1)] = c(0.5f64.sqrt(), 0.0);
        let plus = TwoModeKet::new(amps, trunc).unwrap().projector();
        assert!((fidelity(&plus, &r10).unwrap() - 0.5).abs() < 1e-12);
        assert!((fidelity(&r10, &plus).unwrap() - 0.5).abs() < 1e-12);

        let other = FockTruncation::new(2).unwrap();
        assert!(fidelity(&r10, &DensityMatrix::vacuum(other)).is_err());
    }

    #[test]
    fn validation_rejects_unphysical() {
        let trunc = FockTruncation::new(1).unwrap();
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = c(1.2, 0.0);
        m[(1, 1)] = c(-0.2, 0.0);
        assert!(DensityMatrix::new(m.clone(), trunc).is_err());
        assert!(DensityMatrix::from_estimate(m, trunc).is_ok());
        assert!(DensityMatrix::new(DMatrix::zeros(3, 3), trunc).is_err());
    }

    proptest! {
        #[test]
        fn phase_average_idempotent_and_trace_preserving(
            seed in proptest::collection::vec(-2.0f64..2.0, 7..20)
        ) {
            let trunc = FockTruncation::new(2).unwrap();
            let rho = random_state(&seed, trunc);
            let once = global_phase_average(&rho);
            let twice = global_phase_average(&once);
            prop_assert_eq!(&once, &twice);
            prop_assert!((once.trace() - rho.trace()).abs() < 1e-14);
            prop_assert!((once.elements() - once.elements().adjoint()).camax() < 1e-15);
        }

        #[test]
        fn fidelity_is_symmetric(
            a in proptest::collection::vec(-2.0f64..2.0, 7..20),
            b in proptest::collection::vec(-2.0f64..2.0, 7..20),
        ) {
            let trunc = FockTruncation::new(1).unwrap();
            let rho = random_state(&a, trunc);
            let sigma = random_state(&b, trunc);
            let f1 = fidelity(&rho, &sigma).unwrap();
            let f2 = fidelity(&sigma, &rho).unwrap();
            prop_assert!((f1 - f2).abs() < 1e-8, "{} vs {}", f1, f2);
            prop_assert!((0.0..=1.0).contains(&f1));
        }
    }

    #[test]
    fn density_text_round_trip() {
        let trunc = FockTruncation::new(2).unwrap();
        let mut m = DMatrix::zeros(9, 9);
        m[(trunc.index(1, 0), trunc.index(1, 0))] = c(0.5, 0.0);
        m[(trunc.index(0, 1), trunc.index(0, 1))] = c(0.5, 0.0);
        m[(trunc.index(1, 0), trunc.index(0, 1))] = c(0.1, 0.3);
        m[(trunc.index(0, 1), trunc.index(1, 0))] = c(0.1, -0.3);
        let rho = DensityMatrix::new(m, trunc).unwrap();
        let mut buf = Vec::new();
        rho.write_text(&mut buf, &["sha256=abc".to_string()])
            .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n_max=2 layout=row-major\n# sha256=abc\n0,0,0,0,"));
        assert_eq!(text.lines().count(), 2 + 81);
        let back = DensityMatrix::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn density_text_errors() {
        let trunc = FockTruncation::new(1).unwrap();
        let mut buf = Vec::new();
        DensityMatrix::vacuum(trunc)
            .write_text(&mut buf, &[])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            DensityMatrix::read_text(truncated.as_bytes()),
            Err(Error::Parse { line: 10, .. })
        ));
        let garbled = text.replacen("0,0,0,1,", "0,0,0,x,", 1);
        assert!(matches!(
            DensityMatrix::read_text(garbled.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(DensityMatrix::read_text("n_max=1\n".as_bytes()).is_err());
    }
}
