//! Two-mode Wigner functions of the ebit family and of arbitrary density
//! matrices, plus 2-D section export.
//!
//! Phase-space points use `alpha_j = x_j + i y_j` with the vacuum variance 1/4
//! convention of [`crate::fock`], so `W_0(x, y) = (2/pi) exp(-2x^2 - 2y^2)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::ebit::check_unit_interval;
use crate::error::{Error, Result};
use crate::fock::DensityMatrix;

/// Fixed quadratures of the default `x1y1` section, `(x2, y2)`.
pub const DEFAULT_X1Y1_FIXED: (f64, f64) = (-0.1, -0.1);
pub const DEFAULT_CONTOUR_LEVELS: [f64; 3] = [-0.2, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint4 {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl PhasePoint4 {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }
}

/// Vacuum Wigner function.
pub fn w0(x: f64, y: f64) -> f64 {
    2.0 / PI * (-2.0 * x * x - 2.0 * y * y).exp()
}

/// Single-photon Wigner function.
pub fn w1(x: f64, y: f64) -> f64 {
    w0(x, y) * (4.0 * x * x + 4.0 * y * y - 1.0)
}

/// Rotates the mode-2 quadratures by `phi`.
pub fn rotate_mode2(x2: f64, y2: f64, phi: f64) -> (f64, f64) {
    let (s, c) = phi.sin_cos();
    (x2 * c - y2 * s, x2 * s + y2 * c)
}

/// `(x+, y+, x-, y-)`: sum and difference of mode 1 with the rotated mode 2.
pub fn correlation_coordinates(p: PhasePoint4, phi: f64) -> (f64, f64, f64, f64) {
    let (x2, y2) = rotate_mode2(p.x2, p.y2, phi);
    (
        (p.x1 + x2) * FRAC_1_SQRT_2,
        (p.y1 + y2) * FRAC_1_SQRT_2,
        (p.x1 - x2) * FRAC_1_SQRT_2,
        (p.y1 - y2) * FRAC_1_SQRT_2,
    )
}

/// Inverse of [`correlation_coordinates`].
pub fn from_correlation_coordinates(xp: f64, yp: f64, xm: f64, ym: f64, phi: f64) -> PhasePoint4 {
    let x1 = (xp + xm) * FRAC_1_SQRT_2;
    let y1 = (yp + ym) * FRAC_1_SQRT_2;
    let (x2, y2) = rotate_mode2((xp - xm) * FRAC_1_SQRT_2, (yp - ym) * FRAC_1_SQRT_2, -phi);
    PhasePoint4::new(x1, y1, x2, y2)
}

/// Closed-form Wigner function of `(1 - eta)|00><00| + eta |psi><psi|` with
/// `psi = alpha |1,0> + beta e^{-i phi} |0,1>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticEbit {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub eta: f64,
}

impl AnalyticEbit {
    pub fn balanced(phi: f64, eta: f64) -> Self {
        Self {
            alpha: FRAC_1_SQRT_2,
            beta: FRAC_1_SQRT_2,
            phi,
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("eta", self.eta)?;
        let norm = self.alpha * self.alpha + self.beta * self.beta;
        if self.alpha < 0.0 || self.beta < 0.0 || (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(
                "alpha/beta",
                format!("alpha^2 + beta^2 = {norm}"),
            ));
        }
        Ok(())
    }

    pub fn wigner(&self, p: PhasePoint4) -> f64 {
        let (x2, y2) = rotate_mode2(p.x2, p.y2, self.phi);
        let vac = w0(p.x1, p.y1) * w0(p.x2, p.y2);
        let coupling = vac * (p.x1 * x2 + p.y1 * y2);
        let photon = self.alpha * self.alpha * w1(p.x1, p.y1) * w0(p.x2, p.y2)
            + self.beta * self.beta * w0(p.x1, p.y1) * w1(p.x2, p.y2)
            + 8.0 * self.alpha * self.beta * coupling;
        (1.0 - self.eta) * vac + self.eta * photon
    }
}

/// Balanced-ebit Wigner function, mixed with vacuum at efficiency `eta`.
pub fn wigner_analytic(p: PhasePoint4, phi: f64, eta: f64) -> Result<f64> {
    let model = AnalyticEbit::balanced(phi, eta);
    model.validate()?;
    Ok(model.wigner(p))
}

/// `<m| D(beta) |n>` for `m, n <= n_max`, exact (generalised Laguerre form).
pub fn displacement_matrix(beta: Complex64, n_max: usize) -> DMatrix<Complex64> {
    let dim = n_max + 1;
    let r2 = beta.norm_sqr();
    let gauss = (-0.5 * r2).exp();
    // sqrt(n!) table
    let mut sqrt_fact = vec![1.0f64; dim];
    for n in 1..dim {
        sqrt_fact[n] = sqrt_fact[n - 1] * (n as f64).sqrt();
    }
    let mut out = DMatrix::zeros(dim, dim);
    for m in 0..dim {
        for n in 0..dim {
            let (lo, hi) = if m >= n { (n, m) } else { (m, n) };
            let order = hi - lo;
            let lag = laguerre(lo, order as f64, r2);
            let base = if m >= n { beta } else { -beta.conj() };
            out[(m, n)] = base.powu(order as u32) * (sqrt_fact[lo] / sqrt_fact[hi] * gauss * lag);
        }
    }
    out
}

/// Generalised Laguerre polynomial `L_n^{(a)}(x)` by recurrence.
fn laguerre(n: usize, a: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Displaced parity `D(alpha) Pi D(alpha)^dagger` restricted to `n <= n_max`.
///
/// Uses `D(alpha) Pi D(-alpha) = D(2 alpha) Pi`, so the restriction is exact and
/// no larger workspace is needed.
pub fn displaced_parity(alpha: Complex64, n_max: usize) -> DMatrix<Complex64> {
    let mut d = displacement_matrix(alpha * 2.0, n_max);
    for n in (1..=n_max).step_by(2) {
        d.column_mut(n).neg_mut();
    }
    d
}

/// `(2/pi)^2 Tr[rho P(alpha_1) (x) P(alpha_2)]` with `P` the displaced parity.
pub fn wigner_from_rho(rho: &DensityMatrix, p: PhasePoint4) -> f64 {
    let trunc = rho.truncation();
    let n_max = trunc.n_max();
    let p1 = displaced_parity(Complex64::new(p.x1, p.y1), n_max);
    let p2 = displaced_parity(Complex64::new(p.x2, p.y2), n_max);
    let el = rho.elements();
    let d = trunc.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        let (k, l) = trunc.pair(i);
        for j in 0..d {
            let (m, n) = trunc.pair(j);
            acc += el[(i, j)] * p1[(m, k)] * p2[(n, l)];
        }
    }
    (2.0 / PI).powi(2) * acc.re
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    X1Y1,
    X1X2,
    X1Y2,
    XplusYplus,
    XminusYminus,
}

impl Section {
    pub const ALL: [Section; 5] = [
        Section::X1Y1,
        Section::X1X2,
        Section::X1Y2,
        Section::XplusYplus,
        Section::XminusYminus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Section::X1Y1 => "x1y1",
            Section::X1X2 => "x1x2",
            Section::X1Y2 => "x1y2",
            Section::XplusYplus => "xplus_yplus",
            Section::XminusYminus => "xminus_yminus",
        }
    }

    pub fn default_fixed(self) -> (f64, f64) {
        match self {
            Section::X1Y1 => DEFAULT_X1Y1_FIXED,
            _ => (0.0, 0.0),
        }
    }

    /// Maps section coordinates and the two fixed values onto a 4-D point.
    /// `phi` is the rotation frame of the correlation sections.
    pub fn point(self, a: f64, b: f64, fixed: (f64, f64), phi: f64) -> PhasePoint4 {
        let (f1, f2) = fixed;
        match self {
            Section::X1Y1 => PhasePoint4::new(a, b, f1, f2),
            Section::X1X2 => PhasePoint4::new(a, f1, b, f2),
            Section::X1Y2 => PhasePoint4::new(a, f1, f2, b),
            Section::XplusYplus => from_correlation_coordinates(a, b, f1, f2, phi),
            Section::XminusYminus => from_correlation_coordinates(f1, f2, a, b, phi),
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Section {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Section::ALL
            .into_iter()
            .find(|sec| sec.name() == s)
            .ok_or_else(|| Error::invalid("section", format!("unknown section `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("axis", "needs at least 2 points"));
        }
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::invalid("axis", format!("bad range [{min}, {max}]")));
        }
        Ok(Self { min, max, count })
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }
}

impl Default for Axis {
    /// `[-3, 3]` with 121 points.
    fn default() -> Self {
        Self {
            min: -3.0,
            max: 3.0,
            count: 121,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum WignerSource<'a> {
    Analytic(AnalyticEbit),
    Density(&'a DensityMatrix),
}

impl WignerSource<'_> {
    pub fn eval(&self, p: PhasePoint4) -> f64 {
        match self {
            WignerSource::Analytic(model) => model.wigner(p),
            WignerSource::Density(rho) => wigner_from_rho(rho, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub section: Section,
    /// Frame phase used for correlation sections and recorded in the header.
    pub phi: f64,
    /// Efficiency of the analytic source; `None` for density-matrix sources.
    pub eta: Option<f64>,
    pub fixed: (f64, f64),
    pub axis1: Axis,
    pub axis2: Axis,
    /// Row-major, `values[i * axis2.count + j]` at `(axis1[i], axis2[j])`.
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.count + j]
    }

    /// Largest absolute element-wise difference to another grid of the same shape.
    pub fn max_abs_difference(&self, other: &WignerGrid) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch {
                left: self.values.len(),
                right: other.values.len(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn write_csv<W: Write>(&self, mut out: W, provenance: Option<&str>) -> std::io::Result<()> {
        let eta = self
            .eta
            .map_or_else(|| "nan".to_string(), |e| e.to_string());
        writeln!(
            out,
            "# section={} phi={} eta={} fixed={},{}",
            self.section, self.phi, eta, self.fixed.0, self.fixed.1
        )?;
        if let Some(p) = provenance {
            writeln!(out, "# {p}")?;
        }
        for i in 0..self.axis1.count {
            let a = self.axis1.value(i);
            for j in 0..self.axis2.count {
                writeln!(out, "{},{},{:.12e}", a, self.axis2.value(j), self.get(i, j))?;
            }
        }
        Ok(())
    }
}

/// Evaluates a section on a grid. Points are evaluated in parallel and written
/// to disjoint slots, so the result does not depend on scheduling.
pub fn export_section(
    source: WignerSource<'_>,
    section: Section,
    axis1: Axis,
    axis2: Axis,
    fixed: (f64, f64),
    phi_frame: f64,
) -> Result<WignerGrid> {
    if let WignerSource::Analytic(model) = source {
        model.validate()?;
    }
    Axis::new(axis1.min, axis1.max, axis1.count)?;
    Axis::new(axis2.min, axis2.max, axis2.count)?;
    let values = (0..axis1.count * axis2.count)
        .into_par_iter()
        .map(|idx| {
            let a = axis1.value(idx / axis2.count);
            let b = axis2.value(idx % axis2.count);
            source.eval(section.point(a, b, fixed, phi_frame))
        })
        .collect();
    let eta = match source {
        WignerSource::Analytic(model) => Some(model.eta),
        WignerSource::Density(_) => None,
    };
    Ok(WignerGrid {
        section,
        phi: phi_frame,
        eta,
        fixed,
        axis1,
        axis2,
        values,
    })
}

/// Line segment of an iso-contour, `((a0, b0), (a1, b1))` in section coordinates.
pub type Segment = ((f64, f64), (f64, f64));

/// Marching-squares iso-lines of `grid` at `level`.
pub fn contour_segments(grid: &WignerGrid, level: f64) -> Vec<Segment> {
    let mut segments = Vec::new();
    let (n1, n2) = (grid.axis1.count, grid.axis2.count);
    let lerp = |(a0, b0, v0): (f64, f64, f64), (a1, b1, v1): (f64, f64, f64)| {
        let t = (level - v0) / (v1 - v0);
        (a0 + t * (a1 - a0), b0 + t * (b1 - b0))
    };
    for i in 0..n1 - 1 {
        for j in 0..n2 - 1 {
            // corners counter-clockwise
            let c = [
                (grid.axis1.value(i), grid.axis2.value(j), grid.get(i, j)),
                (
                    grid.axis1.value(i + 1),
                    grid.axis2.value(j),
                    grid.get(i + 1, j),
                ),
                (
                    grid.axis1.value(i + 1),
                    grid.axis2.value(j + 1),
                    grid.get(i + 1, j + 1),
                ),
                (
                    grid.axis1.value(i),
                    grid.axis2.value(j + 1),
                    grid.get(i, j + 1),
                ),
            ];
            let mut crossings = Vec::with_capacity(4);
            for e in 0..4 {
                let (p, q) = (c[e], c[(e + 1) % 4]);
                if (p.2 >= level) != (q.2 >= level) {
                    crossings.push(lerp(p, q));
                }
            }
            match crossings.len() {
                2 => segments.push((crossings[0], crossings[1])),
                4 => {
                    // Saddle cell: resolve with the cell-centre value.
                    let centre = c.iter().map(|v| v.2).sum::<f64>() / 4.0;
                    if (centre >= level) == (c[0].2 >= level) {
                        segments.push((crossings[0], crossings[3]));
                        segments.push((crossings[1], crossings[2]));
                    } else {
                        segments.push((crossings[0], crossings[1]));
                        segments.push((crossings[2], crossings[3]));
                    }
                }
                _ => {}
            }
        }
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ebit::{arm_loss_amplitudes, heralded_state, make_ebit};
    use crate::fock::{DensityMatrix, FockTruncation};
    use crate::special::gauss_hermite;
    use proptest::prelude::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn single_mode_values() {
        assert!((w0(0.0, 0.0) - 0.636_620).abs() < 1e-6);
        assert!((w0(0.5, 0.0) - 0.386_129).abs() < 1e-6);
        assert!((w0(0.5, 0.0) - 2.0 / PI * (-0.5f64).exp()).abs() < 1e-15);
        assert!((w0(1.0, 1.0) - 0.011_660).abs() < 1e-6);
        assert!((w1(0.0, 0.0) + 2.0 / PI).abs() < 1e-15);
        assert_eq!(w1(0.5, 0.0), 0.0);
        assert!((w1(1.0, 0.0) - 0.258_471).abs() < 1e-6);
        assert!((w1(1.0, 0.0) - 6.0 / PI * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotate_mode2(1.0, 0.0, 0.0), (1.0, 0.0));
        let (a, b) = rotate_mode2(1.0, 0.0, PI / 2.0);
        assert!(a.abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        let (a, b) = rotate_mode2(0.3, -0.4, PI);
        assert!((a + 0.3).abs() < 1e-15 && (b - 0.4).abs() < 1e-15);
    }

    #[test]
    fn analytic_examples() {
        let o = PhasePoint4::origin();
        let pure = wigner_analytic(o, 0.0, 1.0).unwrap();
        assert!((pure + 4.0 / (PI * PI)).abs() < 1e-15);
        assert!((pure + 0.405_285).abs() < 1e-6);
        let mixed = wigner_analytic(o, 0.0, 0.605).unwrap();
        let expected = 0.395 * (2.0 / PI).powi(2) - 0.605 * 4.0 / (PI * PI);
        assert!((mixed - expected).abs() < 1e-15);
        assert!((mixed + 0.085_110).abs() < 1e-6);
        assert!(wigner_analytic(o, 0.0, -0.1).is_err());

        let p = PhasePoint4::new(0.5, 0.0, 0.5, 0.0);
        let q = PhasePoint4::new(0.5, 0.0, -0.5, 0.0);
        let a = wigner_analytic(p, 0.0, 1.0).unwrap();
        let b = wigner_analytic(q, PI, 1.0).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn correlation_coordinate_examples() {
        let s2 = 2f64.sqrt();
        let (xp, yp, xm, ym) = correlation_coordinates(PhasePoint4::new(1.0, 0.0, 1.0, 0.0), 0.0);
        assert!((xp - s2).abs() < 1e-15 && xm.abs() < 1e-15 && yp == 0.0 && ym == 0.0);
        let (xp, _, xm, _) =
            correlation_coordinates(PhasePoint4::new(1.0, 0.0, 0.0, 1.0), PI / 2.0);
        assert!(xp.abs() < 1e-15 && (xm - s2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn correlation_coordinates_are_orthogonal(
            x1 in -3.0f64..3.0, y1 in -3.0f64..3.0, x2 in -3.0f64..3.0, y2 in -3.0f64..3.0,
            phi in -7.0f64..7.0,
        ) {
            let p = PhasePoint4::new(x1, y1, x2, y2);
            let (a, b, c, d) = correlation_coordinates(p, phi);
            let n0 = x1 * x1 + y1 * y1 + x2 * x2 + y2 * y2;
            prop_assert!((a * a + b * b + c * c + d * d - n0).abs() < 1e-12);
            let back = from_correlation_coordinates(a, b, c, d, phi);
            prop_assert!((back.x1 - x1).abs() < 1e-12 && (back.y2 - y2).abs() < 1e-12);
            prop_assert!((back.x2 - x2).abs() < 1e-12 && (back.y1 - y1).abs() < 1e-12);
        }
    }

    #[test]
    fn factorisation_identity_on_grid() {
        let axis = Axis::new(-2.0, 2.0, 9).unwrap();
        for &phi in &[0.0, PI / 4.0, PI / 2.0, PI] {
            for a in 0..9 {
                for b in 0..9 {
                    for c in 0..9 {
                        for d in 0..9 {
                            let p = PhasePoint4::new(
                                axis.value(a),
                                axis.value(b),
                                axis.value(c),
                                axis.value(d),
                            );
                            let (xp, yp, xm, ym) = correlation_coordinates(p, phi);
                            let w = wigner_analytic(p, phi, 1.0).unwrap();
                            assert!((w - w1(xp, yp) * w0(xm, ym)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    /// 4-D Gauss-Hermite integral of `f(p) * exp(+2|p|^2)` against weight `exp(-2|p|^2)`.
    fn integrate4(n: usize, f: impl Fn(PhasePoint4) -> f64) -> f64 {
        let (t, w) = gauss_hermite(n);
        let s = FRAC_1_SQRT_2;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let p = PhasePoint4::new(t[i] * s, t[j] * s, t[k] * s, t[l] * s);
                        let weight = w[i]
                            * w[j]
                            * w[k]
                            * w[l]
                            * (t[i] * t[i] + t[j] * t[j] + t[k] * t[k] + t[l] * t[l]).exp();
                        total += weight * f(p);
                    }
                }
            }
        }
        total / 4.0
    }

    #[test]
    fn normalisation_and_moment_law() {
        for &(phi, eta) in &[(0.0, 1.0), (PI / 3.0, 0.605), (PI / 2.0, 1.0), (2.5, 0.2)] {
            let model = AnalyticEbit::balanced(phi, eta);
            let norm = integrate4(8, |p| model.wigner(p));
            assert!((norm - 1.0).abs() < 1e-8, "norm {norm}");
            let x1x2 = integrate4(8, |p| p.x1 * p.x2 * model.wigner(p));
            let x1y2 = integrate4(8, |p| p.x1 * p.y2 * model.wigner(p));
            assert!((x1x2 - eta * phi.cos() / 4.0).abs() < 1e-10);
            assert!((x1y2 + eta * phi.sin() / 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn single_mode_reduction_is_phase_independent() {
        let (t, w) = gauss_hermite(20);
        let s = FRAC_1_SQRT_2;
        for &phi in &[0.0, 1.1, PI] {
            let model = AnalyticEbit::balanced(phi, 1.0);
            for &(x1, y1) in &[(0.0, 0.0), (0.4, -0.3), (1.0, 0.2)] {
                let mut acc = 0.0;
                for k in 0..t.len() {
                    for l in 0..t.len() {
                        let p = PhasePoint4::new(x1, y1, t[k] * s, t[l] * s);
                        acc +=
                            w[k] * w[l] * (t[k] * t[k] + t[l] * t[l]).exp() * model.wigner(p) / 2.0;
                    }
                }
                let expected = 0.5 * w0(x1, y1) + 0.5 * w1(x1, y1);
                assert!((acc - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn displaced_parity_matches_large_workspace_sum() {
        // Independent route: D(alpha) Pi D(alpha)^dagger summed over a large
        // Fock workspace, then restricted.
        let alpha = Complex64::new(0.7, -0.4);
        let big = 60;
        let d = displacement_matrix(alpha, big);
        let mut parity = DMatrix::<Complex64>::zeros(big + 1, big + 1);
        for n in 0..=big {
            parity[(n, n)] = Complex64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0);
        }
        let full = &d * parity * d.adjoint();
        let exact = displaced_parity(alpha, 4);
        for m in 0..5 {
            for n in 0..5 {
                assert!((full[(m, n)] - exact[(m, n)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn displacement_of_vacuum_is_coherent() {
        let beta = Complex64::new(0.3, 0.8);
        let d = displacement_matrix(beta, 6);
        let mut fact = 1.0;
        for n in 0..=6 {
            if n > 0 {
                fact *= n as f64;
            }
            let expected = (-0.5 * beta.norm_sqr()).exp() * beta.powu(n as u32) / fact.sqrt();
            assert!((d[(n, 0)] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn wigner_from_rho_examples() {
        let trunc = FockTruncation::default();
        let o = PhasePoint4::origin();
        let vac = DensityMatrix::vacuum(trunc);
        assert!((wigner_from_rho(&vac, o) - 4.0 / (PI * PI)).abs() < 1e-14);
        let one = DensityMatrix::fock(1, 0, trunc);
        assert!((wigner_from_rho(&one, o) - w1(0.0, 0.0) * w0(0.0, 0.0)).abs() < 1e-14);

        let plus = make_ebit(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, trunc).unwrap();
        let rho = heralded_state(&plus, 1.0).unwrap();
        let p = PhasePoint4::new(0.5, 0.0, 0.5, 0.0);
        assert!((wigner_from_rho(&rho, p) - wigner_analytic(p, 0.0, 1.0).unwrap()).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn wigner_from_rho_agrees_with_closed_form(
            t in 0.0f64..=1.0, phi in 0.0f64..6.3, eta in 0.0f64..=1.0,
            x1 in -1.4f64..1.4, y1 in -1.4f64..1.4, x2 in -1.4f64..1.4, y2 in -1.4f64..1.4,
        ) {
            let trunc = FockTruncation::new(2).unwrap();
            let (a, b) = arm_loss_amplitudes(t).unwrap();
            let rho = heralded_state(&make_ebit(a, b, phi, trunc).unwrap(), eta).unwrap();
            let model = AnalyticEbit { alpha: a, beta: b, phi, eta };
            let p = PhasePoint4::new(x1, y1, x2, y2);
            prop_assert!((wigner_from_rho(&rho, p) - model.wigner(p)).abs() < 1e-6);
        }
    }

    fn argmax(grid: &WignerGrid) -> (f64, f64) {
        let (idx, _) = grid
            .values
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            );
        (
            grid.axis1.value(idx / grid.axis2.count),
            grid.axis2.value(idx % grid.axis2.count),
        )
    }

    #[test]
    fn x1x2_section_follows_the_phase() {
        let axis = Axis::default();
        let grid = |phi: f64, section: Section| {
            export_section(
                WignerSource::Analytic(AnalyticEbit::balanced(phi, 1.0)),
                section,
                axis,
                axis,
                (0.0, 0.0),
                phi,
            )
            .unwrap()
        };
        let (a, b) = argmax(&grid(0.0, Section::X1X2));
        assert!(
            (a - b).abs() < 1e-12 && a.abs() > 0.1,
            "correlated diagonal: ({a},{b})"
        );
        let (a, b) = argmax(&grid(PI, Section::X1X2));
        assert!(
            (a + b).abs() < 1e-12 && a.abs() > 0.1,
            "anti-correlated: ({a},{b})"
        );

        // Saddle: at phi = pi/2 the x1x2 section is symmetric under x2 -> -x2,
        // and the anti-correlation appears in (x1, y2).
        let g = grid(PI / 2.0, Section::X1X2);
        let n = axis.count;
        for i in 0..n {
            for j in 0..n {
                assert!((g.get(i, j) - g.get(i, n - 1 - j)).abs() < 1e-14);
            }
        }
        let (a, b) = argmax(&grid(PI / 2.0, Section::X1Y2));
        assert!(
            (a + b).abs() < 1e-12 && a.abs() > 0.1,
            "x1y2 anti-correlated: ({a},{b})"
        );
    }

    #[test]
    fn section_names_round_trip() {
        for s in Section::ALL {
            assert_eq!(s.name().parse::<Section>().unwrap(), s);
        }
        assert!("x2y2".parse::<Section>().is_err());
        assert!(Axis::new(-1.0, 1.0, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let axis = Axis::new(-1.0, 1.0, 3).unwrap();
        let grid = export_section(
            WignerSource::Analytic(AnalyticEbit::balanced(0.0, 0.605)),
            Section::X1Y1,
            axis,
            axis,
            DEFAULT_X1Y1_FIXED,
            0.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# section=x1y1 phi=0 eta=0.605 fixed=-0.1,-0.1");
        assert_eq!(lines.len(), 10);
        assert!(lines[1].starts_with("-1,-1,"));
        assert!(lines[2].starts_with("-1,0,"));
    }

    #[test]
    fn contours_of_single_photon_ring() {
        // W1 vanishes on the circle of radius 1/2: level-0 contour of the x+y+
        // section with (x-,y-) = (0,0).
        let axis = Axis::new(-1.5, 1.5, 61).unwrap();
        let grid = export_section(
            WignerSource::Analytic(AnalyticEbit::balanced(0.0, 1.0)),
            Section::XplusYplus,
            axis,
            axis,
            (0.0, 0.0),
            0.0,
        )
        .unwrap();
        let segs = contour_segments(&grid, 0.0);
        assert!(!segs.is_empty());
        for ((a, b), (c, d)) in segs {
            assert!(((a * a + b * b).sqrt() - 0.5).abs() < 0.01);
            assert!(((c * c + d * d).sqrt() - 0.5).abs() < 0.01);
        }
    }
}
