//! Special functions and quadrature rules used across the crate.

use std::f64::consts::PI;

/// Dawson's integral `D(x) = exp(-x^2) * int_0^x exp(t^2) dt`.
///
/// Rybicki's sampling-theorem expansion with step `h = 0.2`; the discretisation
/// error is below `exp(-(pi / 2h)^2)`, far under double precision. Small
/// arguments use the Maclaurin series.
pub fn dawson(x: f64) -> f64 {
    const H: f64 = 0.2;
    const TERMS: usize = 40;
    let ax = x.abs();
    if ax < 0.2 {
        // D(x) = sum_k (-1)^k 2^k x^(2k+1) / (2k+1)!!
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for k in 1..12 {
            term *= -2.0 * x2 / (2 * k + 1) as f64;
            sum += term;
        }
        return sum;
    }
    let n0 = 2.0 * (0.5 * ax / H).round();
    let xp = ax - n0 * H;
    let mut e1 = (2.0 * xp * H).exp();
    let e2 = e1 * e1;
    let mut d1 = n0 + 1.0;
    let mut d2 = d1 - 2.0;
    let mut sum = 0.0;
    for i in 0..TERMS {
        let c = (-((2 * i + 1) as f64 * H).powi(2)).exp();
        sum += c * (e1 / d1 + 1.0 / (d2 * e1));
        d1 += 2.0;
        d2 -= 2.0;
        e1 *= e2;
    }
    x.signum() * sum * (-xp * xp).exp() / PI.sqrt()
}

/// Gauss-Hermite rule for weight `exp(-x^2)`: `(nodes, weights)` in ascending order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        // Initial guesses for the largest roots first.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // Orthonormal Hermite recurrence.
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let xm = 0.5 * (b + a);
    let xl = 0.5 * (b - a);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = xm - xl * z;
        nodes[n - 1 - i] = xm + xl * z;
        weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference: direct integration of exp(t^2 - x^2) with a fine composite
    /// Gauss-Legendre rule.
    fn dawson_by_quadrature(x: f64) -> f64 {
        let panels = 200;
        let mut sum = 0.0;
        for p in 0..panels {
            let a = x * p as f64 / panels as f64;
            let b = x * (p + 1) as f64 / panels as f64;
            let (t, w) = gauss_legendre(10, a, b);
            sum += t
                .iter()
                .zip(&w)
                .map(|(t, w)| w * (t * t - x * x).exp())
                .sum::<f64>();
        }
        sum
    }

    #[test]
    fn dawson_matches_direct_integration() {
        for &x in &[
            -7.3, -2.0, -0.15, 0.0, 0.05, 0.19, 0.21, 0.5, 0.9241, 1.5, 3.0, 6.0, 11.0,
        ] {
            let expected = dawson_by_quadrature(x);
            assert!(
                (dawson(x) - expected).abs() < 1e-13,
                "x={x}: {} vs {expected}",
                dawson(x)
            );
        }
        // Maximum of D at x = 0.9241388730, value 0.5410442246.
        assert!((dawson(0.924_138_873_0) - 0.541_044_224_6).abs() < 1e-9);
    }

    #[test]
    fn hermite_rule_integrates_moments() {
        let (x, w) = gauss_hermite(40);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m0 - PI.sqrt()).abs() < 1e-13);
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-13);
        // int x^8 e^{-x^2} = 105/16 sqrt(pi)
        assert!((m8 - 105.0 / 16.0 * PI.sqrt()).abs() < 1e-11);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5, -1.0, 2.0);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((integral - (2f64.powi(10) - 1.0) / 10.0).abs() < 1e-11);
    }
}
