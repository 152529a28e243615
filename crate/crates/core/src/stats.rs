//! Goodness-of-fit statistics for the sampler checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::special::gauss_legendre;

/// Cells with a smaller expected count are pooled before the chi-square test.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Square 2-D histogram with `bins x bins` cells on `[lo, hi]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2d {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub counts: Vec<u64>,
    /// Events outside the square.
    pub outside: u64,
}

impl Histogram2d {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            bins,
            counts: vec![0; bins * bins],
            outside: 0,
        }
    }

    fn cell(&self, v: f64) -> Option<usize> {
        if !(self.lo..self.hi).contains(&v) {
            return None;
        }
        let i = ((v - self.lo) / (self.hi - self.lo) * self.bins as f64) as usize;
        Some(i.min(self.bins - 1))
    }

    pub fn add(&mut self, a: f64, b: f64) {
        match (self.cell(a), self.cell(b)) {
            (Some(i), Some(j)) => self.counts[i * self.bins + j] += 1,
            _ => self.outside += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / self.bins as f64
    }

    /// Probability of every cell under `pdf`, by a 6x6 Gauss-Legendre rule per cell.
    pub fn cell_probabilities(&self, pdf: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut probs = vec![0.0; self.bins * self.bins];
        for i in 0..self.bins {
            let (xa, wa) = gauss_legendre(6, self.edge(i), self.edge(i + 1));
            for j in 0..self.bins {
                let (xb, wb) = gauss_legendre(6, self.edge(j), self.edge(j + 1));
                let mut acc = 0.0;
                for (a, wa) in xa.iter().zip(&wa) {
                    for (b, wb) in xb.iter().zip(&wb) {
                        acc += wa * wb * pdf(*a, *b);
                    }
                }
                probs[i * self.bins + j] = acc;
            }
        }
        probs
    }

    /// Pearson chi-square against `pdf`. The region outside the square is one
    /// extra cell; cells with expected count below [`MIN_EXPECTED`] are pooled.
    pub fn chi_square(&self, pdf: impl Fn(f64, f64) -> f64) -> Result<ChiSquareOutcome> {
        let n = self.total() as f64;
        if n == 0.0 {
            return Err(Error::EmptySamples);
        }
        let probs = self.cell_probabilities(pdf);
        let inside: f64 = probs.iter().sum();
        let mut cells: Vec<(f64, f64)> = probs
            .iter()
            .zip(&self.counts)
            .map(|(p, &c)| (n * p, c as f64))
            .collect();
        cells.push((n * (1.0 - inside).max(0.0), self.outside as f64));

        let mut pooled = (0.0, 0.0);
        let mut statistic = 0.0;
        let mut k = 0usize;
        for (e, o) in cells {
            if e < MIN_EXPECTED {
                pooled.0 += e;
                pooled.1 += o;
            } else {
                statistic += (o - e).powi(2) / e;
                k += 1;
            }
        }
        if pooled.0 > 0.0 {
            statistic += (pooled.1 - pooled.0).powi(2) / pooled.0;
            k += 1;
        }
        if k < 2 {
            return Err(Error::invalid("histogram", "fewer than two usable cells"));
        }
        let dof = k - 1;
        let p_value = ChiSquared::new(dof as f64)
            .map_err(|e| Error::invalid("histogram", e.to_string()))?
            .sf(statistic);
        Ok(ChiSquareOutcome {
            statistic,
            dof,
            p_value,
        })
    }
}

/// Chi-square test that two histograms with equal binning come from the same
/// distribution. Cells with fewer than `2 * MIN_EXPECTED` combined events are pooled.
pub fn two_sample_chi_square(a: &Histogram2d, b: &Histogram2d) -> Result<ChiSquareOutcome> {
    if a.bins != b.bins || a.lo != b.lo || a.hi != b.hi {
        return Err(Error::invalid("histogram", "binning differs"));
    }
    let (na, nb) = (a.total() as f64, b.total() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::EmptySamples);
    }
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let cells = a
        .counts
        .iter()
        .zip(&b.counts)
        .chain(std::iter::once((&a.outside, &b.outside)));
    let mut statistic = 0.0;
    let mut used = 0usize;
    let mut pooled = (0.0, 0.0);
    let term = |x: f64, y: f64| (ka * x - kb * y).powi(2) / (x + y);
    for (&x, &y) in cells {
        let (x, y) = (x as f64, y as f64);
        if x + y < 2.0 * MIN_EXPECTED {
            pooled.0 += x;
            pooled.1 += y;
        } else {
            statistic += term(x, y);
            used += 1;
        }
    }
    if pooled.0 + pooled.1 > 0.0 {
        statistic += term(pooled.0, pooled.1);
        used += 1;
    }
    if used < 2 {
        return Err(Error::invalid("histogram", "fewer than two usable cells"));
    }
    let dof = used - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map_err(|e| Error::invalid("histogram", e.to_string()))?
        .sf(statistic);
    Ok(ChiSquareOutcome {
        statistic,
        dof,
        p_value,
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    ks_distance_sorted(&a, &b)
}

/// [`ks_distance`] for inputs that are already sorted ascending.
pub fn ks_distance_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at the 5% level.
pub fn ks_critical_5pct(n: usize, m: usize) -> f64 {
    1.358 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Sample mean and unbiased variance.
pub fn mean_variance(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn gaussian_histogram_fits() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut h = Histogram2d::new(-3.0, 3.0, 20);
        for _ in 0..50_000 {
            h.add(normal.sample(&mut rng), normal.sample(&mut rng));
        }
        let pdf = |a: f64, b: f64| (-(a * a + b * b) / 2.0).exp() / (2.0 * std::f64::consts::PI);
        let fit = h.chi_square(pdf).unwrap();
        assert!(fit.p_value > 1e-3, "{fit:?}");
        // a wrong width is rejected
        let wide = |a: f64, b: f64| (-(a * a + b * b) / 2.4).exp() / (2.4 * std::f64::consts::PI);
        assert!(h.chi_square(wide).unwrap().p_value < 1e-10);
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_distance(&[1.0, 3.0], &[2.0, 4.0]) - 0.5).abs() < 1e-15);
        assert!((ks_critical_5pct(10_000, 10_000) - 0.019_205).abs() < 1e-6);
    }
}
