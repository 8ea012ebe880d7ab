//! Small statistics toolkit for ensemble reductions.

use crate::error::{invalid, Result};

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub stderr: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            std_dev: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std_dev = var.sqrt();
    Summary {
        n,
        mean,
        std_dev,
        stderr: std_dev / (n as f64).sqrt(),
    }
}

/// Standard deviation of a binomial frequency with success probability `p` over `n` trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Fixed-width histogram on `[lo, hi)`; out-of-range values are tallied separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 {
            return Err(invalid("histogram", format!("bad range [{lo}, {hi}) with {bins} bins")));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0.0; bins],
            underflow: 0.0,
            overflow: 0.0,
        })
    }

    pub fn from_samples(lo: f64, hi: f64, bins: usize, xs: &[f64]) -> Result<Self> {
        let mut h = Self::new(lo, hi, bins)?;
        xs.iter().for_each(|&x| h.add(x, 1.0));
        Ok(h)
    }

    pub fn add(&mut self, x: f64, weight: f64) {
        if x < self.lo {
            self.underflow += weight;
        } else if x >= self.hi {
            // the closed right edge belongs to the last bin
            if x == self.hi {
                *self.counts.last_mut().unwrap() += weight;
            } else {
                self.overflow += weight;
            }
        } else {
            let b = ((x - self.lo) / self.bin_width()) as usize;
            let last = self.counts.len() - 1;
            self.counts[b.min(last)] += weight;
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        self.lo + (b as f64 + 0.5) * self.bin_width()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum::<f64>() + self.underflow + self.overflow
    }
}

/// Two-sample Kolmogorov–Smirnov distance between empirical distributions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let wa = vec![1.0; a.len()];
    let wb = vec![1.0; b.len()];
    ks_weighted(a, &wa, b, &wb)
}

/// KS distance between two weighted samples (weights need not be normalized).
pub fn ks_weighted(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let sa: f64 = wa.iter().sum();
    let sb: f64 = wb.iter().sum();
    let mut pts: Vec<(f64, f64)> = a
        .iter()
        .zip(wa)
        .map(|(&x, &w)| (x, w / sa))
        .chain(b.iter().zip(wb).map(|(&x, &w)| (x, -w / sb)))
        .collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_diff = 0.0f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < pts.len() {
        // tied values move both CDFs together
        let x = pts[i].0;
        while i < pts.len() && pts[i].0 == x {
            cdf_diff += pts[i].1;
            i += 1;
        }
        d = d.max(cdf_diff.abs());
    }
    d
}

/// Asymptotic critical KS distance at significance `alpha` for sample sizes `n`, `m`.
pub fn ks_critical(alpha: f64, n: f64, m: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt()
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Weighted mean and variance of `xs` under (unnormalized) `weights`.
pub fn weighted_moments(xs: &[f64], weights: &[f64]) -> (f64, f64) {
    let s: f64 = weights.iter().sum();
    let mean = xs.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / s;
    let var = xs.iter().zip(weights).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / s;
    (mean, var)
}

/// Least-squares decay rate `Γ` of `y ≈ C e^{-Γt}` from a log-linear fit.
/// Non-positive values are skipped.
pub fn fit_exponential_rate(times: &[f64], values: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(invalid("values", "need at least two positive points to fit"));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("times", "all fit times coincide"));
    }
    Ok(-sxy / sxx)
}
