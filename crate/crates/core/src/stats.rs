//! Monte Carlo bookkeeping: estimates with standard errors, deterministic
//! chunked parallel reduction, and the two-sample Kolmogorov–Smirnov test.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Paths per work unit. Fixed so that reductions sum in the same order on
/// any number of threads.
pub const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Running means and centred second moments for a vector of estimators,
/// merged pairwise so that constant samples give exactly zero spread.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    pub n: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(width: usize) -> Self {
        Self { n: 0, mean: vec![0.0; width], m2: vec![0.0; width] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, q), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *q += delta * (v - *m);
        }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        if other.n == 0 {
            return self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.n += other.n;
        self
    }

    pub fn estimate(&self, i: usize) -> McEstimate {
        let n = self.n as f64;
        let var = if self.n > 1 { self.m2[i] / (n - 1.0) } else { 0.0 };
        McEstimate { mean: self.mean[i], se: (var / n).sqrt(), n: self.n }
    }

    pub fn estimates(&self) -> Vec<McEstimate> {
        (0..self.mean.len()).map(|i| self.estimate(i)).collect()
    }
}

/// Runs `f` on fixed-size index chunks in parallel and returns the chunk
/// results in index order.
pub fn par_chunks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunks: Vec<Range<usize>> = (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect();
    chunks.into_par_iter().map(f).collect()
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> McEstimate {
    let mut acc = MomentAccumulator::new(1);
    for &x in xs {
        acc.push(&[x]);
    }
    acc.estimate(0)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_of_known_sample() {
        let e = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[2.0, 2.0]).se, 0.0);
    }

    #[test]
    fn ks_extremes() {
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        // critical value at 1% is the classic 1.628 √((n+m)/nm)
        assert!((ks_critical(0.01, 100, 100) - 1.6276 * 0.02f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn chunked_results_keep_order() {
        let v = par_chunks(3000, |r| r.start);
        assert_eq!(v, vec![0, 1024, 2048]);
    }
}
