//! Small statistics toolkit: least squares lines, bootstrap resampling,
//! and compensated summation for order-stable reductions.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Ordinary least squares fit `y ≈ a + b·x`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert!(x.len() == y.len() && x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    LineFit { intercept, slope, r_squared }
}

/// Mean and standard error of a sample.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Bootstrap standard error of `stat` over per-trajectory scalars.
/// Deterministic given `rng`; 200 resamples by convention.
pub fn bootstrap_se<R, F>(samples: &[f64], resamples: usize, rng: &mut R, stat: F) -> f64
where
    R: Rng,
    F: Fn(&[f64]) -> f64,
{
    let n = samples.len();
    let mut stats = Vec::with_capacity(resamples);
    let mut draw = vec![0.0f64; n];
    for _ in 0..resamples {
        for slot in draw.iter_mut() {
            *slot = samples[rng.gen_range(0..n)];
        }
        stats.push(stat(&draw));
    }
    let m = stats.iter().sum::<f64>() / resamples as f64;
    (stats.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (resamples as f64 - 1.0)).sqrt()
}

/// Bootstrap SE of a statistic of trajectory-indexed vectors (resampling
/// whole trajectories, the statistic receiving the resampled index list).
pub fn bootstrap_se_indexed<R, F>(n: usize, resamples: usize, rng: &mut R, stat: F) -> f64
where
    R: Rng,
    F: Fn(&[usize]) -> f64,
{
    let mut stats = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        stats.push(stat(&idx));
    }
    let m = stats.iter().sum::<f64>() / resamples as f64;
    (stats.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (resamples as f64 - 1.0)).sqrt()
}
