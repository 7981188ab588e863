//! Monte-Carlo plumbing shared by the estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::tensor_io::{RngStream, StreamRng};

/// Samples per substream chunk. Fixed so results never depend on thread count.
pub const MC_CHUNK: usize = 4096;

/// Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.stderr
    }
}

/// Running count/mean/M2 (Welford), mergeable with Chan's formula.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate { mean: self.mean, stderr: (self.variance() / self.n.max(1) as f64).sqrt() }
    }
}

/// Splits `total` samples into fixed-size chunks, runs `f(rng, count)` for
/// each chunk on its own substream (in parallel) and returns the partial
/// results in chunk order.
pub fn chunked<T, F>(stream: RngStream, total: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync,
{
    let chunks = total.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(total - c * MC_CHUNK);
            let mut rng = stream.substream(c as u64).rng();
            f(&mut rng, count)
        })
        .collect()
}

/// Mean and standard error of `sample(rng)` over `total` draws.
pub fn mc_mean<F>(stream: RngStream, total: usize, sample: F) -> Estimate
where
    F: Fn(&mut StreamRng) -> f64 + Sync,
{
    let parts = chunked(stream, total, |rng, count| {
        let mut m = Moments::default();
        for _ in 0..count {
            m.push(sample(rng));
        }
        m
    });
    let mut all = Moments::default();
    for p in &parts {
        all.merge(p);
    }
    all.estimate()
}
