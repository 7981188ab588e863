//! Reparameterized heavy-tailed (RHT) transform.
//!
//! Two steps applied to a parameter vector `w`:
//!
//! 1. subtract an independent Gaussian, `w' = w − g` with `g ~ N(μ, σ_g² I)`;
//! 2. apply `T(x) = sign(x)·|x|^γ·(1 + α·e^{−β|x|})` componentwise.
//!
//! For α = 0 the pushforward of `N(0, s²)` through T has the exact density
//! `p(y) = |y|^{1/γ−1}·exp(−|y|^{2/γ}/(2s²)) / Z`, which [`RhtDensity`]
//! normalizes by quadrature. [`coverage_proxy`] measures how much the output
//! of a small reference network spreads when its weights are drawn from a
//! Gaussian versus the transformed distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chunked, Estimate, Moments};
use crate::tensor_io::{gaussian_sample, rng::standard_normals, ParamVector, RngStream};

const MONOTONE_GRID: usize = 10_000;
/// Range checked when params are built, before any data is seen.
const DEFAULT_CHECK_RANGE: f64 = 1e3;
const MIN_TAIL_SAMPLES: usize = 10_000;
const MIN_TAIL_POINTS: usize = 10;
const MIN_COVERAGE_SAMPLES: usize = 1000;
const COVERAGE_BATCHES: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhtTarget {
    /// Transform the merged increment `θ_merged − θ₀`.
    #[default]
    Delta,
    /// Transform the full merged parameters.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRhtParams")]
pub struct RhtParams {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// σ_g as a multiple of the empirical std of the input.
    pub sigma_g_ratio: f64,
    pub target: RhtTarget,
}

#[derive(Deserialize)]
struct RawRhtParams {
    gamma: f64,
    alpha: f64,
    beta: f64,
    sigma_g_ratio: f64,
    #[serde(default)]
    target: RhtTarget,
}

impl TryFrom<RawRhtParams> for RhtParams {
    type Error = Error;
    fn try_from(r: RawRhtParams) -> Result<Self> {
        RhtParams::new(r.gamma, r.alpha, r.beta, r.sigma_g_ratio, r.target)
    }
}

impl Default for RhtParams {
    fn default() -> Self {
        Self { gamma: 0.5, alpha: 0.5, beta: 1.0, sigma_g_ratio: 0.1, target: RhtTarget::Delta }
    }
}

impl RhtParams {
    pub fn new(gamma: f64, alpha: f64, beta: f64, sigma_g_ratio: f64, target: RhtTarget) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::config(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::config(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::config(format!("beta must be > 0, got {beta}")));
        }
        if !(sigma_g_ratio >= 0.0) || !sigma_g_ratio.is_finite() {
            return Err(Error::config(format!("sigma_g_ratio must be >= 0, got {sigma_g_ratio}")));
        }
        let p = Self { gamma, alpha, beta, sigma_g_ratio, target };
        p.check_monotone(DEFAULT_CHECK_RANGE)?;
        Ok(p)
    }

    /// Pure power map `sign(x)|x|^γ` with no Gaussian subtraction.
    pub fn pure_power(gamma: f64) -> Result<Self> {
        Self::new(gamma, 0.0, 1.0, 0.0, RhtTarget::Delta)
    }

    /// Rejects parameters for which T is not strictly increasing on
    /// `[max_abs·1e-8, max_abs]` (10⁴ log-spaced points); T is odd, so this
    /// covers `[−max_abs, max_abs]`.
    pub fn check_monotone(&self, max_abs: f64) -> Result<()> {
        if !(max_abs > 0.0) || !max_abs.is_finite() {
            return Ok(());
        }
        let lo = (max_abs * 1e-8).ln();
        let hi = max_abs.ln();
        let step = (hi - lo) / (MONOTONE_GRID - 1) as f64;
        let mut prev = 0.0;
        for i in 0..MONOTONE_GRID {
            let x = (lo + step * i as f64).exp();
            let y = rht_map(x, self);
            if !(y > prev) {
                return Err(Error::config(format!(
                    "T is not strictly increasing near x = {x:e} (gamma {}, alpha {}, beta {})",
                    self.gamma, self.alpha, self.beta
                )));
            }
            prev = y;
        }
        Ok(())
    }
}

/// `T(x) = sign(x)·|x|^γ·(1 + α·e^{−β|x|})`.
pub fn rht_map(x: f64, p: &RhtParams) -> f64 {
    let a = x.abs();
    let y = a.powf(p.gamma) * (1.0 + p.alpha * (-p.beta * a).exp());
    if x < 0.0 {
        -y
    } else {
        y
    }
}

/// Inverse of [`rht_map`] by bisection on the bracket
/// `[(|y|/(1+α))^{1/γ}, |y|^{1/γ}]`, run until the bracket cannot shrink.
pub fn rht_inverse(y: f64, p: &RhtParams) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let a = y.abs();
    let inv_gamma = 1.0 / p.gamma;
    let mut lo = (a / (1.0 + p.alpha)).powf(inv_gamma);
    let mut hi = a.powf(inv_gamma);
    if !hi.is_finite() {
        hi = f64::MAX;
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    for _ in 0..2000 {
        let mid = lo + (hi - lo) * 0.5;
        if mid <= lo || mid >= hi {
            break;
        }
        if rht_map(mid, p) < a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = if (rht_map(lo, p) - a).abs() <= (rht_map(hi, p) - a).abs() { lo } else { hi };
    x.copysign(y)
}

/// `w − g` with `g ~ N(mu, sigma_g² I)` drawn from `stream`.
pub fn gaussian_difference(w: &ParamVector, mu: f64, sigma_g: f64, stream: RngStream) -> Result<ParamVector> {
    if !(sigma_g >= 0.0) || !sigma_g.is_finite() {
        return Err(Error::arg(format!("sigma_g must be >= 0, got {sigma_g}")));
    }
    let g = gaussian_sample(stream, w.dim(), mu, sigma_g)?;
    w.sub(&g)
}

/// Full transform: estimate μ and σ from `w`, subtract `N(μ, (ratio·σ)²)`, apply T.
pub fn apply_rht(w: &ParamVector, p: &RhtParams, stream: RngStream) -> Result<ParamVector> {
    let mu = w.mean();
    let sigma = w.variance().sqrt();
    if !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::numeric(format!("input mean {mu} or spread {sigma} is not finite")));
    }
    let diff = gaussian_difference(w, mu, p.sigma_g_ratio * sigma, stream)?;
    let max_abs = diff.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    p.check_monotone(max_abs)?;
    let out: Vec<f64> = diff.iter().map(|&x| rht_map(x, p)).collect();
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("RHT produced {} at index {i}", out[i])));
    }
    Ok(ParamVector::from_raw(out))
}

/// Density of `T(X)` for `X ~ N(0, s²)` and the pure power map (α = 0).
#[derive(Clone, Debug)]
pub struct RhtDensity {
    gamma: f64,
    sigma2_total: f64,
    norm: f64,
    /// Upper end of the integration range (the density beyond is < e⁻⁷²).
    y_max: f64,
    /// Cumulative mass of the unnormalized kernel on `[0, y_max]`, evenly spaced.
    cumulative: Vec<f64>,
}

const CDF_TABLE: usize = 8192;
const QUAD_TOL: f64 = 1e-14;
const QUAD_DEPTH: u32 = 60;

impl RhtDensity {
    pub fn new(p: &RhtParams, sigma2_total: f64) -> Result<Self> {
        if p.alpha != 0.0 {
            return Err(Error::arg(format!(
                "closed-form density needs alpha = 0 (pure power map), got alpha = {}",
                p.alpha
            )));
        }
        Self::for_gamma(p.gamma, sigma2_total)
    }

    /// Like [`RhtDensity::new`] but allows γ = 1 (the Gaussian itself).
    pub fn for_gamma(gamma: f64, sigma2_total: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::arg(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if !(sigma2_total > 0.0) || !sigma2_total.is_finite() {
            return Err(Error::arg(format!("sigma2_total must be > 0, got {sigma2_total}")));
        }
        let y_max = (12.0 * sigma2_total.sqrt()).powf(gamma);
        let kernel = |y: f64| kernel(y, gamma, sigma2_total);
        let h = y_max / CDF_TABLE as f64;
        let mut cumulative = Vec::with_capacity(CDF_TABLE + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for i in 0..CDF_TABLE {
            acc += adaptive_simpson(&kernel, i as f64 * h, (i + 1) as f64 * h, QUAD_TOL / CDF_TABLE as f64)?;
            cumulative.push(acc);
        }
        Ok(Self { gamma, sigma2_total, norm: 2.0 * acc, y_max, cumulative })
    }

    /// Quadrature value of `∫ kernel` over ℝ.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn pdf(&self, y: f64) -> f64 {
        kernel(y.abs(), self.gamma, self.sigma2_total) / self.norm
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let a = y.abs();
        let half = if a >= self.y_max {
            0.5
        } else {
            let pos = a / self.y_max * CDF_TABLE as f64;
            let i = (pos.floor() as usize).min(CDF_TABLE - 1);
            let frac = pos - i as f64;
            let c = self.cumulative[i] + frac * (self.cumulative[i + 1] - self.cumulative[i]);
            c / self.norm
        };
        if y < 0.0 {
            0.5 - half
        } else {
            0.5 + half
        }
    }
}

fn kernel(y: f64, gamma: f64, s2: f64) -> f64 {
    let a = y.abs();
    let x = a.powf(1.0 / gamma);
    a.powf(1.0 / gamma - 1.0) * (-x * x / (2.0 * s2)).exp()
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, QUAD_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    // the kernel has an integrable cusp at 0 for γ > 1/2; cells that narrow
    // carry no measurable mass
    if err.abs() <= 15.0 * tol || b - a < 1e-15 {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(Error::numeric(format!("quadrature did not converge on [{a:e}, {b:e}]")));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// Convenience wrapper: normalized density at `y` (builds the table each call).
pub fn rht_density(y: f64, sigma2_total: f64, p: &RhtParams) -> Result<f64> {
    Ok(RhtDensity::new(p, sigma2_total)?.pdf(y))
}

/// Kolmogorov–Smirnov distance between `samples` and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.par_sort_unstable_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Total variation between a 512-bin histogram of the central 99.9% of
/// `samples` and the bin masses implied by `cdf`.
pub fn histogram_distance(samples: &[f64], cdf: impl Fn(f64) -> f64, bins: usize) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.par_sort_unstable_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let lo = sorted[(n as f64 * 0.0005) as usize];
    let hi = sorted[((n as f64 * 0.9995) as usize).min(n - 1)];
    if !(hi > lo) {
        return 0.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &sorted {
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let (c_lo, c_hi) = (cdf(lo), cdf(hi));
    let mut tv = 0.0;
    for (b, &c) in counts.iter().enumerate() {
        let a = lo + b as f64 * width;
        let mass = (cdf(a + width) - cdf(a)) / (c_hi - c_lo);
        let total_in: usize = counts.iter().sum();
        tv += (c as f64 / total_in as f64 - mass).abs();
    }
    0.5 * tv
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub excess_kurtosis: f64,
    /// Hill estimate of the tail exponent κ.
    pub hill_exponent: Estimate,
    /// Present when a reference CDF was supplied.
    pub ks_distance: Option<f64>,
    pub samples: usize,
    pub tail_count: usize,
}

/// Excess kurtosis, Hill tail exponent over the largest `tail_fraction` of
/// `|x|`, and (optionally) the KS distance to a reference CDF.
pub fn tail_diagnostics(
    samples: &[f64],
    tail_fraction: f64,
    reference_cdf: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<TailReport> {
    let n = samples.len();
    if n < MIN_TAIL_SAMPLES {
        return Err(Error::arg(format!("need at least {MIN_TAIL_SAMPLES} samples, got {n}")));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 0.2) {
        return Err(Error::arg(format!("tail_fraction must lie in (0, 0.2], got {tail_fraction}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let (m2, m4) = samples.iter().fold((0.0, 0.0), |(a, b), x| {
        let d2 = (x - mean) * (x - mean);
        (a + d2, b + d2 * d2)
    });
    let (m2, m4) = (m2 / n as f64, m4 / n as f64);
    let excess_kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };

    let k = (tail_fraction * n as f64).floor() as usize;
    let mut mags: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    mags.par_sort_unstable_by(|a, b| b.total_cmp(a));
    let threshold = mags[k];
    if k < MIN_TAIL_POINTS || !(threshold > 0.0) {
        return Err(Error::arg(format!(
            "too few tail points: {k} order statistics above threshold {threshold}"
        )));
    }
    let h = mags[..k].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    if !(h > 0.0) {
        return Err(Error::numeric("Hill statistic is not positive (tied tail)"));
    }
    let kappa = 1.0 / h;
    let hill_exponent = Estimate { mean: kappa, stderr: kappa / (k as f64).sqrt() };
    let ks = reference_cdf.map(|f| ks_distance(samples, f));
    Ok(TailReport { excess_kurtosis, hill_exponent, ks_distance: ks, samples: n, tail_count: k })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Softsign,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softsign => x / (1.0 + x.abs()),
        }
    }
}

/// Small fully connected net `ℝ² → ℝ` evaluated on a fixed input grid.
///
/// Parameters are laid out layer by layer: the `out × in` weight matrix
/// (row-major) followed by the `out` biases. Hidden layers use the
/// activation; the output layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyNetSpec {
    widths: Vec<usize>,
    activation: Activation,
    grid: Vec<[f64; 2]>,
}

impl Default for TinyNetSpec {
    fn default() -> Self {
        Self::new(vec![2, 8, 1], Activation::Tanh, unit_square_grid(8)).expect("valid default")
    }
}

/// `side × side` cell centres of the unit square.
pub fn unit_square_grid(side: usize) -> Vec<[f64; 2]> {
    let mut g = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            g.push([(i as f64 + 0.5) / side as f64, (j as f64 + 0.5) / side as f64]);
        }
    }
    g
}

impl TinyNetSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, grid: Vec<[f64; 2]>) -> Result<Self> {
        if widths.len() < 2 || widths[0] != 2 || *widths.last().unwrap() != 1 || widths.contains(&0) {
            return Err(Error::config(format!("widths must run 2 → … → 1 with no zero layer, got {widths:?}")));
        }
        if grid.is_empty() {
            return Err(Error::config("input grid is empty"));
        }
        Ok(Self { widths, activation, grid })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn grid(&self) -> &[[f64; 2]] {
        &self.grid
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn forward(&self, params: &[f64], x: [f64; 2]) -> f64 {
        debug_assert_eq!(params.len(), self.param_count());
        let mut act = x.to_vec();
        let mut off = 0;
        let layers = self.widths.len() - 1;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            act = (0..n_out)
                .map(|o| {
                    let z = bias[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(&act).map(|(a, b)| a * b).sum::<f64>();
                    if l + 1 < layers {
                        self.activation.apply(z)
                    } else {
                        z
                    }
                })
                .collect();
        }
        act[0]
    }
}

/// Distribution the coverage experiment draws network weights from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ParamSampler {
    Gaussian { std: f64 },
    /// `T(w − g)` with `w ~ N(0, std²)` and `g ~ N(0, (ratio·std)²)`. The
    /// source spread is known here, so it replaces the per-vector estimate
    /// that [`apply_rht`] would make.
    Rht { std: f64, params: RhtParams },
}

impl ParamSampler {
    fn draw(&self, rng: &mut crate::tensor_io::StreamRng, n: usize) -> Vec<f64> {
        match self {
            ParamSampler::Gaussian { std } => standard_normals(rng, n).into_iter().map(|z| std * z).collect(),
            ParamSampler::Rht { std, params } => {
                let w = standard_normals(rng, n);
                let g = standard_normals(rng, n);
                let sg = params.sigma_g_ratio * std;
                w.iter().zip(&g).map(|(a, b)| rht_map(std * a - sg * b, params)).collect()
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ParamSampler::Gaussian { .. } => "gaussian",
            ParamSampler::Rht { .. } => "rht",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub sampler: String,
    /// Grid-averaged variance of the network output across weight draws,
    /// with a batch-means standard error.
    pub proxy: Estimate,
    /// Grid-averaged output range (max − min) across weight draws.
    pub mean_range: f64,
    pub n_samples: usize,
    pub grid_points: usize,
}

/// Coverage proxy: output dispersion of `net` over its input grid when the
/// weights are drawn from `sampler`.
pub fn coverage_proxy(net: &TinyNetSpec, sampler: &ParamSampler, n_samples: usize, stream: RngStream) -> Result<CoverageReport> {
    if n_samples < MIN_COVERAGE_SAMPLES {
        return Err(Error::arg(format!("need at least {MIN_COVERAGE_SAMPLES} samples, got {n_samples}")));
    }
    match sampler {
        ParamSampler::Gaussian { std } | ParamSampler::Rht { std, .. } if !(*std >= 0.0) || !std.is_finite() => {
            return Err(Error::arg(format!("sampler std must be >= 0, got {std}")));
        }
        _ => {}
    }
    let p = net.param_count();
    let outputs: Vec<Vec<f64>> = chunked(stream, n_samples, |rng, count| {
        let mut rows = Vec::with_capacity(count * net.grid.len());
        for _ in 0..count {
            let w = sampler.draw(rng, p);
            rows.extend(net.grid.iter().map(|&x| net.forward(&w, x)));
        }
        rows
    });
    let flat: Vec<f64> = outputs.into_iter().flatten().collect();
    if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("network output non-finite at draw {}", i / net.grid.len())));
    }
    let rows: Vec<&[f64]> = flat.chunks(net.grid.len()).collect();
    let (proxy, mean_range) = dispersion(&rows);
    let batch = n_samples / COVERAGE_BATCHES;
    let mut batches = Moments::default();
    for b in 0..COVERAGE_BATCHES {
        batches.push(dispersion(&rows[b * batch..(b + 1) * batch]).0);
    }
    Ok(CoverageReport {
        sampler: sampler.tag().to_string(),
        proxy: Estimate { mean: proxy, stderr: batches.estimate().stderr },
        mean_range,
        n_samples,
        grid_points: net.grid.len(),
    })
}

/// (mean over columns of the across-row variance, mean over columns of max − min).
pub(crate) fn dispersion(rows: &[&[f64]]) -> (f64, f64) {
    let cols = rows[0].len();
    let mut var_sum = 0.0;
    let mut range_sum = 0.0;
    for c in 0..cols {
        let mut m = Moments::default();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in rows {
            let v = r[c];
            m.push(v);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        var_sum += m.variance();
        range_sum += hi - lo;
    }
    (var_sum / cols as f64, range_sum / cols as f64)
}
