//! Synthetic expert generators, end-to-end experiment runners, report
//! emission and a small SVG plotter.
//!
//! Experts are zero-mean deltas `e_i` around a task optimum θ*: each
//! coordinate has variance σ² and every pair of experts has correlation ρ.
//! Merging the first n of them uniformly leaves the error `ē_n`, whose
//! per-coordinate variance follows `σ²(ρ + (1−ρ)/n)`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    self, kinematics_sweep, statdim_cone_mc, CircularCone, KinematicsTarget, QuadraticTask,
};
use crate::linalg;
use crate::merge::{
    self, merge_linear, merged_variance_equicorrelated, optimize_weights, termination_check,
    TerminationCriterion, TerminationPolicy,
};
use crate::rht::{
    apply_rht, coverage_proxy, tail_diagnostics, CoverageReport, ParamSampler, RhtParams, RhtTarget,
    TailReport, TinyNetSpec,
};
use crate::stats::Estimate;
use crate::subspace::{components_for_threshold, pca_explained, principal_angles, sv_tail_stats, BandHistogram, SpectrumReport, SvSource};
use crate::tensor_io::{rng::standard_normals, DenseMatrix, LowRankDelta, ParamVector, RngStream};

pub const SCHEMA_VERSION: u32 = 1;

const STREAM_EXPERTS: u64 = 1;
const STREAM_TASK: u64 = 2;
const STREAM_WEIGHTS: u64 = 3;
const STREAM_RHT: u64 = 4;
const STREAM_COVERAGE: u64 = 5;
const STREAM_KINEMATICS: u64 = 6;
const STREAM_STATDIM: u64 = 7;
const STREAM_WIDTH: u64 = 8;

/// Largest dimension for which `basis: auto` draws a dense Haar basis.
pub const AUTO_HAAR_MAX_DIM: usize = 2048;
const MIN_KINEMATICS_TRIALS: usize = 200;
const OPTIMIZE_ITERS: usize = 200;

pub const LOSS_NOTE: &str = "expected_loss = 0.5 * trace(H) * per-coordinate merged variance; exact when the merge error is isotropic with that variance";
pub const RHT_SCOPE_NOTE: &str = "synthetic quadratic tasks and a 2-8-1 reference network only: the coverage proxy shows the mechanism, not benchmark-level gains";
pub const BAND_NOTE: &str = "bands are [exp(-(k+1)), exp(-k)); a value equal to exp(-k) falls in band k-1";
pub const PCA_NOTE: &str = "PCA runs on flattened materialized expert deltas, one row per expert";

/// Hessian eigenvalue profile. Eigenvalues are always stored ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum SpectrumSpec {
    /// Every eigenvalue equals `value`.
    Uniform { value: f64 },
    /// `λ_i = min·cond^{i/(D−1)}`, so `λ_max/λ_min = cond`.
    Geometric { condition_number: f64, #[serde(default = "one")] min: f64 },
}

fn one() -> f64 {
    1.0
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        SpectrumSpec::Uniform { value: 1.0 }
    }
}

impl SpectrumSpec {
    pub fn eigenvalues(&self, dim: usize) -> Vec<f64> {
        match *self {
            SpectrumSpec::Uniform { value } => vec![value; dim],
            SpectrumSpec::Geometric { condition_number, min } => {
                if dim == 1 {
                    return vec![min];
                }
                let last = (dim - 1) as f64;
                (0..dim)
                    .map(|i| if i + 1 == dim { min * condition_number } else { min * condition_number.powf(i as f64 / last) })
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SpectrumSpec::Uniform { value } if !(value > 0.0) || !value.is_finite() => {
                Err(Error::config(format!("uniform spectrum value must be > 0, got {value}")))
            }
            SpectrumSpec::Geometric { condition_number, min }
                if !(condition_number >= 1.0) || !condition_number.is_finite() || !(min > 0.0) || !min.is_finite() =>
            {
                Err(Error::config(format!(
                    "geometric spectrum needs condition_number >= 1 and min > 0, got {condition_number} and {min}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// Haar basis up to [`AUTO_HAAR_MAX_DIM`], coordinate basis above.
    #[default]
    Auto,
    Haar,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum KinematicsTargetSpec {
    /// Circular cone around e₁.
    Cone { half_angle_deg: f64 },
    /// span(e₁, …, e_dim).
    Subspace { dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    pub dimension: usize,
    pub target: KinematicsTargetSpec,
    /// Subspace dimensions to sweep; all of `0..=dimension` when absent.
    pub ks: Option<Vec<usize>>,
    pub trials: usize,
    pub statdim_samples: usize,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            dimension: 60,
            target: KinematicsTargetSpec::Cone { half_angle_deg: 30.0 },
            ks: None,
            trials: 500,
            statdim_samples: 100_000,
        }
    }
}

impl KinematicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::config("kinematics dimension must be >= 2"));
        }
        if self.trials < MIN_KINEMATICS_TRIALS {
            return Err(Error::config(format!("kinematics needs >= {MIN_KINEMATICS_TRIALS} trials, got {}", self.trials)));
        }
        if self.statdim_samples < 1000 {
            return Err(Error::config("statdim_samples must be >= 1000"));
        }
        match self.target {
            KinematicsTargetSpec::Cone { half_angle_deg } if !(half_angle_deg > 0.0 && half_angle_deg < 90.0) => {
                return Err(Error::config(format!("half_angle_deg must lie in (0, 90), got {half_angle_deg}")))
            }
            KinematicsTargetSpec::Subspace { dim } if dim > self.dimension => {
                return Err(Error::config(format!("target subspace dim {dim} exceeds {}", self.dimension)))
            }
            _ => {}
        }
        if let Some(ks) = &self.ks {
            if let Some(k) = ks.iter().find(|&&k| k > self.dimension) {
                return Err(Error::config(format!("sweep value k = {k} exceeds {}", self.dimension)));
            }
        }
        Ok(())
    }

    pub fn sweep(&self) -> Vec<usize> {
        self.ks.clone().unwrap_or_else(|| (0..=self.dimension).collect())
    }
}

/// Every knob of every experiment. Missing JSON fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Parameter dimension D.
    pub dimension: usize,
    /// Expert count N.
    pub experts: usize,
    /// Adapter rank r: each expert spans r new directions.
    pub rank: usize,
    pub sigma2: f64,
    pub rho: f64,
    /// Termination margin Δ.
    pub delta: f64,
    /// Sublevel tolerance ε.
    pub epsilon: f64,
    pub spectrum: SpectrumSpec,
    pub basis: BasisKind,
    pub rht: RhtParams,
    /// Also merge with weights found by projected gradient descent.
    pub optimize_weights: bool,
    pub center_pca: bool,
    pub coverage_samples: usize,
    pub tail_fraction: f64,
    pub kinematics: KinematicsConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dimension: 10_000,
            experts: 10,
            rank: 8,
            sigma2: 1.0,
            rho: 0.3,
            delta: 0.05,
            epsilon: 0.5,
            spectrum: SpectrumSpec::default(),
            basis: BasisKind::Auto,
            rht: RhtParams::default(),
            optimize_weights: false,
            center_pca: true,
            coverage_samples: 20_000,
            tail_fraction: 0.05,
            kinematics: KinematicsConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::config(format!("dimension must be >= 2, got {}", self.dimension)));
        }
        if self.experts == 0 {
            return Err(Error::config("experts must be >= 1"));
        }
        if self.rank == 0 || self.rank > self.dimension {
            return Err(Error::config(format!("rank must lie in 1..={}, got {}", self.dimension, self.rank)));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::config(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        merge::check_equicorrelation(self.rho, self.experts).map_err(|e| Error::config(e.to_string()))?;
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::config(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        self.spectrum.validate()?;
        if self.basis == BasisKind::Haar && self.dimension > 4 * AUTO_HAAR_MAX_DIM {
            return Err(Error::config(format!("dense Haar basis at D = {} is too large", self.dimension)));
        }
        if self.coverage_samples < 1000 {
            return Err(Error::config("coverage_samples must be >= 1000"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 0.2) {
            return Err(Error::config(format!("tail_fraction must lie in (0, 0.2], got {}", self.tail_fraction)));
        }
        self.kinematics.validate()
    }

    fn stream(&self, id: u64) -> RngStream {
        RngStream::new(self.seed, id)
    }
}

/// N experts with per-coordinate variance σ² and pairwise correlation ρ.
///
/// For ρ ≥ 0: `e_i = σ(√ρ·z₀ + √(1−ρ)·z_i)`. For feasible ρ < 0 the shared
/// factor is replaced by centering: `e_i = σ(√(1−ρ)(z_i − z̄) + √(ρ + (1−ρ)/N)·z₀)`,
/// which has the same variance and correlation.
pub fn gen_experts(cfg: &ExperimentConfig) -> Result<Vec<ParamVector>> {
    cfg.validate()?;
    let (n, d) = (cfg.experts, cfg.dimension);
    let sigma = cfg.sigma2.sqrt();
    let rho = cfg.rho;
    let base = cfg.stream(STREAM_EXPERTS);
    let shared = standard_normals(&mut base.substream(n as u64).rng(), d);
    let own: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|i| standard_normals(&mut base.substream(i as u64).rng(), d)).collect();
    let b = (1.0 - rho).sqrt();
    let experts = if rho >= 0.0 {
        let a = rho.sqrt();
        own.iter()
            .map(|z| z.iter().zip(&shared).map(|(zi, z0)| sigma * (a * z0 + b * zi)).collect::<Vec<f64>>())
            .collect::<Vec<_>>()
    } else {
        let c = (rho + (1.0 - rho) / n as f64).sqrt();
        let zbar: Vec<f64> = (0..d).map(|j| own.iter().map(|z| z[j]).sum::<f64>() / n as f64).collect();
        own.iter()
            .map(|z| (0..d).map(|j| sigma * (b * (z[j] - zbar[j]) + c * shared[j])).collect::<Vec<f64>>())
            .collect()
    };
    experts.into_iter().map(ParamVector::new).collect()
}

/// `(d_out, d_in)` with `d_out·d_in = D` and `d_out` the largest divisor ≤ √D.
pub fn matrix_shape(dim: usize) -> (usize, usize) {
    let mut a = (dim as f64).sqrt().floor() as usize;
    while a > 1 && dim % a != 0 {
        a -= 1;
    }
    (a.max(1), dim / a.max(1))
}

/// Low-rank experts: each full-rank expert reshaped to [`matrix_shape`],
/// truncated to its top-r singular triplets and rescaled to keep its
/// Frobenius norm (so the per-coordinate second moment is unchanged).
pub fn gen_low_rank_experts(cfg: &ExperimentConfig) -> Result<Vec<LowRankDelta>> {
    let (d_out, d_in) = matrix_shape(cfg.dimension);
    let r = cfg.rank;
    if r > d_out.min(d_in) {
        return Err(Error::config(format!(
            "rank {r} exceeds min({d_out}, {d_in}) for D = {} reshaped as a matrix",
            cfg.dimension
        )));
    }
    gen_experts(cfg)?
        .par_iter()
        .map(|e| {
            let m = nalgebra::DMatrix::from_row_slice(d_out, d_in, e.as_slice());
            let svd = m.svd(true, true);
            let (u, vt) = (svd.u.as_ref().expect("u"), svd.v_t.as_ref().expect("v_t"));
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
            let top = &order[..r];
            let left = DenseMatrix::from_fn(d_out, r, |i, j| u[(i, top[j])] * svd.singular_values[top[j]]);
            let right = DenseMatrix::from_fn(r, d_in, |i, j| vt[(top[i], j)]);
            let kept: f64 = top.iter().map(|&i| svd.singular_values[i].powi(2)).sum::<f64>().sqrt();
            if !(kept > 0.0) {
                return Err(Error::numeric("expert has no energy in its top singular directions"));
            }
            LowRankDelta::new(left, right, e.norm() / kept)
        })
        .collect()
}

/// Quadratic task with the configured spectrum (ascending), θ* ~ N(0, I)
/// and a Haar or coordinate eigenbasis.
pub fn gen_quadratic_task(cfg: &ExperimentConfig) -> Result<QuadraticTask> {
    let d = cfg.dimension;
    let stream = cfg.stream(STREAM_TASK);
    let theta_star = ParamVector::new(standard_normals(&mut stream.substream(0).rng(), d))?;
    let eigenvalues = cfg.spectrum.eigenvalues(d);
    let haar = match cfg.basis {
        BasisKind::Auto => d <= AUTO_HAAR_MAX_DIM,
        BasisKind::Haar => true,
        BasisKind::Identity => false,
    };
    if haar {
        let q = linalg::haar_orthogonal(d, &mut stream.substream(1).rng());
        QuadraticTask::new(theta_star, eigenvalues, q, cfg.epsilon)
    } else {
        QuadraticTask::axis_aligned(theta_star, eigenvalues, cfg.epsilon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    pub n: usize,
    pub variance_analytic: f64,
    /// Mean square of the merged error over the D coordinates.
    pub variance_mc: Estimate,
    pub expected_loss: f64,
    pub observed_loss: f64,
    pub optimized_loss: Option<f64>,
    /// Jensen width of the sublevel set restricted to the first min(n·r, D) eigendirections.
    pub width: f64,
    pub marginal_gain: f64,
    /// `v_{n−1} − v_n ≥ Δ` (true at n = 1).
    pub gain_above_delta: bool,
    /// `v_n − σ²ρ ≥ Δ`.
    pub distance_above_delta: bool,
    pub redundancy_k: usize,
    pub projected_width_sq: f64,
    pub redundancy_slack: f64,
    pub redundancy_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub rows: Vec<SaturationRow>,
    pub variance_limit: f64,
    pub trace_h: f64,
    /// Largest n with `σ²(1−ρ)/n ≥ Δ`; absent for ρ < 0.
    pub n_max: Option<usize>,
    /// Experts kept under the successive-gain criterion.
    pub stop_successive_gain: Option<usize>,
    /// Experts kept under the distance-to-limit criterion (None if it never fires within N).
    pub stop_distance: Option<usize>,
}

/// Merged-error statistics for n = 1..N on one quadratic task.
pub fn run_saturation(cfg: &ExperimentConfig) -> Result<SaturationReport> {
    let errors = gen_experts(cfg)?;
    let task = gen_quadratic_task(cfg)?;
    saturation_on(cfg, &task, &errors)
}

fn saturation_on(cfg: &ExperimentConfig, task: &QuadraticTask, errors: &[ParamVector]) -> Result<SaturationReport> {
    let (d, big_n) = (cfg.dimension, cfg.experts);
    let merged = merged_prefixes(errors);
    let analytic: Vec<f64> =
        (1..=big_n).map(|n| merged_variance_equicorrelated(cfg.sigma2, cfg.rho, n)).collect::<Result<_>>()?;
    let limit = merge::variance_limit(cfg.sigma2, cfg.rho);
    let trace_h = task.trace_h();
    let widths: Vec<f64> =
        (1..=big_n).map(|n| geometry::width_jensen(task, (n * cfg.rank).min(d))).collect::<Result<_>>()?;

    let rows = (1..=big_n)
        .into_par_iter()
        .map(|n| -> Result<SaturationRow> {
            let err = &merged[n - 1];
            let theta = task.theta_star().add(err)?;
            let optimized_loss = if cfg.optimize_weights {
                let experts: Vec<ParamVector> =
                    errors[..n].iter().map(|e| task.theta_star().add(e)).collect::<Result<_>>()?;
                let stream = cfg.stream(STREAM_WEIGHTS).substream(n as u64);
                let w = optimize_weights(&experts, task, OPTIMIZE_ITERS, 1.0, stream)?;
                Some(task.loss(&merge_linear(&experts, &w)?)?)
            } else {
                None
            };
            let k = (n * cfg.rank).min(d - 1);
            let v = analytic[n - 1];
            Ok(SaturationRow {
                n,
                variance_analytic: v,
                variance_mc: mean_square(err),
                expected_loss: 0.5 * trace_h * v,
                observed_loss: task.loss(&theta)?,
                optimized_loss,
                width: widths[n - 1],
                marginal_gain: if n == 1 { widths[0] } else { widths[n - 1] - widths[n - 2] },
                gain_above_delta: n == 1 || analytic[n - 2] - v >= cfg.delta,
                distance_above_delta: v - limit >= cfg.delta,
                redundancy_k: k,
                projected_width_sq: geometry::projected_width_sq(task, &theta, k)?,
                redundancy_slack: geometry::redundancy_slack(task, &theta, k)?,
                redundancy_holds: geometry::redundancy_bound_check(task, &theta, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let gain = TerminationPolicy::new(cfg.delta, TerminationCriterion::SuccessiveGain)?;
    let dist = TerminationPolicy::new(cfg.delta, TerminationCriterion::DistanceToLimit { limit: Some(limit) })?;
    Ok(SaturationReport {
        rows,
        variance_limit: limit,
        trace_h,
        n_max: if cfg.rho >= 0.0 { Some(merge::n_max(cfg.sigma2, cfg.rho, cfg.delta)?) } else { None },
        stop_successive_gain: termination_check(&analytic, &gain),
        stop_distance: termination_check(&analytic, &dist),
    })
}

/// Uniform means of the first n vectors, for every n.
fn merged_prefixes(vs: &[ParamVector]) -> Vec<ParamVector> {
    let d = vs[0].dim();
    let mut sum = vec![0.0; d];
    vs.iter()
        .enumerate()
        .map(|(i, v)| {
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += x;
            }
            let inv = 1.0 / (i + 1) as f64;
            ParamVector::from_raw(sum.iter().map(|s| s * inv).collect())
        })
        .collect()
}

/// Known-zero-mean variance estimate `Σx²/D` with its standard error.
fn mean_square(v: &ParamVector) -> Estimate {
    let d = v.dim() as f64;
    let (s2, s4) = v.iter().fold((0.0, 0.0), |(a, b), x| (a + x * x, b + x * x * x * x));
    let m = s2 / d;
    Estimate { mean: m, stderr: ((s4 / d - m * m).max(0.0) / d).sqrt() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub m: usize,
    pub width_jensen: f64,
    pub marginal_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthReport {
    pub rows: Vec<WidthRow>,
    /// Monte-Carlo width of the full sublevel set.
    pub width_mc: Estimate,
    pub trace_h_inv: f64,
}

const WIDTH_MC_SAMPLES: usize = 20_000;

/// Partial Jensen widths and marginal gains for m = 1..D, plus an MC check
/// of the full width.
pub fn run_width(cfg: &ExperimentConfig) -> Result<WidthReport> {
    cfg.validate()?;
    let task = gen_quadratic_task(cfg)?;
    let d = task.dim();
    let gains = geometry::marginal_gains(&task, d)?;
    let rows = (1..=d)
        .map(|m| Ok(WidthRow { m, width_jensen: geometry::width_jensen(&task, m)?, marginal_gain: gains[m - 1] }))
        .collect::<Result<Vec<_>>>()?;
    let width_mc = geometry::width_mc(&task, WIDTH_MC_SAMPLES, cfg.stream(STREAM_WIDTH))?;
    Ok(WidthReport { rows, width_mc, trace_h_inv: task.trace_h_inv() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicsRow {
    pub k: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicsReport {
    pub dimension: usize,
    pub target: KinematicsTargetSpec,
    pub trials: usize,
    pub rows: Vec<KinematicsRow>,
    /// Statistical dimension of the target (exact for a subspace).
    pub statdim: Estimate,
    /// `D − δ̂(C)`.
    pub predicted_crossing: f64,
    /// First swept k with intersection probability ≥ 0.5.
    pub crossing: Option<usize>,
}

pub fn run_kinematics(kc: &KinematicsConfig, seed: u64) -> Result<KinematicsReport> {
    kc.validate()?;
    let d = kc.dimension;
    let (target, statdim) = match kc.target {
        KinematicsTargetSpec::Cone { half_angle_deg } => {
            let cone = CircularCone::around_first_axis(d, half_angle_deg)?;
            let est = statdim_cone_mc(&cone, kc.statdim_samples, RngStream::new(seed, STREAM_STATDIM))?;
            (KinematicsTarget::Cone(cone), est)
        }
        KinematicsTargetSpec::Subspace { dim } => {
            (KinematicsTarget::Subspace { dim }, Estimate { mean: dim as f64, stderr: 0.0 })
        }
    };
    let ks = kc.sweep();
    let probs = kinematics_sweep(d, &target, &ks, kc.trials, RngStream::new(seed, STREAM_KINEMATICS))?;
    let rows: Vec<KinematicsRow> =
        ks.iter().zip(&probs).map(|(&k, &probability)| KinematicsRow { k, probability }).collect();
    let crossing = rows.iter().find(|r| r.probability >= 0.5).map(|r| r.k);
    Ok(KinematicsReport {
        dimension: d,
        target: kc.target.clone(),
        trials: kc.trials,
        rows,
        statdim,
        predicted_crossing: d as f64 - statdim.mean,
        crossing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhtStudyRow {
    pub n: usize,
    pub loss_baseline: f64,
    pub loss_rht: f64,
    pub expected_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhtStudyReport {
    pub rows: Vec<RhtStudyRow>,
    /// C₁: coverage proxy with Gaussian weights.
    pub coverage_baseline: CoverageReport,
    /// C₂: coverage proxy with RHT-transformed weights (same base draws).
    pub coverage_rht: CoverageReport,
    pub c2_greater: bool,
    /// `(C₂ − C₁)/√(se₁² + se₂²)`.
    pub z_score: f64,
    /// Pooled merged errors over all n (absent below 10⁴ values).
    pub tail_baseline: Option<TailReport>,
    pub tail_rht: Option<TailReport>,
    pub scope: String,
}

/// Paired loss curves with and without RHT on the same merged errors, plus
/// the coverage pair (C₁, C₂) and tail diagnostics.
///
/// The base model sits at θ*, so the merged delta is the merge error ē_n.
/// With `target: full` the transform sees θ* + ē_n instead.
pub fn run_rht_study(cfg: &ExperimentConfig) -> Result<RhtStudyReport> {
    let errors = gen_experts(cfg)?;
    let task = gen_quadratic_task(cfg)?;
    let merged = merged_prefixes(&errors);
    let p = &cfg.rht;
    let trace_h = task.trace_h();
    let pairs = merged
        .par_iter()
        .enumerate()
        .map(|(i, err)| -> Result<(RhtStudyRow, ParamVector)> {
            let n = i + 1;
            let stream = cfg.stream(STREAM_RHT).substream(n as u64);
            let theta_star = task.theta_star();
            let (theta_rht, delta_rht) = match p.target {
                RhtTarget::Delta => {
                    let t = apply_rht(err, p, stream)?;
                    (theta_star.add(&t)?, t)
                }
                RhtTarget::Full => {
                    let t = apply_rht(&theta_star.add(err)?, p, stream)?;
                    let delta = t.sub(theta_star)?;
                    (t, delta)
                }
            };
            let row = RhtStudyRow {
                n,
                loss_baseline: task.loss(&theta_star.add(err)?)?,
                loss_rht: task.loss(&theta_rht)?,
                expected_loss: 0.5 * trace_h * merged_variance_equicorrelated(cfg.sigma2, cfg.rho, n)?,
            };
            Ok((row, delta_rht))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, transformed): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();

    let net = TinyNetSpec::default();
    let std = cfg.sigma2.sqrt();
    let stream = cfg.stream(STREAM_COVERAGE);
    let c1 = coverage_proxy(&net, &ParamSampler::Gaussian { std }, cfg.coverage_samples, stream)?;
    let c2 = coverage_proxy(&net, &ParamSampler::Rht { std, params: *p }, cfg.coverage_samples, stream)?;
    let se = (c1.proxy.stderr.powi(2) + c2.proxy.stderr.powi(2)).sqrt();
    let diff = c2.proxy.mean - c1.proxy.mean;

    let pooled = |vs: &[ParamVector]| -> Vec<f64> { vs.iter().flat_map(|v| v.iter().copied()).collect() };
    let tails = |xs: Vec<f64>| -> Result<Option<TailReport>> {
        if xs.len() < 10_000 {
            return Ok(None);
        }
        tail_diagnostics(&xs, cfg.tail_fraction, None).map(Some)
    };
    Ok(RhtStudyReport {
        rows,
        c2_greater: c2.proxy.mean > c1.proxy.mean,
        z_score: if se > 0.0 { diff / se } else { 0.0 },
        coverage_baseline: c1,
        coverage_rht: c2,
        tail_baseline: tails(pooled(&merged))?,
        tail_rht: tails(pooled(&transformed))?,
        scope: RHT_SCOPE_NOTE.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceStudy {
    /// PCA of the stacked materialized low-rank experts.
    pub spectrum: SpectrumReport,
    pub components_95: Option<usize>,
    /// Singular-value bands of the first low-rank expert.
    pub first_expert_bands: BandHistogram,
    /// Principal angles (degrees) between the column spaces of experts 0 and 1.
    pub angles_01: Vec<f64>,
}

pub fn run_subspace(cfg: &ExperimentConfig) -> Result<SubspaceStudy> {
    let experts = gen_low_rank_experts(cfg)?;
    let rows: Vec<ParamVector> = experts.iter().map(merge::materialize_delta).collect();
    let spectrum = pca_explained(&DenseMatrix::from_rows(&rows)?, cfg.center_pca)?;
    let components_95 = if spectrum.degenerate { None } else { Some(components_for_threshold(&spectrum, 0.95)?) };
    let angles_01 = if experts.len() > 1 { principal_angles(experts[0].left(), experts[1].left())? } else { Vec::new() };
    Ok(SubspaceStudy {
        spectrum,
        components_95,
        first_expert_bands: sv_tail_stats(SvSource::LowRank(&experts[0])),
        angles_01,
    })
}

/// A report that can be written as a fixed-schema CSV or as JSON.
pub trait Report: Serialize + DeserializeOwned {
    const KIND: &'static str;
    fn csv_header() -> &'static str;
    fn csv_rows(&self) -> Vec<String>;
    fn notes(&self) -> Vec<String> {
        Vec::new()
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl Report for SaturationReport {
    const KIND: &'static str = "saturation";
    fn csv_header() -> &'static str {
        "n,variance_analytic,variance_mc,variance_mc_stderr,expected_loss,observed_loss,optimized_loss,width,marginal_gain,gain_above_delta,distance_above_delta,redundancy_k,projected_width_sq,redundancy_slack,redundancy_holds,n_max,stop_successive_gain,stop_distance"
    }
    fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.n,
                    r.variance_analytic,
                    r.variance_mc.mean,
                    r.variance_mc.stderr,
                    r.expected_loss,
                    r.observed_loss,
                    opt(&r.optimized_loss),
                    r.width,
                    r.marginal_gain,
                    r.gain_above_delta,
                    r.distance_above_delta,
                    r.redundancy_k,
                    r.projected_width_sq,
                    r.redundancy_slack,
                    r.redundancy_holds,
                    opt(&self.n_max),
                    opt(&self.stop_successive_gain),
                    opt(&self.stop_distance),
                )
            })
            .collect()
    }
    fn notes(&self) -> Vec<String> {
        vec![LOSS_NOTE.to_string()]
    }
}

impl Report for WidthReport {
    const KIND: &'static str = "width";
    fn csv_header() -> &'static str {
        "m,width_jensen,marginal_gain,width_mc,width_mc_stderr"
    }
    fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| format!("{},{},{},{},{}", r.m, r.width_jensen, r.marginal_gain, self.width_mc.mean, self.width_mc.stderr))
            .collect()
    }
}

impl Report for KinematicsReport {
    const KIND: &'static str = "kinematics";
    fn csv_header() -> &'static str {
        "k,probability,statdim,statdim_stderr,predicted_crossing,crossing"
    }
    fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.k,
                    r.probability,
                    self.statdim.mean,
                    self.statdim.stderr,
                    self.predicted_crossing,
                    opt(&self.crossing)
                )
            })
            .collect()
    }
}

impl Report for RhtStudyReport {
    const KIND: &'static str = "rht-study";
    fn csv_header() -> &'static str {
        "n,loss_baseline,loss_rht,expected_loss,c1,c1_stderr,c2,c2_stderr,c2_greater"
    }
    fn csv_rows(&self) -> Vec<String> {
        let (c1, c2) = (&self.coverage_baseline.proxy, &self.coverage_rht.proxy);
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{},{},{}",
                    r.n, r.loss_baseline, r.loss_rht, r.expected_loss, c1.mean, c1.stderr, c2.mean, c2.stderr, self.c2_greater
                )
            })
            .collect()
    }
    fn notes(&self) -> Vec<String> {
        vec![self.scope.clone(), LOSS_NOTE.to_string()]
    }
}

impl Report for SubspaceStudy {
    const KIND: &'static str = "subspace";
    fn csv_header() -> &'static str {
        crate::subspace::SPECTRUM_CSV_HEADER
    }
    fn csv_rows(&self) -> Vec<String> {
        let mut buf = Vec::new();
        crate::subspace::write_spectrum_csv(&self.spectrum, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8").lines().skip(1).map(str::to_string).collect()
    }
    fn notes(&self) -> Vec<String> {
        vec![PCA_NOTE.to_string(), BAND_NOTE.to_string(), format!("pca centered: {}", self.spectrum.centered)]
    }
}

/// JSON form of every report: the report plus everything needed to rerun it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope<R> {
    pub schema_version: u32,
    pub kind: String,
    pub config: ExperimentConfig,
    pub notes: Vec<String>,
    pub report: R,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::arg(format!("unknown format {other:?} (csv or json)"))),
        }
    }
}

pub fn render_csv<R: Report>(report: &R) -> String {
    let mut s = String::from(R::csv_header());
    s.push('\n');
    for row in report.csv_rows() {
        s.push_str(&row);
        s.push('\n');
    }
    s
}

pub fn render_json<R: Report>(report: &R, cfg: &ExperimentConfig) -> Result<String>
where
    R: Clone,
{
    let env = ReportEnvelope {
        schema_version: SCHEMA_VERSION,
        kind: R::KIND.to_string(),
        config: cfg.clone(),
        notes: report.notes(),
        report: report.clone(),
    };
    Ok(serde_json::to_string_pretty(&env)? + "\n")
}

/// Writes `report` to `path`. A CSV report gets a `<stem>.config.json`
/// sidecar holding the resolved config and notes.
pub fn emit_report<R: Report + Clone>(report: &R, cfg: &ExperimentConfig, format: ReportFormat, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    match format {
        ReportFormat::Csv => {
            fs::write(path, render_csv(report))?;
            let side = ConfigSidecar { schema_version: SCHEMA_VERSION, kind: R::KIND.to_string(), config: cfg.clone(), notes: report.notes() };
            fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)? + "\n")?;
        }
        ReportFormat::Json => fs::write(path, render_json(report, cfg)?)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct ConfigSidecar {
    schema_version: u32,
    kind: String,
    config: ExperimentConfig,
    notes: Vec<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.config.json"))
}

pub fn read_json_report<R: DeserializeOwned>(path: &Path) -> Result<ReportEnvelope<R>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Named (x, y) sequence for [`plot_svg`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn render_svg(series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::arg("nothing to plot"));
    }
    for s in series {
        if let Some(p) = s.points.iter().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::arg(format!("series {:?} has non-finite point {p:?}", s.name)));
        }
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let py = |y: f64| SVG_H - MARGIN - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, SVG_W - MARGIN, MARGIN, SVG_H - MARGIN);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, bottom + 15.0, num(x0));
    let _ = writeln!(s, r#"<text x="{right}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, bottom + 15.0, num(x1));
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" font-size="11" text-anchor="end">{}</text>"#, left - 4.0, num(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#, left - 4.0, top + 4.0, num(y1));
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if ser.points.len() == 1 {
            let (x, y) = ser.points[0];
            let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{color}"/>"#, px(x), py(y));
        } else if !ser.points.is_empty() {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, right - 120.0, ly - 9.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-size="11">{}</text>"#, right - 105.0, xml_escape(&ser.name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn plot_svg(series: &[Series], path: &Path) -> Result<()> {
    let svg = render_svg(series)?;
    fs::write(path, svg)?;
    Ok(())
}

fn num(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-3) {
        format!("{x:.2e}")
    } else {
        format!("{x:.3}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
