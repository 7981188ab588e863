//! Convex merging of experts and the variance law that bounds it.
//!
//! With per-expert spread σ_i, pairwise correlation ρ_ij and convex weights α,
//! the merged spread is `Σ_ij α_i α_j ρ_ij σ_i σ_j`. For the equicorrelated,
//! uniformly weighted case this collapses to `σ²(ρ + (1−ρ)/n)`, which never
//! drops below `σ²ρ`; asking every merge to stay at least Δ above that floor
//! gives the cap `n ≤ σ²(1−ρ)/Δ`.

use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stats::{chunked, Estimate};
use crate::tensor_io::{DenseMatrix, LowRankDelta, ParamVector, RngStream};

const SIMPLEX_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-8;

/// Convex combination weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MergeWeights {
    alphas: Vec<f64>,
}

impl MergeWeights {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::arg("merge weights must be non-empty"));
        }
        if let Some(i) = alphas.iter().position(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::arg(format!("weight {i} is {} (must be finite and >= 0)", alphas[i])));
        }
        let sum: f64 = alphas.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::arg(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { alphas })
    }

    pub fn uniform(n: usize) -> Self {
        let n = n.max(1);
        Self { alphas: vec![1.0 / n as f64; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

impl TryFrom<Vec<f64>> for MergeWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MergeWeights> for Vec<f64> {
    fn from(w: MergeWeights) -> Self {
        w.alphas
    }
}

/// Per-expert standard deviations plus their correlation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSpec {
    sigmas: Vec<f64>,
    rho: DenseMatrix,
}

impl CorrelationSpec {
    pub fn new(sigmas: Vec<f64>, rho: DenseMatrix) -> Result<Self> {
        let n = sigmas.len();
        if n == 0 {
            return Err(Error::arg("correlation spec needs at least one expert"));
        }
        if let Some(i) = sigmas.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::arg(format!("sigma {i} must be positive, got {}", sigmas[i])));
        }
        if rho.rows() != n || rho.cols() != n {
            return Err(Error::shape(format!(
                "{n} sigmas but {}x{} correlation matrix",
                rho.rows(),
                rho.cols()
            )));
        }
        for i in 0..n {
            if rho.get(i, i) != 1.0 {
                return Err(Error::arg(format!("rho[{i}][{i}] = {} (must be 1)", rho.get(i, i))));
            }
            for j in 0..i {
                let r = rho.get(i, j);
                if r != rho.get(j, i) {
                    return Err(Error::arg(format!("rho not symmetric at ({i}, {j})")));
                }
                if !(-1.0..=1.0).contains(&r) {
                    return Err(Error::arg(format!("rho[{i}][{j}] = {r} outside [-1, 1]")));
                }
            }
        }
        let min_eig = linalg::min_symmetric_eigenvalue(&rho.to_nalgebra());
        if min_eig < -PSD_TOL {
            return Err(Error::arg(format!(
                "correlation matrix not positive semidefinite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { sigmas, rho })
    }

    /// Equal variances `sigma2` and equal off-diagonal correlation `rho`.
    pub fn equicorrelated(n: usize, sigma2: f64, rho: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::arg("sigma2 must be positive"));
        }
        let m = DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho });
        Self::new(vec![sigma2.sqrt(); n], m)
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn rho(&self) -> &DenseMatrix {
        &self.rho
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TerminationCriterion {
    /// Stop once the merged variance is within Δ of its floor. Uses `limit`
    /// when given, otherwise the floor of an `a + b/n` least-squares fit.
    DistanceToLimit { limit: Option<f64> },
    /// Stop once adding an expert lowers the variance by less than Δ.
    SuccessiveGain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationPolicy {
    delta: f64,
    criterion: TerminationCriterion,
}

impl TerminationPolicy {
    pub fn new(delta: f64, criterion: TerminationCriterion) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::arg(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { delta, criterion })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn criterion(&self) -> TerminationCriterion {
        self.criterion
    }
}

/// Flattens `scale · left · right` row-major.
pub fn materialize_delta(d: &LowRankDelta) -> ParamVector {
    ParamVector::from_raw(d.to_dense().into_vec())
}

/// `Σ α_i θ_i`.
pub fn merge_linear(experts: &[ParamVector], w: &MergeWeights) -> Result<ParamVector> {
    let first = experts.first().ok_or_else(|| Error::arg("no experts to merge"))?;
    if experts.len() != w.len() {
        return Err(Error::shape(format!("{} experts but {} weights", experts.len(), w.len())));
    }
    let dim = first.dim();
    let mut out = vec![0.0; dim];
    for (i, (e, &a)) in experts.iter().zip(w.as_slice()).enumerate() {
        if e.dim() != dim {
            return Err(Error::shape(format!("expert {i} has dim {}, expected {dim}", e.dim())));
        }
        for (o, x) in out.iter_mut().zip(e.iter()) {
            *o += a * x;
        }
    }
    Ok(ParamVector::from_raw(out))
}

/// Per-coordinate variance of the merged parameters.
pub fn merged_variance(spec: &CorrelationSpec, w: &MergeWeights) -> Result<f64> {
    let n = spec.len();
    if w.len() != n {
        return Err(Error::shape(format!("{n} experts in spec but {} weights", w.len())));
    }
    let a = w.as_slice();
    let s = spec.sigmas();
    let mut total = 0.0;
    for i in 0..n {
        total += a[i] * a[i] * s[i] * s[i];
        for j in 0..n {
            if i != j {
                total += a[i] * a[j] * spec.rho().get(i, j) * s[i] * s[j];
            }
        }
    }
    Ok(total.max(0.0))
}

/// `σ²(ρ + (1−ρ)/n)`: uniform weights over an equicorrelated ensemble.
pub fn merged_variance_equicorrelated(sigma2: f64, rho: f64, n: usize) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::arg(format!("sigma2 must be positive, got {sigma2}")));
    }
    if n == 0 {
        return Err(Error::arg("n must be >= 1"));
    }
    check_equicorrelation(rho, n)?;
    Ok(sigma2 * (rho + (1.0 - rho) / n as f64))
}

pub(crate) fn check_equicorrelation(rho: f64, n: usize) -> Result<()> {
    let floor = if n > 1 { -1.0 / (n - 1) as f64 } else { -1.0 };
    if !(rho <= 1.0 && rho >= floor) {
        return Err(Error::arg(format!(
            "rho = {rho} infeasible for {n} experts (needs {floor} <= rho <= 1)"
        )));
    }
    Ok(())
}

/// Floor `σ²ρ` approached as the expert count grows.
pub fn variance_limit(sigma2: f64, rho: f64) -> f64 {
    sigma2 * rho
}

/// Largest n with `σ²(1−ρ)/n ≥ Δ`; 0 when no merge clears the margin.
pub fn n_max(sigma2: f64, rho: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::arg(format!("delta must be positive, got {delta}")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::arg(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::arg(format!("rho must lie in [0, 1], got {rho}")));
    }
    let gap = sigma2 * (1.0 - rho);
    let ratio = gap / delta;
    if ratio >= usize::MAX as f64 / 2.0 {
        return Err(Error::numeric(format!("n_max overflows: sigma2(1-rho)/delta = {ratio:e}")));
    }
    // Settle floor() against the direct test so rounding at integer ratios
    // never disagrees with `gap / n >= delta`.
    let admissible = |n: usize| n == 0 || gap / n as f64 >= delta;
    let mut n = ratio.floor() as usize;
    while n > 0 && !admissible(n) {
        n -= 1;
    }
    while admissible(n + 1) {
        n += 1;
    }
    Ok(n)
}

/// Index at which merging should stop, read as "keep `i` experts".
///
/// `trace[i]` is the merged variance with `i + 1` experts. Returns `None`
/// when the policy never triggers (or the trace is empty).
pub fn termination_check(trace: &[f64], policy: &TerminationPolicy) -> Option<usize> {
    if trace.is_empty() {
        return None;
    }
    let delta = policy.delta;
    match policy.criterion {
        TerminationCriterion::SuccessiveGain => {
            (1..trace.len()).find(|&i| trace[i - 1] - trace[i] < delta)
        }
        TerminationCriterion::DistanceToLimit { limit } => {
            let floor = limit.unwrap_or_else(|| fitted_floor(trace));
            (0..trace.len()).find(|&i| trace[i] - floor < delta)
        }
    }
}

/// Infimum over n ≥ 1 of the least-squares fit `a + b/n` to the trace.
fn fitted_floor(trace: &[f64]) -> f64 {
    if trace.len() < 2 {
        return trace[0];
    }
    let m = trace.len() as f64;
    let xs: Vec<f64> = (1..=trace.len()).map(|n| 1.0 / n as f64).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = trace.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(trace).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    a.min(a + b)
}

/// Monte-Carlo merged variance of the uniform mean of n equicorrelated
/// Gaussians, for every n in `1..=max_n`.
///
/// Each draw builds `e_i = √ρ·z₀ + √(1−ρ)·z_i` (so `corr(e_i, e_j) = ρ`
/// exactly), scaled by σ; the prefix means give all n from one draw.
/// Requires `ρ ≥ 0`.
pub fn equicorrelated_variance_mc(
    sigma2: f64,
    rho: f64,
    max_n: usize,
    draws: usize,
    stream: RngStream,
) -> Result<Vec<Estimate>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::arg(format!("shared-factor sampling needs 0 <= rho <= 1, got {rho}")));
    }
    if !(sigma2 > 0.0) || max_n == 0 || draws < 2 {
        return Err(Error::arg("need sigma2 > 0, max_n >= 1, draws >= 2"));
    }
    let sigma = sigma2.sqrt();
    let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
    // Per chunk: Σ m² and Σ m⁴ for each n (the mean is exactly zero).
    let parts = chunked(stream, draws, |rng, count| {
        let mut s2 = vec![0.0; max_n];
        let mut s4 = vec![0.0; max_n];
        for _ in 0..count {
            let z0: f64 = StandardNormal.sample(rng);
            let mut sum = 0.0;
            for n in 1..=max_n {
                let zi: f64 = StandardNormal.sample(rng);
                sum += sigma * (shared * z0 + own * zi);
                let m = sum / n as f64;
                let m2 = m * m;
                s2[n - 1] += m2;
                s4[n - 1] += m2 * m2;
            }
        }
        (s2, s4)
    });
    let total = draws as f64;
    Ok((0..max_n)
        .map(|k| {
            let s2: f64 = parts.iter().map(|p| p.0[k]).sum();
            let s4: f64 = parts.iter().map(|p| p.1[k]).sum();
            let v = s2 / total;
            let var_of_sq = (s4 / total - v * v).max(0.0);
            Estimate { mean: v, stderr: (var_of_sq / total).sqrt() }
        })
        .collect())
}

/// Loss whose minimizer over merge weights is sought.
pub trait MergeObjective: Sync {
    fn value(&self, theta: &ParamVector) -> f64;
    fn gradient(&self, theta: &ParamVector) -> ParamVector;
}

/// Result of [`optimize_weights_traced`].
#[derive(Clone, Debug)]
pub struct WeightSearch {
    pub weights: MergeWeights,
    /// Objective at every accepted iterate (non-increasing).
    pub trace: Vec<f64>,
}

/// Projected gradient descent on the probability simplex.
pub fn optimize_weights(
    experts: &[ParamVector],
    objective: &dyn MergeObjective,
    iters: usize,
    step: f64,
    stream: RngStream,
) -> Result<MergeWeights> {
    optimize_weights_traced(experts, objective, iters, step, stream).map(|s| s.weights)
}

pub fn optimize_weights_traced(
    experts: &[ParamVector],
    objective: &dyn MergeObjective,
    iters: usize,
    step: f64,
    stream: RngStream,
) -> Result<WeightSearch> {
    if iters == 0 {
        return Err(Error::arg("iters must be >= 1"));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::arg(format!("step must be positive, got {step}")));
    }
    let n = experts.len();
    if n == 0 {
        return Err(Error::arg("no experts"));
    }
    let eval = |alphas: &[f64]| -> Result<(ParamVector, f64)> {
        let theta = merge_linear(experts, &MergeWeights { alphas: alphas.to_vec() })?;
        let f = objective.value(&theta);
        if !f.is_finite() {
            return Err(Error::numeric(format!("objective is {f} at weights {alphas:?}")));
        }
        Ok((theta, f))
    };
    if n == 1 {
        let (_, f) = eval(&[1.0])?;
        return Ok(WeightSearch { weights: MergeWeights::uniform(1), trace: vec![f] });
    }

    // Start from the better of the barycenter and a random simplex point.
    let mut rng = stream.rng();
    let mut random: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = random.iter().sum();
    random.iter_mut().for_each(|x| *x /= total);
    let random = project_simplex(&random);
    let uniform = vec![1.0 / n as f64; n];
    let (mut theta, mut f) = eval(&uniform)?;
    let mut alphas = uniform;
    let (theta_r, f_r) = eval(&random)?;
    if f_r < f {
        alphas = random;
        theta = theta_r;
        f = f_r;
    }

    let mut trace = vec![f];
    let mut eta = step;
    for _ in 0..iters {
        let g = objective.gradient(&theta);
        let grad: Vec<f64> = experts.iter().map(|e| crate::tensor_io::dot(g.as_slice(), e.as_slice())).collect();
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite gradient"));
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = alphas.iter().zip(&grad).map(|(a, g)| a - eta * g).collect();
            let cand = project_simplex(&trial);
            let (theta_c, f_c) = eval(&cand)?;
            if f_c <= f {
                let moved = cand.iter().zip(&alphas).any(|(a, b)| a != b);
                alphas = cand;
                theta = theta_c;
                f = f_c;
                trace.push(f);
                accepted = moved;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
        eta *= 1.5;
    }
    Ok(WeightSearch { weights: MergeWeights::new(alphas)?, trace })
}

/// Euclidean projection onto `{x : x ≥ 0, Σx = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    // Stable sort keeps equal entries in index order.
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    let mut x: Vec<f64> = v.iter().map(|&vi| (vi - tau).max(0.0)).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|xi| *xi /= s);
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn weights_validation() {
        assert!(MergeWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(MergeWeights::new(vec![0.5, 0.6]).is_err());
        assert!(MergeWeights::new(vec![1.5, -0.5]).is_err());
        assert!(MergeWeights::new(vec![]).is_err());
        let w: MergeWeights = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<MergeWeights>("[0.25, 0.5]").is_err());
    }

    #[test]
    fn correlation_spec_validation() {
        let bad_psd = DenseMatrix::new(3, 3, vec![1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]).unwrap();
        assert!(CorrelationSpec::new(vec![1.0; 3], bad_psd).is_err());
        let asym = DenseMatrix::new(2, 2, vec![1.0, 0.2, 0.3, 1.0]).unwrap();
        assert!(CorrelationSpec::new(vec![1.0; 2], asym).is_err());
        let diag = DenseMatrix::new(2, 2, vec![0.9, 0.0, 0.0, 1.0]).unwrap();
        assert!(CorrelationSpec::new(vec![1.0; 2], diag).is_err());
        assert!(CorrelationSpec::equicorrelated(4, 1.0, -0.5).is_err());
        assert!(CorrelationSpec::equicorrelated(4, 1.0, -1.0 / 3.0).is_ok());
    }

    #[test]
    fn merge_linear_cases() {
        let a = ParamVector::new(vec![1.0, 0.0]).unwrap();
        let b = ParamVector::new(vec![0.0, 1.0]).unwrap();
        let w = MergeWeights::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(merge_linear(&[a.clone(), b], &w).unwrap().as_slice(), &[0.25, 0.75]);
        assert_eq!(merge_linear(&[a.clone()], &MergeWeights::uniform(1)).unwrap(), a);
        let w = MergeWeights::new(vec![0.3, 0.7]).unwrap();
        let same = merge_linear(&[a.clone(), a.clone()], &w).unwrap();
        assert!(same.iter().zip(a.iter()).all(|(x, y)| (x - y).abs() < 1e-15));
        let short = ParamVector::new(vec![1.0]).unwrap();
        assert!(matches!(merge_linear(&[a, short], &w), Err(Error::Shape(_))));
    }

    #[test]
    fn materialize_hand_product() {
        let left = DenseMatrix::new(2, 1, vec![1.0, 0.0]).unwrap();
        let right = DenseMatrix::new(1, 2, vec![2.0, 3.0]).unwrap();
        let d = LowRankDelta::new(left.clone(), right.clone(), 1.0).unwrap();
        assert_eq!(materialize_delta(&d).as_slice(), &[2.0, 3.0, 0.0, 0.0]);
        let z = LowRankDelta::new(left, right, 0.0).unwrap();
        assert!(materialize_delta(&z).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn materialize_matches_triple_loop() {
        let mut rng = RngStream::new(4, 0).rng();
        let left = DenseMatrix::from_fn(8, 2, |_, _| StandardNormal.sample(&mut rng));
        let right = DenseMatrix::from_fn(2, 8, |_, _| rng.sample(StandardNormal));
        let d = LowRankDelta::new(left.clone(), right.clone(), 0.7).unwrap();
        let flat = materialize_delta(&d);
        for i in 0..8 {
            for j in 0..8 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += left.get(i, k) * right.get(k, j);
                }
                assert!((flat.get(i * 8 + j) - 0.7 * s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variance_law_cases() {
        let one = CorrelationSpec::equicorrelated(1, 2.5, 0.0).unwrap();
        assert!((merged_variance(&one, &MergeWeights::uniform(1)).unwrap() - 2.5).abs() < 1e-15);

        let pair = CorrelationSpec::equicorrelated(2, 1.0, 0.5).unwrap();
        let v = merged_variance(&pair, &MergeWeights::uniform(2)).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        assert!((merged_variance_equicorrelated(1.0, 0.5, 2).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(merged_variance_equicorrelated(3.0, 0.2, 1).unwrap(), 3.0);
        let big = merged_variance_equicorrelated(1.0, 0.5, 1_000_000).unwrap();
        assert!((big - 0.5000005).abs() < 1e-15);

        let full = CorrelationSpec::equicorrelated(3, 2.0, 1.0).unwrap();
        let w = MergeWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!((merged_variance(&full, &w).unwrap() - 2.0).abs() < 1e-14);

        assert!(merged_variance_equicorrelated(1.0, -0.5, 4).is_err());
        assert!(merged_variance(&pair, &MergeWeights::uniform(3)).is_err());
    }

    #[test]
    fn limit_and_n_max() {
        assert_eq!(variance_limit(1.0, 0.0), 0.0);
        assert_eq!(variance_limit(1.0, 0.5), 0.5);
        assert_eq!(variance_limit(2.0, 0.25), 0.5);
        let far = merged_variance_equicorrelated(2.0, 0.25, 100_000).unwrap();
        assert!((far - 0.5).abs() < 2e-5);

        assert_eq!(n_max(1.0, 1.0, 0.3).unwrap(), 0);
        assert_eq!(n_max(1.0, 0.5, 0.1).unwrap(), 5);
        assert_eq!(n_max(1.0, 0.0, 0.01).unwrap(), 100);
        assert_eq!(n_max(1.0, 0.5, 0.05).unwrap(), 10);
        assert!(n_max(1.0, 0.5, 0.0).is_err());
        assert!(n_max(1.0, 0.5, -1.0).is_err());
    }

    fn v_sample_trace(sigma2: f64, rho: f64, n: usize) -> Vec<f64> {
        (1..=n).map(|k| merged_variance_equicorrelated(sigma2, rho, k).unwrap()).collect()
    }

    #[test]
    fn termination_cases() {
        let gain = |d| TerminationPolicy::new(d, TerminationCriterion::SuccessiveGain).unwrap();
        assert_eq!(termination_check(&[1.0, 1.0, 1.0], &gain(0.1)), Some(1));
        // 0.5/(n(n+1)) < 0.05 first at n = 3
        assert_eq!(termination_check(&v_sample_trace(1.0, 0.5, 10), &gain(0.05)), Some(3));
        assert_eq!(termination_check(&[10.0, 8.0, 6.0, 4.0], &gain(1.0)), None);
        assert_eq!(termination_check(&[], &gain(1.0)), None);

        let dist = |d, limit| {
            TerminationPolicy::new(d, TerminationCriterion::DistanceToLimit { limit }).unwrap()
        };
        let trace = v_sample_trace(1.0, 0.5, 20);
        // first n with 0.5/n < 0.05 is n = 11, i.e. keep n_max = 10 experts
        assert_eq!(termination_check(&trace, &dist(0.05, Some(0.5))), Some(10));
        assert_eq!(termination_check(&trace[..10], &dist(0.05, Some(0.5))), None);
        // the fitted floor recovers σ²ρ exactly on an exact a + b/n trace
        // (0.5/n < 0.048 first at n = 11; away from the Δ boundary)
        assert_eq!(termination_check(&trace, &dist(0.048, None)), Some(10));
        assert!(TerminationPolicy::new(0.0, TerminationCriterion::SuccessiveGain).is_err());
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        assert!(p.iter().zip([0.2, 0.3, 0.5]).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(project_simplex(&[5.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[1.0, 1.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let p = project_simplex(&[-3.0, 0.4, 2.0, 0.1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&x| x >= 0.0));
    }
}
