//! Gaussian width of quadratic sublevel sets, statistical dimension, and the
//! random-rotation intersection experiments behind the redundancy argument.
//!
//! A [`QuadraticTask`] is `L(θ) = ½(θ−θ*)ᵀH(θ−θ*)` with `H = Q diag(λ) Qᵀ`.
//! Its sublevel set `{L ≤ ε}` is an ellipsoid with semi-axes `r_i = √(2ε/λ_i)`
//! along the columns of Q, and its Gaussian width is
//! `E[√(2ε)·‖H^{-1/2} g‖]`, bounded above by `√(2ε·Tr H⁻¹)`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::merge::MergeObjective;
use crate::stats::{mc_mean, Estimate};
use crate::tensor_io::{dot, rng::standard_normals, DenseMatrix, ParamVector, RngStream};

const BASIS_TOL: f64 = 1e-8;
const AXIS_TOL: f64 = 1e-12;
/// Absolute tolerance (radians / sine) for deciding a nontrivial intersection.
pub const ANGLE_TOL: f64 = 1e-10;
const MIN_MC_SAMPLES: usize = 1000;
const MIN_TRIALS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTask {
    theta_star: ParamVector,
    eigenvalues: Vec<f64>,
    /// Eigenvectors as columns; `None` means the coordinate basis, which
    /// avoids storing a D×D identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<DenseMatrix>,
    epsilon: f64,
}

impl QuadraticTask {
    /// `basis` holds the eigenvectors of H as columns, in the same order as
    /// `eigenvalues`. That order is the order in which partial widths accumulate.
    pub fn new(
        theta_star: ParamVector,
        eigenvalues: Vec<f64>,
        basis: DenseMatrix,
        epsilon: f64,
    ) -> Result<Self> {
        let d = theta_star.dim();
        if eigenvalues.len() != d || basis.rows() != d || basis.cols() != d {
            return Err(Error::shape(format!(
                "dim {d} optimum, {} eigenvalues, {}x{} basis",
                eigenvalues.len(),
                basis.rows(),
                basis.cols()
            )));
        }
        Self::check_spectrum(&eigenvalues, epsilon)?;
        let residual = basis.orthonormality_residual();
        if residual > BASIS_TOL {
            return Err(Error::arg(format!("basis is not orthonormal (residual {residual:e})")));
        }
        Ok(Self { theta_star, eigenvalues, basis: Some(basis), epsilon })
    }

    /// H diagonal in the coordinate basis.
    pub fn axis_aligned(theta_star: ParamVector, eigenvalues: Vec<f64>, epsilon: f64) -> Result<Self> {
        let d = theta_star.dim();
        if eigenvalues.len() != d {
            return Err(Error::shape(format!("dim {d} optimum, {} eigenvalues", eigenvalues.len())));
        }
        Self::check_spectrum(&eigenvalues, epsilon)?;
        Ok(Self { theta_star, eigenvalues, basis: None, epsilon })
    }

    fn check_spectrum(eigenvalues: &[f64], epsilon: f64) -> Result<()> {
        if let Some(i) = eigenvalues.iter().position(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::arg(format!("eigenvalue {i} = {} is not positive", eigenvalues[i])));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::arg(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.theta_star.dim()
    }

    pub fn theta_star(&self) -> &ParamVector {
        &self.theta_star
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `None` for an axis-aligned task.
    pub fn basis(&self) -> Option<&DenseMatrix> {
        self.basis.as_ref()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::check_spectrum(&self.eigenvalues, epsilon)?;
        Ok(Self { epsilon, ..self.clone() })
    }

    /// Ellipsoid semi-axes `√(2ε/λ_i)`.
    pub fn radii(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| (2.0 * self.epsilon / l).sqrt()).collect()
    }

    pub fn trace_h(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn trace_h_inv(&self) -> f64 {
        self.eigenvalues.iter().map(|l| 1.0 / l).sum()
    }

    /// Coordinates of `θ − θ*` in the eigenbasis.
    fn eigen_coords(&self, theta: &ParamVector) -> Vec<f64> {
        let diff = theta.sub(&self.theta_star).expect("dimension checked by caller");
        match &self.basis {
            Some(q) => q.matvec_transposed(diff.as_slice()).expect("square basis"),
            None => diff.into_vec(),
        }
    }

    pub fn loss(&self, theta: &ParamVector) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(0.5 * self.eigen_coords(theta).iter().zip(&self.eigenvalues).map(|(c, l)| l * c * c).sum::<f64>())
    }

    pub fn gradient_at(&self, theta: &ParamVector) -> Result<ParamVector> {
        self.check_dim(theta)?;
        let scaled: Vec<f64> =
            self.eigen_coords(theta).iter().zip(&self.eigenvalues).map(|(c, l)| l * c).collect();
        Ok(ParamVector::from_raw(self.from_eigen_coords(scaled)))
    }

    pub fn in_sublevel(&self, theta: &ParamVector) -> Result<bool> {
        Ok(self.loss(theta)? <= self.epsilon)
    }

    /// Uniform draw from the ellipsoid `{(θ−θ*)ᵀH(θ−θ*) ≤ 2ε}`.
    pub fn sample_sublevel(&self, stream: RngStream) -> ParamVector {
        let d = self.dim();
        let mut rng = stream.rng();
        let g = standard_normals(&mut rng, d);
        let norm = dot(&g, &g).sqrt();
        let u: f64 = rng.random();
        let radius = (2.0 * self.epsilon).sqrt() * u.powf(1.0 / d as f64);
        let coords: Vec<f64> = g
            .iter()
            .zip(&self.eigenvalues)
            .map(|(gi, l)| radius * gi / norm / l.sqrt())
            .collect();
        let offset = self.from_eigen_coords(coords);
        self.theta_star.add(&ParamVector::from_raw(offset)).expect("same dim")
    }

    fn from_eigen_coords(&self, coords: Vec<f64>) -> Vec<f64> {
        match &self.basis {
            Some(q) => q.matvec(&coords).expect("square basis"),
            None => coords,
        }
    }

    fn check_dim(&self, theta: &ParamVector) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::shape(format!("point has dim {}, task has dim {}", theta.dim(), self.dim())));
        }
        Ok(())
    }
}

impl MergeObjective for QuadraticTask {
    fn value(&self, theta: &ParamVector) -> f64 {
        self.loss(theta).unwrap_or(f64::NAN)
    }

    fn gradient(&self, theta: &ParamVector) -> ParamVector {
        self.gradient_at(theta).unwrap_or_else(|_| ParamVector::filled(theta.dim(), f64::NAN))
    }
}

/// `√(2ε Σ_{i≤m} 1/λ_i)`, summing eigenvalues in stored order.
pub fn width_jensen(task: &QuadraticTask, m: usize) -> Result<f64> {
    check_m(task, m)?;
    let s: f64 = task.eigenvalues[..m].iter().map(|l| 1.0 / l).sum();
    Ok((2.0 * task.epsilon * s).sqrt())
}

fn check_m(task: &QuadraticTask, m: usize) -> Result<()> {
    if m == 0 || m > task.dim() {
        return Err(Error::arg(format!("m = {m} outside 1..={}", task.dim())));
    }
    Ok(())
}

/// Monte-Carlo Gaussian width of the full sublevel set.
pub fn width_mc(task: &QuadraticTask, samples: usize, stream: RngStream) -> Result<Estimate> {
    width_mc_partial(task, task.dim(), samples, stream)
}

/// Monte-Carlo width of the sublevel set restricted to the first `m` eigendirections.
///
/// `Qᵀg` is standard Gaussian for orthogonal Q, so `‖H^{-1/2}g‖² = Σ g_i²/λ_i`
/// with g drawn directly in eigen-coordinates.
pub fn width_mc_partial(task: &QuadraticTask, m: usize, samples: usize, stream: RngStream) -> Result<Estimate> {
    check_m(task, m)?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::arg(format!("need at least {MIN_MC_SAMPLES} samples, got {samples}")));
    }
    if task.epsilon == 0.0 {
        return Ok(Estimate { mean: 0.0, stderr: 0.0 });
    }
    let scale = (2.0 * task.epsilon).sqrt();
    let inv: Vec<f64> = task.eigenvalues[..m].iter().map(|l| 1.0 / l).collect();
    Ok(mc_mean(stream, samples, |rng| {
        let s: f64 = inv
            .iter()
            .map(|w| {
                let g: f64 = StandardNormal.sample(rng);
                w * g * g
            })
            .sum();
        scale * s.sqrt()
    }))
}

/// `Δw_M = w(S_M) − w(S_{M−1})` for M = 1..=up_to_m, with `w(S_0) = 0`.
pub fn marginal_gains(task: &QuadraticTask, up_to_m: usize) -> Result<Vec<f64>> {
    check_m(task, up_to_m)?;
    let scale = (2.0 * task.epsilon).sqrt();
    let mut prev = 0.0f64;
    let mut gains = Vec::with_capacity(up_to_m);
    for l in &task.eigenvalues[..up_to_m] {
        let next = prev + 1.0 / l;
        // √a − √b written as (a − b)/(√a + √b) to avoid cancellation.
        gains.push(scale * (1.0 / l) / (next.sqrt() + prev.sqrt()));
        prev = next;
    }
    Ok(gains)
}

/// `Σ_{i=k}^{D−1} r_i²/(‖θ*−θ^k‖² + r_i²)` over the D−k residual radii.
///
/// `θ^k` agrees with the merged model on its first k coordinates; the
/// remaining D−k eigendirections (stored order) carry the residual radii.
pub fn projected_width_sq(task: &QuadraticTask, theta_k: &ParamVector, k: usize) -> Result<f64> {
    let d = task.dim();
    if k >= d {
        return Err(Error::arg(format!("k = {k} must be < D = {d}")));
    }
    task.check_dim(theta_k)?;
    let dist2 = {
        let diff = task.theta_star.sub(theta_k)?;
        dot(diff.as_slice(), diff.as_slice())
    };
    Ok(task.radii()[k..]
        .iter()
        .map(|r| {
            let r2 = r * r;
            if dist2 == 0.0 {
                1.0
            } else {
                r2 / (dist2 + r2)
            }
        })
        .sum())
}

/// `D − k − projected_width_sq`; the redundancy inequality holds iff this is ≥ 0.
pub fn redundancy_slack(task: &QuadraticTask, theta_k: &ParamVector, k: usize) -> Result<f64> {
    let w2 = projected_width_sq(task, theta_k, k)?;
    Ok(task.dim() as f64 - w2 - k as f64)
}

/// Whether `k ≤ D − Σ r_i²/(‖θ*−θ^k‖² + r_i²)`, i.e. merging more is still admissible.
pub fn redundancy_bound_check(task: &QuadraticTask, theta_k: &ParamVector, k: usize) -> Result<bool> {
    let w2 = projected_width_sq(task, theta_k, k)?;
    Ok(k as f64 <= task.dim() as f64 - w2)
}

/// Statistical dimension of a k-dimensional subspace of ℝ^dim, which is k.
pub fn statdim_subspace(k: usize, dim: usize) -> Result<f64> {
    if k > dim {
        return Err(Error::arg(format!("subspace dim {k} exceeds ambient {dim}")));
    }
    Ok(k as f64)
}

/// `E‖Π_S g‖²` by sampling, with S spanned by the first k coordinates.
pub fn statdim_subspace_mc(k: usize, dim: usize, samples: usize, stream: RngStream) -> Result<Estimate> {
    statdim_subspace(k, dim)?;
    Ok(mc_mean(stream, samples, |rng| {
        let g = standard_normals(rng, dim);
        g[..k].iter().map(|x| x * x).sum()
    }))
}

/// `{x : angle(x, axis) ≤ half_angle}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularCone {
    axis: ParamVector,
    half_angle: f64,
}

impl CircularCone {
    /// `axis` must be a unit vector (to 1e-12); `half_angle` in (0, π/2) radians.
    pub fn new(axis: ParamVector, half_angle: f64) -> Result<Self> {
        if (axis.norm() - 1.0).abs() > AXIS_TOL {
            return Err(Error::arg(format!("cone axis has norm {}, expected 1", axis.norm())));
        }
        if !(half_angle > 0.0 && half_angle < FRAC_PI_2) {
            return Err(Error::arg(format!("half angle {half_angle} outside (0, π/2)")));
        }
        Ok(Self { axis, half_angle })
    }

    /// Cone around the first coordinate axis of ℝ^dim, half-angle in degrees.
    pub fn around_first_axis(dim: usize, half_angle_deg: f64) -> Result<Self> {
        let mut axis = vec![0.0; dim.max(1)];
        axis[0] = 1.0;
        Self::new(ParamVector::from_raw(axis), half_angle_deg.to_radians())
    }

    pub fn axis(&self) -> &ParamVector {
        &self.axis
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn dim(&self) -> usize {
        self.axis.dim()
    }

    /// Projection written as `a·u + b·v/‖v‖` where `x = t·u + v`, `v ⟂ u`, `s = ‖v‖`.
    fn projection_coeffs(&self, t: f64, s: f64) -> (f64, f64) {
        let (sin, cos) = self.half_angle.sin_cos();
        if s <= t * self.half_angle.tan() {
            return (t, s);
        }
        let along = t * cos + s * sin;
        if along <= 0.0 {
            return (0.0, 0.0);
        }
        (along * cos, along * sin)
    }
}

/// Euclidean projection onto a circular cone.
pub fn project_circular_cone(x: &ParamVector, cone: &CircularCone) -> Result<ParamVector> {
    if x.dim() != cone.dim() {
        return Err(Error::shape(format!("point dim {} vs cone dim {}", x.dim(), cone.dim())));
    }
    let u = cone.axis.as_slice();
    let t = dot(x.as_slice(), u);
    let v: Vec<f64> = x.iter().zip(u).map(|(xi, ui)| xi - t * ui).collect();
    let s = dot(&v, &v).sqrt();
    let (a, b) = cone.projection_coeffs(t, s);
    if (a, b) == (t, s) {
        return Ok(x.clone());
    }
    let vs = if s > 0.0 { b / s } else { 0.0 };
    Ok(ParamVector::from_raw(u.iter().zip(&v).map(|(ui, vi)| a * ui + vs * vi).collect()))
}

/// Monte-Carlo `E‖Π_C(g)‖²` for `g ~ N(0, I_dim)`, `dim` being the axis dimension.
pub fn statdim_cone_mc(cone: &CircularCone, samples: usize, stream: RngStream) -> Result<Estimate> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::arg(format!("need at least {MIN_MC_SAMPLES} samples, got {samples}")));
    }
    let u = cone.axis.as_slice();
    let d = cone.dim();
    Ok(mc_mean(stream, samples, |rng| {
        let g = standard_normals(rng, d);
        let t = dot(&g, u);
        let s = (dot(&g, &g) - t * t).max(0.0).sqrt();
        let (a, b) = cone.projection_coeffs(t, s);
        a * a + b * b
    }))
}

/// The fixed convex cone C in the intersection experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum KinematicsTarget {
    /// Span of the first `dim` coordinate vectors.
    Subspace { dim: usize },
    Cone(CircularCone),
}

/// Fraction of Haar rotations Q for which `C ∩ Q·S_k ≠ {0}`.
pub fn kinematics_transition(
    dim: usize,
    target: &KinematicsTarget,
    k: usize,
    trials: usize,
    stream: RngStream,
) -> Result<f64> {
    Ok(kinematics_sweep(dim, target, &[k], trials, stream)?[0])
}

/// [`kinematics_transition`] for several k at once.
///
/// Trial t draws one Haar frame from substream t and uses its first k
/// columns for every k in the sweep, so each k sees an exactly Haar-random
/// subspace while the curve shares its randomness across k.
pub fn kinematics_sweep(
    dim: usize,
    target: &KinematicsTarget,
    ks: &[usize],
    trials: usize,
    stream: RngStream,
) -> Result<Vec<f64>> {
    if trials < MIN_TRIALS {
        return Err(Error::arg(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    if let Some(&k) = ks.iter().find(|&&k| k > dim) {
        return Err(Error::arg(format!("subspace dim {k} exceeds ambient {dim}")));
    }
    match target {
        KinematicsTarget::Subspace { dim: k1 } if *k1 > dim => {
            return Err(Error::arg(format!("target subspace dim {k1} exceeds ambient {dim}")))
        }
        KinematicsTarget::Cone(c) if c.dim() != dim => {
            return Err(Error::shape(format!("cone dim {} vs ambient {dim}", c.dim())))
        }
        _ => {}
    }
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let hits: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.substream(t as u64).rng();
            let frame = if k_max > 0 { Some(linalg::haar_frame(dim, k_max, &mut rng)) } else { None };
            ks.iter()
                .map(|&k| match (&frame, k) {
                    (_, 0) | (None, _) => false,
                    (Some(q), k) => intersects(target, q, k, dim),
                })
                .collect()
        })
        .collect();
    Ok((0..ks.len())
        .map(|i| hits.iter().filter(|h| h[i]).count() as f64 / trials as f64)
        .collect())
}

fn intersects(target: &KinematicsTarget, frame: &nalgebra::DMatrix<f64>, k: usize, dim: usize) -> bool {
    match target {
        KinematicsTarget::Cone(cone) => {
            // Angle between the axis and span(q_1..q_k); the cone meets the
            // subspace iff that angle is within the half-angle.
            let u = cone.axis.as_slice();
            let mut proj = vec![0.0; dim];
            for j in 0..k {
                let col = frame.column(j);
                let c: f64 = col.iter().zip(u).map(|(a, b)| a * b).sum();
                for (p, q) in proj.iter_mut().zip(col.iter()) {
                    *p += c * q;
                }
            }
            let inside = dot(&proj, &proj).sqrt();
            let residual: f64 = u.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            residual.atan2(inside) <= cone.half_angle + ANGLE_TOL
        }
        KinematicsTarget::Subspace { dim: k1 } => {
            if *k1 == 0 {
                return false;
            }
            // Q·S_k meets span(e_1..e_k1) iff its component in the complement
            // (rows k1..dim) loses rank.
            let rest = dim - k1;
            if rest == 0 {
                return true;
            }
            let block = frame.view((*k1, 0), (rest, k)).into_owned();
            let rank = linalg::singular_values(&block).iter().filter(|&&s| s > ANGLE_TOL).count();
            rank < k
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(d: usize, eps: f64) -> QuadraticTask {
        QuadraticTask::axis_aligned(ParamVector::zeros(d), vec![1.0; d], eps).unwrap()
    }

    #[test]
    fn jensen_widths() {
        assert_eq!(width_jensen(&iso(3, 0.0), 3).unwrap(), 0.0);
        assert!((width_jensen(&iso(2, 0.5), 2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((width_jensen(&iso(49, 0.5), 49).unwrap() - 7.0).abs() < 1e-14);
        assert!(width_jensen(&iso(3, 0.5), 0).is_err());
        assert!(width_jensen(&iso(3, 0.5), 4).is_err());
    }

    #[test]
    fn mc_width_zero_epsilon() {
        let e = width_mc(&iso(5, 0.0), 1000, RngStream::new(1, 0)).unwrap();
        assert_eq!(e.mean, 0.0);
        assert!(width_mc(&iso(5, 0.5), 10, RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn mc_width_two_dims_is_root_half_pi() {
        // E‖g‖ for g ~ N(0, I_2) is √(π/2)
        let e = width_mc(&iso(2, 0.5), 200_000, RngStream::new(2, 0)).unwrap();
        let target = (std::f64::consts::PI / 2.0).sqrt();
        assert!(e.within(target, 4.0), "{e:?} vs {target}");
        assert!(e.mean < 2f64.sqrt());
    }

    #[test]
    fn gains_isotropic() {
        let g = marginal_gains(&iso(4, 0.5), 4).unwrap();
        let expected = [1.0, 2f64.sqrt() - 1.0, 3f64.sqrt() - 2f64.sqrt(), 2.0 - 3f64.sqrt()];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((g[1] - 0.41421).abs() < 1e-5);
        assert!((g[2] - 0.31784).abs() < 1e-5);
        let t = QuadraticTask::axis_aligned(ParamVector::zeros(1), vec![4.0], 0.5).unwrap();
        assert!((marginal_gains(&t, 1).unwrap()[0] - t.radii()[0]).abs() < 1e-15);
    }

    #[test]
    fn gains_depend_on_stored_order() {
        // High curvature stored first gives decreasing gains; the reverse
        // order front-loads a tiny direction and breaks monotonicity.
        let asc = QuadraticTask::axis_aligned(ParamVector::zeros(2), vec![1.0, 100.0], 0.5).unwrap();
        let g = marginal_gains(&asc, 2).unwrap();
        assert!(g[0] > g[1]);
        let desc = QuadraticTask::axis_aligned(ParamVector::zeros(2), vec![100.0, 1.0], 0.5).unwrap();
        let g = marginal_gains(&desc, 2).unwrap();
        assert!(g[0] < g[1]);
    }

    #[test]
    fn projected_width_cases() {
        let t = iso(2, 0.5); // r = (1, 1)
        let at_opt = projected_width_sq(&t, &ParamVector::zeros(2), 0).unwrap();
        assert_eq!(at_opt, 2.0);
        let one_away = ParamVector::new(vec![1.0, 0.0]).unwrap();
        assert!((projected_width_sq(&t, &one_away, 0).unwrap() - 1.0).abs() < 1e-15);
        let far = ParamVector::new(vec![1e9, 0.0]).unwrap();
        assert!(projected_width_sq(&t, &far, 0).unwrap() < 1e-17);
        assert!(projected_width_sq(&t, &one_away, 2).is_err());
    }

    #[test]
    fn redundancy_bound_cases() {
        let t = iso(10, 0.5);
        for k in 0..10 {
            assert!(redundancy_bound_check(&t, t.theta_star(), k).unwrap());
            assert_eq!(redundancy_slack(&t, t.theta_star(), k).unwrap(), 0.0);
        }
        let far = ParamVector::filled(10, 1e6);
        assert!(redundancy_bound_check(&t, &far, 9).unwrap());
    }

    #[test]
    fn statdim_subspace_exact() {
        assert_eq!(statdim_subspace(0, 7).unwrap(), 0.0);
        assert_eq!(statdim_subspace(7, 7).unwrap(), 7.0);
        assert!(statdim_subspace(8, 7).is_err());
        let e = statdim_subspace_mc(20, 50, 100_000, RngStream::new(3, 0)).unwrap();
        assert!(e.within(20.0, 3.0), "{e:?}");
    }

    #[test]
    fn cone_projection_cases() {
        let cone = CircularCone::around_first_axis(3, 45.0).unwrap();
        let inside = ParamVector::new(vec![2.0, 0.5, -0.3]).unwrap();
        assert_eq!(project_circular_cone(&inside, &cone).unwrap(), inside);
        let axis = ParamVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(project_circular_cone(&axis, &cone).unwrap(), axis);
        let polar = ParamVector::new(vec![-1.0, 0.1, 0.0]).unwrap();
        assert!(project_circular_cone(&polar, &cone).unwrap().iter().all(|&x| x == 0.0));
        let neg_axis = ParamVector::new(vec![-1.0, 0.0, 0.0]).unwrap();
        assert!(project_circular_cone(&neg_axis, &cone).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cone_projection_matches_grid_search() {
        // x ⟂ axis at 45°: minimize ‖p − x‖ over p = a(cos φ, sin φ cos β, sin φ sin β)
        let cone = CircularCone::around_first_axis(3, 45.0).unwrap();
        let x = ParamVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        let p = project_circular_cone(&x, &cone).unwrap();
        let phi = 45f64.to_radians();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for ia in 0..=400 {
            let a = ia as f64 * 0.005;
            for ib in 0..720 {
                let b = (ib as f64).to_radians() * 0.5;
                let q = [a * phi.cos(), a * phi.sin() * b.cos(), a * phi.sin() * b.sin()];
                let d = (q[0] - 0.0).powi(2) + (q[1] - 1.0).powi(2) + q[2].powi(2);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let dist_impl = (p.get(0).powi(2) + (p.get(1) - 1.0).powi(2) + p.get(2).powi(2)).sqrt();
        assert!((dist_impl - best.0.sqrt()).abs() < 1e-4);
        assert!((p.norm().powi(2) - 0.5).abs() < 1e-12);
        let angle = (p.get(0) / p.norm()).acos();
        assert!((angle - phi).abs() < 1e-12);
        assert!((best.1 - p.norm()).abs() < 0.01);
    }

    #[test]
    fn cone_requires_unit_axis() {
        assert!(CircularCone::new(ParamVector::new(vec![2.0, 0.0]).unwrap(), 0.3).is_err());
        assert!(CircularCone::around_first_axis(3, 90.0).is_err());
        assert!(CircularCone::around_first_axis(3, 0.0).is_err());
    }

    #[test]
    fn sublevel_samples_stay_inside() {
        let mut rng = RngStream::new(9, 0).rng();
        let basis = crate::linalg::haar_orthogonal(6, &mut rng);
        let theta = ParamVector::new(vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0]).unwrap();
        let t = QuadraticTask::new(theta, vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0], basis, 0.3).unwrap();
        for i in 0..200 {
            let p = t.sample_sublevel(RngStream::new(10, i));
            assert!(t.loss(&p).unwrap() <= t.epsilon() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn subspace_intersection_threshold() {
        let d = 12;
        let target = KinematicsTarget::Subspace { dim: 5 };
        let ks: Vec<usize> = (0..=d).collect();
        let p = kinematics_sweep(d, &target, &ks, 100, RngStream::new(1, 0)).unwrap();
        for (k, prob) in ks.iter().zip(&p) {
            let expected = if 5 + k > d { 1.0 } else { 0.0 };
            assert_eq!(*prob, expected, "k = {k}");
        }
    }

    #[test]
    fn kinematics_rejects_bad_input() {
        let target = KinematicsTarget::Subspace { dim: 3 };
        assert!(kinematics_transition(5, &target, 2, 10, RngStream::new(0, 0)).is_err());
        assert!(kinematics_transition(5, &target, 6, 100, RngStream::new(0, 0)).is_err());
        let cone = KinematicsTarget::Cone(CircularCone::around_first_axis(4, 30.0).unwrap());
        assert!(kinematics_transition(5, &cone, 2, 100, RngStream::new(0, 0)).is_err());
    }
}
