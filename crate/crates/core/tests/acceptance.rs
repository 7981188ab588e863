//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use merge_limits::experiments::{
    render_csv, run_kinematics, run_rht_study, run_saturation, ExperimentConfig, KinematicsConfig,
    KinematicsTargetSpec,
};
use merge_limits::geometry::{
    kinematics_sweep, marginal_gains, projected_width_sq, width_jensen, width_mc, KinematicsTarget, QuadraticTask,
};
use merge_limits::merge::{equicorrelated_variance_mc, n_max};
use merge_limits::rht::{
    coverage_proxy, gaussian_difference, ks_distance, rht_inverse, rht_map, tail_diagnostics, ParamSampler,
    RhtDensity, RhtParams, TinyNetSpec,
};
use merge_limits::subspace::{
    components_for_threshold, pca_explained, principal_angles, sv_tail_stats, BandHistogram, SvSource,
};
use merge_limits::tensor_io::gaussian_sample;
use merge_limits::{DenseMatrix, LowRankDelta, ParamVector, RngStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("variance law", c1_variance_law),
        ("variance lower bound", c2_lower_bound),
        ("merge-count bound", c3_n_max),
        ("jensen vs MC width", c4_width),
        ("concavity of width gains", c5_concavity),
        ("redundancy boundary", c6_redundancy),
        ("kinematics transition", c7_kinematics),
        ("gaussian difference variance", c8_variance_additivity),
        ("RHT pushforward density", c9_pushforward),
        ("coverage pair", c10_coverage),
        ("saturation end-to-end", c11_saturation),
        ("subspace diagnostics", c12_subspace),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} ({name}, {secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} ({name}, {secs:.1}s): {detail}", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn timed<T>(limit: Duration, f: impl FnOnce() -> T) -> Result<(T, f64), String> {
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    ensure!(start.elapsed() <= limit, "took {secs:.1}s, limit {}s", limit.as_secs());
    Ok((out, secs))
}

const RHOS: [f64; 3] = [0.0, 0.3, 0.7];
const DRAWS: usize = 1_000_000;

fn variance_sweep() -> Vec<Vec<merge_limits::Estimate>> {
    RHOS.iter()
        .enumerate()
        .map(|(i, &rho)| equicorrelated_variance_mc(1.0, rho, 10, DRAWS, RngStream::new(2024, i as u64)).unwrap())
        .collect()
}

fn c1_variance_law() -> Outcome {
    let (sweep, secs) = timed(Duration::from_secs(60), variance_sweep)?;
    let mut worst: f64 = 0.0;
    for (rho, row) in RHOS.iter().zip(&sweep) {
        for (k, est) in row.iter().enumerate() {
            let n = (k + 1) as f64;
            let exact = rho + (1.0 - rho) / n;
            let rel = (est.mean - exact).abs() / exact;
            ensure!(rel <= 0.02, "rho {rho}, n {n}: MC {} vs {exact} ({:.3}%)", est.mean, 100.0 * rel);
            worst = worst.max(rel);
        }
    }
    Ok(format!("30 cells at 1e6 draws, worst relative error {:.3}%, {secs:.1}s", 100.0 * worst))
}

fn c2_lower_bound() -> Outcome {
    let sweep = variance_sweep();
    let mut min_margin = f64::INFINITY;
    for (rho, row) in RHOS.iter().zip(&sweep) {
        for (k, est) in row.iter().enumerate() {
            let margin = est.mean - (rho - 3.0 * est.stderr);
            ensure!(margin >= 0.0, "rho {rho}, n {}: MC {} below {rho} - 3se", k + 1, est.mean);
            min_margin = min_margin.min(margin);
        }
    }
    Ok(format!("all 30 MC variances above rho - 3se, smallest margin {min_margin:.4}"))
}

fn c3_n_max() -> Outcome {
    let m = n_max(1.0, 0.5, 0.1).map_err(|e| e.to_string())?;
    ensure!(m == 5, "n_max(1, 0.5, 0.1) = {m}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let sigma2: f64 = rng.random_range(0.01..10.0);
        let rho: f64 = rng.random_range(0.0..0.99);
        let delta: f64 = rng.random_range(1e-3..1.0);
        let m = n_max(sigma2, rho, delta).map_err(|e| e.to_string())?;
        let gap = sigma2 * (1.0 - rho);
        ensure!(m == 0 || gap / (m as f64) >= delta, "case {case}: gain at n_max = {m} below delta");
        ensure!(gap / ((m + 1) as f64) < delta, "case {case}: gain at n_max + 1 = {} still >= delta", m + 1);
    }
    Ok("n_max(1, 0.5, 0.1) = 5; boundary holds on 100 random (sigma2, rho, delta)".into())
}

fn random_spectrum(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = rng.random_range(1..=200usize);
    let cond: f64 = rng.random_range(1.0..=100.0);
    let mut l: Vec<f64> = (0..d).map(|_| cond.powf(rng.random_range(0.0..=1.0))).collect();
    l.sort_by(|a, b| a.total_cmp(b));
    l
}

fn task_with(eigs: Vec<f64>, epsilon: f64) -> QuadraticTask {
    let d = eigs.len();
    QuadraticTask::axis_aligned(ParamVector::zeros(d), eigs, epsilon).unwrap()
}

fn c4_width() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut max_z = f64::NEG_INFINITY;
    for case in 0..100 {
        let task = task_with(random_spectrum(&mut rng), rng.random_range(0.05..2.0));
        let j = width_jensen(&task, task.dim()).map_err(|e| e.to_string())?;
        let mc = width_mc(&task, 20_000, RngStream::new(4, case)).map_err(|e| e.to_string())?;
        ensure!(mc.mean <= j + 3.0 * mc.stderr, "case {case}: MC {} > Jensen {j} + 3se", mc.mean);
        max_z = max_z.max((mc.mean - j) / mc.stderr);
    }
    let iso = task_with(vec![1.0; 400], 0.5);
    let mc = width_mc(&iso, 100_000, RngStream::new(4, 1000)).map_err(|e| e.to_string())?;
    let rel = (mc.mean - 20.0).abs() / 20.0;
    ensure!(rel <= 0.005, "H = I, D = 400: MC width {} vs 20 ({:.3}%)", mc.mean, 100.0 * rel);
    Ok(format!(
        "100 spectra, max (MC - Jensen)/se = {max_z:.2}; H = I, D = 400 width {:.4} ({:.3}% from 20)",
        mc.mean,
        100.0 * rel
    ))
}

fn c5_concavity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pairs = 0;
    for case in 0..100 {
        let task = task_with(random_spectrum(&mut rng), rng.random_range(0.05..2.0));
        let g = marginal_gains(&task, task.dim()).map_err(|e| e.to_string())?;
        for (m, w) in g.windows(2).enumerate() {
            ensure!(w[1] < w[0], "case {case}: gain {} at M = {} not below {}", w[1], m + 2, w[0]);
            pairs += 1;
        }
    }
    Ok(format!("100 spectra, {pairs} consecutive gain pairs, zero violations"))
}

fn c6_redundancy() -> Outcome {
    let d = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eigs = {
        let mut l: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..20.0)).collect();
        l.sort_by(|a, b| a.total_cmp(b));
        l
    };
    let theta_star = ParamVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let task = QuadraticTask::axis_aligned(theta_star.clone(), eigs, 0.5).unwrap();
    for k in 0..d {
        let w = projected_width_sq(&task, &theta_star, k).map_err(|e| e.to_string())?;
        ensure!(w == (d - k) as f64, "k {k}: {w} != {}", d - k);
    }
    let dir = {
        let v = ParamVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        v.scaled(1.0 / v.norm())
    };
    let k = 10;
    let mut prev = f64::INFINITY;
    for step in 0..50 {
        let t = 0.02 * step as f64 * (1.0 + step as f64);
        let theta = theta_star.add(&dir.scaled(t)).unwrap();
        let w = projected_width_sq(&task, &theta, k).map_err(|e| e.to_string())?;
        ensure!(w <= (d - k) as f64, "step {step}: {w} above D - k");
        if step > 0 {
            ensure!(w < prev, "step {step}: {w} not below {prev}");
        }
        prev = w;
    }
    Ok(format!("exact D - k at theta*, k = 0..{d}; strictly decreasing over a 50-point distance scan"))
}

fn c7_kinematics() -> Outcome {
    let (detail, secs) = timed(Duration::from_secs(300), || -> Outcome {
        let d = 40;
        let ks: Vec<usize> = (0..=d).collect();
        for k1 in [1usize, 10, 15, 20, 39] {
            let p = kinematics_sweep(d, &KinematicsTarget::Subspace { dim: k1 }, &ks, 200, RngStream::new(7, k1 as u64))
                .map_err(|e| e.to_string())?;
            for (&k2, &prob) in ks.iter().zip(&p) {
                let expect = if k1 + k2 > d { 1.0 } else { 0.0 };
                ensure!(prob == expect, "subspace k1 {k1}, k2 {k2}: P = {prob}, expected {expect}");
            }
        }
        let d = 60;
        let tol = (2.0 * (d as f64).sqrt()).ceil();
        let mut parts = Vec::new();
        for angle in [20.0, 30.0, 45.0] {
            let kc = KinematicsConfig {
                dimension: d,
                target: KinematicsTargetSpec::Cone { half_angle_deg: angle },
                ks: None,
                trials: 500,
                statdim_samples: 100_000,
            };
            let r = run_kinematics(&kc, 42).map_err(|e| e.to_string())?;
            let c = r.crossing.ok_or_else(|| format!("{angle} deg: no 50% crossing"))?;
            let off = c as f64 - r.predicted_crossing;
            ensure!(off.abs() <= tol, "{angle} deg: crossing {c} vs predicted {:.2}", r.predicted_crossing);
            parts.push(format!("{angle} deg crossing {c} vs {:.2}", r.predicted_crossing));
        }
        Ok(format!("subspace exact at D = 40; cone (tol {tol}): {}", parts.join(", ")))
    })?;
    detail.map(|s| format!("{s}; {secs:.1}s"))
}

fn c8_variance_additivity() -> Outcome {
    let n = 1_000_000;
    let mut parts = Vec::new();
    for (i, (sigma, sigma_g)) in [(1.0, 0.5), (1.0, 0.1), (2.0, 1.0)].into_iter().enumerate() {
        let w = gaussian_sample(RngStream::new(8, 2 * i as u64), n, 0.0, sigma).unwrap();
        let out = gaussian_difference(&w, 0.0, sigma_g, RngStream::new(8, 2 * i as u64 + 1)).unwrap();
        let expect = sigma * sigma + sigma_g * sigma_g;
        let rel = (out.variance() - expect).abs() / expect;
        ensure!(rel <= 0.01, "({sigma}, {sigma_g}): Var {} vs {expect}", out.variance());
        parts.push(format!("({sigma}, {sigma_g}) {:.3}%", 100.0 * rel));
    }
    Ok(format!("relative errors {}", parts.join(", ")))
}

fn c9_pushforward() -> Outcome {
    let n = 1_000_000;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut parts = Vec::new();
    for (i, gamma) in [0.3, 0.5, 0.8].into_iter().enumerate() {
        let p = RhtParams::pure_power(gamma).map_err(|e| e.to_string())?;
        let x = gaussian_sample(RngStream::new(9, i as u64), n, 0.0, 1.0).unwrap();
        let y: Vec<f64> = x.iter().map(|&v| rht_map(v, &p)).collect();
        // P(T(X) <= y) = Φ(sign(y)|y|^{1/γ})
        let oracle = |t: f64| normal.cdf(t.signum() * t.abs().powf(1.0 / gamma));
        let ks = ks_distance(&y, oracle);
        ensure!(ks <= 0.02, "gamma {gamma}: KS {ks} against the exact CDF");
        let density = RhtDensity::new(&p, 1.0).map_err(|e| e.to_string())?;
        let ks_quad = ks_distance(&y, |t| density.cdf(t));
        ensure!(ks_quad <= 0.02, "gamma {gamma}: KS {ks_quad} against the quadrature CDF");
        let roundtrip = x.iter().map(|&v| (rht_inverse(rht_map(v, &p), &p) - v).abs()).fold(0.0, f64::max);
        ensure!(roundtrip <= 1e-9, "gamma {gamma}: inverse roundtrip error {roundtrip}");
        let tails = tail_diagnostics(&y, 0.05, Some(&oracle)).map_err(|e| e.to_string())?;
        parts.push(format!(
            "gamma {gamma}: KS {ks:.4} / {ks_quad:.4}, roundtrip {roundtrip:.1e}, hill {:.2}, excess kurtosis {:.2}",
            tails.hill_exponent.mean, tails.excess_kurtosis
        ));
    }
    let p = RhtParams::default();
    let x = gaussian_sample(RngStream::new(9, 10), 100_000, 0.0, 3.0).unwrap();
    let roundtrip = x.iter().map(|&v| (rht_inverse(rht_map(v, &p), &p) - v).abs()).fold(0.0, f64::max);
    ensure!(roundtrip <= 1e-9, "default params: inverse roundtrip error {roundtrip}");
    Ok(format!("{}; default-params roundtrip {roundtrip:.1e}", parts.join("; ")))
}

/// Coverage pair for the shipped default config, fixed at first computation.
const PINNED_C1: f64 = 4.869474756988826;
const PINNED_C2: f64 = 5.920662308639974;
const PINNED_C2_GREATER: bool = true;

fn c10_coverage() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let cfg = ExperimentConfig::load(path).map_err(|e| e.to_string())?;
    ensure!(cfg == ExperimentConfig::default(), "configs/default.json differs from the built-in defaults");

    let net = TinyNetSpec::default();
    let sampler = ParamSampler::Rht { std: 1.0, params: cfg.rht };
    let a = coverage_proxy(&net, &sampler, 5000, RngStream::new(10, 0)).map_err(|e| e.to_string())?;
    let b = coverage_proxy(&net, &sampler, 5000, RngStream::new(10, 0)).map_err(|e| e.to_string())?;
    ensure!(
        serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap(),
        "coverage_proxy differs between identical runs"
    );

    let r1 = run_rht_study(&cfg).map_err(|e| e.to_string())?;
    let r2 = run_rht_study(&cfg).map_err(|e| e.to_string())?;
    ensure!(render_csv(&r1) == render_csv(&r2), "rht study CSV differs between identical runs");
    let (c1, c2) = (r1.coverage_baseline.proxy, r1.coverage_rht.proxy);
    let detail = format!(
        "C1 {:?} (se {:.1e}), C2 {:?} (se {:.1e}), C2 > C1: {} (z {:.1})",
        c1.mean, c1.stderr, c2.mean, c2.stderr, r1.c2_greater, r1.z_score
    );
    ensure!(r1.c2_greater == PINNED_C2_GREATER, "C2 > C1 is {}, pinned {PINNED_C2_GREATER}; {detail}", r1.c2_greater);
    ensure!((c1.mean - PINNED_C1).abs() <= 1e-9 * PINNED_C1, "C1 moved from pinned {PINNED_C1}; {detail}");
    ensure!((c2.mean - PINNED_C2).abs() <= 1e-9 * PINNED_C2, "C2 moved from pinned {PINNED_C2}; {detail}");
    Ok(format!("deterministic; {detail}"))
}

fn c11_saturation() -> Outcome {
    let cfg = ExperimentConfig { sigma2: 1.0, rho: 0.5, delta: 0.05, dimension: 500, experts: 10, ..Default::default() };
    let (r, secs) = timed(Duration::from_secs(120), || run_saturation(&cfg))?;
    let r = r.map_err(|e| e.to_string())?;
    ensure!(r.stop_successive_gain == Some(3), "successive-gain stop at {:?}", r.stop_successive_gain);
    ensure!(r.n_max == Some(10), "n_max {:?}", r.n_max);
    for w in r.rows.windows(2) {
        ensure!(w[1].expected_loss <= w[0].expected_loss, "loss rises at n = {}", w[1].n);
    }
    Ok(format!("stops at n = 3, n_max = 10, loss non-increasing over {} rows, {secs:.1}s", r.rows.len()))
}

fn orthogonal(n: usize, seed: u64) -> nalgebra::DMatrix<f64> {
    let g = gaussian_sample(RngStream::new(seed, 12), n * n, 0.0, 1.0).unwrap();
    nalgebra::DMatrix::from_row_slice(n, n, g.as_slice()).qr().q()
}

fn c12_subspace() -> Outcome {
    let e = |n: usize, cols: &[Vec<f64>]| DenseMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let unit = |n: usize, k: usize| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let a = e(4, &[unit(4, 0), unit(4, 1)]);
    let same = principal_angles(&a, &a).map_err(|e| e.to_string())?;
    ensure!(same.iter().all(|&t| t.abs() <= 1e-10), "identical subspaces: {same:?}");
    let ortho = principal_angles(&a, &e(4, &[unit(4, 2), unit(4, 3)])).map_err(|e| e.to_string())?;
    ensure!(ortho.iter().all(|&t| (t - 90.0).abs() <= 1e-10), "orthogonal pair: {ortho:?}");
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let diag = principal_angles(&e(2, &[vec![1.0, 0.0]]), &e(2, &[vec![h, h]])).map_err(|e| e.to_string())?;
    ensure!(diag.len() == 1 && (diag[0] - 45.0).abs() <= 1e-10, "e1 vs diagonal: {diag:?}");

    // planted spectrum: 3 of 1000 values in [e^-2, e^-1), the rest in [e^-12, e^-10)
    let n = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut planted: Vec<f64> = (0..n).map(|_| (-rng.random_range(10.05..11.95f64)).exp()).collect();
    planted[..3].copy_from_slice(&[0.15, 0.22, 0.33]);
    let expect = BandHistogram::from_values(&planted);
    let (u, v) = (orthogonal(n, 1), orthogonal(n, 2));
    let m = &u * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(planted.clone())) * v.transpose();
    let got = sv_tail_stats(SvSource::Dense(&DenseMatrix::from_nalgebra(&m)));
    let worst = count_gap(&got, &expect);
    ensure!(worst <= 1, "dense planted spectrum off by {worst} counts: {got:?} vs {expect:?}");
    ensure!(expect.bands[1] == 3 && expect.band_fraction(1) == 0.003, "planted band 1 is not 0.3%");

    // low-rank form: rank 40 factors, SVs padded with zeros to min(d_out, d_in)
    let (d_out, d_in, r) = (120, 90, 40);
    let lr_vals: Vec<f64> = planted[..r].to_vec();
    let left = DenseMatrix::from_nalgebra(&(orthogonal(d_out, 3).columns(0, r) * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lr_vals.clone()))));
    let right = DenseMatrix::from_nalgebra(&orthogonal(d_in, 4).columns(0, r).transpose());
    let delta = LowRankDelta::new(left, right, 1.0).map_err(|e| e.to_string())?;
    let mut padded = lr_vals;
    padded.resize(d_out.min(d_in), 0.0);
    let worst_lr = count_gap(&sv_tail_stats(SvSource::LowRank(&delta)), &BandHistogram::from_values(&padded));
    ensure!(worst_lr <= 1, "low-rank planted spectrum off by {worst_lr} counts");

    let (rows, cols, rank) = (30, 200, 5);
    let a = gaussian_sample(RngStream::new(12, 20), rows * rank, 0.0, 1.0).unwrap();
    let b = gaussian_sample(RngStream::new(12, 21), rank * cols, 0.0, 1.0).unwrap();
    let stacked = DenseMatrix::new(rows, rank, a.into_vec())
        .unwrap()
        .matmul(&DenseMatrix::new(rank, cols, b.into_vec()).unwrap())
        .unwrap();
    let mut comps = Vec::new();
    for center in [true, false] {
        let report = pca_explained(&stacked, center).map_err(|e| e.to_string())?;
        let c = components_for_threshold(&report, 0.999).map_err(|e| e.to_string())?;
        ensure!(c <= rank, "rank-{rank} data needs {c} components (center {center})");
        comps.push(c);
    }
    Ok(format!(
        "three angle cases exact; planted bands within {worst} / {worst_lr} counts; rank-{rank} data needs {comps:?} components"
    ))
}

fn count_gap(a: &BandHistogram, b: &BandHistogram) -> usize {
    let mut worst = a.overflow.abs_diff(b.overflow).max(a.underflow.abs_diff(b.underflow)).max(a.zeros.abs_diff(b.zeros));
    for (x, y) in a.bands.iter().zip(&b.bands) {
        worst = worst.max(x.abs_diff(*y));
    }
    worst
}
