//! Spectral diagnostics for a set of expert deltas: PCA explained variance,
//! principal angles between subspaces and log-band singular-value counts.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::tensor_io::{DenseMatrix, LowRankDelta};

/// Singular values below this count as exact zeros.
pub const ZERO_SV: f64 = 1e-30;
/// Number of finite log bands `[e^{−(k+1)}, e^{−k})`, k = 0..BANDS−1.
pub const BANDS: usize = 13;
const DRIFT_TOL: f64 = 1e-8;
const CUMULATIVE_TOL: f64 = 1e-12;

/// Counts of singular values per band. A value exactly equal to `e^{−k}`
/// belongs to band `k − 1` (the bands are half-open on the right).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandHistogram {
    /// Values ≥ 1.
    pub overflow: usize,
    pub bands: [usize; BANDS],
    /// Values below `e^{−13}`, zeros included.
    pub underflow: usize,
    /// Values below [`ZERO_SV`] (a subset of `underflow`).
    pub zeros: usize,
}

impl BandHistogram {
    pub fn from_values(values: &[f64]) -> Self {
        let mut h = Self { overflow: 0, bands: [0; BANDS], underflow: 0, zeros: 0 };
        for &v in values {
            if v < ZERO_SV {
                h.zeros += 1;
            }
            match band_index(v) {
                None if v >= 1.0 => h.overflow += 1,
                None => h.underflow += 1,
                Some(k) => h.bands[k] += 1,
            }
        }
        h
    }

    pub fn total(&self) -> usize {
        self.overflow + self.underflow + self.bands.iter().sum::<usize>()
    }

    /// Fractions in the order overflow, bands 0..12, underflow.
    pub fn fractions(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        std::iter::once(self.overflow)
            .chain(self.bands.iter().copied())
            .chain(std::iter::once(self.underflow))
            .map(|c| c as f64 / t)
            .collect()
    }

    pub fn band_fraction(&self, k: usize) -> f64 {
        self.bands[k] as f64 / self.total().max(1) as f64
    }
}

/// Band of `v`, or None for the overflow/underflow bands. Edges are the f64
/// values `exp(−k)` themselves, so exact powers land on the documented side.
fn band_index(v: f64) -> Option<usize> {
    if !(v < 1.0) || !(v >= (-(BANDS as f64)).exp()) {
        return None;
    }
    let mut k = (-v.ln()).floor().max(0.0) as usize;
    // ln rounding can put v one band off near an edge
    while k > 0 && v >= (-(k as f64)).exp() {
        k -= 1;
    }
    while k + 1 < BANDS && v < (-((k + 1) as f64)).exp() {
        k += 1;
    }
    Some(k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub explained_fractions: Vec<f64>,
    pub bands: BandHistogram,
    /// Whether rows were centered on the mean expert before the SVD.
    pub centered: bool,
    /// All singular values are zero; fractions are then all zero.
    pub degenerate: bool,
}

/// PCA of `stacked` (rows = experts, cols = flattened parameters).
pub fn pca_explained(stacked: &DenseMatrix, center: bool) -> Result<SpectrumReport> {
    if stacked.rows() == 0 || stacked.cols() == 0 {
        return Err(Error::shape("PCA needs at least one row and one column"));
    }
    let mut m = stacked.to_nalgebra();
    if center {
        for c in 0..m.ncols() {
            let mean = m.column(c).mean();
            m.column_mut(c).add_scalar_mut(-mean);
        }
    }
    let sv = singular_values(&m);
    Ok(spectrum_from_values(sv, center))
}

fn spectrum_from_values(sv: Vec<f64>, centered: bool) -> SpectrumReport {
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let degenerate = sv.iter().all(|&s| s < ZERO_SV);
    let explained_fractions = if degenerate {
        vec![0.0; sv.len()]
    } else {
        sv.iter().map(|s| s * s / total).collect()
    };
    let bands = BandHistogram::from_values(&sv);
    SpectrumReport { singular_values: sv, explained_fractions, bands, centered, degenerate }
}

/// Smallest m whose cumulative explained fraction reaches `frac`.
pub fn components_for_threshold(report: &SpectrumReport, frac: f64) -> Result<usize> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::arg(format!("frac must lie in (0, 1], got {frac}")));
    }
    if report.degenerate {
        return Err(Error::numeric("spectrum is degenerate (all singular values zero)"));
    }
    let mut acc = 0.0;
    for (i, f) in report.explained_fractions.iter().enumerate() {
        acc += f;
        if acc >= frac - CUMULATIVE_TOL {
            return Ok(i + 1);
        }
    }
    Ok(report.explained_fractions.len())
}

/// Principal angles in degrees, ascending, between the column spans of `a`
/// and `b`. There are `min(cols)` angles.
///
/// Cosines come from the singular values of `AᵀB` and sines from those of
/// `B − A·AᵀB`; combining them with atan2 keeps small angles accurate.
pub fn principal_angles(a: &DenseMatrix, b: &DenseMatrix) -> Result<Vec<f64>> {
    if a.cols() == 0 || b.cols() == 0 {
        return Err(Error::arg("principal angles need non-empty bases"));
    }
    if a.rows() != b.rows() {
        return Err(Error::shape(format!("bases live in R^{} and R^{}", a.rows(), b.rows())));
    }
    let (mut qa, mut qb) = (orthonormal_basis(a)?, orthonormal_basis(b)?);
    if qa.ncols() < qb.ncols() {
        std::mem::swap(&mut qa, &mut qb);
    }
    let cross = qa.transpose() * &qb;
    let cos = singular_values(&cross);
    let residual = &qb - &qa * &cross;
    let mut sin = singular_values(&residual);
    sin.reverse();
    let mut angles: Vec<f64> = cos
        .iter()
        .zip(&sin)
        .map(|(&c, &s)| s.atan2(c).to_degrees().clamp(0.0, 90.0))
        .collect();
    angles.sort_by(|x, y| x.total_cmp(y));
    Ok(angles)
}

fn orthonormal_basis(m: &DenseMatrix) -> Result<DMatrix<f64>> {
    if m.cols() > m.rows() {
        return Err(Error::shape(format!("{} basis vectors in R^{}", m.cols(), m.rows())));
    }
    let x = m.to_nalgebra();
    if m.orthonormality_residual() <= DRIFT_TOL {
        return Ok(x);
    }
    let qr = x.qr();
    let r = qr.r();
    let scale = (0..r.nrows()).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..r.nrows()).any(|j| r[(j, j)].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::arg("basis columns are linearly dependent"));
    }
    Ok(qr.q())
}

/// Singular values of a dense matrix or a low-rank delta, descending, with
/// `min(rows, cols)` entries.
pub enum SvSource<'a> {
    Dense(&'a DenseMatrix),
    LowRank(&'a LowRankDelta),
}

impl SvSource<'_> {
    pub fn singular_values(&self) -> Vec<f64> {
        match self {
            SvSource::Dense(m) => singular_values(&m.to_nalgebra()),
            SvSource::LowRank(d) => {
                // sv(s·L·R) = |s|·sv(R_L·R_Rᵀ) where L = Q_L·R_L and Rᵀ = Q_R·R_R
                let rl = d.left().to_nalgebra().qr().r();
                let rr = d.right().to_nalgebra().transpose().qr().r();
                let mut sv: Vec<f64> =
                    singular_values(&(rl * rr.transpose())).into_iter().map(|s| s * d.scale().abs()).collect();
                sv.resize(d.d_out().min(d.d_in()), 0.0);
                sv
            }
        }
    }
}

pub fn sv_tail_stats(source: SvSource<'_>) -> BandHistogram {
    BandHistogram::from_values(&source.singular_values())
}

pub const SPECTRUM_CSV_HEADER: &str = "component,singular_value,explained_fraction,cumulative_fraction";
pub const BANDS_CSV_HEADER: &str = "band,lower_inclusive,upper_exclusive,count,fraction";

pub fn write_spectrum_csv(report: &SpectrumReport, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{SPECTRUM_CSV_HEADER}")?;
    let mut acc = 0.0;
    for (i, (s, f)) in report.singular_values.iter().zip(&report.explained_fractions).enumerate() {
        acc += f;
        writeln!(out, "{},{s:e},{f:e},{acc:e}", i + 1)?;
    }
    Ok(())
}

pub fn write_bands_csv(hist: &BandHistogram, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{BANDS_CSV_HEADER}")?;
    let fr = hist.fractions();
    writeln!(out, "overflow,1,inf,{},{:e}", hist.overflow, fr[0])?;
    for k in 0..BANDS {
        let lo = (-((k + 1) as f64)).exp();
        let hi = (-(k as f64)).exp();
        writeln!(out, "{k},{lo:e},{hi:e},{},{:e}", hist.bands[k], fr[k + 1])?;
    }
    writeln!(out, "underflow,0,{:e},{},{:e}", (-(BANDS as f64)).exp(), hist.underflow, fr[BANDS + 1])?;
    Ok(())
}
