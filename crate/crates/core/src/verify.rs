//! Numerical check of the small-perturbation affine approximation: fit an
//! affine map to exactly projected points at several perturbation
//! magnitudes and report how the fit residual scales.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    binomial_projection, fit_affine, project, rotation_exact, PerturbationParams, Point3, RotationMatrix,
};

/// Accepted residual ratio for a doubling of the magnitude.
pub const RATIO_BAND: (f64, f64) = (2.5, 6.0);

/// Angles `(m, −m, 0.7m)` and translation `(0.3, −0.2, 0.5)·m·z0`.
pub fn perturbation(magnitude: f64, z0: f64) -> PerturbationParams {
    let m = magnitude;
    PerturbationParams::new(m, -m, 0.7 * m, [0.3 * m * z0, -0.2 * m * z0, 0.5 * m * z0], z0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyRow {
    pub magnitude: f64,
    /// Max absolute error of the least-squares affine fit.
    pub residual: f64,
    /// Max absolute error of the `(1 + δ)` binomial projection.
    pub binomial_residual: f64,
    /// `residual / previous residual`.
    pub ratio: Option<f64>,
    /// Whether this row's ratio is gated (magnitude doubled).
    pub gated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub z0: f64,
    pub points: usize,
    pub seed: u64,
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.gated)
            .all(|r| r.ratio.is_some_and(|q| (RATIO_BAND.0..=RATIO_BAND.1).contains(&q)))
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "z0 = {}, points = {}, seed = {}", self.z0, self.points, self.seed)?;
        writeln!(
            f,
            "{:>10} {:>14} {:>8} {:>16}",
            "magnitude", "fit_residual", "ratio", "binomial_resid"
        )?;
        for r in &self.rows {
            let ratio = r.ratio.map_or("-".to_string(), |q| format!("{q:.3}"));
            writeln!(
                f,
                "{:>10} {:>14.6e} {:>8} {:>16.6e}",
                r.magnitude, r.residual, ratio, r.binomial_residual
            )?;
        }
        write!(
            f,
            "doubling ratios in [{}, {}]: {}",
            RATIO_BAND.0,
            RATIO_BAND.1,
            if self.passed() { "yes" } else { "no" }
        )
    }
}

/// Residuals at each magnitude over `points` random scene points with
/// `x, y ∈ [−1, 1]` at depth `z0`; the same points are reused throughout.
pub fn approx_verify(magnitudes: &[f64], points: usize, z0: f64, seed: u64) -> Result<VerifyReport> {
    if magnitudes.is_empty() {
        return Err(Error::config("magnitudes", "no magnitudes given"));
    }
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(Error::config("z0", format!("depth must be positive, got {z0}")));
    }
    if points < 3 {
        return Err(Error::config("points", "need at least 3 points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud: Vec<Point3> = (0..points)
        .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), z0))
        .collect();
    let mut rows: Vec<VerifyRow> = Vec::with_capacity(magnitudes.len());
    for &m in magnitudes {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::config(
                "magnitudes",
                format!("magnitude must be non-negative, got {m}"),
            ));
        }
        let p = perturbation(m, z0);
        p.validate()?;
        let r = rotation_exact(&p);
        let mut pairs = Vec::with_capacity(points);
        let mut binomial_residual: f64 = 0.0;
        for &pt in &cloud {
            let before = project(pt, &RotationMatrix::identity(), [0.0; 3])?;
            let after = project(pt, &r, p.t)?;
            let approx = binomial_projection(pt, &p);
            binomial_residual = binomial_residual.max((after.u - approx.u).abs().max((after.v - approx.v).abs()));
            pairs.push((before, after));
        }
        let (_, residual) = fit_affine(&pairs)?;
        let prev = rows.last();
        let ratio = prev.filter(|r| r.residual > 0.0).map(|r| residual / r.residual);
        let gated = prev.is_some_and(|r| r.magnitude > 0.0 && ((m / r.magnitude) - 2.0).abs() < 1e-9);
        rows.push(VerifyRow {
            magnitude: m,
            residual,
            binomial_residual,
            ratio,
            gated,
        });
    }
    Ok(VerifyReport { z0, points, seed, rows })
}
