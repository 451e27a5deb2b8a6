//! Small-perturbation camera geometry and 2×3 affine algebra.
//!
//! A distant planar object seen through a pinhole camera that undergoes a
//! slight yaw/pitch/roll and translation moves, to second order, by an affine
//! map close to the identity. This module holds the rotation models, the
//! projection, a least-squares affine fit used to check how good that affine
//! description is, and the identity-deviation penalty used by the adversary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest angle / relative translation for which the second-order model is
/// accepted.
pub const REGIME_LIMIT: f64 = 0.3;

const FIT_RIDGE: f64 = 1e-12;

/// A small change of camera pose: yaw `alpha`, pitch `beta`, roll `gamma`
/// (radians), translation `t` and nominal object depth `z0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub t: [f64; 3],
    pub z0: f64,
}

impl PerturbationParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, t: [f64; 3], z0: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            t,
            z0,
        }
    }

    /// Pure rotation at depth `z0`.
    pub fn angles(alpha: f64, beta: f64, gamma: f64, z0: f64) -> Self {
        Self::new(alpha, beta, gamma, [0.0; 3], z0)
    }

    pub fn relative_translation(&self) -> f64 {
        norm3(self.t) / self.z0
    }

    /// Checks `z0 > 0` and the small-angle regime.
    pub fn validate(&self) -> Result<()> {
        let values = [
            self.alpha, self.beta, self.gamma, self.z0, self.t[0], self.t[1], self.t[2],
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Regime("non-finite perturbation".into()));
        }
        if self.z0 <= 0.0 {
            return Err(Error::Regime(format!("z0 must be positive, got {}", self.z0)));
        }
        for (name, angle) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if angle.abs() > REGIME_LIMIT {
                return Err(Error::Regime(format!(
                    "|{name}| = {} exceeds {REGIME_LIMIT}",
                    angle.abs()
                )));
            }
        }
        let rel = self.relative_translation();
        if rel > REGIME_LIMIT {
            return Err(Error::Regime(format!("|t|/z0 = {rel} exceeds {REGIME_LIMIT}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub u: f64,
    pub v: f64,
}

impl Point2 {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    pub fn mul(&self, other: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        RotationMatrix(out)
    }

    pub fn transpose(&self) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.0[j][i];
            }
        }
        RotationMatrix(out)
    }

    pub fn frobenius_distance(&self, other: &RotationMatrix) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = self.0[i][j] - other.0[i][j];
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// ‖RᵀR − I‖_F.
    pub fn orthogonality_error(&self) -> f64 {
        self.transpose()
            .mul(self)
            .frobenius_distance(&RotationMatrix::identity())
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// `[[a1, a2, a3], [a4, a5, a6]]` acting on homogeneous `[u, v, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrix(pub [[f64; 3]; 2]);

impl Default for AffineMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineMatrix {
    pub const IDENTITY: AffineMatrix = AffineMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn from_entries(a: [f64; 6]) -> Self {
        Self([[a[0], a[1], a[2]], [a[3], a[4], a[5]]])
    }

    pub fn entries(&self) -> [f64; 6] {
        let m = &self.0;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]]
    }

    /// Exact comparison against `[[1,0,0],[0,1,0]]`.
    pub fn is_identity(&self) -> bool {
        self.entries() == Self::IDENTITY.entries()
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|v| v.is_finite())
    }

    /// Deviations `(a1−1, a2, a3, a4, a5−1, a6)`.
    pub fn deltas(&self) -> [f64; 6] {
        let a = self.entries();
        [a[0] - 1.0, a[1], a[2], a[3], a[4] - 1.0, a[5]]
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        affine_compose_on_point(self, p)
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    }
}

/// Second-order Taylor expansion of the yaw/pitch/roll rotation.
pub fn rotation_approx(p: &PerturbationParams) -> Result<RotationMatrix> {
    p.validate()?;
    let (a, b, g) = (p.alpha, p.beta, p.gamma);
    Ok(RotationMatrix([
        [1.0 - a * a / 2.0 - b * b / 2.0, b * g - a, b + a * g],
        [a, 1.0 - a * a / 2.0 - g * g / 2.0, a * b - g],
        [-b, g, 1.0 - b * b / 2.0 - g * g / 2.0],
    ]))
}

/// `Rz(alpha) · Ry(beta) · Rx(gamma)` from sin/cos. No regime check.
pub fn rotation_exact(p: &PerturbationParams) -> RotationMatrix {
    let (sa, ca) = p.alpha.sin_cos();
    let (sb, cb) = p.beta.sin_cos();
    let (sg, cg) = p.gamma.sin_cos();
    let rz = RotationMatrix([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]]);
    let ry = RotationMatrix([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]]);
    let rx = RotationMatrix([[1.0, 0.0, 0.0], [0.0, cg, -sg], [0.0, sg, cg]]);
    rz.mul(&ry).mul(&rx)
}

/// Pinhole projection of `R·p + t`.
pub fn project(point: Point3, rotation: &RotationMatrix, t: [f64; 3]) -> Result<Point2> {
    let q = rotation.apply([point.x, point.y, point.z]);
    let (x, y, z) = (q[0] + t[0], q[1] + t[1], q[2] + t[2]);
    if !(z > 0.0) {
        return Err(Error::ProjectionDomain { depth: z });
    }
    Ok(Point2::new(x / z, y / z))
}

/// The first-order binomial simplification of the perturbed projection:
/// `1 / (z0 (1 − δ)) ≈ (1 + δ) / z0` with the second-order rotation.
///
/// Only meaningful for points at depth `z0`; its error against [`project`]
/// is second order in the perturbation.
pub fn binomial_projection(point: Point3, p: &PerturbationParams) -> Point2 {
    let (a, b, g) = (p.alpha, p.beta, p.gamma);
    let z0 = p.z0;
    let (u1, v1) = (point.x / z0, point.y / z0);
    let delta = b * b / 2.0 + g * g / 2.0 + b * u1 - g * v1 - p.t[2] / z0;
    let u = (1.0 - a * a / 2.0 - b * b / 2.0) * u1 + (b * g - a) * v1 + (b + a * g + p.t[0] / z0);
    let v = a * u1 + (1.0 - a * a / 2.0 - g * g / 2.0) * v1 + (a * b - g + p.t[1] / z0);
    Point2::new((1.0 + delta) * u, (1.0 + delta) * v)
}

/// Least-squares affine map from `before` to `after` points, with the
/// largest per-point absolute error of the fit.
pub fn fit_affine(pairs: &[(Point2, Point2)]) -> Result<(AffineMatrix, f64)> {
    if pairs.len() < 3 {
        return Err(Error::RankDeficient(format!(
            "need at least 3 correspondences, got {}",
            pairs.len()
        )));
    }
    let mut gram = [[0.0f64; 3]; 3];
    let mut rhs_u = [0.0f64; 3];
    let mut rhs_v = [0.0f64; 3];
    for (before, after) in pairs {
        let row = [before.u, before.v, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                gram[i][j] += row[i] * row[j];
            }
            rhs_u[i] += row[i] * after.u;
            rhs_v[i] += row[i] * after.v;
        }
    }

    // Scale-aware degeneracy test on the centred design.
    let n = pairs.len() as f64;
    let mean_u = gram[0][2] / n;
    let mean_v = gram[1][2] / n;
    let cuu = gram[0][0] / n - mean_u * mean_u;
    let cvv = gram[1][1] / n - mean_v * mean_v;
    let cuv = gram[0][1] / n - mean_u * mean_v;
    let det = cuu * cvv - cuv * cuv;
    let scale = (cuu + cvv).max(f64::MIN_POSITIVE);
    if !(det > 1e-10 * scale * scale) {
        return Err(Error::RankDeficient("before points are collinear or coincident".into()));
    }

    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += FIT_RIDGE;
    }
    let row_u = solve3(gram, rhs_u)?;
    let row_v = solve3(gram, rhs_v)?;
    let affine = AffineMatrix([row_u, row_v]);

    let residual = pairs
        .iter()
        .map(|(before, after)| {
            let p = affine.apply(*before);
            (p.u - after.u).abs().max((p.v - after.v).abs())
        })
        .fold(0.0, f64::max);
    Ok((affine, residual))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() < f64::MIN_POSITIVE {
            return Err(Error::RankDeficient("singular normal equations".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

pub fn affine_compose_on_point(a: &AffineMatrix, p: Point2) -> Point2 {
    let m = &a.0;
    Point2::new(
        m[0][0] * p.u + m[0][1] * p.v + m[0][2],
        m[1][0] * p.u + m[1][1] * p.v + m[1][2],
    )
}

/// Squared Frobenius distance from the identity affine transform.
pub fn identity_reg_loss(a: &AffineMatrix) -> f64 {
    a.deltas().iter().map(|d| d * d).sum()
}

/// Gradient of [`identity_reg_loss`] with respect to the six entries.
pub fn identity_reg_grad(a: &AffineMatrix) -> [f64; 6] {
    a.deltas().map(|d| 2.0 * d)
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_mat3(a: &RotationMatrix, b: [[f64; 3]; 3], tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (a.0[i][j] - b[i][j]).abs() <= tol,
                    "({i},{j}): {} vs {}",
                    a.0[i][j],
                    b[i][j]
                );
            }
        }
    }

    #[test]
    fn approx_rotation_closed_form() {
        let r = rotation_approx(&PerturbationParams::angles(0.0, 0.0, 0.0, 10.0)).unwrap();
        assert_mat3(&r, RotationMatrix::identity().0, 0.0);
        let r = rotation_approx(&PerturbationParams::angles(0.1, 0.0, 0.0, 10.0)).unwrap();
        assert_mat3(&r, [[0.995, -0.1, 0.0], [0.1, 0.995, 0.0], [0.0, 0.0, 1.0]], 1e-15);
    }

    #[test]
    fn approx_rotation_close_to_exact() {
        let p = PerturbationParams::angles(0.05, 0.05, 0.05, 10.0);
        let gap = rotation_approx(&p).unwrap().frobenius_distance(&rotation_exact(&p));
        assert!(gap <= 1e-3, "gap {gap}");
    }

    #[test]
    fn approx_rotation_rejects_large_angles() {
        let p = PerturbationParams::angles(0.5, 0.0, 0.0, 10.0);
        assert!(matches!(rotation_approx(&p), Err(Error::Regime(_))));
        let p = PerturbationParams::new(0.0, 0.0, 0.0, [0.0, 0.0, 4.0], 10.0);
        assert!(matches!(rotation_approx(&p), Err(Error::Regime(_))));
        let p = PerturbationParams::angles(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(rotation_approx(&p), Err(Error::Regime(_))));
    }

    #[test]
    fn exact_rotation_axes() {
        let r = rotation_exact(&PerturbationParams::angles(0.0, 0.0, 0.0, 1.0));
        assert_mat3(&r, RotationMatrix::identity().0, 0.0);
        let r = rotation_exact(&PerturbationParams::angles(std::f64::consts::FRAC_PI_2, 0.0, 0.0, 1.0));
        assert_mat3(&r, [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], 1e-15);
    }

    #[test]
    fn exact_rotation_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = PerturbationParams::angles(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                1.0,
            );
            let r = rotation_exact(&p);
            assert!(r.orthogonality_error() <= 1e-12);
            assert!((r.determinant() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn taylor_gap_is_third_order() {
        for m in [0.01, 0.02, 0.05, 0.1] {
            let gap = |s: f64| {
                let p = PerturbationParams::angles(s, s, s, 10.0);
                rotation_approx(&p).unwrap().frobenius_distance(&rotation_exact(&p))
            };
            let ratio = gap(m) / gap(m / 2.0);
            assert!((4.0..=16.0).contains(&ratio), "m={m} ratio={ratio}");
        }
    }

    #[test]
    fn projection_identity_and_depth() {
        let p = project(Point3::new(2.0, -3.0, 10.0), &RotationMatrix::identity(), [0.0; 3]).unwrap();
        assert_eq!(p, Point2::new(0.2, -0.3));
        let p = project(
            Point3::new(1.0, 1.0, 10.0),
            &RotationMatrix::identity(),
            [0.0, 0.0, 10.0],
        )
        .unwrap();
        assert!((p.u - 0.05).abs() < 1e-15 && (p.v - 0.05).abs() < 1e-15);
        let p = project(Point3::new(1.0, 1.0, 1.0), &RotationMatrix::identity(), [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(p, Point2::new(0.5, 0.5));
        let err = project(
            Point3::new(1.0, 1.0, 1.0),
            &RotationMatrix::identity(),
            [0.0, 0.0, -2.0],
        );
        assert!(matches!(err, Err(Error::ProjectionDomain { .. })));
    }

    #[test]
    fn projection_approx_vs_exact_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = || 0.05;
            let p = PerturbationParams::angles(s(), -s(), s(), 10.0);
            let pt = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 10.0);
            let a = project(pt, &rotation_approx(&p).unwrap(), [0.0; 3]).unwrap();
            let e = project(pt, &rotation_exact(&p), [0.0; 3]).unwrap();
            assert!((a.u - e.u).abs() <= 1e-3 && (a.v - e.v).abs() <= 1e-3);
        }
    }

    #[test]
    fn fit_recovers_exact_affine() {
        let truth = AffineMatrix([[1.05, -0.1, 0.2], [0.07, 0.93, -0.3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<_> = (0..30)
            .map(|_| {
                let p = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                (p, truth.apply(p))
            })
            .collect();
        let (fit, residual) = fit_affine(&pairs).unwrap();
        for (a, b) in fit.entries().iter().zip(truth.entries()) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert!(residual <= 1e-9);
    }

    #[test]
    fn fit_of_unperturbed_projection_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z0 = 10.0;
        let pairs: Vec<_> = (0..50)
            .map(|_| {
                let pt = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), z0);
                let before = project(pt, &RotationMatrix::identity(), [0.0; 3]).unwrap();
                (before, before)
            })
            .collect();
        let (fit, residual) = fit_affine(&pairs).unwrap();
        for (a, b) in fit.entries().iter().zip(AffineMatrix::IDENTITY.entries()) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert!(residual <= 1e-12);
    }

    #[test]
    fn fit_rejects_collinear_points() {
        let pairs: Vec<_> = (0..10)
            .map(|i| {
                let p = Point2::new(i as f64, 2.0 * i as f64);
                (p, p)
            })
            .collect();
        assert!(matches!(fit_affine(&pairs), Err(Error::RankDeficient(_))));
        assert!(matches!(fit_affine(&pairs[..2]), Err(Error::RankDeficient(_))));
    }

    fn fit_residual(magnitude: f64, seed: u64) -> (AffineMatrix, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z0 = 10.0;
        let p = PerturbationParams::new(
            magnitude,
            -magnitude,
            0.7 * magnitude,
            [0.3 * magnitude * z0, -0.2 * magnitude * z0, 0.5 * magnitude * z0],
            z0,
        );
        let r = rotation_exact(&p);
        let pairs: Vec<_> = (0..50)
            .map(|_| {
                let pt = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), z0);
                let before = project(pt, &RotationMatrix::identity(), [0.0; 3]).unwrap();
                (before, project(pt, &r, p.t).unwrap())
            })
            .collect();
        fit_affine(&pairs).unwrap()
    }

    // The projective division leaves a non-affine term beta*u^2 - gamma*u*v,
    // which is first order in the out-of-plane angles: doubling the
    // perturbation doubles the residual.
    #[test]
    fn fit_residual_scales_with_out_of_plane_angle() {
        let (_, r2) = fit_residual(0.02, 1);
        let (_, r4) = fit_residual(0.04, 1);
        let ratio = r4 / r2;
        assert!((1.8..=2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn binomial_projection_error_is_second_order() {
        let z0 = 10.0;
        let pt = Point3::new(0.7, -0.4, z0);
        let err = |m: f64| {
            let p = PerturbationParams::new(m, -m, 0.5 * m, [0.2 * m * z0, 0.1 * m * z0, 0.3 * m * z0], z0);
            let exact = project(pt, &rotation_exact(&p), p.t).unwrap();
            let approx = binomial_projection(pt, &p);
            (exact.u - approx.u).abs().max((exact.v - approx.v).abs())
        };
        let ratio = err(0.004) / err(0.002);
        assert!((3.5..=6.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn compose_on_point() {
        let p = affine_compose_on_point(&AffineMatrix::identity(), Point2::new(0.3, -0.2));
        assert_eq!(p, Point2::new(0.3, -0.2));
        let p = AffineMatrix::translation(0.1, -0.1).apply(Point2::new(0.0, 0.0));
        assert_eq!(p, Point2::new(0.1, -0.1));
        let p = AffineMatrix([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).apply(Point2::new(0.5, 0.5));
        assert_eq!(p, Point2::new(1.0, 1.0));
    }

    #[test]
    fn regularizer_values() {
        assert_eq!(identity_reg_loss(&AffineMatrix::identity()), 0.0);
        let a = AffineMatrix([[1.1, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!((identity_reg_loss(&a) - 0.01).abs() < 1e-12);
        let a = AffineMatrix([[1.0, 0.1, 0.2], [0.0, 1.0, 0.0]]);
        assert!((identity_reg_loss(&a) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn regularizer_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let entries: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let a = AffineMatrix::from_entries(entries);
            let grad = identity_reg_grad(&a);
            let h = 1e-6;
            for k in 0..6 {
                let mut plus = entries;
                let mut minus = entries;
                plus[k] += h;
                minus[k] -= h;
                let fd = (identity_reg_loss(&AffineMatrix::from_entries(plus))
                    - identity_reg_loss(&AffineMatrix::from_entries(minus)))
                    / (2.0 * h);
                let rel = (fd - grad[k]).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
                assert!(rel <= 1e-6, "entry {k}: {fd} vs {}", grad[k]);
            }
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn regularizer_zero_iff_identity(entries in proptest::array::uniform6(-2.0f64..2.0), pick in 0usize..7) {
                let mut e = entries;
                if pick == 6 {
                    e = AffineMatrix::IDENTITY.entries();
                }
                let a = AffineMatrix::from_entries(e);
                let loss = identity_reg_loss(&a);
                prop_assert!(loss >= 0.0);
                prop_assert_eq!(loss <= 1e-12, a.deltas().iter().all(|d| d.abs() <= 1e-6));
            }

            #[test]
            fn recovered_deltas_are_small(m in 0.0f64..0.08, seed in 0u64..1000) {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                use rand::{Rng, SeedableRng};
                let z0 = 10.0;
                let dir: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let tdir: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.57..0.57));
                let p = PerturbationParams::new(m * dir[0], m * dir[1], m * dir[2], tdir.map(|t| t * m * z0), z0);
                prop_assert!(p.validate().is_ok());
                let r = rotation_exact(&p);
                let pairs: Vec<_> = (0..40).map(|_| {
                    let pt = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), z0);
                    (Point2::new(pt.x / z0, pt.y / z0), project(pt, &r, p.t).unwrap())
                }).collect();
                let (fit, _) = fit_affine(&pairs).unwrap();
                prop_assert!(fit.deltas().iter().all(|d| d.abs() < 0.2));
            }
        }
    }
}
