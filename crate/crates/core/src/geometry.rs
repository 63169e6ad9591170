//! Shared geometric types: particles, cameras, masks, planar poses.
//!
//! Conventions used throughout the crate:
//!
//! * World frame is right-handed, `z` up, ground plane at `z = 0`, SI units.
//! * Extrinsics map world to camera: `q = R p + t`, camera `z` forward,
//!   `x` right, `y` down (pinhole looking along `+z`).
//! * Image points are in normalized units: pixel coordinates divided by the
//!   image *width*, both axes, so squared-distance losses are resolution
//!   independent.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Points closer to the image plane than this (metres along the optical axis)
/// are treated as invisible rather than projected.
pub const Z_MIN: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point lists have mismatched lengths ({0} vs {1})")]
    MismatchedLengths(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("weights must be non-negative with a positive sum")]
    BadWeights,
    #[error("point configuration is rank-deficient; rotation is ambiguous")]
    DegenerateConfiguration,
    #[error("mask has no foreground pixels")]
    EmptyMask,
}

/// One material point of a body: position, velocity, mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: Vec3,
    pub velocity: Vec3,
    pub mass: f64,
}

impl Particle {
    pub fn at_rest(position: Vec3, mass: f64) -> Self {
        Self { position, velocity: Vec3::zeros(), mass }
    }
}

/// Pairwise relation tag. Every edge in this crate is rigid; the variant
/// exists so relation sets remain extensible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationTag {
    Rigid,
}

/// A particle set plus pairwise relations and a friction coefficient.
///
/// Rigid grouping is encoded sparsely: edges connect all particles of one
/// body into a single connected component (a star suffices); the component,
/// not the edge list, defines the group.
#[derive(Debug, Clone)]
pub struct ParticleState {
    pub particles: Vec<Particle>,
    pub relations: Vec<(u32, u32, RelationTag)>,
    pub friction: f64,
}

impl ParticleState {
    /// Unit-total-mass rigid body over `positions`: uniform particle masses,
    /// star relations rooted at particle 0.
    pub fn rigid_from_positions(positions: Vec<Vec3>, friction: f64) -> Self {
        let n = positions.len();
        let mass = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        let particles = positions.into_iter().map(|p| Particle::at_rest(p, mass)).collect();
        let relations =
            (1..n as u32).map(|i| (0, i, RelationTag::Rigid)).collect();
        Self { particles, relations, friction }
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.particles.iter().map(|p| p.position).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.mass).collect()
    }
}

/// Pinhole intrinsics. Focal lengths and principal point are in pixels;
/// `width`/`height` give the image size the parameters refer to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// World-to-camera rigid transform `q = R p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraExtrinsics {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl CameraExtrinsics {
    /// Camera at `eye` with its optical axis through `target` (world `z` as
    /// the preferred up direction, `x` fallback when looking straight down).
    pub fn look_at(eye: Vec3, target: Vec3) -> Self {
        let forward = (target - eye).normalize();
        let up_hint = if forward.z.abs() > 0.999 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        let x_cam = forward.cross(&up_hint).normalize();
        let y_cam = forward.cross(&x_cam);
        let rotation = Mat3::from_rows(&[
            x_cam.transpose(),
            y_cam.transpose(),
            forward.transpose(),
        ]);
        let translation = -rotation * eye;
        Self { rotation, translation }
    }

    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Depth of `p` along the optical axis.
    pub fn depth_of(&self, p: &Vec3) -> f64 {
        (self.rotation * p + self.translation).z
    }
}

/// Binary silhouette image, row-major, `true` = foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; (width * height) as usize] }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), (width * height) as usize);
        Self { width, height, bits }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y * self.width + x) as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Inclusive pixel bounding box of the foreground, `None` when empty.
    pub fn foreground_bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then_some((x0, y0, x1, y1))
    }
}

/// One calibrated observation: camera parameters plus the silhouette it saw.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
    pub mask: Mask,
}

/// Planar displacement: rotation `theta` about the vertical axis through the
/// cloud centroid, then translation `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PlanarPose {
    pub fn identity() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    /// Follow `self` by a further displacement `delta` expressed relative to
    /// the already-displaced cloud. Because each step rotates about the
    /// *current* centroid, translations add and angles add.
    pub fn then(&self, delta: &PlanarPose) -> Self {
        Self {
            x: self.x + delta.x,
            y: self.y + delta.y,
            theta: wrap_angle(self.theta + delta.theta),
        }
    }

    pub fn position_error(&self, other: &PlanarPose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn angle_error(&self, other: &PlanarPose) -> f64 {
        wrap_angle(self.theta - other.theta).abs()
    }
}

/// Displace a cloud by a planar pose: rotate `pose.theta` about the vertical
/// axis through the cloud's centroid, then translate by `(pose.x, pose.y)`.
/// Heights are untouched. Empty input stays empty.
pub fn apply_planar_pose(positions: &[Vec3], pose: &PlanarPose) -> Vec<Vec3> {
    if positions.is_empty() {
        return Vec::new();
    }
    let centroid = positions.iter().sum::<Vec3>() / positions.len() as f64;
    let (s, c) = pose.theta.sin_cos();
    positions
        .iter()
        .map(|p| {
            let dx = p.x - centroid.x;
            let dy = p.y - centroid.y;
            Vec3::new(
                centroid.x + c * dx - s * dy + pose.x,
                centroid.y + s * dx + c * dy + pose.y,
                p.z,
            )
        })
        .collect()
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Project one world point. `None` when the point lies within `Z_MIN` of or
/// behind the image plane. Coordinates are normalized by the image width.
#[inline]
pub fn project_point(
    intrinsics: &CameraIntrinsics,
    extrinsics: &CameraExtrinsics,
    p: &Vec3,
) -> Option<Vec2> {
    let q = extrinsics.rotation * p + extrinsics.translation;
    if q.z <= Z_MIN {
        return None;
    }
    let w = intrinsics.width as f64;
    Some(Vec2::new(
        (intrinsics.fx * q.x / q.z + intrinsics.cx) / w,
        (intrinsics.fy * q.y / q.z + intrinsics.cy) / w,
    ))
}

/// Project a position list, dropping points behind the camera. Returns the
/// projected points and, aligned with them, the index each came from.
pub fn project_particles(
    intrinsics: &CameraIntrinsics,
    extrinsics: &CameraExtrinsics,
    positions: &[Vec3],
) -> (Vec<Vec2>, Vec<u32>) {
    let mut points = Vec::with_capacity(positions.len());
    let mut indices = Vec::with_capacity(positions.len());
    for (i, p) in positions.iter().enumerate() {
        if let Some(uv) = project_point(intrinsics, extrinsics, p) {
            points.push(uv);
            indices.push(i as u32);
        }
    }
    (points, indices)
}

/// Draw `count` points uniformly (with replacement) from the foreground
/// pixel centres of `mask`, in the same width-normalized units as
/// [`project_point`].
pub fn sample_mask_points<R: rand::Rng>(
    mask: &Mask,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec2>, GeometryError> {
    let foreground: Vec<u32> = (0..mask.width * mask.height)
        .filter(|i| mask.bits[*i as usize])
        .collect();
    if foreground.is_empty() {
        return Err(GeometryError::EmptyMask);
    }
    let w = mask.width as f64;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let lin = foreground[rng.gen_range(0..foreground.len())];
        let px = (lin % mask.width) as f64 + 0.5;
        let py = (lin / mask.width) as f64 + 0.5;
        points.push(Vec2::new(px / w, py / w));
    }
    Ok(points)
}

/// Weighted least-squares rigid fit: the rotation `R` and translation `t`
/// minimizing `sum_i w_i |R from_i + t - to_i|^2`, with `det(R) = +1`
/// enforced by flipping the smallest singular direction when the best
/// orthogonal fit is a reflection.
///
/// Planar point sets are fine; configurations of rank < 2 (collinear or
/// coincident) leave the rotation ambiguous and are rejected.
pub fn best_fit_rigid_transform(
    from: &[Vec3],
    to: &[Vec3],
    weights: &[f64],
) -> Result<(Mat3, Vec3), GeometryError> {
    if from.len() != to.len() {
        return Err(GeometryError::MismatchedLengths(from.len(), to.len()));
    }
    if weights.len() != from.len() {
        return Err(GeometryError::MismatchedLengths(weights.len(), from.len()));
    }
    if from.len() < 3 {
        return Err(GeometryError::TooFewPoints { needed: 3, got: from.len() });
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) || weights.iter().any(|w| *w < 0.0) {
        return Err(GeometryError::BadWeights);
    }

    let mut mu_from = Vec3::zeros();
    let mut mu_to = Vec3::zeros();
    for ((f, t), w) in from.iter().zip(to).zip(weights) {
        mu_from += *w * f;
        mu_to += *w * t;
    }
    mu_from /= wsum;
    mu_to /= wsum;

    // Weighted cross-covariance of centred clouds.
    let mut h = Mat3::zeros();
    for ((f, t), w) in from.iter().zip(to).zip(weights) {
        h += *w * (f - mu_from) * (t - mu_to).transpose();
    }

    let svd = h.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v = svd.v_t.expect("svd requested v_t").transpose();
    let mut sv = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return Err(GeometryError::DegenerateConfiguration);
    }

    let mut d = Mat3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = mu_to - rotation * mu_from;
    Ok((rotation, translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.gen_range(-3.0..3.0);
        nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
            .into_inner()
    }

    fn test_camera() -> (CameraIntrinsics, CameraExtrinsics) {
        let intr = CameraIntrinsics { fx: 300.0, fy: 310.0, cx: 128.0, cy: 120.0, width: 256, height: 240 };
        let extr = CameraExtrinsics::look_at(Vec3::new(0.4, 0.3, 0.5), Vec3::new(0.0, 0.0, 0.05));
        (intr, extr)
    }

    /// Oracle: projection must agree with the explicit 3x4 homogeneous
    /// pipeline `K [R|t]` followed by perspective division.
    #[test]
    fn projection_matches_homogeneous_matrix_oracle() {
        let (intr, extr) = test_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = Vec3::new(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(0.0..0.3),
            );
            let q = extr.rotation * p + extr.translation;
            assert!(q.z > Z_MIN, "test point ended up behind the camera");

            let k = Mat3::new(intr.fx, 0.0, intr.cx, 0.0, intr.fy, intr.cy, 0.0, 0.0, 1.0);
            let h = k * q;
            let expect = Vec2::new(h.x / h.z, h.y / h.z) / intr.width as f64;

            let got = project_point(&intr, &extr, &p).unwrap();
            assert_relative_eq!(got.x, expect.x, max_relative = 1e-12);
            assert_relative_eq!(got.y, expect.y, max_relative = 1e-12);
        }
    }

    #[test]
    fn points_behind_camera_are_dropped() {
        let (intr, extr) = test_camera();
        let center = extr.camera_center();
        let behind = center + extr.rotation.transpose() * Vec3::new(0.0, 0.0, -0.5);
        assert_eq!(project_point(&intr, &extr, &behind), None);
        let at_cutoff = center + extr.rotation.transpose() * Vec3::new(0.0, 0.0, 0.5 * Z_MIN);
        assert_eq!(project_point(&intr, &extr, &at_cutoff), None);

        let positions = vec![behind, Vec3::new(0.0, 0.0, 0.05), at_cutoff];
        let (pts, idx) = project_particles(&intr, &extr, &positions);
        assert_eq!(pts.len(), 1);
        assert_eq!(idx, vec![1]);
    }

    #[test]
    fn look_at_axis_passes_through_target() {
        let target = Vec3::new(0.02, -0.01, 0.04);
        for (i, eye) in [
            Vec3::new(0.5, 0.0, 0.3),
            Vec3::new(-0.2, 0.4, 0.1),
            Vec3::new(0.02, -0.01, 0.8), // straight down
        ]
        .iter()
        .enumerate()
        {
            let extr = CameraExtrinsics::look_at(*eye, target);
            let r = extr.rotation;
            assert_relative_eq!((r * r.transpose() - Mat3::identity()).norm(), 0.0, epsilon = 1e-12);
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
            let q = r * target + extr.translation;
            assert!(q.x.abs() < 1e-9 && q.y.abs() < 1e-9, "case {i}: axis misses target: {q}");
            assert!(q.z > 0.0);
        }
    }

    /// Oracle: plant a known rigid transform, recover it from the point sets.
    #[test]
    fn rigid_fit_recovers_planted_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..50 {
            let n = rng.gen_range(3..40);
            let planar = trial % 3 == 0; // rank-2 configurations must work too
            let from: Vec<Vec3> = (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        if planar { 0.0 } else { rng.gen_range(-1.0..1.0) },
                    )
                })
                .collect();
            // Skip accidentally rank-deficient draws (e.g. 3 nearly collinear points).
            let r_true = random_rotation(&mut rng);
            let t_true = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let to: Vec<Vec3> = from.iter().map(|p| r_true * p + t_true).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();

            match best_fit_rigid_transform(&from, &to, &weights) {
                Ok((r, t)) => {
                    assert_relative_eq!((r - r_true).norm(), 0.0, epsilon = 1e-8);
                    assert_relative_eq!((t - t_true).norm(), 0.0, epsilon = 1e-8);
                }
                Err(GeometryError::DegenerateConfiguration) if n == 3 => {}
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }

    #[test]
    fn rigid_fit_never_returns_reflection() {
        // Noisy planar correspondences push the unconstrained fit toward a
        // reflection; det must still come back +1.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let from: Vec<Vec3> = (0..12)
                .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0))
                .collect();
            let to: Vec<Vec3> = from
                .iter()
                .map(|p| {
                    Vec3::new(p.x, p.y, 0.0)
                        + Vec3::new(
                            rng.gen_range(-0.2..0.2),
                            rng.gen_range(-0.2..0.2),
                            rng.gen_range(-0.2..0.2),
                        )
                })
                .collect();
            let w = vec![1.0; from.len()];
            let (r, _) = best_fit_rigid_transform(&from, &to, &w).unwrap();
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-9);
            assert_relative_eq!((r * r.transpose() - Mat3::identity()).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rigid_fit_rejects_degenerate_input() {
        let from: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let to = from.clone();
        let w = vec![1.0; 5];
        assert_eq!(
            best_fit_rigid_transform(&from, &to, &w).unwrap_err(),
            GeometryError::DegenerateConfiguration
        );
        assert!(matches!(
            best_fit_rigid_transform(&from[..2], &to[..2], &w[..2]),
            Err(GeometryError::TooFewPoints { .. })
        ));
        assert!(matches!(
            best_fit_rigid_transform(&from, &to[..3], &w),
            Err(GeometryError::MismatchedLengths(..))
        ));
        assert_eq!(
            best_fit_rigid_transform(&from, &to, &[0.0; 5]).unwrap_err(),
            GeometryError::BadWeights
        );
    }

    #[test]
    fn pose_application_preserves_shape_and_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts: Vec<Vec3> = (0..30)
            .map(|_| Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(0.0..0.1)))
            .collect();

        let id = apply_planar_pose(&pts, &PlanarPose::identity());
        for (a, b) in pts.iter().zip(&id) {
            assert_relative_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }

        let p1 = PlanarPose { x: 0.05, y: -0.02, theta: 0.7 };
        let p2 = PlanarPose { x: -0.01, y: 0.03, theta: -1.2 };
        let once = apply_planar_pose(&apply_planar_pose(&pts, &p1), &p2);
        let composed = apply_planar_pose(&pts, &p1.then(&p2));
        for (a, b) in once.iter().zip(&composed) {
            assert_relative_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }

        // Heights never move.
        for (a, b) in pts.iter().zip(&once) {
            assert_eq!(a.z, b.z);
        }

        // Rigid: pairwise distances survive.
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d0 = (pts[i] - pts[j]).norm();
                let d1 = (once[i] - once[j]).norm();
                assert_relative_eq!(d0, d1, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn wrap_angle_stays_in_half_open_interval() {
        use std::f64::consts::PI;
        for a in [-7.0, -PI, -1.0, 0.0, 1.0, PI, 7.0, 100.0, -100.0] {
            let w = wrap_angle(a);
            assert!(w > -PI - 1e-12 && w <= PI + 1e-12, "{a} wrapped to {w}");
            assert_relative_eq!((a - w) % (2.0 * PI), 0.0, epsilon = 1e-9);
        }
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
    }

    /// Mask sampling: all samples land on foreground pixel centres, and the
    /// empirical distribution over foreground pixels is uniform (chi-square
    /// on a seeded draw).
    #[test]
    fn mask_sampling_is_uniform_over_foreground()  {
        let mut mask = Mask::new(64, 48);
        for y in 10..30 {
            for x in 20..50 {
                if (x + y) % 3 != 0 {
                    mask.set(x, y, true);
                }
            }
        }
        let fg = mask.foreground_count();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 200 * fg;
        let pts = sample_mask_points(&mask, n, &mut rng).unwrap();

        let mut counts = std::collections::HashMap::new();
        for p in &pts {
            let px = (p.x * 64.0 - 0.5).round() as u32;
            let py = (p.y * 64.0 - 0.5).round() as u32;
            assert!(mask.get(px, py), "sample off the foreground at ({px},{py})");
            *counts.entry((px, py)).or_insert(0usize) += 1;
        }
        let expected = n as f64 / fg as f64;
        let chi2: f64 = counts.values().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        // dof = fg - 1; mean dof, sd sqrt(2 dof): 5 sigma headroom.
        let dof = (fg - 1) as f64;
        assert!(chi2 < dof + 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2} vs dof {dof}");

        assert_eq!(
            sample_mask_points(&Mask::new(8, 8), 4, &mut rng).unwrap_err(),
            GeometryError::EmptyMask
        );
    }

    #[test]
    fn mask_bbox_and_counts() {
        let mut mask = Mask::new(16, 16);
        assert_eq!(mask.foreground_bbox(), None);
        mask.set(3, 4, true);
        mask.set(10, 12, true);
        assert_eq!(mask.foreground_bbox(), Some((3, 4, 10, 12)));
        assert_eq!(mask.foreground_count(), 2);
    }

}
