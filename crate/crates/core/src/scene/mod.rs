//! Synthetic ground-truth scenes: primitive objects, silhouette rendering,
//! camera rings.
//!
//! Objects are unions of analytic parts (boxes, spheres, vertical cylinders)
//! or watertight triangle meshes. Each carries a dense surface point list for
//! rendering, an exact inside test for voxel comparisons, and a mass centroid
//! integrated from optional density regions (how "hammer-like" asymmetric
//! bodies are planted).
//!
//! All primitives rest on the ground plane `z = 0`, centred on the origin in
//! `x, y`.

pub mod mesh;
pub mod voxel;

pub use mesh::{mesh_occupancy, mesh_surface_points, parse_obj, probe_watertight, TriMesh};
pub use voxel::{iou, voxelize_occupancy, voxelize_particles, OccupancyGrid};

use crate::geometry::{project_point, CameraExtrinsics, CameraIntrinsics, Mask, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("object projects entirely outside the image")]
    ObjectNotVisible,
    #[error("both occupancy grids are empty; IoU is undefined")]
    EmptyUnion,
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("mesh parity test is direction-inconsistent; mesh is not watertight")]
    NonWatertight,
    #[error("bad primitive spec: {0}")]
    BadSpec(String),
}

/// One analytic convex part of an object.
#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Box { min: Vec3, max: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    /// Vertical cylinder: axis parallel to `z`.
    Cylinder { center: Vec3, radius: f64, z0: f64, z1: f64 },
}

impl Part {
    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Part::Box { min, max } => {
                p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z
            }
            Part::Sphere { center, radius } => (p - center).norm_squared() <= radius * radius,
            Part::Cylinder { center, radius, z0, z1 } => {
                let dx = p.x - center.x;
                let dy = p.y - center.y;
                p.z >= *z0 && p.z <= *z1 && dx * dx + dy * dy <= radius * radius
            }
        }
    }

    /// Strict interior test — boundary points are *not* inside. Used when
    /// culling surface samples covered by a neighbouring part, so shared
    /// faces stay sampled.
    pub fn contains_strict(&self, p: &Vec3) -> bool {
        match self {
            Part::Box { min, max } => {
                p.x > min.x && p.x < max.x && p.y > min.y && p.y < max.y && p.z > min.z && p.z < max.z
            }
            Part::Sphere { center, radius } => (p - center).norm_squared() < radius * radius,
            Part::Cylinder { center, radius, z0, z1 } => {
                let dx = p.x - center.x;
                let dy = p.y - center.y;
                p.z > *z0 && p.z < *z1 && dx * dx + dy * dy < radius * radius
            }
        }
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        match self {
            Part::Box { min, max } => (*min, *max),
            Part::Sphere { center, radius } => {
                let r = Vec3::new(*radius, *radius, *radius);
                (center - r, center + r)
            }
            Part::Cylinder { center, radius, z0, z1 } => (
                Vec3::new(center.x - radius, center.y - radius, *z0),
                Vec3::new(center.x + radius, center.y + radius, *z1),
            ),
        }
    }

    pub fn surface_area(&self) -> f64 {
        match self {
            Part::Box { min, max } => {
                let d = max - min;
                2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
            }
            Part::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Part::Cylinder { radius, z0, z1, .. } => {
                let h = z1 - z0;
                2.0 * std::f64::consts::PI * radius * (h + radius)
            }
        }
    }

    pub fn sample_surface<R: Rng>(&self, rng: &mut R) -> Vec3 {
        match self {
            Part::Box { min, max } => {
                let d = max - min;
                let areas = [d.y * d.z, d.y * d.z, d.x * d.z, d.x * d.z, d.x * d.y, d.x * d.y];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.gen_range(0.0..total);
                let mut face = 5;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        face = i;
                        break;
                    }
                    pick -= a;
                }
                let u = rng.gen_range(0.0..1.0);
                let v = rng.gen_range(0.0..1.0);
                match face {
                    0 => Vec3::new(min.x, min.y + u * d.y, min.z + v * d.z),
                    1 => Vec3::new(max.x, min.y + u * d.y, min.z + v * d.z),
                    2 => Vec3::new(min.x + u * d.x, min.y, min.z + v * d.z),
                    3 => Vec3::new(min.x + u * d.x, max.y, min.z + v * d.z),
                    4 => Vec3::new(min.x + u * d.x, min.y + v * d.y, min.z),
                    _ => Vec3::new(min.x + u * d.x, min.y + v * d.y, max.z),
                }
            }
            Part::Sphere { center, radius } => {
                // Uniform direction via normalized Gaussian triple.
                loop {
                    let v = Vec3::new(
                        rng.sample::<f64, _>(rand_distr::StandardNormal),
                        rng.sample::<f64, _>(rand_distr::StandardNormal),
                        rng.sample::<f64, _>(rand_distr::StandardNormal),
                    );
                    let n = v.norm();
                    if n > 1e-9 {
                        return center + v * (*radius / n);
                    }
                }
            }
            Part::Cylinder { center, radius, z0, z1 } => {
                let h = z1 - z0;
                let lateral = 2.0 * std::f64::consts::PI * radius * h;
                let cap = std::f64::consts::PI * radius * radius;
                let pick = rng.gen_range(0.0..lateral + 2.0 * cap);
                if pick < lateral {
                    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                    Vec3::new(
                        center.x + radius * ang.cos(),
                        center.y + radius * ang.sin(),
                        z0 + rng.gen_range(0.0..1.0) * h,
                    )
                } else {
                    // Uniform disc via sqrt radius.
                    let r = radius * rng.gen_range(0.0f64..1.0).sqrt();
                    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                    let z = if pick < lateral + cap { *z0 } else { *z1 };
                    Vec3::new(center.x + r * ang.cos(), center.y + r * ang.sin(), z)
                }
            }
        }
    }
}

/// Axis-aligned box with a relative density, painted over the base density
/// of 1. Later regions win where they overlap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityRegion {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub density: f64,
}

impl DensityRegion {
    fn contains(&self, p: &Vec3) -> bool {
        p.x >= self.min[0]
            && p.x <= self.max[0]
            && p.y >= self.min[1]
            && p.y <= self.max[1]
            && p.z >= self.min[2]
            && p.z <= self.max[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Box,
    Sphere,
    Cylinder,
    Lshape,
    Hammer,
}

/// Declarative object description, JSON-serializable.
///
/// `dimensions` by kind:
/// * `box`: `[lx, ly, lz]`
/// * `sphere`: `[radius]`
/// * `cylinder`: `[radius, height]`
/// * `lshape`: `[arm_a_len, arm_b_len, thickness, height]`
/// * `hammer`: `[handle_l, handle_w, handle_h, head_l, head_w, head_h]`
///   (head attached at the `+x` end; a head density region is added
///   automatically when none is given)
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    pub dimensions: Vec<f64>,
    #[serde(default)]
    pub density_regions: Vec<DensityRegion>,
    #[serde(default = "default_surface_samples")]
    pub surface_samples: usize,
}

fn default_surface_samples() -> usize {
    6000
}

/// Hammer head relative density used when a hammer spec declares no regions.
pub const HAMMER_HEAD_DENSITY: f64 = 6.0;

/// Exact object the synthetic experiments compare against: dense surface
/// points, an inside test, and the true mass centroid.
#[derive(Debug, Clone)]
pub struct GroundTruthObject {
    pub parts: Vec<Part>,
    pub mesh: Option<TriMesh>,
    pub surface_points: Vec<Vec3>,
    pub density_regions: Vec<DensityRegion>,
    pub mass_centroid: Vec3,
}

impl GroundTruthObject {
    pub fn contains(&self, p: &Vec3) -> bool {
        if let Some(mesh) = &self.mesh {
            return mesh_occupancy(mesh, p);
        }
        self.parts.iter().any(|part| part.contains(p))
    }

    pub fn density_at(&self, p: &Vec3) -> f64 {
        self.density_regions
            .iter()
            .rev()
            .find(|r| r.contains(p))
            .map(|r| r.density)
            .unwrap_or(1.0)
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        if let Some(mesh) = &self.mesh {
            for v in &mesh.vertices {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
        }
        for part in &self.parts {
            let (plo, phi) = part.aabb();
            lo = lo.inf(&plo);
            hi = hi.sup(&phi);
        }
        (lo, hi)
    }

    /// Assemble an object from analytic parts. Parts must be disjoint up to
    /// shared boundary faces (all built-in primitives are); the centroid is
    /// then a density-weighted sum of per-part integrals.
    pub fn from_parts<R: Rng>(
        parts: Vec<Part>,
        density_regions: Vec<DensityRegion>,
        surface_samples: usize,
        rng: &mut R,
    ) -> Self {
        let mut obj = Self {
            parts,
            mesh: None,
            surface_points: Vec::new(),
            density_regions,
            mass_centroid: Vec3::zeros(),
        };
        obj.mass_centroid = obj.integrate_centroid();
        obj.surface_points = obj.sample_surface(surface_samples, rng);
        obj
    }

    /// Wrap a triangle mesh (uniform density). The parity probe must pass
    /// or the mesh is rejected as non-watertight.
    pub fn from_mesh<R: Rng>(
        mesh: TriMesh,
        surface_samples: usize,
        rng: &mut R,
    ) -> Result<Self, SceneError> {
        probe_watertight(&mesh, 100, rng)?;
        let centroid = mesh.volume_centroid().ok_or(SceneError::NonWatertight)?;
        let surface_points = mesh_surface_points(&mesh, surface_samples, rng);
        Ok(Self {
            parts: Vec::new(),
            mesh: Some(mesh),
            surface_points,
            density_regions: Vec::new(),
            mass_centroid: centroid,
        })
    }

    /// Area-weighted surface samples of the part union; samples strictly
    /// inside a neighbouring part are culled.
    fn sample_surface<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<Vec3> {
        let areas: Vec<f64> = self.parts.iter().map(|p| p.surface_area()).collect();
        let total: f64 = areas.iter().sum();
        let mut out = Vec::with_capacity(count);
        let mut guard = 0usize;
        while out.len() < count && guard < 100 * count {
            guard += 1;
            let mut pick = rng.gen_range(0.0..total);
            let mut part_idx = self.parts.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    part_idx = i;
                    break;
                }
                pick -= a;
            }
            let p = self.parts[part_idx].sample_surface(rng);
            let covered = self
                .parts
                .iter()
                .enumerate()
                .any(|(i, part)| i != part_idx && part.contains_strict(&p));
            if !covered {
                out.push(p);
            }
        }
        out
    }

    /// Density-weighted centroid by midpoint quadrature over each part's
    /// bounding box. Exact for boxes aligned with their density regions
    /// (the midpoint grid is symmetric); O(h) boundary error otherwise.
    fn integrate_centroid(&self) -> Vec3 {
        const N: usize = 48;
        let mut mass = 0.0;
        let mut moment = Vec3::zeros();
        for part in &self.parts {
            let (lo, hi) = part.aabb();
            let d = hi - lo;
            let cell = d / N as f64;
            let cell_vol = cell.x * cell.y * cell.z;
            for ix in 0..N {
                for iy in 0..N {
                    for iz in 0..N {
                        let p = Vec3::new(
                            lo.x + (ix as f64 + 0.5) * cell.x,
                            lo.y + (iy as f64 + 0.5) * cell.y,
                            lo.z + (iz as f64 + 0.5) * cell.z,
                        );
                        if part.contains(&p) {
                            let rho = self.density_at(&p);
                            mass += rho * cell_vol;
                            moment += rho * cell_vol * p;
                        }
                    }
                }
            }
        }
        if mass > 0.0 {
            moment / mass
        } else {
            Vec3::zeros()
        }
    }
}

/// Build one of the five stock primitives, resting on the ground and centred
/// on the origin.
pub fn build_primitive<R: Rng>(
    spec: &PrimitiveSpec,
    rng: &mut R,
) -> Result<GroundTruthObject, SceneError> {
    let dims = &spec.dimensions;
    let need = |n: usize| -> Result<(), SceneError> {
        if dims.len() != n {
            return Err(SceneError::BadSpec(format!(
                "{:?} expects {n} dimensions, got {}",
                spec.kind,
                dims.len()
            )));
        }
        if dims.iter().any(|d| *d <= 0.0) {
            return Err(SceneError::BadSpec("dimensions must be positive".into()));
        }
        Ok(())
    };

    let parts = match spec.kind {
        PrimitiveKind::Box => {
            need(3)?;
            vec![Part::Box {
                min: Vec3::new(-dims[0] / 2.0, -dims[1] / 2.0, 0.0),
                max: Vec3::new(dims[0] / 2.0, dims[1] / 2.0, dims[2]),
            }]
        }
        PrimitiveKind::Sphere => {
            need(1)?;
            vec![Part::Sphere { center: Vec3::new(0.0, 0.0, dims[0]), radius: dims[0] }]
        }
        PrimitiveKind::Cylinder => {
            need(2)?;
            vec![Part::Cylinder {
                center: Vec3::new(0.0, 0.0, 0.0),
                radius: dims[0],
                z0: 0.0,
                z1: dims[1],
            }]
        }
        PrimitiveKind::Lshape => {
            need(4)?;
            let (la, lb, t, h) = (dims[0], dims[1], dims[2], dims[3]);
            if t >= la || t >= lb {
                return Err(SceneError::BadSpec("lshape thickness must be below arm lengths".into()));
            }
            // Arm A along x, arm B along y, sharing the corner cell; shifted
            // so the union's bounding box is centred in x, y.
            let cx = la / 2.0;
            let cy = lb / 2.0;
            vec![
                Part::Box {
                    min: Vec3::new(-cx, -cy, 0.0),
                    max: Vec3::new(la - cx, t - cy, h),
                },
                Part::Box {
                    min: Vec3::new(-cx, t - cy, 0.0),
                    max: Vec3::new(t - cx, lb - cy, h),
                },
            ]
        }
        PrimitiveKind::Hammer => {
            need(6)?;
            let (hl, hw, hh) = (dims[0], dims[1], dims[2]);
            let (dl, dw, dh) = (dims[3], dims[4], dims[5]);
            let total = hl + dl;
            vec![
                Part::Box {
                    min: Vec3::new(-total / 2.0, -hw / 2.0, 0.0),
                    max: Vec3::new(total / 2.0 - dl, hw / 2.0, hh),
                },
                Part::Box {
                    min: Vec3::new(total / 2.0 - dl, -dw / 2.0, 0.0),
                    max: Vec3::new(total / 2.0, dw / 2.0, dh),
                },
            ]
        }
    };

    let mut regions = spec.density_regions.clone();
    if regions.is_empty() && spec.kind == PrimitiveKind::Hammer {
        // Head-heavy by default: that is what makes a hammer interesting.
        let (lo, hi) = parts[1].aabb();
        regions.push(DensityRegion {
            min: [lo.x, lo.y, lo.z],
            max: [hi.x, hi.y, hi.z],
            density: HAMMER_HEAD_DENSITY,
        });
    }

    Ok(GroundTruthObject::from_parts(parts, regions, spec.surface_samples, rng))
}

/// Render the object's silhouette: project every surface point and stamp a
/// disc of `splat_radius_px` pixels around each hit. Fails when not a single
/// point lands inside the image rectangle.
pub fn render_mask(
    surface_points: &[Vec3],
    intrinsics: &CameraIntrinsics,
    extrinsics: &CameraExtrinsics,
    splat_radius_px: f64,
) -> Result<Mask, SceneError> {
    let mut mask = Mask::new(intrinsics.width, intrinsics.height);
    let w = intrinsics.width as f64;
    let h = intrinsics.height as f64;
    let mut any_visible = false;

    for p in surface_points {
        let Some(uv) = project_point(intrinsics, extrinsics, p) else {
            continue;
        };
        let px = uv.x * w;
        let py = uv.y * w; // normalized by width on both axes
        if px >= 0.0 && px < w && py >= 0.0 && py < h {
            any_visible = true;
        }
        let x0 = (px - splat_radius_px - 0.5).floor().max(0.0) as i64;
        let x1 = (px + splat_radius_px).ceil().min(w - 1.0) as i64;
        let y0 = (py - splat_radius_px - 0.5).floor().max(0.0) as i64;
        let y1 = (py + splat_radius_px).ceil().min(h - 1.0) as i64;
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let dx = ix as f64 + 0.5 - px;
                let dy = iy as f64 + 0.5 - py;
                if dx * dx + dy * dy <= splat_radius_px * splat_radius_px {
                    mask.set(ix as u32, iy as u32, true);
                }
            }
        }
    }

    if !any_visible {
        return Err(SceneError::ObjectNotVisible);
    }
    Ok(mask)
}

/// Corrupt a silhouette in place: each foreground pixel drops out with
/// probability `fraction`, punching dark holes in the mask the way flaky
/// segmentation does. Visits pixels in row-major order from the given rng,
/// so the damage is reproducible.
pub fn pepper_noise<R: Rng>(mask: &mut Mask, fraction: f64, rng: &mut R) {
    if fraction <= 0.0 {
        return;
    }
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) && rng.gen_bool(fraction.min(1.0)) {
                mask.set(x, y, false);
            }
        }
    }
}

/// Grow (`px > 0`) or shrink (`px < 0`) the foreground by `|px|` pixels with
/// a square structuring element — the blobby over- or under-segmentation a
/// real mask pipeline produces. `px = 0` is a no-op.
pub fn morph_mask(mask: &Mask, px: i32) -> Mask {
    if px == 0 {
        return mask.clone();
    }
    let r = px.unsigned_abs();
    let dilate = px > 0;
    let mut out = Mask::new(mask.width, mask.height);
    for y in 0..mask.height {
        for x in 0..mask.width {
            let mut hit = !dilate;
            'window: for dy in -(r as i64)..=r as i64 {
                for dx in -(r as i64)..=r as i64 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    let inside = nx >= 0
                        && ny >= 0
                        && nx < mask.width as i64
                        && ny < mask.height as i64
                        && mask.get(nx as u32, ny as u32);
                    if dilate && inside {
                        hit = true;
                        break 'window;
                    }
                    if !dilate && !inside {
                        hit = false;
                        break 'window;
                    }
                }
            }
            out.set(x, y, hit);
        }
    }
    out
}

/// Camera placement for a multi-view capture: a top ring and a side ring,
/// every camera aimed at `target`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewRingParams {
    pub n_top: usize,
    pub n_side: usize,
    pub radius: f64,
    pub top_height: f64,
    pub side_height: f64,
    pub target: [f64; 3],
}

impl Default for ViewRingParams {
    fn default() -> Self {
        Self {
            n_top: 60,
            n_side: 40,
            radius: 0.45,
            top_height: 0.4,
            side_height: 0.06,
            target: [0.0, 0.0, 0.04],
        }
    }
}

/// Evenly spaced look-at cameras on the two rings; the side ring is phase
/// shifted by half a step so azimuths interleave.
pub fn generate_view_ring(params: &ViewRingParams) -> Vec<CameraExtrinsics> {
    let target = Vec3::new(params.target[0], params.target[1], params.target[2]);
    let mut cams = Vec::with_capacity(params.n_top + params.n_side);
    for i in 0..params.n_top {
        let ang = i as f64 / params.n_top.max(1) as f64 * std::f64::consts::TAU;
        let eye = Vec3::new(
            target.x + params.radius * ang.cos(),
            target.y + params.radius * ang.sin(),
            params.top_height,
        );
        cams.push(CameraExtrinsics::look_at(eye, target));
    }
    for i in 0..params.n_side {
        let ang = (i as f64 + 0.5) / params.n_side.max(1) as f64 * std::f64::consts::TAU;
        let eye = Vec3::new(
            target.x + params.radius * ang.cos(),
            target.y + params.radius * ang.sin(),
            params.side_height,
        );
        cams.push(CameraExtrinsics::look_at(eye, target));
    }
    cams
}

/// The three-camera rig used by closed-loop steps: one top-down view plus
/// two side views a quarter turn apart.
pub fn three_view_rig(target: Vec3, radius: f64, top_height: f64, side_height: f64) -> Vec<CameraExtrinsics> {
    vec![
        CameraExtrinsics::look_at(Vec3::new(target.x, target.y, top_height), target),
        CameraExtrinsics::look_at(
            Vec3::new(target.x + radius, target.y, side_height),
            target,
        ),
        CameraExtrinsics::look_at(
            Vec3::new(target.x, target.y + radius, side_height),
            target,
        ),
    ]
}

/// Rejection-sample `count` points uniformly inside the object, each paired
/// with the local relative density — the raw material for a ground-truth
/// rigid body with the true mass distribution.
pub fn sample_volume_points<R: Rng>(
    obj: &GroundTruthObject,
    count: usize,
    rng: &mut R,
) -> (Vec<Vec3>, Vec<f64>) {
    let (lo, hi) = obj.aabb();
    let mut pts = Vec::with_capacity(count);
    let mut dens = Vec::with_capacity(count);
    let mut guard = 0usize;
    while pts.len() < count && guard < 10_000 * count {
        guard += 1;
        let p = Vec3::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z..hi.z),
        );
        if obj.contains(&p) {
            dens.push(obj.density_at(&p));
            pts.push(p);
        }
    }
    (pts, dens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(kind: PrimitiveKind, dims: &[f64]) -> PrimitiveSpec {
        PrimitiveSpec {
            kind,
            dimensions: dims.to_vec(),
            density_regions: Vec::new(),
            surface_samples: 2000,
        }
    }

    #[test]
    fn uniform_box_centroid_is_its_centre() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obj = build_primitive(&spec(PrimitiveKind::Box, &[0.08, 0.06, 0.05]), &mut rng).unwrap();
        assert_relative_eq!(obj.mass_centroid.x, 0.0, epsilon = 1e-9);
        assert_relative_eq!(obj.mass_centroid.y, 0.0, epsilon = 1e-9);
        assert_relative_eq!(obj.mass_centroid.z, 0.025, epsilon = 1e-9);
        for p in &obj.surface_points {
            assert!(p.z >= -1e-12 && p.z <= 0.05 + 1e-12);
            assert!(p.x.abs() <= 0.04 + 1e-12 && p.y.abs() <= 0.03 + 1e-12);
        }
    }

    /// Oracle: the hammer's centroid must equal the closed-form weighted
    /// average of its two (disjoint) box centroids.
    #[test]
    fn hammer_centroid_matches_two_body_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = [0.30, 0.03, 0.02, 0.08, 0.05, 0.04];
        let obj = build_primitive(&spec(PrimitiveKind::Hammer, &dims), &mut rng).unwrap();

        let v_handle = 0.30 * 0.03 * 0.02;
        let v_head = 0.08 * 0.05 * 0.04;
        let c_handle = Vec3::new(-0.19 + 0.15, 0.0, 0.01);
        let c_head = Vec3::new(0.15, 0.0, 0.02);
        let m_handle = v_handle * 1.0;
        let m_head = v_head * HAMMER_HEAD_DENSITY;
        let expect = (m_handle * c_handle + m_head * c_head) / (m_handle + m_head);

        assert_relative_eq!((obj.mass_centroid - expect).norm(), 0.0, epsilon = 1e-9);
        // Head-heavy: centroid well toward +x.
        assert!(obj.mass_centroid.x > 0.08);
    }

    #[test]
    fn sphere_silhouette_area_matches_disc_oracle() {
        // A sphere viewed from afar projects to a disc whose area is
        // pi (f r / d)^2 pixels; the splatted mask must land within a few
        // percent (splat dilation inflates the rim by ~radius+half pixel).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = spec(PrimitiveKind::Sphere, &[0.05]);
        s.surface_samples = 20000;
        let obj = build_primitive(&s, &mut rng).unwrap();
        let intr = CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 128.0, cy: 128.0, width: 256, height: 256 };
        let extr = CameraExtrinsics::look_at(Vec3::new(0.8, 0.0, 0.05), Vec3::new(0.0, 0.0, 0.05));
        let mask = render_mask(&obj.surface_points, &intr, &extr, 1.5).unwrap();

        let d = 0.8f64;
        let apparent_r_px = 500.0 * 0.05 / (d * d - 0.05f64 * 0.05).sqrt();
        let r_outer = apparent_r_px + 1.5 + 0.5;
        let area_expect = std::f64::consts::PI * apparent_r_px * apparent_r_px;
        let area_outer = std::f64::consts::PI * r_outer * r_outer;
        let area = mask.foreground_count() as f64;
        assert!(
            area >= area_expect * 0.97 && area <= area_outer * 1.03,
            "mask area {area} outside [{}, {}]",
            area_expect * 0.97,
            area_outer * 1.03
        );
    }

    #[test]
    fn render_fails_when_object_out_of_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let obj = build_primitive(&spec(PrimitiveKind::Box, &[0.05, 0.05, 0.05]), &mut rng).unwrap();
        let intr = CameraIntrinsics { fx: 400.0, fy: 400.0, cx: 64.0, cy: 64.0, width: 128, height: 128 };
        // Camera pointed away from the object.
        let extr = CameraExtrinsics::look_at(Vec3::new(0.5, 0.0, 0.1), Vec3::new(5.0, 0.0, 0.0));
        assert!(matches!(
            render_mask(&obj.surface_points, &intr, &extr, 2.0),
            Err(SceneError::ObjectNotVisible)
        ));
    }

    #[test]
    fn view_ring_counts_and_aims() {
        let params = ViewRingParams { n_top: 12, n_side: 8, ..Default::default() };
        let cams = generate_view_ring(&params);
        assert_eq!(cams.len(), 20);
        let target = Vec3::new(0.0, 0.0, 0.04);
        for extr in &cams {
            let q = extr.rotation * target + extr.translation;
            assert!(q.x.abs() < 1e-9 && q.y.abs() < 1e-9, "axis misses target");
            assert!(q.z > 0.1, "target should be well in front");
        }
        let rig = three_view_rig(target, 0.4, 0.5, 0.05);
        assert_eq!(rig.len(), 3);
        for extr in &rig {
            let q = extr.rotation * target + extr.translation;
            assert!(q.x.abs() < 1e-9 && q.y.abs() < 1e-9);
        }
    }

    #[test]
    fn lshape_union_is_concave() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obj =
            build_primitive(&spec(PrimitiveKind::Lshape, &[0.12, 0.10, 0.03, 0.04]), &mut rng).unwrap();
        // Inside both arms.
        assert!(obj.contains(&Vec3::new(-0.04, -0.04, 0.02)));
        // The concave corner region is outside.
        assert!(!obj.contains(&Vec3::new(0.04, 0.03, 0.02)));
        // Nothing below ground or above height.
        assert!(!obj.contains(&Vec3::new(-0.04, -0.04, 0.05)));
    }

    #[test]
    fn volume_samples_respect_density_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dims = [0.30, 0.03, 0.02, 0.08, 0.05, 0.04];
        let obj = build_primitive(&spec(PrimitiveKind::Hammer, &dims), &mut rng).unwrap();
        let (pts, dens) = sample_volume_points(&obj, 3000, &mut rng);
        assert_eq!(pts.len(), 3000);
        for (p, d) in pts.iter().zip(&dens) {
            assert!(obj.contains(p));
            if p.x > 0.11 + 1e-9 {
                assert_eq!(*d, HAMMER_HEAD_DENSITY);
            } else if p.x < 0.11 - 1e-9 {
                assert_eq!(*d, 1.0);
            }
        }
        // Density-weighted sample centroid approximates the true one.
        let wsum: f64 = dens.iter().sum();
        let mut c = Vec3::zeros();
        for (p, d) in pts.iter().zip(&dens) {
            c += *d * p;
        }
        c /= wsum;
        assert!((c - obj.mass_centroid).norm() < 5e-3, "sampled {c} vs {}", obj.mass_centroid);
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            build_primitive(&spec(PrimitiveKind::Sphere, &[0.1, 0.2]), &mut rng),
            Err(SceneError::BadSpec(_))
        ));
        assert!(matches!(
            build_primitive(&spec(PrimitiveKind::Box, &[0.1, -0.2, 0.1]), &mut rng),
            Err(SceneError::BadSpec(_))
        ));
        assert!(matches!(
            build_primitive(&spec(PrimitiveKind::Lshape, &[0.1, 0.1, 0.2, 0.05]), &mut rng),
            Err(SceneError::BadSpec(_))
        ));
    }

    #[test]
    fn morphology_grows_and_shrinks_by_whole_pixels() {
        // A 3x3 square in a 9x9 image.
        let mut mask = Mask::new(9, 9);
        for y in 3..6 {
            for x in 3..6 {
                mask.set(x, y, true);
            }
        }
        let grown = morph_mask(&mask, 1);
        assert_eq!(grown.foreground_count(), 25);
        assert_eq!(grown.foreground_bbox(), Some((2, 2, 6, 6)));

        let back = morph_mask(&grown, -1);
        assert_eq!(back, mask, "dilate then erode restores a convex blob");

        let gone = morph_mask(&mask, -2);
        assert_eq!(gone.foreground_count(), 0, "eroding past the radius clears it");

        assert_eq!(morph_mask(&mask, 0), mask);

        // Dropout leaves background untouched and only removes foreground.
        let mut noisy = mask.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        pepper_noise(&mut noisy, 0.5, &mut rng);
        assert!(noisy.foreground_count() < mask.foreground_count());
        for (a, b) in noisy.bits().iter().zip(mask.bits()) {
            assert!(!a | b, "noise never invents foreground");
        }
    }
}
