//! Occupancy grids and volumetric IoU.
//!
//! Reconstruction quality is scored by voxelizing the recovered particle
//! cloud and the ground-truth occupancy, then intersecting on a common
//! supersampled lattice, so grids with different origins or voxel sizes
//! compare without any alignment step.

use super::{GroundTruthObject, SceneError};
use crate::geometry::Vec3;

/// Dense boolean voxel grid. `origin` is the minimum corner of voxel
/// `(0, 0, 0)`; the grid is anchored to world-space multiples of
/// `voxel_size`, so equal clouds produce bit-identical grids regardless of
/// where their bounding boxes fall.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    bits: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(origin: Vec3, voxel_size: f64, dims: [usize; 3]) -> Self {
        Self { origin, voxel_size, dims, bits: vec![false; dims[0] * dims[1] * dims[2]] }
    }

    #[inline]
    fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> bool {
        self.bits[self.idx(ix, iy, iz)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, iz: usize, v: bool) {
        let i = self.idx(ix, iy, iz);
        self.bits[i] = v;
    }

    pub fn count_occupied(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                (ix as f64 + 0.5) * self.voxel_size,
                (iy as f64 + 0.5) * self.voxel_size,
                (iz as f64 + 0.5) * self.voxel_size,
            )
    }

    /// Voxel lookup for an arbitrary world point; outside the grid is empty.
    pub fn contains_point(&self, p: &Vec3) -> bool {
        let q = (p - self.origin) / self.voxel_size;
        let (ix, iy, iz) = (q.x.floor(), q.y.floor(), q.z.floor());
        if ix < 0.0 || iy < 0.0 || iz < 0.0 {
            return false;
        }
        let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
        if ix >= self.dims[0] || iy >= self.dims[1] || iz >= self.dims[2] {
            return false;
        }
        self.get(ix, iy, iz)
    }

    fn max_corner(&self) -> Vec3 {
        self.origin
            + Vec3::new(
                self.dims[0] as f64 * self.voxel_size,
                self.dims[1] as f64 * self.voxel_size,
                self.dims[2] as f64 * self.voxel_size,
            )
    }
}

fn lattice_floor(x: f64, voxel_size: f64) -> f64 {
    (x / voxel_size).floor() * voxel_size
}

/// Voxelize a particle cloud. Every particle marks the voxel containing it,
/// plus any voxel whose centre lies within `dilation_radius`; afterwards
/// each vertical column is filled between its lowest and highest occupied
/// voxel, closing the hollow interior that surface-seeking particles leave.
pub fn voxelize_particles(points: &[Vec3], voxel_size: f64, dilation_radius: f64) -> OccupancyGrid {
    assert!(voxel_size > 0.0, "voxel size must be positive");
    if points.is_empty() {
        return OccupancyGrid::new(Vec3::zeros(), voxel_size, [0, 0, 0]);
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let pad = dilation_radius + voxel_size;
    let origin = Vec3::new(
        lattice_floor(lo.x - pad, voxel_size),
        lattice_floor(lo.y - pad, voxel_size),
        lattice_floor(lo.z - pad, voxel_size),
    );
    let dims = [
        (((hi.x + pad) - origin.x) / voxel_size).ceil() as usize + 1,
        (((hi.y + pad) - origin.y) / voxel_size).ceil() as usize + 1,
        (((hi.z + pad) - origin.z) / voxel_size).ceil() as usize + 1,
    ];
    let mut grid = OccupancyGrid::new(origin, voxel_size, dims);

    let reach = (dilation_radius / voxel_size).ceil() as i64 + 1;
    for p in points {
        let q = (p - origin) / voxel_size;
        let (cx, cy, cz) = (q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64);
        for iz in cz - reach..=cz + reach {
            for iy in cy - reach..=cy + reach {
                for ix in cx - reach..=cx + reach {
                    if ix < 0
                        || iy < 0
                        || iz < 0
                        || ix as usize >= dims[0]
                        || iy as usize >= dims[1]
                        || iz as usize >= dims[2]
                    {
                        continue;
                    }
                    let own = ix == cx && iy == cy && iz == cz;
                    let within = (grid.voxel_center(ix as usize, iy as usize, iz as usize) - p)
                        .norm_squared()
                        <= dilation_radius * dilation_radius;
                    if own || within {
                        grid.set(ix as usize, iy as usize, iz as usize, true);
                    }
                }
            }
        }
    }

    // Vertical interior fill, column by column.
    for iy in 0..dims[1] {
        for ix in 0..dims[0] {
            let mut zmin = None;
            let mut zmax = 0;
            for iz in 0..dims[2] {
                if grid.get(ix, iy, iz) {
                    zmin.get_or_insert(iz);
                    zmax = iz;
                }
            }
            if let Some(zmin) = zmin {
                for iz in zmin..=zmax {
                    grid.set(ix, iy, iz, true);
                }
            }
        }
    }
    grid
}

/// Voxelize an exact object by testing voxel centres against its inside
/// test, over its bounding box plus one voxel of padding.
pub fn voxelize_occupancy(obj: &GroundTruthObject, voxel_size: f64) -> OccupancyGrid {
    let (lo, hi) = obj.aabb();
    let origin = Vec3::new(
        lattice_floor(lo.x - voxel_size, voxel_size),
        lattice_floor(lo.y - voxel_size, voxel_size),
        lattice_floor(lo.z - voxel_size, voxel_size),
    );
    let dims = [
        (((hi.x + voxel_size) - origin.x) / voxel_size).ceil() as usize + 1,
        (((hi.y + voxel_size) - origin.y) / voxel_size).ceil() as usize + 1,
        (((hi.z + voxel_size) - origin.z) / voxel_size).ceil() as usize + 1,
    ];
    let mut grid = OccupancyGrid::new(origin, voxel_size, dims);
    for iz in 0..dims[2] {
        for iy in 0..dims[1] {
            for ix in 0..dims[0] {
                if obj.contains(&grid.voxel_center(ix, iy, iz)) {
                    grid.set(ix, iy, iz, true);
                }
            }
        }
    }
    grid
}

/// Volumetric intersection-over-union of two grids, evaluated by sampling a
/// common lattice at half the finer voxel size over the union of both
/// bounding boxes. Symmetric in its arguments by construction.
pub fn iou(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64, SceneError> {
    if a.count_occupied() == 0 && b.count_occupied() == 0 {
        return Err(SceneError::EmptyUnion);
    }
    let h = a.voxel_size.min(b.voxel_size) / 2.0;
    let lo = a.origin.inf(&b.origin);
    let hi = a.max_corner().sup(&b.max_corner());
    let nx = ((hi.x - lo.x) / h).ceil() as usize;
    let ny = ((hi.y - lo.y) / h).ceil() as usize;
    let nz = ((hi.z - lo.z) / h).ceil() as usize;

    let mut inter = 0u64;
    let mut union = 0u64;
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let p = lo
                    + Vec3::new(
                        (ix as f64 + 0.5) * h,
                        (iy as f64 + 0.5) * h,
                        (iz as f64 + 0.5) * h,
                    );
                let in_a = a.contains_point(&p);
                let in_b = b.contains_point(&p);
                if in_a && in_b {
                    inter += 1;
                }
                if in_a || in_b {
                    union += 1;
                }
            }
        }
    }
    if union == 0 {
        return Err(SceneError::EmptyUnion);
    }
    Ok(inter as f64 / union as f64)
}
