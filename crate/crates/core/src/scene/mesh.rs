//! Triangle meshes as ground-truth geometry: OBJ parsing, inside tests by
//! ray parity, and area-uniform surface sampling.

use super::SceneError;
use crate::geometry::Vec3;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    fn triangle(&self, f: usize) -> (Vec3, Vec3, Vec3) {
        let [a, b, c] = self.faces[f];
        (self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize])
    }

    pub fn triangle_area(&self, f: usize) -> f64 {
        let (a, b, c) = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.triangle_area(f)).sum()
    }

    /// Signed volume via the divergence theorem; negative when the winding
    /// is inward.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let (a, b, c) = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Volume centroid of a closed mesh, exact from signed tetrahedra
    /// against the origin. `None` when the volume is numerically zero.
    pub fn volume_centroid(&self) -> Option<Vec3> {
        let mut vol = 0.0;
        let mut moment = Vec3::zeros();
        for f in 0..self.faces.len() {
            let (a, b, c) = self.triangle(f);
            let v = a.dot(&b.cross(&c)) / 6.0;
            vol += v;
            moment += v * (a + b + c) / 4.0;
        }
        if vol.abs() < 1e-12 {
            None
        } else {
            Some(moment / vol)
        }
    }

    /// Translate so the mesh rests on `z = 0` centred on the origin in x, y
    /// (the convention every built-in primitive follows).
    pub fn rest_on_ground(&mut self) {
        let (lo, hi) = self.aabb();
        let shift = Vec3::new(-(lo.x + hi.x) / 2.0, -(lo.y + hi.y) / 2.0, -lo.z);
        for v in &mut self.vertices {
            *v += shift;
        }
    }
}

/// Parse Wavefront OBJ text: `v` and `f` records, `v/vt/vn` splitting,
/// negative (relative) indices, and fan triangulation of larger polygons.
/// Degenerate (zero-area) faces are dropped. Everything else is ignored.
pub fn parse_obj(src: &str) -> Result<TriMesh, SceneError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for (line_no, raw) in src.lines().enumerate() {
        let line = line_no + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let mut toks = text.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = toks.next().ok_or_else(|| SceneError::ParseError {
                        line,
                        msg: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| SceneError::ParseError {
                        line,
                        msg: format!("bad coordinate {tok:?}"),
                    })?;
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in toks {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| SceneError::ParseError {
                        line,
                        msg: format!("bad face index {tok:?}"),
                    })?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(SceneError::ParseError {
                            line,
                            msg: "face index 0 is not allowed".into(),
                        });
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(SceneError::ParseError {
                            line,
                            msg: format!("face index {i} out of range"),
                        });
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(SceneError::ParseError {
                        line,
                        msg: "face needs at least three vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {} // vt, vn, o, g, s, usemtl, ...
        }
    }

    let mesh = TriMesh { vertices, faces };
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return Err(SceneError::ParseError { line: 0, msg: "no geometry found".into() });
    }
    let cleaned: Vec<[u32; 3]> = mesh
        .faces
        .iter()
        .enumerate()
        .filter(|(f, _)| mesh.triangle_area(*f) > 1e-14)
        .map(|(_, face)| *face)
        .collect();
    if cleaned.is_empty() {
        return Err(SceneError::ParseError { line: 0, msg: "all faces are degenerate".into() });
    }
    Ok(TriMesh { vertices: mesh.vertices, faces: cleaned })
}

// Fixed, slightly irrational ray directions so that rays through generic
// points almost never graze an edge or vertex exactly.
const RAY_A: [f64; 3] = [0.577_861_423, 0.576_219_987, 0.577_970_301];
const RAY_B: [f64; 3] = [-0.267_311_941, 0.801_729_443, 0.534_486_629];

fn parity(mesh: &TriMesh, p: &Vec3, dir: &Vec3) -> bool {
    let mut crossings = 0usize;
    for f in 0..mesh.faces.len() {
        let (a, b, c) = mesh.triangle(f);
        // Moeller-Trumbore, counting only forward hits.
        let e1 = b - a;
        let e2 = c - a;
        let pv = dir.cross(&e2);
        let det = e1.dot(&pv);
        if det.abs() < 1e-14 {
            continue;
        }
        let inv = 1.0 / det;
        let tv = p - a;
        let u = tv.dot(&pv) * inv;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let qv = tv.cross(&e1);
        let v = dir.dot(&qv) * inv;
        if v < 0.0 || u + v > 1.0 {
            continue;
        }
        let t = e2.dot(&qv) * inv;
        if t > 1e-12 {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}

/// Inside test by ray-crossing parity along a fixed skew direction, with a
/// bounding-box fast path.
pub fn mesh_occupancy(mesh: &TriMesh, p: &Vec3) -> bool {
    let (lo, hi) = mesh.aabb();
    if p.x < lo.x || p.y < lo.y || p.z < lo.z || p.x > hi.x || p.y > hi.y || p.z > hi.z {
        return false;
    }
    parity(mesh, p, &Vec3::new(RAY_A[0], RAY_A[1], RAY_A[2]))
}

/// Probe watertightness: at `n` random points in an inflated bounding box,
/// parity along two independent directions must agree. A mesh with holes
/// fails quickly; a consistent closed mesh passes.
pub fn probe_watertight<R: Rng>(mesh: &TriMesh, n: usize, rng: &mut R) -> Result<(), SceneError> {
    let (lo, hi) = mesh.aabb();
    let c = (lo + hi) / 2.0;
    let half = (hi - lo) / 2.0 * 1.2 + Vec3::new(1e-6, 1e-6, 1e-6);
    let da = Vec3::new(RAY_A[0], RAY_A[1], RAY_A[2]);
    let db = Vec3::new(RAY_B[0], RAY_B[1], RAY_B[2]);
    for _ in 0..n {
        let p = Vec3::new(
            c.x + rng.gen_range(-half.x..half.x),
            c.y + rng.gen_range(-half.y..half.y),
            c.z + rng.gen_range(-half.z..half.z),
        );
        if parity(mesh, &p, &da) != parity(mesh, &p, &db) {
            return Err(SceneError::NonWatertight);
        }
    }
    Ok(())
}

/// `count` points uniform over the surface: triangle by cumulative area
/// (binary search), position by uniform barycentric coordinates.
pub fn mesh_surface_points<R: Rng>(mesh: &TriMesh, count: usize, rng: &mut R) -> Vec<Vec3> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.triangle_area(f);
        cumulative.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = rng.gen_range(0.0..total);
        let f = cumulative.partition_point(|a| *a < pick).min(mesh.faces.len() - 1);
        let (a, b, c) = mesh.triangle(f);
        let mut u: f64 = rng.gen_range(0.0..1.0);
        let mut v: f64 = rng.gen_range(0.0..1.0);
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        out.push(a + u * (b - a) + v * (c - a));
    }
    out
}
