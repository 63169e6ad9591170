//! Particle reconstruction from calibrated silhouettes.
//!
//! A fixed-size table of free 3D particle positions is optimized directly:
//! every iteration picks a fresh mini-batch of views, projects the particles
//! into each, measures the k-nearest-neighbour Chamfer loss against points
//! sampled from the silhouette ([`chamfer`]), and descends the chained
//! gradient with momentum and stepwise learning-rate decay. Particles that
//! fall behind a camera pay a quadratic depth penalty instead of projecting.
//!
//! Initialization intersects per-view back-projected silhouette boxes, so the
//! optimizer starts inside (a dilation of) the visual hull. After the descent
//! a neighbour-distance filter drops stray "flying" particles and the result
//! is packaged as a rigid [`ParticleState`].

pub mod chamfer;

pub use chamfer::{knn_chamfer, knn_chamfer_grad, Grid2D, KBest};

use crate::geometry::{
    project_particles, sample_mask_points, CameraExtrinsics, CameraIntrinsics, CameraView,
    GeometryError, ParticleState, Vec2, Vec3, Z_MIN,
};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("point set of size {len} cannot supply {k} neighbours")]
    SetTooSmall { len: usize, k: usize },
    #[error("view {view} is infeasible: {reason}")]
    InfeasibleView { view: usize, reason: String },
    #[error("silhouette frusta have empty intersection; cannot initialize")]
    EmptyHull,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, report: Box<ReconReport> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Reconstruction hyper-parameters. `Default` gives the settings used by the
/// experiment suites: 2000 particles attending to 100 neighbours, 8 views
/// per iteration, heavy-ball momentum 0.9 with stepwise decay.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    pub n_particles: usize,
    /// Neighbour count of the Chamfer loss. 1 reproduces the classic loss;
    /// ~100 forces silhouette coverage.
    pub k: usize,
    pub iterations: usize,
    pub step_size: f64,
    pub momentum: f64,
    /// Learning rate is `step_size * step_decay^(iter / decay_interval)`.
    pub step_decay: f64,
    pub decay_interval: usize,
    pub views_per_batch: usize,
    pub mask_samples_per_view: usize,
    pub behind_camera_penalty_weight: f64,
    /// Flying-particle filter: drop particles whose mean distance to their
    /// `flying_neighbor_count` nearest neighbours exceeds
    /// `flying_distance_factor` times the median of that statistic.
    pub flying_neighbor_count: usize,
    pub flying_distance_factor: f64,
    /// Friction coefficient stamped on the resulting state.
    pub friction: f64,
    pub seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            n_particles: 2000,
            k: 100,
            iterations: 350,
            step_size: 3e-4,
            momentum: 0.9,
            step_decay: 0.7,
            decay_interval: 100,
            views_per_batch: 8,
            mask_samples_per_view: 2000,
            behind_camera_penalty_weight: 1.0,
            flying_neighbor_count: 8,
            flying_distance_factor: 3.0,
            friction: 0.5,
            seed: 0,
        }
    }
}

/// What happened during one reconstruction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconReport {
    pub n_views: usize,
    pub n_particles_initial: usize,
    pub n_particles_kept: usize,
    pub iterations_run: usize,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
    pub wall_time_s: f64,
}

/// A view with its silhouette sample points drawn and indexed once, reusable
/// across loss evaluations.
pub struct PreparedView {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
    pub samples: Vec<Vec2>,
    pub grid: Grid2D,
}

/// Draw `samples_per_view` silhouette points per view and build their search
/// grids. Views are processed in order from one seeded stream, so the result
/// is a pure function of the inputs.
pub fn prepare_views(
    views: &[CameraView],
    samples_per_view: usize,
    seed: u64,
) -> Result<Vec<PreparedView>, ReconError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let samples = sample_mask_points(&v.mask, samples_per_view, &mut rng)
                .map_err(|_| ReconError::InfeasibleView {
                    view: i,
                    reason: "mask has no foreground".into(),
                })?;
            let grid = Grid2D::build(&samples);
            Ok(PreparedView {
                intrinsics: v.intrinsics,
                extrinsics: v.extrinsics.clone(),
                samples,
                grid,
            })
        })
        .collect()
}

fn view_loss_grad(
    positions: &[Vec3],
    view: &PreparedView,
    view_index: usize,
    k: usize,
    behind_weight: f64,
) -> Result<(f64, Vec<Vec3>), ReconError> {
    let (pts2d, idx) = project_particles(&view.intrinsics, &view.extrinsics, positions);
    if pts2d.len() < k {
        return Err(ReconError::InfeasibleView {
            view: view_index,
            reason: format!("{} of {} particles visible, need at least {k}", pts2d.len(), positions.len()),
        });
    }
    if view.samples.len() < k {
        return Err(ReconError::SetTooSmall { len: view.samples.len(), k });
    }

    let mut grad3 = vec![Vec3::zeros(); positions.len()];

    // Chamfer between the projected particles and the silhouette samples;
    // gradient with respect to the projections only (samples are data).
    let (mut loss, grad2) = chamfer_against_prepared(&pts2d, view, k)?;

    let r = &view.extrinsics.rotation;
    let w = view.intrinsics.width as f64;
    for (j, &pi) in idx.iter().enumerate() {
        let p = &positions[pi as usize];
        let q = r * p + view.extrinsics.translation;
        let g = &grad2[j];
        // d(u,v)/dq for u = (fx qx/qz + cx)/w, v = (fy qy/qz + cy)/w.
        let gu = g.x * view.intrinsics.fx / w;
        let gv = g.y * view.intrinsics.fy / w;
        let dq = Vec3::new(
            gu / q.z,
            gv / q.z,
            -(gu * q.x + gv * q.y) / (q.z * q.z),
        );
        grad3[pi as usize] += r.transpose() * dq;
    }

    // Quadratic pull-back for particles at or behind the near plane.
    if behind_weight > 0.0 {
        let mut vis = vec![false; positions.len()];
        for &pi in &idx {
            vis[pi as usize] = true;
        }
        for (i, p) in positions.iter().enumerate() {
            if vis[i] {
                continue;
            }
            let q = r * p + view.extrinsics.translation;
            let defect = Z_MIN - q.z;
            loss += behind_weight * defect * defect;
            let dz = -2.0 * behind_weight * defect;
            grad3[i] += dz * Vec3::new(r[(2, 0)], r[(2, 1)], r[(2, 2)]);
        }
    }

    Ok((loss, grad3))
}

/// One-sided-prepared variant of [`knn_chamfer_grad`]: the sample grid is
/// prebuilt, only the projection grid changes per call.
fn chamfer_against_prepared(
    proj: &[Vec2],
    view: &PreparedView,
    k: usize,
) -> Result<(f64, Vec<Vec2>), ReconError> {
    let gp = Grid2D::build(proj);
    let mut grad = vec![Vec2::zeros(); proj.len()];
    let inv_k = 1.0 / k as f64;
    let mut best = KBest::new(k);

    let mut s1 = 0.0;
    for (qi, q) in proj.iter().enumerate() {
        view.grid.knn(q, k, &mut best);
        for &(d2, pi) in best.entries() {
            s1 += d2;
            let p = &view.samples[pi as usize];
            grad[qi] += 2.0 * inv_k * Vec2::new(q.x - p.x, q.y - p.y);
        }
    }
    let mut s2 = 0.0;
    for q in &view.samples {
        gp.knn(q, k, &mut best);
        for &(d2, pi) in best.entries() {
            s2 += d2;
            let p = &proj[pi as usize];
            grad[pi as usize] += 2.0 * inv_k * Vec2::new(p.x - q.x, p.y - q.y);
        }
    }
    Ok((s1 * inv_k + s2 * inv_k, grad))
}

/// Silhouette-matching loss of `positions` against a batch of views, plus
/// its gradient. The per-view terms are summed in view order regardless of
/// how the batch is scheduled, keeping results deterministic.
pub fn reconstruction_loss(
    positions: &[Vec3],
    batch: &[&PreparedView],
    k: usize,
    behind_weight: f64,
) -> Result<(f64, Vec<Vec3>), ReconError> {
    let per_view: Vec<Result<(f64, Vec<Vec3>), ReconError>> = batch
        .par_iter()
        .enumerate()
        .map(|(vi, view)| view_loss_grad(positions, view, vi, k, behind_weight))
        .collect();

    let mut loss = 0.0;
    let mut grad = vec![Vec3::zeros(); positions.len()];
    for r in per_view {
        let (l, g) = r?;
        loss += l;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += *gi;
        }
    }
    Ok((loss, grad))
}

/// Loss only, no gradient allocation — used by pose search where many
/// candidates are scored.
pub fn reconstruction_loss_value(
    positions: &[Vec3],
    batch: &[&PreparedView],
    k: usize,
    behind_weight: f64,
) -> Result<f64, ReconError> {
    let mut total = 0.0;
    let mut best = KBest::new(k);
    for (vi, view) in batch.iter().enumerate() {
        let (pts2d, idx) = project_particles(&view.intrinsics, &view.extrinsics, positions);
        if pts2d.len() < k {
            return Err(ReconError::InfeasibleView {
                view: vi,
                reason: format!("{} particles visible, need at least {k}", pts2d.len()),
            });
        }
        if view.samples.len() < k {
            return Err(ReconError::SetTooSmall { len: view.samples.len(), k });
        }
        let gp = Grid2D::build(&pts2d);
        let inv_k = 1.0 / k as f64;
        let mut s1 = 0.0;
        for q in &pts2d {
            view.grid.knn(q, k, &mut best);
            for &(d2, _) in best.entries() {
                s1 += d2;
            }
        }
        let mut s2 = 0.0;
        for q in &view.samples {
            gp.knn(q, k, &mut best);
            for &(d2, _) in best.entries() {
                s2 += d2;
            }
        }
        total += s1 * inv_k + s2 * inv_k;
        if behind_weight > 0.0 && idx.len() < positions.len() {
            let mut vis = vec![false; positions.len()];
            for &pi in &idx {
                vis[pi as usize] = true;
            }
            for (i, p) in positions.iter().enumerate() {
                if !vis[i] {
                    let q = view.extrinsics.rotation * p + view.extrinsics.translation;
                    let defect = Z_MIN - q.z;
                    total += behind_weight * defect * defect;
                }
            }
        }
    }
    Ok(total)
}

/// Camera ray through the centre of a view's silhouette bounding box.
fn center_ray(view: &CameraView) -> Option<(Vec3, Vec3)> {
    let (x0, y0, x1, y1) = view.mask.foreground_bbox()?;
    let cx_px = (x0 + x1 + 1) as f64 / 2.0;
    let cy_px = (y0 + y1 + 1) as f64 / 2.0;
    let intr = &view.intrinsics;
    let dir_cam = Vec3::new((cx_px - intr.cx) / intr.fx, (cy_px - intr.cy) / intr.fy, 1.0);
    let dir = (view.extrinsics.rotation.transpose() * dir_cam).normalize();
    Some((view.extrinsics.camera_center(), dir))
}

/// Uniform samples inside the intersection of per-view back-projected
/// silhouette boxes — a cheap outer bound on the visual hull.
///
/// The object's rough centre comes from least-squares intersection of the
/// per-view silhouette-centre rays; each view's silhouette bounding
/// rectangle is then back-projected at a generous depth range around that
/// centre and the resulting axis-aligned boxes are intersected. At least two
/// views are needed to pin the centre down.
pub fn init_particles<R: Rng>(
    views: &[CameraView],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec3>, ReconError> {
    if views.len() < 2 {
        return Err(ReconError::EmptyHull);
    }
    let rays: Vec<(Vec3, Vec3)> = views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            center_ray(v).ok_or(ReconError::InfeasibleView {
                view: i,
                reason: "mask has no foreground".into(),
            })
        })
        .collect::<Result<_, _>>()?;

    // x minimizing sum_i |(I - d_i d_i^T)(x - C_i)|^2.
    let mut a = nalgebra::Matrix3::<f64>::zeros();
    let mut b = Vec3::zeros();
    for (c, d) in &rays {
        let proj = nalgebra::Matrix3::identity() - d * d.transpose();
        a += proj;
        b += proj * c;
    }
    let center = a.lu().solve(&b).ok_or(ReconError::EmptyHull)?;

    // Per-view world-space box around the back-projected silhouette rectangle.
    let mut lo = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut hi = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for view in views {
        let (x0, y0, x1, y1) = view.mask.foreground_bbox().expect("checked above");
        let intr = &view.intrinsics;
        let depth = view.extrinsics.depth_of(&center);
        if depth <= Z_MIN {
            return Err(ReconError::EmptyHull);
        }
        let half_px = 0.5 * ((x1 - x0 + 1).max(y1 - y0 + 1)) as f64;
        let radius = (depth * half_px / intr.fx.min(intr.fy)).max(0.02);
        let d_near = (depth - 1.5 * radius).max(Z_MIN * 2.0);
        let d_far = depth + 1.5 * radius;

        let mut vlo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut vhi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (px, py) in [
            (x0 as f64, y0 as f64),
            ((x1 + 1) as f64, y0 as f64),
            (x0 as f64, (y1 + 1) as f64),
            ((x1 + 1) as f64, (y1 + 1) as f64),
        ] {
            for depth in [d_near, d_far] {
                let q = Vec3::new(
                    depth * (px - intr.cx) / intr.fx,
                    depth * (py - intr.cy) / intr.fy,
                    depth,
                );
                let p = view.extrinsics.rotation.transpose() * (q - view.extrinsics.translation);
                vlo = vlo.inf(&p);
                vhi = vhi.sup(&p);
            }
        }
        lo = lo.sup(&vlo);
        hi = hi.inf(&vhi);
    }
    if lo.x >= hi.x || lo.y >= hi.y || lo.z >= hi.z {
        return Err(ReconError::EmptyHull);
    }

    let mut out = Vec::with_capacity(n);
    let max_tries = 50 * n.max(1);
    for _ in 0..max_tries {
        if out.len() == n {
            break;
        }
        let p = Vec3::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z..hi.z),
        );
        let in_front = views
            .iter()
            .all(|v| v.extrinsics.depth_of(&p) > Z_MIN);
        if in_front {
            out.push(p);
        }
    }
    if out.len() < n {
        return Err(ReconError::EmptyHull);
    }
    Ok(out)
}

/// Indices of particles to keep: those whose mean distance to their
/// `neighbor_count` nearest neighbours is at most `factor` times the median
/// of that statistic. Pairwise distances only, so the selection is invariant
/// to rigid motions of the whole cloud.
pub fn filter_flying_particles(
    positions: &[Vec3],
    neighbor_count: usize,
    factor: f64,
) -> Vec<usize> {
    let n = positions.len();
    if n <= neighbor_count + 1 {
        return (0..n).collect();
    }
    let mean_dist: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d2: Vec<f64> = (0..n)
                .filter(|j| *j != i)
                .map(|j| (positions[i] - positions[j]).norm_squared())
                .collect();
            d2.select_nth_unstable_by(neighbor_count - 1, |a, b| a.partial_cmp(b).unwrap());
            d2[..neighbor_count].iter().map(|d| d.sqrt()).sum::<f64>() / neighbor_count as f64
        })
        .collect();

    let mut sorted = mean_dist.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 0 {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    } else {
        sorted[n / 2]
    };
    (0..n).filter(|i| mean_dist[*i] <= factor * median).collect()
}

/// Full reconstruction: initialize from the silhouette frusta, descend the
/// batched view loss with momentum, filter flyers, package a rigid state.
pub fn reconstruct(
    views: &[CameraView],
    cfg: &ReconConfig,
) -> Result<(ParticleState, ReconReport), ReconError> {
    let t0 = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prepared = prepare_views(views, cfg.mask_samples_per_view, rng.gen())?;
    let mut positions = init_particles(views, cfg.n_particles, &mut rng)?;
    let mut velocity = vec![Vec3::zeros(); positions.len()];
    let mut history = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let batch: Vec<&PreparedView> = if prepared.len() <= cfg.views_per_batch {
            prepared.iter().collect()
        } else {
            let mut picks: Vec<usize> =
                sample_indices(&mut rng, prepared.len(), cfg.views_per_batch).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| &prepared[i]).collect()
        };

        let (loss, grad) = reconstruction_loss(
            &positions,
            &batch,
            cfg.k,
            cfg.behind_camera_penalty_weight,
        )?;
        history.push(loss);
        if !loss.is_finite() {
            return Err(ReconError::NonFiniteLoss {
                iteration: iter,
                report: Box::new(ReconReport {
                    n_views: views.len(),
                    n_particles_initial: cfg.n_particles,
                    n_particles_kept: 0,
                    iterations_run: iter + 1,
                    final_loss: loss,
                    loss_history: history.clone(),
                    wall_time_s: t0.elapsed().as_secs_f64(),
                }),
            });
        }

        let lr = cfg.step_size * cfg.step_decay.powi((iter / cfg.decay_interval) as i32);
        for ((p, v), g) in positions.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v - lr * g;
            *p += *v;
        }
    }

    let kept = filter_flying_particles(
        &positions,
        cfg.flying_neighbor_count,
        cfg.flying_distance_factor,
    );
    let final_positions: Vec<Vec3> = kept.iter().map(|&i| positions[i]).collect();
    let n_kept = final_positions.len();
    let state = ParticleState::rigid_from_positions(final_positions, cfg.friction);

    let report = ReconReport {
        n_views: views.len(),
        n_particles_initial: cfg.n_particles,
        n_particles_kept: n_kept,
        iterations_run: cfg.iterations,
        final_loss: history.last().copied().unwrap_or(f64::NAN),
        loss_history: history,
        wall_time_s: t0.elapsed().as_secs_f64(),
    };
    Ok((state, report))
}
