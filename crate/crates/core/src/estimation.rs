//! Belief tracking between actions: re-estimating where the object sits
//! from freshly rendered silhouettes, and where its mass sits from how it
//! responded to pushes. Both are cross-entropy searches — the pose search
//! scores candidates by silhouette-matching loss of the displaced reference
//! cloud, the mass search by replaying recorded pushes under candidate mass
//! distributions and comparing the simulated motion to what was observed.

use crate::dynamics::{
    make_rigid_body, rollout_push, DynamicsError, SimParams, SimState,
};
use crate::geometry::{apply_planar_pose, CameraView, ParticleState, PlanarPose};
use crate::planner::{
    ce_mpc, ActionDistribution, CemParams, PlannerError,
};
use crate::recon::{prepare_views, reconstruction_loss_value, PreparedView, ReconError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error(transparent)]
    Recon(#[from] ReconError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("bad estimation input: {0}")]
    BadInput(String),
}

/// Where the object is believed to sit in the plane, with per-axis spread.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseBelief {
    pub mean: PlanarPose,
    /// Spread as (σx, σy, σθ); strictly positive.
    pub std: [f64; 3],
}

impl PoseBelief {
    pub fn centered(mean: PlanarPose, std: [f64; 3]) -> Self {
        Self { mean, std }
    }

    fn validate(&self) -> Result<(), EstimationError> {
        let finite = [self.mean.x, self.mean.y, self.mean.theta]
            .iter()
            .chain(self.std.iter())
            .all(|v| v.is_finite());
        if !finite || self.std.iter().any(|s| *s <= 0.0) {
            return Err(EstimationError::BadInput(
                "pose belief needs finite mean and strictly positive std".into(),
            ));
        }
        Ok(())
    }
}

/// Where the object's mass centre is believed to sit in the plane.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComBelief {
    pub mean: [f64; 2],
    /// 2×2 symmetric positive-semidefinite spread.
    pub covariance: [[f64; 2]; 2],
}

impl ComBelief {
    /// Isotropic belief: σ² on both diagonal entries.
    pub fn isotropic(mean: [f64; 2], sigma: f64) -> Self {
        Self { mean, covariance: [[sigma * sigma, 0.0], [0.0, sigma * sigma]] }
    }

    pub fn trace(&self) -> f64 {
        self.covariance[0][0] + self.covariance[1][1]
    }

    fn validate(&self) -> Result<(), EstimationError> {
        let c = &self.covariance;
        let finite = self.mean.iter().all(|v| v.is_finite())
            && c.iter().flatten().all(|v| v.is_finite());
        // A symmetric 2×2 matrix is PSD iff both diagonal entries and the
        // determinant are nonnegative.
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        if !finite
            || (c[0][1] - c[1][0]).abs() > 1e-12
            || c[0][0] < 0.0
            || c[1][1] < 0.0
            || det < -1e-18
        {
            return Err(EstimationError::BadInput(
                "mass-centre belief needs a finite mean and a symmetric PSD covariance".into(),
            ));
        }
        Ok(())
    }
}

/// One executed push and what it did: everything needed to replay it under a
/// hypothetical mass distribution and compare.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PushRecord {
    pub action: crate::dynamics::PushAction,
    pub pose_before: PlanarPose,
    pub pose_after_observed: PlanarPose,
}

/// Floor on the returned pose spread: a millimetre in position, half a
/// degree in angle. Below that the silhouette cost is quantization noise.
pub const POSE_STD_FLOOR: [f64; 3] = [1e-3, 1e-3, 0.5 * std::f64::consts::PI / 180.0];

/// Silhouette sample points drawn per view for pose scoring.
const POSE_MASK_SAMPLES: usize = 1200;

/// Half-width of the planar search box around the pose prior mean.
const POSE_SEARCH_SPAN: f64 = 0.2;

/// Re-estimate the object's planar pose from fresh silhouettes. The
/// reference cloud is fixed; candidates displace it by (x, y, θ) and are
/// scored by the plain nearest-neighbour silhouette loss against the views
/// (the cloud's shape is already settled, so coverage-forcing neighbour
/// counts buy nothing here). Returns the final elite mean and spread,
/// floored at [`POSE_STD_FLOOR`].
pub fn estimate_pose(
    reference: &ParticleState,
    views: &[CameraView],
    prior: &PoseBelief,
    cem: &CemParams,
) -> Result<PoseBelief, EstimationError> {
    prior.validate()?;
    if reference.particles.is_empty() {
        return Err(EstimationError::BadInput("empty reference cloud".into()));
    }
    if views.is_empty() {
        return Err(EstimationError::BadInput("pose estimation needs at least one view".into()));
    }
    let prepared = prepare_views(views, POSE_MASK_SAMPLES, cem.seed)?;
    let batch: Vec<&PreparedView> = prepared.iter().collect();
    let positions = reference.positions();

    let m = &prior.mean;
    let prior_dist = ActionDistribution::single(
        vec![m.x, m.y, m.theta],
        prior.std.to_vec(),
    );
    let bounds = vec![
        (m.x - POSE_SEARCH_SPAN, m.x + POSE_SEARCH_SPAN),
        (m.y - POSE_SEARCH_SPAN, m.y + POSE_SEARCH_SPAN),
        (m.theta - std::f64::consts::PI, m.theta + std::f64::consts::PI),
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(cem.seed);
    let outcome = ce_mpc(
        |a: &[Vec<f64>]| {
            let pose = PlanarPose { x: a[0][0], y: a[0][1], theta: a[0][2] };
            let moved = apply_planar_pose(&positions, &pose);
            match reconstruction_loss_value(&moved, &batch, 1, 0.0) {
                Ok(loss) => -loss,
                Err(_) => f64::NEG_INFINITY,
            }
        },
        &prior_dist,
        cem,
        &bounds,
        &mut rng,
    )?;

    let mean = &outcome.distribution.mean[0];
    let std = &outcome.distribution.std[0];
    Ok(PoseBelief {
        mean: PlanarPose {
            x: mean[0],
            y: mean[1],
            theta: crate::geometry::wrap_angle(mean[2]),
        },
        std: [
            std[0].max(POSE_STD_FLOOR[0]),
            std[1].max(POSE_STD_FLOOR[1]),
            std[2].max(POSE_STD_FLOOR[2]),
        ],
    })
}

/// Evaluate the pose-candidate cost directly — the quantity
/// [`estimate_pose`] minimizes. Exposed for dominance and diagnostics
/// checks.
pub fn pose_candidate_cost(
    reference: &ParticleState,
    prepared: &[PreparedView],
    pose: &PlanarPose,
) -> Result<f64, EstimationError> {
    let batch: Vec<&PreparedView> = prepared.iter().collect();
    let moved = apply_planar_pose(&reference.positions(), pose);
    Ok(reconstruction_loss_value(&moved, &batch, 1, 0.0)?)
}

/// Width of the planar Gaussian that concentrates mass around a candidate
/// centre when rebuilding the body.
pub const COM_CONCENTRATION: f64 = 0.02;

/// Per-record replay error weight on the angle term, in metres per radian.
const COM_ANGLE_WEIGHT: f64 = 0.1;

/// Estimate where the mass sits from how recorded pushes actually moved the
/// body. Candidates are (x_c, y_c) inside the cloud's planar footprint; each
/// rebuilds the body with mass concentrated around the candidate, replays
/// every record's push from its recorded start pose, and pays the summed
/// mismatch (position error + 0.1 · angle error) against the observed
/// outcomes. The returned belief is the elite mean with the elites' sample
/// covariance.
pub fn estimate_com(
    template: &ParticleState,
    records: &[PushRecord],
    prior: &ComBelief,
    cem: &CemParams,
    sim: &SimParams,
) -> Result<ComBelief, EstimationError> {
    prior.validate()?;
    if template.particles.is_empty() {
        return Err(EstimationError::BadInput("empty template cloud".into()));
    }
    if records.is_empty() {
        return Err(EstimationError::BadInput(
            "mass-centre estimation needs at least one push record".into(),
        ));
    }

    let positions = template.positions();
    let (mut lo, mut hi) = (positions[0], positions[0]);
    for p in &positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let bounds = vec![(lo.x, hi.x), (lo.y, hi.y)];
    let mean = vec![
        prior.mean[0].clamp(lo.x, hi.x),
        prior.mean[1].clamp(lo.y, hi.y),
    ];
    let std = vec![
        prior.covariance[0][0].sqrt().max(cem.min_std),
        prior.covariance[1][1].sqrt().max(cem.min_std),
    ];
    let prior_dist = ActionDistribution::single(mean, std);

    let mut rng = ChaCha8Rng::seed_from_u64(cem.seed);
    let outcome = ce_mpc(
        |a: &[Vec<f64>]| {
            let (xc, yc) = (a[0][0], a[0][1]);
            let model = match make_rigid_body(template, Some((xc, yc, COM_CONCENTRATION))) {
                Ok(m) => m,
                Err(_) => return f64::NEG_INFINITY,
            };
            let mut cost = 0.0;
            for rec in records {
                let start = SimState::at_planar_pose(&model, &rec.pose_before);
                match rollout_push(&model, &start, &rec.action, sim) {
                    Ok((delta, _)) => {
                        let predicted = rec.pose_before.then(&delta);
                        cost += predicted.position_error(&rec.pose_after_observed)
                            + COM_ANGLE_WEIGHT
                                * predicted.angle_error(&rec.pose_after_observed);
                    }
                    Err(_) => return f64::NEG_INFINITY,
                }
            }
            -cost
        },
        &prior_dist,
        cem,
        &bounds,
        &mut rng,
    )?;

    if outcome.final_elites.is_empty() {
        // Nothing replayed: no information over the prior.
        return Ok(*prior);
    }

    let elites: Vec<[f64; 2]> =
        outcome.final_elites.iter().map(|e| [e[0][0], e[0][1]]).collect();
    let k = elites.len() as f64;
    let mean = [
        elites.iter().map(|e| e[0]).sum::<f64>() / k,
        elites.iter().map(|e| e[1]).sum::<f64>() / k,
    ];
    let mut cxx = 0.0;
    let mut cxy = 0.0;
    let mut cyy = 0.0;
    if elites.len() > 1 {
        for e in &elites {
            let dx = e[0] - mean[0];
            let dy = e[1] - mean[1];
            cxx += dx * dx;
            cxy += dx * dy;
            cyy += dy * dy;
        }
        let denom = k - 1.0;
        cxx /= denom;
        cxy /= denom;
        cyy /= denom;
    }
    Ok(ComBelief { mean, covariance: [[cxx, cxy], [cxy, cyy]] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::cube_cloud;
    use crate::dynamics::PushAction;
    use crate::geometry::{CameraIntrinsics, Vec3};
    use crate::scene::{pepper_noise, render_mask, three_view_rig};
    use rand::Rng;

    fn test_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics { fx: 450.0, fy: 450.0, cx: 128.0, cy: 128.0, width: 256, height: 256 }
    }

    /// Render the cloud displaced by `pose` from the standard three-camera
    /// rig, as the observation step does.
    fn render_posed_views(positions: &[Vec3], pose: &PlanarPose) -> Vec<CameraView> {
        let moved = apply_planar_pose(positions, pose);
        let intr = test_intrinsics();
        three_view_rig(Vec3::new(0.0, 0.0, 0.025), 0.35, 0.45, 0.06)
            .into_iter()
            .map(|ext| {
                let mask = render_mask(&moved, &intr, &ext, 2.5).unwrap();
                CameraView { intrinsics: intr, extrinsics: ext, mask }
            })
            .collect()
    }

    fn reference_cloud() -> ParticleState {
        ParticleState::rigid_from_positions(cube_cloud(0.05, 400, 17), 0.5)
    }

    fn pose_cem(seed: u64) -> CemParams {
        CemParams { candidates: 64, iterations: 10, elites: 8, seed, ..CemParams::default() }
    }

    fn wide_prior() -> PoseBelief {
        PoseBelief::centered(PlanarPose::identity(), [0.03, 0.03, 0.3])
    }

    #[test]
    fn planted_pose_recovered_from_rerendered_views() {
        let reference = reference_cloud();
        let planted = PlanarPose { x: 0.05, y: -0.03, theta: 20f64.to_radians() };
        let views = render_posed_views(&reference.positions(), &planted);
        let posterior = estimate_pose(&reference, &views, &wide_prior(), &pose_cem(5)).unwrap();
        let pos_err = posterior.mean.position_error(&planted);
        let ang_err = posterior.mean.angle_error(&planted);
        assert!(pos_err < 0.01, "position error {pos_err} m");
        assert!(ang_err < 5f64.to_radians(), "angle error {} deg", ang_err.to_degrees());
    }

    #[test]
    fn identity_plant_recovers_identity_at_the_cost_floor() {
        let reference = reference_cloud();
        let views = render_posed_views(&reference.positions(), &PlanarPose::identity());
        let posterior = estimate_pose(&reference, &views, &wide_prior(), &pose_cem(11)).unwrap();
        assert!(posterior.mean.position_error(&PlanarPose::identity()) < 0.01);
        assert!(posterior.mean.angle_error(&PlanarPose::identity()) < 5f64.to_radians());
        // The spread floor always holds.
        for (s, f) in posterior.std.iter().zip(&POSE_STD_FLOOR) {
            assert!(s >= f);
        }
        // Converged cost sits within a whisker of the true pose's cost: both
        // are dominated by rasterization, not by residual misalignment.
        let prepared = prepare_views(&views, 1200, 11).unwrap();
        let at_truth = pose_candidate_cost(&reference, &prepared, &PlanarPose::identity()).unwrap();
        let at_mean = pose_candidate_cost(&reference, &prepared, &posterior.mean).unwrap();
        assert!(at_mean <= at_truth * 2.0 + 1e-9, "cost {at_mean} vs floor {at_truth}");
    }

    #[test]
    fn noisy_masks_still_recover_the_pose() {
        let reference = reference_cloud();
        let planted = PlanarPose { x: 0.04, y: 0.02, theta: -15f64.to_radians() };
        let clean = render_posed_views(&reference.positions(), &planted);
        let mut hits = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let mut views = clean.clone();
            for v in &mut views {
                pepper_noise(&mut v.mask, 0.05, &mut rng);
            }
            let posterior =
                estimate_pose(&reference, &views, &wide_prior(), &pose_cem(seed)).unwrap();
            if posterior.mean.position_error(&planted) < 0.02
                && posterior.mean.angle_error(&planted) < 8f64.to_radians()
            {
                hits += 1;
            }
        }
        assert!(hits >= 8, "only {hits}/10 noisy estimates were accurate");
    }

    #[test]
    fn planted_cost_minimum_dominates_far_perturbations() {
        let reference = reference_cloud();
        let planted = PlanarPose { x: 0.02, y: -0.01, theta: 0.3 };
        let views = render_posed_views(&reference.positions(), &planted);
        let prepared = prepare_views(&views, 1200, 3).unwrap();
        let at_plant = pose_candidate_cost(&reference, &prepared, &planted).unwrap();
        for dx in [-0.06f64, -0.03, 0.0, 0.03, 0.06] {
            for dy in [-0.06f64, -0.03, 0.0, 0.03, 0.06] {
                for dth in [-30f64, -15.0, 0.0, 15.0, 30.0] {
                    let far = (dx * dx + dy * dy).sqrt() >= 0.03 || dth.abs() >= 15.0;
                    if !far {
                        continue;
                    }
                    let p = PlanarPose {
                        x: planted.x + dx,
                        y: planted.y + dy,
                        theta: planted.theta + dth.to_radians(),
                    };
                    let c = pose_candidate_cost(&reference, &prepared, &p).unwrap();
                    assert!(
                        at_plant <= c,
                        "plant cost {at_plant} beaten at offset ({dx}, {dy}, {dth} deg): {c}"
                    );
                }
            }
        }
    }

    #[test]
    fn pose_cost_ignores_particle_order() {
        let reference = reference_cloud();
        let planted = PlanarPose { x: 0.03, y: 0.01, theta: 0.2 };
        let views = render_posed_views(&reference.positions(), &planted);
        let prepared = prepare_views(&views, 800, 7).unwrap();

        let mut shuffled = reference.positions();
        shuffled.reverse();
        shuffled.swap(3, 101);
        let relabeled = ParticleState::rigid_from_positions(shuffled, 0.5);

        let probe = PlanarPose { x: 0.035, y: 0.005, theta: 0.25 };
        let a = pose_candidate_cost(&reference, &prepared, &probe).unwrap();
        let b = pose_candidate_cost(&relabeled, &prepared, &probe).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    // --- mass-centre estimation -----------------------------------------

    /// Hammer-shaped cloud: a long thin handle along x with a wide block at
    /// the +x end. Returned with uniform template masses.
    fn hammer_template(n_handle: usize, n_head: usize, seed: u64) -> ParticleState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::with_capacity(n_handle + n_head);
        for _ in 0..n_handle {
            pts.push(Vec3::new(
                rng.gen_range(-0.10..0.04),
                rng.gen_range(-0.015..0.015),
                rng.gen_range(0.0..0.03),
            ));
        }
        for _ in 0..n_head {
            pts.push(Vec3::new(
                rng.gen_range(0.04..0.08),
                rng.gen_range(-0.04..0.04),
                rng.gen_range(0.0..0.04),
            ));
        }
        ParticleState::rigid_from_positions(pts, 0.5)
    }

    /// Where the hammer head's mass is planted in the tests.
    const PLANT: (f64, f64) = (0.06, 0.0);

    /// Three deep pushes from rest that probe the mass centre from different
    /// directions: an axial shove against the head face plus one poke from
    /// each side of the head. Each push on its own leaves a valley of mass
    /// placements it cannot tell apart (shallow pokes barely rotate a
    /// friction-laden body at all); these three were picked so their blind
    /// valleys only intersect at the true mass centre, and pushed deep enough
    /// (6-9 cm of travel) that a wrong hypothesis mispredicts the outcome by
    /// well over the replay noise floor.
    fn hammer_pushes() -> Vec<PushAction> {
        vec![
            PushAction { x0: 0.115, y0: 0.0, x1: 0.055, y1: 0.0 },
            PushAction { x0: 0.07, y0: -0.08, x1: 0.07, y1: 0.01 },
            PushAction { x0: 0.045, y0: 0.07, x1: 0.045, y1: -0.01 },
        ]
    }

    /// Execute `actions` on the true body, each from rest at identity, and
    /// log what actually happened.
    fn record_pushes(
        template: &ParticleState,
        com: (f64, f64),
        actions: &[PushAction],
        sim: &SimParams,
    ) -> Vec<PushRecord> {
        let model = make_rigid_body(template, Some((com.0, com.1, COM_CONCENTRATION))).unwrap();
        actions
            .iter()
            .map(|a| {
                let start = SimState::at_rest(&model);
                let (delta, _) = rollout_push(&model, &start, a, sim).unwrap();
                PushRecord {
                    action: a.clone(),
                    pose_before: PlanarPose::identity(),
                    pose_after_observed: delta,
                }
            })
            .collect()
    }

    fn com_cem(candidates: usize, iterations: usize, seed: u64) -> CemParams {
        CemParams { candidates, iterations, elites: 6, seed, ..CemParams::default() }
    }

    #[test]
    fn planted_hammer_com_recovered_from_three_pushes() {
        let template = hammer_template(100, 55, 21);
        let sim = SimParams::default();
        let records = record_pushes(&template, PLANT, &hammer_pushes(), &sim);
        // Know-nothing prior: centred on the uniform-mass guess (the cloud
        // centroid sits near the origin), wide enough to cover the footprint.
        let prior = ComBelief::isotropic([0.0, 0.0], 0.05);
        let cem = CemParams {
            candidates: 96,
            iterations: 8,
            elites: 3,
            min_std: 0.005,
            seed: 2,
            ..CemParams::default()
        };
        let posterior = estimate_com(&template, &records, &prior, &cem, &sim).unwrap();
        let err =
            ((posterior.mean[0] - PLANT.0).powi(2) + (posterior.mean[1] - PLANT.1).powi(2)).sqrt();
        assert!(err < 0.02, "mass centre missed by {err} m: {:?}", posterior.mean);
    }

    #[test]
    fn symmetric_cube_com_lands_near_center() {
        let template = ParticleState::rigid_from_positions(cube_cloud(0.05, 200, 33), 0.5);
        let sim = SimParams::default();
        // Straight-through pokes on two faces of a uniform cube.
        let actions = vec![
            PushAction { x0: -0.06, y0: 0.0, x1: -0.02, y1: 0.0 },
            PushAction { x0: 0.0, y0: -0.06, x1: 0.0, y1: -0.02 },
        ];
        let model = make_rigid_body(&template, None).unwrap();
        let records: Vec<PushRecord> = actions
            .iter()
            .map(|a| {
                let (delta, _) = rollout_push(&model, &SimState::at_rest(&model), a, &sim).unwrap();
                PushRecord {
                    action: a.clone(),
                    pose_before: PlanarPose::identity(),
                    pose_after_observed: delta,
                }
            })
            .collect();
        let prior = ComBelief::isotropic([0.0, 0.0], 0.04);
        let posterior =
            estimate_com(&template, &records, &prior, &com_cem(16, 3, 4), &sim).unwrap();
        let err = (posterior.mean[0].powi(2) + posterior.mean[1].powi(2)).sqrt();
        assert!(err < 0.02, "symmetric centre missed by {err} m");

        // The posterior spread is an honest sample covariance: symmetric and
        // positive semidefinite by construction.
        let c = posterior.covariance;
        assert_eq!(c[0][1], c[1][0]);
        assert!(c[0][0] >= 0.0 && c[1][1] >= 0.0);
        assert!(c[0][0] * c[1][1] - c[0][1] * c[1][0] >= -1e-18);
    }

    #[test]
    fn com_posterior_tightens_with_more_records() {
        let template = hammer_template(100, 55, 29);
        let sim = SimParams::default();
        let records = record_pushes(&template, PLANT, &hammer_pushes(), &sim);
        // Start from an already-informative prior so both arms converge and
        // the comparison is about how sharply the data pins the optimum: one
        // push leaves a valley of indistinguishable placements, three pushes
        // corner it.
        let prior = ComBelief::isotropic([0.05, 0.0], 0.03);
        let mut one = Vec::new();
        let mut three = Vec::new();
        for seed in 0..10u64 {
            let cem = com_cem(16, 4, 70 + seed);
            one.push(estimate_com(&template, &records[..1], &prior, &cem, &sim).unwrap().trace());
            three.push(estimate_com(&template, &records, &prior, &cem, &sim).unwrap().trace());
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            0.5 * (v[4] + v[5])
        };
        let m1 = median(&mut one);
        let m3 = median(&mut three);
        assert!(m3 <= m1, "three-push posterior wider than one-push: {m3} vs {m1}");
    }

    #[test]
    fn com_estimates_are_deterministic() {
        let template = hammer_template(80, 40, 9);
        let sim = SimParams::default();
        let records = record_pushes(&template, PLANT, &hammer_pushes()[..1], &sim);
        let prior = ComBelief::isotropic([0.0, 0.0], 0.04);
        let cem = com_cem(8, 2, 99);
        let a = estimate_com(&template, &records, &prior, &cem, &sim).unwrap();
        let b = estimate_com(&template, &records, &prior, &cem, &sim).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.covariance, b.covariance);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let template = ParticleState::rigid_from_positions(cube_cloud(0.05, 60, 1), 0.5);
        let sim = SimParams::default();
        let prior = ComBelief::isotropic([0.0, 0.0], 0.04);
        assert!(matches!(
            estimate_com(&template, &[], &prior, &com_cem(8, 2, 0), &sim),
            Err(EstimationError::BadInput(_))
        ));

        let lopsided = ComBelief { mean: [0.0, 0.0], covariance: [[1.0, 0.5], [0.2, 1.0]] };
        let rec = PushRecord {
            action: PushAction { x0: -0.06, y0: 0.0, x1: -0.02, y1: 0.0 },
            pose_before: PlanarPose::identity(),
            pose_after_observed: PlanarPose::identity(),
        };
        assert!(matches!(
            estimate_com(&template, &[rec], &lopsided, &com_cem(8, 2, 0), &sim),
            Err(EstimationError::BadInput(_))
        ));

        let reference = reference_cloud();
        let prior = wide_prior();
        assert!(matches!(
            estimate_pose(&reference, &[], &prior, &pose_cem(0)),
            Err(EstimationError::BadInput(_))
        ));
        let degenerate = PoseBelief::centered(PlanarPose::identity(), [0.0, 0.01, 0.01]);
        let views = render_posed_views(&reference.positions(), &PlanarPose::identity());
        assert!(matches!(
            estimate_pose(&reference, &views, &degenerate, &pose_cem(0)),
            Err(EstimationError::BadInput(_))
        ));
    }
}
