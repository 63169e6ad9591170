//! Cross-entropy planning over simulator rollouts.
//!
//! One optimizer serves every decision in the pipeline: sample candidate
//! actions from a diagonal Gaussian, roll each out through the simulator,
//! keep the best few, and refit the Gaussian to them — mean, and spread as
//! the elites' mean absolute deviation. The grasp and push adapters wrap
//! the scripted rollouts with their reward functions and seed the search
//! with geometry-aware priors (hover over a particle for grasps, stand off
//! the silhouette edge facing away from the goal for pushes).
//!
//! Candidates within an iteration are evaluated in parallel; elite
//! selection sorts by (reward, candidate index) so results do not depend on
//! thread count.

use crate::dynamics::{
    grasp_reward, gripper_pads, rollout_grasp, rollout_push, GraspAction, PushAction,
    RigidBodyModel, SimParams, SimState,
};
use crate::geometry::{ParticleState, PlanarPose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no collision-free grasp prior found in {0} attempts")]
    NoCollisionFreePrior(u32),
    #[error("bad planner parameters: {0}")]
    BadParams(String),
}

/// Search sizes for the cross-entropy loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CemParams {
    /// Actions per candidate sequence. Every adapter here replans after each
    /// executed action, so they all use 1.
    pub horizon: usize,
    pub iterations: usize,
    pub candidates: usize,
    /// How many top candidates refit the distribution each iteration.
    pub elites: usize,
    /// Per-dimension prior stds for the adapters; empty lets each adapter
    /// pick its own scale.
    pub init_std: Vec<f64>,
    /// Floor applied elementwise to every refit std.
    pub min_std: f64,
    pub seed: u64,
}

impl Default for CemParams {
    fn default() -> Self {
        Self {
            horizon: 1,
            iterations: 5,
            candidates: 64,
            elites: 8,
            init_std: Vec::new(),
            min_std: 1e-3,
            seed: 0,
        }
    }
}

impl CemParams {
    fn validate(&self) -> Result<(), PlannerError> {
        if self.horizon < 1 {
            return Err(PlannerError::BadParams("horizon must be at least 1".into()));
        }
        if self.iterations < 1 {
            return Err(PlannerError::BadParams("iterations must be at least 1".into()));
        }
        if self.elites < 1 || self.elites > self.candidates {
            return Err(PlannerError::BadParams(format!(
                "elites must lie in 1..=candidates, got {} of {}",
                self.elites, self.candidates
            )));
        }
        if !(self.min_std >= 0.0) {
            return Err(PlannerError::BadParams("min_std must be non-negative".into()));
        }
        Ok(())
    }

    /// The adapter prior std: `init_std` when set, else the adapter default.
    fn init_std_or(&self, fallback: &[f64]) -> Result<Vec<f64>, PlannerError> {
        if self.init_std.is_empty() {
            return Ok(fallback.to_vec());
        }
        if self.init_std.len() != fallback.len() {
            return Err(PlannerError::BadParams(format!(
                "init_std has {} entries, action space has {}",
                self.init_std.len(),
                fallback.len()
            )));
        }
        if self.init_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(PlannerError::BadParams("init_std entries must be finite and >= 0".into()));
        }
        Ok(self.init_std.clone())
    }
}

/// Diagonal Gaussian over length-`horizon` action sequences; rows are
/// horizon steps, columns action dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

impl ActionDistribution {
    /// One-step distribution (the common case here).
    pub fn single(mean: Vec<f64>, std: Vec<f64>) -> Self {
        Self { mean: vec![mean], std: vec![std] }
    }
}

/// One refit of the search distribution, kept for reports.
#[derive(Debug, Clone, Serialize)]
pub struct CemIteration {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub elite_mean_reward: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CemOutcome {
    /// First action of the final distribution mean — the planned action.
    pub action: Vec<f64>,
    pub distribution: ActionDistribution,
    /// Highest reward any candidate achieved, across all iterations.
    pub best_reward: f64,
    pub iterations: Vec<CemIteration>,
    /// The elite action sequences behind the last distribution refit — the
    /// sample set a posterior covariance can be read from. Empty when no
    /// iteration produced an evaluable elite.
    pub final_elites: Vec<Vec<Vec<f64>>>,
}

/// Cross-entropy search over a bounded action box.
///
/// Per iteration: draw `candidates` sequences from the current diagonal
/// Gaussian (clipped to `bounds`), evaluate them, pick the `elites` best,
/// and refit mean and std to the elite set, flooring the std at `min_std`.
/// Returns the final mean's first action. `NaN` rewards count as negative
/// infinity; an iteration whose elites are all unevaluable leaves the
/// distribution untouched, so a fully degenerate `evaluate` hands back the
/// prior mean.
pub fn ce_mpc<F>(
    evaluate: F,
    prior: &ActionDistribution,
    params: &CemParams,
    bounds: &[(f64, f64)],
    rng: &mut ChaCha8Rng,
) -> Result<CemOutcome, PlannerError>
where
    F: Fn(&[Vec<f64>]) -> f64 + Sync,
{
    params.validate()?;
    let h = params.horizon;
    let d = bounds.len();
    if d == 0 {
        return Err(PlannerError::BadParams("empty action space".into()));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(PlannerError::BadParams(format!("bad bound [{lo}, {hi}]")));
        }
    }
    let rows_ok = |m: &Vec<Vec<f64>>| m.len() == h && m.iter().all(|r| r.len() == d);
    if !rows_ok(&prior.mean) || !rows_ok(&prior.std) {
        return Err(PlannerError::BadParams(format!(
            "prior shape must be {h}x{d} to match horizon and bounds"
        )));
    }

    let mut mean = prior.mean.clone();
    let mut std: Vec<Vec<f64>> = prior
        .std
        .iter()
        .map(|row| row.iter().map(|s| s.max(params.min_std)).collect())
        .collect();
    let mut best_reward = f64::NEG_INFINITY;
    let mut iterations = Vec::with_capacity(params.iterations);
    let mut final_elites: Vec<Vec<Vec<f64>>> = Vec::new();

    for _ in 0..params.iterations {
        // Fixed draw order (candidate, step, dimension) keeps runs
        // bit-identical for a given rng regardless of what evaluate does.
        let candidates: Vec<Vec<Vec<f64>>> = (0..params.candidates)
            .map(|_| {
                (0..h)
                    .map(|hh| {
                        (0..d)
                            .map(|k| {
                                let n: f64 = rng.sample(StandardNormal);
                                let (lo, hi) = bounds[k];
                                (mean[hh][k] + std[hh][k] * n).clamp(lo, hi)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let rewards: Vec<f64> = candidates
            .par_iter()
            .map(|c| {
                let r = evaluate(c);
                if r.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    r
                }
            })
            .collect();

        let mut order: Vec<usize> = (0..params.candidates).collect();
        order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]).then(a.cmp(&b)));
        best_reward = best_reward.max(rewards[order[0]]);
        let elite = &order[..params.elites];
        if rewards[elite[0]] == f64::NEG_INFINITY {
            iterations.push(CemIteration {
                mean: mean.clone(),
                std: std.clone(),
                elite_mean_reward: f64::NEG_INFINITY,
            });
            continue;
        }

        let ke = params.elites as f64;
        for hh in 0..h {
            for k in 0..d {
                let u = elite.iter().map(|&j| candidates[j][hh][k]).sum::<f64>() / ke;
                let spread: f64 = elite.iter().map(|&j| (candidates[j][hh][k] - u).abs()).sum();
                // Mean absolute deviation over K − 1; a single elite pins
                // the std to the floor.
                let s = if params.elites > 1 { spread / (ke - 1.0) } else { 0.0 };
                mean[hh][k] = u;
                std[hh][k] = s.max(params.min_std);
            }
        }
        let elite_mean_reward = elite.iter().map(|&j| rewards[j]).sum::<f64>() / ke;
        iterations.push(CemIteration {
            mean: mean.clone(),
            std: std.clone(),
            elite_mean_reward,
        });
        final_elites = elite.iter().map(|&j| candidates[j].clone()).collect();
    }

    Ok(CemOutcome {
        action: mean[0].clone(),
        distribution: ActionDistribution { mean, std },
        best_reward,
        iterations,
        final_elites,
    })
}

/// Attempts before giving up on a collision-free grasp prior.
const PRIOR_TRIES: u32 = 100;

/// Default grasp prior stds for (x, y, z, theta). The planar spread is
/// roughly the width of the pocket where a parallel-jaw pinch actually
/// holds, so each iteration lands enough candidates inside it to fill the
/// elite set; the closing-direction spread covers the whole half-circle so
/// a one-draw prior angle cannot strand the search far from the graspable
/// directions.
const GRASP_STD: [f64; 4] = [0.012, 0.012, 0.01, 1.0];

/// Grasp search prior: hover over a uniformly chosen particle, wrist height
/// uniform within one finger length above it, closing direction uniform.
/// Resamples until the fully open gripper at the mean pose clears both the
/// ground and every particle.
pub fn sample_grasp_prior(
    state: &ParticleState,
    cem: &CemParams,
    sim: &SimParams,
    rng: &mut ChaCha8Rng,
) -> Result<ActionDistribution, PlannerError> {
    if state.particles.is_empty() {
        return Err(PlannerError::BadParams("cannot build a grasp prior for an empty state".into()));
    }
    let gp = &sim.gripper;
    let std = cem.init_std_or(&GRASP_STD)?;
    for _ in 0..PRIOR_TRIES {
        let p = state.particles[rng.gen_range(0..state.particles.len())].position;
        let z = rng.gen_range(p.z..p.z + gp.finger_len);
        let theta = rng.gen_range(0.0..PI);
        if grasp_pose_collides(state, p.x, p.y, z, theta, sim) {
            continue;
        }
        return Ok(ActionDistribution::single(vec![p.x, p.y, z, theta], std));
    }
    Err(PlannerError::NoCollisionFreePrior(PRIOR_TRIES))
}

/// Grasp prior anchored near a planar point: like [`sample_grasp_prior`]
/// but drawing the hover particle from the pool nearest `focus` — used when
/// something is known about where the mass sits, so the search starts over
/// the spot a balanced grip wants to straddle.
fn grasp_prior_near(
    state: &ParticleState,
    focus: [f64; 2],
    cem: &CemParams,
    sim: &SimParams,
    rng: &mut ChaCha8Rng,
) -> Result<ActionDistribution, PlannerError> {
    if state.particles.is_empty() {
        return Err(PlannerError::BadParams("cannot build a grasp prior for an empty state".into()));
    }
    let gp = &sim.gripper;
    let std = cem.init_std_or(&GRASP_STD)?;
    let mut order: Vec<usize> = (0..state.particles.len()).collect();
    order.sort_by(|&a, &b| {
        let d = |i: usize| {
            let p = state.particles[i].position;
            (p.x - focus[0]).powi(2) + (p.y - focus[1]).powi(2)
        };
        d(a).total_cmp(&d(b))
    });
    let pool = &order[..order.len().min(16)];
    for _ in 0..PRIOR_TRIES {
        let p = state.particles[pool[rng.gen_range(0..pool.len())]].position;
        let z = rng.gen_range(p.z..p.z + gp.finger_len);
        let theta = rng.gen_range(0.0..PI);
        if grasp_pose_collides(state, p.x, p.y, z, theta, sim) {
            continue;
        }
        return Ok(ActionDistribution::single(vec![p.x, p.y, z, theta], std));
    }
    Err(PlannerError::NoCollisionFreePrior(PRIOR_TRIES))
}

/// Would the open gripper at this wrist pose start inside the ground or the
/// cloud?
fn grasp_pose_collides(
    state: &ParticleState,
    x: f64,
    y: f64,
    z: f64,
    theta: f64,
    sim: &SimParams,
) -> bool {
    let gp = &sim.gripper;
    if z - gp.finger_len < sim.ground_height + gp.ground_clearance {
        return true;
    }
    let pads = gripper_pads(&Vec3::new(x, y, z), theta, gp.max_open, gp);
    state
        .particles
        .iter()
        .any(|p| pads.iter().any(|pad| pad.penetration(&p.position).is_some()))
}

/// Reward handed to candidates whose rollout refuses to simulate (invalid
/// pose, divergence); far below any genuine failure so they never make the
/// elite set while evaluable candidates exist.
const UNSIMULATABLE: f64 = -1e9;

/// Reward for a grasp candidate the simulator refuses outright (fingers
/// sweeping through the body, wrist below ground): score it as a failure
/// that moved nothing. Most such candidates are *touching* the object, so
/// ranking them level with clean misses keeps the search mean anchored to
/// the body instead of repelled from it.
const INFEASIBLE_GRASP: f64 = -1e6;

/// Plan a single grasp with a fresh cross-entropy search seeded from
/// `cem.seed`. Candidate rollouts that fail to simulate score a sentinel
/// instead of aborting the search.
pub fn plan_grasp(
    model: &RigidBodyModel,
    start: &SimState,
    cem: &CemParams,
    sim: &SimParams,
) -> Result<(GraspAction, CemOutcome), PlannerError> {
    plan_grasp_with_prior(model, start, None, cem, sim)
}

/// [`plan_grasp`] with an optional planar focus point for the search prior:
/// `Some([x, y])` starts the search hovering near that point (say, an
/// estimated mass centre) instead of a uniformly chosen particle.
pub fn plan_grasp_with_prior(
    model: &RigidBodyModel,
    start: &SimState,
    focus: Option<[f64; 2]>,
    cem: &CemParams,
    sim: &SimParams,
) -> Result<(GraspAction, CemOutcome), PlannerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cem.seed);
    let positions = model.world_positions(start);
    let cloud = ParticleState::rigid_from_positions(positions.clone(), model.friction);
    let prior = match focus {
        Some(f) => grasp_prior_near(&cloud, f, cem, sim, &mut rng)?,
        None => sample_grasp_prior(&cloud, cem, sim, &mut rng)?,
    };

    let (lo, hi) = cloud_aabb(&positions);
    let gp = &sim.gripper;
    let z_lo = sim.ground_height + gp.finger_len + gp.ground_clearance;
    let bounds = vec![
        (lo.x - 0.02, hi.x + 0.02),
        (lo.y - 0.02, hi.y + 0.02),
        (z_lo, (hi.z + gp.finger_len).max(z_lo)),
        (0.0, PI),
    ];

    let outcome = ce_mpc(
        |a: &[Vec<f64>]| {
            let action = GraspAction { x: a[0][0], y: a[0][1], z: a[0][2], theta: a[0][3] };
            match rollout_grasp(model, start, &action, sim) {
                Ok(o) => grasp_reward(&o),
                Err(_) => INFEASIBLE_GRASP,
            }
        },
        &prior,
        cem,
        &bounds,
        &mut rng,
    )?;
    let a = &outcome.action;
    Ok((GraspAction { x: a[0], y: a[1], z: a[2], theta: a[3] }, outcome))
}

/// Where a push episode is trying to put the object: a planar displacement
/// target plus the tolerances that count as "there".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PushGoal {
    pub target: PlanarPose,
    pub pos_tol: f64,
    pub ang_tol: f64,
}

impl Default for PushGoal {
    fn default() -> Self {
        Self { target: PlanarPose::identity(), pos_tol: 0.05, ang_tol: 15f64.to_radians() }
    }
}

/// Normalized distance to the goal: 0 when the predicted displacement hits
/// the target exactly, −1 per tolerance-width of error, always ≤ 0.
pub fn push_reward(predicted: &PlanarPose, goal: &PushGoal) -> f64 {
    -(predicted.position_error(&goal.target) / goal.pos_tol
        + predicted.angle_error(&goal.target) / goal.ang_tol)
}

/// Longest pusher stroke a single action may command.
pub const MAX_PUSH_STROKE: f64 = 0.06;

/// Gap between the prior's pusher start and the silhouette edge.
const PUSH_STANDOFF: f64 = 0.012;

/// Truncate a candidate's stroke at `MAX_PUSH_STROKE`, keeping its start
/// and direction. Planning and execution both pass through this, so
/// rewards always describe the action actually run.
pub fn clip_push_stroke(a: [f64; 4]) -> PushAction {
    let (dx, dy) = (a[2] - a[0], a[3] - a[1]);
    let len = (dx * dx + dy * dy).sqrt();
    if len <= MAX_PUSH_STROKE || len == 0.0 {
        return PushAction { x0: a[0], y0: a[1], x1: a[2], y1: a[3] };
    }
    let s = MAX_PUSH_STROKE / len;
    PushAction { x0: a[0], y0: a[1], x1: a[0] + dx * s, y1: a[1] + dy * s }
}

/// Plan one push toward `goal` (a displacement of the object from where it
/// stands now). The prior stands the pusher off the silhouette edge facing
/// away from the goal direction and strokes through toward it; for
/// rotation-dominant goals it strokes tangentially past the side instead.
pub fn plan_push(
    model: &RigidBodyModel,
    start: &SimState,
    goal: &PushGoal,
    cem: &CemParams,
    sim: &SimParams,
) -> Result<(PushAction, CemOutcome), PlannerError> {
    if !(goal.pos_tol > 0.0 && goal.ang_tol > 0.0) {
        return Err(PlannerError::BadParams("push goal tolerances must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cem.seed);
    let positions = model.world_positions(start);
    let (lo, hi) = cloud_aabb(&positions);
    let cx = positions.iter().map(|p| p.x).sum::<f64>() / positions.len() as f64;
    let cy = positions.iter().map(|p| p.y).sum::<f64>() / positions.len() as f64;

    let gn = (goal.target.x * goal.target.x + goal.target.y * goal.target.y).sqrt();
    let (dir, travel) = if gn >= 5e-3 {
        ((goal.target.x / gn, goal.target.y / gn), gn)
    } else {
        // Pure rotation: push tangentially at the +x side of the centroid
        // (reaching upward for a counter-clockwise goal), lever arm = the
        // silhouette half-extent.
        let arm = 0.5 * (hi.x - lo.x).max(1e-3);
        ((0.0, goal.target.theta.signum()), arm * goal.target.theta.abs())
    };
    // Boundary point most opposite the push direction, then stand off it.
    let edge = positions
        .iter()
        .map(|p| (p.x - cx) * dir.0 + (p.y - cy) * dir.1)
        .fold(f64::INFINITY, f64::min);
    let gap = sim.pusher.radius + PUSH_STANDOFF;
    let sx = cx + dir.0 * (edge - gap);
    let sy = cy + dir.1 * (edge - gap);
    let stroke = (gap + travel).min(MAX_PUSH_STROKE);
    let mean = vec![sx, sy, sx + dir.0 * stroke, sy + dir.1 * stroke];
    let std = cem.init_std_or(&[0.02; 4])?;
    let prior = ActionDistribution::single(mean, std);

    let xr = (lo.x - 0.15, hi.x + 0.15);
    let yr = (lo.y - 0.15, hi.y + 0.15);
    let bounds = vec![xr, yr, xr, yr];

    let outcome = ce_mpc(
        |a: &[Vec<f64>]| {
            let action = clip_push_stroke([a[0][0], a[0][1], a[0][2], a[0][3]]);
            match rollout_push(model, start, &action, sim) {
                Ok((delta, _)) => push_reward(&delta, goal),
                Err(_) => UNSIMULATABLE,
            }
        },
        &prior,
        cem,
        &bounds,
        &mut rng,
    )?;
    let a = &outcome.action;
    Ok((clip_push_stroke([a[0], a[1], a[2], a[3]]), outcome))
}

fn cloud_aabb(positions: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::from_element(f64::INFINITY);
    let mut hi = Vec3::from_element(f64::NEG_INFINITY);
    for p in positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::{cube_body, cube_cloud};

    fn quad_prior() -> ActionDistribution {
        ActionDistribution::single(vec![0.0, 0.0], vec![0.5, 0.5])
    }

    fn quad_bounds() -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0), (-1.0, 1.0)]
    }

    #[test]
    fn quadratic_optimum_found_and_elite_mean_improves() {
        let target = [0.3, -0.2];
        let params = CemParams { iterations: 20, candidates: 64, ..CemParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = ce_mpc(
            |a: &[Vec<f64>]| {
                -((a[0][0] - target[0]).powi(2) + (a[0][1] - target[1]).powi(2))
            },
            &quad_prior(),
            &params,
            &quad_bounds(),
            &mut rng,
        )
        .unwrap();
        let err = ((out.action[0] - target[0]).powi(2) + (out.action[1] - target[1]).powi(2)).sqrt();
        assert!(err < 1e-2, "optimum missed by {err}");
        let first = out.iterations.first().unwrap().elite_mean_reward;
        let last = out.iterations.last().unwrap().elite_mean_reward;
        assert!(last >= first, "elite mean reward degraded: {first} -> {last}");
        assert!(out.best_reward > -1e-4);
    }

    #[test]
    fn all_elites_means_full_sample_mean() {
        // With elites == candidates the refit mean is just the sample mean,
        // which we reproduce by replaying the documented draw order.
        let params = CemParams {
            iterations: 1,
            candidates: 16,
            elites: 16,
            min_std: 1e-6,
            ..CemParams::default()
        };
        let prior = quad_prior();
        let bounds = quad_bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = ce_mpc(|_a: &[Vec<f64>]| 1.0, &prior, &params, &bounds, &mut rng).unwrap();

        let mut replay = ChaCha8Rng::seed_from_u64(11);
        let mut sums = [0.0f64; 2];
        for _ in 0..16 {
            for (k, sum) in sums.iter_mut().enumerate() {
                let n: f64 = replay.sample(StandardNormal);
                let (lo, hi) = bounds[k];
                *sum += (prior.mean[0][k] + prior.std[0][k] * n).clamp(lo, hi);
            }
        }
        for k in 0..2 {
            assert!((out.action[k] - sums[k] / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let params = CemParams { iterations: 6, ..CemParams::default() };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            ce_mpc(
                |a: &[Vec<f64>]| -(a[0][0] - 0.1).abs() - (a[0][1] + 0.4).abs(),
                &quad_prior(),
                &params,
                &quad_bounds(),
                &mut rng,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.action, b.action);
        assert_eq!(a.best_reward, b.best_reward);
        assert_eq!(a.distribution.std, b.distribution.std);
    }

    #[test]
    fn results_stay_inside_bounds() {
        // An evaluate that rewards leaving the box cannot drag the result
        // outside it: candidates are clipped, and elite means of clipped
        // samples stay in the (convex) box.
        let params = CemParams { iterations: 8, ..CemParams::default() };
        let bounds = vec![(-0.2, 0.3), (0.1, 0.4)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = ce_mpc(
            |a: &[Vec<f64>]| a[0][0] + a[0][1] * 10.0,
            &ActionDistribution::single(vec![0.0, 0.2], vec![1.0, 1.0]),
            &params,
            &bounds,
            &mut rng,
        )
        .unwrap();
        for it in &out.iterations {
            for k in 0..2 {
                assert!(it.mean[0][k] >= bounds[k].0 - 1e-12);
                assert!(it.mean[0][k] <= bounds[k].1 + 1e-12);
                assert!(it.std[0][k] >= params.min_std);
            }
        }
        assert!((out.action[0] - 0.3).abs() < 0.05);
        assert!((out.action[1] - 0.4).abs() < 0.05);
    }

    #[test]
    fn nan_rewards_are_treated_as_worst() {
        let params = CemParams { iterations: 10, ..CemParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = ce_mpc(
            |a: &[Vec<f64>]| {
                if a[0][0] > 0.0 {
                    f64::NAN
                } else {
                    -(a[0][0] + 0.5).powi(2) - a[0][1].powi(2)
                }
            },
            &quad_prior(),
            &params,
            &quad_bounds(),
            &mut rng,
        )
        .unwrap();
        assert!(out.action[0] <= 0.0);
        assert!((out.action[0] + 0.5).abs() < 0.05);
        assert!(out.best_reward.is_finite());
    }

    #[test]
    fn degenerate_evaluate_returns_the_prior_mean() {
        let params = CemParams { iterations: 3, ..CemParams::default() };
        let prior = ActionDistribution::single(vec![0.12, -0.34], vec![0.2, 0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out =
            ce_mpc(|_a: &[Vec<f64>]| f64::NAN, &prior, &params, &quad_bounds(), &mut rng).unwrap();
        assert_eq!(out.action, prior.mean[0]);
        assert_eq!(out.best_reward, f64::NEG_INFINITY);
        assert!(out.iterations.iter().all(|it| it.elite_mean_reward == f64::NEG_INFINITY));
    }

    #[test]
    fn single_elite_runs_with_floored_std() {
        let params =
            CemParams { iterations: 4, candidates: 8, elites: 1, ..CemParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = ce_mpc(
            |a: &[Vec<f64>]| -a[0][0].abs() - a[0][1].abs(),
            &quad_prior(),
            &params,
            &quad_bounds(),
            &mut rng,
        )
        .unwrap();
        for row in &out.distribution.std {
            assert!(row.iter().all(|&s| s == params.min_std));
        }
    }

    #[test]
    fn bad_params_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = CemParams { elites: 0, ..CemParams::default() };
        assert!(matches!(
            ce_mpc(|_: &[Vec<f64>]| 0.0, &quad_prior(), &bad, &quad_bounds(), &mut rng),
            Err(PlannerError::BadParams(_))
        ));
        let wide = CemParams { elites: 65, ..CemParams::default() };
        assert!(matches!(
            ce_mpc(|_: &[Vec<f64>]| 0.0, &quad_prior(), &wide, &quad_bounds(), &mut rng),
            Err(PlannerError::BadParams(_))
        ));
        let shape = CemParams::default();
        assert!(matches!(
            ce_mpc(
                |_: &[Vec<f64>]| 0.0,
                &ActionDistribution::single(vec![0.0], vec![0.1]),
                &shape,
                &quad_bounds(),
                &mut rng
            ),
            Err(PlannerError::BadParams(_))
        ));
    }

    #[test]
    fn grasp_prior_hovers_over_a_particle() {
        let sim = SimParams::default();
        let cem = CemParams::default();
        let one = ParticleState::rigid_from_positions(vec![Vec3::new(0.1, 0.2, 0.05)], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prior = sample_grasp_prior(&one, &cem, &sim, &mut rng).unwrap();
        assert_eq!(prior.mean[0][0], 0.1);
        assert_eq!(prior.mean[0][1], 0.2);
        assert!(prior.mean[0][2] >= 0.05 && prior.mean[0][2] < 0.05 + sim.gripper.finger_len);
        assert!(prior.mean[0][3] >= 0.0 && prior.mean[0][3] < PI);
    }

    #[test]
    fn grasp_prior_means_stay_near_the_cloud() {
        let sim = SimParams::default();
        let cem = CemParams::default();
        let cloud = ParticleState::rigid_from_positions(cube_cloud(0.04, 200, 4), 0.5);
        let fl = sim.gripper.finger_len;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prior = sample_grasp_prior(&cloud, &cem, &sim, &mut rng).unwrap();
            let m = &prior.mean[0];
            assert!(m[0].abs() <= 0.02 + 1e-12 && m[1].abs() <= 0.02 + 1e-12);
            assert!(m[2] >= 0.0 && m[2] <= 0.04 + fl);
        }
    }

    #[test]
    fn buried_cloud_has_no_collision_free_prior() {
        let sim = SimParams::default();
        let cem = CemParams::default();
        let below: Vec<Vec3> =
            cube_cloud(0.04, 50, 8).into_iter().map(|p| p - Vec3::new(0.0, 0.0, 0.2)).collect();
        let cloud = ParticleState::rigid_from_positions(below, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_grasp_prior(&cloud, &cem, &sim, &mut rng),
            Err(PlannerError::NoCollisionFreePrior(_))
        ));
    }

    #[test]
    fn planned_grasps_on_a_cube_mostly_verify() {
        // The returned action is the final elite mean, so a seed can land on
        // a blend of decent grasps that itself slips; demand near-universal
        // success across seeds rather than perfection on each. The slimmer
        // elite set (6 of 64) keeps the handful of genuinely holding grasps
        // from being averaged with near-miss failures.
        let model = cube_body(0.04, 300, 31, 0.5);
        let sim = SimParams::default();
        let start = SimState::at_rest(&model);
        let mut wins = 0;
        for seed in 0..10 {
            let cem =
                CemParams { elites: 6, seed: 1000 + seed, ..CemParams::default() };
            let (action, outcome) = plan_grasp(&model, &start, &cem, &sim).unwrap();
            assert!(outcome.best_reward > -1e6, "seed {seed}: no successful grasp found");
            if rollout_grasp(&model, &start, &action, &sim).map(|o| o.success).unwrap_or(false) {
                wins += 1;
            }
        }
        assert!(wins >= 9, "only {wins}/10 planned grasps held in verification");
    }

    #[test]
    fn bar_grasps_close_across_the_minor_axis() {
        // An elongated bar admits antipodal grasps only across its short
        // side, so planned closing directions should line up with the minor
        // axis (theta near pi/2 for a bar long in x).
        let mut hits = 0;
        for seed in 0..10 {
            let positions: Vec<Vec3> = cube_cloud(1.0, 240, 100 + seed)
                .into_iter()
                .map(|p| Vec3::new(p.x * 0.12, p.y * 0.03, p.z * 0.03))
                .collect();
            let model = RigidBodyModel::from_positions_masses(
                positions.clone(),
                vec![1.0 / positions.len() as f64; positions.len()],
                0.5,
            )
            .unwrap();
            let sim = SimParams::default();
            let cem = CemParams { seed: 900 + seed, ..CemParams::default() };
            let (action, _) = plan_grasp(&model, &SimState::at_rest(&model), &cem, &sim).unwrap();
            // theta is clamped to [0, pi]; the minor axis sits at pi/2.
            let off = (action.theta - PI / 2.0).abs();
            if off <= 20f64.to_radians() {
                hits += 1;
            }
        }
        assert!(hits >= 8, "only {hits}/10 grasps aligned with the minor axis");
    }

    #[test]
    fn planned_grasp_translates_with_the_scene() {
        let shift = Vec3::new(0.125, -0.0625, 0.0);
        let base = cube_cloud(0.04, 240, 55);
        let moved: Vec<Vec3> = base.iter().map(|p| p + shift).collect();
        let mk = |pts: Vec<Vec3>| {
            RigidBodyModel::from_positions_masses(
                pts.clone(),
                vec![1.0 / pts.len() as f64; pts.len()],
                0.5,
            )
            .unwrap()
        };
        let sim = SimParams::default();
        let cem = CemParams { candidates: 12, iterations: 2, elites: 3, seed: 77, ..CemParams::default() };
        let m0 = mk(base);
        let m1 = mk(moved);
        let (a0, _) = plan_grasp(&m0, &SimState::at_rest(&m0), &cem, &sim).unwrap();
        let (a1, _) = plan_grasp(&m1, &SimState::at_rest(&m1), &cem, &sim).unwrap();
        assert!((a1.x - (a0.x + shift.x)).abs() < 1e-9, "x moved by {}", a1.x - a0.x);
        assert!((a1.y - (a0.y + shift.y)).abs() < 1e-9);
        assert!((a1.z - a0.z).abs() < 1e-9);
        assert!((a1.theta - a0.theta).abs() < 1e-9);
    }

    #[test]
    fn push_reward_hand_cases() {
        let goal = PushGoal::default();
        assert_eq!(push_reward(&PlanarPose::identity(), &goal), 0.0);
        let off = PlanarPose { x: 0.05, y: 0.0, theta: 0.0 };
        assert!((push_reward(&off, &goal) + 1.0).abs() < 1e-12);
        let both = PlanarPose { x: 0.10, y: 0.0, theta: 30f64.to_radians() };
        assert!((push_reward(&both, &goal) + 4.0).abs() < 1e-9);
        let wrapped = PlanarPose { x: 0.0, y: 0.0, theta: 2.0 * PI };
        assert!(push_reward(&wrapped, &goal).abs() < 1e-9);
    }

    #[test]
    fn push_rewards_are_never_positive() {
        let goal = PushGoal {
            target: PlanarPose { x: 0.02, y: -0.1, theta: 0.7 },
            ..PushGoal::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let p = PlanarPose {
                x: rng.gen_range(-0.3..0.3),
                y: rng.gen_range(-0.3..0.3),
                theta: rng.gen_range(-PI..PI),
            };
            let r = push_reward(&p, &goal);
            assert!(r <= 0.0);
            if r == 0.0 {
                assert_eq!((p.x, p.y, p.theta), (0.02, -0.1, 0.7));
            }
        }
    }

    #[test]
    fn push_prior_stands_off_the_far_side() {
        // Nearly-zero stds collapse the plan onto the prior mean, exposing
        // its geometry: start beyond the -x face, stroking toward +x, never
        // longer than the cap.
        let model = cube_body(0.04, 200, 61, 0.5);
        let sim = SimParams::default();
        let cem = CemParams {
            candidates: 4,
            iterations: 1,
            elites: 2,
            init_std: vec![1e-9; 4],
            min_std: 1e-12,
            seed: 3,
            ..CemParams::default()
        };
        let goal = PushGoal {
            target: PlanarPose { x: 0.15, y: 0.0, theta: 0.0 },
            ..PushGoal::default()
        };
        let (action, _) = plan_push(&model, &SimState::at_rest(&model), &goal, &cem, &sim).unwrap();
        assert!(action.x0 < -0.02, "start {} not beyond the far face", action.x0);
        assert!(action.x1 > action.x0);
        let stroke = ((action.x1 - action.x0).powi(2) + (action.y1 - action.y0).powi(2)).sqrt();
        assert!(stroke <= MAX_PUSH_STROKE + 1e-12);
    }

    #[test]
    fn planned_push_closes_a_big_fraction_of_the_gap() {
        let model = cube_body(0.04, 300, 62, 0.5);
        let sim = SimParams::default();
        let goal = PushGoal {
            target: PlanarPose { x: 0.15, y: 0.0, theta: 0.0 },
            ..PushGoal::default()
        };
        let cem = CemParams { candidates: 48, iterations: 5, elites: 6, seed: 8, ..CemParams::default() };
        let start = SimState::at_rest(&model);
        let before = push_reward(&PlanarPose::identity(), &goal);
        let (action, _) = plan_push(&model, &start, &goal, &cem, &sim).unwrap();
        let (delta, _) = rollout_push(&model, &start, &action, &sim).unwrap();
        let after = push_reward(&delta, &goal);
        assert!(
            after.abs() <= 0.7 * before.abs(),
            "push only improved reward {before} -> {after}"
        );
    }

    #[test]
    fn at_goal_push_plans_a_near_noop() {
        let model = cube_body(0.04, 250, 63, 0.5);
        let sim = SimParams::default();
        let goal = PushGoal::default();
        let cem = CemParams { candidates: 16, iterations: 2, elites: 4, seed: 12, ..CemParams::default() };
        let start = SimState::at_rest(&model);
        let (action, outcome) = plan_push(&model, &start, &goal, &cem, &sim).unwrap();
        assert!(outcome.best_reward >= -0.5);
        if let Ok((delta, _)) = rollout_push(&model, &start, &action, &sim) {
            assert!(push_reward(&delta, &goal) >= -0.5);
        }
    }
}
