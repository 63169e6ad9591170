//! Scripted tool rollouts on top of `step`: the grasp phase machine
//! (approach, close, lift, settle) and the straight-line push, plus the
//! grasp reward.

use super::{
    gripper_pads, step, DynamicsError, RigidBodyModel, SimParams, SimState, ToolState,
};
use crate::geometry::{best_fit_rigid_transform, PlanarPose, Vec3};
use serde::{Deserialize, Serialize};

/// Top-down grasp: wrist position plus the anti-clockwise closing-direction
/// angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspAction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
}

/// Straight horizontal push from `(x0, y0)` to `(x1, y1)` at the pusher's
/// fixed height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushAction {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Debug, Clone)]
pub struct GraspOutcome {
    pub success: bool,
    /// Σ over particles of |x − x₀| + |y − y₀| between the rollout's first
    /// and last particle positions.
    pub displacement_xy: f64,
    pub height_gain: f64,
    pub final_state: SimState,
}

/// Grasp return: failures cost −10⁶, and every particle pays its planar
/// displacement either way, so among successes the steadiest grip wins.
pub fn grasp_reward(outcome: &GraspOutcome) -> f64 {
    let failure = if outcome.success { 0.0 } else { -1e6 };
    failure - outcome.displacement_xy
}

/// Hard cap on simulated rollout time, safety net against a phase that
/// never meets its exit condition.
const MAX_ROLLOUT_TIME: f64 = 10.0;

/// Run the full pick attempt. Phases: descend from `approach_height` above
/// the commanded wrist pose, close until both pads squeeze in by
/// `squeeze_limit` (or the gap bottoms out), lift by `lift_height`, settle.
/// Success is a mass-centre height gain above `success_height`.
pub fn rollout_grasp(
    model: &RigidBodyModel,
    start: &SimState,
    action: &GraspAction,
    params: &SimParams,
) -> Result<GraspOutcome, DynamicsError> {
    params.validate()?;
    let gp = &params.gripper;
    if ![action.x, action.y, action.z, action.theta].iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::InvalidAction("non-finite grasp action".into()));
    }
    if action.z - gp.finger_len < params.ground_height + gp.ground_clearance {
        return Err(DynamicsError::InvalidAction(format!(
            "wrist z = {} puts finger pads below ground clearance",
            action.z
        )));
    }

    let wrist0 = Vec3::new(action.x, action.y, action.z + gp.approach_height);
    let start_positions = model.world_positions(start);
    // Kinematic feasibility: the column each open finger sweeps while
    // descending must be clear of the body — commanding a pad through
    // standing material is not a grasp. The sweep is vertical, so it is
    // exactly the final pad box stretched upward by the approach height.
    let swept: Vec<_> = gripper_pads(
        &Vec3::new(action.x, action.y, action.z),
        action.theta,
        gp.max_open,
        gp,
    )
    .into_iter()
    .map(|mut pad| {
        pad.center.z += gp.approach_height / 2.0;
        pad.half.z += gp.approach_height / 2.0;
        pad
    })
    .collect();
    if start_positions.iter().any(|p| swept.iter().any(|pad| pad.contains(p))) {
        return Err(DynamicsError::InvalidAction("gripper descent sweeps through the body".into()));
    }

    let mut state = start.clone();
    state.tool = Some(ToolState::Gripper {
        wrist: wrist0,
        theta: action.theta,
        opening: gp.max_open,
        wrist_vel: Vec3::new(0.0, 0.0, -gp.descend_speed),
        opening_vel: 0.0,
    });

    let com_z0 = model.world_com(&state).z;
    let t0 = state.time;

    #[derive(PartialEq)]
    enum Phase {
        Descend,
        Close,
        Lift,
        Settle,
    }
    let mut phase = Phase::Descend;
    let mut settle_until = 0.0;

    while state.time - t0 < MAX_ROLLOUT_TIME {
        state = step(model, &state, params)?;

        // Decide the phase transition from an immutable snapshot, then
        // apply it to the tool.
        let gripped_or_bottomed = if let (
            Phase::Close,
            Some(ToolState::Gripper { wrist, theta, opening, .. }),
        ) = (&phase, &state.tool)
        {
            let pads = gripper_pads(wrist, *theta, *opening, gp);
            let mut squeeze = [0.0f64; 2];
            for p in &model.world_positions(&state) {
                for (k, pad) in pads.iter().enumerate() {
                    if let Some((_, depth)) = pad.penetration(p) {
                        squeeze[k] = squeeze[k].max(depth);
                    }
                }
            }
            squeeze.iter().all(|s| *s >= gp.squeeze_limit) || *opening <= gp.min_open
        } else {
            false
        };

        let now = state.time;
        let Some(ToolState::Gripper { wrist, opening: _, wrist_vel, opening_vel, .. }) =
            state.tool.as_mut()
        else {
            unreachable!("grasp rollout owns a gripper tool");
        };
        match phase {
            Phase::Descend => {
                if wrist.z <= action.z {
                    wrist.z = action.z;
                    *wrist_vel = Vec3::zeros();
                    *opening_vel = -gp.close_speed;
                    phase = Phase::Close;
                }
            }
            Phase::Close => {
                if gripped_or_bottomed {
                    *opening_vel = 0.0;
                    *wrist_vel = Vec3::new(0.0, 0.0, gp.lift_speed);
                    phase = Phase::Lift;
                }
            }
            Phase::Lift => {
                if wrist.z >= action.z + gp.lift_height {
                    wrist.z = action.z + gp.lift_height;
                    *wrist_vel = Vec3::zeros();
                    settle_until = now + gp.settle_time;
                    phase = Phase::Settle;
                }
            }
            Phase::Settle => {
                if now >= settle_until {
                    break;
                }
            }
        }
    }

    let final_positions = model.world_positions(&state);
    let mut displacement_xy = 0.0;
    for (p, p0) in final_positions.iter().zip(&start_positions) {
        displacement_xy += (p.x - p0.x).abs() + (p.y - p0.y).abs();
    }
    let height_gain = model.world_com(&state).z - com_z0;
    Ok(GraspOutcome {
        success: height_gain > gp.success_height,
        displacement_xy,
        height_gain,
        final_state: state,
    })
}

/// Run one push: the sphere slides start → end at the pusher speed, then the
/// body settles. Returns the body's planar motion as a pose delta — rotation
/// about the cloud centroid plus a centroid translation — measured by a
/// rigid fit from the rollout's first to last particle positions, paired
/// with the final state.
pub fn rollout_push(
    model: &RigidBodyModel,
    start: &SimState,
    action: &PushAction,
    params: &SimParams,
) -> Result<(PlanarPose, SimState), DynamicsError> {
    params.validate()?;
    let pp = &params.pusher;
    if ![action.x0, action.y0, action.x1, action.y1].iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::InvalidAction("non-finite push action".into()));
    }
    let from = Vec3::new(action.x0, action.y0, params.ground_height + pp.height);
    let to = Vec3::new(action.x1, action.y1, params.ground_height + pp.height);
    let stroke = (to - from).norm();
    if stroke < 1e-9 {
        return Err(DynamicsError::InvalidAction("push start equals push end".into()));
    }

    let start_positions = model.world_positions(start);
    if start_positions.iter().any(|p| (p - from).norm() < pp.radius) {
        return Err(DynamicsError::InvalidAction("pusher start pose intersects the body".into()));
    }

    let dir = (to - from) / stroke;
    let mut state = start.clone();
    state.tool = Some(ToolState::Pusher { center: from, vel: dir * pp.speed, radius: pp.radius });
    let t0 = state.time;

    let mut pushing = true;
    while state.time - t0 < MAX_ROLLOUT_TIME {
        state = step(model, &state, params)?;
        if pushing {
            let Some(ToolState::Pusher { center, .. }) = &state.tool else {
                unreachable!("push rollout owns a pusher tool");
            };
            if (*center - from).norm() >= stroke {
                state.tool = None;
                pushing = false;
            }
        } else if state.time - t0 >= stroke / pp.speed + pp.settle_time {
            break;
        }
    }

    let final_positions = model.world_positions(&state);
    let n = final_positions.len();
    let weights = vec![1.0; n];
    let (rot, _) = best_fit_rigid_transform(&start_positions, &final_positions, &weights)?;
    let theta = rot[(1, 0)].atan2(rot[(0, 0)]);
    let centroid = |pts: &[Vec3]| pts.iter().sum::<Vec3>() / n as f64;
    let c0 = centroid(&start_positions);
    let c1 = centroid(&final_positions);
    let delta = PlanarPose { x: c1.x - c0.x, y: c1.y - c0.y, theta };
    Ok((delta, state))
}
