//! Particle rigid-body simulator used for every planning rollout.
//!
//! The integrator is position-based: per substep, gravity kicks velocities,
//! particles move ballistically, contacts project penetrating particles out
//! of the ground / tool / static colliders with Coulomb friction (tangential
//! correction clamped to μ times the normal correction), and a weighted
//! shape-matching fit snaps the cloud back onto its rigid rest shape. The
//! body pose IS the fit, so pairwise distances are preserved to machine
//! precision by construction and the scheme is unconditionally stable at
//! planning timesteps.
//!
//! Contact particles get a large extra weight in the shape-matching fit
//! (`contact_weight_boost`): a handful of touching particles must be able to
//! hold the whole body against gravity, which plain mass-weighted averaging
//! dilutes. The boost is what keeps resting penetration at the 1e-4 m scale
//! and lets a squeezed gripper carry a body without creeping slip.
//!
//! Everything here is deterministic: no randomness, no threads, fixed
//! iteration order — identical inputs produce bit-identical states.

mod rollout;

pub use rollout::{
    grasp_reward, rollout_grasp, rollout_push, GraspAction, GraspOutcome, PushAction,
};

use crate::geometry::{
    best_fit_rigid_transform, GeometryError, Mat3, ParticleState, PlanarPose, Vec3,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("simulation diverged: particle position exceeded 1e3 m at t = {t} s")]
    NumericalDivergence { t: f64 },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("bad simulation parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Parallel-jaw gripper geometry and phase speeds. The wrist position is the
/// TOP of the finger pads; pads hang down `finger_len` and close along the
/// grasp direction given by the action's angle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperParams {
    pub finger_len: f64,
    pub max_open: f64,
    pub min_open: f64,
    pub pad_thickness: f64,
    pub pad_length: f64,
    pub approach_height: f64,
    pub descend_speed: f64,
    /// Opening shrink rate while closing (each pad moves at half this).
    pub close_speed: f64,
    pub lift_speed: f64,
    pub lift_height: f64,
    pub settle_time: f64,
    /// Pad interference depth that counts as a firm grip; closing stops once
    /// both pads squeeze this deep.
    pub squeeze_limit: f64,
    /// Height gain that counts as a successful pick.
    pub success_height: f64,
    /// Minimum clearance between pad bottoms and the ground.
    pub ground_clearance: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            finger_len: 0.04,
            max_open: 0.08,
            min_open: 0.002,
            pad_thickness: 0.008,
            pad_length: 0.02,
            approach_height: 0.06,
            descend_speed: 0.2,
            close_speed: 0.05,
            lift_speed: 0.2,
            lift_height: 0.25,
            settle_time: 0.5,
            squeeze_limit: 0.0025,
            success_height: 0.15,
            ground_clearance: 0.001,
        }
    }
}

/// Spherical pusher moved along a straight horizontal segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PusherParams {
    pub radius: f64,
    /// Height of the sphere centre above the ground.
    pub height: f64,
    pub speed: f64,
    pub settle_time: f64,
}

impl Default for PusherParams {
    fn default() -> Self {
        Self { radius: 0.01, height: 0.015, speed: 0.05, settle_time: 0.3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub dt: f64,
    pub substeps: u32,
    pub gravity: f64,
    pub ground_height: f64,
    /// Fraction of each normal penetration corrected per substep, in (0, 1].
    pub contact_stiffness: f64,
    /// Bounce is unsupported; must stay 0 (quasi-static manipulation).
    pub restitution: f64,
    pub max_penetration_tol: f64,
    /// Extra shape-matching weight multiplier for particles in contact.
    ///
    /// Sized so that even a thin contact band (a few percent of the cloud)
    /// carries most of the fit: with boosted contact weight fraction f, the
    /// body creeps past a gravity-loaded contact at (1 - f)/f · g·h per
    /// second, so f must stay near 1 for a gripper squeeze to hold through a
    /// multi-second lift.
    pub contact_weight_boost: f64,
    pub gripper: GripperParams,
    pub pusher: PusherParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1.0 / 240.0,
            substeps: 4,
            gravity: 9.81,
            ground_height: 0.0,
            contact_stiffness: 1.0,
            restitution: 0.0,
            max_penetration_tol: 1e-3,
            contact_weight_boost: 499.0,
            gripper: GripperParams::default(),
            pusher: PusherParams::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) {
            return Err(DynamicsError::BadParams("dt must be positive".into()));
        }
        if self.substeps < 1 {
            return Err(DynamicsError::BadParams("substeps must be >= 1".into()));
        }
        if !(self.contact_stiffness > 0.0 && self.contact_stiffness <= 1.0) {
            return Err(DynamicsError::BadParams("contact_stiffness must be in (0, 1]".into()));
        }
        if self.restitution != 0.0 {
            return Err(DynamicsError::BadParams("only restitution = 0 is supported".into()));
        }
        Ok(())
    }
}

/// Rigid body as a particle cloud: rest positions, per-particle masses, one
/// friction coefficient shared by ground and tools.
#[derive(Debug, Clone)]
pub struct RigidBodyModel {
    pub rest_positions: Vec<Vec3>,
    pub masses: Vec<f64>,
    pub friction: f64,
    /// Mass centre of `rest_positions` under `masses`.
    pub com: Vec3,
    /// Rest positions relative to `com`; the pose maps these to the world.
    rest_rel: Vec<Vec3>,
    /// Mass centre of `rest_rel` — zero up to rounding, folded back into the
    /// pose update so the tracked com stays exact.
    rest_rel_com: Vec3,
}

impl RigidBodyModel {
    pub fn from_positions_masses(
        positions: Vec<Vec3>,
        masses: Vec<f64>,
        friction: f64,
    ) -> Result<Self, DynamicsError> {
        if positions.is_empty() || positions.len() != masses.len() {
            return Err(GeometryError::MismatchedLengths(positions.len(), masses.len()).into());
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || masses.iter().any(|m| *m < 0.0 || !m.is_finite()) {
            return Err(GeometryError::BadWeights.into());
        }
        let mut com = Vec3::zeros();
        for (p, m) in positions.iter().zip(&masses) {
            com += *m * p;
        }
        com /= total;
        let rest_rel: Vec<Vec3> = positions.iter().map(|p| p - com).collect();
        let mut rest_rel_com = Vec3::zeros();
        for (r, m) in rest_rel.iter().zip(&masses) {
            rest_rel_com += *m * r;
        }
        rest_rel_com /= total;
        Ok(Self { rest_positions: positions, masses, friction, com, rest_rel, rest_rel_com })
    }

    pub fn len(&self) -> usize {
        self.rest_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rest_positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// World positions under a pose.
    pub fn world_positions(&self, state: &SimState) -> Vec<Vec3> {
        self.rest_rel.iter().map(|r| state.rotation * r + state.com).collect()
    }

    /// Mass-weighted world centre. Equals `state.com` up to fp noise; kept
    /// as an independent check for tests.
    pub fn world_com(&self, state: &SimState) -> Vec3 {
        let mut c = Vec3::zeros();
        for (r, m) in self.rest_rel.iter().zip(&self.masses) {
            c += *m * (state.rotation * r + state.com);
        }
        c / self.total_mass()
    }
}

/// Build a body from a particle state. With `com_params = (x_c, y_c,
/// concentration)`, masses follow a planar Gaussian centred at `(x_c, y_c)`
/// — the knob the centre-of-mass estimator turns; without, masses are
/// uniform. Total mass normalizes to 1 kg either way. The initial world
/// positions are the state's positions regardless of the weighting: only
/// where the mass sits changes, not where the particles start.
pub fn make_rigid_body(
    state: &ParticleState,
    com_params: Option<(f64, f64, f64)>,
) -> Result<RigidBodyModel, DynamicsError> {
    let positions = state.positions();
    if positions.is_empty() {
        return Err(GeometryError::TooFewPoints { needed: 1, got: 0 }.into());
    }
    let n = positions.len();
    let masses = match com_params {
        None => vec![1.0 / n as f64; n],
        Some((xc, yc, concentration)) => {
            if !(concentration > 0.0) {
                return Err(DynamicsError::BadParams("concentration must be positive".into()));
            }
            let d2: Vec<f64> = positions
                .iter()
                .map(|p| {
                    let dx = p.x - xc;
                    let dy = p.y - yc;
                    dx * dx + dy * dy
                })
                .collect();
            // Shift by the minimum squared distance before exponentiating so
            // a far-off centre cannot underflow every weight to zero.
            let d2_min = d2.iter().cloned().fold(f64::INFINITY, f64::min);
            let inv = 1.0 / (2.0 * concentration * concentration);
            let w: Vec<f64> = d2.iter().map(|d| (-(d - d2_min) * inv).exp()).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|wi| wi / total).collect()
        }
    };
    RigidBodyModel::from_positions_masses(positions, masses, state.friction)
}

/// Kinematic tool driven through the simulation by a rollout. Velocities are
/// what friction measures relative motion against; `step` advances the pose
/// by them each substep.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolState {
    Gripper {
        /// Top-centre point between the pads.
        wrist: Vec3,
        /// Anti-clockwise closing direction angle in the plane.
        theta: f64,
        /// Gap between the pads' inner faces.
        opening: f64,
        wrist_vel: Vec3,
        /// Rate of change of `opening` (negative while closing).
        opening_vel: f64,
    },
    Pusher {
        center: Vec3,
        vel: Vec3,
        radius: f64,
    },
}

/// Immobile axis-aligned box collider (e.g. the placing stand).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl StaticBox {
    pub fn top(&self) -> f64 {
        self.max[2]
    }
}

/// Full simulation state: body pose, particle velocities, clock, plus the
/// scene's kinematic tool and static colliders (carried here so `step` is a
/// pure function of model + state + params).
#[derive(Debug, Clone)]
pub struct SimState {
    /// Body orientation (orthonormal, det +1).
    pub rotation: Mat3,
    /// World position of the body's mass centre.
    pub com: Vec3,
    pub velocities: Vec<Vec3>,
    pub time: f64,
    pub tool: Option<ToolState>,
    pub statics: Vec<StaticBox>,
}

impl SimState {
    pub fn at_rest(model: &RigidBodyModel) -> Self {
        Self {
            rotation: Mat3::identity(),
            com: model.com,
            velocities: vec![Vec3::zeros(); model.len()],
            time: 0.0,
            tool: None,
            statics: Vec::new(),
        }
    }

    /// Rest state with the body displaced by a planar pose: rotated about
    /// the vertical axis through the cloud centroid, then shifted in the
    /// plane. The particle positions come out identical to
    /// [`apply_planar_pose`](crate::geometry::apply_planar_pose) on the rest
    /// cloud, whatever the mass distribution — the mass-centre terms cancel.
    pub fn at_planar_pose(model: &RigidBodyModel, pose: &PlanarPose) -> Self {
        let n = model.rest_positions.len() as f64;
        let centroid = model.rest_positions.iter().sum::<Vec3>() / n;
        let (s, c) = pose.theta.sin_cos();
        let rotation = Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let com = rotation * (model.com - centroid)
            + centroid
            + Vec3::new(pose.x, pose.y, 0.0);
        Self { rotation, com, ..Self::at_rest(model) }
    }

    /// SHA-256 over every f64 bit pattern in the state — the bit-exact
    /// determinism and no-state-leak fingerprint.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in self.rotation.iter() {
            h.update(v.to_le_bytes());
        }
        for v in [self.com.x, self.com.y, self.com.z, self.time] {
            h.update(v.to_le_bytes());
        }
        for vel in &self.velocities {
            h.update(vel.x.to_le_bytes());
            h.update(vel.y.to_le_bytes());
            h.update(vel.z.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// One finger pad as an oriented box: `axes` columns are (closing direction,
/// lateral, up), `half` the half-extents along them.
#[derive(Debug, Clone, Copy)]
pub struct OrientedBox {
    pub center: Vec3,
    pub axes: Mat3,
    pub half: Vec3,
}

impl OrientedBox {
    fn local(&self, p: &Vec3) -> Vec3 {
        self.axes.transpose() * (p - self.center)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let q = self.local(p);
        q.x.abs() <= self.half.x && q.y.abs() <= self.half.y && q.z.abs() <= self.half.z
    }

    /// Minimum-translation escape for a contained point: world-space outward
    /// normal plus depth; `None` when outside.
    pub fn penetration(&self, p: &Vec3) -> Option<(Vec3, f64)> {
        let q = self.local(p);
        let dx = self.half.x - q.x.abs();
        let dy = self.half.y - q.y.abs();
        let dz = self.half.z - q.z.abs();
        if dx < 0.0 || dy < 0.0 || dz < 0.0 {
            return None;
        }
        let col = |i: usize| Vec3::new(self.axes[(0, i)], self.axes[(1, i)], self.axes[(2, i)]);
        let (axis, depth, sign) = if dx <= dy && dx <= dz {
            (col(0), dx, q.x.signum())
        } else if dy <= dz {
            (col(1), dy, q.y.signum())
        } else {
            (col(2), dz, q.z.signum())
        };
        let sign = if sign == 0.0 { 1.0 } else { sign };
        Some((axis * sign, depth))
    }

    pub fn from_static(b: &StaticBox) -> Self {
        let min = Vec3::new(b.min[0], b.min[1], b.min[2]);
        let max = Vec3::new(b.max[0], b.max[1], b.max[2]);
        Self { center: (min + max) / 2.0, axes: Mat3::identity(), half: (max - min) / 2.0 }
    }
}

/// The two finger pads implied by a gripper pose. Pads hang below the wrist;
/// `opening` is the gap between their inner faces.
pub fn gripper_pads(
    wrist: &Vec3,
    theta: f64,
    opening: f64,
    gp: &GripperParams,
) -> [OrientedBox; 2] {
    let d = Vec3::new(theta.cos(), theta.sin(), 0.0);
    let e = Vec3::new(-theta.sin(), theta.cos(), 0.0);
    let up = Vec3::new(0.0, 0.0, 1.0);
    let axes = Mat3::from_columns(&[d, e, up]);
    let half = Vec3::new(gp.pad_thickness / 2.0, gp.pad_length / 2.0, gp.finger_len / 2.0);
    let centre_z = wrist - up * (gp.finger_len / 2.0);
    let off = opening / 2.0 + gp.pad_thickness / 2.0;
    [
        OrientedBox { center: centre_z - d * off, axes, half },
        OrientedBox { center: centre_z + d * off, axes, half },
    ]
}

/// Per-pad velocities for friction: wrist motion plus closing motion.
fn pad_velocities(theta: f64, wrist_vel: &Vec3, opening_vel: f64) -> [Vec3; 2] {
    let d = Vec3::new(theta.cos(), theta.sin(), 0.0);
    [wrist_vel - d * (opening_vel / 2.0), wrist_vel + d * (opening_vel / 2.0)]
}

fn advance_tool(tool: &mut ToolState, h: f64) {
    match tool {
        ToolState::Gripper { wrist, opening, wrist_vel, opening_vel, .. } => {
            *wrist += *wrist_vel * h;
            *opening = (*opening + *opening_vel * h).max(0.0);
        }
        ToolState::Pusher { center, vel, .. } => {
            *center += *vel * h;
        }
    }
}

/// Apply one contact: project out along `normal` by `stiffness * depth`,
/// then clamp the tangential displacement relative to the (possibly moving)
/// contact surface to the Coulomb cone.
fn resolve_contact(
    p: &mut Vec3,
    p_old: &Vec3,
    normal: &Vec3,
    depth: f64,
    surface_vel: &Vec3,
    h: f64,
    mu: f64,
    stiffness: f64,
) {
    let d_n = stiffness * depth;
    *p += normal * d_n;
    let rel = (*p - p_old) - surface_vel * h;
    let tangent = rel - normal * normal.dot(&rel);
    let t_len = tangent.norm();
    if t_len > 1e-15 {
        let budget = mu * d_n;
        if t_len <= budget {
            *p -= tangent;
        } else {
            *p -= tangent * (budget / t_len);
        }
    }
}

/// Advance the simulation by one `params.dt` tick (internally
/// `params.substeps` position-based substeps). Pure and deterministic.
pub fn step(
    model: &RigidBodyModel,
    state: &SimState,
    params: &SimParams,
) -> Result<SimState, DynamicsError> {
    params.validate()?;
    let n = model.len();
    if state.velocities.len() != n {
        return Err(GeometryError::MismatchedLengths(state.velocities.len(), n).into());
    }
    let h = params.dt / params.substeps as f64;
    let mu = model.friction;

    let mut rot = state.rotation;
    let mut com = state.com;
    let mut vel = state.velocities.clone();
    let mut tool = state.tool.clone();
    let mut time = state.time;

    let mut x_old = vec![Vec3::zeros(); n];
    let mut x = vec![Vec3::zeros(); n];
    let mut weights = vec![0.0f64; n];

    for _ in 0..params.substeps {
        for i in 0..n {
            x_old[i] = rot * model.rest_rel[i] + com;
            vel[i].z -= params.gravity * h;
            x[i] = x_old[i] + vel[i] * h;
        }

        if let Some(t) = tool.as_mut() {
            advance_tool(t, h);
        }

        // Colliders in order: tool, statics, ground last (the ground is the
        // one surface nothing may end a substep inside).
        for i in 0..n {
            let mut contact = false;
            match &tool {
                Some(ToolState::Gripper { wrist, theta, opening, wrist_vel, opening_vel }) => {
                    let pads = gripper_pads(wrist, *theta, *opening, &params.gripper);
                    let vels = pad_velocities(*theta, wrist_vel, *opening_vel);
                    for (pad, pv) in pads.iter().zip(&vels) {
                        if let Some((normal, depth)) = pad.penetration(&x[i]) {
                            resolve_contact(
                                &mut x[i],
                                &x_old[i],
                                &normal,
                                depth,
                                pv,
                                h,
                                mu,
                                params.contact_stiffness,
                            );
                            contact = true;
                        }
                    }
                }
                Some(ToolState::Pusher { center, vel: tool_vel, radius }) => {
                    let to_p = x[i] - center;
                    let dist = to_p.norm();
                    if dist < *radius {
                        let normal = if dist > 1e-12 {
                            to_p / dist
                        } else {
                            Vec3::new(0.0, 0.0, 1.0)
                        };
                        resolve_contact(
                            &mut x[i],
                            &x_old[i],
                            &normal,
                            radius - dist,
                            tool_vel,
                            h,
                            mu,
                            params.contact_stiffness,
                        );
                        contact = true;
                    }
                }
                None => {}
            }
            for sb in &state.statics {
                let obb = OrientedBox::from_static(sb);
                if let Some((normal, depth)) = obb.penetration(&x[i]) {
                    resolve_contact(
                        &mut x[i],
                        &x_old[i],
                        &normal,
                        depth,
                        &Vec3::zeros(),
                        h,
                        mu,
                        params.contact_stiffness,
                    );
                    contact = true;
                }
            }
            let ground_depth = params.ground_height - x[i].z;
            if ground_depth > 0.0 {
                resolve_contact(
                    &mut x[i],
                    &x_old[i],
                    &Vec3::new(0.0, 0.0, 1.0),
                    ground_depth,
                    &Vec3::zeros(),
                    h,
                    mu,
                    params.contact_stiffness,
                );
                contact = true;
            }
            weights[i] = model.masses[i] * if contact { 1.0 + params.contact_weight_boost } else { 1.0 };
        }

        let (r_new, t_new) = best_fit_rigid_transform(&model.rest_rel, &x, &weights)?;
        for i in 0..n {
            let x_new = r_new * model.rest_rel[i] + t_new;
            vel[i] = (x_new - x_old[i]) / h;
            if x_new.x.abs() > 1e3 || x_new.y.abs() > 1e3 || x_new.z.abs() > 1e3 {
                return Err(DynamicsError::NumericalDivergence { t: time });
            }
        }
        rot = r_new;
        // The mass centre of rest_rel is ~0; folding the residual in keeps
        // the tracked com exactly the mass centre.
        com = r_new * model.rest_rel_com + t_new;
        time += h;
    }

    Ok(SimState { rotation: rot, com, velocities: vel, time, tool, statics: state.statics.clone() })
}

/// Run `step` until `state.time >= t_end`.
pub fn run_until(
    model: &RigidBodyModel,
    mut state: SimState,
    params: &SimParams,
    t_end: f64,
) -> Result<SimState, DynamicsError> {
    while state.time < t_end - 1e-12 {
        state = step(model, &state, params)?;
    }
    Ok(state)
}
