//! Closed-loop pushing: look, estimate the pose, plan one push, execute it
//! in the hidden real world, update the mass-centre belief from what
//! actually happened, repeat until the goal tolerance is met or the step
//! budget runs out.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{rollout_push, RigidBodyModel, SimState};
use crate::estimation::{estimate_com, estimate_pose, ComBelief, PoseBelief, PushRecord};
use crate::geometry::{wrap_angle, CameraView, ParticleState, PlanarPose, Vec3};
use crate::io;
use crate::planner::{plan_push, CemParams, PushGoal};
use crate::scene::{morph_mask, pepper_noise, render_mask, three_view_rig};

use super::{
    derived_seed, render_views, resolve_objects, true_body, EpisodeReport, ExperimentConfig,
    HarnessError, Stream, SuiteReport,
};

use super::grasp_eval::decimate;

/// Planar half-extent of the reachable workspace; a body shoved past this
/// is gone for good and the episode fails.
const WORKSPACE_HALF: f64 = 0.40;
/// The loop declares victory when the *estimated* error is inside this
/// fraction of the goal tolerance, leaving margin for estimation error when
/// the true pose is judged.
const STOP_MARGIN: f64 = 0.9;
/// Pose prior spread fed to each re-estimation: how far a single push plus
/// prediction error can plausibly carry the body.
const STEP_POSE_STD: [f64; 3] = [0.02, 0.02, 0.10];
/// Template size for pose scoring and mass-centre replay.
const TEMPLATE_CAP: usize = 350;
/// Only the most recent pushes are replayed per belief update; replay cost
/// is linear in records and old shallow history adds little.
const COM_RECORDS_CAP: usize = 3;

/// Search sizes for per-step pose estimation.
fn pose_cem(seed: u64) -> CemParams {
    CemParams { iterations: 6, candidates: 48, elites: 6, seed, ..CemParams::default() }
}

/// Search sizes for per-step mass-centre updates.
fn com_cem(seed: u64) -> CemParams {
    CemParams { iterations: 4, candidates: 32, elites: 4, min_std: 0.005, seed, ..CemParams::default() }
}

/// Everything one closed-loop episode runs against: the goal, the shared
/// reconstruction, and the hidden real body.
pub struct PushEpisodeSetup {
    /// Target pose of the reference cloud (the start pose is the identity).
    pub goal: PlanarPose,
    /// Reference cloud in the start frame, already decimated for scoring.
    pub template: ParticleState,
    /// The hidden ground-truth body.
    pub real_model: RigidBodyModel,
    pub seed: u64,
    /// Report name, e.g. `cube/episode3`.
    pub tag: String,
}

/// Draw an episode goal from the evaluation ranges: 10–20 cm sideways
/// either way, 15–25 cm pulled toward the near edge, 30–90° of spin either
/// way.
pub fn sample_goal<R: Rng>(rng: &mut R) -> PlanarPose {
    let sx: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let st: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    PlanarPose {
        x: sx * rng.gen_range(0.10..0.20),
        y: -rng.gen_range(0.15..0.25),
        theta: st * rng.gen_range(30f64.to_radians()..90f64.to_radians()),
    }
}

/// The body's planar pose relative to its rest cloud: yaw about the
/// vertical axis plus the centroid's planar travel.
pub(super) fn true_planar_pose(model: &RigidBodyModel, state: &SimState) -> PlanarPose {
    let rest_centroid =
        model.rest_positions.iter().sum::<Vec3>() / model.rest_positions.len() as f64;
    let world = model.world_positions(state);
    let world_centroid = world.iter().sum::<Vec3>() / world.len() as f64;
    PlanarPose {
        x: world_centroid.x - rest_centroid.x,
        y: world_centroid.y - rest_centroid.y,
        theta: state.rotation[(1, 0)].atan2(state.rotation[(0, 0)]),
    }
}

/// Three fresh observation views (one top-down, two side) aimed at the
/// belief's current position, with the scene's mask corruption applied.
pub(super) fn observe_views(
    surface: &[Vec3],
    aim: &PlanarPose,
    template_centroid: Vec3,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<CameraView>, HarnessError> {
    let target = Vec3::new(
        template_centroid.x + aim.x,
        template_centroid.y + aim.y,
        cfg.scene.views.target[2],
    );
    let intrinsics = cfg.scene.image.intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    three_view_rig(
        target,
        cfg.scene.views.radius,
        cfg.scene.views.top_height,
        cfg.scene.views.side_height,
    )
    .into_iter()
    .map(|extrinsics| {
        let mut mask = render_mask(surface, &intrinsics, &extrinsics, cfg.scene.image.splat_px)?;
        if let Some(noise) = &cfg.scene.noise {
            if noise.pepper_rate > 0.0 {
                pepper_noise(&mut mask, noise.pepper_rate, &mut rng);
            }
            if noise.morph_px != 0 {
                mask = morph_mask(&mask, noise.morph_px);
            }
        }
        Ok(CameraView { intrinsics, extrinsics, mask })
    })
    .collect()
}

#[derive(Serialize)]
struct BeliefSnapshot<'a> {
    step: usize,
    pose_belief: &'a PoseBelief,
    com_belief: &'a ComBelief,
    /// Estimated remaining distance to the goal.
    cost: f64,
}

/// Run one closed-loop episode. Returns the report; writes a belief
/// trajectory (JSON lines, one snapshot per step) into the output
/// directory.
pub fn run_push_episode(
    cfg: &ExperimentConfig,
    setup: &PushEpisodeSetup,
) -> Result<EpisodeReport, HarnessError> {
    cfg.validate()?;
    let out_dir = cfg.ensure_output_dir()?.to_path_buf();
    let mut episode = EpisodeReport::new(cfg.task, setup.tag.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);

    let template_positions = setup.template.positions();
    let template_centroid =
        template_positions.iter().sum::<Vec3>() / template_positions.len() as f64;
    let goal = setup.goal;
    let goal_tol = PushGoal::default();

    // The hidden world starts at rest at the reference pose.
    let mut real_state = SimState::at_rest(&setup.real_model);

    // Beliefs: the pose is near the start, the mass is somewhere around the
    // cloud centroid.
    let mut pose_prior = PoseBelief::centered(PlanarPose::identity(), STEP_POSE_STD);
    let mut com_belief =
        ComBelief::isotropic([template_centroid.x, template_centroid.y], 0.03);
    let mut records: Vec<PushRecord> = Vec::new();
    let mut pending: Option<(crate::dynamics::PushAction, PlanarPose)> = None;

    let traj_name = format!("{}_beliefs.jsonl", setup.tag.replace('/', "_"));
    let mut snapshots: Vec<serde_json::Value> = Vec::new();

    let mut success = false;
    let mut steps = 0;

    loop {
        // Look: three fresh views of wherever the body really is, aimed at
        // where the belief thinks it is.
        let true_pose_now = true_planar_pose(&setup.real_model, &real_state);
        let surface = crate::geometry::apply_planar_pose(&template_positions, &true_pose_now);
        let views = observe_views(&surface, &pose_prior.mean, template_centroid, cfg, rng.gen())?;
        let pose_belief = estimate_pose(&setup.template, &views, &pose_prior, &pose_cem(rng.gen()))?;
        let cur = pose_belief.mean;

        // Close the previous push's record now that its outcome is observed.
        if let Some((action, pose_before)) = pending.take() {
            records.push(PushRecord { action, pose_before, pose_after_observed: cur });
            if cfg.episode.com_update {
                let recent = &records[records.len().saturating_sub(COM_RECORDS_CAP)..];
                com_belief = estimate_com(
                    &setup.template,
                    recent,
                    &com_belief,
                    &com_cem(rng.gen()),
                    &cfg.sim,
                )?;
            }
        }

        let pos_err = cur.position_error(&goal);
        let ang_err = cur.angle_error(&goal);
        snapshots.push(serde_json::json!(BeliefSnapshot {
            step: steps,
            pose_belief: &pose_belief,
            com_belief: &com_belief,
            cost: pos_err,
        }));

        if pos_err <= STOP_MARGIN * goal_tol.pos_tol && ang_err <= STOP_MARGIN * goal_tol.ang_tol {
            success = true;
            break;
        }
        if steps >= cfg.episode.max_steps {
            break;
        }

        // Plan on the belief: template mass concentrated at the estimated
        // centre, standing at the estimated pose.
        let planner_model = crate::dynamics::make_rigid_body(
            &setup.template,
            Some((com_belief.mean[0], com_belief.mean[1], crate::estimation::COM_CONCENTRATION)),
        )?;
        let planner_start = SimState::at_planar_pose(&planner_model, &cur);
        let remaining = PlanarPose {
            x: goal.x - cur.x,
            y: goal.y - cur.y,
            theta: wrap_angle(goal.theta - cur.theta),
        };
        let plan_goal = PushGoal { target: remaining, ..PushGoal::default() };
        let real_digest = real_state.digest();
        let (action, _) = plan_push(
            &planner_model,
            &planner_start,
            &plan_goal,
            &CemParams { seed: rng.gen(), ..cfg.cem.clone() },
            &cfg.sim,
        )?;
        assert_eq!(
            real_digest,
            real_state.digest(),
            "planning must not touch the real world's state"
        );

        // Execute for real. A push the real world rejects (the planner's
        // model was wrong enough that the pusher starts inside the body)
        // burns the step and moves nothing.
        steps += 1;
        match rollout_push(&setup.real_model, &real_state, &action, &cfg.sim) {
            Ok((_, next_state)) => real_state = next_state,
            Err(_) => {}
        }
        pending = Some((action, cur));

        // Predict where that push put the body; the prediction aims the next
        // cameras and centres the next pose search.
        let predicted = match rollout_push(&planner_model, &planner_start, &action, &cfg.sim) {
            Ok((delta, _)) => cur.then(&delta),
            Err(_) => cur,
        };
        pose_prior = PoseBelief::centered(predicted, STEP_POSE_STD);

        let true_now = true_planar_pose(&setup.real_model, &real_state);
        if true_now.x.abs() > WORKSPACE_HALF || true_now.y.abs() > WORKSPACE_HALF {
            episode.error = Some("pushed out of the workspace".into());
            break;
        }
    }

    // Judge against the truth, not the belief.
    let true_final = true_planar_pose(&setup.real_model, &real_state);
    let true_pos_err = true_final.position_error(&goal);
    let true_ang_err = true_final.angle_error(&goal);
    episode.success =
        success && true_pos_err <= goal_tol.pos_tol && true_ang_err <= goal_tol.ang_tol;
    episode.steps_used = steps;
    episode.metrics.insert("final_pos_err".into(), true_pos_err);
    episode.metrics.insert("final_ang_err".into(), true_ang_err);
    episode
        .metrics
        .insert("com_trace".into(), com_belief.trace());
    episode
        .metrics
        .insert("com_x".into(), com_belief.mean[0]);
    episode
        .metrics
        .insert("com_y".into(), com_belief.mean[1]);

    io::write_jsonl(out_dir.join(&traj_name), &snapshots)?;
    episode.artifacts.push(traj_name);
    Ok(episode)
}

/// Run the push suite: reconstruct the first configured object once, then
/// run `cfg.trials` independent closed-loop episodes with sampled goals.
///
/// Writes `push_report.json` and `push_report.csv` plus per-episode belief
/// trajectories into the output directory.
pub fn run_push_eval(cfg: &ExperimentConfig) -> Result<SuiteReport, HarnessError> {
    cfg.validate()?;
    let out_dir = cfg.ensure_output_dir()?.to_path_buf();
    let objects = resolve_objects(&cfg.scene, cfg.seed)?;
    let mut report = SuiteReport::new(cfg);
    let Some((name, gt)) = objects.first() else {
        io::write_json(out_dir.join("push_report.json"), &report)?;
        return Ok(report);
    };

    // One reconstruction serves every episode: the object always starts in
    // the canonical pose, and each episode re-estimates from there.
    let views = render_views(
        &gt.surface_points,
        &cfg.scene,
        derived_seed(cfg.seed, Stream::Views, 0),
    )?;
    let recon_cfg = crate::recon::ReconConfig {
        seed: derived_seed(cfg.seed, Stream::Recon, 0),
        ..cfg.recon.clone()
    };
    let (recon_state, _) = crate::recon::reconstruct(&views, &recon_cfg)?;
    let template = ParticleState::rigid_from_positions(
        decimate(&recon_state.positions(), TEMPLATE_CAP),
        cfg.scene.friction,
    );

    for e in 0..cfg.trials {
        let seed = derived_seed(cfg.seed, Stream::Episode, e as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal = sample_goal(&mut rng);
        let real_model = match true_body(gt, 500, cfg.scene.friction, rng.gen()) {
            Ok(m) => m,
            Err(err) => {
                let mut ep = EpisodeReport::new(cfg.task, format!("{name}/episode{e}"));
                ep.error = Some(err.to_string());
                report.episodes.push(ep);
                continue;
            }
        };
        let setup = PushEpisodeSetup {
            goal,
            template: template.clone(),
            real_model,
            seed: rng.gen(),
            tag: format!("{name}/episode{e}"),
        };
        match run_push_episode(cfg, &setup) {
            Ok(ep) => report.episodes.push(ep),
            Err(err) => {
                let mut ep = EpisodeReport::new(cfg.task, setup.tag.clone());
                ep.error = Some(err.to_string());
                report.episodes.push(ep);
            }
        }
    }

    let successes: Vec<&EpisodeReport> =
        report.episodes.iter().filter(|e| e.success).collect();
    report
        .summary
        .insert("n_episodes".into(), report.episodes.len() as f64);
    report
        .summary
        .insert("successes".into(), successes.len() as f64);
    if !successes.is_empty() {
        let mean_steps =
            successes.iter().map(|e| e.steps_used as f64).sum::<f64>() / successes.len() as f64;
        report.summary.insert("mean_steps_success".into(), mean_steps);
    }
    let mean_all = report
        .episodes
        .iter()
        .map(|e| e.steps_used as f64)
        .sum::<f64>()
        / report.episodes.len().max(1) as f64;
    report.summary.insert("mean_steps_all".into(), mean_all);

    io::write_json(out_dir.join("push_report.json"), &report)?;
    let rows: Vec<Vec<String>> = report
        .episodes
        .iter()
        .map(|ep| {
            vec![
                ep.name.clone(),
                ep.success.to_string(),
                ep.steps_used.to_string(),
                ep.metrics
                    .get("final_pos_err")
                    .map_or(String::new(), |v| v.to_string()),
                ep.metrics
                    .get("final_ang_err")
                    .map_or(String::new(), |v| v.to_string()),
                ep.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    io::write_csv(
        out_dir.join("push_report.csv"),
        &["episode", "success", "steps", "final_pos_err", "final_ang_err", "error"],
        &rows,
    )?;
    Ok(report)
}
