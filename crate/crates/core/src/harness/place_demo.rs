//! The full manipulation story on one object: reconstruct it, probe it with
//! two deep pushes to find out where its mass hides, grasp it near the
//! estimated mass centre, and set it down so that centre rests over a
//! narrow stand. Success is decided by the settled body, not the belief.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{make_rigid_body, rollout_grasp, rollout_push, step, PushAction, SimState};
use crate::estimation::{estimate_com, estimate_pose, ComBelief, PoseBelief, PushRecord};
use crate::geometry::{ParticleState, PlanarPose, Vec3};
use crate::io;
use crate::planner::{plan_grasp_with_prior, CemParams};
use crate::scene::GroundTruthObject;

use super::grasp_eval::decimate;
use super::push_eval::PushEpisodeSetup;
use super::{
    derived_seed, render_views, resolve_objects, true_body, EpisodeReport, ExperimentConfig,
    HarnessError, Stream, SuiteReport,
};

/// Template size for estimation and planning.
const TEMPLATE_CAP: usize = 350;
/// Pose prior spread when re-estimating after a probe push.
const PROBE_POSE_STD: [f64; 3] = [0.02, 0.02, 0.10];
/// Body tilt beyond this counts as fallen off.
const MAX_TILT: f64 = 10.0 * std::f64::consts::PI / 180.0;
/// Drop gap between the body's lowest point and the stand top at release.
const DROP_GAP: f64 = 0.004;
/// Settling time after release, in seconds.
const SETTLE_TIME: f64 = 1.0;

/// The two probe pushes, derived from the cloud's planar footprint: a deep
/// axial shove against the +x face, then a deep sideways poke through the
/// +x quarter. Each alone leaves a valley of mass placements it cannot
/// distinguish; together they pin the mass centre down (shallow pokes
/// would tell us nothing — a friction-laden body barely rotates).
fn probe_pushes(template: &ParticleState) -> Vec<PushAction> {
    let positions = template.positions();
    let (mut lo, mut hi) = (positions[0], positions[0]);
    for p in &positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let cy = 0.5 * (lo.y + hi.y);
    let len = hi.x - lo.x;
    let xb = lo.x + 0.75 * len;
    vec![
        PushAction { x0: hi.x + 0.025, y0: cy, x1: hi.x - 0.4 * len, y1: cy },
        PushAction { x0: xb, y0: lo.y - 0.025, x1: xb, y1: cy + 0.01 },
    ]
}

/// Extract yaw from a (nearly) planar rotation.
fn yaw_of(state: &SimState) -> f64 {
    state.rotation[(1, 0)].atan2(state.rotation[(0, 0)])
}

/// Body tilt: angle between the body's vertical axis and world vertical.
fn tilt_of(state: &SimState) -> f64 {
    state.rotation[(2, 2)].clamp(-1.0, 1.0).acos()
}

fn stage_fail(mut ep: EpisodeReport, stage: &str, msg: impl std::fmt::Display) -> EpisodeReport {
    ep.error = Some(format!("{stage}: {msg}"));
    ep
}

/// One staged demo run. `setup.goal` is unused (the demo's goals are its
/// stages); the template, real body, and seed come in the same shape the
/// push episodes use.
pub fn run_place_episode(cfg: &ExperimentConfig, setup: &PushEpisodeSetup) -> EpisodeReport {
    let mut episode = EpisodeReport::new(cfg.task, setup.tag.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let template_positions = setup.template.positions();
    let n = template_positions.len() as f64;
    let centroid = template_positions.iter().sum::<Vec3>() / n;

    let mut real_state = SimState::at_rest(&setup.real_model);
    let mut pose = PlanarPose::identity();
    let mut records: Vec<PushRecord> = Vec::new();

    // Probe: two deep pushes, each followed by a fresh look to see what it
    // actually did.
    for (i, probe) in probe_pushes(&setup.template).iter().enumerate() {
        // The probe coordinates are template-frame; carry them to the
        // body's current pose (rotation about the cloud centroid, then the
        // planar shift).
        let (s, c) = pose.theta.sin_cos();
        let carry = |x: f64, y: f64| {
            let (dx, dy) = (x - centroid.x, y - centroid.y);
            (
                c * dx - s * dy + centroid.x + pose.x,
                s * dx + c * dy + centroid.y + pose.y,
            )
        };
        let (x0, y0) = carry(probe.x0, probe.y0);
        let (x1, y1) = carry(probe.x1, probe.y1);
        let action = PushAction { x0, y0, x1, y1 };

        let pose_before = pose;
        match rollout_push(&setup.real_model, &real_state, &action, &cfg.sim) {
            Ok((_, next)) => real_state = next,
            Err(e) => return stage_fail(episode, "probe", format!("push {i}: {e}")),
        }
        episode.steps_used += 1;

        let true_pose = super::push_eval::true_planar_pose(&setup.real_model, &real_state);
        let surface = crate::geometry::apply_planar_pose(&template_positions, &true_pose);
        let views = match super::push_eval::observe_views(&surface, &pose_before, centroid, cfg, rng.gen()) {
            Ok(v) => v,
            Err(e) => return stage_fail(episode, "estimate", format!("views after push {i}: {e}")),
        };
        let prior = PoseBelief::centered(pose_before, PROBE_POSE_STD);
        let cem = CemParams { iterations: 6, candidates: 48, elites: 6, seed: rng.gen(), ..CemParams::default() };
        pose = match estimate_pose(&setup.template, &views, &prior, &cem) {
            Ok(belief) => belief.mean,
            Err(e) => return stage_fail(episode, "estimate", format!("pose after push {i}: {e}")),
        };
        records.push(PushRecord {
            action,
            pose_before,
            pose_after_observed: pose,
        });
    }

    // Belief: where is the mass?
    let com_cem = CemParams {
        iterations: 6,
        candidates: 64,
        elites: 3,
        min_std: 0.005,
        seed: rng.gen(),
        ..CemParams::default()
    };
    let prior = ComBelief::isotropic([centroid.x, centroid.y], 0.05);
    let com_belief = match estimate_com(&setup.template, &records, &prior, &com_cem, &cfg.sim) {
        Ok(b) => b,
        Err(e) => return stage_fail(episode, "estimate", e),
    };
    let place_point = if cfg.place.place_at_centroid {
        [centroid.x, centroid.y]
    } else {
        com_belief.mean
    };
    episode.metrics.insert("com_est_x".into(), com_belief.mean[0]);
    episode.metrics.insert("com_est_y".into(), com_belief.mean[1]);
    episode.metrics.insert("centroid_x".into(), centroid.x);
    episode.metrics.insert("centroid_y".into(), centroid.y);
    let true_com = setup.real_model.com;
    episode.metrics.insert(
        "com_est_err".into(),
        ((com_belief.mean[0] - true_com.x).powi(2) + (com_belief.mean[1] - true_com.y).powi(2))
            .sqrt(),
    );

    // Grasp near the estimated mass centre, in the real world.
    let planner_model = match make_rigid_body(
        &setup.template,
        Some((com_belief.mean[0], com_belief.mean[1], crate::estimation::COM_CONCENTRATION)),
    ) {
        Ok(m) => m,
        Err(e) => return stage_fail(episode, "grasp", e),
    };
    let planner_start = SimState::at_planar_pose(&planner_model, &pose);
    // The grasp focus is the estimated mass centre carried to the current
    // pose estimate.
    let (s, c) = pose.theta.sin_cos();
    let focus = [
        c * (com_belief.mean[0] - centroid.x) - s * (com_belief.mean[1] - centroid.y)
            + centroid.x
            + pose.x,
        s * (com_belief.mean[0] - centroid.x) + c * (com_belief.mean[1] - centroid.y)
            + centroid.y
            + pose.y,
    ];
    let grasp_cem = CemParams { seed: rng.gen(), ..cfg.cem.clone() };
    let real_digest = real_state.digest();
    let (action, _) =
        match plan_grasp_with_prior(&planner_model, &planner_start, Some(focus), &grasp_cem, &cfg.sim) {
            Ok(p) => p,
            Err(e) => return stage_fail(episode, "grasp", e),
        };
    assert_eq!(real_digest, real_state.digest(), "planning must not touch the real world's state");
    let grasp_outcome = match rollout_grasp(&setup.real_model, &real_state, &action, &cfg.sim) {
        Ok(o) => o,
        Err(e) => return stage_fail(episode, "grasp", e),
    };
    if !grasp_outcome.success {
        return stage_fail(episode, "grasp", "grip did not hold through the lift");
    }

    // Place: set the body down with the chosen point over the stand's
    // centre, wrist rotated back to the canonical yaw, and let it settle.
    let stand = &cfg.place.stand;
    let stand_c = [
        0.5 * (stand.min[0] + stand.max[0]),
        0.5 * (stand.min[1] + stand.max[1]),
    ];
    let yaw = yaw_of(&grasp_outcome.final_state);
    let (ys, yc) = yaw.sin_cos();
    // Solve the planar pose that maps the template-frame place point onto
    // the stand centre at yaw: rotation happens about the cloud centroid.
    let place_pose = PlanarPose {
        x: stand_c[0] - (yc * (place_point[0] - centroid.x) - ys * (place_point[1] - centroid.y) + centroid.x),
        y: stand_c[1] - (ys * (place_point[0] - centroid.x) + yc * (place_point[1] - centroid.y) + centroid.y),
        theta: yaw,
    };
    let mut placed = SimState::at_planar_pose(&setup.real_model, &place_pose);
    let world = setup.real_model.world_positions(&placed);
    let min_z = world.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    placed.com.z += stand.top() + DROP_GAP - min_z;
    placed.statics = vec![stand.clone()];

    let ticks = (SETTLE_TIME / cfg.sim.dt).round() as usize;
    for _ in 0..ticks {
        placed = match step(&setup.real_model, &placed, &cfg.sim) {
            Ok(next) => next,
            Err(e) => return stage_fail(episode, "place", e),
        };
    }

    let world = setup.real_model.world_positions(&placed);
    let min_z = world.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let tilt = tilt_of(&placed);
    episode.metrics.insert("final_min_z".into(), min_z);
    episode.metrics.insert("final_tilt_deg".into(), tilt.to_degrees());
    let on_stand = min_z > stand.top() - 2e-3 && placed.com.z > stand.top();
    if on_stand && tilt < MAX_TILT {
        episode.success = true;
    } else {
        return stage_fail(
            episode,
            "place",
            format!("body left the stand (min z {min_z:.4}, tilt {:.1}°)", tilt.to_degrees()),
        );
    }
    episode
}

/// Build the shared episode ingredients (reconstruction template and a
/// ground-truth body draw) and run `cfg.trials` staged demos.
///
/// Writes `place_report.json` and `place_report.csv` into the output
/// directory.
pub fn run_place_demo(cfg: &ExperimentConfig) -> Result<SuiteReport, HarnessError> {
    cfg.validate()?;
    let out_dir = cfg.ensure_output_dir()?.to_path_buf();
    let objects = resolve_objects(&cfg.scene, cfg.seed)?;
    let mut report = SuiteReport::new(cfg);
    let Some((name, gt)) = objects.first() else {
        io::write_json(out_dir.join("place_report.json"), &report)?;
        return Ok(report);
    };

    let template = demo_template(cfg, gt)?;
    for e in 0..cfg.trials {
        let seed = derived_seed(cfg.seed, Stream::Episode, e as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real_model = match true_body(gt, 500, cfg.scene.friction, rng.gen()) {
            Ok(m) => m,
            Err(err) => {
                let mut ep = EpisodeReport::new(cfg.task, format!("{name}/demo{e}"));
                ep.error = Some(err.to_string());
                report.episodes.push(ep);
                continue;
            }
        };
        let setup = PushEpisodeSetup {
            goal: PlanarPose::identity(),
            template: template.clone(),
            real_model,
            seed: rng.gen(),
            tag: format!("{name}/demo{e}"),
        };
        report.episodes.push(run_place_episode(cfg, &setup));
    }

    let successes = report.episodes.iter().filter(|e| e.success).count();
    report.summary.insert("n_demos".into(), report.episodes.len() as f64);
    report.summary.insert("successes".into(), successes as f64);

    io::write_json(out_dir.join("place_report.json"), &report)?;
    let rows: Vec<Vec<String>> = report
        .episodes
        .iter()
        .map(|ep| {
            vec![
                ep.name.clone(),
                ep.success.to_string(),
                ep.metrics
                    .get("com_est_err")
                    .map_or(String::new(), |v| v.to_string()),
                ep.metrics
                    .get("final_tilt_deg")
                    .map_or(String::new(), |v| v.to_string()),
                ep.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    io::write_csv(
        out_dir.join("place_report.csv"),
        &["demo", "success", "com_est_err", "final_tilt_deg", "error"],
        &rows,
    )?;
    Ok(report)
}

/// The demo's shared reconstruction template.
fn demo_template(
    cfg: &ExperimentConfig,
    gt: &GroundTruthObject,
) -> Result<ParticleState, HarnessError> {
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
    Ok(ParticleState::rigid_from_positions(
        decimate(&recon_state.positions(), TEMPLATE_CAP),
        cfg.scene.friction,
    ))
}
