//! Grasp success suite: scatter each object at a random planar pose, look
//! at it through the camera ring, rebuild it from silhouettes, plan a grasp
//! on the reconstruction, and score the plan by executing it once in the
//! real world (the hidden ground-truth simulator).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{grasp_reward, rollout_grasp, RigidBodyModel, SimState};
use crate::geometry::{apply_planar_pose, Vec3};
use crate::io;
use crate::planner::{plan_grasp, CemParams};
use crate::scene::voxel::{iou, voxelize_occupancy, voxelize_particles, OccupancyGrid};
use crate::scene::{pepper_noise, GroundTruthObject};

use super::{
    derived_seed, random_planar_pose, render_views, resolve_objects, true_body, EpisodeReport,
    ExperimentConfig, HarnessError, Stream, SuiteReport, IOU_DILATION, IOU_VOXEL_SIZE,
};

/// Volume particles in each ground-truth body.
const REAL_BODY_PARTICLES: usize = 500;
/// Cap on the planner's model size; the reconstruction is decimated down to
/// this by even striding (rollout cost is linear in particle count, and a
/// few hundred particles already pin the contact geometry).
const PLANNER_CLOUD_CAP: usize = 400;
/// Reconstructions scoring below this voxel IoU are too wrong to plan on;
/// the trial is recorded as a perception failure.
const MIN_PLANNABLE_IOU: f64 = 0.2;
/// How far object centres scatter from the rig centre, in metres.
const POSE_SCATTER: f64 = 0.03;

/// Decimate a cloud to at most `cap` points by even striding.
pub(super) fn decimate(points: &[Vec3], cap: usize) -> Vec<Vec3> {
    if points.len() <= cap {
        return points.to_vec();
    }
    let stride = points.len() as f64 / cap as f64;
    (0..cap)
        .map(|i| points[(i as f64 * stride) as usize])
        .collect()
}

/// Voxel IoU between a reconstructed world-frame cloud and the canonical
/// ground truth: the cloud is carried back through the known plant pose
/// (rotation about the reference centroid, then translation) and compared on
/// the canonical grid.
pub(super) fn recon_iou_at_pose(
    cloud: &[Vec3],
    gt_grid: &OccupancyGrid,
    pose: &crate::geometry::PlanarPose,
    reference_centroid: Vec3,
) -> Result<f64, HarnessError> {
    let c = reference_centroid;
    let (s, cos) = pose.theta.sin_cos();
    let canonical: Vec<Vec3> = cloud
        .iter()
        .map(|q| {
            let d = Vec3::new(q.x - pose.x - c.x, q.y - pose.y - c.y, q.z - c.z);
            Vec3::new(cos * d.x + s * d.y + c.x, -s * d.x + cos * d.y + c.y, d.z + c.z)
        })
        .collect();
    let grid = voxelize_particles(&canonical, IOU_VOXEL_SIZE, IOU_DILATION);
    Ok(iou(&grid, gt_grid)?)
}

struct TrialOutcome {
    episode: EpisodeReport,
}

fn run_grasp_trial(
    cfg: &ExperimentConfig,
    name: &str,
    gt: &GroundTruthObject,
    gt_grid: &OccupancyGrid,
    trial: usize,
    global_index: usize,
) -> TrialOutcome {
    let mut episode = EpisodeReport::new(cfg.task, format!("{name}/trial{trial}"));
    let mut rng =
        ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, Stream::Trial, global_index as u64));

    let fail = |mut ep: EpisodeReport, msg: String| {
        ep.error = Some(msg);
        TrialOutcome { episode: ep }
    };

    // The hidden real world: true mass distribution at a random pose.
    let pose = random_planar_pose(&mut rng, POSE_SCATTER);
    let real_model = match true_body(gt, REAL_BODY_PARTICLES, cfg.scene.friction, rng.gen()) {
        Ok(m) => m,
        Err(e) => return fail(episode, format!("ground-truth body: {e}")),
    };
    let real_start = SimState::at_planar_pose(&real_model, &pose);

    // What the cameras see.
    let moved_surface = apply_planar_pose(&gt.surface_points, &pose);
    let mut views = match render_views(&moved_surface, &cfg.scene, rng.gen()) {
        Ok(v) => v,
        Err(e) => return fail(episode, format!("rendering: {e}")),
    };
    if cfg.corrupt_trial == Some(global_index) {
        // Injected perception failure: almost every foreground pixel drops.
        let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        for view in &mut views {
            pepper_noise(&mut view.mask, 0.985, &mut noise_rng);
        }
    }

    let recon_cfg = crate::recon::ReconConfig { seed: rng.gen(), ..cfg.recon.clone() };
    let (recon_state, _) = match crate::recon::reconstruct(&views, &recon_cfg) {
        Ok(r) => r,
        Err(e) => return fail(episode, format!("reconstruction: {e}")),
    };
    let cloud = recon_state.positions();

    let centroid = gt.surface_points.iter().sum::<Vec3>() / gt.surface_points.len() as f64;
    let score = match recon_iou_at_pose(&cloud, gt_grid, &pose, centroid) {
        Ok(s) => s,
        Err(e) => return fail(episode, format!("iou: {e}")),
    };
    episode.metrics.insert("iou".into(), score);
    if score < MIN_PLANNABLE_IOU {
        return fail(
            episode,
            format!("reconstruction too poor to plan on (iou {score:.3})"),
        );
    }

    // The planner sees only the reconstruction, with uniform mass.
    let planner_positions = decimate(&cloud, PLANNER_CLOUD_CAP);
    let n = planner_positions.len();
    let planner_model = match RigidBodyModel::from_positions_masses(
        planner_positions,
        vec![1.0 / n as f64; n],
        cfg.scene.friction,
    ) {
        Ok(m) => m,
        Err(e) => return fail(episode, format!("planner model: {e}")),
    };
    let planner_start = SimState::at_rest(&planner_model);

    let cem = CemParams { seed: rng.gen(), ..cfg.cem.clone() };
    let real_digest = real_start.digest();
    let (action, _outcome) = match plan_grasp(&planner_model, &planner_start, &cem, &cfg.sim) {
        Ok(p) => p,
        Err(e) => return fail(episode, format!("planning: {e}")),
    };
    assert_eq!(
        real_digest,
        real_start.digest(),
        "planning must not touch the real world's state"
    );

    // One fresh execution in the real world decides the trial.
    match rollout_grasp(&real_model, &real_start, &action, &cfg.sim) {
        Ok(outcome) => {
            episode.success = outcome.success;
            episode.steps_used = 1;
            episode.metrics.insert("reward".into(), grasp_reward(&outcome));
            episode
                .metrics
                .insert("displacement_xy".into(), outcome.displacement_xy);
            episode.metrics.insert("height_gain".into(), outcome.height_gain);
            TrialOutcome { episode }
        }
        Err(e) => fail(episode, format!("execution: {e}")),
    }
}

/// Run the grasp table: every configured object times `cfg.trials` seeded
/// trials, in parallel. Per-trial failures of any stage are recorded in the
/// report and never abort the suite.
///
/// Writes `grasp_report.json` and `grasp_report.csv` into the output
/// directory.
pub fn run_grasp_eval(cfg: &ExperimentConfig) -> Result<SuiteReport, HarnessError> {
    cfg.validate()?;
    let out_dir = cfg.ensure_output_dir()?.to_path_buf();
    let objects = resolve_objects(&cfg.scene, cfg.seed)?;

    let grids: Vec<OccupancyGrid> = objects
        .iter()
        .map(|(_, gt)| voxelize_occupancy(gt, IOU_VOXEL_SIZE))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..objects.len())
        .flat_map(|o| (0..cfg.trials).map(move |t| (o, t)))
        .collect();

    let mut report = SuiteReport::new(cfg);
    report.episodes = jobs
        .par_iter()
        .enumerate()
        .map(|(global_index, &(obj, trial))| {
            let (name, gt) = &objects[obj];
            run_grasp_trial(cfg, name, gt, &grids[obj], trial, global_index).episode
        })
        .collect();

    let successes = report.episodes.iter().filter(|e| e.success).count();
    let total = report.episodes.len();
    report.summary.insert("n_trials".into(), total as f64);
    report.summary.insert(
        "success_rate".into(),
        if total == 0 { 0.0 } else { successes as f64 / total as f64 },
    );
    for (obj_index, (name, _)) in objects.iter().enumerate() {
        let wins = jobs
            .iter()
            .zip(&report.episodes)
            .filter(|((o, _), ep)| *o == obj_index && ep.success)
            .count();
        report
            .summary
            .insert(format!("successes_{name}"), wins as f64);
    }

    io::write_json(out_dir.join("grasp_report.json"), &report)?;
    let rows: Vec<Vec<String>> = jobs
        .iter()
        .zip(&report.episodes)
        .map(|(&(obj, trial), ep)| {
            vec![
                objects[obj].0.clone(),
                trial.to_string(),
                ep.success.to_string(),
                ep.metrics.get("iou").map_or(String::new(), |v| v.to_string()),
                ep.metrics
                    .get("height_gain")
                    .map_or(String::new(), |v| v.to_string()),
                ep.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    io::write_csv(
        out_dir.join("grasp_report.csv"),
        &["object", "trial", "success", "iou", "height_gain", "error"],
        &rows,
    )?;
    Ok(report)
}
