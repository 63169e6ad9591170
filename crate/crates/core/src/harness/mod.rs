//! Experiment orchestration: configuration, seeded trial suites, and the
//! closed-loop episode runners behind the CLI.
//!
//! Evaluation is *sim-as-reality*: every suite keeps two separate worlds. The
//! "real" one is a simulator instance built from ground truth — true
//! geometry, true mass distribution, true pose — and stands in for the
//! physical bench. The estimator and planner only ever see rendered
//! silhouettes of it and the outcomes of their own actions; their internal
//! models are reconstructed, never copied, and a state digest taken before
//! and after each planning call guards against leaks.
//!
//! Everything derives from `(config, master seed)`. Per-trial seeds come from
//! a two-round SplitMix64 scheme (see [`derived_seed`]), reports carry the
//! SHA-256 of the exact configuration, and no report field depends on wall
//! time, so a rerun reproduces every output byte.

mod grasp_eval;
mod place_demo;
mod push_eval;
mod recon_eval;

pub use grasp_eval::run_grasp_eval;
pub use place_demo::run_place_demo;
pub use push_eval::{run_push_episode, run_push_eval, sample_goal, PushEpisodeSetup};
pub use recon_eval::run_reconstruction_eval;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsError, RigidBodyModel, SimParams, StaticBox};
use crate::estimation::EstimationError;
use crate::geometry::{CameraIntrinsics, CameraView, Vec3};
use crate::io::{self, IoError};
use crate::planner::{CemParams, PlannerError};
use crate::recon::{ReconConfig, ReconError};
use crate::scene::{
    build_primitive, generate_view_ring, morph_mask, parse_obj, pepper_noise, render_mask,
    sample_volume_points, GroundTruthObject, PrimitiveSpec, SceneError, ViewRingParams,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Recon(#[from] ReconError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

// ---------------------------------------------------------------------------
// Seeding

/// One SplitMix64 step: the standard finalizer over `x + golden gamma`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed streams drawn from one master seed. Two rounds of
/// SplitMix64 — one over `master + stream`, one over `+ index` — give each
/// (stream, index) pair its own statistically unrelated seed while keeping
/// the whole tree reproducible from the master seed written in the report.
pub fn derived_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master.wrapping_add(stream as u64)).wrapping_add(index))
}

/// Named seed streams so different consumers of the master seed can never
/// collide.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Object = 1,
    Views = 2,
    Recon = 3,
    Trial = 4,
    Episode = 5,
    Plan = 6,
    Noise = 7,
    Goal = 8,
}

// ---------------------------------------------------------------------------
// Configuration

/// Pixel geometry of the synthetic cameras; principal point is the image
/// centre.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageSpec {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    /// Radius in pixels of the dot splatted per surface point.
    pub splat_px: f64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self { width: 256, height: 256, fx: 450.0, fy: 450.0, splat_px: 2.5 }
    }
}

impl ImageSpec {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
            width: self.width,
            height: self.height,
        }
    }
}

/// Mask corruption applied after rendering: foreground dropout then
/// morphology.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Probability that a foreground pixel drops out.
    pub pepper_rate: f64,
    /// Dilate (> 0) or erode (< 0) the silhouette by this many pixels.
    pub morph_px: i32,
}

/// An object in a suite, by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedObject {
    pub name: String,
    #[serde(flatten)]
    pub spec: PrimitiveSpec,
}

/// The scene side of an experiment: which objects exist, how they are
/// photographed, and how the masks are corrupted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSet {
    /// Primitive objects, evaluated in order.
    pub objects: Vec<NamedObject>,
    /// Directory of watertight `.obj` meshes to append, in filename order.
    pub obj_dir: Option<PathBuf>,
    pub views: ViewRingParams,
    pub image: ImageSpec,
    pub noise: Option<NoiseSpec>,
    /// Friction coefficient of every ground-truth body.
    pub friction: f64,
}

impl Default for SceneSet {
    fn default() -> Self {
        Self {
            objects: Vec::new(),
            obj_dir: None,
            views: ViewRingParams::default(),
            image: ImageSpec::default(),
            noise: None,
            friction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Reconstruct,
    Grasp,
    Push,
    Place,
    FullDemo,
}

/// Closed-loop episode knobs (push and place tasks).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSettings {
    /// Hard cap on executed pushes per episode.
    pub max_steps: usize,
    /// Fresh observation views per step: one top-down plus this many minus
    /// one side cameras.
    pub obs_views: usize,
    /// Update the centre-of-mass belief from observed push outcomes; frozen
    /// when false (the ablation baseline).
    pub com_update: bool,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        Self { max_steps: 25, obs_views: 3, com_update: true }
    }
}

/// Placing-demo geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaceSettings {
    /// The stand the object must end up resting on.
    pub stand: StaticBox,
    /// Place at the geometric centroid instead of the estimated mass centre
    /// (the ablation arm).
    pub place_at_centroid: bool,
}

impl Default for PlaceSettings {
    fn default() -> Self {
        Self {
            stand: StaticBox { min: [0.18, -0.02, 0.0], max: [0.22, 0.02, 0.05] },
            place_at_centroid: false,
        }
    }
}

/// Everything a suite run needs; serializable so the exact configuration can
/// be hashed into its reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scene: SceneSet,
    pub recon: ReconConfig,
    pub sim: SimParams,
    pub cem: CemParams,
    pub task: Task,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub episode: EpisodeSettings,
    pub place: PlaceSettings,
    /// When set, the masks of this trial index are destroyed before
    /// reconstruction — an injected perception failure the suite must absorb.
    pub corrupt_trial: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneSet::default(),
            recon: ReconConfig::default(),
            sim: SimParams::default(),
            cem: CemParams::default(),
            task: Task::Reconstruct,
            trials: 1,
            seed: 0,
            output_dir: PathBuf::from("out"),
            episode: EpisodeSettings::default(),
            place: PlaceSettings::default(),
            corrupt_trial: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let cfg: Self = io::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.episode.max_steps < 1 || self.episode.obs_views < 1 {
            return Err(HarnessError::Config(
                "episode needs at least 1 step and 1 observation view".into(),
            ));
        }
        Ok(())
    }

    /// Create the output directory and return it.
    pub fn ensure_output_dir(&self) -> Result<&Path, HarnessError> {
        fs::create_dir_all(&self.output_dir).map_err(|source| IoError::File {
            path: self.output_dir.clone(),
            source,
        })?;
        Ok(&self.output_dir)
    }
}

// ---------------------------------------------------------------------------
// Reports

/// One trial or episode inside a suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub task: Task,
    pub name: String,
    pub success: bool,
    pub steps_used: usize,
    /// Scalar outcomes, ordered by key so serialization is stable.
    pub metrics: BTreeMap<String, f64>,
    /// Files this episode wrote, relative to the suite output directory.
    pub artifacts: Vec<String>,
    /// Why the episode ended early, when it did.
    pub error: Option<String>,
}

impl EpisodeReport {
    pub fn new(task: Task, name: impl Into<String>) -> Self {
        Self {
            task,
            name: name.into(),
            success: false,
            steps_used: 0,
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
            error: None,
        }
    }
}

/// A whole suite: the config fingerprint plus every episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub task: Task,
    pub master_seed: u64,
    /// SHA-256 of the exact configuration JSON this suite ran with.
    pub config_sha256: String,
    pub episodes: Vec<EpisodeReport>,
    pub summary: BTreeMap<String, f64>,
}

impl SuiteReport {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            task: cfg.task,
            master_seed: cfg.seed,
            config_sha256: io::config_hash(cfg),
            episodes: Vec::new(),
            summary: BTreeMap::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// Voxel-IoU metric

/// Voxel size of the reconstruction-quality metric (1 cm at desk scale).
pub const IOU_VOXEL_SIZE: f64 = 0.01;
/// Dilation radius when voxelizing particle clouds: about the inter-particle
/// spacing of a 2000-particle shell, so a well-covered surface closes into a
/// solid without bridging real gaps.
pub const IOU_DILATION: f64 = 0.0045;

// ---------------------------------------------------------------------------
// Ground truth assembly

/// Resolve the suite's object list: declared primitives first, then any
/// `.obj` meshes from the configured directory in filename order. An absent
/// directory is an error; an empty resolution is a valid empty suite.
pub fn resolve_objects(
    scene: &SceneSet,
    master_seed: u64,
) -> Result<Vec<(String, GroundTruthObject)>, HarnessError> {
    let mut out = Vec::new();
    for (i, named) in scene.objects.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(master_seed, Stream::Object, i as u64));
        let gt = build_primitive(&named.spec, &mut rng)?;
        out.push((named.name.clone(), gt));
    }
    if let Some(dir) = &scene.obj_dir {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|source| IoError::File { path: dir.clone(), source })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "obj"))
            .collect();
        paths.sort();
        for (i, path) in paths.iter().enumerate() {
            let text = fs::read_to_string(path)
                .map_err(|source| IoError::File { path: path.clone(), source })?;
            let mesh = parse_obj(&text)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(
                master_seed,
                Stream::Object,
                (scene.objects.len() + i) as u64,
            ));
            let gt = GroundTruthObject::from_mesh(mesh, 6000, &mut rng)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("mesh_{i}"));
            out.push((name, gt));
        }
    }
    Ok(out)
}

/// Render the full camera ring over `surface_points`, then apply the
/// configured mask corruption. The rng drives only the noise.
pub fn render_views(
    surface_points: &[Vec3],
    scene: &SceneSet,
    noise_seed: u64,
) -> Result<Vec<CameraView>, HarnessError> {
    let intrinsics = scene.image.intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    generate_view_ring(&scene.views)
        .into_iter()
        .map(|extrinsics| {
            let mut mask =
                render_mask(surface_points, &intrinsics, &extrinsics, scene.image.splat_px)?;
            if let Some(noise) = &scene.noise {
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

/// The "real" body: volume particles of the ground-truth object carrying its
/// true mass distribution, normalized to unit total mass.
pub fn true_body(
    gt: &GroundTruthObject,
    n_particles: usize,
    friction: f64,
    seed: u64,
) -> Result<RigidBodyModel, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (positions, densities) = sample_volume_points(gt, n_particles, &mut rng);
    let total: f64 = densities.iter().sum();
    let masses = densities.iter().map(|d| d / total).collect();
    Ok(RigidBodyModel::from_positions_masses(positions, masses, friction)?)
}

/// The standard four-primitive evaluation suite: one convex box, a sphere, a
/// cylinder, and the concave L — all desk-scale and resting on the ground.
pub fn standard_objects() -> Vec<NamedObject> {
    let prim = |name: &str, kind, dims: &[f64]| NamedObject {
        name: name.into(),
        spec: PrimitiveSpec {
            kind,
            dimensions: dims.to_vec(),
            density_regions: Vec::new(),
            surface_samples: 6000,
        },
    };
    vec![
        prim("box", crate::scene::PrimitiveKind::Box, &[0.10, 0.07, 0.05]),
        prim("sphere", crate::scene::PrimitiveKind::Sphere, &[0.04]),
        prim("cylinder", crate::scene::PrimitiveKind::Cylinder, &[0.035, 0.09]),
        prim("lshape", crate::scene::PrimitiveKind::Lshape, &[0.12, 0.10, 0.03, 0.04]),
    ]
}

/// Random planar pose used to scatter grasp-eval objects: a bounded
/// translation plus free rotation.
pub fn random_planar_pose<R: Rng>(rng: &mut R, max_offset: f64) -> crate::geometry::PlanarPose {
    crate::geometry::PlanarPose {
        x: rng.gen_range(-max_offset..max_offset),
        y: rng.gen_range(-max_offset..max_offset),
        theta: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    }
}
