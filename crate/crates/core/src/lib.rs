//! Desk-scale object manipulation with particle models.
//!
//! The crate covers the full loop from perception to action:
//!
//! 1. **Silhouette reconstruction** — recover a particle cloud for an unknown
//!    rigid object from calibrated binary masks by descending a k-nearest-
//!    neighbour Chamfer loss ([`recon`]).
//! 2. **Simulation** — a position-based rigid-body simulator over the same
//!    particle representation, with ground/tool contacts, Coulomb friction and
//!    shape matching ([`dynamics`]).
//! 3. **Planning** — cross-entropy model-predictive control for top-down
//!    grasps and planar pushes evaluated through simulated rollouts
//!    ([`planner`]).
//! 4. **Estimation** — closed-loop planar pose tracking from fresh views and
//!    centre-of-mass identification from recorded push outcomes
//!    ([`estimation`]).
//!
//! Synthetic scenes (primitive objects, camera rings, mask rendering,
//! voxel-grid IoU) live in [`scene`]; shared geometric types in [`geometry`];
//! file formats (PGM masks, PLY clouds, camera/report JSON) in [`io`];
//! experiment orchestration in [`harness`].
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release --example render_views      # camera ring + silhouette masks
//! cargo run --release --example reconstruct_box   # masks -> particle cloud -> IoU
//! cargo run --release --example chamfer_coverage  # k=1 vs k=100 on a concave scene
//! cargo run --release --example drop_and_rest     # simulator free fall + resting contact
//! cargo run --release --example grasp_cube        # grasp planning + lift verification
//! cargo run --release --example push_to_goal      # closed-loop push episode
//! cargo run --release --example estimate_com      # centre-of-mass from push outcomes
//! cargo run --release --example place_on_stand    # reconstruct, probe, grasp, place
//! ```
//!
//! The `particle-manip` binary wraps the same entry points as subcommands for
//! scripted runs (`particle-manip eval-recon --config c.json --out out --seed 7`).
//!
//! Everything is deterministic for a fixed seed: experiment runners derive
//! per-trial seeds from the master seed with a documented SplitMix64 scheme,
//! and parallel sections reduce in fixed order.

pub mod dynamics;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod planner;
pub mod recon;
pub mod scene;

pub use geometry::{
    CameraExtrinsics, CameraIntrinsics, CameraView, Mask, Particle, ParticleState, PlanarPose,
};
