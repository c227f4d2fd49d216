//! Deterministic, seedable simulator of crowdsourced dynamic-map construction
//! over automotive edge computing.
//!
//! The crate is organized around the two planes of the system:
//!
//! * data plane: [`map`] (projection, depth, matching, fusion, the global
//!   object map) and [`mapflow`] (delta broadcast between the edge map and
//!   per-vehicle local maps);
//! * control plane: [`coverage`] (overlap graph and coverage-constrained
//!   scheduling), [`neural`] + [`rl`] (the Q-network and prioritized-replay
//!   agent), and [`control`] (the central/distributed controllers plus the
//!   comparison policies);
//! * environment: [`scenario`] (synthetic world and measurement model),
//!   [`simnet`] (tick-driven network/compute simulator), and [`experiment`]
//!   (the run/train/sweep harness and CSV metrics).
//!
//! Everything is deterministic given a master seed; see [`seeds`] for the
//! per-subsystem splitting rule.

pub mod config;
pub mod control;
pub mod coverage;
pub mod error;
pub mod experiment;
pub mod map;
pub mod mapflow;
pub mod neural;
pub mod rl;
pub mod scenario;
pub mod seeds;
pub mod simnet;

pub use error::{CoreError, Result};
pub use map::{
    CameraIntrinsics, CameraPoint, Detection, FeatureVector, GlobalMap, MapObject, PixelBox, Pose,
    WorldPoint,
};
pub use simnet::{EdgeCluster, OffloadTask, RadioModel, Simulator, VehicleSim};
