//! Synthetic world generation: geometry, kinematics, camera and LiDAR
//! rendering, multipath channel synthesis, and dataset IO. Everything here is
//! a pure function of the world state, so sensing provably carries channel
//! information.

pub mod camera;
pub mod channel;
pub mod dataset;
pub mod geometry;
pub mod lidar;
pub mod world;

pub use camera::{render_camera, ImageArray};
pub use channel::{
    synth_csi, trace_paths, ArrayGeometry, ArrayKind, ChannelConfig, CsiMatrix, Path, PathKind,
    PathSet,
};
pub use dataset::{generate, read_dataset, write_dataset, Dataset, DatasetError, GenConfig};
pub use geometry::{wrap_angle, Aabb, Vec3, SPEED_OF_LIGHT};
pub use lidar::{scan_lidar, LidarScanConfig};
pub use world::{
    default_world, step_world, CameraModel, Lane, Pose, SceneWorld, VehicleState, WorldConfig,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid array geometry: {0}")]
    InvalidArray(String),
    #[error("duplicate vehicle id {0}")]
    DuplicateVehicleId(u32),
    #[error("vehicle {0} has a non-positive extent")]
    InvalidVehicle(u32),
    #[error("vehicle {0} intersects a building")]
    VehicleInsideBuilding(u32),
    #[error("step dt must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("vehicle {0} is not a known receiver")]
    UnknownReceiver(u32),
    #[error("path gains contain NaN")]
    NanGain,
}
