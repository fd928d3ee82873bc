//! World state: base station, sensors, buildings, vehicles and their
//! constant-velocity kinematics.

use serde::{Deserialize, Serialize};

use super::geometry::{Aabb, Vec3};
use super::SceneError;

/// Position plus yaw; used for the base station, camera and LiDAR mounts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    /// Yaw in radians, measured counter-clockwise from +x in the xy-plane.
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub center: Vec3,
    /// (length, width, height) in meters; axis-aligned.
    pub extent: Vec3,
    pub velocity: Vec3,
    pub is_receiver: bool,
}

impl VehicleState {
    pub fn aabb(&self) -> Aabb {
        Aabb::from_center_extent(self.center, self.extent)
    }

    /// Receiver vehicles carry exactly one antenna point at their center.
    pub fn antenna(&self) -> Vec3 {
        self.center
    }
}

/// Pinhole camera with square pixels and the principal point on the row
/// c_y = height/2. The camera looks along its yaw direction in the xy-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub f_x: f64,
    /// Principal point offset along x, pixels.
    pub c_x: f64,
    pub width: usize,
    pub height: usize,
    pub pose: Pose,
    /// Frame interval in seconds (default 1/40 s).
    pub frame_interval: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.f_x <= 0.0 {
            return Err(SceneError::InvalidCamera("f_x must be positive".into()));
        }
        if self.c_x < 0.0 || self.c_x >= self.width as f64 {
            return Err(SceneError::InvalidCamera("c_x outside image".into()));
        }
        if self.frame_interval <= 0.0 {
            return Err(SceneError::InvalidCamera(
                "frame interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A straight lane segment with a speed limit; vehicles are spawned on lanes
/// and then move with constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub start: Vec3,
    pub end: Vec3,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneWorld {
    pub bs_pose: Pose,
    pub camera: CameraModel,
    pub lidar_pose: Pose,
    pub buildings: Vec<Aabb>,
    pub vehicles: Vec<VehicleState>,
    pub lanes: Vec<Lane>,
    /// World time in seconds, non-decreasing across steps.
    pub time: f64,
}

impl SceneWorld {
    /// Checks the structural invariants: unique vehicle ids, strictly
    /// positive extents, no vehicle/building overlap.
    pub fn validate(&self) -> Result<(), SceneError> {
        self.camera.validate()?;
        let mut seen = std::collections::HashSet::new();
        for v in &self.vehicles {
            if !seen.insert(v.id) {
                return Err(SceneError::DuplicateVehicleId(v.id));
            }
            if v.extent.x <= 0.0 || v.extent.y <= 0.0 || v.extent.z <= 0.0 {
                return Err(SceneError::InvalidVehicle(v.id));
            }
            for b in &self.buildings {
                if v.aabb().intersects(b) {
                    return Err(SceneError::VehicleInsideBuilding(v.id));
                }
            }
        }
        Ok(())
    }

    pub fn receiver_ids(&self) -> Vec<u32> {
        self.vehicles
            .iter()
            .filter(|v| v.is_receiver)
            .map(|v| v.id)
            .collect()
    }

    pub fn vehicle(&self, id: u32) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }
}

/// Advance every vehicle by `velocity * dt` and the clock by `dt`.
pub fn step_world(world: &SceneWorld, dt: f64) -> Result<SceneWorld, SceneError> {
    if !(dt > 0.0) {
        return Err(SceneError::NonPositiveStep(dt));
    }
    let mut next = world.clone();
    for v in &mut next.vehicles {
        v.center = v.center + v.velocity * dt;
    }
    next.time += dt;
    Ok(next)
}

/// Parameters of the bundled desk-scale intersection world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub focal_px: f64,
    pub camera_height: f64,
    pub bs_height: f64,
    /// 1 or 2 receiver vehicles.
    pub n_receivers: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            image_width: 64,
            image_height: 64,
            focal_px: 32.0,
            camera_height: 6.0,
            bs_height: 8.0,
            n_receivers: 2,
        }
    }
}

/// Builds the default intersection: a two-way east-west road, a crossing
/// south-north lane, two buildings set back from the road, camera and base
/// station co-located on a mast south of the intersection looking north (+y).
///
/// Receivers (ids 1 and 3) drive the east-west road so their azimuth sweeps
/// most of the camera field of view over a 10 s episode; the two other
/// vehicles cross in front and act as scatterers and occasional occluders.
pub fn default_world(cfg: &WorldConfig) -> SceneWorld {
    let mast_xy = (0.0, -25.0);
    let yaw = std::f64::consts::FRAC_PI_2; // facing +y
    let camera = CameraModel {
        f_x: cfg.focal_px,
        c_x: cfg.image_width as f64 / 2.0,
        width: cfg.image_width,
        height: cfg.image_height,
        pose: Pose {
            position: Vec3::new(mast_xy.0, mast_xy.1, cfg.camera_height),
            yaw,
        },
        frame_interval: 1.0 / 40.0,
    };

    let lanes = vec![
        Lane {
            start: Vec3::new(-60.0, 6.0, 0.0),
            end: Vec3::new(60.0, 6.0, 0.0),
            speed_limit: 10.0,
        },
        Lane {
            start: Vec3::new(60.0, 10.0, 0.0),
            end: Vec3::new(-60.0, 10.0, 0.0),
            speed_limit: 10.0,
        },
        Lane {
            start: Vec3::new(-4.0, -40.0, 0.0),
            end: Vec3::new(-4.0, 60.0, 0.0),
            speed_limit: 8.0,
        },
    ];

    let buildings = vec![
        Aabb::new(Vec3::new(14.0, 20.0, 0.0), Vec3::new(34.0, 38.0, 12.0)),
        Aabb::new(Vec3::new(-36.0, 22.0, 0.0), Vec3::new(-18.0, 40.0, 9.0)),
    ];

    let along_x = Vec3::new(4.6, 2.2, 2.4);
    let along_y = Vec3::new(2.2, 4.6, 2.4);
    let z0 = along_x.z / 2.0;
    let vehicles = vec![
        VehicleState {
            id: 1,
            center: Vec3::new(-26.0, 6.0, z0),
            extent: along_x,
            velocity: Vec3::new(5.0, 0.0, 0.0),
            is_receiver: cfg.n_receivers >= 1,
        },
        VehicleState {
            id: 2,
            center: Vec3::new(-4.0, -30.0, z0),
            extent: along_y,
            velocity: Vec3::new(0.0, 4.0, 0.0),
            is_receiver: false,
        },
        VehicleState {
            id: 3,
            center: Vec3::new(14.0, 10.0, z0),
            extent: along_x,
            velocity: Vec3::new(-4.0, 0.0, 0.0),
            is_receiver: cfg.n_receivers >= 2,
        },
        VehicleState {
            id: 4,
            center: Vec3::new(-4.0, -14.0, z0),
            extent: along_y,
            velocity: Vec3::new(0.0, 4.0, 0.0),
            is_receiver: false,
        },
    ];

    let world = SceneWorld {
        bs_pose: Pose {
            position: Vec3::new(mast_xy.0, mast_xy.1, cfg.bs_height),
            yaw,
        },
        camera,
        lidar_pose: Pose {
            position: Vec3::new(mast_xy.0, mast_xy.1, 2.0),
            yaw,
        },
        buildings,
        vehicles,
        lanes,
        time: 0.0,
    };
    debug_assert!(world.validate().is_ok());
    world
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_vehicle_world() -> SceneWorld {
        let mut w = default_world(&WorldConfig::default());
        w.vehicles = vec![VehicleState {
            id: 7,
            center: Vec3::ZERO,
            extent: Vec3::new(1.0, 1.0, 1.0),
            velocity: Vec3::new(10.0, 0.0, 0.0),
            is_receiver: true,
        }];
        w.buildings.clear();
        w
    }

    #[test]
    fn step_advances_by_velocity() {
        let w = one_vehicle_world();
        let w2 = step_world(&w, 0.1).unwrap();
        assert_eq!(w2.vehicles[0].center, Vec3::new(1.0, 0.0, 0.0));
        assert!(w2.vehicles[0].is_receiver);
        assert!((w2.time - w.time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_step_rejected() {
        let w = one_vehicle_world();
        assert!(step_world(&w, 0.0).is_err());
        assert!(step_world(&w, -0.5).is_err());
    }

    #[test]
    fn two_half_steps_equal_one_full_step() {
        let w = one_vehicle_world();
        let a = step_world(&step_world(&w, 0.05).unwrap(), 0.05).unwrap();
        let b = step_world(&w, 0.1).unwrap();
        assert!(a.vehicles[0].center.distance(b.vehicles[0].center) < 1e-12);
    }

    #[test]
    fn default_world_is_valid_over_horizon() {
        let mut w = default_world(&WorldConfig::default());
        w.validate().unwrap();
        for _ in 0..100 {
            w = step_world(&w, 0.1).unwrap();
            w.validate().unwrap();
        }
    }

    #[test]
    fn default_world_has_expected_receivers() {
        let w = default_world(&WorldConfig::default());
        assert_eq!(w.receiver_ids(), vec![1, 3]);
        let one = default_world(&WorldConfig {
            n_receivers: 1,
            ..WorldConfig::default()
        });
        assert_eq!(one.receiver_ids(), vec![1]);
    }
}
