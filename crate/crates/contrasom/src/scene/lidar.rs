//! Spinning LiDAR simulator: one ray per (azimuth, elevation) cell, first-hit
//! semantics against vehicles, buildings and the ground plane z = 0.

use serde::{Deserialize, Serialize};

use super::geometry::Vec3;
use super::world::{Pose, SceneWorld};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LidarScanConfig {
    pub n_azimuth: usize,
    pub n_elevation: usize,
    /// Elevation sweep in radians, inclusive endpoints.
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub max_range: f64,
}

impl Default for LidarScanConfig {
    fn default() -> Self {
        Self {
            n_azimuth: 480,
            n_elevation: 16,
            elevation_min: -0.15,
            elevation_max: 0.03,
            max_range: 120.0,
        }
    }
}

impl LidarScanConfig {
    fn elevation(&self, i: usize) -> f64 {
        if self.n_elevation <= 1 {
            (self.elevation_min + self.elevation_max) / 2.0
        } else {
            self.elevation_min
                + i as f64 * (self.elevation_max - self.elevation_min)
                    / (self.n_elevation - 1) as f64
        }
    }
}

/// Casts the full scan pattern from `pose` and returns world-frame hit
/// points. Rays that hit nothing within `max_range` are omitted. The first
/// azimuth ray points along the sensor yaw; azimuth increases
/// counter-clockwise.
pub fn scan_lidar(world: &SceneWorld, pose: &Pose, cfg: &LidarScanConfig) -> Vec<[f64; 3]> {
    assert!(cfg.n_azimuth >= 1 && cfg.n_elevation >= 1, "ray counts >= 1");
    let mut pts = Vec::new();
    let origin = pose.position;
    for ia in 0..cfg.n_azimuth {
        let az = pose.yaw + ia as f64 * std::f64::consts::TAU / cfg.n_azimuth as f64;
        for ie in 0..cfg.n_elevation {
            let el = cfg.elevation(ie);
            let dir = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let mut best = cfg.max_range;
            let mut hit = false;
            for b in &world.buildings {
                if let Some(t) = b.ray_hit(origin, dir, 1e-6, best) {
                    best = t;
                    hit = true;
                }
            }
            for v in &world.vehicles {
                if let Some(t) = v.aabb().ray_hit(origin, dir, 1e-6, best) {
                    best = t;
                    hit = true;
                }
            }
            if dir.z < -1e-12 {
                let t = -origin.z / dir.z;
                if t > 1e-6 && t < best {
                    best = t;
                    hit = true;
                }
            }
            if hit {
                let p = origin + dir * best;
                pts.push([p.x, p.y, p.z]);
            }
        }
    }
    pts
}
