//! Flat-shaded box renderer with oracle detections.
//!
//! The renderer plays the role of an object detector at desk scale: it draws
//! vehicles and buildings as filled rectangles and emits ground-truth
//! normalized bounding boxes whose track ids are the vehicle ids. Downstream
//! code only consumes bounding boxes and filled label colors, so silhouettes
//! are deliberately coarse.

use ndarray::Array3;

use super::geometry::{wrap_angle, Aabb, Vec3};
use super::world::{CameraModel, SceneWorld};
use crate::sensing::BoundingBox;

/// H x W x 3 image with channel values in [0, 1].
pub type ImageArray = Array3<f64>;

pub const SKY_COLOR: [u8; 3] = [170, 205, 225];
pub const GROUND_COLOR: [u8; 3] = [96, 96, 96];
pub const BUILDING_COLOR: [u8; 3] = [70, 62, 58];

/// Muted vehicle palette. These colors are deliberately desaturated so they
/// can never collide with the fully saturated receiver-label colors.
const VEHICLE_PALETTE: [[u8; 3]; 6] = [
    [140, 150, 165],
    [165, 140, 140],
    [140, 165, 140],
    [160, 160, 130],
    [135, 150, 150],
    [150, 135, 160],
];

pub fn vehicle_color(id: u32) -> [u8; 3] {
    VEHICLE_PALETTE[id as usize % VEHICLE_PALETTE.len()]
}

fn set_px(img: &mut ImageArray, y: usize, x: usize, c: [u8; 3]) {
    for ch in 0..3 {
        img[(y, x, ch)] = c[ch] as f64 / 255.0;
    }
}

/// Pixel-space rectangle, half-open on both axes.
#[derive(Debug, Clone, Copy)]
struct PxRect {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl PxRect {
    fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }
}

struct Projected {
    rect: PxRect,
    depth: f64,
    color: [u8; 3],
    vehicle_id: Option<u32>,
}

/// Projects a world point. Returns (u, v, forward-depth); `None` when the
/// point is not strictly in front of the camera.
fn project_point(cam: &CameraModel, p: Vec3) -> Option<(f64, f64, f64)> {
    let d = p - cam.pose.position;
    let theta = wrap_angle(d.y.atan2(d.x) - cam.pose.yaw);
    if theta.abs() >= std::f64::consts::FRAC_PI_2 - 1e-9 {
        return None;
    }
    let dist_xy = (d.x * d.x + d.y * d.y).sqrt();
    let forward = theta.cos() * dist_xy;
    if forward < 0.05 {
        return None;
    }
    let u = cam.c_x + cam.f_x * theta.tan();
    let c_y = cam.height as f64 / 2.0;
    let v = c_y - cam.f_x * d.z / forward;
    Some((u, v, forward))
}

fn aabb_corners(b: &Aabb) -> [Vec3; 8] {
    let (mn, mx) = (b.min, b.max);
    [
        Vec3::new(mn.x, mn.y, mn.z),
        Vec3::new(mx.x, mn.y, mn.z),
        Vec3::new(mn.x, mx.y, mn.z),
        Vec3::new(mx.x, mx.y, mn.z),
        Vec3::new(mn.x, mn.y, mx.z),
        Vec3::new(mx.x, mn.y, mx.z),
        Vec3::new(mn.x, mx.y, mx.z),
        Vec3::new(mx.x, mx.y, mx.z),
    ]
}

/// Bounding rectangle of the projected box, clipped to the image. Requires
/// every corner to sit in front of the camera.
fn project_box(cam: &CameraModel, b: &Aabb) -> Option<(PxRect, f64)> {
    let mut u_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    let mut depth = f64::INFINITY;
    for c in aabb_corners(b) {
        let (u, v, fwd) = project_point(cam, c)?;
        u_min = u_min.min(u);
        u_max = u_max.max(u);
        v_min = v_min.min(v);
        v_max = v_max.max(v);
        depth = depth.min(fwd);
    }
    let (w, h) = (cam.width as f64, cam.height as f64);
    let rect = PxRect {
        x0: u_min.max(0.0).floor() as usize,
        x1: (u_max.min(w).ceil() as usize).min(cam.width),
        y0: v_min.max(0.0).floor() as usize,
        y1: (v_max.min(h).ceil() as usize).min(cam.height),
    };
    if u_max <= 0.0 || u_min >= w || v_max <= 0.0 || v_min >= h || rect.is_empty() {
        return None;
    }
    Some((rect, depth))
}

/// A vehicle counts as visible when at least one probe point (center plus
/// corners) has an unobstructed segment to the camera.
fn vehicle_visible(world: &SceneWorld, cam: &CameraModel, vid: u32) -> bool {
    let v = match world.vehicle(vid) {
        Some(v) => v,
        None => return false,
    };
    let mut probes = vec![v.center];
    probes.extend(aabb_corners(&v.aabb()));
    let origin = cam.pose.position;
    'probe: for p in probes {
        for b in &world.buildings {
            if b.blocks_segment(origin, p) {
                continue 'probe;
            }
        }
        for other in &world.vehicles {
            if other.id != vid && other.aabb().blocks_segment(origin, p) {
                continue 'probe;
            }
        }
        return true;
    }
    false
}

/// Renders the world from `camera` and returns the image together with the
/// oracle detections (normalized boxes, track id = vehicle id). Vehicles that
/// are outside the field of view or fully occluded are not reported.
pub fn render_camera(world: &SceneWorld, camera: &CameraModel) -> (ImageArray, Vec<BoundingBox>) {
    let (h, w) = (camera.height, camera.width);
    let mut img = Array3::zeros((h, w, 3));
    let c_y = h / 2;
    for y in 0..h {
        let c = if y < c_y { SKY_COLOR } else { GROUND_COLOR };
        for x in 0..w {
            set_px(&mut img, y, x, c);
        }
    }

    let mut drawables: Vec<Projected> = Vec::new();
    for b in &world.buildings {
        if let Some((rect, depth)) = project_box(camera, b) {
            drawables.push(Projected {
                rect,
                depth,
                color: BUILDING_COLOR,
                vehicle_id: None,
            });
        }
    }
    for v in &world.vehicles {
        if let Some((rect, depth)) = project_box(camera, &v.aabb()) {
            drawables.push(Projected {
                rect,
                depth,
                color: vehicle_color(v.id),
                vehicle_id: Some(v.id),
            });
        }
    }
    // Painter's algorithm: far to near.
    drawables.sort_by(|a, b| b.depth.total_cmp(&a.depth));
    for d in &drawables {
        for y in d.rect.y0..d.rect.y1 {
            for x in d.rect.x0..d.rect.x1 {
                set_px(&mut img, y, x, d.color);
            }
        }
    }

    let mut detections = Vec::new();
    for d in &drawables {
        let Some(vid) = d.vehicle_id else { continue };
        if !vehicle_visible(world, camera, vid) {
            continue;
        }
        let (wf, hf) = (w as f64, h as f64);
        let (x0, x1) = (d.rect.x0 as f64, d.rect.x1 as f64);
        let (y0, y1) = (d.rect.y0 as f64, d.rect.y1 as f64);
        detections.push(BoundingBox {
            x_c: (x0 + x1) / 2.0 / wf,
            y_c: (y0 + y1) / 2.0 / hf,
            w: (x1 - x0) / wf,
            h: (y1 - y0) / hf,
            track_id: vid as i64,
        });
    }
    detections.sort_by_key(|b| b.track_id);
    (img, detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::world::{default_world, Pose, VehicleState, WorldConfig};

    fn test_world() -> SceneWorld {
        let mut w = default_world(&WorldConfig::default());
        w.buildings.clear();
        w.vehicles.clear();
        w
    }

    fn cam_at_origin() -> CameraModel {
        CameraModel {
            f_x: 32.0,
            c_x: 32.0,
            width: 64,
            height: 64,
            pose: Pose {
                position: Vec3::new(0.0, 0.0, 1.0),
                yaw: std::f64::consts::FRAC_PI_2,
            },
            frame_interval: 0.025,
        }
    }

    #[test]
    fn centered_vehicle_detected_at_image_center() {
        let mut w = test_world();
        let cam = cam_at_origin();
        w.camera = cam;
        w.vehicles.push(VehicleState {
            id: 1,
            center: Vec3::new(0.0, 20.0, 1.0),
            extent: Vec3::new(2.0, 2.0, 2.0),
            velocity: Vec3::ZERO,
            is_receiver: true,
        });
        let (_, dets) = render_camera(&w, &cam);
        assert_eq!(dets.len(), 1);
        assert!((dets[0].x_c - 0.5).abs() <= 1.0 / 64.0);
        assert_eq!(dets[0].track_id, 1);
    }

    #[test]
    fn occluded_vehicle_not_detected() {
        let mut w = test_world();
        let cam = cam_at_origin();
        w.camera = cam;
        w.vehicles.push(VehicleState {
            id: 1,
            center: Vec3::new(0.0, 30.0, 1.0),
            extent: Vec3::new(2.0, 2.0, 2.0),
            velocity: Vec3::ZERO,
            is_receiver: true,
        });
        // Wall much larger than the vehicle, directly between camera and it.
        w.buildings.push(Aabb::new(
            Vec3::new(-20.0, 14.0, 0.0),
            Vec3::new(20.0, 16.0, 20.0),
        ));
        let (_, dets) = render_camera(&w, &cam);
        assert!(dets.is_empty());
    }

    #[test]
    fn vehicle_outside_fov_not_detected() {
        let mut w = test_world();
        let cam = cam_at_origin();
        w.camera = cam;
        // Azimuth ~ 80 degrees off boresight, beyond the ~45 degree half FOV.
        w.vehicles.push(VehicleState {
            id: 1,
            center: Vec3::new(30.0, 5.0, 1.0),
            extent: Vec3::new(2.0, 2.0, 2.0),
            velocity: Vec3::ZERO,
            is_receiver: true,
        });
        let (_, dets) = render_camera(&w, &cam);
        assert!(dets.is_empty());
    }

    #[test]
    fn default_world_receivers_detected_over_episode() {
        let mut w = default_world(&WorldConfig::default());
        let cam = w.camera;
        let mut seen = 0usize;
        let mut total = 0usize;
        for _ in 0..40 {
            let (_, dets) = render_camera(&w, &cam);
            for rx in w.receiver_ids() {
                total += 1;
                if dets.iter().any(|d| d.track_id == rx as i64) {
                    seen += 1;
                }
            }
            w = crate::scene::world::step_world(&w, 0.25).unwrap();
        }
        // Receivers should be visible in the vast majority of frames.
        assert!(seen as f64 >= 0.8 * total as f64, "{seen}/{total}");
    }
}
