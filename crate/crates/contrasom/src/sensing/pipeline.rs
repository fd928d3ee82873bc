//! Per-receiver labeling pipeline over dataset frames: azimuth matching and
//! hue fill on the image side, ground removal + clustering + tracking +
//! labels on the LiDAR side. One labeled copy is produced per receiver.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::{
    bbox_angular_span, encode_receiver_label, match_receiver, receiver_azimuth, LabeledImage,
};
use super::points::{
    cluster_centroids, dbscan, label_points, match_cluster, remove_ground, BuildingRule,
    ClusterTracker, LabeledPointCloud, NOISE,
};
use crate::scene::dataset::{write_f32_blob, DatasetError, SensorFrame};
use crate::scene::world::CameraModel;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SensingPipelineConfig {
    pub z_thresh: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub track_gate: f64,
    pub building_rule: BuildingRule,
}

impl Default for SensingPipelineConfig {
    fn default() -> Self {
        Self {
            z_thresh: 0.2,
            dbscan_eps: 1.0,
            dbscan_min_pts: 5,
            track_gate: 2.0,
            building_rule: BuildingRule {
                axis: 1,
                threshold: 18.0,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledFrame {
    pub tick: u64,
    pub image: Option<LabeledImage>,
    pub points: Option<LabeledPointCloud>,
}

/// Labels frames for one receiver. The LiDAR side carries tracking state, so
/// frames must be fed in timestamp order; the image side is stateless.
#[derive(Debug, Clone)]
pub struct FrameLabeler {
    pub rx_id: u32,
    cfg: SensingPipelineConfig,
    tracker: ClusterTracker,
    rx_track: Option<i64>,
}

impl FrameLabeler {
    pub fn new(rx_id: u32, cfg: SensingPipelineConfig) -> Self {
        Self {
            rx_id,
            cfg,
            tracker: ClusterTracker::new(),
            rx_track: None,
        }
    }

    /// Labels an image frame. `None` when the receiver is behind the camera,
    /// undetected, or no angular span contains it (occlusion/miss).
    pub fn label_image(
        &self,
        image: &crate::scene::camera::ImageArray,
        detections: &[super::image::BoundingBox],
        camera: &CameraModel,
        rx_pos: [f64; 3],
    ) -> Option<LabeledImage> {
        let theta = receiver_azimuth(
            (camera.pose.position.x, camera.pose.position.y),
            camera.pose.yaw,
            (rx_pos[0], rx_pos[1]),
        )
        .ok()?;
        let spans: Vec<_> = detections
            .iter()
            .filter_map(|b| bbox_angular_span(b, camera).ok().map(|s| (*b, s)))
            .collect();
        let idx = match_receiver(&spans, theta)?;
        encode_receiver_label(image, &spans[idx].0, theta).ok()
    }

    /// Labels a point-cloud frame, updating the cluster tracker. `None` when
    /// no cluster could be associated with the receiver.
    pub fn label_cloud(
        &mut self,
        cloud: &[[f64; 3]],
        rx_pos: [f64; 3],
    ) -> Option<LabeledPointCloud> {
        let filt = remove_ground(cloud, self.cfg.z_thresh);
        let labels = dbscan(&filt, self.cfg.dbscan_eps, self.cfg.dbscan_min_pts);
        let cents = cluster_centroids(&filt, &labels);
        let positions: Vec<[f64; 3]> = cents.iter().map(|(_, c)| *c).collect();
        let persistent = self.tracker.update(&positions, self.cfg.track_gate);

        // Follow the tracked receiver cluster; fall back to the reported
        // receiver position when the track is new or lost.
        let rx_cluster = match self.rx_track {
            Some(tid) => persistent
                .iter()
                .position(|&p| p == tid)
                .map(|i| cents[i].0),
            None => None,
        };
        let rx_cluster = match rx_cluster {
            Some(c) => Some(c),
            None => match_cluster(&cents, rx_pos).ok(),
        };
        let rx_cluster = rx_cluster?;
        let ci = cents.iter().position(|(l, _)| *l == rx_cluster)?;
        self.rx_track = Some(persistent[ci]);
        let labeled = label_points(&filt, &labels, rx_cluster, &self.cfg.building_rule);
        if labeled.n_receiver == 0 || labeled.receiver_cluster == NOISE {
            return None;
        }
        Some(labeled)
    }

    /// Labels whatever modalities the frame carries.
    pub fn label_frame(&mut self, frame: &SensorFrame, camera: &CameraModel) -> LabeledFrame {
        let rx_pos = frame
            .truth
            .vehicles
            .iter()
            .find(|v| v.id == self.rx_id)
            .map(|v| [v.center.x, v.center.y, v.center.z]);
        let Some(rx_pos) = rx_pos else {
            return LabeledFrame {
                tick: frame.meta.tick,
                image: None,
                points: None,
            };
        };
        let image = frame.image.as_ref().and_then(|img| {
            self.label_image(img, &frame.truth.detections, camera, rx_pos)
        });
        let points = frame
            .points
            .as_ref()
            .and_then(|cloud| self.label_cloud(cloud, rx_pos));
        LabeledFrame {
            tick: frame.meta.tick,
            image,
            points,
        }
    }
}

/// Writes the labeled outputs beside the raw frame files:
/// `image_labeled.png`, `points_labeled.f32` (float32 quadruples) and a small
/// `labeled_meta.json` recording which receiver they refer to.
pub fn write_labeled_frame(
    frame_dir: &Path,
    rx_id: u32,
    labeled: &LabeledFrame,
) -> Result<(), DatasetError> {
    if let Some(img) = &labeled.image {
        crate::scene::dataset::write_image_png(&frame_dir.join("image_labeled.png"), &img.image)?;
    }
    if let Some(cloud) = &labeled.points {
        let flat: Vec<f64> = cloud.points.iter().flatten().copied().collect();
        write_f32_blob(&frame_dir.join("points_labeled.f32"), &flat)?;
    }
    let meta = serde_json::json!({
        "rx_id": rx_id,
        "tick": labeled.tick,
        "has_image": labeled.image.is_some(),
        "has_points": labeled.points.is_some(),
        "hue": labeled.image.as_ref().map(|i| i.hue),
        "receiver_points": labeled.points.as_ref().map(|p| p.n_receiver),
    });
    let path = frame_dir.join("labeled_meta.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&meta).expect("json")).map_err(|e| {
        DatasetError::Io {
            path,
            source: e,
        }
    })?;
    Ok(())
}
