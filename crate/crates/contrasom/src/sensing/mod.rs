//! Unified environment-sensing processing: receiver/bounding-box matching and
//! angular hue labeling for images, ground removal + clustering + tracking +
//! point labeling for LiDAR.

mod image;
mod pipeline;
mod points;

pub use image::{
    bbox_angular_span, decode_receiver_hue, encode_receiver_label, hue_from_azimuth,
    hue_to_rgb_u8, match_receiver, receiver_azimuth, AngularSpan, BoundingBox, LabeledImage,
};
pub use pipeline::{write_labeled_frame, FrameLabeler, LabeledFrame, SensingPipelineConfig};
pub use points::{
    cluster_centroids, dbscan, dbscan_reference, label_points, match_cluster, remove_ground,
    track_clusters, BuildingRule, ClusterTracker, LabeledPointCloud, PointLabel,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("degenerate bounding box (non-positive width)")]
    DegenerateBox,
    #[error("camera and receiver positions coincide")]
    CoincidentPositions,
    #[error("bounding box outside image bounds")]
    BoxOutsideImage,
    #[error("labeled region is not a uniform encoded fill")]
    NonUniformRegion,
    #[error("region color is not a receiver-label color")]
    UnknownLabelColor,
    #[error("no clusters to match against")]
    NoClusters,
    #[error("empty region")]
    EmptyRegion,
}
