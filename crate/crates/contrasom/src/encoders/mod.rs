//! Spatial encoders per modality, recurrent temporal extrapolation to the
//! action tick grid, and modality fusion. All encoders are small f64
//! networks whose weights live in a [`crate::nn::ParamStore`].

mod csi_enc;
mod fusion;
mod image_enc;
mod point_enc;
mod temporal;

pub use csi_enc::{csi_to_planes, CsiEncoder, CsiEncoderConfig};
pub use fusion::{FusionConfig, FusionHead};
pub use image_enc::{ImageEncoder, ImageEncoderConfig};
pub use point_enc::{prepare_cloud, PointEncoder, PointEncoderConfig};
pub use temporal::{TemporalHead, TemporalHeadConfig};

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("wrong input shape: expected {expected}, found {found}")]
    WrongShape { expected: String, found: String },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("timestamp {t} is off the feature grid")]
    OffGridTimestamp { t: f64 },
    #[error("wrong history length: expected {expected}, found {found}")]
    WrongHistoryLength { expected: usize, found: usize },
    #[error("window {window} is not an integer multiple of the action interval {dtau}")]
    NonDivisibleWindow { window: f64, dtau: f64 },
    #[error("fusion inputs are numerically degenerate (zero norm)")]
    DegenerateFusion,
    #[error("input contains non-finite values")]
    NonFiniteInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Lidar,
    Csi,
    Fused,
}

/// A d-dimensional feature with its modality and timestamp.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub values: Array1<f64>,
    pub modality: Modality,
    pub time: f64,
}

/// Features over the prediction window [T, T+dtau, ..., T+dt_x], uniform
/// step, first entry at the latest sensing timestamp.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    pub start_time: f64,
    pub step: f64,
    pub features: Vec<Array1<f64>>,
    pub modality: Modality,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Exact-grid lookup; no interpolation.
    pub fn select_at(&self, t: f64) -> Result<&Array1<f64>, EncoderError> {
        let rel = (t - self.start_time) / self.step;
        let k = rel.round();
        if (rel - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.features.len() {
            return Err(EncoderError::OffGridTimestamp { t });
        }
        Ok(&self.features[k as usize])
    }
}

/// Sampling cadences and history lengths of the temporal model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalConfig {
    /// Image frame interval, seconds.
    pub dt_image: f64,
    /// LiDAR frame interval, seconds.
    pub dt_lidar: f64,
    /// Action-tick interval (feature grid step), seconds.
    pub dtau: f64,
    /// History length minus one for the image stream.
    pub n_image: usize,
    /// History length minus one for the LiDAR stream.
    pub n_lidar: usize,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            dt_image: 0.025,
            dt_lidar: 0.05,
            dtau: 0.005,
            n_image: 3,
            n_lidar: 3,
        }
    }
}

impl TemporalConfig {
    fn window_len(window: f64, dtau: f64) -> Result<usize, EncoderError> {
        let ratio = window / dtau;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(EncoderError::NonDivisibleWindow { window, dtau });
        }
        Ok(ratio.round() as usize + 1)
    }

    /// Number of extrapolated outputs for the image stream.
    pub fn image_outputs(&self) -> Result<usize, EncoderError> {
        Self::window_len(self.dt_image, self.dtau)
    }

    pub fn lidar_outputs(&self) -> Result<usize, EncoderError> {
        Self::window_len(self.dt_lidar, self.dtau)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        self.image_outputs()?;
        self.lidar_outputs()?;
        Ok(())
    }
}
