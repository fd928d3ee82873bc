//! Desk-scale testbed that ties multi-modal environment sensing to wireless
//! channel state through a single synthetic geometry, then measures how much
//! contrastively pre-trained sensing features help physical-layer tasks.
//!
//! The crate is organised as a pipeline:
//!
//! - [`scene`] synthesizes worlds whose camera frames, LiDAR point clouds and
//!   MISO-OFDM channels are all deterministic functions of the same geometry,
//!   and reads/writes the on-disk dataset layout.
//! - [`sensing`] turns raw frames plus a receiver position into
//!   receiver-labeled images and labeled point clouds.
//! - [`augment`] provides stochastic pixel-space image augmentation and the
//!   feature-space diffusion augmentation used for LiDAR features.
//! - [`nn`] is a small f64 reverse-mode autodiff tape with the layers needed
//!   by the encoders, plus checkpointing and a decoupled-weight-decay
//!   optimizer.
//! - [`encoders`] holds the per-frame spatial encoders, the recurrent
//!   temporal extrapolator, the CSI encoder and modality fusion.
//! - [`pretrain`] implements the contrastive objectives (symmetric InfoNCE,
//!   the triplet LiDAR objective with diffusion-augmented views) and the
//!   pre-training loop.
//! - [`phy`] contains the four physical-layer task testbeds (beam prediction,
//!   pilot channel estimation, channel interpolation, UL→DL prediction) with
//!   uniform feature-conditioning adapters and metrics.
//! - [`harness`] orchestrates experiments: splits, frozen-backbone runs,
//!   reports, variant comparison and plot emission.

pub mod augment;
pub mod encoders;
pub mod harness;
pub mod nn;
pub mod phy;
pub mod pretrain;
pub mod scene;
pub mod sensing;

pub use scene::{ArrayGeometry, CameraModel, CsiMatrix, SceneWorld, VehicleState};
