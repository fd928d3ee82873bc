//! On-disk dataset layout and the frame-generation driver.
//!
//! A dataset directory holds `meta.json` plus one directory per tick of the
//! base Δτ grid: `frames/<tick>/`. CSI (one `csi_rx<id>.c64` per receiver)
//! and `truth.json` exist at every tick; `image.png` only on camera ticks and
//! `points.f32` + `points.json` only on LiDAR ticks.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::camera::{render_camera, ImageArray};
use super::channel::{synth_csi, trace_paths, ArrayGeometry, ChannelConfig, PathSet};
use super::geometry::Vec3;
use super::lidar::{scan_lidar, LidarScanConfig};
use super::world::{default_world, step_world, CameraModel, Pose, SceneWorld, VehicleState, WorldConfig};
use super::SceneError;
use crate::sensing::BoundingBox;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported dataset format version {found}; this reader supports version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("blob {path} has {found} bytes, expected {expected}")]
    BlobSize {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrameMeta {
    pub tick: u64,
    pub time: f64,
    pub has_image: bool,
    pub has_points: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub seed: u64,
    /// Base grid step Δτ in seconds; CSI exists at every tick.
    pub tick_seconds: f64,
    pub image_every_ticks: u64,
    pub lidar_every_ticks: u64,
    pub receivers: Vec<u32>,
    pub array: ArrayGeometry,
    pub camera: CameraModel,
    pub lidar_pose: Pose,
    pub lidar_scan: LidarScanConfig,
    pub channel: ChannelConfig,
    pub frames: Vec<FrameMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RxTruth {
    pub position: Vec3,
    pub n_paths: usize,
    pub has_los: bool,
    pub los_azimuth: Option<f64>,
    pub strongest_gain: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameTruth {
    pub tick: u64,
    pub time: f64,
    pub vehicles: Vec<VehicleState>,
    /// Oracle detections; empty on ticks without an image.
    #[serde(default)]
    pub detections: Vec<BoundingBox>,
    pub rx: BTreeMap<u32, RxTruth>,
}

#[derive(Debug, Clone)]
pub struct SensorFrame {
    pub meta: FrameMeta,
    pub image: Option<ImageArray>,
    pub points: Option<Vec<[f64; 3]>>,
    /// Receiver id -> K x N channel matrix at this tick.
    pub csi: BTreeMap<u32, Array2<Complex64>>,
    pub truth: FrameTruth,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub frames: Vec<SensorFrame>,
    pub root: Option<PathBuf>,
}

impl Dataset {
    pub fn n_ticks(&self) -> u64 {
        self.frames.len() as u64
    }

    pub fn csi_at(&self, tick: u64, rx: u32) -> Option<&Array2<Complex64>> {
        self.frames.get(tick as usize).and_then(|f| f.csi.get(&rx))
    }
}

/// Everything needed to synthesize a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub world: WorldConfig,
    pub n_ticks: u64,
    pub tick_seconds: f64,
    pub image_every_ticks: u64,
    pub lidar_every_ticks: u64,
    pub array: ArrayGeometry,
    pub channel: ChannelConfig,
    pub lidar_scan: LidarScanConfig,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            n_ticks: 2000,
            tick_seconds: 0.005,
            image_every_ticks: 5,
            lidar_every_ticks: 10,
            array: ArrayGeometry::ula(16, 3.5e9, 5.0e7, 32),
            channel: ChannelConfig::default(),
            lidar_scan: LidarScanConfig::default(),
            seed: 0,
        }
    }
}

fn frame_truth(
    world: &SceneWorld,
    tick: u64,
    detections: Vec<BoundingBox>,
    path_sets: &BTreeMap<u32, PathSet>,
) -> FrameTruth {
    let mut rx = BTreeMap::new();
    for (id, ps) in path_sets {
        let v = world.vehicle(*id).expect("receiver exists");
        let strongest = ps
            .paths
            .iter()
            .map(|p| p.gain.norm())
            .fold(0.0f64, f64::max);
        rx.insert(
            *id,
            RxTruth {
                position: v.center,
                n_paths: ps.paths.len(),
                has_los: ps.has_los(),
                los_azimuth: ps.los().map(|p| p.azimuth),
                strongest_gain: strongest,
            },
        );
    }
    FrameTruth {
        tick,
        time: world.time,
        vehicles: world.vehicles.clone(),
        detections,
        rx,
    }
}

/// Synthesizes all frames in memory. Fully deterministic in the config.
pub fn generate(cfg: &GenConfig) -> Result<Dataset, SceneError> {
    cfg.array.validate()?;
    let mut world = default_world(&cfg.world);
    world.validate()?;
    let receivers = world.receiver_ids();
    let mut frames = Vec::with_capacity(cfg.n_ticks as usize);
    let mut frame_meta = Vec::with_capacity(cfg.n_ticks as usize);
    for tick in 0..cfg.n_ticks {
        let has_image = tick % cfg.image_every_ticks == 0;
        let has_points = tick % cfg.lidar_every_ticks == 0;
        let (image, detections) = if has_image {
            let (img, dets) = render_camera(&world, &world.camera);
            (Some(img), dets)
        } else {
            (None, Vec::new())
        };
        let points = has_points.then(|| scan_lidar(&world, &world.lidar_pose, &cfg.lidar_scan));

        let mut path_sets = BTreeMap::new();
        let mut csi = BTreeMap::new();
        for &rx in &receivers {
            let ps = trace_paths(&world, rx, &cfg.channel, &cfg.array)?;
            let h = synth_csi(&ps, &cfg.array, world.time)?;
            csi.insert(rx, h.data);
            path_sets.insert(rx, ps);
        }

        let meta = FrameMeta {
            tick,
            time: world.time,
            has_image,
            has_points,
        };
        frames.push(SensorFrame {
            meta,
            image,
            points,
            csi,
            truth: frame_truth(&world, tick, detections, &path_sets),
        });
        frame_meta.push(meta);
        if tick + 1 < cfg.n_ticks {
            world = step_world(&world, cfg.tick_seconds)?;
        }
    }
    let world0 = default_world(&cfg.world);
    Ok(Dataset {
        meta: DatasetMeta {
            format_version: FORMAT_VERSION,
            seed: cfg.seed,
            tick_seconds: cfg.tick_seconds,
            image_every_ticks: cfg.image_every_ticks,
            lidar_every_ticks: cfg.lidar_every_ticks,
            receivers,
            array: cfg.array,
            camera: world0.camera,
            lidar_pose: world0.lidar_pose,
            lidar_scan: cfg.lidar_scan,
            channel: cfg.channel,
            frames: frame_meta,
        },
        frames,
        root: None,
    })
}

// ---------------------------------------------------------------------------
// Byte-level encoders shared with the labeled-output writer.
// ---------------------------------------------------------------------------

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_image_png(path: &Path, img: &ImageArray) -> Result<(), DatasetError> {
    let (h, w, _) = img.dim();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                (img[(y, x, 0)].clamp(0.0, 1.0) * 255.0).round() as u8,
                (img[(y, x, 1)].clamp(0.0, 1.0) * 255.0).round() as u8,
                (img[(y, x, 2)].clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    let mut bytes = Vec::new();
    buf.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_image_png(path: &Path) -> Result<ImageArray, DatasetError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let rgb = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    let mut out = Array3::zeros((h as usize, w as usize, 3));
    for y in 0..h {
        for x in 0..w {
            let p = rgb.get_pixel(x, y);
            for ch in 0..3 {
                out[(y as usize, x as usize, ch)] = p.0[ch] as f64 / 255.0;
            }
        }
    }
    Ok(out)
}

/// Little-endian float32 blob, row-major.
pub fn write_f32_blob(path: &Path, values: &[f64]) -> Result<(), DatasetError> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_f32_blob(path: &Path, expected_len: Option<usize>) -> Result<Vec<f64>, DatasetError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 4 != 0 {
        return Err(DatasetError::BlobSize {
            path: path.to_path_buf(),
            expected: expected_len.map(|n| n * 4).unwrap_or(bytes.len() + 4 - bytes.len() % 4),
            found: bytes.len(),
        });
    }
    if let Some(n) = expected_len {
        if bytes.len() != n * 4 {
            return Err(DatasetError::BlobSize {
                path: path.to_path_buf(),
                expected: n * 4,
                found: bytes.len(),
            });
        }
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_csi_blob(path: &Path, h: &Array2<Complex64>) -> Result<(), DatasetError> {
    let mut flat = Vec::with_capacity(h.len() * 2);
    for v in h.iter() {
        flat.push(v.re);
        flat.push(v.im);
    }
    write_f32_blob(path, &flat)
}

fn read_csi_blob(path: &Path, k: usize, n: usize) -> Result<Array2<Complex64>, DatasetError> {
    let flat = read_f32_blob(path, Some(k * n * 2))?;
    let mut h = Array2::zeros((k, n));
    for (i, c) in flat.chunks_exact(2).enumerate() {
        h[(i / n, i % n)] = Complex64::new(c[0], c[1]);
    }
    Ok(h)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn frame_dir(root: &Path, tick: u64) -> PathBuf {
    root.join("frames").join(format!("{tick:06}"))
}

/// Writes the dataset tree. CSI and point clouds round-trip bit-exactly at
/// float32 precision; images round-trip exactly through the 8-bit PNG
/// encoding.
pub fn write_dataset(ds: &Dataset, root: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(root).map_err(io_err(root))?;
    write_json(&root.join("meta.json"), &ds.meta)?;
    for frame in &ds.frames {
        let dir = frame_dir(root, frame.meta.tick);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        if let Some(img) = &frame.image {
            write_image_png(&dir.join("image.png"), img)?;
        }
        if let Some(points) = &frame.points {
            let flat: Vec<f64> = points.iter().flatten().copied().collect();
            write_f32_blob(&dir.join("points.f32"), &flat)?;
            write_json(
                &dir.join("points.json"),
                &serde_json::json!({ "count": points.len() }),
            )?;
        }
        for (rx, h) in &frame.csi {
            write_csi_blob(&dir.join(format!("csi_rx{rx}.c64")), h)?;
        }
        write_json(&dir.join("truth.json"), &frame.truth)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct PointsJson {
    count: usize,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Reads a dataset tree written by [`write_dataset`].
pub fn read_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    let meta_path = root.join("meta.json");
    let probe: VersionProbe = read_json(&meta_path)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch {
            found: probe.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let meta: DatasetMeta = read_json(&meta_path)?;
    let k = meta.array.subcarriers;
    let n = meta.array.n_antennas();
    let mut frames = Vec::with_capacity(meta.frames.len());
    for fm in &meta.frames {
        let dir = frame_dir(root, fm.tick);
        let image = fm
            .has_image
            .then(|| read_image_png(&dir.join("image.png")))
            .transpose()?;
        let points = if fm.has_points {
            let pj: PointsJson = read_json(&dir.join("points.json"))?;
            let flat = read_f32_blob(&dir.join("points.f32"), Some(pj.count * 3))?;
            Some(
                flat.chunks_exact(3)
                    .map(|c| [c[0], c[1], c[2]])
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        };
        let mut csi = BTreeMap::new();
        for &rx in &meta.receivers {
            csi.insert(rx, read_csi_blob(&dir.join(format!("csi_rx{rx}.c64")), k, n)?);
        }
        let truth: FrameTruth = read_json(&dir.join("truth.json"))?;
        frames.push(SensorFrame {
            meta: *fm,
            image,
            points,
            csi,
            truth,
        });
    }
    Ok(Dataset {
        meta,
        frames,
        root: Some(root.to_path_buf()),
    })
}
