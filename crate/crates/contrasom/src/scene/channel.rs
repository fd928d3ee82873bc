//! Geometric multipath synthesis: line-of-sight, single-bounce image-method
//! reflections off building faces, and per-vehicle scatter paths, turned into
//! a subcarriers x antennas channel matrix.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::geometry::{wrap_angle, Aabb, Vec3, SPEED_OF_LIGHT};
use super::world::SceneWorld;
use super::SceneError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Ula,
    Upa,
}

/// Half-wavelength-spaced antenna array plus the OFDM grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub kind: ArrayKind,
    /// Horizontal element count (the full count for a ULA).
    pub n_h: usize,
    /// Vertical element count; must be 1 for a ULA.
    pub n_v: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarriers: usize,
}

impl ArrayGeometry {
    pub fn ula(n: usize, carrier_hz: f64, bandwidth_hz: f64, subcarriers: usize) -> Self {
        Self {
            kind: ArrayKind::Ula,
            n_h: n,
            n_v: 1,
            carrier_hz,
            bandwidth_hz,
            subcarriers,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Absolute frequency of subcarrier `k` (0-based): the grid is centered
    /// on the carrier, f_k = f_c + (k+1 - (K+1)/2) * df.
    pub fn subcarrier_hz(&self, k: usize) -> f64 {
        let big_k = self.subcarriers as f64;
        let df = self.bandwidth_hz / big_k;
        self.carrier_hz + ((k + 1) as f64 - (big_k + 1.0) / 2.0) * df
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.subcarriers < 2 {
            return Err(SceneError::InvalidArray("need at least 2 subcarriers".into()));
        }
        if self.n_h == 0 || self.n_v == 0 {
            return Err(SceneError::InvalidArray("zero antenna count".into()));
        }
        if self.kind == ArrayKind::Ula && self.n_v != 1 {
            return Err(SceneError::InvalidArray("ULA requires n_v = 1".into()));
        }
        if self.carrier_hz <= 0.0 || self.bandwidth_hz <= 0.0 {
            return Err(SceneError::InvalidArray("non-positive frequency".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Los,
    Reflection,
    Scatter,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex64,
    /// Propagation delay in seconds.
    pub delay: f64,
    /// Azimuth of departure relative to the array boresight, radians.
    pub azimuth: f64,
    /// Elevation of departure, radians.
    pub elevation: f64,
    pub kind: PathKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSet {
    pub rx_id: u32,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn has_los(&self) -> bool {
        self.paths.iter().any(|p| p.kind == PathKind::Los)
    }

    pub fn los(&self) -> Option<&Path> {
        self.paths.iter().find(|p| p.kind == PathKind::Los)
    }
}

/// Knobs of the geometry -> channel map.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Amplitude loss applied to single-bounce reflections.
    pub reflection_coeff: f64,
    /// Scatter amplitude is scatter_coeff * lambda / (4 pi d1 d2).
    pub scatter_coeff: f64,
    /// Scatterers farther than this from either end are dropped.
    pub scatter_range: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            reflection_coeff: 0.5,
            scatter_coeff: 0.5,
            scatter_range: 150.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsiMatrix {
    /// Subcarriers x antennas.
    pub data: Array2<Complex64>,
    pub rx_id: u32,
    pub time: f64,
}

impl CsiMatrix {
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn departure_angles(from: Vec3, to: Vec3, boresight_yaw: f64) -> (f64, f64) {
    let d = to - from;
    let az = wrap_angle(d.y.atan2(d.x) - boresight_yaw);
    let el = d.z.atan2(d.distance_xy(Vec3::ZERO).max(1e-12));
    (az, el)
}

fn segment_blocked(world: &SceneWorld, a: Vec3, b: Vec3, skip_vehicle: u32) -> bool {
    world.buildings.iter().any(|bld| bld.blocks_segment(a, b))
        || world
            .vehicles
            .iter()
            .any(|v| v.id != skip_vehicle && v.aabb().blocks_segment(a, b))
}

/// The four vertical faces of a box as (axis, plane coordinate, outward sign).
fn vertical_faces(b: &Aabb) -> [(usize, f64, f64); 4] {
    [
        (0, b.min.x, -1.0),
        (0, b.max.x, 1.0),
        (1, b.min.y, -1.0),
        (1, b.max.y, 1.0),
    ]
}

fn axis_coord(p: Vec3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn mirror_across(p: Vec3, axis: usize, plane: f64) -> Vec3 {
    let mut m = p;
    match axis {
        0 => m.x = 2.0 * plane - p.x,
        1 => m.y = 2.0 * plane - p.y,
        _ => m.z = 2.0 * plane - p.z,
    }
    m
}

/// Traces deterministic propagation paths from the base station array to the
/// antenna of receiver `rx_id`. The array supplies the carrier wavelength
/// that scales the free-space gains.
pub fn trace_paths(
    world: &SceneWorld,
    rx_id: u32,
    cfg: &ChannelConfig,
    array: &ArrayGeometry,
) -> Result<PathSet, SceneError> {
    trace_paths_with_lambda(world, rx_id, cfg, array.wavelength())
}

/// Traces paths using an explicit wavelength for the free-space gain scale.
pub fn trace_paths_with_lambda(
    world: &SceneWorld,
    rx_id: u32,
    cfg: &ChannelConfig,
    lambda: f64,
) -> Result<PathSet, SceneError> {
    let rx = world
        .vehicle(rx_id)
        .filter(|v| v.is_receiver)
        .ok_or(SceneError::UnknownReceiver(rx_id))?;
    let bs = world.bs_pose.position;
    let yaw = world.bs_pose.yaw;
    let rx_p = rx.antenna();
    let mut paths = Vec::new();

    // Line of sight.
    if !segment_blocked(world, bs, rx_p, rx_id) {
        let d = bs.distance(rx_p);
        let (az, el) = departure_angles(bs, rx_p, yaw);
        paths.push(Path {
            gain: Complex64::new(lambda / (4.0 * std::f64::consts::PI * d), 0.0),
            delay: d / SPEED_OF_LIGHT,
            azimuth: az,
            elevation: el,
            kind: PathKind::Los,
        });
    }

    // One image-method reflection per building face visible to both ends.
    for (bi, bld) in world.buildings.iter().enumerate() {
        for (axis, plane, outward) in vertical_faces(bld) {
            // Both endpoints must sit on the outward side of the face.
            if (axis_coord(bs, axis) - plane) * outward <= 0.0
                || (axis_coord(rx_p, axis) - plane) * outward <= 0.0
            {
                continue;
            }
            let image = mirror_across(bs, axis, plane);
            let dir = rx_p - image;
            let denom = axis_coord(dir, axis);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = (plane - axis_coord(image, axis)) / denom;
            if !(0.0..=1.0).contains(&t) {
                continue;
            }
            let q = image + dir * t;
            // Reflection point must lie within the face rectangle.
            let inside = match axis {
                0 => {
                    q.y >= bld.min.y && q.y <= bld.max.y && q.z >= bld.min.z && q.z <= bld.max.z
                }
                _ => {
                    q.x >= bld.min.x && q.x <= bld.max.x && q.z >= bld.min.z && q.z <= bld.max.z
                }
            };
            if !inside {
                continue;
            }
            // Both legs must be clear of other geometry.
            let blocked_by_other = world.buildings.iter().enumerate().any(|(oi, o)| {
                oi != bi && (o.blocks_segment(bs, q) || o.blocks_segment(q, rx_p))
            }) || world.vehicles.iter().any(|v| {
                v.id != rx_id && (v.aabb().blocks_segment(bs, q) || v.aabb().blocks_segment(q, rx_p))
            });
            if blocked_by_other {
                continue;
            }
            let d1 = bs.distance(q);
            let d2 = q.distance(rx_p);
            let (az, el) = departure_angles(bs, q, yaw);
            paths.push(Path {
                gain: Complex64::new(
                    cfg.reflection_coeff * lambda / (4.0 * std::f64::consts::PI * (d1 + d2)),
                    0.0,
                ),
                delay: (d1 + d2) / SPEED_OF_LIGHT,
                azimuth: az,
                elevation: el,
                kind: PathKind::Reflection,
            });
        }
    }

    // One scatter path per non-receiver vehicle within range.
    for v in &world.vehicles {
        if v.id == rx_id || v.is_receiver {
            continue;
        }
        let s = v.center;
        let d1 = bs.distance(s);
        let d2 = s.distance(rx_p);
        if d1 > cfg.scatter_range || d2 > cfg.scatter_range {
            continue;
        }
        let (az, el) = departure_angles(bs, s, yaw);
        paths.push(Path {
            gain: Complex64::new(
                cfg.scatter_coeff * lambda / (4.0 * std::f64::consts::PI * d1 * d2),
                0.0,
            ),
            delay: (d1 + d2) / SPEED_OF_LIGHT,
            azimuth: az,
            elevation: el,
            kind: PathKind::Scatter,
        });
    }

    Ok(PathSet {
        rx_id,
        paths,
    })
}

fn steering_phase(array: &ArrayGeometry, n: usize, azimuth: f64, elevation: f64) -> f64 {
    match array.kind {
        ArrayKind::Ula => std::f64::consts::PI * n as f64 * azimuth.sin(),
        ArrayKind::Upa => {
            let nh = n % array.n_h;
            let nv = n / array.n_h;
            std::f64::consts::PI
                * (nh as f64 * azimuth.sin() * elevation.cos() + nv as f64 * elevation.sin())
        }
    }
}

/// H[k, n] = sum_p gain_p * a_n(az_p, el_p) * exp(-j 2 pi f_k tau_p).
pub fn synth_csi(
    paths: &PathSet,
    array: &ArrayGeometry,
    time: f64,
) -> Result<CsiMatrix, SceneError> {
    array.validate()?;
    if paths
        .paths
        .iter()
        .any(|p| !p.gain.re.is_finite() || !p.gain.im.is_finite())
    {
        return Err(SceneError::NanGain);
    }
    let k = array.subcarriers;
    let n = array.n_antennas();
    let mut h = Array2::<Complex64>::zeros((k, n));
    for p in &paths.paths {
        for ki in 0..k {
            let delay_phase = -2.0 * std::f64::consts::PI * array.subcarrier_hz(ki) * p.delay;
            let delay_term = Complex64::from_polar(1.0, delay_phase);
            for ni in 0..n {
                let a = Complex64::from_polar(1.0, steering_phase(array, ni, p.azimuth, p.elevation));
                h[(ki, ni)] += p.gain * a * delay_term;
            }
        }
    }
    Ok(CsiMatrix {
        data: h,
        rx_id: paths.rx_id,
        time,
    })
}
