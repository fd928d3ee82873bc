//! Image-side sensing: bounding-box angular spans, receiver azimuth,
//! receiver/box matching and the angular hue encoding that marks the matched
//! box in the image.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::SensingError;
use crate::scene::camera::ImageArray;
use crate::scene::geometry::wrap_angle;
use crate::scene::world::CameraModel;

/// Normalized detection box; all coordinates are fractions of the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_c: f64,
    pub y_c: f64,
    pub w: f64,
    pub h: f64,
    pub track_id: i64,
}

impl BoundingBox {
    /// Pixel-space horizontal extent (x_min, x_max).
    pub fn x_range_px(&self, image_width: usize) -> (f64, f64) {
        let w = image_width as f64;
        let xc = self.x_c * w;
        let half = self.w * w / 2.0;
        (xc - half, xc + half)
    }

    /// Pixel-space vertical extent (y_min, y_max).
    pub fn y_range_px(&self, image_height: usize) -> (f64, f64) {
        let h = image_height as f64;
        let yc = self.y_c * h;
        let half = self.h * h / 2.0;
        (yc - half, yc + half)
    }
}

/// Horizontal angular interval subtended by a box in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularSpan {
    pub theta_min: f64,
    pub theta_max: f64,
}

impl AngularSpan {
    pub fn mid(&self) -> f64 {
        (self.theta_min + self.theta_max) / 2.0
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.theta_min && theta <= self.theta_max
    }
}

/// theta_min = arctan((x_min - c_x)/f_x), theta_max = arctan((x_max - c_x)/f_x).
pub fn bbox_angular_span(
    bbox: &BoundingBox,
    cam: &CameraModel,
) -> Result<AngularSpan, SensingError> {
    if bbox.w <= 0.0 {
        return Err(SensingError::DegenerateBox);
    }
    let (x_min, x_max) = bbox.x_range_px(cam.width);
    Ok(AngularSpan {
        theta_min: ((x_min - cam.c_x) / cam.f_x).atan(),
        theta_max: ((x_max - cam.c_x) / cam.f_x).atan(),
    })
}

/// Receiver azimuth relative to the camera boresight, wrapped into (-pi, pi].
/// Uses the two-argument arctangent so receivers behind the camera resolve to
/// the correct quadrant.
pub fn receiver_azimuth(
    cam_xy: (f64, f64),
    cam_yaw: f64,
    rx_xy: (f64, f64),
) -> Result<f64, SensingError> {
    let dx = rx_xy.0 - cam_xy.0;
    let dy = rx_xy.1 - cam_xy.1;
    if dx == 0.0 && dy == 0.0 {
        return Err(SensingError::CoincidentPositions);
    }
    Ok(wrap_angle(dy.atan2(dx) - cam_yaw))
}

/// Picks the box whose span contains `theta_rec`; among multiple containing
/// boxes the one with the angular center closest to `theta_rec` wins (first
/// such box on an exact tie). Returns the index into `boxes`.
pub fn match_receiver(boxes: &[(BoundingBox, AngularSpan)], theta_rec: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, span)) in boxes.iter().enumerate() {
        if !span.contains(theta_rec) {
            continue;
        }
        let dist = (span.mid() - theta_rec).abs();
        match best {
            Some((_, d)) if dist >= d => {}
            _ => best = Some((i, dist)),
        }
    }
    best.map(|(i, _)| i)
}

/// Hue index (0..=179) for a receiver azimuth: clip to [-pi/2, pi/2],
/// normalize to [0, 1], h = floor(179 * norm).
pub fn hue_from_azimuth(theta_rec: f64) -> u8 {
    let clipped = theta_rec.clamp(-FRAC_PI_2, FRAC_PI_2);
    let norm = (clipped + FRAC_PI_2) / PI;
    ((179.0 * norm).floor() as i64).clamp(0, 179) as u8
}

/// Converts a half-degree hue index (hue in degrees = 2 h) at full saturation
/// and value to RGB, rounding half up.
pub fn hue_to_rgb_u8(h: u8) -> [u8; 3] {
    assert!(h <= 179);
    let hue_deg = 2.0 * h as f64;
    let c = 255.0;
    let hp = hue_deg / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let round = |v: f64| -> u8 { (v + 0.5).floor().clamp(0.0, 255.0) as u8 };
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [round(r), round(g), round(b)]
}

fn label_table() -> &'static [[u8; 3]; 180] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[[u8; 3]; 180]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0u8; 3]; 180];
        for (h, slot) in t.iter_mut().enumerate() {
            *slot = hue_to_rgb_u8(h as u8);
        }
        t
    })
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    /// H x W x 3 in [0, 1] with the matched box filled by the encoded color.
    pub image: ImageArray,
    pub track_id: i64,
    pub hue: u8,
    pub theta_rec: f64,
}

/// Fills the matched bounding box with the hue-encoded receiver azimuth.
pub fn encode_receiver_label(
    image: &ImageArray,
    bbox: &BoundingBox,
    theta_rec: f64,
) -> Result<LabeledImage, SensingError> {
    let (h_px, w_px, _) = image.dim();
    let (x_min, x_max) = bbox.x_range_px(w_px);
    let (y_min, y_max) = bbox.y_range_px(h_px);
    if x_min < -1e-9 || y_min < -1e-9 || x_max > w_px as f64 + 1e-9 || y_max > h_px as f64 + 1e-9 {
        return Err(SensingError::BoxOutsideImage);
    }
    let x0 = x_min.max(0.0).floor() as usize;
    let y0 = y_min.max(0.0).floor() as usize;
    let x1 = (x_max.ceil() as usize).clamp(x0 + 1, w_px);
    let y1 = (y_max.ceil() as usize).clamp(y0 + 1, h_px);

    let hue = hue_from_azimuth(theta_rec);
    let rgb = label_table()[hue as usize];
    let mut out = image.clone();
    for y in y0..y1 {
        for x in x0..x1 {
            for ch in 0..3 {
                out[(y, x, ch)] = rgb[ch] as f64 / 255.0;
            }
        }
    }
    Ok(LabeledImage {
        image: out,
        track_id: bbox.track_id,
        hue,
        theta_rec,
    })
}

/// Recovers the encoded azimuth from a uniformly filled label region given as
/// a flat list of RGB pixels in [0, 1]. Exact inverse of the 180-color table.
pub fn decode_receiver_hue(region: &[[f64; 3]]) -> Result<f64, SensingError> {
    let first = *region.first().ok_or(SensingError::EmptyRegion)?;
    if region.iter().any(|p| *p != first) {
        return Err(SensingError::NonUniformRegion);
    }
    let as_u8 = [
        (first[0] * 255.0).round() as i64,
        (first[1] * 255.0).round() as i64,
        (first[2] * 255.0).round() as i64,
    ];
    if as_u8.iter().any(|&v| !(0..=255).contains(&v))
        || as_u8
            .iter()
            .zip(first.iter())
            .any(|(&q, &v)| (v - q as f64 / 255.0).abs() > 1e-9)
    {
        return Err(SensingError::UnknownLabelColor);
    }
    let rgb = [as_u8[0] as u8, as_u8[1] as u8, as_u8[2] as u8];
    let h = label_table()
        .iter()
        .position(|c| *c == rgb)
        .ok_or(SensingError::UnknownLabelColor)?;
    Ok(PI * h as f64 / 179.0 - FRAC_PI_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::world::Pose;
    use crate::scene::geometry::Vec3;
    use ndarray::Array3;

    fn cam(f_x: f64, c_x: f64, width: usize) -> CameraModel {
        CameraModel {
            f_x,
            c_x,
            width,
            height: 64,
            pose: Pose {
                position: Vec3::ZERO,
                yaw: 0.0,
            },
            frame_interval: 0.025,
        }
    }

    fn bbox_px(x_min: f64, x_max: f64, width: usize) -> BoundingBox {
        let w = width as f64;
        BoundingBox {
            x_c: (x_min + x_max) / 2.0 / w,
            y_c: 0.5,
            w: (x_max - x_min) / w,
            h: 0.2,
            track_id: 0,
        }
    }

    #[test]
    fn span_zero_at_principal_point() {
        let c = cam(500.0, 320.0, 1024);
        let b = bbox_px(320.0, 400.0, 1024);
        let s = bbox_angular_span(&b, &c).unwrap();
        assert!(s.theta_min.abs() < 1e-12);
    }

    #[test]
    fn span_quarter_pi_at_focal_offset() {
        let c = cam(500.0, 320.0, 1024);
        let b = bbox_px(300.0, 820.0, 1024);
        let s = bbox_angular_span(&b, &c).unwrap();
        assert!((s.theta_max - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn span_monotone_in_box_shift() {
        let c = cam(500.0, 320.0, 1024);
        let mut prev = bbox_angular_span(&bbox_px(100.0, 200.0, 1024), &c).unwrap();
        for shift in 1..20 {
            let s = bbox_angular_span(
                &bbox_px(100.0 + 10.0 * shift as f64, 200.0 + 10.0 * shift as f64, 1024),
                &c,
            )
            .unwrap();
            assert!(s.theta_min > prev.theta_min && s.theta_max > prev.theta_max);
            prev = s;
        }
    }

    #[test]
    fn degenerate_box_rejected() {
        let c = cam(500.0, 320.0, 1024);
        let mut b = bbox_px(100.0, 200.0, 1024);
        b.w = 0.0;
        assert!(bbox_angular_span(&b, &c).is_err());
    }

    #[test]
    fn azimuth_quadrants() {
        let a = receiver_azimuth((0.0, 0.0), 0.0, (1.0, 1.0)).unwrap();
        assert!((a - PI / 4.0).abs() < 1e-12);
        let b = receiver_azimuth((0.0, 0.0), 0.0, (-1.0, 0.0)).unwrap();
        assert!((b - PI).abs() < 1e-12);
        let c = receiver_azimuth((0.0, 0.0), PI / 4.0, (1.0, 1.0)).unwrap();
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn azimuth_coincident_rejected() {
        assert!(receiver_azimuth((1.0, 2.0), 0.0, (1.0, 2.0)).is_err());
    }

    #[test]
    fn azimuth_frame_invariance() {
        // Rotating world and camera by a common yaw leaves the relative
        // azimuth unchanged.
        let rx = (3.0, 4.0);
        let base = receiver_azimuth((0.0, 0.0), 0.3, rx).unwrap();
        for k in 1..12 {
            let rot = k as f64 * 0.5;
            let (s, c) = rot.sin_cos();
            let rx_rot = (c * rx.0 - s * rx.1, s * rx.0 + c * rx.1);
            let a = receiver_azimuth((0.0, 0.0), 0.3 + rot, rx_rot).unwrap();
            assert!((wrap_angle(a - base)).abs() < 1e-9);
        }
    }

    fn span(a: f64, b: f64) -> (BoundingBox, AngularSpan) {
        (
            BoundingBox {
                x_c: 0.5,
                y_c: 0.5,
                w: 0.1,
                h: 0.1,
                track_id: 0,
            },
            AngularSpan {
                theta_min: a,
                theta_max: b,
            },
        )
    }

    #[test]
    fn match_containment() {
        let boxes = vec![span(-0.1, 0.1), span(0.2, 0.4)];
        assert_eq!(match_receiver(&boxes, 0.05), Some(0));
    }

    #[test]
    fn match_nearest_center_on_overlap() {
        let boxes = vec![span(-0.2, 0.2), span(0.0, 0.1)];
        assert_eq!(match_receiver(&boxes, 0.04), Some(1));
    }

    #[test]
    fn match_none_outside_all_spans() {
        let boxes = vec![span(-0.2, 0.2), span(0.3, 0.5)];
        assert_eq!(match_receiver(&boxes, 1.0), None);
    }

    #[test]
    fn hue_endpoints_and_midpoint() {
        assert_eq!(hue_from_azimuth(-FRAC_PI_2), 0);
        assert_eq!(hue_to_rgb_u8(0), [255, 0, 0]);
        assert_eq!(hue_from_azimuth(0.0), 89);
        assert_eq!(hue_to_rgb_u8(60), [0, 255, 0]);
        assert_eq!(hue_from_azimuth(FRAC_PI_2), 179);
    }

    #[test]
    fn label_colors_distinct() {
        let t = label_table();
        for i in 0..180 {
            for j in (i + 1)..180 {
                assert_ne!(t[i], t[j], "hue {i} and {j} collide");
            }
        }
    }

    #[test]
    fn encode_fill_is_exact() {
        let img = Array3::zeros((64, 64, 3));
        let b = BoundingBox {
            x_c: 0.5,
            y_c: 0.5,
            w: 0.25,
            h: 0.25,
            track_id: 3,
        };
        let lab = encode_receiver_label(&img, &b, 0.0).unwrap();
        assert_eq!(lab.hue, 89);
        let rgb = hue_to_rgb_u8(89);
        for y in 24..40 {
            for x in 24..40 {
                for ch in 0..3 {
                    assert_eq!(lab.image[(y, x, ch)], rgb[ch] as f64 / 255.0);
                }
            }
        }
        // Outside the box the image is untouched.
        assert_eq!(lab.image[(0, 0, 0)], 0.0);
    }

    #[test]
    fn encode_rejects_box_outside_image() {
        let img = Array3::zeros((64, 64, 3));
        let b = BoundingBox {
            x_c: 1.1,
            y_c: 0.5,
            w: 0.4,
            h: 0.2,
            track_id: 0,
        };
        assert!(encode_receiver_label(&img, &b, 0.0).is_err());
    }

    #[test]
    fn decode_quantization_bounds() {
        // From theta = 0 the decoded angle is within one hue step.
        let rgb = hue_to_rgb_u8(hue_from_azimuth(0.0));
        let px = [rgb[0] as f64 / 255.0, rgb[1] as f64 / 255.0, rgb[2] as f64 / 255.0];
        let d = decode_receiver_hue(&[px, px]).unwrap();
        assert!(d >= -PI / 358.0 - 1e-12 && d <= PI / 358.0 + 1e-12, "{d}");

        // Endpoint decodes exactly.
        let rgb = hue_to_rgb_u8(hue_from_azimuth(FRAC_PI_2));
        let px = [rgb[0] as f64 / 255.0, rgb[1] as f64 / 255.0, rgb[2] as f64 / 255.0];
        assert_eq!(decode_receiver_hue(&[px]).unwrap(), FRAC_PI_2);
    }

    #[test]
    fn decode_rejects_non_uniform() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        assert!(decode_receiver_hue(&[a, b]).is_err());
    }

    #[test]
    fn hue_round_trip_sweep() {
        let max_err = (0..1000)
            .map(|i| {
                let theta = -FRAC_PI_2 + PI * i as f64 / 999.0;
                let h = hue_from_azimuth(theta);
                let back = PI * h as f64 / 179.0 - FRAC_PI_2;
                (back - theta).abs()
            })
            .fold(0.0, f64::max);
        assert!(max_err <= PI / 179.0 + 1e-12, "max err {max_err}");
    }
}
