//! Stochastic pixel-space image augmentation: per-channel color jitter,
//! Gaussian blur, random erasing, then channel normalization.

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scene::camera::ImageArray;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageAugConfig {
    pub jitter_scale: (f64, f64),
    pub jitter_shift: (f64, f64),
    pub blur_prob: f64,
    pub blur_sigma: (f64, f64),
    pub blur_kernel: usize,
    pub erase_prob: f64,
    pub erase_area: (f64, f64),
    pub erase_aspect: (f64, f64),
    pub norm_mean: [f64; 3],
    pub norm_std: [f64; 3],
}

impl Default for ImageAugConfig {
    fn default() -> Self {
        Self {
            jitter_scale: (0.7, 1.3),
            jitter_shift: (-0.3, 0.3),
            blur_prob: 0.5,
            blur_sigma: (0.1, 2.0),
            blur_kernel: 15,
            erase_prob: 0.3,
            erase_area: (0.01, 0.05),
            erase_aspect: (0.3, 3.3),
            norm_mean: [0.485, 0.456, 0.406],
            norm_std: [0.229, 0.224, 0.225],
        }
    }
}

fn draw(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

/// Separable Gaussian blur with a k-tap kernel (equivalent to the k x k
/// product kernel) and replicated edges.
fn gaussian_blur(img: &ImageArray, sigma: f64, kernel: usize) -> ImageArray {
    let half = (kernel / 2) as isize;
    let mut taps = vec![0.0f64; kernel];
    let mut sum = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as isize - half;
        *t = (-(x * x) as f64 / (2.0 * sigma * sigma)).exp();
        sum += *t;
    }
    for t in &mut taps {
        *t /= sum;
    }
    let (h, w, c) = img.dim();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut horiz = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, t) in taps.iter().enumerate() {
                    let xs = clamp(x as isize + i as isize - half, w);
                    acc += t * img[(y, xs, ch)];
                }
                horiz[(y, x, ch)] = acc;
            }
        }
    }
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, t) in taps.iter().enumerate() {
                    let ys = clamp(y as isize + i as isize - half, h);
                    acc += t * horiz[(ys, x, ch)];
                }
                out[(y, x, ch)] = acc;
            }
        }
    }
    out
}

/// Samples an erase rectangle (x0, y0, w, h) whose area ratio lands inside
/// the configured range after integer rounding.
fn sample_erase_rect(
    cfg: &ImageAugConfig,
    width: usize,
    height: usize,
    rng: &mut impl Rng,
) -> (usize, usize, usize, usize) {
    let img_area = (width * height) as f64;
    for _ in 0..20 {
        let ratio = draw(cfg.erase_area, rng);
        let aspect = draw(cfg.erase_aspect, rng);
        let target = ratio * img_area;
        let rw = (target * aspect).sqrt().round().max(1.0) as usize;
        let rh = (target / aspect).sqrt().round().max(1.0) as usize;
        if rw > width || rh > height {
            continue;
        }
        let got = (rw * rh) as f64 / img_area;
        if got < cfg.erase_area.0 || got > cfg.erase_area.1 {
            continue;
        }
        let x0 = rng.random_range(0..=(width - rw));
        let y0 = rng.random_range(0..=(height - rh));
        return (x0, y0, rw, rh);
    }
    // Fallback: a square at the middle of the area range.
    let mid = (cfg.erase_area.0 + cfg.erase_area.1) / 2.0;
    let side = ((mid * img_area).sqrt().round().max(1.0) as usize)
        .min(width)
        .min(height);
    let x0 = rng.random_range(0..=(width - side));
    let y0 = rng.random_range(0..=(height - side));
    (x0, y0, side, side)
}

/// The stochastic stages only: jitter, blur (p), erase (p). Kept separate so
/// the labeling step can run between augmentation and normalization.
pub fn augment_stochastic(
    image: &ImageArray,
    cfg: &ImageAugConfig,
    rng: &mut impl Rng,
) -> ImageArray {
    let (h, w, c) = image.dim();
    debug_assert_eq!(c, 3);

    // Per-channel color jitter. Draw order: scales then shifts, channel 0..2.
    let scales: Vec<f64> = (0..3).map(|_| draw(cfg.jitter_scale, rng)).collect();
    let shifts: Vec<f64> = (0..3).map(|_| draw(cfg.jitter_shift, rng)).collect();
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                out[(y, x, ch)] = image[(y, x, ch)] * scales[ch] + shifts[ch];
            }
        }
    }

    if cfg.blur_prob > 0.0 && rng.random_range(0.0..1.0) < cfg.blur_prob {
        let sigma = draw(cfg.blur_sigma, rng);
        out = gaussian_blur(&out, sigma, cfg.blur_kernel);
    }

    if cfg.erase_prob > 0.0 && rng.random_range(0.0..1.0) < cfg.erase_prob {
        let (x0, y0, rw, rh) = sample_erase_rect(cfg, w, h, rng);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                for ch in 0..3 {
                    out[(y, x, ch)] = rng.random_range(0.0..1.0);
                }
            }
        }
    }
    out
}

/// Channel normalization (I - mean) / std.
pub fn normalize(image: &ImageArray, cfg: &ImageAugConfig) -> ImageArray {
    let (h, w, _) = image.dim();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                out[(y, x, ch)] = (image[(y, x, ch)] - cfg.norm_mean[ch]) / cfg.norm_std[ch];
            }
        }
    }
    out
}

/// Full pipeline: jitter -> blur(p) -> erase(p) -> normalize. All randomness
/// comes from the supplied rng, so a seeded rng makes the result a pure
/// function of (image, config, rng state).
pub fn augment_image(image: &ImageArray, cfg: &ImageAugConfig, rng: &mut impl Rng) -> ImageArray {
    normalize(&augment_stochastic(image, cfg, rng), cfg)
}
