//! Handcrafted stand-in for a learned feature pyramid.
//!
//! Per pixel: smoothed CIE Lab color split into nonnegative half-channels
//! (`L`, `a+`, `a-`, `b+`, `b-`), rectified gradient energy along a few
//! orientations of the lightness channel, normalized `x`/`y` position, a
//! soft Lab color histogram and a coarse soft position grid. Every channel is
//! nonnegative.
//!
//! Dense positive channels push the cosine of any two regions toward 1 (and
//! points on a ray from the origin look identical in raw `x`/`y`), so the two
//! histogram groups carry the discrimination: each pixel spreads unit mass
//! over its nearest color bins and grid cells with tent weights, and regions
//! of different color, or far apart, come out nearly orthogonal there. Parts
//! of one object (similar color, close together) score high; the group
//! weights trade appearance against proximity.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{FeaturePyramid, PyramidLevel};
use crate::error::{Error, Result};
use crate::raster::{gaussian_blur, gradients, Plane};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandcraftedConfig {
    pub strides: Vec<u32>,
    /// Gaussian smoothing of the color channels, in pixels.
    pub color_sigma: f64,
    /// Number of gradient orientations over the half circle.
    pub orientations: usize,
    pub color_weight: f64,
    pub texture_weight: f64,
    pub position_weight: f64,
    /// Soft Lab histogram bins along `L`, `a`, `b`; any zero disables it.
    pub color_bins: [usize; 3],
    pub bin_weight: f64,
    /// Cells per side of the soft position grid; 0 disables it.
    pub position_grid: usize,
    pub grid_weight: f64,
}

impl Default for HandcraftedConfig {
    fn default() -> Self {
        HandcraftedConfig {
            strides: vec![1, 2, 4, 8],
            color_sigma: 0.5,
            orientations: 4,
            color_weight: 1.0,
            texture_weight: 1.0,
            position_weight: 1.0,
            color_bins: [4, 6, 6],
            bin_weight: 1.0,
            position_grid: 4,
            grid_weight: 1.0,
        }
    }
}

impl HandcraftedConfig {
    pub fn channels(&self) -> usize {
        let [nl, na, nb] = self.color_bins;
        5 + self.orientations + 2 + nl * na * nb + self.position_grid * self.position_grid
    }

    /// Index of the `x` position channel; `y` follows.
    pub fn position_channel(&self) -> usize {
        5 + self.orientations
    }
}

/// `a` and `b` histogram bins cover `[-AB_RANGE, AB_RANGE]`.
const AB_RANGE: f32 = 90.0;

fn srgb_to_linear(v: f32) -> f32 {
    let v = v / 255.0;
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f32) -> f32 {
    const EPS: f32 = 216.0 / 24389.0;
    const KAPPA: f32 = 24389.0 / 27.0;
    if t > EPS {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// sRGB (0-255) to CIE Lab under D65.
pub(crate) fn rgb_to_lab(rgb: [u8; 3]) -> [f32; 3] {
    let [r, g, b] = rgb.map(|v| srgb_to_linear(v as f32));
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.119192 * g + 0.9503041 * b) / 1.08883;
    let (fx, fy, fz) = (lab_f(x), lab_f(y), lab_f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Average-pool a full-resolution plane into `ceil(h / s) x ceil(w / s)`
/// cells; edge cells average only the pixels they cover.
fn pool(plane: &Plane, stride: usize, out: &mut Vec<f32>) {
    let (w, h) = (plane.width, plane.height);
    let (pw, ph) = (w.div_ceil(stride), h.div_ceil(stride));
    for cy in 0..ph {
        let (y0, y1) = (cy * stride, ((cy + 1) * stride).min(h));
        for cx in 0..pw {
            let (x0, x1) = (cx * stride, ((cx + 1) * stride).min(w));
            let mut acc = 0.0f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += plane.at(x, y) as f64;
                }
            }
            out.push((acc / ((y1 - y0) * (x1 - x0)) as f64) as f32);
        }
    }
}

/// Continuous coordinate `t` in `[0, n - 1]` split into the lower of the
/// two nearest integer centers and the weight of the upper one.
fn tent(t: f32, n: usize) -> (usize, f32) {
    let t = t.clamp(0.0, (n - 1) as f32);
    let i0 = (t.floor() as usize).min(n.saturating_sub(2));
    (i0, t - i0 as f32)
}

/// Spread `weight` over the cells of an `n`-dimensional soft histogram.
fn splat(planes: &mut [Plane], first: usize, dims: &[usize], coords: &[f32], weight: f32, x: usize, y: usize) {
    let cells: Vec<(usize, f32)> = dims.iter().zip(coords).map(|(&n, &t)| tent(t, n)).collect();
    for corner in 0..1usize << dims.len() {
        let mut index = 0;
        let mut wgt = weight;
        for (d, &(i0, f)) in cells.iter().enumerate() {
            let up = corner >> d & 1 == 1;
            let i = if up { (i0 + 1).min(dims[d] - 1) } else { i0 };
            wgt *= if up { f } else { 1.0 - f };
            index = index * dims[d] + i;
        }
        if wgt > 0.0 {
            let plane = &mut planes[first + index];
            plane.set(x, y, plane.at(x, y) + wgt);
        }
    }
}

pub fn handcrafted_pyramid(image: &RgbImage, cfg: &HandcraftedConfig) -> Result<FeaturePyramid> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyInput("handcrafted features need a nonempty image"));
    }
    if cfg.strides.is_empty() {
        return Err(Error::param("strides", "at least one stride is required"));
    }

    let mut lab = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
    for (i, px) in image.pixels().enumerate() {
        let v = rgb_to_lab(px.0);
        for c in 0..3 {
            lab[c].data[i] = v[c];
        }
    }
    let lab = lab.map(|p| gaussian_blur(&p, cfg.color_sigma as f32));

    let cw = cfg.color_weight as f32;
    let tw = cfg.texture_weight as f32;
    let pw = cfg.position_weight as f32;
    let mut channels: Vec<Plane> = Vec::with_capacity(cfg.channels());
    let scaled = |src: &Plane, f: &dyn Fn(f32) -> f32| Plane {
        width: w,
        height: h,
        data: src.data.iter().map(|&v| f(v)).collect(),
    };
    channels.push(scaled(&lab[0], &|v| cw * (v / 100.0).clamp(0.0, 1.0)));
    for src in &lab[1..] {
        channels.push(scaled(src, &|v| cw * (v / 128.0).clamp(0.0, 1.0)));
        channels.push(scaled(src, &|v| cw * (-v / 128.0).clamp(0.0, 1.0)));
    }

    let (gx, gy) = gradients(&lab[0]);
    for k in 0..cfg.orientations {
        let theta = k as f32 * std::f32::consts::PI / cfg.orientations as f32;
        let (s, c) = theta.sin_cos();
        let mut p = Plane::new(w, h);
        for (o, (&dx, &dy)) in p.data.iter_mut().zip(gx.data.iter().zip(&gy.data)) {
            // lightness spans 0..100, so a unit step edge is at most ~50 per pixel
            *o = tw * ((dx * c + dy * s).abs() / 50.0).min(1.0);
        }
        channels.push(p);
    }

    let mut px = Plane::new(w, h);
    let mut py = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            px.set(x, y, pw * ((x as f32 + 0.5) / w as f32));
            py.set(x, y, pw * ((y as f32 + 0.5) / h as f32));
        }
    }
    channels.push(px);
    channels.push(py);

    let [nl, na, nb] = cfg.color_bins;
    if nl * na * nb > 0 {
        let first = channels.len();
        channels.extend((0..nl * na * nb).map(|_| Plane::new(w, h)));
        let bw = cfg.bin_weight as f32;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let coords = [
                    lab[0].data[i] / 100.0 * nl as f32 - 0.5,
                    (lab[1].data[i] + AB_RANGE) / (2.0 * AB_RANGE) * na as f32 - 0.5,
                    (lab[2].data[i] + AB_RANGE) / (2.0 * AB_RANGE) * nb as f32 - 0.5,
                ];
                splat(&mut channels, first, &[nl, na, nb], &coords, bw, x, y);
            }
        }
    }

    let g = cfg.position_grid;
    if g > 0 {
        let first = channels.len();
        channels.extend((0..g * g).map(|_| Plane::new(w, h)));
        let gw = cfg.grid_weight as f32;
        for y in 0..h {
            for x in 0..w {
                let coords = [
                    (y as f32 + 0.5) / h as f32 * g as f32 - 0.5,
                    (x as f32 + 0.5) / w as f32 * g as f32 - 0.5,
                ];
                splat(&mut channels, first, &[g, g], &coords, gw, x, y);
            }
        }
    }

    let levels = cfg
        .strides
        .iter()
        .map(|&stride| {
            let s = stride.max(1) as usize;
            let mut data = Vec::with_capacity(channels.len() * h.div_ceil(s) * w.div_ceil(s));
            for ch in &channels {
                pool(ch, s, &mut data);
            }
            PyramidLevel {
                stride,
                channels: channels.len(),
                height: h.div_ceil(s),
                width: w.div_ceil(s),
                data,
            }
        })
        .collect();
    FeaturePyramid::new(image.height(), image.width(), levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn lab_reference_points() {
        let white = rgb_to_lab([255, 255, 255]);
        assert!((white[0] - 100.0).abs() < 0.01 && white[1].abs() < 0.01 && white[2].abs() < 0.01);
        let black = rgb_to_lab([0, 0, 0]);
        assert!(black.iter().all(|v| v.abs() < 1e-4));
        // sRGB red: L 53.24, a 80.09, b 67.20
        let red = rgb_to_lab([255, 0, 0]);
        assert!((red[0] - 53.24).abs() < 0.05);
        assert!((red[1] - 80.09).abs() < 0.05);
        assert!((red[2] - 67.20).abs() < 0.05);
    }

    #[test]
    fn gray_image_has_no_gradient_energy() {
        let img = RgbImage::from_pixel(32, 24, Rgb([128, 128, 128]));
        let cfg = HandcraftedConfig::default();
        let pyr = handcrafted_pyramid(&img, &cfg).unwrap();
        for level in pyr.levels() {
            for c in 5..5 + cfg.orientations {
                assert_eq!(level.channel_range(c), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn position_is_half_at_image_center() {
        let img = RgbImage::from_pixel(64, 48, Rgb([10, 200, 30]));
        let cfg = HandcraftedConfig {
            strides: vec![1, 4],
            ..HandcraftedConfig::default()
        };
        let pyr = handcrafted_pyramid(&img, &cfg).unwrap();
        let xc = cfg.position_channel();
        for level in pyr.levels() {
            let s = level.stride as f64;
            // image point (32, 24) in map coordinates
            let (fx, fy) = (32.0 / s - 0.5, 24.0 / s - 0.5);
            assert!((level.bilinear(xc, fx, fy) - 0.5).abs() < 1e-6);
            assert!((level.bilinear(xc + 1, fx, fy) - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_channels_partition_unity() {
        let img = RgbImage::from_pixel(37, 23, Rgb([90, 90, 90]));
        let cfg = HandcraftedConfig {
            strides: vec![1],
            ..HandcraftedConfig::default()
        };
        let pyr = handcrafted_pyramid(&img, &cfg).unwrap();
        let level = &pyr.levels()[0];
        let first = cfg.channels() - cfg.position_grid * cfg.position_grid;
        for y in 0..23 {
            for x in 0..37 {
                let sum: f32 = (first..cfg.channels()).map(|c| level.at(c, y, x)).sum();
                assert!((sum - 1.0).abs() < 1e-5);
            }
        }
        // opposite corners share no grid mass
        let far: f32 = (first..cfg.channels()).map(|c| level.at(c, 0, 0) * level.at(c, 22, 36)).sum();
        assert_eq!(far, 0.0);
    }

    #[test]
    fn deterministic() {
        let img = RgbImage::from_fn(40, 30, |x, y| Rgb([(x * 6) as u8, (y * 8) as u8, 77]));
        let cfg = HandcraftedConfig::default();
        assert_eq!(
            handcrafted_pyramid(&img, &cfg).unwrap(),
            handcrafted_pyramid(&img, &cfg).unwrap()
        );
    }

    #[test]
    fn all_channels_nonnegative() {
        let img = RgbImage::from_fn(40, 30, |x, y| Rgb([(x * 6) as u8, 250 - (y * 8) as u8, (x * y) as u8]));
        let pyr = handcrafted_pyramid(&img, &HandcraftedConfig::default()).unwrap();
        for level in pyr.levels() {
            assert!(level.data.iter().all(|&v| v >= 0.0));
        }
    }
}
