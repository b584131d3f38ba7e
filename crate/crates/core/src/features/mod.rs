//! Multi-level feature maps and RoIAlign pooling.
//!
//! A [`FeaturePyramid`] is a stack of `C x H x W` maps at strictly increasing
//! strides. Maps come either from [`handcrafted_pyramid`], which needs no
//! trained model, or from a precomputed tensor file ([`load_pyramid`]).

mod handcrafted;
mod io;

pub use handcrafted::{handcrafted_pyramid, HandcraftedConfig};
pub use io::{load_pyramid, read_pyramid, save_pyramid, write_pyramid, PYRAMID_MAGIC};

use std::path::PathBuf;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BBox;

/// One `channels x height x width` map, channel-first row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub stride: u32,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl PyramidLevel {
    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Bilinear sample of channel `c` at map coordinates `(fx, fy)`, where
    /// integer coordinates hit cell centers. Coordinates are clamped to the
    /// map so the result is always a convex combination of map values.
    pub fn bilinear(&self, c: usize, fx: f64, fy: f64) -> f64 {
        let fx = fx.clamp(0.0, (self.width - 1) as f64);
        let fy = fy.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (lx, ly) = (fx - x0 as f64, fy - y0 as f64);
        let (hx, hy) = (1.0 - lx, 1.0 - ly);
        hy * (hx * self.at(c, y0, x0) as f64 + lx * self.at(c, y0, x1) as f64)
            + ly * (hx * self.at(c, y1, x0) as f64 + lx * self.at(c, y1, x1) as f64)
    }

    /// Per-channel `(min, max)`.
    pub fn channel_range(&self, c: usize) -> (f32, f32) {
        let plane = &self.data[c * self.height * self.width..(c + 1) * self.height * self.width];
        plane
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    image_height: u32,
    image_width: u32,
    levels: Vec<PyramidLevel>,
}

impl FeaturePyramid {
    /// Validates stride ordering, uniform channel count and map shapes.
    pub fn new(image_height: u32, image_width: u32, levels: Vec<PyramidLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::PyramidShape("pyramid has no levels".into()));
        }
        let channels = levels[0].channels;
        if channels == 0 {
            return Err(Error::PyramidShape("zero channels".into()));
        }
        for (i, level) in levels.iter().enumerate() {
            if level.stride == 0 {
                return Err(Error::PyramidShape(format!("level {i} has stride 0")));
            }
            if i > 0 && level.stride <= levels[i - 1].stride {
                return Err(Error::PyramidShape(format!(
                    "strides must increase strictly: level {} has {}, level {i} has {}",
                    i - 1,
                    levels[i - 1].stride,
                    level.stride
                )));
            }
            if level.channels != channels {
                return Err(Error::PyramidShape(format!(
                    "level {i} has {} channels, level 0 has {channels}",
                    level.channels
                )));
            }
            let expect_h = image_height as f64 / level.stride as f64;
            let expect_w = image_width as f64 / level.stride as f64;
            if (level.height as f64 - expect_h).abs() > 1.0
                || (level.width as f64 - expect_w).abs() > 1.0
                || level.height == 0
                || level.width == 0
            {
                return Err(Error::PyramidShape(format!(
                    "level {i} is {}x{}, expected about {expect_h:.1}x{expect_w:.1} for stride {}",
                    level.height, level.width, level.stride
                )));
            }
            if level.data.len() != channels * level.height * level.width {
                return Err(Error::PyramidShape(format!(
                    "level {i} holds {} values, expected {}",
                    level.data.len(),
                    channels * level.height * level.width
                )));
            }
        }
        Ok(FeaturePyramid {
            image_height,
            image_width,
            levels,
        })
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels
    }

    pub fn levels(&self) -> &[PyramidLevel] {
        &self.levels
    }
}

/// Pooled feature of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiAlignConfig {
    /// Output grid side `g`; the feature has `C * g * g` values.
    pub grid: usize,
    /// Sample points per bin along each axis.
    pub samples_per_bin: usize,
    /// Level index (log2 stride) assigned to a box of side `canonical_size`.
    pub canonical_level: f64,
    pub canonical_size: f64,
}

impl Default for RoiAlignConfig {
    fn default() -> Self {
        RoiAlignConfig {
            grid: 7,
            samples_per_bin: 2,
            canonical_level: 4.0,
            canonical_size: 224.0,
        }
    }
}

/// Pick the pyramid level for a box: `floor(l0 + log2(sqrt(w h) / s0))`
/// interpreted as a log2 stride, clamped to the available levels.
pub fn assign_level(pyr: &FeaturePyramid, bbox: &BBox, cfg: &RoiAlignConfig) -> usize {
    let target = (cfg.canonical_level + ((bbox.w * bbox.h).sqrt() / cfg.canonical_size).log2())
        .floor();
    let levels = pyr.levels();
    levels
        .iter()
        .position(|l| (l.stride as f64).log2() >= target)
        .unwrap_or(levels.len() - 1)
}

/// Bilinear RoIAlign of `bbox` (image coordinates, already clipped) into a
/// `C * g * g` vector laid out channel-major.
pub fn roi_align(pyr: &FeaturePyramid, bbox: &BBox, cfg: &RoiAlignConfig) -> Result<FeatureVector> {
    if cfg.grid == 0 || cfg.samples_per_bin == 0 {
        return Err(Error::param("grid", "grid and samples per bin must be >= 1"));
    }
    let clipped = bbox
        .clip(pyr.image_width(), pyr.image_height())
        .ok_or_else(|| Error::DegenerateBox(format!("{bbox:?} has no area inside the image")))?;
    let level = &pyr.levels()[assign_level(pyr, &clipped, cfg)];
    let stride = level.stride as f64;
    let [x1, y1, _, _] = clipped.corners();
    let (g, s) = (cfg.grid, cfg.samples_per_bin);
    let bin_w = clipped.w / stride / g as f64;
    let bin_h = clipped.h / stride / g as f64;
    let (ox, oy) = (x1 / stride - 0.5, y1 / stride - 0.5);
    let norm = 1.0 / (s * s) as f64;

    let mut values = Vec::with_capacity(level.channels * g * g);
    for c in 0..level.channels {
        for by in 0..g {
            for bx in 0..g {
                let mut acc = 0.0;
                for iy in 0..s {
                    let fy = oy + (by as f64 + (iy as f64 + 0.5) / s as f64) * bin_h;
                    for ix in 0..s {
                        let fx = ox + (bx as f64 + (ix as f64 + 0.5) / s as f64) * bin_w;
                        acc += level.bilinear(c, fx, fy);
                    }
                }
                values.push(acc * norm);
            }
        }
    }
    Ok(FeatureVector { values })
}

/// Where region features come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource {
    Handcrafted(HandcraftedConfig),
    /// Directory of `<image stem>.fpyr` files, or a single `.fpyr` file.
    Tensor(PathBuf),
}

impl FeatureSource {
    /// Parse `handcrafted` or `tensor:PATH`.
    pub fn parse(spec: &str) -> Result<Self> {
        if spec == "handcrafted" {
            Ok(FeatureSource::Handcrafted(HandcraftedConfig::default()))
        } else if let Some(path) = spec.strip_prefix("tensor:") {
            Ok(FeatureSource::Tensor(PathBuf::from(path)))
        } else {
            Err(Error::Config(format!(
                "unknown feature source `{spec}`, expected `handcrafted` or `tensor:PATH`"
            )))
        }
    }

    pub fn spec(&self) -> String {
        match self {
            FeatureSource::Handcrafted(_) => "handcrafted".into(),
            FeatureSource::Tensor(p) => format!("tensor:{}", p.display()),
        }
    }

    /// Pyramid for one image. `stem` names the tensor file in directory mode.
    pub fn pyramid(&self, stem: &str, image: Option<&RgbImage>) -> Result<FeaturePyramid> {
        match self {
            FeatureSource::Handcrafted(cfg) => {
                let image = image.ok_or(Error::EmptyInput("handcrafted features need the image"))?;
                handcrafted_pyramid(image, cfg)
            }
            FeatureSource::Tensor(path) => {
                if path.is_dir() {
                    load_pyramid(path.join(format!("{stem}.fpyr")))
                } else {
                    load_pyramid(path)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_level(h: usize, w: usize, c: usize, data: Vec<f32>) -> FeaturePyramid {
        FeaturePyramid::new(
            h as u32,
            w as u32,
            vec![PyramidLevel {
                stride: 1,
                channels: c,
                height: h,
                width: w,
                data,
            }],
        )
        .unwrap()
    }

    #[test]
    fn bilinear_at_cell_center() {
        // values (0, 0, 0, 4): the center of the four samples averages to 1
        let pyr = single_level(2, 2, 1, vec![0.0, 0.0, 0.0, 4.0]);
        assert_eq!(pyr.levels()[0].bilinear(0, 0.5, 0.5), 1.0);
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let pyr = single_level(20, 30, 2, vec![7.0; 2 * 20 * 30]);
        let b = BBox::from_corners(3.3, 1.7, 22.9, 15.2).unwrap();
        let f = roi_align(&pyr, &b, &RoiAlignConfig::default()).unwrap();
        assert_eq!(f.dim(), 2 * 49);
        assert!(f.values.iter().all(|&v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn single_sample_hits_pixel() {
        let data: Vec<f32> = (0..100).map(|v| v as f32).collect();
        let pyr = single_level(10, 10, 1, data);
        let cfg = RoiAlignConfig {
            grid: 1,
            samples_per_bin: 1,
            ..RoiAlignConfig::default()
        };
        // centered on pixel (x=4, y=6), whose center is at (4.5, 6.5)
        let b = BBox::new(4.5, 6.5, 3.0, 3.0).unwrap();
        let f = roi_align(&pyr, &b, &cfg).unwrap();
        assert_eq!(f.values, vec![64.0]);
    }

    #[test]
    fn degenerate_box_rejected() {
        let pyr = single_level(10, 10, 1, vec![0.0; 100]);
        let outside = BBox::from_corners(12.0, 0.0, 15.0, 4.0).unwrap();
        assert!(matches!(
            roi_align(&pyr, &outside, &RoiAlignConfig::default()),
            Err(Error::DegenerateBox(_))
        ));
    }

    #[test]
    fn level_assignment_follows_box_scale() {
        let levels = [4u32, 8, 16, 32]
            .iter()
            .map(|&s| {
                let n = 256usize.div_ceil(s as usize);
                PyramidLevel {
                    stride: s,
                    channels: 1,
                    height: n,
                    width: n,
                    data: vec![0.0; n * n],
                }
            })
            .collect();
        let pyr = FeaturePyramid::new(256, 256, levels).unwrap();
        let cfg = RoiAlignConfig::default();
        let small = BBox::new(50.0, 50.0, 16.0, 16.0).unwrap();
        let canonical = BBox::new(128.0, 128.0, 224.0, 224.0).unwrap();
        let mid = BBox::new(100.0, 100.0, 112.0, 112.0).unwrap();
        assert_eq!(assign_level(&pyr, &small, &cfg), 0);
        assert_eq!(pyr.levels()[assign_level(&pyr, &canonical, &cfg)].stride, 16);
        assert_eq!(pyr.levels()[assign_level(&pyr, &mid, &cfg)].stride, 8);
    }

    #[test]
    fn pyramid_validation() {
        let mk = |stride: u32, n: usize, c: usize| PyramidLevel {
            stride,
            channels: c,
            height: n,
            width: n,
            data: vec![0.0; c * n * n],
        };
        assert!(FeaturePyramid::new(64, 64, vec![mk(8, 8, 1), mk(4, 16, 1)]).is_err());
        assert!(FeaturePyramid::new(64, 64, vec![mk(4, 16, 1), mk(8, 8, 2)]).is_err());
        assert!(FeaturePyramid::new(64, 64, vec![mk(4, 20, 1)]).is_err());
        assert!(FeaturePyramid::new(64, 64, vec![mk(4, 16, 1), mk(8, 8, 1)]).is_ok());
    }

    #[test]
    fn feature_source_parse() {
        assert!(matches!(
            FeatureSource::parse("handcrafted").unwrap(),
            FeatureSource::Handcrafted(_)
        ));
        assert_eq!(
            FeatureSource::parse("tensor:/tmp/x").unwrap(),
            FeatureSource::Tensor(PathBuf::from("/tmp/x"))
        );
        assert!(FeatureSource::parse("cnn").is_err());
    }
}
