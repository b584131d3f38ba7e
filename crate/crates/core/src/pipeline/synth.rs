//! Synthetic open-world scenes.
//!
//! Flat colored shapes on a noisy gradient. Rectangles play the seen
//! classes; ellipses and triangles are held out as unseen. Half the shapes are
//! painted in two colors, and some scenes get a thin occluder bar across an
//! object, cutting it into disconnected pieces. Either way no single
//! bottom-up region covers the object. Ground truth is the visible part of
//! each shape.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schema::{write_json, CocoAnnotation, CocoDataset, CocoImage, FOREGROUND_CATEGORY};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rectangle,
    Ellipse,
    Triangle,
}

impl Shape {
    pub fn seen(self) -> bool {
        self == Shape::Rectangle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub scenes: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Object side lengths are drawn from this range.
    pub min_extent: u32,
    pub max_extent: u32,
    /// Chance that a scene gets an occluder bar.
    pub occluder_rate: f64,
    /// Chance that an object is painted in two colors, split along a random
    /// line through its center.
    pub two_tone_rate: f64,
    pub noise: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scenes: 200,
            width: 128,
            height: 128,
            seed: 7,
            min_objects: 3,
            max_objects: 5,
            min_extent: 22,
            max_extent: 44,
            occluder_rate: 0.6,
            two_tone_rate: 0.5,
            noise: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthObject {
    pub shape: Shape,
    /// Visible pixels.
    pub mask: BinaryMask,
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub file_name: String,
    pub image: RgbImage,
    pub objects: Vec<SynthObject>,
}

struct Placed {
    shape: Shape,
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    /// Triangle apex direction: 0 up, 1 right, 2 down, 3 left.
    orient: u8,
    color: [f64; 3],
    /// Second color and the split direction (unit normal) for two-tone objects.
    second: Option<([f64; 3], f64, f64)>,
}

impl Placed {
    fn contains(&self, px: f64, py: f64) -> bool {
        let (u, v) = ((px - self.x0) / self.w, (py - self.y0) / self.h);
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return false;
        }
        match self.shape {
            Shape::Rectangle => true,
            Shape::Ellipse => (2.0 * u - 1.0).powi(2) + (2.0 * v - 1.0).powi(2) <= 1.0,
            Shape::Triangle => {
                // apex at the middle of one side, base on the opposite side
                let (along, across) = match self.orient {
                    0 => (v, u),
                    1 => (1.0 - u, v),
                    2 => (1.0 - v, u),
                    _ => (u, v),
                };
                (across - 0.5).abs() <= along / 2.0
            }
        }
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let h = rng.gen_range(0.0..6.0f64);
    let s = rng.gen_range(0.55..1.0);
    let v = rng.gen_range(0.55..1.0);
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| (u + m) * 255.0)
}

fn color_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
}

fn overlaps(a: &Placed, b: &Placed, gap: f64) -> bool {
    a.x0 < b.x0 + b.w + gap && b.x0 < a.x0 + a.w + gap && a.y0 < b.y0 + b.h + gap && b.y0 < a.y0 + a.h + gap
}

/// Scene `index` of the configured set; independent of every other scene.
pub fn generate_scene(cfg: &SynthConfig, index: usize) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (w, h) = (cfg.width, cfg.height);

    let bg0 = [0; 3].map(|_| rng.gen_range(70.0..180.0));
    let bg1 = [0; 3].map(|_| rng.gen_range(70.0..180.0));
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let bg_at = |x: f64, y: f64| -> [f64; 3] {
        let t = (((x / w as f64 - 0.5) * dx + (y / h as f64 - 0.5) * dy) + 0.75) / 1.5;
        let t = t.clamp(0.0, 1.0);
        [0, 1, 2].map(|c| bg0[c] * (1.0 - t) + bg1[c] * t)
    };

    let n_objects = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    let mut placed: Vec<Placed> = Vec::new();
    for _ in 0..n_objects {
        let shape = match rng.gen_range(0..3) {
            0 => Shape::Rectangle,
            1 => Shape::Ellipse,
            _ => Shape::Triangle,
        };
        for _attempt in 0..100 {
            let ow = rng.gen_range(cfg.min_extent..=cfg.max_extent) as f64;
            let oh = rng.gen_range(cfg.min_extent..=cfg.max_extent) as f64;
            if ow + 4.0 > w as f64 || oh + 4.0 > h as f64 {
                break;
            }
            let x0 = rng.gen_range(2.0..(w as f64 - ow - 2.0)).floor();
            let y0 = rng.gen_range(2.0..(h as f64 - oh - 2.0)).floor();
            let orient = rng.gen_range(0..4u8);
            let mut color = random_color(&mut rng);
            for _ in 0..20 {
                if color_distance(color, bg_at(x0 + ow / 2.0, y0 + oh / 2.0)) > 120.0 {
                    break;
                }
                color = random_color(&mut rng);
            }
            let second = rng.gen_bool(cfg.two_tone_rate).then(|| {
                let mut other = random_color(&mut rng);
                for _ in 0..20 {
                    if color_distance(other, color) > 150.0
                        && color_distance(other, bg_at(x0 + ow / 2.0, y0 + oh / 2.0)) > 120.0
                    {
                        break;
                    }
                    other = random_color(&mut rng);
                }
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                (other, a.cos(), a.sin())
            });
            let candidate = Placed {
                shape,
                x0,
                y0,
                w: ow,
                h: oh,
                orient,
                color,
                second,
            };
            if placed.iter().all(|p| !overlaps(p, &candidate, 4.0)) {
                placed.push(candidate);
                break;
            }
        }
    }

    // occluder: a thin full-span bar through the middle third of one object
    let bar = (!placed.is_empty() && rng.gen_bool(cfg.occluder_rate)).then(|| {
        let target = &placed[rng.gen_range(0..placed.len())];
        let vertical = rng.gen_bool(0.5);
        let frac = rng.gen_range(0.35..0.65);
        let pos = if vertical {
            (target.x0 + frac * target.w).floor()
        } else {
            (target.y0 + frac * target.h).floor()
        };
        let thickness = rng.gen_range(2..=4) as f64;
        let shade = rng.gen_range(20.0..60.0);
        (vertical, pos, thickness, [shade, shade, shade])
    });
    let in_bar = |x: f64, y: f64| match bar {
        Some((true, pos, t, _)) => x >= pos && x < pos + t,
        Some((false, pos, t, _)) => y >= pos && y < pos + t,
        None => false,
    };

    let mut image = RgbImage::new(w, h);
    let mut owner: Vec<Option<usize>> = vec![None; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut color = bg_at(fx, fy);
            if let Some((_, _, _, c)) = bar.filter(|_| in_bar(x as f64, y as f64)) {
                color = c;
            } else if let Some(i) = placed.iter().position(|p| p.contains(fx, fy)) {
                let p = &placed[i];
                color = match p.second {
                    Some((other, nx, ny)) if (fx - p.x0 - p.w / 2.0) * nx + (fy - p.y0 - p.h / 2.0) * ny > 0.0 => other,
                    _ => p.color,
                };
                owner[(y * w + x) as usize] = Some(i);
            }
            let noise = cfg.noise;
            let px = color.map(|v| (v + rng.gen_range(-noise..=noise) as f64).round().clamp(0.0, 255.0) as u8);
            image.put_pixel(x, y, Rgb(px));
        }
    }

    let objects = placed
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let dense: Vec<bool> = owner.iter().map(|&o| o == Some(i)).collect();
            let mask = BinaryMask::from_dense(h, w, &dense).expect("dense raster matches");
            (mask.area() >= 30).then_some(SynthObject { shape: p.shape, mask })
        })
        .collect();

    SynthScene {
        file_name: format!("scene_{:04}.png", index + 1),
        image,
        objects,
    }
}

pub fn generate(cfg: &SynthConfig) -> Vec<SynthScene> {
    (0..cfg.scenes).into_par_iter().map(|i| generate_scene(cfg, i)).collect()
}

/// Annotations of the objects passing `keep`. Image ids are 1-based scene
/// order, which matches the ids `propose` assigns to the sorted files.
pub fn annotations(scenes: &[SynthScene], keep: impl Fn(Shape) -> bool) -> CocoDataset {
    let mut images = Vec::new();
    let mut anns = Vec::new();
    for (i, scene) in scenes.iter().enumerate() {
        let image_id = i as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            file_name: scene.file_name.clone(),
            height: scene.image.height(),
            width: scene.image.width(),
        });
        for obj in scene.objects.iter().filter(|o| keep(o.shape)) {
            anns.push(CocoAnnotation {
                id: anns.len() as u64 + 1,
                image_id,
                category_id: FOREGROUND_CATEGORY,
                bbox: obj.mask.tight_box().expect("objects are nonempty").xywh(),
                area: obj.mask.area() as f64,
                segmentation: Some(obj.mask.clone()),
                iscrowd: false,
                provenance: None,
            });
        }
    }
    CocoDataset {
        schema_version: SCHEMA_VERSION,
        images,
        annotations: anns,
        categories: CocoDataset::foreground_categories(),
    }
}

/// Write `images/*.png` plus `gt_all.json`, `gt_seen.json` and
/// `gt_unseen.json` under `dir`.
pub fn write_fixture(dir: &Path, cfg: &SynthConfig) -> Result<Vec<SynthScene>> {
    let scenes = generate(cfg);
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    for s in &scenes {
        let path = image_dir.join(&s.file_name);
        s.image.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    write_json(&dir.join("gt_all.json"), &annotations(&scenes, |_| true))?;
    write_json(&dir.join("gt_seen.json"), &annotations(&scenes, Shape::seen))?;
    write_json(&dir.join("gt_unseen.json"), &annotations(&scenes, |s| !s.seen()))?;
    Ok(scenes)
}
