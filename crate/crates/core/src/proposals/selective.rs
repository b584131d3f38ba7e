//! Selective search: hierarchical grouping of a graph-based oversegmentation.
//!
//! Starting from the base regions, the most similar pair of adjacent regions
//! is merged until a single region remains. Similarity is a weighted mean of
//! color histogram intersection, texture histogram intersection, a size term
//! favoring small regions and a fill term favoring pairs whose union fills
//! its bounding box. Every region of the hierarchy becomes a proposal.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::graph::{graph_segment, LabelMap};
use super::SegParams;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, PixelRect};
use crate::proposal::{Proposal, Provenance};
use crate::raster::{gaussian_blur, gradients, oriented_responses, rgb_planes};

pub const COLOR_BINS: usize = 25;
pub const TEXTURE_ORIENTATIONS: usize = 8;
pub const TEXTURE_BINS: usize = 10;

const COLOR_LEN: usize = 3 * COLOR_BINS;
const TEXTURE_LEN: usize = 3 * TEXTURE_ORIENTATIONS * TEXTURE_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub color: f64,
    pub texture: f64,
    pub size: f64,
    pub fill: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights {
            color: 1.0,
            texture: 1.0,
            size: 1.0,
            fill: 1.0,
        }
    }
}

impl SimilarityWeights {
    fn validate(&self) -> Result<()> {
        let all = [self.color, self.texture, self.size, self.fill];
        if all.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::param("weights", "each weight must lie in [0, 1]"));
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::param("weights", "at least one weight must be positive"));
        }
        Ok(())
    }
}

/// Histogram intersection of two L1-normalized color histograms.
pub fn color_similarity(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).sum()
}

/// Histogram intersection of two L1-normalized texture histograms.
pub fn texture_similarity(a: &[f64], b: &[f64]) -> f64 {
    color_similarity(a, b)
}

/// `1 - (|a| + |b|) / |image|`
pub fn size_similarity(size_a: usize, size_b: usize, image_size: usize) -> f64 {
    1.0 - (size_a + size_b) as f64 / image_size as f64
}

/// `1 - (|BB(a, b)| - |a| - |b|) / |image|`
pub fn fill_similarity(size_a: usize, size_b: usize, hull_area: u64, image_size: usize) -> f64 {
    1.0 - (hull_area as f64 - size_a as f64 - size_b as f64) / image_size as f64
}

#[derive(Debug, Clone)]
struct Region {
    size: usize,
    color: Vec<f64>,
    texture: Vec<f64>,
    rect: PixelRect,
    neighbors: BTreeSet<usize>,
}

/// One region of the merge hierarchy.
#[derive(Debug, Clone)]
pub struct HierarchyNode {
    pub mask: BinaryMask,
    /// The two merged regions, `None` for a base region.
    pub children: Option<(usize, usize)>,
    /// Similarity at which the children were merged.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RegionHierarchy {
    pub base: LabelMap,
    /// Base regions first (index = label), then merged regions in merge order.
    pub nodes: Vec<HierarchyNode>,
}

#[derive(Debug, PartialEq)]
struct Candidate {
    sim: f64,
    a: usize,
    b: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn normalize(hist: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    }
}

fn base_regions(image: &RgbImage, map: &LabelMap) -> Vec<Region> {
    let (w, h) = (map.width as usize, map.height as usize);
    let planes = rgb_planes(image);
    let texture_bins: Vec<Vec<u16>> = {
        // per channel, per orientation: quantized response per pixel
        let mut bins = Vec::with_capacity(3 * TEXTURE_ORIENTATIONS);
        for plane in &planes {
            let smooth = gaussian_blur(plane, 1.0);
            let (gx, gy) = gradients(&smooth);
            let responses = oriented_responses(&gx, &gy, TEXTURE_ORIENTATIONS);
            let top = responses.iter().map(|r| r.max()).fold(0.0f32, f32::max);
            for r in responses {
                bins.push(
                    r.data
                        .iter()
                        .map(|&v| {
                            if top > 0.0 {
                                ((v / top * TEXTURE_BINS as f32) as usize).min(TEXTURE_BINS - 1)
                                    as u16
                            } else {
                                0
                            }
                        })
                        .collect(),
                );
            }
        }
        bins
    };

    let mut regions: Vec<Region> = (0..map.count)
        .map(|_| Region {
            size: 0,
            color: vec![0.0; COLOR_LEN],
            texture: vec![0.0; TEXTURE_LEN],
            rect: PixelRect {
                x1: u32::MAX,
                y1: u32::MAX,
                x2: 0,
                y2: 0,
            },
            neighbors: BTreeSet::new(),
        })
        .collect();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let l = map.labels[i] as usize;
            let r = &mut regions[l];
            r.size += 1;
            let px = image.get_pixel(x as u32, y as u32).0;
            for (c, &v) in px.iter().enumerate() {
                r.color[c * COLOR_BINS + v as usize * COLOR_BINS / 256] += 1.0;
            }
            for (t, bins) in texture_bins.iter().enumerate() {
                r.texture[t * TEXTURE_BINS + bins[i] as usize] += 1.0;
            }
            r.rect.x1 = r.rect.x1.min(x as u32);
            r.rect.y1 = r.rect.y1.min(y as u32);
            r.rect.x2 = r.rect.x2.max(x as u32 + 1);
            r.rect.y2 = r.rect.y2.max(y as u32 + 1);
            // 4-connected adjacency
            if x + 1 < w {
                let m = map.labels[i + 1] as usize;
                if m != l {
                    regions[l].neighbors.insert(m);
                    regions[m].neighbors.insert(l);
                }
            }
            if y + 1 < h {
                let m = map.labels[i + w] as usize;
                if m != l {
                    regions[l].neighbors.insert(m);
                    regions[m].neighbors.insert(l);
                }
            }
        }
    }
    for r in &mut regions {
        normalize(&mut r.color);
        normalize(&mut r.texture);
    }
    regions
}

/// Column-major RLE of every base region in a single pass.
/// One mask per label, in label order.
pub fn label_masks(map: &LabelMap) -> Vec<BinaryMask> {
    let (w, h) = (map.width as usize, map.height as usize);
    let n = w * h;
    let mut counts: Vec<Vec<u32>> = vec![Vec::new(); map.count];
    let mut run_end = vec![0usize; map.count];
    for x in 0..w {
        for y in 0..h {
            let p = x * h + y;
            let l = map.labels[y * w + x] as usize;
            let c = &mut counts[l];
            if !c.is_empty() && run_end[l] == p {
                *c.last_mut().expect("nonempty") += 1;
            } else {
                c.push((p - run_end[l]) as u32);
                c.push(1);
            }
            run_end[l] = p + 1;
        }
    }
    counts
        .into_iter()
        .zip(run_end)
        .map(|(mut c, end)| {
            c.push((n - end) as u32);
            BinaryMask::from_counts(map.height, map.width, &c).expect("runs cover the raster")
        })
        .collect()
}

fn similarity(a: &Region, b: &Region, image_size: usize, weights: &SimilarityWeights) -> f64 {
    let hull = a.rect.union(b.rect).area();
    let total = weights.color + weights.texture + weights.size + weights.fill;
    (weights.color * color_similarity(&a.color, &b.color)
        + weights.texture * texture_similarity(&a.texture, &b.texture)
        + weights.size * size_similarity(a.size, b.size, image_size)
        + weights.fill * fill_similarity(a.size, b.size, hull, image_size))
        / total
}

/// Run the full merge hierarchy on one image.
pub fn selective_search_hierarchy(
    image: &RgbImage,
    params: &SegParams,
    weights: &SimilarityWeights,
) -> Result<RegionHierarchy> {
    params.validate()?;
    weights.validate()?;
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::EmptyInput("selective search needs a nonempty image"));
    }
    let map = graph_segment(image, params);
    let image_size = (map.width * map.height) as usize;
    let mut regions = base_regions(image, &map);
    let mut nodes: Vec<HierarchyNode> = label_masks(&map)
        .into_iter()
        .map(|mask| HierarchyNode {
            mask,
            children: None,
            similarity: None,
        })
        .collect();
    let mut alive = vec![true; regions.len()];

    let mut heap = BinaryHeap::new();
    for (a, r) in regions.iter().enumerate() {
        for &b in r.neighbors.range(a + 1..) {
            heap.push(Candidate {
                sim: similarity(r, &regions[b], image_size, weights),
                a,
                b,
            });
        }
    }

    while let Some(Candidate { sim, a, b }) = heap.pop() {
        if !alive[a] || !alive[b] {
            continue;
        }
        alive[a] = false;
        alive[b] = false;
        let (ra, rb) = (&regions[a], &regions[b]);
        let size = ra.size + rb.size;
        let (wa, wb) = (ra.size as f64 / size as f64, rb.size as f64 / size as f64);
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(p, q)| wa * p + wb * q).collect()
        };
        let mut neighbors: BTreeSet<usize> = ra.neighbors.union(&rb.neighbors).copied().collect();
        neighbors.remove(&a);
        neighbors.remove(&b);
        let merged = Region {
            size,
            color: mix(&ra.color, &rb.color),
            texture: mix(&ra.texture, &rb.texture),
            rect: ra.rect.union(rb.rect),
            neighbors,
        };
        let id = regions.len();
        for &n in &merged.neighbors {
            let nb = &mut regions[n].neighbors;
            nb.remove(&a);
            nb.remove(&b);
            nb.insert(id);
        }
        for &n in &merged.neighbors {
            heap.push(Candidate {
                sim: similarity(&regions[n], &merged, image_size, weights),
                a: n,
                b: id,
            });
        }
        let mask = nodes[a].mask.union(&nodes[b].mask)?;
        nodes.push(HierarchyNode {
            mask,
            children: Some((a, b)),
            similarity: Some(sim),
        });
        regions.push(merged);
        alive.push(true);
    }

    Ok(RegionHierarchy { base: map, nodes })
}

/// Proposals from every hierarchy region, deduplicated by exact box.
pub fn selective_search(
    image: &RgbImage,
    params: &SegParams,
    weights: &SimilarityWeights,
) -> Result<Vec<Proposal>> {
    selective_search_multi(image, std::slice::from_ref(params), weights)
}

/// Union of the hierarchies of several parameter settings, deduplicated by
/// exact box across all of them.
pub fn selective_search_multi(
    image: &RgbImage,
    params: &[SegParams],
    weights: &SimilarityWeights,
) -> Result<Vec<Proposal>> {
    let mut seen: HashSet<PixelRect> = HashSet::new();
    let mut out = Vec::new();
    for p in params {
        let hierarchy = selective_search_hierarchy(image, p, weights)?;
        for node in hierarchy.nodes {
            let Some(rect) = node.mask.tight_rect() else {
                continue;
            };
            if seen.insert(rect) {
                out.extend(Proposal::from_mask(node.mask, Provenance::Unsupervised));
            }
        }
    }
    Ok(out)
}
