//! Graph-based segmentation over the 8-connected pixel grid.
//!
//! Pixels are nodes; edges join each pixel to its right, lower, lower-right
//! and upper-right neighbors, weighted by Euclidean RGB distance after
//! Gaussian smoothing. Edges are visited in ascending weight (ties in
//! construction order) and two components merge when the edge weight does not
//! exceed either component's internal difference plus `k / |C|`. A final pass
//! absorbs components below `min_size`.

use image::RgbImage;

use super::SegParams;
use crate::raster::{gaussian_blur, rgb_planes};

/// Per-pixel region ids, row-major, numbered `0..count` in raster order of
/// first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl LabelMap {
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> u32 {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

struct Edge {
    a: u32,
    b: u32,
    w: f32,
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
    /// Largest edge weight inside the component's spanning tree.
    internal: Vec<f32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    fn join(&mut self, a: u32, b: u32, w: f32) -> u32 {
        let (a, b) = (a as usize, b as usize);
        let (root, child) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        if self.rank[a] == self.rank[b] {
            self.rank[root] += 1;
        }
        self.parent[child] = root as u32;
        self.size[root] += self.size[child];
        self.internal[root] = w;
        root as u32
    }
}

pub fn graph_segment(image: &RgbImage, params: &SegParams) -> LabelMap {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let n = w * h;
    if n == 0 {
        return LabelMap {
            width: image.width(),
            height: image.height(),
            labels: Vec::new(),
            count: 0,
        };
    }
    let planes = rgb_planes(image).map(|p| gaussian_blur(&p, params.sigma as f32));
    let diff = |a: usize, b: usize| -> f32 {
        planes
            .iter()
            .map(|p| {
                let d = p.data[a] - p.data[b];
                d * d
            })
            .sum::<f32>()
            .sqrt()
    };

    let mut edges = Vec::with_capacity(4 * n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut push = |j: usize| {
                edges.push(Edge {
                    a: i as u32,
                    b: j as u32,
                    w: diff(i, j),
                })
            };
            if x + 1 < w {
                push(i + 1);
            }
            if y + 1 < h {
                push(i + w);
            }
            if x + 1 < w && y + 1 < h {
                push(i + w + 1);
            }
            if x + 1 < w && y > 0 {
                push(i - w + 1);
            }
        }
    }
    edges.sort_by(|a, b| a.w.total_cmp(&b.w));

    let k = params.scale_k as f32;
    let mut set = DisjointSet::new(n);
    let mut threshold = vec![k; n];
    for e in &edges {
        let a = set.find(e.a);
        let b = set.find(e.b);
        if a != b && e.w <= threshold[a as usize] && e.w <= threshold[b as usize] {
            let root = set.join(a, b, e.w);
            threshold[root as usize] = e.w + k / set.size[root as usize] as f32;
        }
    }

    let min_size = params.min_size as u32;
    for e in &edges {
        let a = set.find(e.a);
        let b = set.find(e.b);
        if a != b && (set.size[a as usize] < min_size || set.size[b as usize] < min_size) {
            let internal = set.internal[a as usize].max(set.internal[b as usize]);
            set.join(a, b, internal);
        }
    }

    let mut remap = vec![u32::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut count = 0u32;
    for i in 0..n {
        let root = set.find(i as u32) as usize;
        if remap[root] == u32::MAX {
            remap[root] = count;
            count += 1;
        }
        labels.push(remap[root]);
    }
    LabelMap {
        width: image.width(),
        height: image.height(),
        labels,
        count: count as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn params(k: f64, sigma: f64, min_size: usize) -> SegParams {
        SegParams {
            scale_k: k,
            sigma,
            min_size,
        }
    }

    #[test]
    fn constant_image_is_one_region() {
        let img = RgbImage::from_pixel(16, 12, Rgb([90, 120, 30]));
        let map = graph_segment(&img, &SegParams::default());
        assert_eq!(map.count, 1);
        assert!(map.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn black_white_halves_split_in_two() {
        // Inside each half every edge weighs 0; every crossing edge weighs
        // sqrt(3) * 255 ~ 441.7, far above the largest threshold 0 + 10 / 1.
        let img = RgbImage::from_fn(4, 2, |x, _| {
            if x < 2 {
                Rgb([0, 0, 0])
            } else {
                Rgb([255, 255, 255])
            }
        });
        let map = graph_segment(&img, &params(10.0, 0.0, 1));
        assert_eq!(map.count, 2);
        assert_eq!(map.labels, vec![0, 0, 1, 1, 0, 0, 1, 1]);
    }

    #[test]
    fn min_size_absorbs_small_components() {
        let img = RgbImage::from_fn(4, 2, |x, _| {
            if x < 2 {
                Rgb([0, 0, 0])
            } else {
                Rgb([255, 255, 255])
            }
        });
        let map = graph_segment(&img, &params(10.0, 0.0, 5));
        assert_eq!(map.count, 1);
    }

    #[test]
    fn partition_covers_image() {
        let img = RgbImage::from_fn(23, 17, |x, y| Rgb([(x * 11) as u8, (y * 13) as u8, ((x * y) % 256) as u8]));
        let map = graph_segment(&img, &params(30.0, 0.5, 4));
        let sizes = map.sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 23 * 17);
        assert!(sizes.iter().all(|&s| s >= 4));
    }
}
