//! Grouping of part proposals into whole-object proposals.
//!
//! Each part box is enlarged for context, pooled from the feature pyramid,
//! compared with every other part by cosine similarity, and the parts are
//! clustered so that mean within-group affinity stays above `tau`. Each
//! multi-part group yields one merged proposal.

mod cluster;

pub use cluster::{check_symmetric, cluster, partition_objective, Clustering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{roi_align, FeaturePyramid, FeatureVector, RoiAlignConfig};
use crate::mask::{mask_union, BBox};
use crate::proposal::{Proposal, Provenance, ScoreParts};
use crate::ranking::cohesion_score;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    /// Relative box growth for context, `0 <= delta < 1`.
    pub delta: f64,
    /// Affinity threshold separating "same object" from "different".
    pub tau: f64,
    /// Emit the input parts alongside the merged proposals.
    pub keep_originals: bool,
    /// Replace each part's classification score with its group's cohesion.
    pub cohesion_scores: bool,
    /// Skip clustering: every part is its own group.
    pub disabled: bool,
    pub roi: RoiAlignConfig,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            delta: 0.1,
            tau: 0.5,
            keep_originals: true,
            cohesion_scores: true,
            disabled: false,
            roi: RoiAlignConfig::default(),
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::param("delta", format!("must lie in [0, 1), got {}", self.delta)));
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(Error::param("tau", format!("must lie in [-1, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

/// Dense symmetric `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl AffinityMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        AffinityMatrix { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::param("affinity", "matrix must be square"));
        }
        Ok(AffinityMatrix {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn set_symmetric(&mut self, i: usize, j: usize, v: f64) {
        self.set(i, j, v);
        self.set(j, i, v);
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1)).take(self.n)
    }
}

/// Grow width and height by `1 + delta` about the center, then clip to the
/// `width x height` image.
pub fn expand_box(b: &BBox, delta: f64, width: u32, height: u32) -> Result<BBox> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::param("delta", format!("must lie in [0, 1), got {delta}")));
    }
    let grown = BBox::new(b.cx, b.cy, (1.0 + delta) * b.w, (1.0 + delta) * b.h)?;
    grown
        .clip(width, height)
        .ok_or_else(|| Error::DegenerateBox(format!("{b:?} lies outside the {width}x{height} image")))
}

/// Cosine similarity of every pair; diagonal exactly 1.
pub fn pairwise_affinity(features: &[FeatureVector]) -> Result<AffinityMatrix> {
    let n = features.len();
    if let Some(first) = features.first() {
        let d = first.dim();
        for (index, f) in features.iter().enumerate() {
            if f.dim() != d {
                return Err(Error::FeatureDim {
                    index,
                    expected: d,
                    found: f.dim(),
                });
            }
        }
    }
    let norms: Vec<f64> = features.iter().map(FeatureVector::norm).collect();
    if let Some(index) = norms.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::ZeroNorm { index });
    }
    let d = features.first().map_or(0, FeatureVector::dim);
    let packed: Vec<f64> = features.iter().flat_map(|f| f.values.iter().copied()).collect();
    // Gram matrix F·Fᵀ in one blocked product
    let mut gram = vec![0.0f64; n * n];
    if n > 0 && d > 0 {
        let (rs, nd) = (d as isize, n as isize);
        unsafe {
            matrixmultiply::dgemm(
                n,
                d,
                n,
                1.0,
                packed.as_ptr(),
                rs,
                1,
                packed.as_ptr(),
                1,
                rs,
                0.0,
                gram.as_mut_ptr(),
                nd,
                1,
            );
        }
    }
    let mut m = AffinityMatrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            m.set_symmetric(i, j, (gram[i * n + j] / (norms[i] * norms[j])).clamp(-1.0, 1.0));
        }
    }
    Ok(m)
}

/// One merged proposal per multi-member group: union mask, tight box,
/// per-component maximum scores. With `keep_originals` the parts come
/// first; otherwise singleton groups pass their member through.
pub fn merge_groups(parts: &[Proposal], groups: &[Vec<usize>], keep_originals: bool) -> Result<Vec<Proposal>> {
    Ok(merge_with_ids(parts, groups, keep_originals)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

fn merge_with_ids(
    parts: &[Proposal],
    groups: &[Vec<usize>],
    keep_originals: bool,
) -> Result<Vec<(Proposal, usize)>> {
    let mut group_of = vec![usize::MAX; parts.len()];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            let slot = group_of
                .get_mut(i)
                .ok_or_else(|| Error::param("groups", format!("index {i} out of range")))?;
            if *slot != usize::MAX {
                return Err(Error::param("groups", format!("index {i} appears twice")));
            }
            *slot = g;
        }
    }
    if let Some(i) = group_of.iter().position(|&g| g == usize::MAX) {
        return Err(Error::param("groups", format!("part {i} belongs to no group")));
    }

    let mut out = Vec::new();
    if keep_originals {
        out.extend(parts.iter().cloned().zip(group_of.iter().copied()));
    }
    for (g, members) in groups.iter().enumerate() {
        if members.len() == 1 {
            if !keep_originals {
                out.push((parts[members[0]].clone(), g));
            }
            continue;
        }
        let mask = mask_union(members.iter().map(|&i| &parts[i].mask))?;
        let scores = members
            .iter()
            .map(|&i| parts[i].scores)
            .reduce(ScoreParts::max)
            .expect("group is nonempty");
        let Some(merged) = Proposal::from_mask(mask, Provenance::Grouped) else {
            continue;
        };
        out.push((merged.with_scores(scores), g));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PartitionResult {
    pub groups: Vec<Vec<usize>>,
    /// Merged proposals, one per multi-member group, in group order.
    pub merged: Vec<Proposal>,
    pub affinity: AffinityMatrix,
    pub merge_values: Vec<f64>,
    /// Final proposals (parts then merged when keeping originals).
    pub output: Vec<Proposal>,
    /// Group index of each entry in `output`.
    pub output_groups: Vec<usize>,
}

/// Pool one feature per part from its context-expanded box.
pub fn part_features(parts: &[Proposal], pyramid: &FeaturePyramid, cfg: &GroupingConfig) -> Result<Vec<FeatureVector>> {
    let (w, h) = (pyramid.image_width(), pyramid.image_height());
    parts
        .par_iter()
        .map(|p| {
            let expanded = expand_box(&p.bbox, cfg.delta, w, h)?;
            roi_align(pyramid, &expanded, &cfg.roi)
        })
        .collect()
}

/// Expand, pool, compare, cluster and merge.
pub fn group_pipeline(parts: &[Proposal], pyramid: &FeaturePyramid, cfg: &GroupingConfig) -> Result<PartitionResult> {
    cfg.validate()?;
    if parts.is_empty() {
        return Err(Error::EmptyInput("grouping needs at least one part"));
    }
    let features = part_features(parts, pyramid, cfg)?;
    let affinity = pairwise_affinity(&features)?;
    let clustering = if cfg.disabled {
        Clustering {
            groups: (0..parts.len()).map(|i| vec![i]).collect(),
            merge_values: Vec::new(),
        }
    } else {
        cluster(&affinity, cfg.tau)?
    };
    debug_assert!(clustering
        .merge_values
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-9));

    let mut scored: Vec<Proposal> = parts.to_vec();
    if cfg.cohesion_scores {
        for g in &clustering.groups {
            let c = cohesion_score(&affinity, g, cfg.tau);
            for &i in g {
                scored[i].scores.c = c;
            }
        }
    }
    let tagged = merge_with_ids(&scored, &clustering.groups, cfg.keep_originals)?;
    let merged = tagged
        .iter()
        .filter(|(p, _)| p.provenance == Provenance::Grouped)
        .map(|(p, _)| p.clone())
        .collect();
    let (output, output_groups) = tagged.into_iter().unzip();
    Ok(PartitionResult {
        groups: clustering.groups,
        merged,
        affinity,
        merge_values: clustering.merge_values,
        output,
        output_groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{BinaryMask, PixelRect};

    fn part(x1: u32, y1: u32, x2: u32, y2: u32) -> Proposal {
        Proposal::from_mask(
            BinaryMask::from_rect(40, 40, PixelRect { x1, y1, x2, y2 }),
            Provenance::Part,
        )
        .unwrap()
    }

    #[test]
    fn expansion_arithmetic() {
        let b = BBox::new(50.0, 40.0, 30.0, 20.0).unwrap();
        let e = expand_box(&b, 0.1, 200, 200).unwrap();
        assert!((e.cx - 50.0).abs() < 1e-9 && (e.cy - 40.0).abs() < 1e-9);
        assert!((e.w - 33.0).abs() < 1e-9 && (e.h - 22.0).abs() < 1e-9);
        assert_eq!(expand_box(&b, 0.0, 200, 200).unwrap(), b);
    }

    #[test]
    fn expansion_clips_at_border() {
        let b = BBox::from_corners(0.0, 0.0, 20.0, 10.0).unwrap();
        let e = expand_box(&b, 0.5, 100, 100).unwrap();
        assert_eq!(e.corners(), [0.0, 0.0, 25.0, 12.5]);
        assert!(expand_box(&b, 1.0, 100, 100).is_err());
    }

    #[test]
    fn affinity_examples() {
        let f = |v: &[f64]| FeatureVector { values: v.to_vec() };
        let m = pairwise_affinity(&[f(&[1.0, 1.0]), f(&[1.0, 0.0]), f(&[0.0, 3.0]), f(&[2.0, 2.0])]).unwrap();
        assert!((m.get(0, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(m.get(1, 2), 0.0);
        assert!((m.get(0, 3) - 1.0).abs() < 1e-12);
        for i in 0..4 {
            assert_eq!(m.get(i, i), 1.0);
            for j in 0..4 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn zero_norm_names_index() {
        let f = |v: &[f64]| FeatureVector { values: v.to_vec() };
        assert!(matches!(
            pairwise_affinity(&[f(&[1.0]), f(&[0.0])]),
            Err(Error::ZeroNorm { index: 1 })
        ));
        assert!(matches!(
            pairwise_affinity(&[f(&[1.0]), f(&[0.0, 1.0])]),
            Err(Error::FeatureDim { index: 1, .. })
        ));
    }

    #[test]
    fn merge_two_part_square() {
        let parts = vec![part(10, 10, 20, 15), part(10, 15, 20, 20)];
        let out = merge_groups(&parts, &[vec![0, 1]], true).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].mask, BinaryMask::from_rect(40, 40, PixelRect { x1: 10, y1: 10, x2: 20, y2: 20 }));
        assert_eq!(out[2].provenance, Provenance::Grouped);
        assert_eq!(out[2].bbox.corners(), [10.0, 10.0, 20.0, 20.0]);
    }

    #[test]
    fn singletons_pass_through() {
        let parts = vec![part(0, 0, 5, 5), part(10, 10, 20, 20)];
        let out = merge_groups(&parts, &[vec![0], vec![1]], true).unwrap();
        assert_eq!(out, parts);
        let out = merge_groups(&parts, &[vec![0], vec![1]], false).unwrap();
        assert_eq!(out, parts);
    }

    #[test]
    fn disjoint_merge_adds_areas() {
        // 5x6 = 30 and 5x10 = 50
        let parts = vec![part(0, 0, 5, 6), part(20, 20, 25, 30)];
        let out = merge_groups(&parts, &[vec![0, 1]], false).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].mask.area(), 80);
    }

    #[test]
    fn merged_scores_take_member_max() {
        let mut parts = vec![part(0, 0, 5, 6), part(20, 20, 25, 30)];
        parts[0].scores = ScoreParts { c: 0.9, b: 0.2, m: 0.4 };
        parts[1].scores = ScoreParts { c: 0.3, b: 0.7, m: 0.5 };
        let out = merge_groups(&parts, &[vec![0, 1]], false).unwrap();
        assert_eq!(out[0].scores, ScoreParts { c: 0.9, b: 0.7, m: 0.5 });
    }

    #[test]
    fn invalid_groups_rejected() {
        let parts = vec![part(0, 0, 5, 6), part(20, 20, 25, 30)];
        assert!(merge_groups(&parts, &[vec![0]], true).is_err());
        assert!(merge_groups(&parts, &[vec![0, 1], vec![1]], true).is_err());
        assert!(merge_groups(&parts, &[vec![0, 2]], true).is_err());
    }
}
