//! Score fusion, duplicate suppression and top-K selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::AffinityMatrix;
use crate::mask::{box_iou, mask_iou};
use crate::proposal::Proposal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapKind {
    Mask,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub top_k: usize,
    /// A proposal overlapping a kept one by more than this is dropped.
    pub dedup_iou: f64,
    pub dedup_kind: OverlapKind,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            top_k: 300,
            dedup_iou: 0.95,
            dedup_kind: OverlapKind::Mask,
        }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k < 1 {
            return Err(Error::param("top_k", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.dedup_iou) {
            return Err(Error::param("dedup_iou", format!("must lie in [0, 1], got {}", self.dedup_iou)));
        }
        Ok(())
    }
}

/// Geometric mean `(c * b * m)^(1/3)`.
pub fn fuse_score(c: f64, b: f64, m: f64) -> Result<f64> {
    for (name, v) in [("c", c), ("b", b), ("m", m)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param("score", format!("component {name} = {v} outside [0, 1]")));
        }
    }
    Ok((c * b * m).cbrt())
}

/// Classification-score surrogate from group cohesion: the mean pairwise
/// affinity of the group mapped from `[-1, 1]` to `[0, 1]`. A singleton has
/// no pairs and scores as if its mean shifted affinity were zero, i.e.
/// `(1 + tau) / 2`.
pub fn cohesion_score(affinity: &AffinityMatrix, group: &[usize], tau: f64) -> f64 {
    if group.len() < 2 {
        return ((1.0 + tau) / 2.0).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (k, &i) in group.iter().enumerate() {
        for &j in &group[k + 1..] {
            sum += affinity.get(i, j);
            pairs += 1;
        }
    }
    ((sum / pairs as f64 + 1.0) / 2.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub proposal: Proposal,
    pub score: f64,
}

fn is_duplicate(kept: &Proposal, p: &Proposal, cfg: &RankConfig) -> Result<bool> {
    match cfg.dedup_kind {
        OverlapKind::Box => Ok(box_iou(&kept.bbox, &p.bbox) > cfg.dedup_iou),
        OverlapKind::Mask => {
            // IoU <= min(area) / max(area); skip the run walk when that bound
            // already rules out suppression
            let (x, y) = (kept.mask.area(), p.mask.area());
            let bound = x.min(y) as f64 / x.max(y).max(1) as f64;
            if bound <= cfg.dedup_iou {
                return Ok(false);
            }
            Ok(mask_iou(&kept.mask, &p.mask)? > cfg.dedup_iou)
        }
    }
}

/// Sort by fused score (descending; ties by larger mask area, then input
/// order), greedily drop near-duplicates of already kept proposals, and keep
/// at most `top_k`.
pub fn rank(proposals: &[Proposal], cfg: &RankConfig) -> Result<Vec<Scored>> {
    cfg.validate()?;
    let mut order: Vec<(usize, f64, u64)> = proposals
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((i, fuse_score(p.scores.c, p.scores.b, p.scores.m)?, p.mask.area())))
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));

    let mut kept: Vec<Scored> = Vec::with_capacity(cfg.top_k.min(order.len()));
    for (i, score, _) in order {
        if kept.len() == cfg.top_k {
            break;
        }
        let p = &proposals[i];
        let mut duplicate = false;
        for k in &kept {
            if is_duplicate(&k.proposal, p, cfg)? {
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            kept.push(Scored {
                proposal: p.clone(),
                score,
            });
        }
    }
    Ok(kept)
}
