//! Class-agnostic average recall at K detections per image.
//!
//! For every IoU threshold in `0.50:0.05:0.95`, the top-K predictions of an
//! image are matched one-to-one to ground truth in score order: each
//! prediction takes the unmatched ground-truth instance it overlaps most
//! (at least the threshold). Recall is matched over total ground truth across
//! the dataset, and AR@K averages recall over the ten thresholds. Ignored
//! (crowd) instances may absorb a prediction but never count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{box_iou, mask_iou, BBox, BinaryMask};

pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Box,
    Mask,
}

impl IouKind {
    pub fn parse(s: &str) -> Result<Vec<IouKind>> {
        match s {
            "box" => Ok(vec![IouKind::Box]),
            "mask" => Ok(vec![IouKind::Mask]),
            "both" => Ok(vec![IouKind::Box, IouKind::Mask]),
            other => Err(Error::Config(format!(
                "unknown evaluation kind `{other}`, expected box, mask or both"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub bbox: BBox,
    pub mask: Option<BinaryMask>,
    pub ignore: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub bbox: BBox,
    pub mask: Option<BinaryMask>,
    pub score: f64,
}

/// Recall figures for one IoU kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub kind: IouKind,
    pub ks: Vec<usize>,
    pub num_images: usize,
    pub num_gt: u64,
    /// AR@K.
    pub ar: BTreeMap<usize, f64>,
    /// Recall at each of the ten thresholds, per K.
    pub per_threshold_recall: BTreeMap<usize, Vec<f64>>,
    /// Matched ground-truth count at each threshold, per K.
    pub matched_counts: BTreeMap<usize, Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub thresholds: Vec<f64>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none", default)]
    pub box_report: Option<KindReport>,
    #[serde(rename = "mask", skip_serializing_if = "Option::is_none", default)]
    pub mask_report: Option<KindReport>,
}

impl EvalReport {
    pub fn new(reports: Vec<KindReport>) -> Self {
        let mut out = EvalReport {
            schema_version: crate::SCHEMA_VERSION,
            thresholds: IOU_THRESHOLDS.to_vec(),
            box_report: None,
            mask_report: None,
        };
        for r in reports {
            match r.kind {
                IouKind::Box => out.box_report = Some(r),
                IouKind::Mask => out.mask_report = Some(r),
            }
        }
        out
    }

    pub fn ar_box(&self) -> Option<&BTreeMap<usize, f64>> {
        self.box_report.as_ref().map(|r| &r.ar)
    }

    pub fn ar_mask(&self) -> Option<&BTreeMap<usize, f64>> {
        self.mask_report.as_ref().map(|r| &r.ar)
    }

    /// Plain-text table with one column per AR figure, percentages.
    pub fn table(&self) -> String {
        let mut header = String::new();
        let mut values = String::new();
        for (tag, report) in [("B", &self.box_report), ("M", &self.mask_report)] {
            if let Some(r) = report {
                for (k, ar) in &r.ar {
                    let name = format!("AR_{tag}@{k}");
                    let _ = write!(header, "{name:>10}");
                    let _ = write!(values, "{:>10.1}", 100.0 * ar);
                }
            }
        }
        format!("{header}\n{values}\n")
    }
}

fn iou(kind: IouKind, gt: &GtInstance, p: &Prediction) -> Result<f64> {
    match kind {
        IouKind::Box => Ok(box_iou(&gt.bbox, &p.bbox)),
        IouKind::Mask => match (&gt.mask, &p.mask) {
            (Some(g), Some(m)) => mask_iou(g, m),
            _ => Err(Error::Config("mask evaluation needs masks on ground truth and predictions".into())),
        },
    }
}

/// Greedy one-to-one matching of score-ordered predictions at `threshold`.
/// `ious[p][g]`. Returns the number of matched non-ignored instances.
pub fn greedy_match_count(ious: &[Vec<f64>], ignore: &[bool], threshold: f64) -> u64 {
    let mut taken = vec![false; ignore.len()];
    let mut matched = 0u64;
    for row in ious {
        let mut best: Option<usize> = None;
        for (g, &v) in row.iter().enumerate() {
            if ignore[g] || taken[g] || v < threshold {
                continue;
            }
            if best.is_none_or(|b| v > row[b]) {
                best = Some(g);
            }
        }
        if let Some(g) = best {
            taken[g] = true;
            matched += 1;
        }
        // otherwise the prediction may land on an ignored instance, which
        // neither counts nor blocks anything
    }
    matched
}

/// Evaluate one IoU kind. `preds` per image must be sorted by descending
/// score; every prediction image id must exist in `gt`.
pub fn evaluate(
    gt: &BTreeMap<u64, Vec<GtInstance>>,
    preds: &BTreeMap<u64, Vec<Prediction>>,
    ks: &[usize],
    kind: IouKind,
) -> Result<KindReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::param("ks", "need at least one K, all >= 1"));
    }
    let unknown: Vec<u64> = preds.keys().filter(|id| !gt.contains_key(id)).copied().collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownImageIds(unknown));
    }
    for (&image_id, list) in preds {
        if list.windows(2).any(|w| w[1].score > w[0].score) {
            return Err(Error::UnsortedPredictions { image_id });
        }
    }
    let ks: Vec<usize> = ks.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let k_max = *ks.last().expect("nonempty");

    let per_image: Vec<Vec<[u64; 10]>> = gt
        .par_iter()
        .map(|(id, instances)| {
            let empty = Vec::new();
            let list = preds.get(id).unwrap_or(&empty);
            let top = &list[..list.len().min(k_max)];
            let ious = top
                .iter()
                .map(|p| instances.iter().map(|g| iou(kind, g, p)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let ignore: Vec<bool> = instances.iter().map(|g| g.ignore).collect();
            Ok(ks
                .iter()
                .map(|&k| {
                    let rows = &ious[..ious.len().min(k)];
                    IOU_THRESHOLDS.map(|t| greedy_match_count(rows, &ignore, t))
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let num_gt: u64 = gt.values().flatten().filter(|g| !g.ignore).count() as u64;
    let mut report = KindReport {
        kind,
        ks: ks.clone(),
        num_images: gt.len(),
        num_gt,
        ar: BTreeMap::new(),
        per_threshold_recall: BTreeMap::new(),
        matched_counts: BTreeMap::new(),
    };
    for (ki, &k) in ks.iter().enumerate() {
        let mut matched = [0u64; 10];
        for img in &per_image {
            for t in 0..10 {
                matched[t] += img[ki][t];
            }
        }
        let recall: Vec<f64> = matched
            .iter()
            .map(|&m| if num_gt == 0 { 0.0 } else { m as f64 / num_gt as f64 })
            .collect();
        report.ar.insert(k, recall.iter().sum::<f64>() / recall.len() as f64);
        report.per_threshold_recall.insert(k, recall);
        report.matched_counts.insert(k, matched.to_vec());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt_box(x1: f64, y1: f64, x2: f64, y2: f64) -> GtInstance {
        GtInstance {
            bbox: BBox::from_corners(x1, y1, x2, y2).unwrap(),
            mask: None,
            ignore: false,
        }
    }

    fn pred(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Prediction {
        Prediction {
            bbox: BBox::from_corners(x1, y1, x2, y2).unwrap(),
            mask: None,
            score,
        }
    }

    fn single(gt: Vec<GtInstance>, preds: Vec<Prediction>, ks: &[usize]) -> Result<KindReport> {
        evaluate(&BTreeMap::from([(1, gt)]), &BTreeMap::from([(1, preds)]), ks, IouKind::Box)
    }

    #[test]
    fn perfect_match_gives_one() {
        let r = single(vec![gt_box(0.0, 0.0, 10.0, 10.0)], vec![pred(0.0, 0.0, 10.0, 10.0, 0.9)], &[100]).unwrap();
        assert_eq!(r.ar[&100], 1.0);
    }

    #[test]
    fn no_predictions_gives_zero() {
        let r = single(vec![gt_box(0.0, 0.0, 10.0, 10.0)], vec![], &[100]).unwrap();
        assert_eq!(r.ar[&100], 0.0);
    }

    #[test]
    fn iou_point_six_gives_three_tenths() {
        // intersection 60, union 100
        let r = single(vec![gt_box(0.0, 0.0, 10.0, 10.0)], vec![pred(0.0, 0.0, 10.0, 6.0, 0.9)], &[100]).unwrap();
        assert_eq!(r.matched_counts[&100], vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(r.ar[&100], 0.3);
    }

    #[test]
    fn one_to_one_matching() {
        // two predictions on one instance recover it once
        let r = single(
            vec![gt_box(0.0, 0.0, 10.0, 10.0), gt_box(50.0, 50.0, 60.0, 60.0)],
            vec![pred(0.0, 0.0, 10.0, 10.0, 0.9), pred(0.0, 0.0, 10.0, 10.0, 0.8)],
            &[10],
        )
        .unwrap();
        assert_eq!(r.ar[&10], 0.5);
    }

    #[test]
    fn k_limits_predictions() {
        let r = single(
            vec![gt_box(0.0, 0.0, 10.0, 10.0)],
            vec![pred(30.0, 30.0, 40.0, 40.0, 0.9), pred(0.0, 0.0, 10.0, 10.0, 0.8)],
            &[1, 2],
        )
        .unwrap();
        assert_eq!(r.ar[&1], 0.0);
        assert_eq!(r.ar[&2], 1.0);
    }

    #[test]
    fn ignored_instances_do_not_count() {
        let mut crowd = gt_box(20.0, 20.0, 40.0, 40.0);
        crowd.ignore = true;
        let r = single(
            vec![gt_box(0.0, 0.0, 10.0, 10.0), crowd],
            vec![pred(20.0, 20.0, 40.0, 40.0, 0.9)],
            &[100],
        )
        .unwrap();
        assert_eq!(r.num_gt, 1);
        assert_eq!(r.ar[&100], 0.0);
    }

    #[test]
    fn unsorted_rejected() {
        let err = single(
            vec![gt_box(0.0, 0.0, 10.0, 10.0)],
            vec![pred(0.0, 0.0, 10.0, 10.0, 0.1), pred(0.0, 0.0, 10.0, 10.0, 0.5)],
            &[100],
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnsortedPredictions { image_id: 1 }));
    }

    #[test]
    fn unknown_ids_listed() {
        let err = evaluate(
            &BTreeMap::from([(1, vec![])]),
            &BTreeMap::from([(7, vec![]), (9, vec![])]),
            &[100],
            IouKind::Box,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownImageIds(ref v) if v == &vec![7, 9]));
    }

    #[test]
    fn table_layout() {
        let r = single(vec![gt_box(0.0, 0.0, 10.0, 10.0)], vec![pred(0.0, 0.0, 10.0, 10.0, 0.9)], &[100, 300]).unwrap();
        let report = EvalReport::new(vec![r]);
        let t = report.table();
        assert!(t.contains("AR_B@100") && t.contains("AR_B@300") && t.contains("100.0"));
    }
}
