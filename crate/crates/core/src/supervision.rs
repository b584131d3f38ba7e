//! Training-label augmentation: ground truth plus non-duplicate unsupervised
//! masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::mask_iou;
use crate::proposal::LabelSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// An unsupervised mask is dropped when its IoU with some ground-truth
    /// mask is strictly greater than this.
    pub iou_exclude_threshold: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            iou_exclude_threshold: 0.9,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_exclude_threshold) {
            return Err(Error::param(
                "iou_thresh",
                format!("must lie in [0, 1], got {}", self.iou_exclude_threshold),
            ));
        }
        Ok(())
    }
}

/// `S` followed by every element of `U` whose mask IoU with all of `S` is at
/// most the threshold. Elements of `U` are not deduplicated against each other.
pub fn augment_labels(gt: &LabelSet, unsup: &LabelSet, cfg: &AugmentationConfig) -> Result<LabelSet> {
    cfg.validate()?;
    if let Some(first) = gt.entries.first().or(unsup.entries.first()) {
        let dims = first.mask.dims();
        for p in gt.iter().chain(unsup.iter()) {
            if p.mask.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: p.mask.dims(),
                });
            }
        }
    }

    let mut entries = gt.entries.clone();
    for u in unsup.iter() {
        let mut duplicate = false;
        for s in gt.iter() {
            if mask_iou(&u.mask, &s.mask)? > cfg.iou_exclude_threshold {
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            entries.push(u.clone());
        }
    }
    Ok(LabelSet::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{BinaryMask, PixelRect};
    use crate::proposal::{Proposal, Provenance};

    fn rect(x1: u32, y1: u32, x2: u32, y2: u32, prov: Provenance) -> Proposal {
        Proposal::from_mask(BinaryMask::from_rect(20, 20, PixelRect { x1, y1, x2, y2 }), prov)
            .unwrap()
    }

    #[test]
    fn identical_mask_excluded() {
        let s = LabelSet::new(vec![rect(0, 0, 10, 10, Provenance::GroundTruth)]);
        let u = LabelSet::new(vec![rect(0, 0, 10, 10, Provenance::Unsupervised)]);
        let a = augment_labels(&s, &u, &AugmentationConfig::default()).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.entries[0].provenance, Provenance::GroundTruth);
    }

    #[test]
    fn iou_exactly_at_threshold_kept() {
        // 10 columns vs 9 of them: IoU = 90 / 100 = 0.9, not greater than 0.9
        let s = LabelSet::new(vec![rect(0, 0, 10, 10, Provenance::GroundTruth)]);
        let u = LabelSet::new(vec![rect(0, 0, 9, 10, Provenance::Unsupervised)]);
        let a = augment_labels(&s, &u, &AugmentationConfig::default()).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.entries[1].provenance, Provenance::Unsupervised);
    }

    #[test]
    fn disjoint_kept_and_order_preserved() {
        let s = LabelSet::new(vec![rect(0, 0, 5, 5, Provenance::GroundTruth)]);
        let u = LabelSet::new(vec![
            rect(10, 10, 15, 15, Provenance::Unsupervised),
            rect(0, 0, 5, 5, Provenance::Unsupervised),
            rect(6, 0, 9, 3, Provenance::Unsupervised),
        ]);
        let a = augment_labels(&s, &u, &AugmentationConfig::default()).unwrap();
        assert_eq!(a.entries, vec![s.entries[0].clone(), u.entries[0].clone(), u.entries[2].clone()]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = LabelSet::new(vec![rect(0, 0, 5, 5, Provenance::GroundTruth)]);
        let other = Proposal::from_mask(
            BinaryMask::from_rect(8, 8, PixelRect { x1: 0, y1: 0, x2: 2, y2: 2 }),
            Provenance::Unsupervised,
        )
        .unwrap();
        let u = LabelSet::new(vec![other]);
        assert!(matches!(
            augment_labels(&s, &u, &AugmentationConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn threshold_range_checked() {
        let cfg = AugmentationConfig {
            iou_exclude_threshold: 1.5,
        };
        assert!(augment_labels(&LabelSet::default(), &LabelSet::default(), &cfg).is_err());
    }
}
