//! JSON documents exchanged between subcommands.
//!
//! * proposals / grouped proposals: [`ProposalsDoc`]
//! * COCO-style annotations (ground truth, augmented labels): [`CocoDataset`]
//! * COCO-style detection results: [`ResultsDoc`]
//!
//! Every document written carries `schema_version`. Readers accept COCO
//! files without it, and results given as a bare COCO array.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{GtInstance, Prediction};
use crate::mask::{BBox, BinaryMask};
use crate::proposal::{LabelSet, Proposal, Provenance, ScoreParts};
use crate::ranking::Scored;
use crate::SCHEMA_VERSION;

/// Every instance is class-agnostic foreground.
pub const FOREGROUND_CATEGORY: u64 = 1;

fn default_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    /// `[x, y, w, h]`
    pub bbox: [f64; 4],
    pub segmentation: BinaryMask,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreParts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<usize>,
}

impl ProposalRecord {
    pub fn from_proposal(p: &Proposal, group_id: Option<usize>) -> Self {
        ProposalRecord {
            bbox: p.bbox.xywh(),
            segmentation: p.mask.clone(),
            provenance: p.provenance,
            score: Some(p.scores),
            group_id,
        }
    }

    pub fn to_proposal(&self) -> Result<Proposal> {
        let scores = self.score.unwrap_or_default();
        scores.validate()?;
        Ok(Proposal {
            bbox: BBox::from_xywh(self.bbox)?,
            mask: self.segmentation.clone(),
            scores,
            provenance: self.provenance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageProposals {
    pub image_id: u64,
    pub file_name: String,
    pub height: u32,
    pub width: u32,
    pub proposals: Vec<ProposalRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affinity: Option<Vec<Vec<f64>>>,
}

impl ImageProposals {
    pub fn to_proposals(&self) -> Result<Vec<Proposal>> {
        self.proposals.iter().map(ProposalRecord::to_proposal).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalsKind {
    Proposals,
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalsDoc {
    pub schema_version: u32,
    pub kind: ProposalsKind,
    /// Directory the images were read from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_root: Option<String>,
    pub images: Vec<ImageProposals>,
}

fn de_iscrowd<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Bool(bool),
        Int(u8),
    }
    Ok(match Flag::deserialize(d)? {
        Flag::Bool(b) => b,
        Flag::Int(i) => i != 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    #[serde(default)]
    pub file_name: String,
    pub height: u32,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    #[serde(default)]
    pub id: u64,
    pub image_id: u64,
    #[serde(default = "foreground")]
    pub category_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<BinaryMask>,
    pub bbox: [f64; 4],
    #[serde(default)]
    pub area: f64,
    #[serde(default, deserialize_with = "de_iscrowd")]
    pub iscrowd: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn foreground() -> u64 {
    FOREGROUND_CATEGORY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

impl CocoDataset {
    pub fn image(&self, id: u64) -> Option<&CocoImage> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Annotations of one image as a label set (crowd regions excluded).
    pub fn label_set(&self, image_id: u64, path: &Path) -> Result<LabelSet> {
        let mut entries = Vec::new();
        for a in self.annotations.iter().filter(|a| a.image_id == image_id && !a.iscrowd) {
            let mask = a.segmentation.clone().ok_or_else(|| {
                Error::schema(path, format!("annotation {} has no RLE segmentation", a.id))
            })?;
            entries.push(Proposal {
                bbox: BBox::from_xywh(a.bbox)?,
                mask,
                scores: ScoreParts::default(),
                provenance: a.provenance.unwrap_or(Provenance::GroundTruth),
            });
        }
        Ok(LabelSet::new(entries))
    }

    /// Ground truth grouped by image for evaluation; every image is present,
    /// possibly with no instances.
    pub fn eval_instances(&self) -> Result<BTreeMap<u64, Vec<GtInstance>>> {
        let mut out: BTreeMap<u64, Vec<GtInstance>> =
            self.images.iter().map(|i| (i.id, Vec::new())).collect();
        for a in &self.annotations {
            let slot = out.get_mut(&a.image_id).ok_or_else(|| {
                Error::schema("<ground truth>", format!("annotation {} references unknown image {}", a.id, a.image_id))
            })?;
            slot.push(GtInstance {
                bbox: BBox::from_xywh(a.bbox)?,
                mask: a.segmentation.clone(),
                ignore: a.iscrowd,
            });
        }
        Ok(out)
    }

    pub fn foreground_categories() -> Vec<CocoCategory> {
        vec![CocoCategory {
            id: FOREGROUND_CATEGORY,
            name: "object".into(),
        }]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub image_id: u64,
    pub category_id: u64,
    pub segmentation: BinaryMask,
    pub bbox: [f64; 4],
    pub score: f64,
}

impl ResultRecord {
    pub fn from_scored(image_id: u64, s: &Scored) -> Self {
        ResultRecord {
            image_id,
            category_id: FOREGROUND_CATEGORY,
            segmentation: s.proposal.mask.clone(),
            bbox: s.proposal.bbox.xywh(),
            score: s.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultsDoc {
    pub schema_version: u32,
    pub results: Vec<ResultRecord>,
}

impl<'de> Deserialize<'de> for ResultsDoc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wrapped {
            schema_version: u32,
            results: Vec<ResultRecord>,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            Wrapped(Wrapped),
            Bare(Vec<ResultRecord>),
        }
        Ok(match Either::deserialize(d)? {
            Either::Wrapped(w) => ResultsDoc {
                schema_version: w.schema_version,
                results: w.results,
            },
            Either::Bare(results) => ResultsDoc {
                schema_version: SCHEMA_VERSION,
                results,
            },
        })
    }
}

impl ResultsDoc {
    /// Predictions grouped by image, in file order.
    pub fn predictions(&self) -> Result<BTreeMap<u64, Vec<Prediction>>> {
        let mut out: BTreeMap<u64, Vec<Prediction>> = BTreeMap::new();
        for r in &self.results {
            out.entry(r.image_id).or_default().push(Prediction {
                bbox: BBox::from_xywh(r.bbox)?,
                mask: Some(r.segmentation.clone()),
                score: r.score,
            });
        }
        Ok(out)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Serialize as compact JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::schema(
            path,
            format!("schema_version {version} is not supported (expected {SCHEMA_VERSION})"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_accept_bare_array() {
        let bare = r#"[{"image_id":3,"category_id":1,"segmentation":{"size":[2,2],"counts":"121"},"bbox":[0,0,2,2],"score":0.5}]"#;
        let doc: ResultsDoc = serde_json::from_str(bare).unwrap();
        assert_eq!(doc.results.len(), 1);
        let wrapped = serde_json::to_string(&doc).unwrap();
        assert!(wrapped.starts_with(r#"{"schema_version":1,"results":["#));
        let again: ResultsDoc = serde_json::from_str(&wrapped).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn coco_iscrowd_forms() {
        let text = r#"{"images":[{"id":1,"file_name":"a.png","height":2,"width":2}],
            "annotations":[{"id":1,"image_id":1,"category_id":17,"bbox":[0,0,1,1],"iscrowd":1,
              "segmentation":{"size":[2,2],"counts":[0,1,3]}}]}"#;
        let ds: CocoDataset = serde_json::from_str(text).unwrap();
        assert!(ds.annotations[0].iscrowd);
        assert_eq!(ds.schema_version, SCHEMA_VERSION);
        let inst = ds.eval_instances().unwrap();
        assert!(inst[&1][0].ignore);
    }

    #[test]
    fn polygon_segmentation_rejected() {
        let text = r#"{"images":[],"annotations":[{"id":1,"image_id":1,"bbox":[0,0,1,1],
            "segmentation":[[0,0,1,0,1,1]]}]}"#;
        assert!(serde_json::from_str::<CocoDataset>(text).is_err());
    }
}
