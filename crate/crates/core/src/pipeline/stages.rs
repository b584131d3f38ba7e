//! Per-stage operations on in-memory documents. The CLI commands, the
//! orchestrator and the C interface all go through these.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::schema::{
    check_version, CocoAnnotation, CocoDataset, ImageProposals, ProposalRecord, ProposalsDoc,
    ProposalsKind, ResultRecord, ResultsDoc,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport, IouKind};
use crate::features::FeaturePyramid;
use crate::grouping::{group_pipeline, GroupingConfig};
use crate::proposal::{LabelSet, Proposal};
use crate::proposals::{graph_segment, grid_proposals, selective_search, SegParams, SimilarityWeights};
use crate::ranking::{rank, RankConfig};
use crate::supervision::{augment_labels, AugmentationConfig};
use crate::SCHEMA_VERSION;

/// Bottom-up proposal algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Every region of the selective-search merge hierarchy.
    Selsearch,
    /// The base graph segmentation only.
    Fzs,
    /// Fixed square tiles.
    Grid,
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selsearch" => Ok(Algo::Selsearch),
            "fzs" => Ok(Algo::Fzs),
            "grid" => Ok(Algo::Grid),
            other => Err(Error::Config(format!(
                "unknown proposal algorithm `{other}`, expected selsearch, fzs or grid"
            ))),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Selsearch => "selsearch",
            Algo::Fzs => "fzs",
            Algo::Grid => "grid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposeOptions {
    pub algo: Algo,
    pub seg: SegParams,
    pub weights: SimilarityWeights,
    /// Tile size for `grid`.
    pub cell: u32,
}

impl Default for ProposeOptions {
    fn default() -> Self {
        ProposeOptions {
            algo: Algo::Selsearch,
            seg: SegParams::default(),
            weights: SimilarityWeights::default(),
            cell: 64,
        }
    }
}

pub fn propose_image(image: &RgbImage, opts: &ProposeOptions) -> Result<Vec<Proposal>> {
    match opts.algo {
        Algo::Selsearch => selective_search(image, &opts.seg, &opts.weights),
        Algo::Fzs => {
            opts.seg.validate()?;
            if image.width() == 0 || image.height() == 0 {
                return Err(Error::EmptyInput("segmentation needs a nonempty image"));
            }
            let map = graph_segment(image, &opts.seg);
            Ok(crate::proposals::label_masks(&map)
                .into_iter()
                .filter_map(|m| Proposal::from_mask(m, crate::proposal::Provenance::Unsupervised))
                .collect())
        }
        Algo::Grid => {
            if opts.cell == 0 {
                return Err(Error::param("cell", "must be >= 1"));
            }
            Ok(grid_proposals(image.height(), image.width(), opts.cell))
        }
    }
}

/// Group one image's proposals. An image without proposals passes through.
pub fn group_image(
    input: &ImageProposals,
    pyramid: &FeaturePyramid,
    cfg: &GroupingConfig,
    dump_affinity: bool,
) -> Result<ImageProposals> {
    let parts = input.to_proposals()?;
    if (pyramid.image_height(), pyramid.image_width()) != (input.height, input.width) {
        return Err(Error::DimensionMismatch {
            expected: (input.height, input.width),
            found: (pyramid.image_height(), pyramid.image_width()),
        });
    }
    for p in &parts {
        if p.mask.dims() != (input.height, input.width) {
            return Err(Error::DimensionMismatch {
                expected: (input.height, input.width),
                found: p.mask.dims(),
            });
        }
    }
    if parts.is_empty() {
        return Ok(ImageProposals {
            proposals: Vec::new(),
            groups: Some(Vec::new()),
            affinity: dump_affinity.then(Vec::new),
            ..input.clone()
        });
    }
    let result = group_pipeline(&parts, pyramid, cfg)?;
    let proposals = result
        .output
        .iter()
        .zip(&result.output_groups)
        .map(|(p, &g)| ProposalRecord::from_proposal(p, Some(g)))
        .collect();
    Ok(ImageProposals {
        image_id: input.image_id,
        file_name: input.file_name.clone(),
        height: input.height,
        width: input.width,
        proposals,
        groups: Some(result.groups),
        affinity: dump_affinity.then(|| result.affinity.rows().map(<[f64]>::to_vec).collect()),
    })
}

/// Rank every image of a proposals document into COCO results, in document
/// order.
pub fn rank_doc(doc: &ProposalsDoc, cfg: &RankConfig) -> Result<ResultsDoc> {
    let mut results = Vec::new();
    for img in &doc.images {
        results.extend(rank_image(img, cfg)?);
    }
    Ok(ResultsDoc {
        schema_version: SCHEMA_VERSION,
        results,
    })
}

pub fn rank_image(img: &ImageProposals, cfg: &RankConfig) -> Result<Vec<ResultRecord>> {
    let ranked = rank(&img.to_proposals()?, cfg)?;
    Ok(ranked.iter().map(|s| ResultRecord::from_scored(img.image_id, s)).collect())
}

/// Augment the ground truth of every image with the matching image's
/// unsupervised proposals. Images missing from `proposals` keep their
/// ground truth only.
pub fn augment_dataset(
    gt: &CocoDataset,
    gt_path: &Path,
    proposals: &ProposalsDoc,
    cfg: &AugmentationConfig,
) -> Result<CocoDataset> {
    cfg.validate()?;
    let by_id: BTreeMap<u64, &ImageProposals> = proposals.images.iter().map(|i| (i.image_id, i)).collect();
    let known: Vec<u64> = gt.images.iter().map(|i| i.id).collect();
    let unknown: Vec<u64> = by_id.keys().filter(|id| !known.contains(id)).copied().collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownImageIds(unknown));
    }
    let mut annotations = Vec::new();
    for image in &gt.images {
        let s = gt.label_set(image.id, gt_path)?;
        let u = match by_id.get(&image.id) {
            Some(p) => LabelSet::new(p.to_proposals()?),
            None => LabelSet::default(),
        };
        for p in &s.entries {
            if p.mask.dims() != (image.height, image.width) {
                return Err(Error::DimensionMismatch {
                    expected: (image.height, image.width),
                    found: p.mask.dims(),
                });
            }
        }
        let augmented = augment_labels(&s, &u, cfg)?;
        for p in augmented.iter() {
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: image.id,
                category_id: super::schema::FOREGROUND_CATEGORY,
                bbox: p.bbox.xywh(),
                area: p.mask.area() as f64,
                segmentation: Some(p.mask.clone()),
                iscrowd: false,
                provenance: Some(p.provenance),
            });
        }
    }
    Ok(CocoDataset {
        schema_version: SCHEMA_VERSION,
        images: gt.images.clone(),
        annotations,
        categories: CocoDataset::foreground_categories(),
    })
}

pub fn evaluate_docs(gt: &CocoDataset, results: &ResultsDoc, ks: &[usize], kinds: &[IouKind]) -> Result<EvalReport> {
    let gt_instances = gt.eval_instances()?;
    let preds = results.predictions()?;
    let reports = kinds
        .iter()
        .map(|&k| evaluate(&gt_instances, &preds, ks, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(reports))
}

/// Evaluate a results file against a COCO ground-truth file.
pub fn evaluate_files(gt: &Path, pred: &Path, ks: &[usize], kinds: &[IouKind]) -> Result<EvalReport> {
    let gt_doc: CocoDataset = super::schema::read_json(gt)?;
    check_version(gt, gt_doc.schema_version)?;
    let results: ResultsDoc = super::schema::read_json(pred)?;
    check_version(pred, results.schema_version)?;
    evaluate_docs(&gt_doc, &results, ks, kinds)
}

pub fn load_image(path: &Path) -> Result<RgbImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

/// PNG and PPM files of a directory sorted by name, or a single image file.
pub fn list_images(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.exists() {
        return Err(Error::MissingFile(input.to_path_buf()));
    }
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(input).map_err(|e| Error::io(input, e))? {
        let path = entry.map_err(|e| Error::io(input, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "ppm" | "pnm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn file_stem(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Image ids for a list of files: taken from a COCO file by name when
/// given, otherwise 1, 2, ... in list order.
pub fn image_ids(files: &[PathBuf], coco: Option<(&CocoDataset, &Path)>) -> Result<Vec<u64>> {
    match coco {
        None => Ok((1..=files.len() as u64).collect()),
        Some((ds, path)) => files
            .iter()
            .map(|f| {
                let name = file_name(f);
                ds.images
                    .iter()
                    .find(|i| i.file_name == name)
                    .map(|i| i.id)
                    .ok_or_else(|| Error::schema(path, format!("no image entry named `{name}`")))
            })
            .collect(),
    }
}

pub fn proposals_doc(kind: ProposalsKind, image_root: Option<&Path>, images: Vec<ImageProposals>) -> ProposalsDoc {
    ProposalsDoc {
        schema_version: SCHEMA_VERSION,
        kind,
        image_root: image_root.map(|p| p.to_string_lossy().into_owned()),
        images,
    }
}

pub fn image_proposals(image_id: u64, name: String, image: &RgbImage, proposals: &[Proposal]) -> ImageProposals {
    ImageProposals {
        image_id,
        file_name: name,
        height: image.height(),
        width: image.width(),
        proposals: proposals.iter().map(|p| ProposalRecord::from_proposal(p, None)).collect(),
        groups: None,
        affinity: None,
    }
}
