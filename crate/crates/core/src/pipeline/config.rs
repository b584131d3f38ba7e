use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stages::{Algo, ProposeOptions};
use crate::error::{Error, Result};
use crate::evaluation::IouKind;
use crate::features::{FeatureSource, RoiAlignConfig};
use crate::grouping::GroupingConfig;
use crate::proposals::{SegParams, SimilarityWeights};
use crate::ranking::{OverlapKind, RankConfig};
use crate::supervision::AugmentationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Produce unsupervised proposals and augmented training labels.
    Train,
    /// Predict parts, group, rank and evaluate. Never reads the outputs of
    /// the training stage.
    Inference,
}

/// Flat key-value configuration of an end-to-end run. Every key has a
/// matching `--flag` on the `pipeline` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Image directory (PNG or PPM) or a single image.
    pub images: PathBuf,
    pub out: PathBuf,
    pub mode: Mode,
    /// Seen-class annotations to augment (train mode).
    pub gt: Option<PathBuf>,
    /// Annotations to evaluate against (inference mode). Also fixes image ids.
    pub eval_gt: Option<PathBuf>,
    /// Part proposals from an external predictor; the built-in bottom-up
    /// predictor runs when unset.
    pub parts: Option<PathBuf>,
    pub algo: Algo,
    pub k: f64,
    pub sigma: f64,
    pub min_size: usize,
    pub cell: u32,
    /// Per-image cap on parts entering grouping; a seeded sample is kept
    /// when an image has more.
    pub max_parts: usize,
    pub features: String,
    pub delta: f64,
    pub tau: f64,
    pub keep_originals: bool,
    /// Off: every part is its own group (the ungrouped baseline).
    pub grouping: bool,
    pub top_k: usize,
    pub dedup_iou: f64,
    pub iou_thresh: f64,
    pub ks: Vec<usize>,
    /// `box`, `mask` or `both`.
    pub kind: String,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub render: bool,
    /// Instances drawn per overlay.
    pub render_top: usize,
    pub dump_affinity: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let seg = SegParams::default();
        let group = GroupingConfig::default();
        let rank = RankConfig::default();
        PipelineConfig {
            images: PathBuf::from("images"),
            out: PathBuf::from("out"),
            mode: Mode::Inference,
            gt: None,
            eval_gt: None,
            parts: None,
            algo: Algo::Selsearch,
            k: seg.scale_k,
            sigma: seg.sigma,
            min_size: seg.min_size,
            cell: 64,
            max_parts: 300,
            features: "handcrafted".into(),
            delta: group.delta,
            tau: group.tau,
            keep_originals: group.keep_originals,
            grouping: true,
            top_k: rank.top_k,
            dedup_iou: rank.dedup_iou,
            iou_thresh: AugmentationConfig::default().iou_exclude_threshold,
            ks: vec![100, 300],
            kind: "both".into(),
            seed: 0,
            workers: 0,
            render: false,
            render_top: 20,
            dump_affinity: false,
        }
    }
}

impl PipelineConfig {
    /// Parse a TOML file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.images);
        fix(&mut self.out);
        for p in [&mut self.gt, &mut self.eval_gt, &mut self.parts].into_iter().flatten() {
            fix(p);
        }
        if let Some(rest) = self.features.strip_prefix("tensor:") {
            let p = Path::new(rest);
            if p.is_relative() {
                self.features = format!("tensor:{}", base.join(p).display());
            }
        }
    }

    pub fn seg_params(&self) -> SegParams {
        SegParams {
            scale_k: self.k,
            sigma: self.sigma,
            min_size: self.min_size,
        }
    }

    pub fn propose_options(&self) -> ProposeOptions {
        ProposeOptions {
            algo: self.algo,
            seg: self.seg_params(),
            weights: SimilarityWeights::default(),
            cell: self.cell,
        }
    }

    pub fn grouping_config(&self) -> GroupingConfig {
        GroupingConfig {
            delta: self.delta,
            tau: self.tau,
            keep_originals: self.keep_originals,
            cohesion_scores: true,
            disabled: !self.grouping,
            roi: RoiAlignConfig::default(),
        }
    }

    pub fn rank_config(&self) -> RankConfig {
        RankConfig {
            top_k: self.top_k,
            dedup_iou: self.dedup_iou,
            dedup_kind: OverlapKind::Mask,
        }
    }

    pub fn augmentation_config(&self) -> AugmentationConfig {
        AugmentationConfig {
            iou_exclude_threshold: self.iou_thresh,
        }
    }

    pub fn feature_source(&self) -> Result<FeatureSource> {
        FeatureSource::parse(&self.features)
    }

    pub fn kinds(&self) -> Result<Vec<IouKind>> {
        IouKind::parse(&self.kind)
    }

    /// Check ranges and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        self.seg_params().validate()?;
        self.grouping_config().validate()?;
        self.rank_config().validate()?;
        self.augmentation_config().validate()?;
        self.kinds()?;
        if self.cell == 0 {
            return Err(Error::param("cell", "must be >= 1"));
        }
        if self.max_parts == 0 {
            return Err(Error::param("max_parts", "must be >= 1"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::param("ks", "need at least one K, all >= 1"));
        }
        let mut required = vec![&self.images];
        required.extend([&self.gt, &self.eval_gt, &self.parts].into_iter().flatten());
        let source = self.feature_source()?;
        if let FeatureSource::Tensor(p) = &source {
            required.push(p);
        }
        for p in required {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        if self.mode == Mode::Train && self.parts.is_some() {
            return Err(Error::Config("`parts` applies to inference mode only".into()));
        }
        Ok(())
    }
}
