//! File-level commands and end-to-end orchestration.
//!
//! Inference: parts (built-in bottom-up predictor, or an external parts
//! file) -> grouping -> ranking -> evaluation, with optional overlays.
//! Training: unsupervised proposals -> augmented labels. The two modes share
//! no files.

mod audit;
mod config;
pub mod render;
pub mod schema;
mod stages;
pub mod synth;

pub use audit::{Access, AccessLog};
pub use config::{Mode, PipelineConfig};
pub use stages::{
    augment_dataset, evaluate_docs, evaluate_files, file_name, file_stem, group_image, image_ids,
    image_proposals, list_images, load_image, propose_image,
    proposals_doc, rank_doc, rank_image, Algo, ProposeOptions,
};

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, IouKind};
use crate::features::FeatureSource;
use crate::grouping::GroupingConfig;
use crate::mask::BinaryMask;
use crate::proposal::Proposal;
use crate::ranking::RankConfig;
use crate::supervision::AugmentationConfig;
use schema::{
    check_version, read_json, write_json, CocoDataset, ImageProposals, ProposalsDoc, ProposalsKind,
    ResultRecord, ResultsDoc,
};

/// `propose`: bottom-up proposals for every image under `input`.
pub fn cmd_propose(input: &Path, opts: &ProposeOptions, gt: Option<&Path>, out: &Path) -> Result<ProposalsDoc> {
    let files = list_images(input)?;
    let coco = gt.map(|p| read_json::<CocoDataset>(p).map(|d| (d, p))).transpose()?;
    let ids = image_ids(&files, coco.as_ref().map(|(d, p)| (d, *p)))?;
    let images = files
        .par_iter()
        .zip(ids.par_iter())
        .map(|(f, &id)| {
            let img = load_image(f)?;
            let props = propose_image(&img, opts)?;
            Ok(image_proposals(id, file_name(f), &img, &props))
        })
        .collect::<Result<Vec<_>>>()?;
    let root = if input.is_dir() { Some(input) } else { input.parent() };
    let doc = proposals_doc(ProposalsKind::Proposals, root, images);
    write_json(out, &doc)?;
    Ok(doc)
}

/// `augment`: ground truth plus non-overlapping unsupervised proposals.
pub fn cmd_augment(gt: &Path, proposals: &Path, cfg: &AugmentationConfig, out: &Path) -> Result<CocoDataset> {
    let gt_doc: CocoDataset = read_json(gt)?;
    check_version(gt, gt_doc.schema_version)?;
    let props: ProposalsDoc = read_json(proposals)?;
    check_version(proposals, props.schema_version)?;
    let doc = augment_dataset(&gt_doc, gt, &props, cfg)?;
    write_json(out, &doc)?;
    Ok(doc)
}

/// `group`: cluster each image's parts and add merged proposals. Handcrafted
/// features read the images from `images`, or from the directory recorded
/// in the parts file.
pub fn cmd_group(
    parts: &Path,
    features: &FeatureSource,
    cfg: &GroupingConfig,
    images: Option<&Path>,
    dump_affinity: bool,
    out: &Path,
) -> Result<ProposalsDoc> {
    cfg.validate()?;
    let doc: ProposalsDoc = read_json(parts)?;
    check_version(parts, doc.schema_version)?;
    let root: Option<PathBuf> = images
        .map(Path::to_path_buf)
        .or_else(|| doc.image_root.as_ref().map(PathBuf::from));
    let grouped = doc
        .images
        .par_iter()
        .map(|img| {
            let pixels = match features {
                FeatureSource::Handcrafted(_) => {
                    let root = root.as_ref().ok_or_else(|| {
                        Error::Config("handcrafted features need the images; pass --images".into())
                    })?;
                    Some(load_image(&root.join(&img.file_name))?)
                }
                FeatureSource::Tensor(_) => None,
            };
            let pyramid = features.pyramid(&file_stem(&img.file_name), pixels.as_ref())?;
            group_image(img, &pyramid, cfg, dump_affinity)
        })
        .collect::<Result<Vec<_>>>()?;
    let out_doc = ProposalsDoc {
        kind: ProposalsKind::Grouped,
        images: grouped,
        ..doc
    };
    write_json(out, &out_doc)?;
    Ok(out_doc)
}

/// `rank`: fused-score ordering, duplicate suppression and top-K.
pub fn cmd_rank(input: &Path, cfg: &RankConfig, out: &Path) -> Result<ResultsDoc> {
    let doc: ProposalsDoc = read_json(input)?;
    check_version(input, doc.schema_version)?;
    let results = rank_doc(&doc, cfg)?;
    write_json(out, &results)?;
    Ok(results)
}

/// `eval`: writes the report as JSON to `out` and as a table next to it.
pub fn cmd_eval(gt: &Path, pred: &Path, ks: &[usize], kinds: &[IouKind], out: &Path) -> Result<EvalReport> {
    let report = evaluate_files(gt, pred, ks, kinds)?;
    write_json(out, &report)?;
    let table = out.with_extension("txt");
    std::fs::write(&table, report.table()).map_err(|e| Error::io(&table, e))?;
    Ok(report)
}

/// Masks and group ids to draw for one image of a predictions file.
fn render_instances(pred: &Path, image_name: &str, image_id: Option<u64>) -> Result<Vec<(BinaryMask, Option<usize>)>> {
    let value: serde_json::Value = read_json(pred)?;
    if value.get("kind").is_some() {
        let doc: ProposalsDoc = serde_json::from_value(value).map_err(|source| Error::Json {
            path: pred.to_path_buf(),
            source,
        })?;
        check_version(pred, doc.schema_version)?;
        let found = doc.images.iter().find(|i| match image_id {
            Some(id) => i.image_id == id,
            None => i.file_name == image_name || doc.images.len() == 1,
        });
        return Ok(found
            .map(|i| i.proposals.iter().map(|p| (p.segmentation.clone(), p.group_id)).collect())
            .unwrap_or_default());
    }
    let doc: ResultsDoc = serde_json::from_value(value).map_err(|source| Error::Json {
        path: pred.to_path_buf(),
        source,
    })?;
    check_version(pred, doc.schema_version)?;
    let id = match image_id {
        Some(id) => Some(id),
        None => {
            let mut ids: Vec<u64> = doc.results.iter().map(|r| r.image_id).collect();
            ids.dedup();
            match ids.as_slice() {
                [] => None,
                [one] => Some(*one),
                _ => {
                    return Err(Error::Config(format!(
                        "{} holds several images; pass --image-id",
                        pred.display()
                    )))
                }
            }
        }
    };
    Ok(doc
        .results
        .into_iter()
        .filter(|r| Some(r.image_id) == id)
        .map(|r| (r.segmentation, None))
        .collect())
}

/// `render`: overlay an image's predictions. Returns the number of
/// instances drawn; with none, the input file is copied unchanged.
pub fn cmd_render(image: &Path, pred: &Path, image_id: Option<u64>, top: Option<usize>, out: &Path) -> Result<usize> {
    let mut instances = render_instances(pred, &file_name(image), image_id)?;
    if let Some(top) = top {
        instances.truncate(top);
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    if instances.is_empty() {
        if !image.exists() {
            return Err(Error::MissingFile(image.to_path_buf()));
        }
        log::warn!("no proposals for {}; copying the image unchanged", image.display());
        std::fs::copy(image, out).map_err(|e| Error::io(out, e))?;
        return Ok(0);
    }
    let pixels = load_image(image)?;
    let refs: Vec<(&BinaryMask, Option<usize>)> = instances.iter().map(|(m, g)| (m, *g)).collect();
    let drawn = render::overlay(&pixels, &refs)?;
    drawn.save(out).map_err(|source| Error::Image {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(instances.len())
}

/// Outcome of [`run_pipeline`].
#[derive(Debug)]
pub struct PipelineRun {
    pub report: Option<EvalReport>,
    pub written: Vec<PathBuf>,
}

/// Keep at most `cap` parts, a seeded sample in original order.
fn cap_parts(parts: Vec<Proposal>, cap: usize, seed: u64, image_id: u64) -> Vec<Proposal> {
    if parts.len() <= cap {
        return parts;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ image_id.wrapping_mul(0xA24B_AED4_963E_E407));
    let mut keep = sample(&mut rng, parts.len(), cap).into_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| parts[i].clone()).collect()
}

struct Inferred {
    parts: ImageProposals,
    grouped: ImageProposals,
    results: Vec<ResultRecord>,
}

fn infer_image(
    cfg: &PipelineConfig,
    features: &FeatureSource,
    path: &Path,
    image_id: u64,
    external: Option<&ImageProposals>,
    log: &AccessLog,
) -> Result<Inferred> {
    log.record(Access::Read, path);
    let image = load_image(path)?;
    let name = file_name(path);
    let parts = match external {
        Some(rec) => rec.to_proposals()?,
        None => propose_image(&image, &cfg.propose_options())?,
    };
    let parts = cap_parts(parts, cfg.max_parts, cfg.seed, image_id);
    let parts = image_proposals(image_id, name.clone(), &image, &parts);
    if let FeatureSource::Tensor(p) = features {
        log.record(Access::Read, &if p.is_dir() { p.join(format!("{}.fpyr", file_stem(&name))) } else { p.clone() });
    }
    let pyramid = features.pyramid(&file_stem(&name), Some(&image))?;
    let grouped = group_image(&parts, &pyramid, &cfg.grouping_config(), cfg.dump_affinity)?;
    let results = rank_image(&grouped, &cfg.rank_config())?;
    Ok(Inferred {
        parts,
        grouped,
        results,
    })
}

fn write_logged<T: serde::Serialize>(path: PathBuf, value: &T, log: &AccessLog, written: &mut Vec<PathBuf>) -> Result<()> {
    write_json(&path, value)?;
    log.record(Access::Write, &path);
    written.push(path);
    Ok(())
}

fn run_inference(cfg: &PipelineConfig, log: &AccessLog) -> Result<PipelineRun> {
    let features = cfg.feature_source()?;
    let kinds = cfg.kinds()?;
    let files = list_images(&cfg.images)?;
    let eval_gt = match &cfg.eval_gt {
        Some(p) => {
            log.record(Access::Read, p);
            let d: CocoDataset = read_json(p)?;
            check_version(p, d.schema_version)?;
            Some((d, p.clone()))
        }
        None => None,
    };
    let ids = image_ids(&files, eval_gt.as_ref().map(|(d, p)| (d, p.as_path())))?;
    let external: Option<BTreeMap<u64, ImageProposals>> = match &cfg.parts {
        Some(p) => {
            log.record(Access::Read, p);
            let d: ProposalsDoc = read_json(p)?;
            check_version(p, d.schema_version)?;
            Some(d.images.into_iter().map(|i| (i.image_id, i)).collect())
        }
        None => None,
    };

    let per_image = files
        .par_iter()
        .zip(ids.par_iter())
        .map(|(f, &id)| {
            let ext = external.as_ref().and_then(|m| m.get(&id));
            infer_image(cfg, &features, f, id, ext, log)
        })
        .collect::<Result<Vec<_>>>()?;

    // single reduction over all images
    let root = Some(cfg.images.as_path()).filter(|p| p.is_dir());
    let mut parts = Vec::with_capacity(per_image.len());
    let mut grouped = Vec::with_capacity(per_image.len());
    let mut results = Vec::new();
    for inf in per_image {
        parts.push(inf.parts);
        grouped.push(inf.grouped);
        results.extend(inf.results);
    }
    let results = ResultsDoc {
        schema_version: crate::SCHEMA_VERSION,
        results,
    };
    let mut written = Vec::new();
    write_logged(cfg.out.join("parts.json"), &proposals_doc(ProposalsKind::Proposals, root, parts), log, &mut written)?;
    let grouped_doc = proposals_doc(ProposalsKind::Grouped, root, grouped);
    write_logged(cfg.out.join("grouped.json"), &grouped_doc, log, &mut written)?;
    write_logged(cfg.out.join("results.json"), &results, log, &mut written)?;

    let report = match &eval_gt {
        Some((gt, _)) => {
            let report = evaluate_docs(gt, &results, &cfg.ks, &kinds)?;
            write_logged(cfg.out.join("eval.json"), &report, log, &mut written)?;
            let table = cfg.out.join("eval.txt");
            std::fs::write(&table, report.table()).map_err(|e| Error::io(&table, e))?;
            log.record(Access::Write, &table);
            written.push(table);
            Some(report)
        }
        None => None,
    };

    if cfg.render {
        let overlays = cfg.out.join("overlays");
        std::fs::create_dir_all(&overlays).map_err(|e| Error::io(&overlays, e))?;
        let drawn = files
            .par_iter()
            .zip(&grouped_doc.images)
            .map(|(f, g)| {
                let group_of: HashMap<&[u32], usize> = g
                    .proposals
                    .iter()
                    .filter_map(|p| p.group_id.map(|id| (p.segmentation.counts(), id)))
                    .collect();
                let mine: Vec<(&BinaryMask, Option<usize>)> = results
                    .results
                    .iter()
                    .filter(|r| r.image_id == g.image_id)
                    .take(cfg.render_top)
                    .map(|r| (&r.segmentation, group_of.get(r.segmentation.counts()).copied()))
                    .collect();
                let path = overlays.join(format!("{}.png", file_stem(&g.file_name)));
                let image = load_image(f)?;
                render::overlay(&image, &mine)?
                    .save(&path)
                    .map_err(|source| Error::Image { path: path.clone(), source })?;
                Ok(path)
            })
            .collect::<Result<Vec<_>>>()?;
        for p in drawn {
            log.record(Access::Write, &p);
            written.push(p);
        }
    }
    Ok(PipelineRun { report, written })
}

fn run_training(cfg: &PipelineConfig, log: &AccessLog) -> Result<PipelineRun> {
    let files = list_images(&cfg.images)?;
    let gt = match &cfg.gt {
        Some(p) => {
            log.record(Access::Read, p);
            let d: CocoDataset = read_json(p)?;
            check_version(p, d.schema_version)?;
            Some((d, p.clone()))
        }
        None => None,
    };
    let ids = image_ids(&files, gt.as_ref().map(|(d, p)| (d, p.as_path())))?;
    let opts = cfg.propose_options();
    let images = files
        .par_iter()
        .zip(ids.par_iter())
        .map(|(f, &id)| {
            log.record(Access::Read, f);
            let img = load_image(f)?;
            Ok(image_proposals(id, file_name(f), &img, &propose_image(&img, &opts)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let root = Some(cfg.images.as_path()).filter(|p| p.is_dir());
    let doc = proposals_doc(ProposalsKind::Proposals, root, images);
    let mut written = Vec::new();
    write_logged(cfg.out.join("proposals.json"), &doc, log, &mut written)?;
    if let Some((gt, path)) = &gt {
        let augmented = augment_dataset(gt, path, &doc, &cfg.augmentation_config())?;
        write_logged(cfg.out.join("augmented.json"), &augmented, log, &mut written)?;
    }
    Ok(PipelineRun { report: None, written })
}

/// `pipeline`: validate, then run the configured mode on a pool of
/// `cfg.workers` threads. Every file touched is recorded in `log`.
pub fn run_pipeline(cfg: &PipelineConfig, log: &AccessLog) -> Result<PipelineRun> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    pool.install(|| match cfg.mode {
        Mode::Inference => run_inference(cfg, log),
        Mode::Train => run_training(cfg, log),
    })
}
