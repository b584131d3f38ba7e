use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use partgroup::evaluation::IouKind;
use partgroup::features::FeatureSource;
use partgroup::grouping::GroupingConfig;
use partgroup::pipeline::synth::{write_fixture, SynthConfig};
use partgroup::pipeline::{
    cmd_augment, cmd_eval, cmd_group, cmd_propose, cmd_rank, cmd_render, run_pipeline, AccessLog, Algo,
    Mode, PipelineConfig, ProposeOptions,
};
use partgroup::proposals::{SegParams, SimilarityWeights};
use partgroup::ranking::{OverlapKind, RankConfig};
use partgroup::supervision::AugmentationConfig;
use partgroup::{Error, Result};

#[derive(Parser)]
#[command(name = "partgroup", version, about = "Open-world instance segmentation by part grouping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bottom-up region proposals for a directory of images.
    Propose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "selsearch")]
        algo: Algo,
        #[arg(long, default_value_t = 50.0)]
        k: f64,
        #[arg(long, default_value_t = 0.8)]
        sigma: f64,
        #[arg(long, default_value_t = 20)]
        min_size: usize,
        /// Tile size for the grid algorithm.
        #[arg(long, default_value_t = 64)]
        cell: u32,
        /// COCO file to take image ids from (matched by file name).
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add unsupervised proposals that overlap no annotation to the labels.
    Augment {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        iou_thresh: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster parts into objects.
    Group {
        #[arg(long)]
        parts: PathBuf,
        /// `handcrafted` or `tensor:PATH`.
        #[arg(long, default_value = "handcrafted")]
        features: String,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        keep_originals: bool,
        /// Image directory; defaults to the one recorded in the parts file.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        dump_affinity: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score, deduplicate and keep the top K proposals per image.
    Rank {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 300)]
        top_k: usize,
        #[arg(long, default_value_t = 0.95)]
        dedup_iou: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class-agnostic average recall.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "100,300", value_delimiter = ',')]
        ks: Vec<usize>,
        /// `box`, `mask` or `both`.
        #[arg(long, default_value = "both")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw predictions over an image.
    Render {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        image_id: Option<u64>,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end run from a config file; flags override its keys.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a synthetic scene set with seen/unseen annotations.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        scenes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        width: u32,
        #[arg(long, default_value_t = 128)]
        height: u32,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    eval_gt: Option<PathBuf>,
    #[arg(long)]
    parts: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    min_size: Option<usize>,
    #[arg(long)]
    cell: Option<u32>,
    #[arg(long)]
    max_parts: Option<usize>,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    keep_originals: Option<bool>,
    #[arg(long)]
    grouping: Option<bool>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    dedup_iou: Option<f64>,
    #[arg(long)]
    iou_thresh: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    render: Option<bool>,
    #[arg(long)]
    render_top: Option<usize>,
    #[arg(long)]
    dump_affinity: Option<bool>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident; $($field:ident),*) => {
        $(if let Some(v) = $o.$field { $cfg.$field = v; })*
    };
}

impl Overrides {
    fn apply(self, cfg: &mut PipelineConfig) -> Result<()> {
        let o = self;
        if let Some(m) = &o.mode {
            cfg.mode = match m.as_str() {
                "train" => Mode::Train,
                "inference" => Mode::Inference,
                other => return Err(Error::Config(format!("unknown mode `{other}`, expected train or inference"))),
            };
        }
        if o.gt.is_some() {
            cfg.gt = o.gt;
        }
        if o.eval_gt.is_some() {
            cfg.eval_gt = o.eval_gt;
        }
        if o.parts.is_some() {
            cfg.parts = o.parts;
        }
        apply!(cfg, o; images, out, algo, k, sigma, min_size, cell, max_parts, features, delta, tau,
            keep_originals, grouping, top_k, dedup_iou, iou_thresh, ks, kind, seed, workers, render,
            render_top, dump_affinity);
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Propose {
            input,
            algo,
            k,
            sigma,
            min_size,
            cell,
            gt,
            out,
        } => {
            let opts = ProposeOptions {
                algo,
                seg: SegParams {
                    scale_k: k,
                    sigma,
                    min_size,
                },
                weights: SimilarityWeights::default(),
                cell,
            };
            let doc = cmd_propose(&input, &opts, gt.as_deref(), &out)?;
            let n: usize = doc.images.iter().map(|i| i.proposals.len()).sum();
            eprintln!("{} proposals over {} images -> {}", n, doc.images.len(), out.display());
        }
        Command::Augment {
            gt,
            proposals,
            iou_thresh,
            out,
        } => {
            let cfg = AugmentationConfig {
                iou_exclude_threshold: iou_thresh,
            };
            let doc = cmd_augment(&gt, &proposals, &cfg, &out)?;
            eprintln!("{} labels -> {}", doc.annotations.len(), out.display());
        }
        Command::Group {
            parts,
            features,
            delta,
            tau,
            keep_originals,
            images,
            dump_affinity,
            out,
        } => {
            let cfg = GroupingConfig {
                delta,
                tau,
                keep_originals,
                ..GroupingConfig::default()
            };
            let source = FeatureSource::parse(&features)?;
            let doc = cmd_group(&parts, &source, &cfg, images.as_deref(), dump_affinity, &out)?;
            let groups: usize = doc.images.iter().map(|i| i.groups.as_ref().map_or(0, Vec::len)).sum();
            eprintln!("{} groups -> {}", groups, out.display());
        }
        Command::Rank {
            input,
            top_k,
            dedup_iou,
            out,
        } => {
            let cfg = RankConfig {
                top_k,
                dedup_iou,
                dedup_kind: OverlapKind::Mask,
            };
            let doc = cmd_rank(&input, &cfg, &out)?;
            eprintln!("{} results -> {}", doc.results.len(), out.display());
        }
        Command::Eval {
            gt,
            pred,
            ks,
            kind,
            out,
        } => {
            let report = cmd_eval(&gt, &pred, &ks, &IouKind::parse(&kind)?, &out)?;
            print!("{}", report.table());
        }
        Command::Render {
            image,
            pred,
            image_id,
            top,
            out,
        } => {
            let n = cmd_render(&image, &pred, image_id, top, &out)?;
            if n == 0 {
                eprintln!("warning: no proposals to draw; wrote an unmodified copy to {}", out.display());
            }
        }
        Command::Pipeline { config, overrides } => {
            let mut cfg = match &config {
                Some(path) => PipelineConfig::load(path)?,
                None => PipelineConfig::default(),
            };
            overrides.apply(&mut cfg)?;
            let run = run_pipeline(&cfg, &AccessLog::default())?;
            for p in &run.written {
                log::info!("wrote {}", p.display());
            }
            if let Some(report) = &run.report {
                print!("{}", report.table());
            }
        }
        Command::Synth {
            out,
            scenes,
            seed,
            width,
            height,
        } => {
            let cfg = SynthConfig {
                scenes,
                seed,
                width,
                height,
                ..SynthConfig::default()
            };
            let written = write_fixture(&out, &cfg)?;
            eprintln!("{} scenes -> {}", written.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": { "class": e.class(), "message": e.to_string() } });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
