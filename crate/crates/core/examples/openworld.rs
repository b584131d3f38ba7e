//! Desk-scale open-world experiment on synthetic scenes.
//!
//! Rectangles are the seen shapes; recall is measured on the held-out
//! ellipses and triangles only. Compares ungrouped proposals against
//! grouping over a sweep of context expansion and threshold values.
//!
//!     cargo run --release --example openworld -- --scenes 200 --tau 0.5 --delta 0,0.1,0.3,0.5

use std::time::Instant;

use clap::Parser;
use partgroup::evaluation::IouKind;
use partgroup::features::{handcrafted_pyramid, FeaturePyramid, HandcraftedConfig};
use partgroup::grouping::GroupingConfig;
use partgroup::pipeline::schema::{ImageProposals, ResultsDoc};
use partgroup::pipeline::synth::{annotations, generate, SynthConfig};
use partgroup::pipeline::{evaluate_docs, group_image, image_proposals, propose_image, rank_image, ProposeOptions};
use partgroup::proposals::SegParams;
use partgroup::ranking::RankConfig;
use rayon::prelude::*;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 200)]
    scenes: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.7")]
    tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.5")]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    grid: usize,
    #[arg(long, default_value_t = 1.0)]
    color_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    texture_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    position_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    grid_weight: f64,
    #[arg(long, value_delimiter = ',', default_value = "4,6,6")]
    bins: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    bin_weight: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    strides: Vec<u32>,
    #[arg(long, default_value_t = 0.5)]
    color_sigma: f64,
    #[arg(long, default_value_t = 50.0)]
    k: f64,
    #[arg(long, default_value_t = 0.8)]
    sigma: f64,
    #[arg(long, default_value_t = 20)]
    min_size: usize,
    #[arg(long, default_value_t = 0.6)]
    occluders: f64,
    #[arg(long, default_value_t = 0.5)]
    two_tone: f64,
    /// Print a best-IoU breakdown per ground-truth instance for this tau.
    #[arg(long)]
    diagnose: Option<f64>,
}

fn best_ious(
    parts: &[ImageProposals],
    pyramids: &[FeaturePyramid],
    gt: &partgroup::pipeline::schema::CocoDataset,
    cfg: &GroupingConfig,
) -> partgroup::Result<Vec<f64>> {
    let mut out = Vec::new();
    for (p, pyr) in parts.iter().zip(pyramids) {
        let ranked = rank_image(&group_image(p, pyr, cfg, false)?, &RankConfig::default())?;
        for a in gt.annotations.iter().filter(|a| a.image_id == p.image_id) {
            let m = a.segmentation.as_ref().expect("mask");
            let best = ranked
                .iter()
                .take(100)
                .map(|r| partgroup::mask_iou(m, &r.segmentation).unwrap())
                .fold(0.0, f64::max);
            out.push(best);
        }
    }
    Ok(out)
}

fn ar100(
    parts: &[ImageProposals],
    pyramids: &[FeaturePyramid],
    gt: &partgroup::pipeline::schema::CocoDataset,
    cfg: &GroupingConfig,
) -> partgroup::Result<f64> {
    let per_image = parts
        .par_iter()
        .zip(pyramids)
        .map(|(p, pyr)| rank_image(&group_image(p, pyr, cfg, false)?, &RankConfig::default()))
        .collect::<partgroup::Result<Vec<_>>>()?;
    let results = ResultsDoc {
        schema_version: partgroup::SCHEMA_VERSION,
        results: per_image.into_iter().flatten().collect(),
    };
    let report = evaluate_docs(gt, &results, &[100], &[IouKind::Mask])?;
    Ok(report.ar_mask().expect("mask report")[&100])
}

fn main() -> partgroup::Result<()> {
    let args = Args::parse();
    let start = Instant::now();
    let scenes = generate(&SynthConfig {
        scenes: args.scenes,
        seed: args.seed,
        occluder_rate: args.occluders,
        two_tone_rate: args.two_tone,
        ..SynthConfig::default()
    });
    let unseen = annotations(&scenes, |s| !s.seen());
    let features = HandcraftedConfig {
        color_weight: args.color_weight,
        texture_weight: args.texture_weight,
        position_weight: args.position_weight,
        position_grid: args.grid,
        grid_weight: args.grid_weight,
        color_bins: [args.bins[0], args.bins[1], args.bins[2]],
        bin_weight: args.bin_weight,
        strides: args.strides.clone(),
        color_sigma: args.color_sigma,
        ..HandcraftedConfig::default()
    };
    let prepared = scenes
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let opts = ProposeOptions {
                seg: SegParams {
                    scale_k: args.k,
                    sigma: args.sigma,
                    min_size: args.min_size,
                },
                ..ProposeOptions::default()
            };
            let props = propose_image(&s.image, &opts)?;
            let parts = image_proposals(i as u64 + 1, s.file_name.clone(), &s.image, &props);
            Ok((parts, handcrafted_pyramid(&s.image, &features)?))
        })
        .collect::<partgroup::Result<Vec<_>>>()?;
    let (parts, pyramids): (Vec<_>, Vec<_>) = prepared.into_iter().unzip();
    println!(
        "{} scenes, {} unseen instances, {:.1} parts/image",
        scenes.len(),
        unseen.annotations.len(),
        parts.iter().map(|p| p.proposals.len()).sum::<usize>() as f64 / parts.len() as f64
    );

    let baseline = ar100(
        &parts,
        &pyramids,
        &unseen,
        &GroupingConfig {
            disabled: true,
            ..GroupingConfig::default()
        },
    )?;
    println!("{:>8} {:>8} {:>10} {:>8}", "tau", "delta", "AR_M@100", "gain");
    println!("{:>8} {:>8} {:>10.1} {:>8}", "-", "-", 100.0 * baseline, "-");
    for &tau in &args.tau {
        for &delta in &args.delta {
            let cfg = GroupingConfig {
                tau,
                delta,
                ..GroupingConfig::default()
            };
            let ar = ar100(&parts, &pyramids, &unseen, &cfg)?;
            println!("{tau:>8} {delta:>8} {:>10.1} {:>+8.1}", 100.0 * ar, 100.0 * (ar - baseline));
        }
    }
    if let Some(tau) = args.diagnose {
        let base = best_ious(&parts, &pyramids, &unseen, &GroupingConfig { disabled: true, ..GroupingConfig::default() })?;
        let grouped = best_ious(&parts, &pyramids, &unseen, &GroupingConfig { tau, ..GroupingConfig::default() })?;
        let bins = [0.0, 0.5, 0.7, 0.8, 0.9, 0.95, 1.01];
        let bin = |v: f64| bins.windows(2).position(|w| v >= w[0] && v < w[1]).unwrap();
        let mut table = [[0usize; 6]; 6];
        for (b, g) in base.iter().zip(&grouped) {
            table[bin(*b)][bin(*g)] += 1;
        }
        println!("rows: best IoU ungrouped; columns: grouped (tau {tau})");
        for (i, row) in table.iter().enumerate() {
            println!("{:>5.2} {:?}", bins[i], row);
        }
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
