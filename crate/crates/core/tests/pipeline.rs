use std::path::{Path, PathBuf};

use partgroup::pipeline::{run_pipeline, AccessLog, Mode, PipelineConfig};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synth20")
}

fn inference(out: &Path) -> PipelineConfig {
    PipelineConfig {
        images: fixture().join("images"),
        eval_gt: Some(fixture().join("gt_unseen.json")),
        out: out.to_path_buf(),
        ..PipelineConfig::default()
    }
}

#[test]
fn bundled_fixture_reports_both_ks() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(&inference(dir.path()), &AccessLog::default()).unwrap();
    let report = run.report.unwrap();
    for ar in [report.ar_box().unwrap(), report.ar_mask().unwrap()] {
        assert_eq!(ar.keys().copied().collect::<Vec<_>>(), vec![100, 300]);
        assert!(ar.values().all(|v| (0.0..=1.0).contains(v)));
        assert!(ar[&300] >= ar[&100]);
    }
    assert!(report.ar_mask().unwrap()[&100] > 0.5);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg_a = PipelineConfig {
        render: true,
        max_parts: 40,
        ..inference(a.path())
    };
    let cfg_b = PipelineConfig {
        out: b.path().to_path_buf(),
        workers: 1,
        ..cfg_a.clone()
    };
    let ra = run_pipeline(&cfg_a, &AccessLog::default()).unwrap();
    run_pipeline(&cfg_b, &AccessLog::default()).unwrap();
    assert!(!ra.written.is_empty());
    for p in &ra.written {
        let rel = p.strip_prefix(a.path()).unwrap();
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
    }
}

#[test]
fn inference_never_reads_training_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let train = PipelineConfig {
        mode: Mode::Train,
        gt: Some(fixture().join("gt_seen.json")),
        ..inference(dir.path())
    };
    let train_log = AccessLog::default();
    let trained = run_pipeline(&train, &train_log).unwrap();
    let produced: Vec<PathBuf> = trained.written.clone();
    assert!(produced.iter().any(|p| p.ends_with("proposals.json")));
    assert!(produced.iter().any(|p| p.ends_with("augmented.json")));
    assert_eq!(train_log.writes(), produced);

    let log = AccessLog::default();
    run_pipeline(&inference(dir.path()), &log).unwrap();
    let reads = log.reads();
    assert!(!reads.is_empty());
    for p in &reads {
        assert!(!produced.contains(p), "inference read {}", p.display());
    }
    // every file read is an input image or the evaluation annotations
    assert!(reads
        .iter()
        .all(|p| p.starts_with(fixture().join("images")) || p == &fixture().join("gt_unseen.json")));
}

#[test]
fn external_parts_are_grouped_and_capped() {
    let dir = tempfile::tempdir().unwrap();
    let first = inference(&dir.path().join("a"));
    run_pipeline(&first, &AccessLog::default()).unwrap();
    let parts = dir.path().join("a/parts.json");
    let cfg = PipelineConfig {
        parts: Some(parts.clone()),
        max_parts: 10,
        out: dir.path().join("b"),
        ..first
    };
    let log = AccessLog::default();
    run_pipeline(&cfg, &log).unwrap();
    assert!(log.reads().contains(&parts));
    let doc: partgroup::pipeline::schema::ProposalsDoc =
        partgroup::pipeline::schema::read_json(&dir.path().join("b/parts.json")).unwrap();
    assert!(doc.images.iter().all(|i| i.proposals.len() <= 10));
}
