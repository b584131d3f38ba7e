//! The command-line tool, driven as a subprocess.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use partgroup::pipeline::schema::{read_json, write_json, CocoDataset, ProposalsDoc, ResultsDoc};
use partgroup::evaluation::EvalReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_partgroup"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Re-serializing a parsed artifact reproduces it byte for byte.
fn assert_round_trip<T: serde::Serialize + serde::de::DeserializeOwned>(path: &Path) {
    let value: T = read_json(path).unwrap();
    let copy = path.with_extension("copy.json");
    write_json(&copy, &value).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), std::fs::read(&copy).unwrap(), "{}", path.display());
}

fn synth(dir: &Path, scenes: usize) -> PathBuf {
    let root = dir.join("synth");
    ok(&["synth", "--out", s(&root), "--scenes", &scenes.to_string(), "--width", "64", "--height", "64"]);
    root
}

#[test]
fn full_chain_accepts_every_intermediate() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth(dir.path(), 3);
    let images = root.join("images");
    let parts = dir.path().join("parts.json");
    let augmented = dir.path().join("augmented.json");
    let grouped = dir.path().join("grouped.json");
    let results = dir.path().join("results.json");
    let eval = dir.path().join("eval.json");

    ok(&["propose", "--input", s(&images), "--gt", s(&root.join("gt_seen.json")), "--out", s(&parts)]);
    assert_round_trip::<ProposalsDoc>(&parts);

    ok(&["augment", "--gt", s(&root.join("gt_seen.json")), "--proposals", s(&parts), "--out", s(&augmented)]);
    assert_round_trip::<CocoDataset>(&augmented);
    let aug: CocoDataset = read_json(&augmented).unwrap();
    let seen: CocoDataset = read_json(&root.join("gt_seen.json")).unwrap();
    assert!(aug.annotations.len() >= seen.annotations.len());

    ok(&["group", "--parts", s(&parts), "--tau", "0.7", "--dump-affinity", "--out", s(&grouped)]);
    assert_round_trip::<ProposalsDoc>(&grouped);
    let g: ProposalsDoc = read_json(&grouped).unwrap();
    for img in &g.images {
        let n_parts = img.groups.as_ref().unwrap().iter().map(Vec::len).sum::<usize>();
        assert_eq!(img.affinity.as_ref().unwrap().len(), n_parts);
        assert!(img.proposals.iter().all(|p| p.group_id.is_some()));
    }

    ok(&["rank", "--in", s(&grouped), "--top-k", "100", "--out", s(&results)]);
    assert_round_trip::<ResultsDoc>(&results);

    let out = ok(&["eval", "--gt", s(&root.join("gt_unseen.json")), "--pred", s(&results), "--ks", "10,100", "--out", s(&eval)]);
    assert_round_trip::<EvalReport>(&eval);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("AR_M@100") && table.contains("AR_B@10"));
    assert_eq!(std::fs::read_to_string(eval.with_extension("txt")).unwrap(), table);

    // the ungrouped proposals are valid ranking input too
    ok(&["rank", "--in", s(&parts), "--out", s(&dir.path().join("plain.json"))]);
}

#[test]
fn render_with_no_proposals_copies_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth(dir.path(), 1);
    let image = root.join("images/scene_0001.png");
    let pred = dir.path().join("empty.json");
    std::fs::write(&pred, r#"{"schema_version":1,"results":[]}"#).unwrap();
    let out_png = dir.path().join("out.png");
    let out = ok(&["render", "--image", s(&image), "--pred", s(&pred), "--out", s(&out_png)]);
    assert_eq!(std::fs::read(&image).unwrap(), std::fs::read(&out_png).unwrap());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));

    // with predictions the image changes
    let parts = dir.path().join("parts.json");
    let results = dir.path().join("results.json");
    ok(&["propose", "--input", s(&image), "--out", s(&parts)]);
    ok(&["rank", "--in", s(&parts), "--out", s(&results)]);
    ok(&["render", "--image", s(&image), "--pred", s(&results), "--top", "5", "--out", s(&out_png)]);
    assert_ne!(std::fs::read(&image).unwrap(), std::fs::read(&out_png).unwrap());
}

#[test]
fn failures_print_an_error_record() {
    let out = run(&["eval", "--gt", "/nonexistent/gt.json", "--pred", "/nonexistent/p.json", "--out", "/tmp/x.json"]);
    assert!(!out.status.success());
    let line = String::from_utf8(out.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(record["error"]["class"], "missing_file");
    assert!(record["error"]["message"].as_str().unwrap().contains("/nonexistent/gt.json"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "tau = 2.0\nimages = \".\"\n").unwrap();
    let out = run(&["pipeline", "--config", s(&cfg)]);
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["class"], "invalid_parameter");

    std::fs::write(&cfg, "tua = 0.5\n").unwrap();
    let out = run(&["pipeline", "--config", s(&cfg)]);
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["class"], "config");
}

#[test]
fn pipeline_config_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth(dir.path(), 2);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "images = \"synth/images\"\neval_gt = \"synth/gt_unseen.json\"\nout = \"out\"\nks = [10, 100]\nkind = \"mask\"\n",
    )
    .unwrap();
    let out = ok(&["pipeline", "--config", s(&cfg), "--tau", "0.7", "--render", "true", "--workers", "1"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("AR_M@10") && !table.contains("AR_B"));
    let out_dir = dir.path().join("out");
    for f in ["parts.json", "grouped.json", "results.json", "eval.json", "eval.txt", "overlays/scene_0001.png"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    assert!(root.exists());

    let out = run(&["pipeline", "--config", s(&cfg), "--mode", "sideways"]);
    assert!(!out.status.success());
}
