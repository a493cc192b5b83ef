use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sbdetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbdetect"))
        .args(args)
        .output()
        .expect("spawn sbdetect")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn gen(out: &Path, seed: &str, counts: [&str; 4]) {
    let o = sbdetect(&[
        "--seed",
        seed,
        "phantom-gen",
        "--out",
        s(out),
        "--with-dorsal",
        counts[0],
        "--with-lateral",
        counts[1],
        "--without-dorsal",
        counts[2],
        "--without-lateral",
        counts[3],
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn atlas_needs_two_images() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one");
    gen(&data, "1", ["1", "0", "0", "0"]);
    let o = sbdetect(&[
        "build-atlas",
        "--manifest",
        s(&data.join("manifest.jsonl")),
        "--orientation",
        "dorsal",
        "--out",
        s(&dir.path().join("atlas")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("need ≥ 2"));
}

#[test]
fn missing_atlas_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("c");
    gen(&data, "2", ["1", "0", "1", "0"]);
    let o = sbdetect(&[
        "segment",
        "--manifest",
        s(&data.join("manifest.jsonl")),
        "--atlas-dorsal",
        s(&dir.path().join("nowhere")),
        "--out",
        s(&dir.path().join("shapes")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn crossval_with_too_few_samples_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    let names: Vec<String> = (0..24).map(|i| format!("f{i}")).collect();
    let mut text = format!("image_id,label,{}\n", names.join(","));
    for (i, label) in ["swim_bladder", "swim_bladder", "no_swim_bladder"].iter().enumerate() {
        text.push_str(&format!("x{i},{label}{}\n", ",1.0".repeat(24)));
    }
    fs::write(&csv, text).unwrap();
    let o = sbdetect(&["crossval", "--features", s(&csv), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_config_key_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "unknown_key = 3\n").unwrap();
    let o = sbdetect(&["--config", s(&cfg), "phantom-gen", "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_on_small_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let p = |x: &str| dir.path().join(x);
    gen(&p("atlas_src"), "3", ["4", "0", "0", "0"]);
    gen(&p("cohort"), "4", ["5", "0", "5", "0"]);
    let ok = |args: &[&str]| {
        let o = sbdetect(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    ok(&[
        "build-atlas",
        "--manifest",
        s(&p("atlas_src/manifest.jsonl")),
        "--orientation",
        "dorsal",
        "--out",
        s(&p("atlas")),
    ]);
    assert!(p("atlas/meta.json").exists() && p("atlas/probmap.png").exists() && p("atlas/median.png").exists());
    ok(&[
        "segment",
        "--manifest",
        s(&p("cohort/manifest.jsonl")),
        "--atlas-dorsal",
        s(&p("atlas")),
        "--out",
        s(&p("shapes")),
        "--overlays",
    ]);
    assert!(p("shapes/embryo_0000_overlay.png").exists());
    ok(&[
        "features",
        "--manifest",
        s(&p("cohort/manifest.jsonl")),
        "--shapes",
        s(&p("shapes")),
        "--out",
        s(&p("features.csv")),
    ]);
    let csv = fs::read_to_string(p("features.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[0].split(',').count(), 26);
    assert!(lines[0].starts_with("image_id,label,"));

    ok(&["train", "--features", s(&p("features.csv")), "--out", s(&p("model.json"))]);
    ok(&[
        "predict",
        "--model",
        s(&p("model.json")),
        "--features",
        s(&p("features.csv")),
        "--out",
        s(&p("pred.csv")),
    ]);
    assert_eq!(fs::read_to_string(p("pred.csv")).unwrap().lines().count(), 11);
    ok(&["crossval", "--k", "5", "--features", s(&p("features.csv")), "--out", s(&p("report.json"))]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_samples"], 10);

    // A manifest entry whose image is missing is a per-item failure.
    let mut manifest = fs::read_to_string(p("cohort/manifest.jsonl")).unwrap();
    manifest.push_str("{\"id\":\"ghost\",\"image_path\":\"images/ghost.png\",\"orientation\":\"dorsal\"}\n");
    fs::write(p("cohort/manifest.jsonl"), manifest).unwrap();
    let o = sbdetect(&[
        "features",
        "--manifest",
        s(&p("cohort/manifest.jsonl")),
        "--shapes",
        s(&p("shapes")),
        "--out",
        s(&p("features2.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ghost"));
    assert_eq!(fs::read_to_string(p("features2.csv")).unwrap().lines().count(), 11);
}
