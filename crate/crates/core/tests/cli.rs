use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fpliveness"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const CONFIG: &str = r#"
seed = 2
[patch]
sigma = 6
patch_multiplier = 4
padding_multiplier = 1
[cnn]
block_filters = [8, 16]
block_dropout = [0.2, 0.3]
[train]
batch_size = 16
"#;

#[test]
fn full_run_through_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), CONFIG).unwrap();
    let c = ["--config", "run.toml"];

    let out = ok(&run(
        d,
        &[
            "synth",
            "--train-per-class",
            "3",
            "--test-per-class",
            "2",
            "--side",
            "110",
            c[0],
            c[1],
        ],
    ));
    assert!(out.contains("wrote 10 images"));
    assert!(d.join("data/train/live").is_dir());

    let out = ok(&run(d, &["extract", c[0], c[1]]));
    assert!(out.contains("10 images"));
    assert!(d.join("out/patches/train/manifest.csv").exists());

    let out = ok(&run(
        d,
        &["train", c[0], c[1], "--epochs", "2", "--out", "m.fplc"],
    ));
    assert!(out.contains("sha256"));
    assert!(d.join("m.fplc").exists());
    // Keep the default model path for later stages.
    ok(&run(d, &["train", c[0], c[1], "--epochs", "2"]));

    let out = ok(&run(d, &["evaluate", c[0], c[1]]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "level,tp,tn,fp,fn,far,frr,ace,accuracy");
    assert!(lines[1].starts_with("patch,"));
    assert!(lines[2].starts_with("fingerprint,"));
    assert!(d.join("out/reports/evaluation.json").exists());

    let out = ok(&run(d, &["classify", "data/test/spoof", c[0], c[1]]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(v[0]["result"]["patch_count"].as_u64().unwrap() > 0);

    let out = ok(&run(
        d,
        &[
            "render",
            "data/test/live/live_0000.png",
            "--out",
            "ov.png",
            c[0],
            c[1],
        ],
    ));
    assert!(out.contains("ov.png"));
    let png = image::open(d.join("ov.png")).unwrap();
    assert_eq!((png.width(), png.height()), (110, 110));
}

#[test]
fn errors_exit_with_category_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = run(d, &["train", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [invalid-argument]"));

    let out = run(d, &["extract"]);
    assert_eq!(out.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [data]"));

    let out = run(d, &["extract", "--noise-factor", "3"]);
    assert_eq!(out.status.code(), Some(4));

    let out = run(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(d, &["classify", "."]);
    assert_eq!(out.status.code(), Some(6));
    fs::create_dir_all(d.join("out")).unwrap();
    fs::write(d.join("out/model.fplc"), b"not a model").unwrap();
    let out = run(d, &["classify", "."]);
    assert_eq!(
        out.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [model]"));

    let out = ok(&run(d, &["--help"]));
    assert!(out.contains("level, tp, tn, fp, fn, far, frr, ace, accuracy"));
}

#[test]
fn classify_without_patches_reports_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), CONFIG).unwrap();
    ok(&run(
        d,
        &[
            "synth",
            "--train-per-class",
            "2",
            "--test-per-class",
            "1",
            "--side",
            "100",
            "--config",
            "run.toml",
        ],
    ));
    ok(&run(d, &["extract", "--config", "run.toml"]));
    ok(&run(d, &["train", "--config", "run.toml", "--epochs", "1"]));
    let blank = image::GrayImage::from_pixel(100, 100, image::Luma([255u8]));
    blank.save(d.join("blank.png")).unwrap();
    let out = run(
        d,
        &[
            "classify",
            "blank.png",
            "--config",
            "run.toml",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(6));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!(v[0]["error"].as_str().unwrap().contains("no patches"));
}
