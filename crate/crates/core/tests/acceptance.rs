//! Acceptance checks. Each prints one `PASS` or `FAIL` line; the process
//! exits non-zero if any check fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fpliveness::cnn::{
    forward, gradient_check, init_model, model_to_bytes, train, CnnConfig, Mode, PatchScore,
    TrainConfig,
};
use fpliveness::dataset::{write_synthetic_dataset, SynthDatasetSpec};
use fpliveness::metrics::{accuracy, ace, aggregate, confusion, decide, far, frr, ConfusionCounts};
use fpliveness::orientation::{build_orientation_field, GridParams};
use fpliveness::patch::{
    crop_amount, dense_sample, extract_patch, measure_orientation, slot_grid, Extraction,
    PatchParams,
};
use fpliveness::pipeline::{run_evaluate, run_extract, run_train, RunConfig};
use fpliveness::synth::{
    generate_synthetic_fingerprint, generate_synthetic_ridge, stripe_patch, FingerSpec,
};
use fpliveness::{GrayImage, Label};

type Check = Result<String, String>;
type NamedCheck = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn crop_identity() -> Check {
    let p = PatchParams::default();
    let crop = crop_amount(12, 10);
    ensure!(crop == 43, "crop amount {crop}, expected 43");
    ensure!(
        p.final_side() == 82,
        "final side {}, expected 82",
        p.final_side()
    );
    let img = generate_synthetic_fingerprint(&FingerSpec::new(200, 200, 25.0, 9.0))
        .map_err(|e| e.to_string())?;
    let patches = dense_sample(&img, &p).map_err(|e| e.to_string())?;
    ensure!(
        !patches.is_empty(),
        "no patch kept from the reference image"
    );
    for patch in &patches {
        ensure!(
            patch.pixels.width() == 82 && patch.pixels.height() == 82,
            "extracted patch is {}x{}",
            patch.pixels.width(),
            patch.pixels.height()
        );
    }
    Ok(format!(
        "crop 43, side 82, {} extracted patches all 82x82",
        patches.len()
    ))
}

fn no_background_leak() -> Check {
    const SENTINEL: u8 = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut kept, mut trials) = (0, 0);
    while trials < 200 {
        let side = rng.gen_range(180..=260);
        let spec = FingerSpec {
            noise: 8.0,
            seed: rng.gen(),
            ..FingerSpec::new(
                side,
                side,
                rng.gen_range(0.0..180.0),
                rng.gen_range(6.0..13.0),
            )
        };
        let img = generate_synthetic_fingerprint(&spec).map_err(|e| e.to_string())?;
        ensure!(
            !img.data().contains(&SENTINEL),
            "source image contains the sentinel"
        );
        let params = PatchParams {
            fill: SENTINEL,
            noise_factor: 0.0,
            ..PatchParams::default()
        };
        let field = build_orientation_field(&img, params.grid()).map_err(|e| e.to_string())?;
        let (rows, cols) = slot_grid(&field, &params);
        ensure!(rows > 0 && cols > 0, "{side}px image has no slot");
        let origin = (rng.gen_range(0..rows), rng.gen_range(0..cols));
        trials += 1;
        match extract_patch(&img, &field, origin, &params).map_err(|e| e.to_string())? {
            Extraction::Kept(p) => {
                kept += 1;
                let leaks = p.pixels.data().iter().filter(|&&v| v == SENTINEL).count();
                ensure!(
                    leaks == 0,
                    "{leaks} sentinel pixels in the patch at {origin:?} (theta {:.1})",
                    p.theta_degrees
                );
            }
            Extraction::Rejected(_) => {}
        }
    }
    ensure!(kept >= 100, "only {kept} of 200 trials kept a patch");
    Ok(format!(
        "{trials} trials, {kept} kept patches, 0 sentinel pixels"
    ))
}

fn rotation_normalisation() -> Check {
    let params = PatchParams {
        noise_factor: 0.0,
        ..PatchParams::default()
    };
    let mut worst: f64 = 0.0;
    let mut total = 0;
    for angle in [0.0, 15.0, 30.0, 45.0, 60.0, 75.0] {
        let img = generate_synthetic_ridge(260, 260, angle, 11.0, 120.0, 0.0, 7)
            .map_err(|e| e.to_string())?;
        let patches = dense_sample(&img, &params).map_err(|e| e.to_string())?;
        ensure!(!patches.is_empty(), "no patches kept at {angle} degrees");
        for p in &patches {
            let m = measure_orientation(&p.pixels, params.grid()).map_err(|e| e.to_string())?;
            ensure!(
                m.abs() <= 3.0,
                "patch at {:?} of the {angle} degree image re-measures to {m:.2}",
                p.grid_origin
            );
            worst = worst.max(m.abs());
        }
        total += patches.len();
    }
    Ok(format!(
        "{total} patches over 6 angles, worst residual {worst:.3} degrees"
    ))
}

/// Brute-force cell sums straight from the definition.
fn oracle_cell(img: &GrayImage, sigma: usize, row: usize, col: usize) -> (i64, i64, i64) {
    let (y0, x0) = (1 + row * sigma, 1 + col * sigma);
    let (mut sx, mut sy, mut signed) = (0i64, 0i64, 0i64);
    for y in y0 + 1..=y0 + sigma - 2 {
        for x in x0 + 1..=x0 + sigma - 2 {
            let dx = img.get(x + 1, y) as i64 - img.get(x - 1, y) as i64;
            let dy = img.get(x, y + 1) as i64 - img.get(x, y - 1) as i64;
            sx += dx.abs();
            sy += dy.abs();
            signed += dy * if dx < 0 { -1 } else { 1 };
        }
    }
    (sx, sy, signed)
}

fn orientation_field_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sigma = 12;
    let mut cells = 0;
    let mut worst_unit: f64 = 0.0;
    for i in 0..20 {
        let img = if i % 2 == 0 {
            GrayImage::from_fn(100, 100, |_, _| rng.gen())
        } else {
            generate_synthetic_ridge(
                100,
                100,
                rng.gen_range(0.0..180.0),
                rng.gen_range(4.0..15.0),
                200.0,
                20.0,
                rng.gen(),
            )
            .map_err(|e| e.to_string())?
        };
        let field =
            build_orientation_field(&img, GridParams { sigma }).map_err(|e| e.to_string())?;
        let n = (100 - 2) / sigma;
        ensure!(
            field.cells_x() == n && field.cells_y() == n,
            "field is {}x{} cells",
            field.cells_x(),
            field.cells_y()
        );
        for r in 0..n {
            for c in 0..n {
                let (sx, sy, signed) = oracle_cell(&img, sigma, r, c);
                let got = field.sums(r, c);
                ensure!(
                    (got.dx, got.dy, got.dy_signed) == (sx, sy, signed),
                    "image {i} cell ({r}, {c}): sums {got:?} vs oracle ({sx}, {sy}, {signed})"
                );
                let mag = ((sx * sx + sy * sy) as f64).sqrt();
                let (ux, uy) = if mag > 0.0 {
                    (sx as f64 / mag, sy as f64 / mag)
                } else {
                    (0.0, 0.0)
                };
                let err = (field.unit_x(r, c) - ux)
                    .abs()
                    .max((field.unit_y(r, c) - uy).abs());
                ensure!(
                    err <= 1e-9,
                    "image {i} cell ({r}, {c}) unit vector off by {err:e}"
                );
                let sign = if signed < 0 { -1 } else { 1 };
                ensure!(field.sign_y(r, c) == sign, "image {i} cell ({r}, {c}) sign");
                worst_unit = worst_unit.max(err);
                cells += 1;
            }
        }
    }
    Ok(format!(
        "20 images, {cells} cells, sums exact, max unit error {worst_unit:e}"
    ))
}

fn gradient_check_passes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = CnnConfig {
        input_side: 8,
        block_filters: vec![2, 3],
        block_dropout: vec![0.2, 0.3],
        ..CnnConfig::default()
    };
    let mut model = init_model(&cfg, 11).map_err(|e| e.to_string())?;
    for b in &mut model.blocks {
        for c in 0..b.gamma.len() {
            b.gamma[c] = rng.gen_range(0.5..1.5);
            b.beta[c] = rng.gen_range(-0.3..0.3);
            b.running_mean[c] = rng.gen_range(0.0..0.3);
            b.running_var[c] = rng.gen_range(0.05..0.5);
        }
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (k, label) in [Label::Live, Label::Spoof].into_iter().enumerate() {
        let img = GrayImage::from_fn(8, 8, |_, _| rng.gen());
        let r = gradient_check(&model, &img, label, 1e-4 * (k as f64 + 1.0))
            .map_err(|e| e.to_string())?;
        ensure!(
            r.max_relative_error < 1e-4,
            "relative error {:e} at {:?}",
            r.max_relative_error,
            r.worst
        );
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
    }
    Ok(format!(
        "{checked} parameter checks, max relative error {worst:e}"
    ))
}

fn toy_set(seed: u64) -> Vec<(GrayImage, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set: Vec<_> = (0..400)
        .map(|i| {
            let horizontal = i % 2 == 0;
            let label = if horizontal {
                Label::Live
            } else {
                Label::Spoof
            };
            (stripe_patch(24, horizontal, &mut rng), label)
        })
        .collect();
    set.shuffle(&mut rng);
    set
}

fn toy_training() -> Check {
    let set = toy_set(31);
    let data: Vec<_> = set.iter().map(|(i, l)| (i, *l)).collect();
    let cfg = TrainConfig {
        epochs: 10,
        seed: 4,
        ..TrainConfig::default()
    };
    let model = init_model(&CnnConfig::reduced(24), 4).map_err(|e| e.to_string())?;
    let (a, history) = train(model.clone(), &data, &cfg).map_err(|e| e.to_string())?;
    let (b, _) = train(model, &data, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        model_to_bytes(&a) == model_to_bytes(&b),
        "two seeded runs differ"
    );

    let images: Vec<&GrayImage> = set.iter().map(|(i, _)| i).collect();
    let scores = forward(&a, &images, Mode::Infer).map_err(|e| e.to_string())?;
    let correct = scores
        .iter()
        .zip(&set)
        .filter(|(s, (_, l))| s.decision() == *l)
        .count();
    let acc = correct as f64 / set.len() as f64;
    let last = history.last().unwrap();
    ensure!(
        acc >= 0.95,
        "training-set accuracy {:.1}% after 10 epochs",
        100.0 * acc
    );
    Ok(format!(
        "400 samples, 10 epochs: {:.1}% training accuracy (last epoch in train mode {:.1}%), identical weights across runs",
        100.0 * acc,
        100.0 * last.accuracy
    ))
}

fn metric_identities() -> Check {
    // 61 false accepts among 5000 accepted, no false rejects.
    let biometrika = ConfusionCounts {
        tp: 4939,
        tn: 5000,
        fp: 61,
        fn_: 0,
    };
    // 56 false rejects among 1250 rejected, no false accepts.
    let identix = ConfusionCounts {
        tp: 1000,
        tn: 1194,
        fp: 0,
        fn_: 56,
    };
    let rows = [(biometrika, 1.22, 0.0, 0.61), (identix, 0.0, 4.48, 2.24)];
    for (c, want_far, want_frr, want_ace) in rows {
        let (fa, fr) = (
            far(&c).map_err(|e| e.to_string())?,
            frr(&c).map_err(|e| e.to_string())?,
        );
        ensure!(
            fa == want_far && fr == want_frr,
            "counts {c:?} give FAR {fa} FRR {fr}"
        );
        let a = ace(fa, fr).map_err(|e| e.to_string())?;
        ensure!(a == want_ace, "ACE {a}, expected {want_ace}");
    }
    Ok("FAR 1.22 / FRR 0 -> ACE 0.61; FAR 0 / FRR 4.48 -> ACE 2.24, exact".into())
}

fn aggregation_superiority() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut wins = 0;
    for _ in 0..100 {
        let p_correct = rng.gen_range(0.7..=0.95);
        let (mut patch_truth, mut patch_pred) = (Vec::new(), Vec::new());
        let (mut fp_truth, mut fp_pred) = (Vec::new(), Vec::new());
        for f in 0..20 {
            let truth = if f % 2 == 0 {
                Label::Live
            } else {
                Label::Spoof
            };
            let n = rng.gen_range(50..=80);
            let scores: Vec<PatchScore> = (0..n)
                .map(|_| {
                    let confidence = rng.gen_range(0.5..=1.0);
                    let right = rng.gen_bool(p_correct);
                    let live = match (truth, right) {
                        (Label::Live, true) | (Label::Spoof, false) => confidence,
                        _ => 1.0 - confidence,
                    };
                    PatchScore::from_live(live)
                })
                .collect();
            for s in &scores {
                patch_truth.push(truth);
                patch_pred.push(s.decision());
            }
            let (l, s) = aggregate(&scores).map_err(|e| e.to_string())?;
            fp_truth.push(truth);
            fp_pred.push(decide(l, s));
        }
        let patch_acc = accuracy(&confusion(&patch_truth, &patch_pred).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let fp_acc = accuracy(&confusion(&fp_truth, &fp_pred).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        if fp_acc >= patch_acc {
            wins += 1;
        }
    }
    ensure!(
        wins >= 95,
        "fingerprint level won only {wins} of 100 trials"
    );
    Ok(format!(
        "fingerprint accuracy >= patch accuracy in {wins}/100 trials"
    ))
}

fn small_run_config(root: &Path) -> RunConfig {
    let text = format!(
        r#"
seed = 12
[patch]
sigma = 6
patch_multiplier = 4
padding_multiplier = 1
[cnn]
block_filters = [8, 16]
block_dropout = [0.2, 0.3]
[train]
epochs = 3
batch_size = 16
[paths]
dataset = "{0}/data"
patches = "{0}/patches"
model = "{0}/model.fplc"
reports = "{0}/reports"
"#,
        root.display()
    );
    RunConfig::from_toml_str(&text).expect("valid config")
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, base, out);
        } else {
            let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
            out.push((rel, fs::read(&p).unwrap()));
        }
    }
}

fn pipeline_artifacts(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let cfg = small_run_config(root);
    let spec = SynthDatasetSpec {
        train_per_class: 4,
        test_per_class: 3,
        side: 120,
        seed: 5,
        ..SynthDatasetSpec::default()
    };
    write_synthetic_dataset(&cfg.paths.dataset, &spec).map_err(|e| e.to_string())?;
    run_extract(&cfg).map_err(|e| e.to_string())?;
    run_train(&cfg).map_err(|e| e.to_string())?;
    run_evaluate(&cfg).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for dir in [&cfg.paths.patches, &cfg.paths.reports] {
        collect_files(dir, root, &mut files);
    }
    files.push((
        "model.fplc".into(),
        fs::read(&cfg.paths.model).map_err(|e| e.to_string())?,
    ));
    Ok(files)
}

fn end_to_end_determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = pipeline_artifacts(a.path())?;
    let fb = pipeline_artifacts(b.path())?;
    ensure!(
        fa.len() == fb.len(),
        "{} vs {} artifacts",
        fa.len(),
        fb.len()
    );
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        ensure!(na == nb, "artifact lists differ at {na} / {nb}");
        ensure!(ba == bb, "{na} differs between runs");
    }
    for required in [
        "patches/train/manifest.csv",
        "patches/test/manifest.csv",
        "model.fplc",
        "reports/evaluation.json",
        "reports/evaluation.csv",
    ] {
        ensure!(
            fa.iter().any(|(n, _)| n == required),
            "{required} was not produced"
        );
    }
    Ok(format!(
        "{} artifacts byte-identical across two seeded runs",
        fa.len()
    ))
}

fn whitespace_monotonicity() -> Check {
    let spec = FingerSpec {
        noise: 6.0,
        seed: 3,
        ..FingerSpec::new(260, 260, 35.0, 9.0)
    };
    let img = generate_synthetic_fingerprint(&spec).map_err(|e| e.to_string())?;
    let mut counts = Vec::new();
    for t in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0] {
        let params = PatchParams {
            noise_factor: t,
            ..PatchParams::default()
        };
        counts.push(
            dense_sample(&img, &params)
                .map_err(|e| e.to_string())?
                .len(),
        );
    }
    ensure!(counts[0] > 0, "t = 0 keeps nothing, check is vacuous");
    ensure!(
        counts.windows(2).all(|w| w[1] <= w[0]),
        "counts not non-increasing: {counts:?}"
    );
    ensure!(
        *counts.last().unwrap() == 0,
        "t = 1 keeps {} patches",
        counts.last().unwrap()
    );
    Ok(format!(
        "kept counts for t = 0, .05, .1, .2, .5, 1: {counts:?}"
    ))
}

fn main() -> ExitCode {
    let checks: [NamedCheck; 10] = [
        ("crop and patch size identity", crop_identity),
        ("no background leak", no_background_leak),
        ("rotation normalisation", rotation_normalisation),
        ("orientation field oracle", orientation_field_oracle),
        ("gradient check", gradient_check_passes),
        ("toy training convergence", toy_training),
        ("metric identities", metric_identities),
        ("aggregation superiority", aggregation_superiority),
        ("end-to-end determinism", end_to_end_determinism),
        ("whitespace filter monotonicity", whitespace_monotonicity),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
