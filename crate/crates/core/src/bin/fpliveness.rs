use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use fpliveness::dataset::{write_synthetic_dataset, SynthDatasetSpec};
use fpliveness::image::load_image;
use fpliveness::overlay::{render_overlay, save_overlay};
use fpliveness::pipeline::{
    classify_image, load_run_model, run_classify, run_evaluate, run_extract, run_train, Overrides,
    RunConfig,
};
use fpliveness::{Error, ErrorCategory, Result};

const REPORT_HELP: &str = "\
Reports:
  evaluate writes <reports>/evaluation.json, a two-element array (patch level,
  then fingerprint level) of objects with the keys
    level, tp, tn, fp, fn, far, frr, ace, accuracy
  and <reports>/evaluation.csv with the header
    level,tp,tn,fp,fn,far,frr,ace,accuracy
  plus one row per level. Rates are percentages; FAR = FP/(FP+TP),
  FRR = FN/(FN+TN), ACE = (FAR+FRR)/2. A rate with a zero denominator is null
  in JSON and an empty CSV field.

Exit codes:
  0 success, 2 usage, 3 unreadable input image, 4 invalid parameters or
  configuration, 5 model problem, 6 dataset or artifact problem, 7 I/O.";

/// Fingerprint liveness detection from dense, orientation-normalised patches.
#[derive(Parser, Debug)]
#[command(version, after_help = REPORT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid cell side in pixels.
    #[arg(long, global = true)]
    sigma: Option<usize>,
    /// Central cells per patch side.
    #[arg(long = "patch-mult", global = true)]
    patch_mult: Option<usize>,
    /// Padding cells per patch side.
    #[arg(long = "pad-mult", global = true)]
    pad_mult: Option<usize>,
    /// Whitespace margin t in [0, 1].
    #[arg(long = "noise-factor", global = true)]
    noise_factor: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<usize>,
    /// Output location; its meaning depends on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the dataset into the patch store (--out: patch store directory).
    Extract,
    /// Train the patch classifier on the stored training patches (--out: model file).
    Train,
    /// Classify an image or every image below a directory (--out: JSON file, default stdout).
    Classify { target: PathBuf },
    /// Score the stored test patches and write reports (--out: reports directory).
    Evaluate,
    /// Draw per-patch decisions over an image (--out: PNG, default <stem>_overlay.png).
    Render { image: PathBuf },
    /// Write a synthetic dataset in train|test / live|spoof layout (--out: dataset root).
    Synth {
        #[arg(long, default_value_t = 8)]
        train_per_class: usize,
        #[arg(long, default_value_t = 4)]
        test_per_class: usize,
        /// Image side in pixels.
        #[arg(long, default_value_t = 240)]
        side: usize,
    },
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Input => 3,
        ErrorCategory::InvalidArgument => 4,
        ErrorCategory::Model => 5,
        ErrorCategory::Data => 6,
        ErrorCategory::Io => 7,
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        sigma: common.sigma,
        patch_multiplier: common.patch_mult,
        padding_multiplier: common.pad_mult,
        noise_factor: common.noise_factor,
        epochs: common.epochs,
        batch_size: common.batch_size,
    })?;
    Ok(cfg)
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    let out = cli.common.out.clone();
    match cli.command {
        Command::Extract => {
            if let Some(o) = out {
                cfg.paths.patches = o;
            }
            let s = run_extract(&cfg)?;
            println!(
                "{} images, {} train patches, {} test patches, {} images without patches",
                s.images,
                s.train_patches,
                s.test_patches,
                s.empty_sources.len()
            );
        }
        Command::Train => {
            if let Some(o) = out {
                cfg.paths.model = o;
            }
            let s = run_train(&cfg)?;
            if let Some(last) = s.history.last() {
                println!(
                    "trained on {} patches: loss {:.4}, accuracy {:.2}%",
                    s.samples,
                    last.loss,
                    100.0 * last.accuracy
                );
            }
            println!("model {} sha256 {}", cfg.paths.model.display(), s.checksum);
        }
        Command::Classify { target } => {
            let outcomes = run_classify(&cfg, &target)?;
            let values: Vec<_> = outcomes.iter().map(|o| o.to_json_value()).collect();
            write_json(&serde_json::Value::Array(values), out.as_deref())?;
            // Per-image failures are part of the output; the exit code still
            // reports the first one.
            if let Some(Err(e)) = outcomes.into_iter().map(|o| o.result).find(|r| r.is_err()) {
                return Err(e);
            }
        }
        Command::Evaluate => {
            if let Some(o) = out {
                cfg.paths.reports = o;
            }
            let e = run_evaluate(&cfg)?;
            println!("{}", fpliveness::metrics::CSV_HEADER);
            println!("{}", e.patch.to_csv_row());
            println!("{}", e.fingerprint.to_csv_row());
            if !e.skipped.is_empty() {
                println!(
                    "{} test images without patches were excluded",
                    e.skipped.len()
                );
            }
        }
        Command::Render { image } => {
            let model = load_run_model(&cfg)?;
            let stem = image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let result = classify_image(&model, &cfg.patch, &image, &stem)?;
            let overlay = render_overlay(&load_image(&image)?, &result, &cfg.patch)?;
            let path = out.unwrap_or_else(|| image.with_file_name(format!("{stem}_overlay.png")));
            save_overlay(&overlay, &path)?;
            println!(
                "{}: {} ({} patches, live {:.3}, spoof {:.3}) -> {}",
                stem,
                result.decision,
                result.patch_count,
                result.aggregate_live,
                result.aggregate_spoof,
                path.display()
            );
        }
        Command::Synth {
            train_per_class,
            test_per_class,
            side,
        } => {
            let root = out.unwrap_or_else(|| cfg.paths.dataset.clone());
            let spec = SynthDatasetSpec {
                train_per_class,
                test_per_class,
                side,
                seed: cfg.seed,
                ..SynthDatasetSpec::default()
            };
            let n = write_synthetic_dataset(&root, &spec)?;
            info!("synthetic dataset spec {spec:?}");
            println!("wrote {n} images to {}", root.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> ExitCode {
    let category = e.category();
    eprintln!("error [{}]: {e}", category.as_str());
    ExitCode::from(exit_code(category))
}
