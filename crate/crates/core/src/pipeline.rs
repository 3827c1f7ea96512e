//! Stage orchestration: extract → train → classify / evaluate.
//!
//! Stages communicate only through files, so each can be rerun on its own:
//!
//! ```text
//! <patches>/params.json           patch parameters used for extraction
//! <patches>/sources.csv           one row per dataset image with its patch count
//! <patches>/{train,test}/         patch PNGs plus manifest.csv
//! <model>                         binary model file
//! <reports>/train_history.json    per-epoch loss and accuracy
//! <reports>/evaluation.json       patch and fingerprint level reports
//! <reports>/evaluation.csv        the same as CSV rows
//! <reports>/fingerprints.csv      per-fingerprint aggregate scores
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{
    classify_patches, init_model, load_model, save_model, train, CnnConfig, EpochStats,
    ModelWeights, TrainConfig,
};
use crate::dataset::{ingest_dataset, DatasetEntry, Split};
use crate::error::{Error, Result};
use crate::image::{load_image, GrayImage};
use crate::label::Label;
use crate::metrics::{classify_fingerprint, EvalReport, FingerprintResult, Level, CSV_HEADER};
use crate::patch::{
    dense_sample_labeled, load_patches, Patch, PatchParams, PatchStoreWriter, MANIFEST_FILE,
};

pub const SOURCES_FILE: &str = "sources.csv";
pub const PARAMS_FILE: &str = "params.json";
pub const HISTORY_FILE: &str = "train_history.json";
pub const EVAL_JSON_FILE: &str = "evaluation.json";
pub const EVAL_CSV_FILE: &str = "evaluation.csv";
pub const FINGERPRINTS_FILE: &str = "fingerprints.csv";

/// Patches per inference batch.
const INFER_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub patches: PathBuf,
    pub model: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "data".into(),
            patches: "out/patches".into(),
            model: "out/model.fplc".into(),
            reports: "out/reports".into(),
        }
    }
}

/// Everything a run needs. `seed` drives weight initialisation, shuffling and
/// dropout, and replaces `train.seed`. The network input side always follows
/// from the patch parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub patch: PatchParams,
    pub cnn: CnnConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

/// Command-line style overrides; `None` keeps the configured value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub sigma: Option<usize>,
    pub patch_multiplier: Option<usize>,
    pub padding_multiplier: Option<usize>,
    pub noise_factor: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let explicit_side = table.get("cnn").and_then(|c| c.get("input_side")).is_some();
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.patch.validate()?;
        if !explicit_side {
            cfg.cnn.input_side = cfg.patch.final_side();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::Config(format!(
                "no config file at {}",
                path.display()
            )));
        }
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        let patch_changed =
            o.sigma.is_some() || o.patch_multiplier.is_some() || o.padding_multiplier.is_some();
        if let Some(v) = o.sigma {
            self.patch.sigma = v;
        }
        if let Some(v) = o.patch_multiplier {
            self.patch.patch_multiplier = v;
        }
        if let Some(v) = o.padding_multiplier {
            self.patch.padding_multiplier = v;
        }
        if let Some(v) = o.noise_factor {
            self.patch.noise_factor = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if patch_changed {
            self.patch.validate()?;
            self.cnn.input_side = self.patch.final_side();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.patch.validate()?;
        self.cnn.validate()?;
        self.train.validate()?;
        if self.cnn.input_side != self.patch.final_side() {
            return Err(Error::Config(format!(
                "cnn.input_side {} differs from the extracted patch side {}",
                self.cnn.input_side,
                self.patch.final_side()
            )));
        }
        let p = &self.paths;
        let all = [&p.dataset, &p.patches, &p.model, &p.reports];
        for (i, a) in all.iter().enumerate() {
            if all[i + 1..].contains(a) {
                return Err(Error::Config(format!("path {} is used twice", a.display())));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRow {
    pub split: Split,
    pub source_id: String,
    pub label: Label,
    pub scanner: String,
    /// Relative to the dataset root.
    pub path: PathBuf,
    pub patch_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub images: usize,
    pub train_patches: usize,
    pub test_patches: usize,
    /// Images that kept no patch at all.
    pub empty_sources: Vec<String>,
}

fn split_dir(cfg: &RunConfig, split: Split) -> PathBuf {
    cfg.paths.patches.join(split.as_str())
}

/// Removes a previous patch store so extraction can be rerun. Refuses to touch
/// a non-empty directory that is not a patch store.
fn clear_store_dir(dir: &Path) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    if dir.join(MANIFEST_FILE).exists() {
        fs::remove_dir_all(dir)?;
        return Ok(());
    }
    if fs::read_dir(dir)?.next().is_some() {
        return Err(Error::Dataset(format!(
            "{} exists and is not a patch store",
            dir.display()
        )));
    }
    Ok(())
}

fn sample_entry(entry: &DatasetEntry, params: &PatchParams) -> Result<Vec<Patch>> {
    let img = load_image(&entry.path)?;
    dense_sample_labeled(&img, params, &entry.source_id, Some(entry.label))
}

/// Samples every dataset image into the patch store.
pub fn run_extract(cfg: &RunConfig) -> Result<ExtractSummary> {
    cfg.validate()?;
    let manifest = ingest_dataset(&cfg.paths.dataset)?;
    fs::create_dir_all(&cfg.paths.patches)?;
    let mut sources = Vec::with_capacity(manifest.entries.len());
    let mut counts = [0usize; 2];
    // Bounded chunks keep memory flat on large datasets while still sampling
    // images in parallel; writing stays sequential and ordered.
    let chunk = 4 * rayon::current_num_threads();
    for (k, split) in Split::ALL.into_iter().enumerate() {
        let dir = split_dir(cfg, split);
        clear_store_dir(&dir)?;
        let mut writer = PatchStoreWriter::create(&dir)?;
        let entries: Vec<&DatasetEntry> = manifest.split(split).collect();
        for group in entries.chunks(chunk) {
            let sampled: Vec<Result<Vec<Patch>>> = group
                .par_iter()
                .map(|e| sample_entry(e, &cfg.patch))
                .collect();
            for (entry, patches) in group.iter().zip(sampled) {
                let patches = patches?;
                for p in &patches {
                    writer.write(p)?;
                }
                sources.push(SourceRow {
                    split,
                    source_id: entry.source_id.clone(),
                    label: entry.label,
                    scanner: entry.scanner.clone(),
                    path: entry
                        .path
                        .strip_prefix(&manifest.root)
                        .unwrap_or(&entry.path)
                        .to_path_buf(),
                    patch_count: patches.len(),
                });
            }
        }
        counts[k] = writer.finish()?;
        info!("{split}: {} images, {} patches", entries.len(), counts[k]);
    }

    let mut w = csv::Writer::from_path(cfg.paths.patches.join(SOURCES_FILE))?;
    for row in &sources {
        w.serialize(row)?;
    }
    w.flush()?;
    fs::write(
        cfg.paths.patches.join(PARAMS_FILE),
        serde_json::to_string_pretty(&cfg.patch)?,
    )?;

    let empty_sources: Vec<String> = sources
        .iter()
        .filter(|s| s.patch_count == 0)
        .map(|s| format!("{}/{}", s.split, s.source_id))
        .collect();
    for s in &empty_sources {
        warn!("{s}: no patch survived the whitespace filter");
    }
    Ok(ExtractSummary {
        images: sources.len(),
        train_patches: counts[0],
        test_patches: counts[1],
        empty_sources,
    })
}

pub fn read_sources(patches_dir: impl AsRef<Path>) -> Result<Vec<SourceRow>> {
    let path = patches_dir.as_ref().join(SOURCES_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    csv::Reader::from_path(path)?
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Fails when the store was extracted with different patch parameters.
fn check_store_params(cfg: &RunConfig) -> Result<()> {
    let path = cfg.paths.patches.join(PARAMS_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let stored: PatchParams = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if stored != cfg.patch {
        return Err(Error::ShapeMismatch(format!(
            "patch store was extracted with {stored:?}, config has {:?}",
            cfg.patch
        )));
    }
    Ok(())
}

fn load_split(cfg: &RunConfig, split: Split) -> Result<Vec<Patch>> {
    let dir = split_dir(cfg, split);
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(Error::MissingArtifact(dir.join(MANIFEST_FILE)));
    }
    load_patches(dir)
}

fn labelled(patches: &[Patch]) -> Result<Vec<Label>> {
    patches
        .iter()
        .map(|p| {
            p.label
                .ok_or_else(|| Error::Dataset(format!("patch {} has no label", p.file_name())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub samples: usize,
    pub checksum: String,
    pub history: Vec<EpochStats>,
}

pub fn run_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    check_store_params(cfg)?;
    let patches = load_split(cfg, Split::Train)?;
    let labels = labelled(&patches)?;
    let data: Vec<_> = patches.iter().map(|p| &p.pixels).zip(labels).collect();
    let model = init_model(&cfg.cnn, cfg.seed)?;
    info!(
        "training {} parameters on {} patches",
        model.parameter_count(),
        data.len()
    );
    let (model, history) = train(model, &data, &cfg.train_config())?;
    if let Some(parent) = cfg.paths.model.parent() {
        fs::create_dir_all(parent)?;
    }
    save_model(&model, &cfg.paths.model)?;
    fs::create_dir_all(&cfg.paths.reports)?;
    fs::write(
        cfg.paths.reports.join(HISTORY_FILE),
        serde_json::to_string_pretty(&history)?,
    )?;
    Ok(TrainSummary {
        samples: data.len(),
        checksum: model.checksum(),
        history,
    })
}

/// Loads the configured model and checks it accepts the configured patches.
pub fn load_run_model(cfg: &RunConfig) -> Result<ModelWeights> {
    let model = load_model(&cfg.paths.model)?;
    if model.config.input_side != cfg.patch.final_side() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {0}x{0} patches, configuration extracts {1}x{1}",
            model.config.input_side,
            cfg.patch.final_side()
        )));
    }
    Ok(model)
}

/// Classifies one image: dense sampling, patch scores, aggregation.
pub fn classify_image(
    model: &ModelWeights,
    params: &PatchParams,
    path: &Path,
    source_id: &str,
) -> Result<FingerprintResult> {
    classify_image_data(model, params, &load_image(path)?, source_id)
}

/// [`classify_image`] for an image already in memory.
pub fn classify_image_data(
    model: &ModelWeights,
    params: &PatchParams,
    img: &GrayImage,
    source_id: &str,
) -> Result<FingerprintResult> {
    if model.config.input_side != params.final_side() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} pixel patches, parameters give {}",
            model.config.input_side,
            params.final_side()
        )));
    }
    let patches = dense_sample_labeled(img, params, source_id, None)?;
    let pixels: Vec<_> = patches.iter().map(|p| &p.pixels).collect();
    let scores = classify_patches(model, &pixels, INFER_BATCH)?;
    let origins: Vec<_> = patches.iter().map(|p| p.grid_origin).collect();
    classify_fingerprint(source_id, &origins, &scores)
}

/// Result for one input image. Per-image failures such as an image without
/// any kept patch are reported here rather than aborting the run.
#[derive(Debug)]
pub struct ClassifyOutcome {
    pub path: PathBuf,
    pub result: Result<FingerprintResult>,
}

#[derive(Serialize)]
struct OutcomeJson<'a> {
    path: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a FingerprintResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<&'static str>,
}

impl ClassifyOutcome {
    pub fn to_json_value(&self) -> serde_json::Value {
        let out = match &self.result {
            Ok(r) => OutcomeJson {
                path: &self.path,
                result: Some(r),
                error: None,
                category: None,
            },
            Err(e) => OutcomeJson {
                path: &self.path,
                result: None,
                error: Some(e.to_string()),
                category: Some(e.category().as_str()),
            },
        };
        serde_json::to_value(out).expect("outcome serialises")
    }
}

fn collect_images(target: &Path) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.extension().and_then(|e| e.to_str()).is_some_and(|e| {
                ["png", "pgm", "pnm", "ppm"].contains(&e.to_ascii_lowercase().as_str())
            }) {
                out.push(path);
            }
        }
        Ok(())
    }
    if !target.exists() {
        return Err(Error::MissingArtifact(target.to_path_buf()));
    }
    if target.is_file() {
        return Ok(vec![target.to_path_buf()]);
    }
    let mut out = Vec::new();
    walk(target, &mut out)?;
    out.sort();
    Ok(out)
}

/// Classifies an image file, or every image below a directory, with the
/// configured model. Images are processed in parallel; output order is
/// sorted by path.
pub fn run_classify(cfg: &RunConfig, target: impl AsRef<Path>) -> Result<Vec<ClassifyOutcome>> {
    cfg.validate()?;
    let model = load_run_model(cfg)?;
    let paths = collect_images(target.as_ref())?;
    Ok(paths
        .into_par_iter()
        .map(|path| {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let result = classify_image(&model, &cfg.patch, &path, &id);
            ClassifyOutcome { path, result }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub patch: EvalReport,
    pub fingerprint: EvalReport,
    pub fingerprints: Vec<(Label, FingerprintResult)>,
    /// Test images without kept patches; excluded from both reports.
    pub skipped: Vec<String>,
}

#[derive(Serialize)]
struct FingerprintRow<'a> {
    source_id: &'a str,
    label: Label,
    decision: &'a str,
    aggregate_live: String,
    aggregate_spoof: String,
    patch_count: usize,
}

/// Scores the persisted test split. Patches are read back from the store,
/// never re-extracted.
pub fn run_evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    cfg.validate()?;
    check_store_params(cfg)?;
    let model = load_run_model(cfg)?;
    let patches = load_split(cfg, Split::Test)?;
    if patches.is_empty() {
        return Err(Error::NoPatches("test split".into()));
    }
    let truth = labelled(&patches)?;
    let pixels: Vec<_> = patches.iter().map(|p| &p.pixels).collect();
    let scores = classify_patches(&model, &pixels, INFER_BATCH)?;
    let predicted: Vec<Label> = scores.iter().map(|s| s.decision()).collect();
    let patch_report = EvalReport::from_labels(Level::Patch, &truth, &predicted)?;

    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, p) in patches.iter().enumerate() {
        groups
            .entry(p.source_id.as_str())
            .or_insert_with(|| {
                order.push(&p.source_id);
                Vec::new()
            })
            .push(i);
    }
    let mut fingerprints = Vec::with_capacity(order.len());
    for id in &order {
        let idx = &groups[id];
        let label = truth[idx[0]];
        if idx.iter().any(|&i| truth[i] != label) {
            return Err(Error::Dataset(format!(
                "{id} has patches with mixed labels"
            )));
        }
        let origins: Vec<_> = idx.iter().map(|&i| patches[i].grid_origin).collect();
        let s: Vec<_> = idx.iter().map(|&i| scores[i]).collect();
        fingerprints.push((label, classify_fingerprint(id, &origins, &s)?));
    }
    let fp_truth: Vec<Label> = fingerprints.iter().map(|f| f.0).collect();
    let fp_pred: Vec<Label> = fingerprints.iter().map(|f| f.1.decision).collect();
    let fingerprint_report = EvalReport::from_labels(Level::Fingerprint, &fp_truth, &fp_pred)?;

    let sources = read_sources(&cfg.paths.patches)?;
    let skipped: Vec<String> = sources
        .iter()
        .filter(|s| s.split == Split::Test && s.patch_count == 0)
        .map(|s| s.source_id.clone())
        .collect();
    for s in &skipped {
        warn!("{s}: no patches, excluded from the fingerprint report");
    }

    let eval = Evaluation {
        patch: patch_report,
        fingerprint: fingerprint_report,
        fingerprints,
        skipped,
    };
    write_reports(cfg, &eval, &sources)?;
    Ok(eval)
}

fn write_reports(cfg: &RunConfig, eval: &Evaluation, sources: &[SourceRow]) -> Result<()> {
    let dir = &cfg.paths.reports;
    fs::create_dir_all(dir)?;
    let reports = [eval.patch, eval.fingerprint];
    fs::write(
        dir.join(EVAL_JSON_FILE),
        serde_json::to_string_pretty(&reports)? + "\n",
    )?;
    let mut csv_out = fs::File::create(dir.join(EVAL_CSV_FILE))?;
    writeln!(csv_out, "{CSV_HEADER}")?;
    for r in &reports {
        writeln!(csv_out, "{}", r.to_csv_row())?;
    }

    let mut w = csv::Writer::from_path(dir.join(FINGERPRINTS_FILE))?;
    for (label, f) in &eval.fingerprints {
        w.serialize(FingerprintRow {
            source_id: &f.source_id,
            label: *label,
            decision: f.decision.as_str(),
            aggregate_live: format!("{:.6}", f.aggregate_live),
            aggregate_spoof: format!("{:.6}", f.aggregate_spoof),
            patch_count: f.patch_count,
        })?;
    }
    for s in sources
        .iter()
        .filter(|s| s.split == Split::Test && s.patch_count == 0)
    {
        w.serialize(FingerprintRow {
            source_id: &s.source_id,
            label: s.label,
            decision: "no-patches",
            aggregate_live: String::new(),
            aggregate_spoof: String::new(),
            patch_count: 0,
        })?;
    }
    w.flush()?;
    Ok(())
}
