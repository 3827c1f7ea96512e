//! Dataset ingestion from a `train|test / live|spoof` directory tree, and a
//! writer for synthetic datasets in the same layout.
//!
//! ```text
//! root/
//!   train/live/**.png|pgm    train/spoof/**
//!   test/live/**             test/spoof/**
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::synth::{generate_synthetic_fingerprint, FingerSpec};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ppm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub label: Label,
    /// Name of the dataset root directory, e.g. the sensor name.
    pub scanner: String,
    pub split: Split,
    /// Unique within a split; used to name patches.
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_images(&path, out)?;
        } else if is_image(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// `live/sub/a.png` becomes `live__sub__a`.
fn source_id(label_dir: &Path, path: &Path, label: Label) -> String {
    let rel = path
        .strip_prefix(label_dir)
        .unwrap_or(path)
        .with_extension("");
    let mut id = label.as_str().to_string();
    for part in rel.components() {
        id.push_str("__");
        id.push_str(&part.as_os_str().to_string_lossy());
    }
    id
}

/// Enumerates every image under the four split/label directories. Entries are
/// sorted by split (train first), label (live first), then path.
pub fn ingest_dataset(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let scanner = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_default();
    let mut entries = Vec::new();
    for split in Split::ALL {
        for label in [Label::Live, Label::Spoof] {
            let dir = root.join(split.as_str()).join(label.as_str());
            if !dir.is_dir() {
                return Err(Error::Dataset(format!(
                    "missing directory {}",
                    dir.display()
                )));
            }
            let mut paths = Vec::new();
            collect_images(&dir, &mut paths)?;
            paths.sort();
            entries.extend(paths.into_iter().map(|path| DatasetEntry {
                source_id: source_id(&dir, &path, label),
                path,
                label,
                scanner: scanner.clone(),
                split,
            }));
        }
    }
    if entries.is_empty() {
        return Err(Error::Dataset(format!(
            "zero images under {}",
            root.display()
        )));
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        entries,
    })
}

/// Synthetic two-class dataset: live and spoof fingers differ in ridge period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthDatasetSpec {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub side: usize,
    pub live_period: f64,
    pub spoof_period: f64,
    /// Uniform jitter applied to each image's period.
    pub period_jitter: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthDatasetSpec {
    fn default() -> Self {
        Self {
            train_per_class: 8,
            test_per_class: 4,
            side: 240,
            live_period: 7.0,
            spoof_period: 11.0,
            period_jitter: 0.5,
            noise: 10.0,
            seed: 0,
        }
    }
}

/// Writes a dataset under `root` and returns the number of images written.
pub fn write_synthetic_dataset(root: impl AsRef<Path>, spec: &SynthDatasetSpec) -> Result<usize> {
    let root = root.as_ref();
    if spec.live_period - spec.period_jitter < 4.0 || spec.spoof_period - spec.period_jitter < 4.0 {
        return Err(Error::InvalidParams(
            "ridge period must stay at least 4".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut written = 0;
    for split in Split::ALL {
        let count = match split {
            Split::Train => spec.train_per_class,
            Split::Test => spec.test_per_class,
        };
        for label in [Label::Live, Label::Spoof] {
            let dir = root.join(split.as_str()).join(label.as_str());
            fs::create_dir_all(&dir)?;
            let base = match label {
                Label::Live => spec.live_period,
                Label::Spoof => spec.spoof_period,
            };
            for i in 0..count {
                let jitter = if spec.period_jitter > 0.0 {
                    rng.gen_range(-spec.period_jitter..=spec.period_jitter)
                } else {
                    0.0
                };
                let finger = FingerSpec {
                    noise: spec.noise,
                    seed: rng.gen(),
                    ..FingerSpec::new(
                        spec.side,
                        spec.side,
                        rng.gen_range(0.0..180.0),
                        base + jitter,
                    )
                };
                generate_synthetic_fingerprint(&finger)?
                    .save_png(dir.join(format!("{}_{i:04}.png", label.as_str())))?;
                written += 1;
            }
        }
    }
    Ok(written)
}
