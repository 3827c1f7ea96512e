//! Fingerprint-level aggregation of patch scores and error rates.
//!
//! Rates follow these definitions, with `Live` as the positive class:
//!
//! ```text
//! FAR      = FP / (FP + TP)
//! FRR      = FN / (FN + TN)
//! ACE      = (FAR + FRR) / 2
//! Accuracy = (TP + TN) / (TP + TN + FP + FN)
//! ```
//!
//! Note the FAR and FRR denominators differ from the textbook
//! `FP / (FP + TN)` and `FN / (FN + TP)`. All rates are reported in percent.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cnn::PatchScore;
use crate::error::{Error, Result};
use crate::label::Label;

/// Element-wise sums of live and spoof probabilities.
pub fn aggregate(scores: &[PatchScore]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::NoPatches("aggregate".into()));
    }
    Ok(scores
        .iter()
        .fold((0.0, 0.0), |(l, s), p| (l + p.live, s + p.spoof)))
}

/// Live iff the live total is strictly larger; ties fail closed to spoof.
pub fn decide(aggregate_live: f64, aggregate_spoof: f64) -> Label {
    if aggregate_live > aggregate_spoof {
        Label::Live
    } else {
        Label::Spoof
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchVerdict {
    pub grid_origin: (usize, usize),
    pub score: PatchScore,
    pub decision: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintResult {
    pub source_id: String,
    pub aggregate_live: f64,
    pub aggregate_spoof: f64,
    pub decision: Label,
    pub patch_count: usize,
    pub per_patch: Vec<PatchVerdict>,
}

/// Aggregates one fingerprint's patch scores. `origins` and `scores` are
/// parallel.
pub fn classify_fingerprint(
    source_id: &str,
    origins: &[(usize, usize)],
    scores: &[PatchScore],
) -> Result<FingerprintResult> {
    if origins.len() != scores.len() {
        return Err(Error::LengthMismatch(origins.len(), scores.len()));
    }
    let (live, spoof) = aggregate(scores).map_err(|_| Error::NoPatches(source_id.to_string()))?;
    Ok(FingerprintResult {
        source_id: source_id.to_string(),
        aggregate_live: live,
        aggregate_spoof: spoof,
        decision: decide(live, spoof),
        patch_count: scores.len(),
        per_patch: origins
            .iter()
            .zip(scores)
            .map(|(&grid_origin, &score)| PatchVerdict {
                grid_origin,
                score,
                decision: score.decision(),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Live, Label::Live) => self.tp += 1,
            (Label::Spoof, Label::Spoof) => self.tn += 1,
            (Label::Spoof, Label::Live) => self.fp += 1,
            (Label::Live, Label::Spoof) => self.fn_ += 1,
        }
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label]) -> Result<ConfusionCounts> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        c.record(t, p);
    }
    Ok(c)
}

fn percent(num: u64, den: u64, what: &'static str) -> Result<f64> {
    if den == 0 {
        return Err(Error::Undefined(what));
    }
    Ok(100.0 * num as f64 / den as f64)
}

/// `100 * FP / (FP + TP)`
pub fn far(c: &ConfusionCounts) -> Result<f64> {
    percent(c.fp, c.fp + c.tp, "FAR with FP + TP = 0")
}

/// `100 * FN / (FN + TN)`
pub fn frr(c: &ConfusionCounts) -> Result<f64> {
    percent(c.fn_, c.fn_ + c.tn, "FRR with FN + TN = 0")
}

pub fn ace(far_pct: f64, frr_pct: f64) -> Result<f64> {
    if !far_pct.is_finite() || !frr_pct.is_finite() {
        return Err(Error::Undefined("ACE of an undefined rate"));
    }
    Ok((far_pct + frr_pct) / 2.0)
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    percent(c.tp + c.tn, c.total(), "accuracy of an empty evaluation")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Patch,
    Fingerprint,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Patch => "patch",
            Level::Fingerprint => "fingerprint",
        })
    }
}

/// Confusion counts and derived rates for one evaluation level. Undefined
/// rates (zero denominators) are `None`, serialised as JSON `null` and as an
/// empty CSV field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub ace: Option<f64>,
    pub accuracy: Option<f64>,
}

pub const CSV_HEADER: &str = "level,tp,tn,fp,fn,far,frr,ace,accuracy";

impl EvalReport {
    pub fn from_counts(level: Level, counts: ConfusionCounts) -> Self {
        let far = far(&counts).ok();
        let frr = frr(&counts).ok();
        let ace = match (far, frr) {
            (Some(a), Some(r)) => ace(a, r).ok(),
            _ => None,
        };
        Self {
            level,
            counts,
            far,
            frr,
            ace,
            accuracy: accuracy(&counts).ok(),
        }
    }

    pub fn from_labels(level: Level, truth: &[Label], predicted: &[Label]) -> Result<Self> {
        Ok(Self::from_counts(level, confusion(truth, predicted)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// One CSV data row matching [`CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let c = &self.counts;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.level,
            c.tp,
            c.tn,
            c.fp,
            c.fn_,
            opt(self.far),
            opt(self.frr),
            opt(self.ace),
            opt(self.accuracy)
        )
    }
}
