use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Ground truth or predicted class of a fingerprint or patch. `Live` is the
/// positive class for confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Live,
    Spoof,
}

impl Label {
    /// Class index used by the classifier's output layer.
    pub fn index(self) -> usize {
        match self {
            Label::Live => 0,
            Label::Spoof => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Live),
            1 => Some(Label::Spoof),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Live => "live",
            Label::Spoof => "spoof",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" | "real" => Ok(Label::Live),
            "spoof" | "fake" => Ok(Label::Spoof),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}
