//! Shared data model and on-disk formats.
//!
//! Pose tracks and manifests are JSON, reaction features are CSV, and model
//! weights use a small versioned binary layout (see `docs/weights-format.md`).

mod features;
mod manifest;
mod pose;
mod weights;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use features::{
    load_reaction_features, save_reaction_features, OutcomeFeatures, ReactionFeatures,
    OUTCOME_WINDOW, REACTION_CHANNELS, REACTION_STEPS,
};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, ManifestMetadata, ThrowRecord};
pub use pose::{
    load_pose_sequence, save_pose_sequence, Keypoint, PoseSequence, HALPE_26, JOINT_COUNT,
    REQUIRED_JOINTS,
};
pub use weights::{load_weights, save_weights, ModelWeights, WeightLayer, WEIGHTS_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("record {throw_id}: stored congruence {stored} contradicts intent {intent} / outcome {outcome}")]
    CongruenceMismatch {
        throw_id: String,
        stored: bool,
        intent: Zone,
        outcome: Zone,
    },
    #[error("record {throw_id}: reference {reference} does not resolve")]
    DanglingRef { throw_id: String, reference: String },
    #[error("unsupported weights format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("corrupt weights payload: {0}")]
    Corruption(String),
}

impl DataError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl fmt::Display, message: impl fmt::Display) -> Self {
        DataError::Parse {
            context: context.to_string(),
            message: message.to_string(),
        }
    }
}

/// One cell of the 3x3 target grid, or a complete miss.
///
/// Zones are numbered 1..=9 row-major from the top-left as seen by the
/// thrower. Class index `k` (0-based, used by the classifiers) maps to zone
/// `k + 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Zone(u8);

impl Zone {
    pub const MISS: Zone = Zone(0);
    pub const COUNT: usize = 9;

    pub fn new(number: u8) -> Result<Zone, DataError> {
        if (1..=9).contains(&number) {
            Ok(Zone(number))
        } else {
            Err(DataError::Schema(format!("zone number {number} outside 1..=9")))
        }
    }

    /// Zone for a 0-based class index. Panics if `index >= 9`.
    pub fn from_index(index: usize) -> Zone {
        assert!(index < Self::COUNT, "class index {index} out of range");
        Zone(index as u8 + 1)
    }

    pub fn from_row_col(row: usize, col: usize) -> Zone {
        Zone::from_index(row * 3 + col)
    }

    pub fn is_miss(self) -> bool {
        self.0 == 0
    }

    pub fn number(self) -> Option<u8> {
        (!self.is_miss()).then_some(self.0)
    }

    /// 0-based class index, `None` for a miss.
    pub fn index(self) -> Option<usize> {
        self.number().map(|n| n as usize - 1)
    }

    pub fn row(self) -> Option<usize> {
        self.index().map(|i| i / 3)
    }

    pub fn col(self) -> Option<usize> {
        self.index().map(|i| i % 3)
    }

    pub fn all() -> impl Iterator<Item = Zone> {
        (1..=9u8).map(Zone)
    }
}

impl fmt::Debug for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.number() {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("MISS"),
        }
    }
}

impl FromStr for Zone {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("miss") {
            return Ok(Zone::MISS);
        }
        let n: u8 = s
            .parse()
            .map_err(|_| DataError::Schema(format!("invalid zone {s:?}")))?;
        Zone::new(n)
    }
}

impl Serialize for Zone {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.number() {
            Some(n) => serializer.serialize_u8(n),
            None => serializer.serialize_str("MISS"),
        }
    }
}

impl<'de> Deserialize<'de> for Zone {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(u8),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(n) => Zone::new(n).map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Camera viewpoint relative to the thrower.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    #[serde(rename = "deg0")]
    Deg0,
    #[serde(rename = "deg45")]
    Deg45,
    #[serde(rename = "deg90")]
    Deg90,
}

impl View {
    pub const ALL: [View; 3] = [View::Deg0, View::Deg45, View::Deg90];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Deg0 => "deg0",
            View::Deg45 => "deg45",
            View::Deg90 => "deg90",
        }
    }

    pub fn is_frontal(self) -> bool {
        self == View::Deg0
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deg0" => Ok(View::Deg0),
            "deg45" => Ok(View::Deg45),
            "deg90" => Ok(View::Deg90),
            other => Err(DataError::Schema(format!("unknown view {other:?}"))),
        }
    }
}
