use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Frames N_tf-5 ..= N_tf+5.
pub const OUTCOME_WINDOW: usize = 11;
/// One second of reaction at 30 fps.
pub const REACTION_STEPS: usize = 30;
pub const REACTION_CHANNELS: usize = 7;

/// Ball positions over the eleven frames around the throw frame, normalized
/// by image width and height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct OutcomeFeatures {
    rows: Vec<[f64; 2]>,
}

impl OutcomeFeatures {
    pub fn new(rows: Vec<[f64; 2]>) -> Result<Self, DataError> {
        if rows.len() != OUTCOME_WINDOW {
            return Err(DataError::Schema(format!(
                "outcome features need {OUTCOME_WINDOW} rows, got {}",
                rows.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DataError::Schema("outcome features must be finite".into()));
        }
        Ok(OutcomeFeatures { rows })
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

impl TryFrom<Vec<[f64; 2]>> for OutcomeFeatures {
    type Error = DataError;

    fn try_from(rows: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        OutcomeFeatures::new(rows)
    }
}

impl From<OutcomeFeatures> for Vec<[f64; 2]> {
    fn from(f: OutcomeFeatures) -> Self {
        f.rows
    }
}

/// Thirty frames of seven reaction channels, starting ten frames after the
/// throw frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 7]>", into = "Vec<[f64; 7]>")]
pub struct ReactionFeatures {
    rows: Vec<[f64; REACTION_CHANNELS]>,
}

impl ReactionFeatures {
    pub fn new(rows: Vec<[f64; REACTION_CHANNELS]>) -> Result<Self, DataError> {
        if rows.len() != REACTION_STEPS {
            return Err(DataError::Schema(format!(
                "reaction features need {REACTION_STEPS} rows, got {}",
                rows.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DataError::Schema("reaction features must be finite".into()));
        }
        Ok(ReactionFeatures { rows })
    }

    pub fn rows(&self) -> &[[f64; REACTION_CHANNELS]] {
        &self.rows
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

impl TryFrom<Vec<[f64; 7]>> for ReactionFeatures {
    type Error = DataError;

    fn try_from(rows: Vec<[f64; 7]>) -> Result<Self, Self::Error> {
        ReactionFeatures::new(rows)
    }
}

impl From<ReactionFeatures> for Vec<[f64; 7]> {
    fn from(f: ReactionFeatures) -> Self {
        f.rows
    }
}

/// Reaction features are stored as a headerless CSV of 30 rows by 7 columns.
pub fn load_reaction_features(path: impl AsRef<Path>) -> Result<ReactionFeatures, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| DataError::parse(path.display(), e))?;
    let mut rows = Vec::with_capacity(REACTION_STEPS);
    for record in reader.deserialize::<Vec<f64>>() {
        let row = record.map_err(|e| DataError::parse(path.display(), e))?;
        let row: [f64; REACTION_CHANNELS] = row.try_into().map_err(|r: Vec<f64>| {
            DataError::Schema(format!(
                "{}: reaction row has {} channels, expected {REACTION_CHANNELS}",
                path.display(),
                r.len()
            ))
        })?;
        rows.push(row);
    }
    ReactionFeatures::new(rows)
}

pub fn save_reaction_features(
    features: &ReactionFeatures,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| DataError::parse(path.display(), e))?;
    for row in features.rows() {
        writer
            .serialize(row)
            .map_err(|e| DataError::parse(path.display(), e))?;
    }
    writer.flush().map_err(|e| DataError::io(path, e))
}
