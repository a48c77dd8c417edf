use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, View, Zone};

/// One labeled throw as seen from one camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThrowRecord {
    /// Identifies the physical throw; records from different views of the
    /// same throw share it.
    pub throw_id: String,
    pub subject_id: String,
    pub view: View,
    pub intent: Zone,
    pub outcome: Zone,
    pub congruence: bool,
    pub pose_ref: String,
    pub ball_ref: String,
    pub reaction_ref: String,
}

impl ThrowRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.intent.is_miss() {
            return Err(DataError::Schema(format!(
                "record {}: intent cannot be MISS",
                self.throw_id
            )));
        }
        if self.subject_id.is_empty() {
            return Err(DataError::Schema(format!(
                "record {}: empty subject id",
                self.throw_id
            )));
        }
        if self.congruence != (self.intent == self.outcome) {
            return Err(DataError::CongruenceMismatch {
                throw_id: self.throw_id.clone(),
                stored: self.congruence,
                intent: self.intent,
                outcome: self.outcome,
            });
        }
        Ok(())
    }

    /// True when the ball struck one of the nine zones.
    pub fn is_hit(&self) -> bool {
        !self.outcome.is_miss()
    }

    pub fn refs(&self) -> [&str; 3] {
        [&self.pose_ref, &self.ball_ref, &self.reaction_ref]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestMetadata {
    #[serde(default)]
    pub generator: String,
    #[serde(default)]
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub metadata: ManifestMetadata,
    pub records: Vec<ThrowRecord>,
}

impl DatasetManifest {
    /// Checks every record invariant. When `base_dir` is given, feature
    /// references are resolved against it and must exist.
    pub fn validate(&self, base_dir: Option<&Path>) -> Result<(), DataError> {
        for record in &self.records {
            record.validate()?;
            if let Some(base) = base_dir {
                for reference in record.refs() {
                    if !base.join(reference).is_file() {
                        return Err(DataError::DanglingRef {
                            throw_id: record.throw_id.clone(),
                            reference: reference.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn subjects(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.subject_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Records from one view that hit the grid.
    pub fn hits_for_view(&self, view: View) -> Vec<&ThrowRecord> {
        self.records
            .iter()
            .filter(|r| r.view == view && r.is_hit())
            .collect()
    }
}

/// Loads and validates a manifest, resolving feature references relative to
/// the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DataError::parse(path.display(), e))?;
    manifest.validate(Some(&manifest_dir(path)))?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| DataError::parse(path.display(), e))?;
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

pub(crate) fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(intent: u8, outcome: Zone, congruence: bool) -> ThrowRecord {
        ThrowRecord {
            throw_id: "t0".into(),
            subject_id: "s1".into(),
            view: View::Deg0,
            intent: Zone::new(intent).unwrap(),
            outcome,
            congruence,
            pose_ref: "p.json".into(),
            ball_ref: "b.json".into(),
            reaction_ref: "r.csv".into(),
        }
    }

    fn write(dir: &Path, manifest_json: &str) -> PathBuf {
        for f in ["p.json", "b.json", "r.csv"] {
            fs::write(dir.join(f), "").unwrap();
        }
        let path = dir.join("manifest.json");
        fs::write(&path, manifest_json).unwrap();
        path
    }

    #[test]
    fn stored_congruence_must_match_intent_and_outcome() {
        let r = record(3, Zone::new(3).unwrap(), false);
        assert!(matches!(r.validate(), Err(DataError::CongruenceMismatch { .. })));
        assert!(record(3, Zone::new(3).unwrap(), true).validate().is_ok());
        assert!(record(3, Zone::MISS, false).validate().is_ok());
    }

    #[test]
    fn miss_intent_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let json = r#"{"metadata":{},"records":[{"throw_id":"a","subject_id":"s","view":"deg0",
            "intent":"MISS","outcome":"MISS","congruence":true,
            "pose_ref":"p.json","ball_ref":"b.json","reaction_ref":"r.csv"}]}"#;
        let path = write(dir.path(), json);
        assert!(matches!(load_manifest(&path), Err(DataError::Schema(_))));
    }

    #[test]
    fn dangling_reference_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest {
            metadata: ManifestMetadata::default(),
            records: vec![record(2, Zone::new(5).unwrap(), false)],
        };
        let path = write(dir.path(), &serde_json::to_string(&m).unwrap());
        assert!(load_manifest(&path).is_ok());
        m.records[0].reaction_ref = "gone.csv".into();
        save_manifest(&m, &path).unwrap();
        assert!(matches!(load_manifest(&path), Err(DataError::DanglingRef { .. })));
    }
}
