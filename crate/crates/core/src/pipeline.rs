//! Feature extraction from recorded artefacts: pose track to throw frame,
//! ball clip to outcome features, plus loading whole manifests.

use std::borrow::Cow;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balltrack::{extract_ball_track, outcome_feature_vector, BallTrack, ColorRange, FrameSource, FrameWindow, RasterFrame, TrackError};
use crate::data::{
    load_pose_sequence, load_reaction_features, DataError, DatasetManifest, OutcomeFeatures, PoseSequence, View,
};
use crate::detect::{detect_throw_frame, smoothed_joint_track, DetectConfig, DetectError, Detection};
use crate::eval::EvalSample;
use crate::synth::{BallScene, SynthThrow};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("throw-frame detection failed: {0}")]
    Detect(#[from] DetectError),
    #[error("ball tracking failed: {0}")]
    Track(#[from] TrackError),
    #[error("{throw_id}: {source}")]
    Throw {
        throw_id: String,
        #[source]
        source: Box<PipelineError>,
    },
}

/// A ball clip on disk: either a rendered scene description or explicit
/// RGB frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BallSource {
    Scene(BallScene),
    Window(FrameWindow),
}

impl FrameSource for BallSource {
    fn dimensions(&self) -> (usize, usize) {
        match self {
            BallSource::Scene(s) => s.dimensions(),
            BallSource::Window(w) => w.dimensions(),
        }
    }

    fn frame(&self, index: usize) -> Option<Cow<'_, RasterFrame>> {
        match self {
            BallSource::Scene(s) => s.frame(index),
            BallSource::Window(w) => w.frame(index),
        }
    }
}

pub fn load_ball_source(path: impl AsRef<Path>) -> Result<BallSource, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::parse(path.display(), e))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detect: DetectConfig,
    pub ball_color: ColorRange,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeExtraction {
    pub detection: Detection,
    pub track: BallTrack,
    pub features: OutcomeFeatures,
}

/// Gap-filled, low-passed pixel track of the throwing wrist.
pub fn wrist_pixels(pose: &PoseSequence, config: &DetectConfig) -> Result<Vec<[f64; 2]>, DetectError> {
    let (x, y) = smoothed_joint_track(pose, config.wrist_joint(), config)?;
    Ok(x.values.iter().zip(&y.values).map(|(a, b)| [*a, *b]).collect())
}

/// Detects the throw frame, tracks the ball around it and builds the
/// outcome feature window.
pub fn extract_outcome<S: FrameSource + ?Sized>(
    pose: &PoseSequence,
    view: View,
    ball: &S,
    config: &PipelineConfig,
) -> Result<OutcomeExtraction, PipelineError> {
    let detection = detect_throw_frame(pose, view, &config.detect)?;
    let wrist = wrist_pixels(pose, &config.detect)?;
    let track = extract_ball_track(ball, &wrist, detection.throw_frame, &config.ball_color)?;
    if track.no_detection {
        warn!("no ball found around frame {}", detection.throw_frame);
    }
    let features = outcome_feature_vector(&track)?;
    Ok(OutcomeExtraction {
        detection,
        track,
        features,
    })
}

fn with_id(throw_id: &str) -> impl Fn(PipelineError) -> PipelineError + '_ {
    move |e| PipelineError::Throw {
        throw_id: throw_id.to_string(),
        source: Box::new(e),
    }
}

/// Which features a caller needs; skipping the outcome stage avoids
/// detection and ball tracking altogether.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Needs {
    pub outcome: bool,
    pub reaction: bool,
}

impl Needs {
    pub const ALL: Needs = Needs {
        outcome: true,
        reaction: true,
    };
}

/// Loads and processes every record of `view`. Refs resolve against
/// `base_dir`.
pub fn load_eval_samples(
    manifest: &DatasetManifest,
    base_dir: &Path,
    view: View,
    config: &PipelineConfig,
) -> Result<Vec<EvalSample>, PipelineError> {
    load_samples_with(manifest, base_dir, view, config, Needs::ALL)
}

pub fn load_samples_with(
    manifest: &DatasetManifest,
    base_dir: &Path,
    view: View,
    config: &PipelineConfig,
    needs: Needs,
) -> Result<Vec<EvalSample>, PipelineError> {
    manifest
        .records
        .iter()
        .filter(|r| r.view == view)
        .map(|record| {
            let id = with_id(&record.throw_id);
            let outcome = if needs.outcome {
                let pose = load_pose_sequence(base_dir.join(&record.pose_ref)).map_err(|e| id(e.into()))?;
                let ball = load_ball_source(base_dir.join(&record.ball_ref)).map_err(|e| id(e.into()))?;
                Some(extract_outcome(&pose, view, &ball, config).map_err(&id)?.features)
            } else {
                None
            };
            let reaction = if needs.reaction {
                Some(load_reaction_features(base_dir.join(&record.reaction_ref)).map_err(|e| id(e.into()))?)
            } else {
                None
            };
            Ok(EvalSample {
                record: record.clone(),
                outcome,
                reaction,
            })
        })
        .collect()
}

/// Same as [`load_eval_samples`] for throws still in memory.
pub fn samples_from_throws(throws: &[SynthThrow], view: View, config: &PipelineConfig) -> Result<Vec<EvalSample>, PipelineError> {
    throws
        .iter()
        .map(|t| {
            let id = with_id(&t.truth.throw_id);
            let missing = || id(DataError::Schema(format!("view {} was not generated", view.as_str())).into());
            let pose = t.poses.get(&view).ok_or_else(missing)?;
            let scene = t.scenes.get(&view).ok_or_else(missing)?;
            let outcome = extract_outcome(pose, view, scene, config).map_err(&id)?;
            Ok(EvalSample {
                record: t.record(view),
                outcome: Some(outcome.features),
                reaction: Some(t.reaction.clone()),
            })
        })
        .collect()
}
