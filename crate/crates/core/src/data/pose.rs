use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DataError;

pub const JOINT_COUNT: usize = 26;

/// Halpe-26 keypoint order as emitted by common 2D pose estimators.
pub const HALPE_26: [&str; JOINT_COUNT] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "head",
    "neck",
    "hip",
    "left_big_toe",
    "right_big_toe",
    "left_small_toe",
    "right_small_toe",
    "left_heel",
    "right_heel",
];

/// Joints the throw-frame heuristics read.
pub const REQUIRED_JOINTS: [&str; 4] = ["left_wrist", "right_wrist", "left_hip", "right_hip"];

/// A 2D keypoint. A negative confidence marks the joint as missing in this
/// frame; on disk it is written as `[x, y, -1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const MISSING_CONFIDENCE: f64 = -1.0;

    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Keypoint { x, y, confidence }
    }

    pub fn missing() -> Self {
        Keypoint {
            x: 0.0,
            y: 0.0,
            confidence: Self::MISSING_CONFIDENCE,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.confidence < 0.0
    }

    pub fn position(&self) -> Option<[f64; 2]> {
        (!self.is_missing()).then_some([self.x, self.y])
    }
}

impl Serialize for Keypoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.confidence].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Keypoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y, confidence] = <[f64; 3]>::deserialize(deserializer)?;
        Ok(Keypoint { x, y, confidence })
    }
}

/// Per-frame 2D joint keypoints for one throw clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSequence {
    fps: f64,
    joints: Vec<String>,
    frames: Vec<Vec<Keypoint>>,
}

impl PoseSequence {
    pub fn new(
        fps: f64,
        joints: Vec<String>,
        frames: Vec<Vec<Keypoint>>,
    ) -> Result<Self, DataError> {
        let pose = PoseSequence { fps, joints, frames };
        pose.validate()?;
        Ok(pose)
    }

    fn validate(&self) -> Result<(), DataError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(DataError::Schema(format!("fps must be positive, got {}", self.fps)));
        }
        if self.joints.len() != JOINT_COUNT {
            return Err(DataError::Schema(format!(
                "expected {JOINT_COUNT} joint names, got {}",
                self.joints.len()
            )));
        }
        for required in REQUIRED_JOINTS {
            if !self.joints.iter().any(|j| j == required) {
                return Err(DataError::Schema(format!("required joint {required:?} absent")));
            }
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.len() != self.joints.len() {
                return Err(DataError::Schema(format!(
                    "frame {i} has {} joints, expected {}",
                    frame.len(),
                    self.joints.len()
                )));
            }
            if frame
                .iter()
                .any(|k| !k.is_missing() && !(k.x.is_finite() && k.y.is_finite()))
            {
                return Err(DataError::Schema(format!("frame {i} has a non-finite keypoint")));
            }
        }
        Ok(())
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn joints(&self) -> &[String] {
        &self.joints
    }

    pub fn frames(&self) -> &[Vec<Keypoint>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j == name)
    }

    /// The raw track of one joint; `None` entries are missing detections.
    pub fn track(&self, joint: usize) -> Vec<Option<[f64; 2]>> {
        self.frames.iter().map(|f| f[joint].position()).collect()
    }

    pub fn missing_count(&self, joint: usize) -> usize {
        self.frames.iter().filter(|f| f[joint].is_missing()).count()
    }
}

pub fn load_pose_sequence(path: impl AsRef<Path>) -> Result<PoseSequence, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let pose: PoseSequence =
        serde_json::from_str(&text).map_err(|e| DataError::parse(path.display(), e))?;
    pose.validate()?;
    Ok(pose)
}

pub fn save_pose_sequence(pose: &PoseSequence, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let text = serde_json::to_string(pose).map_err(|e| DataError::parse(path.display(), e))?;
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}
