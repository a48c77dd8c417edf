//! Throw-frame detection: locating the end of the acceleration phase.
//!
//! The frontal view scores each frame by its wrist speed relative to the
//! clip maximum; side views look for the largest signed wrist-hip offset
//! along the image x axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{PoseSequence, View};
use crate::signal::{self, Series, SignalError};

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("wrist never moves (maximum speed is zero)")]
    ZeroMotion,
    #[error("series of length {len} is too short (need at least {needed})")]
    TooShort { len: usize, needed: usize },
    #[error("joint {0:?} is absent or has no valid samples")]
    MissingJoint(String),
    #[error("signals have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Minimum clip length for the frontal heuristic.
pub const MIN_FRONTAL_LEN: usize = 10;
/// Minimum clip length for the side-view heuristic.
pub const MIN_SIDE_LEN: usize = 3;

/// Per-frame relative-speed scores and the selected throw frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThrowScore {
    pub scores: Vec<f64>,
    pub throw_frame: usize,
    /// Inclusive frame range searched for the maximum.
    pub search_window: (usize, usize),
}

/// Frames `[ceil(0.1 n), floor(0.9 n)]`, clamped to the clip. The ends of a
/// filtered clip carry edge spikes and are excluded from the search.
pub fn trimmed_window(n: usize) -> (usize, usize) {
    let start = n.div_ceil(10);
    let end = (9 * n / 10).min(n.saturating_sub(1));
    (start, end.max(start))
}

/// `score_i = (s_i - max s) / max s`: zero at the fastest frame, negative
/// elsewhere.
pub fn relative_speed_scores(speeds: &[f64]) -> Result<Vec<f64>, DetectError> {
    let max = speeds.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(DetectError::ZeroMotion);
    }
    Ok(speeds.iter().map(|s| (s - max) / max).collect())
}

/// Index of the maximum within an inclusive range; earliest on ties.
fn argmax_in(values: &[f64], (start, end): (usize, usize)) -> usize {
    let mut best = start;
    for i in start..=end {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

pub fn frontal_scores(wrist_speed: &Series) -> Result<ThrowScore, DetectError> {
    let n = wrist_speed.len();
    if n < MIN_FRONTAL_LEN {
        return Err(DetectError::TooShort {
            len: n,
            needed: MIN_FRONTAL_LEN,
        });
    }
    let scores = relative_speed_scores(&wrist_speed.values)?;
    let search_window = trimmed_window(n);
    let throw_frame = argmax_in(&scores, search_window);
    Ok(ThrowScore {
        scores,
        throw_frame,
        search_window,
    })
}

/// Frame of maximal signed wrist-hip offset along image x.
///
/// `toward_target_sign` is `+1.0` when increasing image x points toward the
/// target in this camera, `-1.0` otherwise.
pub fn side_throw_frame(
    wrist_x: &Series,
    hip_x: &Series,
    toward_target_sign: f64,
) -> Result<usize, DetectError> {
    let offset = signed_offset(wrist_x, hip_x, toward_target_sign)?;
    Ok(argmax_in(&offset, trimmed_window(offset.len())))
}

fn signed_offset(wrist_x: &Series, hip_x: &Series, sign: f64) -> Result<Vec<f64>, DetectError> {
    if wrist_x.len() != hip_x.len() {
        return Err(DetectError::LengthMismatch(wrist_x.len(), hip_x.len()));
    }
    if wrist_x.len() < MIN_SIDE_LEN {
        return Err(DetectError::TooShort {
            len: wrist_x.len(),
            needed: MIN_SIDE_LEN,
        });
    }
    Ok(wrist_x
        .values
        .iter()
        .zip(&hip_x.values)
        .map(|(w, h)| sign.signum() * (w - h))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    Left,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub throwing_side: Handedness,
    pub cutoff_hz: f64,
    pub filter_order: usize,
    pub savgol_window: usize,
    pub savgol_polyorder: usize,
    pub deg45_toward_target_sign: f64,
    pub deg90_toward_target_sign: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            throwing_side: Handedness::Right,
            cutoff_hz: 2.0,
            filter_order: 4,
            savgol_window: 11,
            savgol_polyorder: 2,
            deg45_toward_target_sign: 1.0,
            deg90_toward_target_sign: 1.0,
        }
    }
}

impl DetectConfig {
    pub fn wrist_joint(&self) -> &'static str {
        match self.throwing_side {
            Handedness::Right => "right_wrist",
            Handedness::Left => "left_wrist",
        }
    }

    pub fn hip_joint(&self) -> &'static str {
        match self.throwing_side {
            Handedness::Right => "right_hip",
            Handedness::Left => "left_hip",
        }
    }

    pub fn toward_target_sign(&self, view: View) -> f64 {
        match view {
            View::Deg0 => 1.0,
            View::Deg45 => self.deg45_toward_target_sign,
            View::Deg90 => self.deg90_toward_target_sign,
        }
    }
}

/// Result of running the detector on a pose clip.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Detection {
    pub throw_frame: usize,
    pub view: View,
    /// Wrist speed (frontal, pixels per frame) or signed wrist-hip offset
    /// (side views, pixels), one value per frame.
    pub signal: Vec<f64>,
    /// Relative-speed scores; frontal view only.
    pub scores: Option<Vec<f64>>,
    pub search_window: (usize, usize),
}

/// Gap-filled and low-passed x and y tracks of one joint.
pub fn smoothed_joint_track(
    pose: &PoseSequence,
    joint: &str,
    config: &DetectConfig,
) -> Result<(Series, Series), DetectError> {
    let idx = pose
        .joint_index(joint)
        .ok_or_else(|| DetectError::MissingJoint(joint.to_string()))?;
    let track = pose.track(idx);
    let dt = 1.0 / pose.fps();
    let axis = |k: usize| -> Result<Series, DetectError> {
        let raw: Vec<Option<f64>> = track.iter().map(|p| p.map(|xy| xy[k])).collect();
        let filled = signal::interpolate_missing(&raw, dt).map_err(|e| match e {
            SignalError::AllMissing => DetectError::MissingJoint(joint.to_string()),
            other => other.into(),
        })?;
        Ok(signal::butterworth_lowpass(&filled, config.cutoff_hz, config.filter_order)?)
    };
    Ok((axis(0)?, axis(1)?))
}

/// Preprocesses the pose and applies the heuristic for `view`.
pub fn detect_throw_frame(
    pose: &PoseSequence,
    view: View,
    config: &DetectConfig,
) -> Result<Detection, DetectError> {
    let (wx, wy) = smoothed_joint_track(pose, config.wrist_joint(), config)?;
    if view.is_frontal() {
        let vx = signal::savgol_derivative(&wx, config.savgol_window, config.savgol_polyorder)?;
        let vy = signal::savgol_derivative(&wy, config.savgol_window, config.savgol_polyorder)?;
        let speed: Vec<f64> = vx
            .values
            .iter()
            .zip(&vy.values)
            .map(|(a, b)| a.hypot(*b))
            .collect();
        let score = frontal_scores(&wx.map(speed.clone()))?;
        Ok(Detection {
            throw_frame: score.throw_frame,
            view,
            signal: speed,
            scores: Some(score.scores),
            search_window: score.search_window,
        })
    } else {
        let (hx, _) = smoothed_joint_track(pose, config.hip_joint(), config)?;
        let offset = signed_offset(&wx, &hx, config.toward_target_sign(view))?;
        let search_window = trimmed_window(offset.len());
        Ok(Detection {
            throw_frame: argmax_in(&offset, search_window),
            view,
            signal: offset,
            scores: None,
            search_window,
        })
    }
}
