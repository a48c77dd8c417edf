use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::{CameraModel, CameraOptics, WorldConfig};
use super::SynthError;
use crate::data::{Keypoint, PoseSequence, View, HALPE_26, JOINT_COUNT};

/// Shape and timing of the throwing arm motion and the pose noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Cocked position to release, seconds.
    pub accel_duration: f64,
    /// Gather to cocked position, seconds.
    pub cocking_duration: f64,
    /// Backswing length relative to the acceleration sweep; below 1 so the
    /// release peak dominates.
    pub cocking_return: f64,
    /// Wrist drop from the cocked position to release, metres.
    pub sweep: f64,
    /// How far the wrist sits behind its release depth away from release,
    /// metres.
    pub extension: f64,
    /// Time scale of the forward reach around release, seconds. Wide
    /// enough to survive the low-pass filter of the side-view detector.
    pub reach_width: f64,
    pub clip_frames: usize,
    /// Release frame is drawn uniformly from this inclusive range.
    pub release_frame_range: [usize; 2],
    /// Gaussian keypoint jitter, pixels.
    pub jitter_px: f64,
    /// Probability that a keypoint is reported missing.
    pub dropout: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            accel_duration: 0.12,
            cocking_duration: 0.35,
            cocking_return: 0.4,
            sweep: 0.3,
            extension: 0.35,
            reach_width: 0.3,
            clip_frames: 90,
            release_frame_range: [40, 50],
            jitter_px: 2.0,
            dropout: 0.02,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let [lo, hi] = self.release_frame_range;
        let positive = self.accel_duration > 0.0 && self.cocking_duration > 0.0 && self.sweep > 0.0;
        if !positive || !(0.0..1.0).contains(&self.cocking_return) || !(self.extension >= 0.0) || !(self.reach_width > 0.0) {
            return Err(SynthError::Config("motion phases must be positive with cocking_return in [0, 1)".into()));
        }
        if !(self.jitter_px >= 0.0) || !(0.0..1.0).contains(&self.dropout) {
            return Err(SynthError::Config("jitter must be >= 0 and dropout in [0, 1)".into()));
        }
        // Release inside the trimmed search window, ball window and
        // reaction segment inside the clip.
        let n = self.clip_frames;
        if lo > hi || lo * 10 <= n || hi * 10 >= 9 * n || hi + 40 > n || lo < 10 {
            return Err(SynthError::Config(format!(
                "release frames {lo}..={hi} do not fit a {n}-frame clip"
            )));
        }
        Ok(())
    }

    /// Signed wrist progress along the throw in units of the sweep, odd in
    /// the time `tau` from release (seconds): -1 at the cocked position, 0
    /// at release, `cocking_return - 1` at gather.
    pub fn progress(&self, tau: f64) -> f64 {
        let s = tau.abs();
        let (ta, tc) = (self.accel_duration, self.cocking_duration);
        let magnitude = if s <= ta {
            (PI * s / (2.0 * ta)).sin()
        } else if s <= ta + tc {
            1.0 - self.cocking_return * (1.0 - (PI * (s - ta) / tc).cos()) / 2.0
        } else {
            1.0 - self.cocking_return
        };
        magnitude * tau.signum()
    }

    /// Time derivative of `progress`, even in `tau`. Its magnitude rises from
    /// rest, falls to zero at the cocked position and peaks at release.
    pub fn progress_rate(&self, tau: f64) -> f64 {
        let s = tau.abs();
        let (ta, tc) = (self.accel_duration, self.cocking_duration);
        if s <= ta {
            PI / (2.0 * ta) * (PI * s / (2.0 * ta)).cos()
        } else if s <= ta + tc {
            -self.cocking_return * PI / (2.0 * tc) * (PI * (s - ta) / tc).sin()
        } else {
            0.0
        }
    }
}

/// Wrist position at `tau` seconds from release.
///
/// Seen from the frontal camera the wrist moves on a vertical image line,
/// point-symmetric about the release pixel; its depth is even in `tau` and
/// smallest at release. Both side views then see a horizontal wrist offset
/// that is even in `tau` with its maximum at release.
pub fn wrist_position(release: [f64; 3], frontal: &CameraModel, motion: &MotionConfig, tau: f64) -> [f64; 3] {
    let r = frontal.project(release);
    let p = motion.progress(tau);
    let sweep_px = motion.sweep * frontal.fy() / r.depth;
    let reach = 1.0 - (-(tau / motion.reach_width).powi(2)).exp();
    frontal.back_project(r.u, r.v + sweep_px * p, r.depth + motion.extension * reach)
}

/// Standing template for the 26 keypoints, thrower at the origin facing
/// `+z`. The right wrist and elbow are replaced per frame.
fn template(release: [f64; 3]) -> [[f64; 3]; JOINT_COUNT] {
    let sx = release[0].clamp(0.12, 0.3);
    let shoulder_y = (release[1] - 0.4).clamp(1.2, 1.6);
    let hip_y = shoulder_y - 0.5;
    let knee_y = hip_y * 0.52;
    let mut t = [[0.0; 3]; JOINT_COUNT];
    let mut set = |name: &str, p: [f64; 3]| {
        let i = HALPE_26.iter().position(|n| *n == name).expect("known joint");
        t[i] = p;
    };
    set("nose", [0.0, shoulder_y + 0.25, 0.1]);
    set("left_eye", [-0.03, shoulder_y + 0.28, 0.08]);
    set("right_eye", [0.03, shoulder_y + 0.28, 0.08]);
    set("left_ear", [-0.07, shoulder_y + 0.26, 0.0]);
    set("right_ear", [0.07, shoulder_y + 0.26, 0.0]);
    set("left_shoulder", [-sx, shoulder_y, 0.0]);
    set("right_shoulder", [sx, shoulder_y, 0.0]);
    set("left_elbow", [-sx - 0.05, shoulder_y - 0.28, 0.05]);
    set("left_wrist", [-sx - 0.02, shoulder_y - 0.5, 0.15]);
    set("left_hip", [-0.12, hip_y, 0.0]);
    set("right_hip", [0.12, hip_y, 0.0]);
    set("left_knee", [-0.13, knee_y, 0.02]);
    set("right_knee", [0.13, knee_y, 0.02]);
    set("left_ankle", [-0.14, 0.08, 0.0]);
    set("right_ankle", [0.14, 0.08, 0.0]);
    set("head", [0.0, shoulder_y + 0.4, 0.0]);
    set("neck", [0.0, shoulder_y + 0.05, 0.0]);
    set("hip", [0.0, hip_y, 0.0]);
    set("left_big_toe", [-0.15, 0.02, 0.18]);
    set("right_big_toe", [0.15, 0.02, 0.18]);
    set("left_small_toe", [-0.19, 0.02, 0.14]);
    set("right_small_toe", [0.19, 0.02, 0.14]);
    set("left_heel", [-0.14, 0.02, -0.05]);
    set("right_heel", [0.14, 0.02, -0.05]);
    t
}

/// Noise-free 3D keypoints for every frame of the clip.
pub fn skeleton_frames(
    release: [f64; 3],
    release_frame: usize,
    world: &WorldConfig,
    optics: &CameraOptics,
    motion: &MotionConfig,
) -> Vec<[[f64; 3]; JOINT_COUNT]> {
    let frontal = optics.camera(View::Deg0, world);
    let base = template(release);
    let wrist = HALPE_26.iter().position(|n| *n == "right_wrist").expect("joint");
    let elbow = HALPE_26.iter().position(|n| *n == "right_elbow").expect("joint");
    let shoulder = HALPE_26.iter().position(|n| *n == "right_shoulder").expect("joint");
    (0..motion.clip_frames)
        .map(|i| {
            let tau = (i as f64 - release_frame as f64) / optics.fps;
            let w = wrist_position(release, &frontal, motion, tau);
            let s = base[shoulder];
            let mut frame = base;
            frame[wrist] = w;
            frame[elbow] = [
                (s[0] + w[0]) / 2.0 + 0.06,
                (s[1] + w[1]) / 2.0 - 0.05,
                (s[2] + w[2]) / 2.0 - 0.05,
            ];
            frame
        })
        .collect()
}

/// Projects the skeleton into `camera` and applies jitter and dropouts.
/// Keypoints outside the image keep their extrapolated coordinates.
pub fn observe_pose<R: Rng + ?Sized>(
    skeleton: &[[[f64; 3]; JOINT_COUNT]],
    camera: &CameraModel,
    motion: &MotionConfig,
    rng: &mut R,
) -> PoseSequence {
    let jitter = (motion.jitter_px > 0.0).then(|| Normal::new(0.0, motion.jitter_px).expect("finite jitter"));
    let frames = skeleton
        .iter()
        .map(|joints| {
            joints
                .iter()
                .map(|p| {
                    let q = camera.project(*p);
                    let (mut u, mut v) = (q.u, q.v);
                    if let Some(n) = &jitter {
                        u += n.sample(rng);
                        v += n.sample(rng);
                    }
                    if motion.dropout > 0.0 && rng.random::<f64>() < motion.dropout {
                        Keypoint::missing()
                    } else {
                        Keypoint::new(u, v, 0.9)
                    }
                })
                .collect()
        })
        .collect();
    PoseSequence::new(camera.fps, HALPE_26.iter().map(|s| s.to_string()).collect(), frames)
        .expect("synthetic pose is well formed")
}

/// Noise-free wrist pixel tracks for each view.
pub fn wrist_tracks(
    release: [f64; 3],
    release_frame: usize,
    world: &WorldConfig,
    optics: &CameraOptics,
    motion: &MotionConfig,
    views: &[View],
) -> BTreeMap<View, Vec<[f64; 2]>> {
    let frontal = optics.camera(View::Deg0, world);
    views
        .iter()
        .map(|&view| {
            let cam = optics.camera(view, world);
            let track = (0..motion.clip_frames)
                .map(|i| {
                    let tau = (i as f64 - release_frame as f64) / optics.fps;
                    let q = cam.project(wrist_position(release, &frontal, motion, tau));
                    [q.u, q.v]
                })
                .collect();
            (view, track)
        })
        .collect()
}
