//! Seeded synthetic throwing sessions with full ground truth: projectile
//! flights, camera projections, pose tracks, ball clips and reactions.

mod geometry;
mod motion;
mod reaction;
mod scene;
mod throw;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    save_manifest, save_pose_sequence, save_reaction_features, DataError, DatasetManifest, ManifestMetadata,
    PoseSequence, ReactionFeatures, ThrowRecord, View, Zone, HALPE_26,
};
use crate::eval::config_hash;
use crate::seeding::derived_rng;

pub use geometry::{CameraModel, CameraOptics, Projection, WorldConfig};
pub use motion::{observe_pose, skeleton_frames, wrist_position, wrist_tracks, MotionConfig};
pub use reaction::{synth_reaction, ReactionConfig};
pub use scene::{build_scene, load_ball_scene, save_ball_scene, BallScene, BallStyle, Disk};
pub use throw::{aim_angles, fly, launch_velocity, simulate_throw, SubjectProfile, ThrowResult, Trajectory};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error("a release speed of {speed:.3} m/s cannot reach the target")]
    Unreachable { speed: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Population from which subject profiles are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectDistribution {
    /// `(mean, std)` of the release height, metres.
    pub release_height: [f64; 2],
    pub release_lateral: [f64; 2],
    pub release_forward: [f64; 2],
    /// `(mean, std)` of each subject's mean release speed, m/s.
    pub speed_mean: [f64; 2],
    /// Throw-to-throw speed standard deviation, m/s.
    pub speed_std: f64,
    /// Typical aim error `(horizontal, vertical)`, radians.
    pub aim_noise: [f64; 2],
    /// Each subject's aim noise is scaled by a factor drawn uniformly from
    /// `1 +- aim_spread`.
    pub aim_spread: f64,
    /// Reaction intensity range, drawn uniformly per subject.
    pub reaction_intensity: [f64; 2],
}

impl Default for SubjectDistribution {
    fn default() -> Self {
        SubjectDistribution {
            release_height: [1.85, 0.05],
            release_lateral: [0.25, 0.02],
            release_forward: [0.4, 0.04],
            speed_mean: [9.0, 0.5],
            speed_std: 0.3,
            aim_noise: [0.025, 0.074],
            aim_spread: 0.15,
            reaction_intensity: [0.4, 0.9],
        }
    }
}

impl SubjectDistribution {
    pub fn validate(&self) -> Result<(), SynthError> {
        let stds = [
            self.release_height[1],
            self.release_lateral[1],
            self.release_forward[1],
            self.speed_mean[1],
            self.speed_std,
            self.aim_noise[0],
            self.aim_noise[1],
        ];
        if stds.iter().any(|s| !(*s >= 0.0)) || !(0.0..1.0).contains(&self.aim_spread) {
            return Err(SynthError::Config("subject spreads must be non-negative".into()));
        }
        let [lo, hi] = self.reaction_intensity;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(SynthError::Config("reaction intensity range must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Removes all throw-level randomness: exact aim and fixed speed.
    pub fn noiseless(mut self) -> Self {
        self.speed_std = 0.0;
        self.aim_noise = [0.0, 0.0];
        self
    }

    pub fn draw<R: Rng + ?Sized>(&self, id: String, rng: &mut R) -> SubjectProfile {
        let normal = |rng: &mut R, [m, s]: [f64; 2]| {
            if s > 0.0 {
                Normal::new(m, s).expect("finite").sample(rng)
            } else {
                m
            }
        };
        let height = normal(rng, self.release_height);
        let lateral = normal(rng, self.release_lateral);
        let forward = normal(rng, self.release_forward);
        let speed = normal(rng, self.speed_mean);
        let scale = if self.aim_spread > 0.0 {
            rng.random_range(1.0 - self.aim_spread..=1.0 + self.aim_spread)
        } else {
            1.0
        };
        let [lo, hi] = self.reaction_intensity;
        let intensity = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        SubjectProfile {
            id,
            release_point: [lateral, height, forward],
            release_speed_mean: speed,
            release_speed_std: self.speed_std,
            aim_noise: self.aim_noise.map(|s| s * scale),
            reaction_intensity: intensity,
        }
    }
}

/// Everything that shapes a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub subjects: usize,
    pub rounds_per_subject: usize,
    pub views: Vec<View>,
    pub world: WorldConfig,
    pub optics: CameraOptics,
    pub motion: MotionConfig,
    pub population: SubjectDistribution,
    pub reaction: ReactionConfig,
    pub ball: BallStyle,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 10,
            rounds_per_subject: 14,
            views: vec![View::Deg0],
            world: WorldConfig::default(),
            optics: CameraOptics::default(),
            motion: MotionConfig::default(),
            population: SubjectDistribution::default(),
            reaction: ReactionConfig::default(),
            ball: BallStyle::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.subjects == 0 || self.rounds_per_subject == 0 {
            return Err(SynthError::Config("subject and round counts must be positive".into()));
        }
        if self.views.is_empty() {
            return Err(SynthError::Config("at least one view is required".into()));
        }
        self.world.validate()?;
        self.optics.validate()?;
        self.motion.validate()?;
        self.population.validate()?;
        self.reaction.validate()
    }

    /// Zero measurement and throw-level noise.
    pub fn noiseless(mut self) -> Self {
        self.population = self.population.noiseless();
        self.motion.jitter_px = 0.0;
        self.motion.dropout = 0.0;
        self
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Ground truth of one throw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThrowTruth {
    pub throw_id: String,
    pub subject_id: String,
    pub round: usize,
    pub intent: Zone,
    pub outcome: Zone,
    pub congruence: bool,
    pub release_frame: usize,
    pub impact: [f64; 2],
    pub release_speed: f64,
    /// Frames the ball stays in view after release, per view.
    pub visible_after_release: BTreeMap<View, usize>,
}

/// One generated throw held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthThrow {
    pub truth: ThrowTruth,
    pub poses: BTreeMap<View, PoseSequence>,
    pub scenes: BTreeMap<View, BallScene>,
    pub reaction: ReactionFeatures,
}

impl SynthThrow {
    pub fn record(&self, view: View) -> ThrowRecord {
        let id = &self.truth.throw_id;
        ThrowRecord {
            throw_id: id.clone(),
            subject_id: self.truth.subject_id.clone(),
            view,
            intent: self.truth.intent,
            outcome: self.truth.outcome,
            congruence: self.truth.congruence,
            pose_ref: format!("throws/{id}/pose_{}.json", view.as_str()),
            ball_ref: format!("throws/{id}/ball_{}.json", view.as_str()),
            reaction_ref: format!("throws/{id}/reaction.csv"),
        }
    }
}

const STREAM_SUBJECT: u64 = 11;
const STREAM_THROW: u64 = 12;

fn joint(name: &str) -> usize {
    HALPE_26.iter().position(|n| *n == name).expect("known joint")
}

/// Simulates one throw and everything the cameras record of it.
pub fn generate_throw<R: Rng + ?Sized>(
    config: &SynthConfig,
    subject: &SubjectProfile,
    intent: Zone,
    throw_id: String,
    round: usize,
    rng: &mut R,
) -> Result<SynthThrow, SynthError> {
    let result = simulate_throw(&config.world, subject, intent, rng)?;
    let [lo, hi] = config.motion.release_frame_range;
    let release_frame = rng.random_range(lo..=hi);
    let skeleton = skeleton_frames(
        subject.release_point,
        release_frame,
        &config.world,
        &config.optics,
        &config.motion,
    );
    let wrist: Vec<[f64; 3]> = skeleton.iter().map(|f| f[joint("right_wrist")]).collect();
    let mut poses = BTreeMap::new();
    let mut scenes = BTreeMap::new();
    let mut visible = BTreeMap::new();
    for &view in &config.views {
        let camera = config.optics.camera(view, &config.world);
        poses.insert(view, observe_pose(&skeleton, &camera, &config.motion, rng));
        let head = camera.project(skeleton[0][joint("head")]);
        let neck = camera.project(skeleton[0][joint("neck")]);
        let hip = camera.project(skeleton[0][joint("hip")]);
        let mut statics = Vec::new();
        if head.depth > 0.0 {
            statics.push(Disk {
                center: [hip.u, (neck.v + hip.v) / 2.0],
                radius: camera.apparent_radius(0.2, hip.depth),
                color: [40, 60, 150],
            });
            statics.push(Disk {
                center: [head.u, head.v],
                radius: camera.apparent_radius(0.11, head.depth),
                color: [225, 180, 150],
            });
        }
        let scene = build_scene(&camera, &result.trajectory, &wrist, release_frame, &config.ball, statics);
        visible.insert(view, scene.visible_after(release_frame));
        scenes.insert(view, scene);
    }
    let reaction = synth_reaction(result.congruence, subject.reaction_intensity, &config.reaction, rng)?;
    let v = result.trajectory.velocity;
    Ok(SynthThrow {
        truth: ThrowTruth {
            throw_id,
            subject_id: subject.id.clone(),
            round,
            intent,
            outcome: result.outcome,
            congruence: result.congruence,
            release_frame,
            impact: result.impact,
            release_speed: (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt(),
            visible_after_release: visible,
        },
        poses,
        scenes,
        reaction,
    })
}

/// Draws the subjects of a dataset.
pub fn draw_subjects(config: &SynthConfig, seed: u64) -> Vec<SubjectProfile> {
    (0..config.subjects)
        .map(|s| {
            let mut rng = derived_rng(seed, STREAM_SUBJECT, s as u64);
            config.population.draw(format!("s{s:02}"), &mut rng)
        })
        .collect()
}

/// Rounds of nine throws per subject, each round aiming at every zone once
/// in a random order. Every throw has its own rng stream, so the result
/// does not depend on generation order.
pub fn generate_throws(config: &SynthConfig, seed: u64) -> Result<Vec<SynthThrow>, SynthError> {
    config.validate()?;
    let subjects = draw_subjects(config, seed);
    let mut throws = Vec::with_capacity(config.subjects * config.rounds_per_subject * 9);
    for (s, subject) in subjects.iter().enumerate() {
        subject.validate()?;
        for round in 0..config.rounds_per_subject {
            let base = ((s as u64) << 24) | ((round as u64) << 8);
            let mut order: Vec<Zone> = Zone::all().collect();
            order.shuffle(&mut derived_rng(seed, STREAM_THROW, base | 0xff));
            for (k, intent) in order.into_iter().enumerate() {
                let mut rng = derived_rng(seed, STREAM_THROW, base | k as u64);
                let id = format!("{}-r{round:02}-k{k}", subject.id);
                throws.push(generate_throw(config, subject, intent, id, round, &mut rng)?);
            }
        }
    }
    Ok(throws)
}

pub fn manifest_for(throws: &[SynthThrow], config: &SynthConfig, seed: u64) -> DatasetManifest {
    let records = throws
        .iter()
        .flat_map(|t| config.views.iter().map(|v| t.record(*v)))
        .collect();
    DatasetManifest {
        metadata: ManifestMetadata {
            generator: "throwintent synth".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: Some(seed),
            config_hash: Some(config.hash()),
            note: None,
        },
        records,
    }
}

/// Writes `manifest.json`, `config.json`, `truth.json` and one directory per
/// throw under `dir`.
pub fn write_dataset(dir: &Path, throws: &[SynthThrow], config: &SynthConfig, seed: u64) -> Result<DatasetManifest, SynthError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    for t in throws {
        let id = &t.truth.throw_id;
        let tdir = dir.join("throws").join(id);
        fs::create_dir_all(&tdir).map_err(|e| DataError::io(&tdir, e))?;
        for (view, pose) in &t.poses {
            save_pose_sequence(pose, tdir.join(format!("pose_{}.json", view.as_str())))?;
        }
        for (view, scene) in &t.scenes {
            save_ball_scene(scene, tdir.join(format!("ball_{}.json", view.as_str())))?;
        }
        save_reaction_features(&t.reaction, tdir.join("reaction.csv"))?;
    }
    let manifest = manifest_for(throws, config, seed);
    save_manifest(&manifest, dir.join("manifest.json"))?;
    let write_json = |name: &str, value: &serde_json::Value| -> Result<(), SynthError> {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| DataError::parse(name, e))?;
        fs::write(&path, text).map_err(|e| DataError::io(&path, e))?;
        Ok(())
    };
    let config_doc = serde_json::json!({
        "seed": seed,
        "config_hash": config.hash(),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    write_json("config.json", &config_doc)?;
    let truths: Vec<&ThrowTruth> = throws.iter().map(|t| &t.truth).collect();
    write_json("truth.json", &serde_json::to_value(truths).map_err(|e| DataError::parse("truth", e))?)?;
    Ok(manifest)
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<ThrowTruth>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::parse(path.display(), e))
}

/// Generates and writes a complete dataset.
pub fn generate_dataset(dir: &Path, config: &SynthConfig, seed: u64) -> Result<DatasetManifest, SynthError> {
    let throws = generate_throws(config, seed)?;
    write_dataset(dir, &throws, config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect_throw_frame, DetectConfig};

    fn small(subjects: usize, rounds: usize) -> SynthConfig {
        SynthConfig {
            subjects,
            rounds_per_subject: rounds,
            views: View::ALL.to_vec(),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn intents_are_uniform_per_subject() {
        let throws = generate_throws(&small(2, 3), 1).unwrap();
        assert_eq!(throws.len(), 54);
        for s in ["s00", "s01"] {
            let mut hist = [0; 9];
            for t in throws.iter().filter(|t| t.truth.subject_id == s) {
                hist[t.truth.intent.index().unwrap()] += 1;
            }
            assert_eq!(hist, [3; 9]);
        }
    }

    #[test]
    fn noiseless_detection_is_exact_in_every_view() {
        let config = small(3, 2).noiseless();
        let throws = generate_throws(&config, 2).unwrap();
        for t in &throws {
            assert!(t.truth.congruence);
            for (view, pose) in &t.poses {
                let d = detect_throw_frame(pose, *view, &DetectConfig::default()).unwrap();
                assert_eq!(d.throw_frame, t.truth.release_frame, "{} {view:?}", t.truth.throw_id);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = small(1, 1);
        let a = generate_throws(&config, 5).unwrap();
        let b = generate_throws(&config, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_throws(&config, 6).unwrap();
        assert_ne!(a[0].truth, c[0].truth);
    }

    #[test]
    fn written_dataset_validates() {
        let dir = tempfile::tempdir().unwrap();
        let config = small(1, 1);
        let manifest = generate_dataset(dir.path(), &config, 3).unwrap();
        assert_eq!(manifest.records.len(), 27);
        manifest.validate(Some(dir.path())).unwrap();
        let truth = load_truth(dir.path().join("truth.json")).unwrap();
        assert_eq!(truth.len(), 9);
    }

    #[test]
    fn default_calibration_matches_the_setup_statistics() {
        let config = SynthConfig {
            subjects: 16,
            rounds_per_subject: 14,
            ..SynthConfig::default()
        };
        let throws = generate_throws(&config, 2024).unwrap();
        let n = throws.len() as f64;
        assert_eq!(throws.len(), 2016);
        let mistakes = throws.iter().filter(|t| !t.truth.congruence).count() as f64 / n;
        let misses = throws.iter().filter(|t| t.truth.outcome.is_miss()).count() as f64 / n;
        assert!((mistakes - 0.47).abs() <= 0.05, "mistake fraction {mistakes}");
        assert!((misses - 192.0 / 1227.0).abs() <= 0.04, "miss fraction {misses}");
        let mut visible: Vec<usize> = throws.iter().map(|t| t.truth.visible_after_release[&View::Deg0]).collect();
        visible.sort_unstable();
        let median = visible[visible.len() / 2];
        assert!((4..=6).contains(&median), "median visible frames {median}");
    }

    #[test]
    fn default_noise_detection_is_within_two_frames() {
        let config = SynthConfig {
            subjects: 6,
            rounds_per_subject: 10,
            views: View::ALL.to_vec(),
            ..SynthConfig::default()
        };
        let throws = generate_throws(&config, 77).unwrap();
        assert_eq!(throws.len(), 540);
        for view in View::ALL {
            let close = throws
                .iter()
                .filter(|t| {
                    let d = detect_throw_frame(&t.poses[&view], view, &DetectConfig::default()).unwrap();
                    d.throw_frame.abs_diff(t.truth.release_frame) <= 2
                })
                .count();
            assert!(close as f64 >= 0.95 * throws.len() as f64, "{view:?}: {close}/540");
        }
    }
}
