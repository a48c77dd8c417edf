use std::borrow::Cow;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::CameraModel;
use super::throw::Trajectory;
use crate::balltrack::{FrameSource, RasterFrame};
use crate::data::DataError;

/// A filled circle in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
    pub color: [u8; 3],
}

/// Compact description of one camera's clip as far as the ball tracker is
/// concerned: a flat background, a few static shapes and the ball. Frames
/// are rendered on demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallScene {
    pub width: usize,
    pub height: usize,
    pub background: [u8; 3],
    pub ball_color: [u8; 3],
    pub statics: Vec<Disk>,
    /// Ball centre and radius per frame, `None` when out of view.
    pub balls: Vec<Option<[f64; 3]>>,
}

impl BallScene {
    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn render(&self, index: usize) -> Option<RasterFrame> {
        let ball = self.balls.get(index)?;
        let mut frame = RasterFrame::filled(self.width, self.height, self.background);
        for d in &self.statics {
            frame.fill_disk(d.center[0], d.center[1], d.radius, d.color);
        }
        if let Some([x, y, r]) = ball {
            frame.fill_disk(*x, *y, *r, self.ball_color);
        }
        Some(frame)
    }

    /// Consecutive frames after `release_frame` in which the ball is in view.
    pub fn visible_after(&self, release_frame: usize) -> usize {
        self.balls
            .iter()
            .skip(release_frame + 1)
            .take_while(|b| b.is_some())
            .count()
    }
}

impl FrameSource for BallScene {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn frame(&self, index: usize) -> Option<Cow<'_, RasterFrame>> {
        self.render(index).map(Cow::Owned)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BallStyle {
    pub radius: f64,
    pub color: [u8; 3],
    pub background: [u8; 3],
}

impl Default for BallStyle {
    fn default() -> Self {
        BallStyle {
            radius: 0.035,
            color: [240, 110, 20],
            background: [60, 70, 90],
        }
    }
}

/// Ball in hand (at `wrist`) up to release, in flight afterwards until it
/// reaches the target plane.
#[allow(clippy::too_many_arguments)]
pub fn build_scene(
    camera: &CameraModel,
    trajectory: &Trajectory,
    wrist: &[[f64; 3]],
    release_frame: usize,
    style: &BallStyle,
    statics: Vec<Disk>,
) -> BallScene {
    let balls = wrist
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let p = if i <= release_frame {
                *w
            } else {
                let t = (i - release_frame) as f64 / camera.fps;
                if t > trajectory.flight_time {
                    return None;
                }
                trajectory.position(t)
            };
            let q = camera.project(p);
            q.visible.then(|| [q.u, q.v, camera.apparent_radius(style.radius, q.depth)])
        })
        .collect();
    BallScene {
        width: camera.width,
        height: camera.height,
        background: style.background,
        ball_color: style.color,
        statics,
        balls,
    }
}

pub fn load_ball_scene(path: impl AsRef<Path>) -> Result<BallScene, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::parse(path.display(), e))
}

pub fn save_ball_scene(scene: &BallScene, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let text = serde_json::to_string(scene).map_err(|e| DataError::parse(path.display(), e))?;
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}
