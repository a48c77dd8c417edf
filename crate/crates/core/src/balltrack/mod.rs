//! Ball localisation by colour segmentation and assembly of the outcome
//! feature window around the throw frame.

mod frames;
mod segment;

use thiserror::Error;

use crate::data::{OutcomeFeatures, OUTCOME_WINDOW};

pub use frames::{load_frame_window, save_frame_window, FrameSource, FrameWindow};
pub use segment::{
    close3x3, closed_components, components, dilate3x3, erode3x3, rgb_to_hsv, segment_ball, segment_ball_with,
    threshold, ColorRange, Component, Mask, RasterFrame, MIN_COMPONENT_AREA,
};

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("frames {first}..={last} are required but not available")]
    InsufficientFrames { first: usize, last: usize },
    #[error("throw frame {throw_frame} leaves no room for the window (need at least {needed})")]
    WindowOutOfRange { throw_frame: usize, needed: usize },
    #[error("invalid colour range: {0}")]
    InvalidRange(String),
    #[error("bad frame: {0}")]
    BadFrame(String),
}

/// Frames before `N_tf - LEAD` take the wrist position.
pub const LEAD: usize = 10;
/// Last segmented frame is `N_tf + TAIL`.
pub const TAIL: usize = 5;

/// Ball pixel positions for frames `0 ..= N_tf + 5`.
#[derive(Clone, Debug, PartialEq)]
pub struct BallTrack {
    pub positions: Vec<Option<[f64; 2]>>,
    pub throw_frame: usize,
    pub width: usize,
    pub height: usize,
    /// Frames in the segmentation window where the ball was found.
    pub detected: Vec<bool>,
    /// Set when no window frame contained the ball.
    pub no_detection: bool,
}

impl BallTrack {
    /// Position at `frame`, `None` beyond the tracked range.
    pub fn at(&self, frame: usize) -> Option<[f64; 2]> {
        self.positions.get(frame).copied().flatten()
    }
}

/// Builds the track: wrist positions up to `N_tf - 10`, segmented positions
/// for `N_tf - 10 ..= N_tf + 5`.
///
/// Missing detections are interpolated linearly between neighbours, with the
/// wrist position at `N_tf - 10` anchoring a leading gap and the last
/// detection held through a trailing gap.
pub fn extract_ball_track<S: FrameSource + ?Sized>(
    frames: &S,
    wrist: &[[f64; 2]],
    throw_frame: usize,
    range: &ColorRange,
) -> Result<BallTrack, TrackError> {
    range.validate()?;
    if throw_frame < LEAD {
        return Err(TrackError::WindowOutOfRange {
            throw_frame,
            needed: LEAD,
        });
    }
    let start = throw_frame - LEAD;
    let end = throw_frame + TAIL;
    if wrist.len() <= start {
        return Err(TrackError::InsufficientFrames { first: 0, last: start });
    }
    let mut found: Vec<Option<[f64; 2]>> = Vec::with_capacity(end - start + 1);
    for i in start..=end {
        let frame = frames
            .frame(i)
            .ok_or(TrackError::InsufficientFrames { first: start, last: end })?;
        found.push(segment_ball(&frame, range));
    }
    let detected: Vec<bool> = found.iter().map(Option::is_some).collect();
    let no_detection = !detected.iter().any(|d| *d);
    if found[0].is_none() {
        found[0] = Some(wrist[start]);
    }
    let filled = fill_gaps(&found);
    let (width, height) = frames.dimensions();
    let mut positions: Vec<Option<[f64; 2]>> = wrist[..start].iter().copied().map(Some).collect();
    positions.extend(filled.into_iter().map(Some));
    Ok(BallTrack {
        positions,
        throw_frame,
        width,
        height,
        detected,
        no_detection,
    })
}

/// Linear interpolation between known points; trailing gaps hold the last
/// known value. The first entry must be known.
fn fill_gaps(points: &[Option<[f64; 2]>]) -> Vec<[f64; 2]> {
    let known: Vec<usize> = (0..points.len()).filter(|&i| points[i].is_some()).collect();
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        if let Some(p) = points[i] {
            out.push(p);
            continue;
        }
        let prev = *known.iter().rev().find(|&&k| k < i).expect("first point is known");
        let a = points[prev].unwrap();
        match known.iter().find(|&&k| k > i) {
            Some(&next) => {
                let b = points[next].unwrap();
                let t = (i - prev) as f64 / (next - prev) as f64;
                out.push([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]);
            }
            None => out.push(a),
        }
    }
    out
}

/// Rows for frames `N_tf - 5 ..= N_tf + 5`, divided by the frame size and
/// clamped to `[0, 1]`.
pub fn outcome_feature_vector(track: &BallTrack) -> Result<OutcomeFeatures, TrackError> {
    let half = OUTCOME_WINDOW / 2;
    let out_of_range = || TrackError::WindowOutOfRange {
        throw_frame: track.throw_frame,
        needed: half,
    };
    let first = track.throw_frame.checked_sub(half).ok_or_else(out_of_range)?;
    let rows = (first..=track.throw_frame + half)
        .map(|f| {
            track.at(f).map(|[x, y]| {
                [
                    (x / track.width as f64).clamp(0.0, 1.0),
                    (y / track.height as f64).clamp(0.0, 1.0),
                ]
            })
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(out_of_range)?;
    OutcomeFeatures::new(rows).map_err(|_| out_of_range())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::borrow::Cow;

    const BALL: [u8; 3] = [240, 110, 20];
    const BACKGROUND: [u8; 3] = [60, 70, 90];

    /// Frames with the ball at scripted positions.
    struct Scripted {
        balls: Vec<Option<[f64; 2]>>,
    }

    impl FrameSource for Scripted {
        fn dimensions(&self) -> (usize, usize) {
            (120, 80)
        }

        fn frame(&self, index: usize) -> Option<Cow<'_, RasterFrame>> {
            let ball = self.balls.get(index)?;
            let mut f = RasterFrame::filled(120, 80, BACKGROUND);
            if let Some([x, y]) = ball {
                f.fill_disk(*x, *y, 3.0, BALL);
            }
            Some(Cow::Owned(f))
        }
    }

    fn wrist(n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|i| [10.0 + i as f64, 60.0]).collect()
    }

    #[test]
    fn wrist_region_and_boundary() {
        let nt = 20;
        let balls = (0..30).map(|i| Some([20.0 + 3.0 * i as f64, 40.0])).collect();
        let track = extract_ball_track(&Scripted { balls }, &wrist(30), nt, &ColorRange::default()).unwrap();
        assert_eq!(track.positions.len(), nt + TAIL + 1);
        assert_eq!(track.at(nt - LEAD - 1), Some(wrist(30)[nt - LEAD - 1]));
        for i in nt - LEAD..=nt + TAIL {
            assert_eq!(track.at(i), Some([20.0 + 3.0 * i as f64, 40.0]));
        }
        assert_eq!(track.at(nt + TAIL + 1), None);
        assert!(!track.no_detection);
    }

    #[test]
    fn gaps_interpolate_and_trail() {
        let nt = 15;
        let mut balls: Vec<Option<[f64; 2]>> = (0..25).map(|i| Some([30.0 + 2.0 * i as f64, 20.0])).collect();
        balls[nt] = None;
        balls[nt + 4] = None;
        balls[nt + 5] = None;
        let track = extract_ball_track(&Scripted { balls }, &wrist(25), nt, &ColorRange::default()).unwrap();
        assert_eq!(track.at(nt), Some([30.0 + 2.0 * nt as f64, 20.0]));
        assert_eq!(track.at(nt + 5), track.at(nt + 3));
        assert!(!track.detected[LEAD]);
    }

    #[test]
    fn leading_gap_starts_at_wrist() {
        let nt = 12;
        let mut balls: Vec<Option<[f64; 2]>> = vec![None; 20];
        balls[nt - LEAD + 2] = Some([50.0, 30.0]);
        let w = wrist(20);
        let track = extract_ball_track(&Scripted { balls }, &w, nt, &ColorRange::default()).unwrap();
        let anchor = w[nt - LEAD];
        assert_eq!(track.at(nt - LEAD), Some(anchor));
        let mid = track.at(nt - LEAD + 1).unwrap();
        assert!((mid[0] - (anchor[0] + 50.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_detection_holds_the_wrist() {
        let nt = 20;
        let w = wrist(30);
        let track = extract_ball_track(&Scripted { balls: vec![None; 30] }, &w, nt, &ColorRange::default()).unwrap();
        assert!(track.no_detection);
        for i in nt - LEAD..=nt + TAIL {
            assert_eq!(track.at(i), Some(w[nt - LEAD]));
        }
    }

    #[test]
    fn missing_frames_are_reported() {
        let balls = vec![Some([10.0, 10.0]); 22];
        let err = extract_ball_track(&Scripted { balls }, &wrist(30), 20, &ColorRange::default()).unwrap_err();
        assert_eq!(err, TrackError::InsufficientFrames { first: 10, last: 25 });
    }

    fn flat_track(nt: usize, pos: [f64; 2]) -> BallTrack {
        BallTrack {
            positions: vec![Some(pos); nt + TAIL + 1],
            throw_frame: nt,
            width: 848,
            height: 480,
            detected: vec![true; LEAD + TAIL + 1],
            no_detection: false,
        }
    }

    #[test]
    fn feature_window_is_eleven_frames() {
        let mut track = flat_track(20, [0.0, 0.0]);
        for (i, p) in track.positions.iter_mut().enumerate() {
            *p = Some([i as f64 * 10.0, 0.0]);
        }
        let f = outcome_feature_vector(&track).unwrap();
        let frames: Vec<f64> = f.rows().iter().map(|r| (r[0] * 848.0 / 10.0).round()).collect();
        assert_eq!(frames, (15..=25).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn image_center_maps_to_half() {
        let f = outcome_feature_vector(&flat_track(30, [424.0, 240.0])).unwrap();
        assert!(f.rows().iter().all(|r| *r == [0.5, 0.5]));
    }

    #[test]
    fn out_of_frame_positions_are_clamped() {
        let f = outcome_feature_vector(&flat_track(30, [-20.0, 900.0])).unwrap();
        assert!(f.rows().iter().all(|r| *r == [0.0, 1.0]));
    }

    #[test]
    fn short_track_is_out_of_range() {
        let mut track = flat_track(20, [1.0, 1.0]);
        track.positions.truncate(24);
        assert!(matches!(
            outcome_feature_vector(&track),
            Err(TrackError::WindowOutOfRange { .. })
        ));
    }
}
