use std::borrow::Cow;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RasterFrame, TrackError};
use crate::data::DataError;

/// Random access to the frames of one clip.
pub trait FrameSource {
    /// `(width, height)` in pixels.
    fn dimensions(&self) -> (usize, usize);
    /// `None` if the clip does not contain `index`.
    fn frame(&self, index: usize) -> Option<Cow<'_, RasterFrame>>;
}

/// A contiguous run of frames starting at `first_frame`.
///
/// On disk each frame is a hex string of packed RGB bytes, row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWindow", into = "RawWindow")]
pub struct FrameWindow {
    pub first_frame: usize,
    width: usize,
    height: usize,
    frames: Vec<RasterFrame>,
}

#[derive(Serialize, Deserialize)]
struct RawWindow {
    first_frame: usize,
    width: usize,
    height: usize,
    frames: Vec<String>,
}

impl TryFrom<RawWindow> for FrameWindow {
    type Error = String;

    fn try_from(raw: RawWindow) -> Result<Self, String> {
        let frames = raw
            .frames
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let bytes = hex::decode(h).map_err(|e| format!("frame {i}: {e}"))?;
                RasterFrame::new(raw.width, raw.height, bytes).map_err(|e| format!("frame {i}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FrameWindow {
            first_frame: raw.first_frame,
            width: raw.width,
            height: raw.height,
            frames,
        })
    }
}

impl From<FrameWindow> for RawWindow {
    fn from(w: FrameWindow) -> Self {
        RawWindow {
            first_frame: w.first_frame,
            width: w.width,
            height: w.height,
            frames: w.frames.iter().map(|f| hex::encode(f.bytes())).collect(),
        }
    }
}

impl FrameWindow {
    pub fn new(first_frame: usize, frames: Vec<RasterFrame>) -> Result<Self, TrackError> {
        let first = frames
            .first()
            .ok_or_else(|| TrackError::BadFrame("window has no frames".into()))?;
        let (width, height) = (first.width(), first.height());
        if frames.iter().any(|f| f.width() != width || f.height() != height) {
            return Err(TrackError::BadFrame("frames differ in size".into()));
        }
        Ok(FrameWindow {
            first_frame,
            width,
            height,
            frames,
        })
    }

    /// Copies frames `first ..= last` out of another source.
    pub fn capture<S: FrameSource + ?Sized>(source: &S, first: usize, last: usize) -> Result<Self, TrackError> {
        let frames = (first..=last)
            .map(|i| {
                source
                    .frame(i)
                    .map(Cow::into_owned)
                    .ok_or(TrackError::InsufficientFrames { first, last })
            })
            .collect::<Result<Vec<_>, _>>()?;
        FrameWindow::new(first, frames)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl FrameSource for FrameWindow {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn frame(&self, index: usize) -> Option<Cow<'_, RasterFrame>> {
        index
            .checked_sub(self.first_frame)
            .and_then(|i| self.frames.get(i))
            .map(Cow::Borrowed)
    }
}

pub fn load_frame_window(path: impl AsRef<Path>) -> Result<FrameWindow, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::parse(path.display().to_string(), e))
}

pub fn save_frame_window(window: &FrameWindow, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let text = serde_json::to_string(window).map_err(|e| DataError::parse(path.display().to_string(), e))?;
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}
