use serde::{Deserialize, Serialize};

use super::TrackError;

/// Default smallest component, in pixels, accepted as the ball.
pub const MIN_COMPONENT_AREA: usize = 4;

/// An 8-bit RGB image stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterFrame {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl RasterFrame {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self, TrackError> {
        if width == 0 || height == 0 || rgb.len() != width * height * 3 {
            return Err(TrackError::BadFrame(format!(
                "{width}x{height} frame needs {} bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        Ok(RasterFrame { width, height, rgb })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        RasterFrame {
            width,
            height,
            rgb: color.repeat(width * height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bytes(&self) -> &[u8] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&color);
    }

    /// Paints every pixel whose centre lies within `radius` of `(cx, cy)`.
    pub fn fill_disk(&mut self, cx: f64, cy: f64, radius: f64, color: [u8; 3]) {
        if !(cx.is_finite() && cy.is_finite()) {
            return;
        }
        let x0 = (cx - radius).floor().max(0.0) as usize;
        let y0 = (cy - radius).floor().max(0.0) as usize;
        let x1 = (cx + radius).ceil().min(self.width as f64 - 1.0);
        let y1 = (cy + radius).ceil().min(self.height as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            return;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= radius * radius {
                    self.set_pixel(x, y, color);
                }
            }
        }
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

/// HSV box. The hue interval wraps through 360 when `h_min > h_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorRange {
    pub h_min: f64,
    pub h_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for ColorRange {
    /// Saturated orange.
    fn default() -> Self {
        ColorRange {
            h_min: 10.0,
            h_max: 40.0,
            s_min: 0.6,
            s_max: 1.0,
            v_min: 0.25,
            v_max: 1.0,
        }
    }
}

impl ColorRange {
    pub fn validate(&self) -> Result<(), TrackError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let hue = |v: f64| (0.0..=360.0).contains(&v);
        if !(hue(self.h_min) && hue(self.h_max)) {
            return Err(TrackError::InvalidRange("hue bounds must lie in [0, 360]".into()));
        }
        if !(unit(self.s_min) && unit(self.s_max) && unit(self.v_min) && unit(self.v_max)) {
            return Err(TrackError::InvalidRange("saturation and value bounds must lie in [0, 1]".into()));
        }
        if self.s_min > self.s_max || self.v_min > self.v_max {
            return Err(TrackError::InvalidRange("minimum exceeds maximum".into()));
        }
        Ok(())
    }

    pub fn contains(&self, (h, s, v): (f64, f64, f64)) -> bool {
        let hue_ok = if self.h_min <= self.h_max {
            h >= self.h_min && h <= self.h_max
        } else {
            h >= self.h_min || h <= self.h_max
        };
        hue_ok && s >= self.s_min && s <= self.s_max && v >= self.v_min && v <= self.v_max
    }

    fn matches_rgb(&self, px: [u8; 3]) -> bool {
        // Cheap rejection on value and saturation before the hue division.
        let max = px[0].max(px[1]).max(px[2]);
        let min = px[0].min(px[1]).min(px[2]);
        let v = max as f64 / 255.0;
        if v < self.v_min || v > self.v_max {
            return false;
        }
        let s = if max == 0 { 0.0 } else { (max - min) as f64 / max as f64 };
        if s < self.s_min || s > self.s_max {
            return false;
        }
        self.contains(rgb_to_hsv(px))
    }
}

/// A binary image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_rows(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let bits = rows.iter().flat_map(|r| r.bytes().map(|c| c == b'#')).collect();
        Mask { width, height, bits }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Bounding box `(x0, y0, x1, y1)` of the set pixels, inclusive.
    fn extent(&self) -> Option<(usize, usize, usize, usize)> {
        let mut ext: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            let (Some(first), Some(last)) = (row.iter().position(|b| *b), row.iter().rposition(|b| *b)) else {
                continue;
            };
            ext = Some(match ext {
                None => (first, y, last, y),
                Some((x0, y0, x1, _)) => (x0.min(first), y0, x1.max(last), y),
            });
        }
        ext
    }

    fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Mask {
        let mut out = Mask::new(w, h);
        for y in 0..h {
            let src = &self.bits[(y0 + y) * self.width + x0..][..w];
            out.bits[y * w..(y + 1) * w].copy_from_slice(src);
        }
        out
    }
}

pub fn threshold(frame: &RasterFrame, range: &ColorRange) -> Mask {
    Mask {
        width: frame.width,
        height: frame.height,
        bits: {
            // Runs of identical pixels are the norm; reuse the last answer.
            let mut last: Option<([u8; 3], bool)> = None;
            frame
                .rgb
                .chunks_exact(3)
                .map(|p| {
                    let px = [p[0], p[1], p[2]];
                    match last {
                        Some((q, v)) if q == px => v,
                        _ => {
                            let v = range.matches_rgb(px);
                            last = Some((px, v));
                            v
                        }
                    }
                })
                .collect()
        },
    }
}

/// 3-pixel running OR (dilate) or AND (erode) along one axis. Pixels beyond
/// the border count as `outside`.
fn pass(mask: &Mask, horizontal: bool, dilate: bool) -> Mask {
    let outside = !dilate;
    let (w, h) = (mask.width, mask.height);
    let mut out = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (pos, len) = if horizontal { (x, w) } else { (y, h) };
            let at = |p: usize| if horizontal { mask.get(p, y) } else { mask.get(x, p) };
            let prev = if pos == 0 { outside } else { at(pos - 1) };
            let next = if pos + 1 == len { outside } else { at(pos + 1) };
            let cur = at(pos);
            let v = if dilate { prev || cur || next } else { prev && cur && next };
            out.set(x, y, v);
        }
    }
    out
}

pub fn dilate3x3(mask: &Mask) -> Mask {
    pass(&pass(mask, true, true), false, true)
}

/// Erosion that treats pixels beyond the border as set, so objects touching
/// the border are not eaten away.
pub fn erode3x3(mask: &Mask) -> Mask {
    pass(&pass(mask, true, false), false, false)
}

/// Morphological closing with a 3x3 square.
pub fn close3x3(mask: &Mask) -> Mask {
    erode3x3(&dilate3x3(mask))
}

/// A connected region and its inclusive bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Component {
    pub fn center(&self) -> [f64; 2] {
        [(self.x0 + self.x1) as f64 / 2.0, (self.y0 + self.y1) as f64 / 2.0]
    }
}

/// 8-connected components in scan order of their first pixel.
pub fn components(mask: &Mask) -> Vec<Component> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (sx, sy) = (start % w, start / w);
        let mut c = Component {
            area: 0,
            x0: sx,
            y0: sy,
            x1: sx,
            y1: sy,
        };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            c.area += 1;
            c.x0 = c.x0.min(x);
            c.x1 = c.x1.max(x);
            c.y0 = c.y0.min(y);
            c.y1 = c.y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask.bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(c);
    }
    out
}

/// Closed components of a mask. The morphology runs on the bounding box of
/// the set pixels plus a two-pixel margin, which gives the same result as the
/// full frame because closing cannot create pixels further than one pixel
/// from the input.
pub fn closed_components(mask: &Mask) -> Vec<Component> {
    let Some((x0, y0, x1, y1)) = mask.extent() else {
        return Vec::new();
    };
    let cx0 = x0.saturating_sub(2);
    let cy0 = y0.saturating_sub(2);
    let cx1 = (x1 + 2).min(mask.width - 1);
    let cy1 = (y1 + 2).min(mask.height - 1);
    let crop = mask.crop(cx0, cy0, cx1 - cx0 + 1, cy1 - cy0 + 1);
    // The crop border is not the image border, so erosion there must see
    // outside pixels as unset unless the crop touches the real edge.
    let closed = close_within(&crop, (cx0 == 0, cy0 == 0, cx1 + 1 == mask.width, cy1 + 1 == mask.height));
    components(&closed)
        .into_iter()
        .map(|c| Component {
            x0: c.x0 + cx0,
            x1: c.x1 + cx0,
            y0: c.y0 + cy0,
            y1: c.y1 + cy0,
            ..c
        })
        .collect()
}

/// Closing on a crop; `edges` flags (left, top, right, bottom) sides that are
/// real image borders.
fn close_within(mask: &Mask, edges: (bool, bool, bool, bool)) -> Mask {
    let dilated = dilate3x3(mask);
    let (w, h) = (mask.width, mask.height);
    let (left, top, right, bottom) = edges;
    let mut out = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut all = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    let v = if nx < 0 {
                        left
                    } else if ny < 0 {
                        top
                    } else if nx >= w as i64 {
                        right
                    } else if ny >= h as i64 {
                        bottom
                    } else {
                        dilated.get(nx as usize, ny as usize)
                    };
                    if !v {
                        all = false;
                        break 'nb;
                    }
                }
            }
            out.set(x, y, all);
        }
    }
    out
}

/// Centre of the bounding box of the largest closed component with at least
/// `min_area` pixels. Equal areas resolve to the first in scan order.
pub fn segment_ball_with(frame: &RasterFrame, range: &ColorRange, min_area: usize) -> Option<[f64; 2]> {
    let mut best: Option<Component> = None;
    for c in closed_components(&threshold(frame, range)) {
        if c.area >= min_area && best.is_none_or(|b| c.area > b.area) {
            best = Some(c);
        }
    }
    best.map(|c| c.center())
}

pub fn segment_ball(frame: &RasterFrame, range: &ColorRange) -> Option<[f64; 2]> {
    segment_ball_with(frame, range, MIN_COMPONENT_AREA)
}
