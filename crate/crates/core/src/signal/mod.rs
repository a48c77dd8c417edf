//! Temporal preprocessing of joint tracks: gap filling, zero-phase low-pass
//! filtering and smoothed differentiation.

mod butterworth;
mod savgol;

use thiserror::Error;

pub use butterworth::{butterworth_lowpass, Biquad, ButterworthLowpass};
pub use savgol::{savgol_derivative, SavgolDifferentiator};

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("series has no valid samples")]
    AllMissing,
    #[error("series of length {len} is too short (need at least {needed})")]
    TooShort { len: usize, needed: usize },
    #[error("cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist {nyquist_hz} Hz")]
    InvalidCutoff { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("invalid filter order {0}")]
    InvalidOrder(usize),
    #[error("bad Savitzky-Golay window {window} for polynomial order {polyorder}")]
    BadWindow { window: usize, polyorder: usize },
}

/// A uniformly sampled scalar signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub values: Vec<f64>,
    /// Seconds per sample.
    pub dt: f64,
}

impl Series {
    pub fn new(values: Vec<f64>, dt: f64) -> Self {
        Series { values, dt }
    }

    pub fn from_fps(values: Vec<f64>, fps: f64) -> Self {
        Series {
            values,
            dt: 1.0 / fps,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn map(&self, values: Vec<f64>) -> Series {
        Series {
            values,
            dt: self.dt,
        }
    }
}

/// Fills gaps in a sampled signal. Interior gaps are linearly interpolated
/// between the nearest valid neighbours; leading and trailing gaps hold the
/// nearest valid value.
pub fn interpolate_missing(samples: &[Option<f64>], dt: f64) -> Result<Series, SignalError> {
    let valid: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|x| x.is_finite()).map(|_| i))
        .collect();
    let (&first, &last) = match (valid.first(), valid.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(SignalError::AllMissing),
    };
    let value = |i: usize| samples[i].unwrap();
    let mut out = vec![0.0; samples.len()];
    out[..=first].fill(value(first));
    out[last..].fill(value(last));
    for pair in valid.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (value(a), value(b));
        out[a] = va;
        let span = (b - a) as f64;
        for (k, slot) in out[a + 1..b].iter_mut().enumerate() {
            let t = (k + 1) as f64 / span;
            *slot = va + (vb - va) * t;
        }
    }
    out[last] = value(last);
    Ok(Series::new(out, dt))
}
