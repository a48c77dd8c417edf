use nalgebra::DMatrix;

use super::{Series, SignalError};

/// Savitzky-Golay first-derivative filter.
///
/// Interior samples use the centred convolution kernel. The first and last
/// `window / 2` samples take the derivative of the polynomial fitted to the
/// first (resp. last) full window, evaluated at their own position.
#[derive(Clone, Debug)]
pub struct SavgolDifferentiator {
    window: usize,
    polyorder: usize,
    /// `kernels[j]` gives the derivative at offset `j - half` from the window
    /// centre; `kernels[half]` is the interior kernel.
    kernels: Vec<Vec<f64>>,
}

impl SavgolDifferentiator {
    pub fn new(window: usize, polyorder: usize) -> Result<Self, SignalError> {
        if window % 2 == 0 || window <= polyorder || polyorder == 0 {
            return Err(SignalError::BadWindow { window, polyorder });
        }
        let half = (window / 2) as i64;
        let cols = polyorder + 1;
        let vander = DMatrix::from_fn(window, cols, |r, c| ((r as i64 - half) as f64).powi(c as i32));
        let gram = vander.transpose() * &vander;
        let inverse = gram
            .try_inverse()
            .ok_or(SignalError::BadWindow { window, polyorder })?;
        // Rows map window samples to polynomial coefficients.
        let projector = inverse * vander.transpose();
        let kernels = (-half..=half)
            .map(|t| {
                let t = t as f64;
                (0..window)
                    .map(|s| {
                        (1..cols)
                            .map(|k| k as f64 * t.powi(k as i32 - 1) * projector[(k, s)])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(SavgolDifferentiator {
            window,
            polyorder,
            kernels,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn polyorder(&self) -> usize {
        self.polyorder
    }

    /// Derivative in value units per sample.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, SignalError> {
        let n = x.len();
        if n < self.window {
            return Err(SignalError::TooShort {
                len: n,
                needed: self.window,
            });
        }
        let half = self.window / 2;
        let dot = |kernel: &[f64], start: usize| -> f64 {
            kernel.iter().zip(&x[start..start + self.window]).map(|(k, v)| k * v).sum()
        };
        let mut out = vec![0.0; n];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = if i < half {
                dot(&self.kernels[i], 0)
            } else if i + half >= n {
                dot(&self.kernels[i + self.window - n], n - self.window)
            } else {
                dot(&self.kernels[half], i - half)
            };
        }
        Ok(out)
    }
}

/// Smoothed first derivative (per sample) of a series.
pub fn savgol_derivative(series: &Series, window: usize, polyorder: usize) -> Result<Series, SignalError> {
    let filter = SavgolDifferentiator::new(window, polyorder)?;
    Ok(series.map(filter.apply(&series.values)?))
}
