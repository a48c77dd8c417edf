use std::f64::consts::PI;

use super::{Series, SignalError};

/// Second-order section in transposed direct form II, normalized so a0 = 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes a constant unit input produce a constant output.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    /// Complex response at normalized angular frequency `omega` (rad/sample).
    fn response(&self, omega: f64) -> (f64, f64) {
        // H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
        let (c1, s1) = (omega.cos(), -omega.sin());
        let (c2, s2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let d2 = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d2,
            (num.1 * den.0 - num.0 * den.1) / d2,
        )
    }
}

/// Digital Butterworth low-pass designed by the bilinear transform with
/// frequency prewarping, realized as cascaded second-order sections.
#[derive(Clone, Debug, PartialEq)]
pub struct ButterworthLowpass {
    sections: Vec<Biquad>,
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: f64,
}

impl ButterworthLowpass {
    pub const MAX_ORDER: usize = 8;

    pub fn new(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self, SignalError> {
        if order == 0 || order > Self::MAX_ORDER {
            return Err(SignalError::InvalidOrder(order));
        }
        let nyquist_hz = sample_rate_hz / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist_hz) {
            return Err(SignalError::InvalidCutoff {
                cutoff_hz,
                nyquist_hz,
            });
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            // Analog pole pair at angle pi (2i + N + 1) / 2N on the unit circle.
            let theta = PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
            let q = -1.0 / (2.0 * theta.cos());
            let norm = 1.0 / (1.0 + k / q + k2);
            let b0 = k2 * norm;
            sections.push(Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k2 - 1.0) * norm, (1.0 - k / q + k2) * norm],
            });
        }
        if order % 2 == 1 {
            let b0 = k / (1.0 + k);
            sections.push(Biquad {
                b: [b0, b0, 0.0],
                a: [(k - 1.0) / (k + 1.0), 0.0],
            });
        }
        Ok(ButterworthLowpass {
            sections,
            order,
            cutoff_hz,
            sample_rate_hz,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    /// Magnitude of a single causal pass at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let (mut re, mut im) = (1.0, 0.0);
        for s in &self.sections {
            let (sr, si) = s.response(omega);
            (re, im) = (re * sr - im * si, re * si + im * sr);
        }
        (re * re + im * im).sqrt()
    }

    /// Causal pass starting from steady state scaled by `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let mut level = x0;
        for s in &self.sections {
            let [z1, z2] = s.steady_state();
            let (mut z1, mut z2) = (z1 * level, z2 * level);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * y + z2;
                z2 = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
            level *= s.dc_gain();
        }
    }

    /// Minimum input length accepted by [`filtfilt`](Self::filtfilt).
    pub fn min_len(&self) -> usize {
        3 * self.order
    }

    /// Zero-phase forward-backward filtering with odd-extension padding.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>, SignalError> {
        let n = x.len();
        if n < self.min_len() {
            return Err(SignalError::TooShort {
                len: n,
                needed: self.min_len(),
            });
        }
        let pad = (3 * self.order).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.run(&mut ext);
        ext.reverse();
        self.run(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Zero-phase Butterworth low-pass of a series sampled at `1 / dt`.
pub fn butterworth_lowpass(series: &Series, cutoff_hz: f64, order: usize) -> Result<Series, SignalError> {
    let filter = ButterworthLowpass::new(order, cutoff_hz, series.fps())?;
    Ok(series.map(filter.filtfilt(&series.values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed-form squared magnitude of a bilinear-transformed Butterworth
    /// low-pass; independent of the pole placement used above.
    fn oracle_power(order: usize, fc: f64, fs: f64, f: f64) -> f64 {
        let ratio = (PI * f / fs).tan() / (PI * fc / fs).tan();
        1.0 / (1.0 + ratio.powi(2 * order as i32))
    }

    #[test]
    fn design_matches_closed_form_magnitude() {
        for order in 1..=8 {
            let filt = ButterworthLowpass::new(order, 2.0, 30.0).unwrap();
            for i in 0..=140 {
                let f = 0.1 * i as f64;
                let m = filt.magnitude(f);
                let expect = oracle_power(order, 2.0, 30.0, f).sqrt();
                assert!((m - expect).abs() < 1e-9, "order {order} f {f}: {m} vs {expect}");
            }
        }
    }

    #[test]
    fn constant_series_passes_unchanged() {
        let s = Series::from_fps(vec![5.0; 90], 30.0);
        let y = butterworth_lowpass(&s, 2.0, 4).unwrap();
        assert_eq!(y.len(), 90);
        assert!(y.values.iter().all(|v| (v - 5.0).abs() < 1e-6));
    }

    #[test]
    fn ten_hertz_sine_is_suppressed_to_oracle_level() {
        let fs = 30.0;
        let n = 600;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin()).collect();
        let y = butterworth_lowpass(&Series::from_fps(x, fs), 2.0, 4).unwrap();
        let interior = &y.values[150..450];
        let amp = interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Forward-backward squares the single-pass magnitude.
        let oracle = oracle_power(4, 2.0, fs, 10.0);
        assert!(oracle < 1e-7);
        assert!(amp <= 1.5 * oracle, "amplitude {amp} vs oracle {oracle}");
    }

    #[test]
    fn cutoff_sine_is_halved() {
        let fs = 30.0;
        let n = 900;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 2.0 * i as f64 / fs).sin()).collect();
        let y = butterworth_lowpass(&Series::from_fps(x.clone(), fs), 2.0, 4).unwrap();
        // Compare peaks of the sampled sine, not of the continuous one.
        let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ratio = peak(&y.values[300..600]) / peak(&x[300..600]);
        assert!((ratio - 0.5).abs() < 2e-3, "gain {ratio}");
    }

    #[test]
    fn symmetric_pulse_stays_symmetric() {
        let n = 201;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let d = i as f64 - 100.0;
                (-d * d / 18.0).exp() + if d.abs() <= 3.0 { 1.0 } else { 0.0 }
            })
            .collect();
        let y = butterworth_lowpass(&Series::from_fps(x, 30.0), 2.0, 4).unwrap().values;
        // Edge transients of the two passes differ slightly.
        for i in 0..n {
            assert!((y[i] - y[n - 1 - i]).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            ButterworthLowpass::new(4, 15.0, 30.0),
            Err(SignalError::InvalidCutoff { .. })
        ));
        assert!(matches!(
            ButterworthLowpass::new(4, 0.0, 30.0),
            Err(SignalError::InvalidCutoff { .. })
        ));
        assert!(matches!(
            ButterworthLowpass::new(0, 2.0, 30.0),
            Err(SignalError::InvalidOrder(0))
        ));
        let short = Series::from_fps(vec![1.0; 11], 30.0);
        assert!(matches!(
            butterworth_lowpass(&short, 2.0, 4),
            Err(SignalError::TooShort { len: 11, needed: 12 })
        ));
        assert!(butterworth_lowpass(&Series::from_fps(vec![1.0; 12], 30.0), 2.0, 4).is_ok());
    }

    #[test]
    fn linearity_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..120).map(|_| rng.random_range(-50.0..50.0)).collect();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let a = butterworth_lowpass(&Series::from_fps(x, 30.0), 2.0, 4).unwrap();
        let b = butterworth_lowpass(&Series::from_fps(x3, 30.0), 2.0, 4).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            assert!((3.0 * p - q).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn preserves_length_and_finiteness(x in proptest::collection::vec(-1e3f64..1e3, 12..200)) {
            let y = butterworth_lowpass(&Series::from_fps(x.clone(), 30.0), 2.0, 4).unwrap();
            prop_assert_eq!(y.len(), x.len());
            prop_assert!(y.values.iter().all(|v| v.is_finite()));
        }

        #[test]
        fn dc_gain_is_one(level in -1e4f64..1e4, n in 12usize..150) {
            let y = butterworth_lowpass(&Series::from_fps(vec![level; n], 30.0), 2.0, 4).unwrap();
            for v in y.values {
                prop_assert!((v - level).abs() <= 1e-6 * level.abs().max(1.0));
            }
        }
    }
}
