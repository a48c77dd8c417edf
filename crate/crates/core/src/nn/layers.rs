use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NnError, Tensor};

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-limit..limit);
    }
    t
}

/// Affine map `y = x W + b` with `W` of shape `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            weight: glorot_uniform(&[inputs, outputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let out = self.outputs();
        let w = self.weight.data();
        let mut y = self.bias.data().to_vec();
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (yo, wo) in y.iter_mut().zip(&w[i * out..(i + 1) * out]) {
                *yo += xi * wo;
            }
        }
        y
    }

    pub fn try_forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.inputs() {
            return Err(NnError::ShapeMismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        Ok(self.forward(x))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: &[f64], dy: &[f64], gw: &mut Tensor, gb: &mut Tensor) -> Vec<f64> {
        let out = self.outputs();
        let w = self.weight.data();
        for (g, d) in gb.data_mut().iter_mut().zip(dy) {
            *g += d;
        }
        let gw = gw.data_mut();
        let mut dx = vec![0.0; x.len()];
        for (i, xi) in x.iter().enumerate() {
            let row = &w[i * out..(i + 1) * out];
            let grow = &mut gw[i * out..(i + 1) * out];
            let mut acc = 0.0;
            for o in 0..out {
                grow[o] += xi * dy[o];
                acc += row[o] * dy[o];
            }
            dx[i] = acc;
        }
        dx
    }
}

/// Valid (unpadded), stride-1 cross-correlation over time. Input is
/// `[L, C_in]`, kernel `[k, C_in, C_out]`, output `[L - k + 1, C_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    pub fn new(in_channels: usize, out_channels: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        Conv1d {
            kernel: glorot_uniform(&[k, in_channels, out_channels], k * in_channels, k * out_channels, rng),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (len, cin) = x.dims2()?;
        let (k, cout) = (self.kernel_size(), self.out_channels());
        if cin != self.in_channels() || len < k {
            return Err(NnError::ShapeMismatch(format!(
                "conv1d (k={k}, c_in={}) cannot take input {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        let out_len = len - k + 1;
        let (xd, w, b) = (x.data(), self.kernel.data(), self.bias.data());
        let mut y = Vec::with_capacity(out_len * cout);
        for t in 0..out_len {
            let mut row = b.to_vec();
            // The k input rows starting at t are contiguous and line up with
            // the flattened [k, c_in] leading axes of the kernel.
            for (j, xv) in xd[t * cin..(t + k) * cin].iter().enumerate() {
                if *xv == 0.0 {
                    continue;
                }
                for (r, wv) in row.iter_mut().zip(&w[j * cout..(j + 1) * cout]) {
                    *r += xv * wv;
                }
            }
            y.extend_from_slice(&row);
        }
        Tensor::new(vec![out_len, cout], y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: &Tensor, dy: &Tensor, gk: &mut Tensor, gb: &mut Tensor) -> Tensor {
        let (len, cin) = (x.shape()[0], x.shape()[1]);
        let (k, cout) = (self.kernel_size(), self.out_channels());
        let out_len = dy.shape()[0];
        let (xd, w, dyd) = (x.data(), self.kernel.data(), dy.data());
        let mut dx = vec![0.0; len * cin];
        let gk = gk.data_mut();
        let gb = gb.data_mut();
        for t in 0..out_len {
            let drow = &dyd[t * cout..(t + 1) * cout];
            for (g, d) in gb.iter_mut().zip(drow) {
                *g += d;
            }
            for j in 0..k * cin {
                let xv = xd[t * cin + j];
                let wrow = &w[j * cout..(j + 1) * cout];
                let grow = &mut gk[j * cout..(j + 1) * cout];
                let mut acc = 0.0;
                for o in 0..cout {
                    grow[o] += xv * drow[o];
                    acc += wrow[o] * drow[o];
                }
                dx[t * cin + j] += acc;
            }
        }
        Tensor::new(vec![len, cin], dx).expect("shape matches input")
    }
}

/// Non-overlapping max over windows of `k` time steps; a trailing partial
/// window is dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool1d {
    pub k: usize,
}

impl MaxPool1d {
    /// Output and, for each output cell, the flat input index that won
    /// (earliest on ties).
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>), NnError> {
        let (len, c) = x.dims2()?;
        if self.k == 0 || len < self.k {
            return Err(NnError::ShapeMismatch(format!(
                "max-pool k={} needs at least {} steps, got {len}",
                self.k, self.k
            )));
        }
        let out_len = len / self.k;
        let xd = x.data();
        let mut y = Vec::with_capacity(out_len * c);
        let mut idx = Vec::with_capacity(out_len * c);
        for t in 0..out_len {
            for ch in 0..c {
                let mut best = t * self.k * c + ch;
                for j in 1..self.k {
                    let i = (t * self.k + j) * c + ch;
                    if xd[i] > xd[best] {
                        best = i;
                    }
                }
                y.push(xd[best]);
                idx.push(best);
            }
        }
        Ok((Tensor::new(vec![out_len, c], y)?, idx))
    }

    pub fn backward(&self, input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
        let mut dx = Tensor::zeros(input_shape);
        let d = dx.data_mut();
        for (i, g) in argmax.iter().zip(dy.data()) {
            d[*i] += g;
        }
        dx
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Gradient through a ReLU given its pre-activation input.
pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter().zip(dy).map(|(v, d)| if *v > 0.0 { *d } else { 0.0 }).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / sum).collect()
}

/// Gradient with respect to the logits given the softmax output `p` and the
/// gradient `dp` with respect to it.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, di)| pi * (di - dot)).collect()
}

/// Inverted dropout. Returns the output and the per-element multiplier
/// (0 or `1 / (1 - rate)`), or the input unchanged when `rng` is `None`.
pub fn dropout(x: &[f64], rate: f64, rng: Option<&mut ChaCha8Rng>) -> (Vec<f64>, Option<Vec<f64>>) {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let mask: Vec<f64> = x
                .iter()
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect();
            (x.iter().zip(&mask).map(|(a, m)| a * m).collect(), Some(mask))
        }
        _ => (x.to_vec(), None),
    }
}
