use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NnError, Tensor};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-layer LSTM. Gate blocks are ordered input, forget, candidate,
/// output along the `4H` axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    /// `[F, 4H]`
    pub w_input: Tensor,
    /// `[H, 4H]`
    pub w_hidden: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

/// Per-step activations kept for backpropagation.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub input: Tensor,
    /// Gate activations `[i, f, g, o]` per step, each of length `H`.
    gates: Vec<Vec<f64>>,
    /// Cell states `c_0 .. c_T` (index 0 is the initial state).
    cells: Vec<Vec<f64>>,
    /// Hidden states `h_0 .. h_T`.
    hidden: Vec<Vec<f64>>,
}

impl LstmCache {
    /// Hidden state after the last step.
    pub fn final_hidden(&self) -> &[f64] {
        self.hidden.last().expect("at least the initial state")
    }

    /// Hidden states `h_1 .. h_T` as a `[T, H]` tensor.
    pub fn hidden_sequence(&self) -> Tensor {
        Tensor::from_rows(&self.hidden[1..]).expect("equal widths")
    }

    pub fn final_cell(&self) -> &[f64] {
        self.cells.last().expect("at least the initial state")
    }
}

impl Lstm {
    /// Weights and biases uniform in `±1/sqrt(F + H)`; forget-gate biases
    /// start at 1.
    pub fn new(features: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = 1.0 / ((features + hidden) as f64).sqrt();
        let mut draw = |shape: &[usize]| {
            let mut t = Tensor::zeros(shape);
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
            t
        };
        let w_input = draw(&[features, 4 * hidden]);
        let w_hidden = draw(&[hidden, 4 * hidden]);
        let mut bias = draw(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v += 1.0);
        Lstm {
            w_input,
            w_hidden,
            bias,
        }
    }

    pub fn features(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    /// Runs the recursion over `x` (`[T, F]`) from zero initial states.
    pub fn forward(&self, x: &Tensor) -> Result<LstmCache, NnError> {
        let h = self.hidden();
        self.forward_from(x, &vec![0.0; h], &vec![0.0; h])
    }

    pub fn forward_from(&self, x: &Tensor, h0: &[f64], c0: &[f64]) -> Result<LstmCache, NnError> {
        let (steps, f) = x.dims2()?;
        let h = self.hidden();
        if f != self.features() || steps == 0 || h0.len() != h || c0.len() != h {
            return Err(NnError::ShapeMismatch(format!(
                "LSTM (F={}, H={h}) cannot take input {:?}",
                self.features(),
                x.shape()
            )));
        }
        let (wi, wh, b) = (self.w_input.data(), self.w_hidden.data(), self.bias.data());
        let g4 = 4 * h;
        let mut cache = LstmCache {
            input: x.clone(),
            gates: Vec::with_capacity(steps),
            cells: vec![c0.to_vec()],
            hidden: vec![h0.to_vec()],
        };
        for t in 0..steps {
            let mut z = b.to_vec();
            for (k, xv) in x.data()[t * f..(t + 1) * f].iter().enumerate() {
                for (zj, w) in z.iter_mut().zip(&wi[k * g4..(k + 1) * g4]) {
                    *zj += xv * w;
                }
            }
            for (k, hv) in cache.hidden[t].iter().enumerate() {
                for (zj, w) in z.iter_mut().zip(&wh[k * g4..(k + 1) * g4]) {
                    *zj += hv * w;
                }
            }
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = if (2 * h..3 * h).contains(&j) { zj.tanh() } else { sigmoid(*zj) };
            }
            let c_prev = &cache.cells[t];
            let c: Vec<f64> = (0..h).map(|j| z[h + j] * c_prev[j] + z[j] * z[2 * h + j]).collect();
            let hn: Vec<f64> = (0..h).map(|j| z[3 * h + j] * c[j].tanh()).collect();
            cache.gates.push(z);
            cache.cells.push(c);
            cache.hidden.push(hn);
        }
        Ok(cache)
    }

    /// Backpropagates a gradient on the final hidden state. Accumulates into
    /// `grads` (`[w_input, w_hidden, bias]`) and returns the input gradient.
    pub fn backward(&self, cache: &LstmCache, d_final: &[f64], grads: &mut [Tensor]) -> Tensor {
        let h = self.hidden();
        let g4 = 4 * h;
        let f = self.features();
        let steps = cache.gates.len();
        let (wi, wh) = (self.w_input.data(), self.w_hidden.data());
        let mut dx = Tensor::zeros(cache.input.shape());
        let mut dh = d_final.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; g4];
        let [gwi, gwh, gb] = grads else {
            panic!("LSTM expects three gradient buffers");
        };
        for t in (0..steps).rev() {
            let z = &cache.gates[t];
            let c = &cache.cells[t + 1];
            let c_prev = &cache.cells[t];
            for j in 0..h {
                let (i, fg, g, o) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let tc = c[j].tanh();
                let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                dz[j] = dcj * g * i * (1.0 - i);
                dz[h + j] = dcj * c_prev[j] * fg * (1.0 - fg);
                dz[2 * h + j] = dcj * i * (1.0 - g * g);
                dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
                dc[j] = dcj * fg;
            }
            for (g, d) in gb.data_mut().iter_mut().zip(&dz) {
                *g += d;
            }
            let xt = &cache.input.data()[t * f..(t + 1) * f];
            let gwi = gwi.data_mut();
            let dxt = &mut dx.data_mut()[t * f..(t + 1) * f];
            for k in 0..f {
                let row = &wi[k * g4..(k + 1) * g4];
                let grow = &mut gwi[k * g4..(k + 1) * g4];
                let mut acc = 0.0;
                for j in 0..g4 {
                    grow[j] += xt[k] * dz[j];
                    acc += row[j] * dz[j];
                }
                dxt[k] = acc;
            }
            let hp = &cache.hidden[t];
            let gwh = gwh.data_mut();
            for k in 0..h {
                let row = &wh[k * g4..(k + 1) * g4];
                let grow = &mut gwh[k * g4..(k + 1) * g4];
                let mut acc = 0.0;
                for j in 0..g4 {
                    grow[j] += hp[k] * dz[j];
                    acc += row[j] * dz[j];
                }
                dh[k] = acc;
            }
        }
        dx
    }
}
