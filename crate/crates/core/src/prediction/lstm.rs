//! Single hidden layer LSTM regressor with a linear read-out of the last
//! hidden state, trained by backpropagation through time and Adam on MSE.
//!
//! All parameters live in one flat vector so the optimizer and the
//! finite-difference checks can treat them uniformly. Layout:
//!
//! ```text
//! w   [4H x S]   input weights, gate rows ordered i, f, g, o
//! u   [4H x H]   recurrent weights
//! b   [4H]       gate biases
//! v   [S x H]    read-out weights
//! by  [S]        read-out bias
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PredictionError;

/// One training example: an input sequence of per-type vectors and the
/// per-type target that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub series: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmHyper {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub series_len: usize,
    pub seed: u64,
}

impl Default for LstmHyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 1000,
            series_len: 36,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    input_dim: usize,
    hidden: usize,
    params: Vec<f64>,
}

struct Layout {
    w: usize,
    u: usize,
    b: usize,
    v: usize,
    by: usize,
    len: usize,
}

/// Activations kept from a forward pass for the backward pass.
struct Trace {
    xs: Vec<Vec<f64>>,
    // per step: i, f, g, o, c, h (each length H); index 0 is the initial state for c and h
    gates: Vec<[Vec<f64>; 4]>,
    cs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    fn layout(input_dim: usize, hidden: usize) -> Layout {
        let g = 4 * hidden;
        let w = 0;
        let u = w + g * input_dim;
        let b = u + g * hidden;
        let v = b + g;
        let by = v + input_dim * hidden;
        Layout {
            w,
            u,
            b,
            v,
            by,
            len: by + input_dim,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let len = Self::layout(input_dim, hidden).len;
        Self {
            input_dim,
            hidden,
            params: vec![0.0; len],
        }
    }

    /// Uniform `(-1/sqrt(H), 1/sqrt(H))` initialisation with the forget gate
    /// bias set to one.
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut model = Self::zeros(input_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        for p in &mut model.params {
            *p = rng.gen_range(-bound..bound);
        }
        let l = Self::layout(input_dim, hidden);
        for j in hidden..2 * hidden {
            model.params[l.b + j] = 1.0;
        }
        model
    }

    pub fn from_params(input_dim: usize, hidden: usize, params: Vec<f64>) -> Result<Self, PredictionError> {
        let expected = Self::layout(input_dim, hidden).len;
        if params.len() != expected {
            return Err(PredictionError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            input_dim,
            hidden,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_series(&self, series: &[Vec<f64>]) -> Result<(), PredictionError> {
        if series.is_empty() {
            return Err(PredictionError::EmptySeries);
        }
        if let Some(bad) = series.iter().find(|x| x.len() != self.input_dim) {
            return Err(PredictionError::DimensionMismatch {
                expected: self.input_dim,
                got: bad.len(),
            });
        }
        Ok(())
    }

    fn run(&self, series: &[Vec<f64>]) -> Trace {
        let h_dim = self.hidden;
        let s_dim = self.input_dim;
        let l = Self::layout(s_dim, h_dim);
        let p = &self.params;
        let mut cs = vec![vec![0.0; h_dim]];
        let mut hs = vec![vec![0.0; h_dim]];
        let mut gates = Vec::with_capacity(series.len());
        let mut z = vec![0.0; 4 * h_dim];
        for x in series {
            let h_prev = hs.last().unwrap();
            let c_prev = cs.last().unwrap();
            for (r, zr) in z.iter_mut().enumerate() {
                let mut acc = p[l.b + r];
                let wrow = &p[l.w + r * s_dim..l.w + (r + 1) * s_dim];
                acc += wrow.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                let urow = &p[l.u + r * h_dim..l.u + (r + 1) * h_dim];
                acc += urow.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
                *zr = acc;
            }
            let i: Vec<f64> = z[..h_dim].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[h_dim..2 * h_dim].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[2 * h_dim..3 * h_dim].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = z[3 * h_dim..].iter().map(|&v| sigmoid(v)).collect();
            let c: Vec<f64> = (0..h_dim).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
            let h: Vec<f64> = (0..h_dim).map(|j| o[j] * c[j].tanh()).collect();
            gates.push([i, f, g, o]);
            cs.push(c);
            hs.push(h);
        }
        let h_last = hs.last().unwrap();
        let y = (0..s_dim)
            .map(|k| {
                let vrow = &p[l.v + k * h_dim..l.v + (k + 1) * h_dim];
                p[l.by + k] + vrow.iter().zip(h_last).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Trace {
            xs: series.to_vec(),
            gates,
            cs,
            hs,
            y,
        }
    }

    /// Raw forecast for the step after `series`.
    pub fn forward(&self, series: &[Vec<f64>]) -> Result<Vec<f64>, PredictionError> {
        self.check_series(series)?;
        Ok(self.run(series).y)
    }

    fn check_sample(&self, s: &Sample) -> Result<(), PredictionError> {
        self.check_series(&s.series)?;
        if s.target.len() != self.input_dim {
            return Err(PredictionError::DimensionMismatch {
                expected: self.input_dim,
                got: s.target.len(),
            });
        }
        Ok(())
    }

    /// Mean over the batch of the per-sample mean squared error.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64, PredictionError> {
        let mut total = 0.0;
        for s in batch {
            self.check_sample(s)?;
            let y = self.run(&s.series).y;
            total += mse(&y, &s.target);
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Loss and its gradient with respect to the flat parameter vector.
    pub fn loss_and_gradient(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>), PredictionError> {
        let h_dim = self.hidden;
        let s_dim = self.input_dim;
        let l = Self::layout(s_dim, h_dim);
        let p = &self.params;
        let mut grad = vec![0.0; l.len];
        let mut total = 0.0;
        let scale = 1.0 / batch.len().max(1) as f64;
        for sample in batch {
            self.check_sample(sample)?;
            let tr = self.run(&sample.series);
            total += mse(&tr.y, &sample.target);

            let dy: Vec<f64> = tr
                .y
                .iter()
                .zip(&sample.target)
                .map(|(y, t)| 2.0 * (y - t) / s_dim as f64 * scale)
                .collect();
            let steps = tr.gates.len();
            let h_last = &tr.hs[steps];
            let mut dh = vec![0.0; h_dim];
            for k in 0..s_dim {
                grad[l.by + k] += dy[k];
                for j in 0..h_dim {
                    grad[l.v + k * h_dim + j] += dy[k] * h_last[j];
                    dh[j] += p[l.v + k * h_dim + j] * dy[k];
                }
            }
            let mut dc = vec![0.0; h_dim];
            let mut dz = vec![0.0; 4 * h_dim];
            for t in (0..steps).rev() {
                let [i, f, g, o] = &tr.gates[t];
                let c = &tr.cs[t + 1];
                let c_prev = &tr.cs[t];
                let h_prev = &tr.hs[t];
                let x = &tr.xs[t];
                for j in 0..h_dim {
                    let tc = c[j].tanh();
                    let d_o = dh[j] * tc;
                    dc[j] += dh[j] * o[j] * (1.0 - tc * tc);
                    let d_i = dc[j] * g[j];
                    let d_g = dc[j] * i[j];
                    let d_f = dc[j] * c_prev[j];
                    dz[j] = d_i * i[j] * (1.0 - i[j]);
                    dz[h_dim + j] = d_f * f[j] * (1.0 - f[j]);
                    dz[2 * h_dim + j] = d_g * (1.0 - g[j] * g[j]);
                    dz[3 * h_dim + j] = d_o * o[j] * (1.0 - o[j]);
                    dc[j] *= f[j];
                }
                dh.iter_mut().for_each(|v| *v = 0.0);
                for (r, &dzr) in dz.iter().enumerate() {
                    grad[l.b + r] += dzr;
                    for (k, xk) in x.iter().enumerate() {
                        grad[l.w + r * s_dim + k] += dzr * xk;
                    }
                    for j in 0..h_dim {
                        grad[l.u + r * h_dim + j] += dzr * h_prev[j];
                        dh[j] += p[l.u + r * h_dim + j] * dzr;
                    }
                }
            }
        }
        Ok((total * scale, grad))
    }

    /// Trains in place with Adam on minibatches. Returns the mean loss of
    /// every epoch.
    pub fn train(&mut self, dataset: &[Sample], hyper: &LstmHyper) -> Result<Vec<f64>, PredictionError> {
        if dataset.is_empty() {
            return Err(PredictionError::EmptyDataset);
        }
        for s in dataset {
            self.check_sample(s)?;
        }
        let mut adam = Adam::new(self.params.len(), hyper.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let batch_size = hyper.batch_size.max(1);
        let mut history = Vec::with_capacity(hyper.epochs);
        for epoch in 0..hyper.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch_size) {
                let batch: Vec<Sample> = chunk.iter().map(|&k| dataset[k].clone()).collect();
                let (loss, grad) = self.loss_and_gradient(&batch)?;
                if !loss.is_finite() {
                    return Err(PredictionError::NonFiniteLoss { epoch });
                }
                epoch_loss += loss * chunk.len() as f64;
                adam.step(&mut self.params, &grad);
            }
            let mean = epoch_loss / dataset.len() as f64;
            if !mean.is_finite() || self.params.iter().any(|p| !p.is_finite()) {
                return Err(PredictionError::NonFiniteLoss { epoch });
            }
            history.push(mean);
        }
        Ok(history)
    }
}

pub fn lstm_forward(model: &LstmModel, series: &[Vec<f64>]) -> Result<Vec<f64>, PredictionError> {
    model.forward(series)
}

/// Trains a copy of `model` and returns it with the per-epoch loss history.
pub fn lstm_train(
    model: &LstmModel,
    dataset: &[Sample],
    hyper: &LstmHyper,
) -> Result<(LstmModel, Vec<f64>), PredictionError> {
    let mut trained = model.clone();
    let history = trained.train(dataset, hyper)?;
    Ok((trained, history))
}

fn mse(y: &[f64], t: &[f64]) -> f64 {
    y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len().max(1) as f64
}

/// Sliding windows of length `len` over a per-type series; each window
/// predicts the next element. Windows near the start are left padded
/// with zeros.
pub fn windowed_dataset(series: &[Vec<f64>], len: usize) -> Vec<Sample> {
    let dim = series.first().map_or(0, Vec::len);
    (1..series.len())
        .map(|t| {
            let start = t.saturating_sub(len);
            let mut window = vec![vec![0.0; dim]; len - (t - start)];
            window.extend_from_slice(&series[start..t]);
            Sample {
                series: window,
                target: series[t].clone(),
            }
        })
        .collect()
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
