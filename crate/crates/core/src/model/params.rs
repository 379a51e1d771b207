use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InputShape, ModelConfig};

/// One direction of one LSTM layer. Gate rows are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    /// `4H x I`
    pub w_ih: Array2<f64>,
    /// `4H x H`
    pub w_hh: Array2<f64>,
    /// `4H`
    pub bias: Array1<f64>,
}

impl LstmDirection {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }
}

/// All trainable tensors. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Fusion logits, one per source.
    pub theta: Array1<f64>,
    /// `kernel x filters x input_width`
    pub conv_w: Array3<f64>,
    pub conv_b: Array1<f64>,
    /// `[forward, backward]` per layer.
    pub lstm: Vec<[LstmDirection; 2]>,
    /// `classes x 2H`
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig, shape: &InputShape) -> Self {
        let h = cfg.lstm_hidden;
        let lstm = (0..cfg.lstm_layers)
            .map(|l| {
                let input = if l == 0 { cfg.conv_filters } else { 2 * h };
                [LstmDirection::zeros(input, h), LstmDirection::zeros(input, h)]
            })
            .collect();
        Self {
            theta: Array1::zeros(shape.sources),
            conv_w: Array3::zeros((cfg.kernel, cfg.conv_filters, shape.width())),
            conv_b: Array1::zeros(cfg.conv_filters),
            lstm,
            dense_w: Array2::zeros((cfg.classes, 2 * h)),
            dense_b: Array1::zeros(cfg.classes),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` init; LSTM tensors use `fan_in = H`. `theta` starts at 0.
    pub fn init(cfg: &ModelConfig, shape: &InputShape, seed: u64) -> Self {
        let mut p = Self::zeros(cfg, shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |xs: &mut [f64], fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            for x in xs {
                *x = rng.gen_range(-b..b);
            }
        };
        let conv_fan = cfg.kernel * shape.width();
        fill(p.conv_w.as_slice_mut().unwrap(), conv_fan);
        fill(p.conv_b.as_slice_mut().unwrap(), conv_fan);
        for layer in &mut p.lstm {
            for dir in layer.iter_mut() {
                fill(dir.w_ih.as_slice_mut().unwrap(), cfg.lstm_hidden);
                fill(dir.w_hh.as_slice_mut().unwrap(), cfg.lstm_hidden);
                fill(dir.bias.as_slice_mut().unwrap(), cfg.lstm_hidden);
            }
        }
        fill(p.dense_w.as_slice_mut().unwrap(), 2 * cfg.lstm_hidden);
        fill(p.dense_b.as_slice_mut().unwrap(), 2 * cfg.lstm_hidden);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `(name, shape)` for every tensor, in canonical order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("fusion.theta".to_string(), self.theta.shape().to_vec()),
            ("conv.weight".to_string(), self.conv_w.shape().to_vec()),
            ("conv.bias".to_string(), self.conv_b.shape().to_vec()),
        ];
        for (l, layer) in self.lstm.iter().enumerate() {
            for (d, dir) in layer.iter().enumerate() {
                let tag = format!("lstm.{l}.{}", if d == 0 { "fwd" } else { "bwd" });
                out.push((format!("{tag}.w_ih"), dir.w_ih.shape().to_vec()));
                out.push((format!("{tag}.w_hh"), dir.w_hh.shape().to_vec()));
                out.push((format!("{tag}.bias"), dir.bias.shape().to_vec()));
            }
        }
        out.push(("dense.weight".to_string(), self.dense_w.shape().to_vec()));
        out.push(("dense.bias".to_string(), self.dense_b.shape().to_vec()));
        out
    }

    /// Flat views of every tensor, in the order of [`Params::manifest`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out =
            vec![self.theta.as_slice().unwrap(), self.conv_w.as_slice().unwrap(), self.conv_b.as_slice().unwrap()];
        for layer in &self.lstm {
            for dir in layer {
                out.push(dir.w_ih.as_slice().unwrap());
                out.push(dir.w_hh.as_slice().unwrap());
                out.push(dir.bias.as_slice().unwrap());
            }
        }
        out.push(self.dense_w.as_slice().unwrap());
        out.push(self.dense_b.as_slice().unwrap());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(usize, &mut [f64])> {
        let mut out: Vec<&mut [f64]> = vec![
            self.theta.as_slice_mut().unwrap(),
            self.conv_w.as_slice_mut().unwrap(),
            self.conv_b.as_slice_mut().unwrap(),
        ];
        for layer in &mut self.lstm {
            for dir in layer.iter_mut() {
                out.push(dir.w_ih.as_slice_mut().unwrap());
                out.push(dir.w_hh.as_slice_mut().unwrap());
                out.push(dir.bias.as_slice_mut().unwrap());
            }
        }
        out.push(self.dense_w.as_slice_mut().unwrap());
        out.push(self.dense_b.as_slice_mut().unwrap());
        out.into_iter().enumerate().collect()
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        let src = other.tensors();
        for (i, dst) in self.tensors_mut() {
            for (d, s) in dst.iter_mut().zip(src[i]) {
                *d += scale * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = f64::from(*v as f32);
            }
        }
    }
}
