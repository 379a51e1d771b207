//! Forward pass with cached activations and the matching backward pass.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::LstmDirection;
use super::{fusion_weights, softmax, FusionMode, ModelConfig, Params, UtteranceInput, PROB_FLOOR};

/// Gradients share the parameter layout.
pub type Gradients = Params;

struct DirectionCache {
    /// Inputs in processing order.
    x: Array2<f64>,
    /// Activated gates `[i, f, g, o]`, `M x 4H`.
    gates: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

pub struct ForwardCache {
    pub alpha: Array1<f64>,
    /// Fused embedding with markers appended, `M x (d + k)`.
    pub fused: Array2<f64>,
    conv_pre: Array2<f64>,
    conv_mask: Option<Array2<f64>>,
    layers: Vec<[DirectionCache; 2]>,
    out_mask: Option<Array2<f64>>,
    pooled: Array1<f64>,
    pub probs: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 - p;
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

fn reversed(x: &ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

fn direction_forward(p: &LstmDirection, x: Array2<f64>) -> DirectionCache {
    let m = x.nrows();
    let h = p.hidden();
    let mut z = x.dot(&p.w_ih.t());
    z += &p.bias;
    let mut gates = Array2::zeros((m, 4 * h));
    let mut c = Array2::zeros((m, h));
    let mut hs = Array2::zeros((m, h));
    let mut h_prev = Array1::<f64>::zeros(h);
    let mut c_prev = Array1::<f64>::zeros(h);
    for t in 0..m {
        let mut zt = z.row(t).to_owned();
        general_mat_mul_vec(&p.w_hh, &h_prev, &mut zt);
        for j in 0..h {
            let i = sigmoid(zt[j]);
            let f = sigmoid(zt[h + j]);
            let g = zt[2 * h + j].tanh();
            let o = sigmoid(zt[3 * h + j]);
            let ct = f * c_prev[j] + i * g;
            let ht = o * ct.tanh();
            gates[[t, j]] = i;
            gates[[t, h + j]] = f;
            gates[[t, 2 * h + j]] = g;
            gates[[t, 3 * h + j]] = o;
            c[[t, j]] = ct;
            hs[[t, j]] = ht;
            c_prev[j] = ct;
            h_prev[j] = ht;
        }
    }
    DirectionCache { x, gates, c, h: hs }
}

/// `y += a . v`
fn general_mat_mul_vec(a: &Array2<f64>, v: &Array1<f64>, y: &mut Array1<f64>) {
    ndarray::linalg::general_mat_vec_mul(1.0, a, v, 1.0, y);
}

/// Returns the gradient wrt the direction's inputs (processing order) and accumulates
/// parameter gradients into `g`.
fn direction_backward(
    p: &LstmDirection,
    cache: &DirectionCache,
    dh_out: ArrayView2<f64>,
    g: &mut LstmDirection,
) -> Array2<f64> {
    let m = cache.x.nrows();
    let h = p.hidden();
    let mut dz = Array2::<f64>::zeros((m, 4 * h));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    for t in (0..m).rev() {
        for j in 0..h {
            let i = cache.gates[[t, j]];
            let f = cache.gates[[t, h + j]];
            let gg = cache.gates[[t, 2 * h + j]];
            let o = cache.gates[[t, 3 * h + j]];
            let ct = cache.c[[t, j]];
            let c_prev = if t > 0 { cache.c[[t - 1, j]] } else { 0.0 };
            let tc = ct.tanh();
            let dh = dh_out[[t, j]] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dc_next[j] = dc * f;
            dz[[t, j]] = dc * gg * i * (1.0 - i);
            dz[[t, h + j]] = dc * c_prev * f * (1.0 - f);
            dz[[t, 2 * h + j]] = dc * i * (1.0 - gg * gg);
            dz[[t, 3 * h + j]] = d_o * o * (1.0 - o);
        }
        dh_next = dz.row(t).dot(&p.w_hh);
    }
    // h shifted down one step: row t holds h_{t-1}
    let mut h_prev = Array2::<f64>::zeros((m, h));
    if m > 1 {
        h_prev.slice_mut(s![1.., ..]).assign(&cache.h.slice(s![..m - 1, ..]));
    }
    general_mat_mul(1.0, &dz.t(), &cache.x, 1.0, &mut g.w_ih);
    general_mat_mul(1.0, &dz.t(), &h_prev, 1.0, &mut g.w_hh);
    g.bias += &dz.sum_axis(Axis(0));
    dz.dot(&p.w_ih)
}

/// Runs the network on one utterance whose markers are already standardized.
/// Dropout is applied only when `dropout_rng` is given.
pub fn forward(
    params: &Params,
    cfg: &ModelConfig,
    fusion: FusionMode,
    input: &UtteranceInput,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> ForwardCache {
    let m = input.chunks();
    assert!(m > 0, "utterance has no chunks");
    let alpha = fusion_weights(&params.theta, fusion);
    let dim = input.sources[0].ncols();
    let k = input.markers.ncols();

    let mut fused = Array2::zeros((m, dim + k));
    {
        let mut emb = fused.slice_mut(s![.., ..dim]);
        for (src, &a) in input.sources.iter().zip(&alpha) {
            emb.scaled_add(a, src);
        }
    }
    fused.slice_mut(s![.., dim..]).assign(&input.markers);

    // same-padded conv along the chunk axis
    let filters = cfg.conv_filters;
    let pad = (cfg.kernel - 1) / 2;
    let mut conv_pre = Array2::zeros((m, filters));
    conv_pre += &params.conv_b;
    for kk in 0..cfg.kernel {
        let off = kk as isize - pad as isize;
        let t0 = (-off).max(0) as usize;
        let t1 = (m as isize - off).min(m as isize).max(0) as usize;
        if t0 >= t1 {
            continue;
        }
        let src = fused.slice(s![(t0 as isize + off) as usize..(t1 as isize + off) as usize, ..]);
        let w = params.conv_w.index_axis(Axis(0), kk);
        let mut dst = conv_pre.slice_mut(s![t0..t1, ..]);
        general_mat_mul(1.0, &src, &w.t(), 1.0, &mut dst);
    }
    let mut x = conv_pre.mapv(|v| v.max(0.0));
    let conv_mask = match dropout_rng.as_deref_mut() {
        Some(rng) if cfg.dropout > 0.0 => {
            let mask = dropout_mask(rng, (m, filters), cfg.dropout);
            x *= &mask;
            Some(mask)
        }
        _ => None,
    };

    let mut layers = Vec::with_capacity(params.lstm.len());
    for layer in &params.lstm {
        let fwd = direction_forward(&layer[0], x.clone());
        let bwd = direction_forward(&layer[1], reversed(&x.view()));
        let h = layer[0].hidden();
        let mut y = Array2::zeros((m, 2 * h));
        y.slice_mut(s![.., ..h]).assign(&fwd.h);
        y.slice_mut(s![.., h..]).assign(&bwd.h.slice(s![..;-1, ..]));
        layers.push([fwd, bwd]);
        x = y;
    }
    let out_mask = match dropout_rng {
        Some(rng) if cfg.dropout > 0.0 => {
            let mask = dropout_mask(rng, x.dim(), cfg.dropout);
            x *= &mask;
            Some(mask)
        }
        _ => None,
    };
    let pooled = x.mean_axis(Axis(0)).expect("m > 0");
    let logits = params.dense_w.dot(&pooled) + &params.dense_b;
    let probs = softmax(logits.as_slice().unwrap());
    ForwardCache { alpha, fused, conv_pre, conv_mask, layers, out_mask, pooled, probs }
}

/// Gradient of `-ln max(p[label], 1e-12)` for the pass recorded in `cache`, added to `grads`.
pub fn backward(
    params: &Params,
    cfg: &ModelConfig,
    fusion: FusionMode,
    input: &UtteranceInput,
    cache: &ForwardCache,
    label: usize,
    grads: &mut Gradients,
) {
    let m = input.chunks();
    let dim = input.sources[0].ncols();
    let mut dlogits = cache.probs.clone();
    if cache.probs[label] > PROB_FLOOR {
        dlogits[label] -= 1.0;
    } else {
        dlogits.fill(0.0);
    }

    // dense
    for c in 0..dlogits.len() {
        grads.dense_w.row_mut(c).scaled_add(dlogits[c], &cache.pooled);
    }
    grads.dense_b += &dlogits;
    let dpooled = params.dense_w.t().dot(&dlogits);
    let mut dy = Array2::from_shape_fn((m, dpooled.len()), |(_, j)| dpooled[j] / m as f64);
    if let Some(mask) = &cache.out_mask {
        dy *= mask;
    }

    // BiLSTM stack, top to bottom
    for (l, layer) in params.lstm.iter().enumerate().rev() {
        let h = layer[0].hidden();
        let lc = &cache.layers[l];
        let dx_f = direction_backward(&layer[0], &lc[0], dy.slice(s![.., ..h]), &mut grads.lstm[l][0]);
        let dh_b = dy.slice(s![..;-1, h..]);
        let dx_b = direction_backward(&layer[1], &lc[1], dh_b, &mut grads.lstm[l][1]);
        dy = dx_f + dx_b.slice(s![..;-1, ..]);
    }

    // conv
    let mut dconv = dy;
    if let Some(mask) = &cache.conv_mask {
        dconv *= mask;
    }
    dconv.zip_mut_with(&cache.conv_pre, |d, &z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    grads.conv_b += &dconv.sum_axis(Axis(0));
    let pad = (cfg.kernel - 1) / 2;
    let mut dfused = Array2::<f64>::zeros(cache.fused.dim());
    for kk in 0..cfg.kernel {
        let off = kk as isize - pad as isize;
        let t0 = (-off).max(0) as usize;
        let t1 = (m as isize - off).min(m as isize).max(0) as usize;
        if t0 >= t1 {
            continue;
        }
        let (a, b) = ((t0 as isize + off) as usize, (t1 as isize + off) as usize);
        let dz = dconv.slice(s![t0..t1, ..]);
        let src = cache.fused.slice(s![a..b, ..]);
        let mut gw = grads.conv_w.index_axis_mut(Axis(0), kk);
        general_mat_mul(1.0, &dz.t(), &src, 1.0, &mut gw);
        let w = params.conv_w.index_axis(Axis(0), kk);
        let mut dsrc = dfused.slice_mut(s![a..b, ..]);
        general_mat_mul(1.0, &dz, &w, 1.0, &mut dsrc);
    }

    // fusion logits through the softmax Jacobian
    if fusion == FusionMode::Learned {
        let demb = dfused.slice(s![.., ..dim]);
        let dalpha: Array1<f64> = input.sources.iter().map(|src| (&demb * src).sum()).collect();
        let dot = cache.alpha.dot(&dalpha);
        for j in 0..dalpha.len() {
            grads.theta[j] += cache.alpha[j] * (dalpha[j] - dot);
        }
    }
}
