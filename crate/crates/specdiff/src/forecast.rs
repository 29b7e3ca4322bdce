//! Anticipatory forecaster: attention-based bidirectional LSTM with
//! autoregressive multi-step prediction, plus classical baselines.
//!
//! The network is implemented from scratch (manual backpropagation, verified
//! against central finite differences) so that training is deterministic per
//! seed and auditable. Parameters live in a single flat vector whose layout is
//! derived from the hyperparameters; this makes the optimizer, the gradient
//! check, and checkpoint serialization trivial.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ZplTrace;
use crate::peakfit::{self, SolverOptions};

/// Early-stopping minimum improvement on validation RMSE.
const MIN_DELTA: f64 = 1e-5;
/// Default early-stopping patience (epochs without improvement).
pub const DEFAULT_PATIENCE: usize = 20;
/// Default epoch budget.
pub const DEFAULT_MAX_EPOCHS: usize = 500;
/// Default autoregressive horizon (8 steps = 4 ms at 500 μs frames).
pub const DEFAULT_HORIZON: usize = 8;
/// Shortest effective window the self-adaptive mechanism may shrink to.
const MIN_ADAPTIVE_LEN: usize = 4;

// ---------------------------------------------------------------------------
// Hyperparameters and parameter layout
// ---------------------------------------------------------------------------

/// Forecaster hyperparameters {h, L, n, d, η}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Hidden units per direction.
    pub hidden_size: usize,
    /// Input window length L.
    pub sequence_length: usize,
    /// Stacked Bi-LSTM layers.
    pub num_layers: usize,
    /// Dropout probability on inter-layer activations, in [0, 1).
    pub dropout: f64,
    /// Learning rate η for the adaptive-moment optimizer.
    pub learning_rate: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_layers == 0 {
            return Err(Error::InvalidInput(
                "hidden_size and num_layers must be positive".into(),
            ));
        }
        if self.sequence_length < 2 {
            return Err(Error::InvalidInput("sequence_length must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput("dropout must be in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Offsets of one LSTM cell's tensors inside the flat parameter vector.
/// Gate order within the 4h rows is i, f, g, o.
#[derive(Debug, Clone)]
struct CellLayout {
    wx: usize, // 4h x in_dim
    wh: usize, // 4h x h
    b: usize,  // 4h
    in_dim: usize,
}

/// Flat-vector layout for the whole network: per layer a forward and a
/// backward cell, then additive attention (W_a: 2h x 4h, b_a: 2h, v: 2h),
/// then the dense head (w: 2h, b: 1).
#[derive(Debug, Clone)]
struct Layout {
    h: usize,
    cells: Vec<CellLayout>, // [layer * 2 + dir], dir 0 = forward, 1 = backward
    att_w: usize,
    att_b: usize,
    att_v: usize,
    head_w: usize,
    head_b: usize,
    total: usize,
}

impl Layout {
    fn new(hp: &Hyperparams) -> Self {
        let h = hp.hidden_size;
        let mut off = 0;
        let mut cells = Vec::with_capacity(2 * hp.num_layers);
        for layer in 0..hp.num_layers {
            let in_dim = if layer == 0 { 1 } else { 2 * h };
            for _dir in 0..2 {
                let wx = off;
                off += 4 * h * in_dim;
                let wh = off;
                off += 4 * h * h;
                let b = off;
                off += 4 * h;
                cells.push(CellLayout { wx, wh, b, in_dim });
            }
        }
        let da = 2 * h;
        let att_w = off;
        off += da * 4 * h;
        let att_b = off;
        off += da;
        let att_v = off;
        off += da;
        let head_w = off;
        off += 2 * h;
        let head_b = off;
        off += 1;
        Self {
            h,
            cells,
            att_w,
            att_b,
            att_v,
            head_w,
            head_b,
            total: off,
        }
    }
}

fn fill_uniform(rng: &mut ChaCha8Rng, dst: &mut [f64], fan_in: usize) {
    let s = 1.0 / (fan_in as f64).sqrt();
    for v in dst {
        *v = rng.random::<f64>() * 2.0 * s - s;
    }
}

/// Seeded initialization: uniform ±1/√fan_in, forget-gate bias 1.
fn init_params(hp: &Hyperparams, lay: &Layout, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let h = lay.h;
    let mut p = vec![0.0; lay.total];
    for cell in &lay.cells {
        fill_uniform(rng, &mut p[cell.wx..cell.wx + 4 * h * cell.in_dim], cell.in_dim);
        fill_uniform(rng, &mut p[cell.wh..cell.wh + 4 * h * h], h);
        for j in 0..h {
            p[cell.b + h + j] = 1.0; // forget gate
        }
    }
    let da = 2 * h;
    fill_uniform(rng, &mut p[lay.att_w..lay.att_w + da * 4 * h], 4 * h);
    fill_uniform(rng, &mut p[lay.att_v..lay.att_v + da], da);
    fill_uniform(rng, &mut p[lay.head_w..lay.head_w + 2 * h], 2 * h);
    let _ = hp;
    p
}

// ---------------------------------------------------------------------------
// Forward / backward passes
// ---------------------------------------------------------------------------

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-direction activations in *processing* order (the backward direction
/// processes the reversed window).
struct DirCache {
    i: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    o: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    tc: Vec<Vec<f64>>, // tanh(c)
    h: Vec<Vec<f64>>,
}

fn lstm_forward(p: &[f64], cl: &CellLayout, h: usize, xs: &[Vec<f64>]) -> DirCache {
    let t_len = xs.len();
    let mut cache = DirCache {
        i: Vec::with_capacity(t_len),
        f: Vec::with_capacity(t_len),
        g: Vec::with_capacity(t_len),
        o: Vec::with_capacity(t_len),
        c: Vec::with_capacity(t_len),
        tc: Vec::with_capacity(t_len),
        h: Vec::with_capacity(t_len),
    };
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut z = vec![0.0; 4 * h];
    for x in xs {
        for (r, zr) in z.iter_mut().enumerate() {
            let mut s = p[cl.b + r];
            let wx_row = cl.wx + r * cl.in_dim;
            for (k, &xv) in x.iter().enumerate() {
                s += p[wx_row + k] * xv;
            }
            let wh_row = cl.wh + r * h;
            for (k, &hv) in h_prev.iter().enumerate() {
                s += p[wh_row + k] * hv;
            }
            *zr = s;
        }
        let mut iv = vec![0.0; h];
        let mut fv = vec![0.0; h];
        let mut gv = vec![0.0; h];
        let mut ov = vec![0.0; h];
        let mut cv = vec![0.0; h];
        let mut tcv = vec![0.0; h];
        let mut hv = vec![0.0; h];
        for j in 0..h {
            iv[j] = sigmoid(z[j]);
            fv[j] = sigmoid(z[h + j]);
            gv[j] = z[2 * h + j].tanh();
            ov[j] = sigmoid(z[3 * h + j]);
            cv[j] = fv[j] * c_prev[j] + iv[j] * gv[j];
            tcv[j] = cv[j].tanh();
            hv[j] = ov[j] * tcv[j];
        }
        h_prev.copy_from_slice(&hv);
        c_prev.copy_from_slice(&cv);
        cache.i.push(iv);
        cache.f.push(fv);
        cache.g.push(gv);
        cache.o.push(ov);
        cache.c.push(cv);
        cache.tc.push(tcv);
        cache.h.push(hv);
    }
    cache
}

/// BPTT for one direction. `dh_ext[t]` is the gradient flowing into `h[t]`
/// from the layers above (processing order). Returns `dx[t]`.
fn lstm_backward(
    p: &[f64],
    cl: &CellLayout,
    h: usize,
    xs: &[Vec<f64>],
    cache: &DirCache,
    dh_ext: &[Vec<f64>],
    grads: &mut [f64],
) -> Vec<Vec<f64>> {
    let t_len = xs.len();
    let mut dxs = vec![vec![0.0; cl.in_dim]; t_len];
    let mut dh_carry = vec![0.0; h];
    let mut dc_carry = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let zeros = vec![0.0; h];
    for t in (0..t_len).rev() {
        let (i, f, g, o) = (&cache.i[t], &cache.f[t], &cache.g[t], &cache.o[t]);
        let tc = &cache.tc[t];
        let c_prev = if t > 0 { &cache.c[t - 1] } else { &zeros };
        let h_prev = if t > 0 { &cache.h[t - 1] } else { &zeros };
        for j in 0..h {
            let dh = dh_ext[t][j] + dh_carry[j];
            let d_o = dh * tc[j];
            let dc = dh * o[j] * (1.0 - tc[j] * tc[j]) + dc_carry[j];
            let di = dc * g[j];
            let dg = dc * i[j];
            let df = dc * c_prev[j];
            dc_carry[j] = dc * f[j];
            dz[j] = di * i[j] * (1.0 - i[j]);
            dz[h + j] = df * f[j] * (1.0 - f[j]);
            dz[2 * h + j] = dg * (1.0 - g[j] * g[j]);
            dz[3 * h + j] = d_o * o[j] * (1.0 - o[j]);
        }
        let x = &xs[t];
        let dx = &mut dxs[t];
        dh_carry.iter_mut().for_each(|v| *v = 0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            grads[cl.b + r] += dzr;
            let wx_row = cl.wx + r * cl.in_dim;
            for (k, &xv) in x.iter().enumerate() {
                grads[wx_row + k] += dzr * xv;
                dx[k] += p[wx_row + k] * dzr;
            }
            let wh_row = cl.wh + r * h;
            for k in 0..h {
                grads[wh_row + k] += dzr * h_prev[k];
                dh_carry[k] += p[wh_row + k] * dzr;
            }
        }
    }
    dxs
}

/// Everything the backward pass needs from one forward evaluation.
struct NetCache {
    t_len: usize,
    /// Inputs to each layer after dropout, time-major. `layer_inputs[0]` is
    /// the raw window; later entries are concatenated fwd/bwd outputs.
    layer_inputs: Vec<Vec<Vec<f64>>>,
    /// Inverted-dropout masks on the inputs of layers >= 1 (None in
    /// inference mode or when d = 0).
    masks: Vec<Option<Vec<Vec<f64>>>>,
    fwd: Vec<DirCache>,
    bwd: Vec<DirCache>,
    hcat: Vec<Vec<f64>>, // final-layer output per original time step, 2h
    query: Vec<f64>,     // [fwd final state ; bwd final state], 2h
    u: Vec<Vec<f64>>,    // tanh attention activations per step, 2h
    alpha: Vec<f64>,
    context: Vec<f64>,
    y: f64,
}

/// C_e = Σ α_i h_i.
fn context_from(alpha: &[f64], hs: &[Vec<f64>]) -> Vec<f64> {
    let dim = hs[0].len();
    let mut c = vec![0.0; dim];
    for (&a, h) in alpha.iter().zip(hs) {
        for (cv, hv) in c.iter_mut().zip(h) {
            *cv += a * hv;
        }
    }
    c
}

fn net_forward(
    p: &[f64],
    hp: &Hyperparams,
    lay: &Layout,
    window: &[f64],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> NetCache {
    let h = lay.h;
    let t_len = window.len();
    let n_layers = hp.num_layers;

    let mut layer_inputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_layers);
    let mut masks: Vec<Option<Vec<Vec<f64>>>> = Vec::with_capacity(n_layers);
    let mut fwd_caches = Vec::with_capacity(n_layers);
    let mut bwd_caches = Vec::with_capacity(n_layers);

    let mut current: Vec<Vec<f64>> = window.iter().map(|&v| vec![v]).collect();
    for layer in 0..n_layers {
        // Inter-layer dropout (inverted scaling), training mode only.
        let mask = match (&mut dropout_rng, layer > 0 && hp.dropout > 0.0) {
            (Some(rng), true) => {
                let keep = 1.0 - hp.dropout;
                let m: Vec<Vec<f64>> = (0..t_len)
                    .map(|_| {
                        (0..current[0].len())
                            .map(|_| {
                                if rng.random::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect();
                for (x, mrow) in current.iter_mut().zip(&m) {
                    for (xv, &mv) in x.iter_mut().zip(mrow) {
                        *xv *= mv;
                    }
                }
                Some(m)
            }
            _ => None,
        };
        masks.push(mask);

        let fwd = lstm_forward(p, &lay.cells[2 * layer], h, &current);
        let rev: Vec<Vec<f64>> = current.iter().rev().cloned().collect();
        let bwd = lstm_forward(p, &lay.cells[2 * layer + 1], h, &rev);

        let out: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                let mut v = Vec::with_capacity(2 * h);
                v.extend_from_slice(&fwd.h[t]);
                v.extend_from_slice(&bwd.h[t_len - 1 - t]);
                v
            })
            .collect();
        layer_inputs.push(current);
        fwd_caches.push(fwd);
        bwd_caches.push(bwd);
        current = out;
    }
    let hcat = current;

    // Query: final state of each direction (forward at the last step,
    // backward at the first original step).
    let mut query = Vec::with_capacity(2 * h);
    query.extend_from_slice(&fwd_caches[n_layers - 1].h[t_len - 1]);
    query.extend_from_slice(&bwd_caches[n_layers - 1].h[t_len - 1]);

    // Additive attention: score_i = v . tanh(W_a [h_i ; query] + b_a).
    let da = 2 * h;
    let mut scores = vec![0.0; t_len];
    let mut us = Vec::with_capacity(t_len);
    for (t, hi) in hcat.iter().enumerate() {
        let mut u = vec![0.0; da];
        for (r, ur) in u.iter_mut().enumerate() {
            let row = lay.att_w + r * 4 * h;
            let mut s = p[lay.att_b + r];
            for (k, &v) in hi.iter().enumerate() {
                s += p[row + k] * v;
            }
            for (k, &v) in query.iter().enumerate() {
                s += p[row + 2 * h + k] * v;
            }
            *ur = s.tanh();
        }
        scores[t] = u.iter().enumerate().map(|(r, &ur)| p[lay.att_v + r] * ur).sum();
        us.push(u);
    }
    let smax = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut alpha: Vec<f64> = scores.iter().map(|&s| (s - smax).exp()).collect();
    let z: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= z);
    debug_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let context = context_from(&alpha, &hcat);
    let mut y = p[lay.head_b];
    for (k, &cv) in context.iter().enumerate() {
        y += p[lay.head_w + k] * cv;
    }

    NetCache {
        t_len,
        layer_inputs,
        masks,
        fwd: fwd_caches,
        bwd: bwd_caches,
        hcat,
        query,
        u: us,
        alpha,
        context,
        y,
    }
}

/// Accumulate d(loss)/d(params) into `grads` given d(loss)/dy.
fn net_backward(p: &[f64], hp: &Hyperparams, lay: &Layout, cache: &NetCache, dy: f64, grads: &mut [f64]) {
    let h = lay.h;
    let da = 2 * h;
    let t_len = cache.t_len;
    let n_layers = hp.num_layers;

    // Dense head.
    let mut d_context = vec![0.0; 2 * h];
    for k in 0..2 * h {
        grads[lay.head_w + k] += dy * cache.context[k];
        d_context[k] = dy * p[lay.head_w + k];
    }
    grads[lay.head_b] += dy;

    // Attention: context = Σ α_i h_i.
    let mut d_alpha = vec![0.0; t_len];
    let mut d_h = vec![vec![0.0; 2 * h]; t_len];
    for t in 0..t_len {
        let hi = &cache.hcat[t];
        d_alpha[t] = d_context.iter().zip(hi).map(|(&d, &v)| d * v).sum();
        for k in 0..2 * h {
            d_h[t][k] += cache.alpha[t] * d_context[k];
        }
    }
    // Softmax.
    let dot: f64 = cache.alpha.iter().zip(&d_alpha).map(|(&a, &d)| a * d).sum();
    let d_scores: Vec<f64> = cache
        .alpha
        .iter()
        .zip(&d_alpha)
        .map(|(&a, &d)| a * (d - dot))
        .collect();
    // Scores through v, tanh, W_a.
    let mut d_query = vec![0.0; 2 * h];
    for t in 0..t_len {
        let ds = d_scores[t];
        let u = &cache.u[t];
        let hi = &cache.hcat[t];
        for r in 0..da {
            grads[lay.att_v + r] += ds * u[r];
            let dz = ds * p[lay.att_v + r] * (1.0 - u[r] * u[r]);
            let row = lay.att_w + r * 4 * h;
            grads[lay.att_b + r] += dz;
            for k in 0..2 * h {
                grads[row + k] += dz * hi[k];
                d_h[t][k] += p[row + k] * dz;
                grads[row + 2 * h + k] += dz * cache.query[k];
                d_query[k] += p[row + 2 * h + k] * dz;
            }
        }
    }

    // Split per-step and query gradients into the top layer's directions
    // (backward direction indexed in processing order).
    let mut d_fwd = vec![vec![0.0; h]; t_len];
    let mut d_bwd = vec![vec![0.0; h]; t_len];
    for t in 0..t_len {
        for j in 0..h {
            d_fwd[t][j] += d_h[t][j];
            d_bwd[t_len - 1 - t][j] += d_h[t][h + j];
        }
    }
    for j in 0..h {
        d_fwd[t_len - 1][j] += d_query[j];
        d_bwd[t_len - 1][j] += d_query[h + j];
    }

    // Walk the stack top-down.
    for layer in (0..n_layers).rev() {
        let xs = &cache.layer_inputs[layer];
        let xs_rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let dx_f = lstm_backward(p, &lay.cells[2 * layer], h, xs, &cache.fwd[layer], &d_fwd, grads);
        let dx_b = lstm_backward(
            p,
            &lay.cells[2 * layer + 1],
            h,
            &xs_rev,
            &cache.bwd[layer],
            &d_bwd,
            grads,
        );
        if layer == 0 {
            break;
        }
        // d(input of this layer) -> d(output of the layer below), through
        // the dropout mask, split into that layer's direction halves.
        d_fwd = vec![vec![0.0; h]; t_len];
        d_bwd = vec![vec![0.0; h]; t_len];
        for t in 0..t_len {
            let mut dx: Vec<f64> = dx_f[t].clone();
            for (dv, bv) in dx.iter_mut().zip(&dx_b[t_len - 1 - t]) {
                *dv += bv;
            }
            if let Some(mask) = &cache.masks[layer] {
                for (dv, &mv) in dx.iter_mut().zip(&mask[t]) {
                    *dv *= mv;
                }
            }
            for j in 0..h {
                d_fwd[t][j] += dx[j];
                d_bwd[t_len - 1 - t][j] += dx[h + j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adaptive-moment gradient descent (decay 0.9/0.999, epsilon 1e-8).
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= self.lr * mh / (vh.sqrt() + EPS);
        }
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Boundary indices of a train:val:test split over `n` points.
/// The triple must sum to 10 with every part >= 1 (e.g. 8:1:1).
pub fn split_bounds(n: usize, split: (u8, u8, u8)) -> Result<(usize, usize)> {
    let (tr, va, te) = split;
    if tr as u32 + va as u32 + te as u32 != 10 || tr == 0 || va == 0 || te == 0 {
        return Err(Error::InvalidInput(format!(
            "split {tr}:{va}:{te} must sum to 10 with every part >= 1"
        )));
    }
    let b0 = n * tr as usize / 10;
    let b1 = n * (tr as usize + va as usize) / 10;
    Ok((b0, b1))
}

/// Supervised pairs: the window `z[t-L..t]` predicts `z[t]`. A sample belongs
/// to the split segment containing its *target* index, so validation/test
/// windows may reach back into earlier data (no target leakage).
fn build_samples(n: usize, l: usize, lo: usize, hi: usize) -> Vec<(usize, usize)> {
    (l.max(lo)..hi.min(n)).map(|t| (t - l, t)).collect()
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

fn batch_rmse(p: &[f64], hp: &Hyperparams, lay: &Layout, z: &[f64], samples: &[(usize, usize)]) -> f64 {
    let mut se = 0.0;
    for &(s, t) in samples {
        let cache = net_forward(p, hp, lay, &z[s..t], None);
        let e = cache.y - z[t];
        se += e * e;
    }
    (se / samples.len() as f64).sqrt()
}

/// Training metadata recorded on the checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub best_val_rmse: f64,
    /// Std of the normalized training-split values; the reference
    /// volatility of the self-adaptive window mechanism.
    pub sigma_ref: f64,
    /// Full-batch training RMSE after each epoch's update.
    pub train_rmse_history: Vec<f64>,
}

/// A trained Bi-Attention-LSTM: flat parameters, normalization constants,
/// hyperparameters, and training metadata. Immutable after training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedForecaster {
    params: Vec<f64>,
    hp: Hyperparams,
    mu: f64,
    sigma: f64,
    train_meta: TrainMeta,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: TrainedForecaster,
}

/// Train on a trace with z-score normalization from the training split,
/// full-batch adaptive-moment descent on the MSE (reported as RMSE, which has
/// the same minimizers and a defined gradient at zero residual), and early
/// stopping on validation RMSE. Returns the best-validation checkpoint.
pub fn train(
    trace: &ZplTrace,
    hp: &Hyperparams,
    split: (u8, u8, u8),
    seed: u64,
    max_epochs: usize,
    patience: usize,
) -> Result<TrainedForecaster> {
    hp.validate()?;
    let vals = trace.values();
    let n = vals.len();
    let l = hp.sequence_length;
    if n < l + DEFAULT_HORIZON + 10 {
        return Err(Error::InvalidInput(format!(
            "trace length {n} too short for sequence_length {l} (need >= {})",
            l + DEFAULT_HORIZON + 10
        )));
    }
    let (b0, b1) = split_bounds(n, split)?;

    let train_vals = &vals[..b0];
    let mu = train_vals.iter().sum::<f64>() / b0 as f64;
    let sigma = population_std(train_vals);
    if !(sigma > 1e-12 * mu.abs().max(1.0)) {
        return Err(Error::InvalidInput(
            "degenerate training split: zero variance".into(),
        ));
    }
    let z: Vec<f64> = vals.iter().map(|&v| (v - mu) / sigma).collect();

    let train_samples = build_samples(n, l, 0, b0);
    let val_samples = build_samples(n, l, b0, b1);
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(Error::InvalidInput(
            "split leaves an empty training or validation set".into(),
        ));
    }

    let lay = Layout::new(hp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(hp, &lay, &mut rng);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut adam = Adam::new(lay.total, hp.learning_rate);

    let mut grads = vec![0.0; lay.total];
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut bad_epochs = 0usize;
    let mut history = Vec::new();
    let mut epochs_run = 0usize;

    for epoch in 0..max_epochs {
        epochs_run = epoch + 1;
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut se = 0.0;
        let inv_n = 1.0 / train_samples.len() as f64;
        for &(s, t) in &train_samples {
            let dr = if hp.dropout > 0.0 && hp.num_layers > 1 {
                Some(&mut dropout_rng)
            } else {
                None
            };
            let cache = net_forward(&params, hp, &lay, &z[s..t], dr);
            let e = cache.y - z[t];
            se += e * e;
            net_backward(&params, hp, &lay, &cache, 2.0 * e * inv_n, &mut grads);
        }
        let train_rmse = (se * inv_n).sqrt();
        if !train_rmse.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite training loss at epoch {epoch}"
            )));
        }
        adam.step(&mut params, &grads);
        history.push(train_rmse);

        let val_rmse = batch_rmse(&params, hp, &lay, &z, &val_samples);
        if !val_rmse.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        if val_rmse < best_val - MIN_DELTA {
            best_val = val_rmse;
            best_params.copy_from_slice(&params);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= patience {
                break;
            }
        }
    }

    let sigma_ref = population_std(&z[..b0]);
    Ok(TrainedForecaster {
        params: best_params,
        hp: *hp,
        mu,
        sigma,
        train_meta: TrainMeta {
            epochs_run,
            best_val_rmse: best_val,
            sigma_ref,
            train_rmse_history: history,
        },
    })
}

impl TrainedForecaster {
    pub fn hp(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn train_meta(&self) -> &TrainMeta {
        &self.train_meta
    }

    /// (μ_orig, σ_orig) of the z-score normalization.
    pub fn norm(&self) -> (f64, f64) {
        (self.mu, self.sigma)
    }

    pub fn normalize(&self, nm: f64) -> f64 {
        (nm - self.mu) / self.sigma
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.sigma + self.mu
    }

    /// One inference step on a normalized window of length 2..=L.
    /// Returns the normalized prediction and the attention weights
    /// (nonnegative, summing to 1, one per window element). Dropout is
    /// disabled, so repeated calls are bit-identical.
    pub fn forward(&self, window: &[f64]) -> Result<(f64, Vec<f64>)> {
        if window.len() < 2 || window.len() > self.hp.sequence_length {
            return Err(Error::InvalidInput(format!(
                "window length {} outside 2..={}",
                window.len(),
                self.hp.sequence_length
            )));
        }
        if window.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite window value".into()));
        }
        let lay = Layout::new(&self.hp);
        let cache = net_forward(&self.params, &self.hp, &lay, window, None);
        Ok((cache.y, cache.alpha))
    }

    /// Autoregressive multi-step forecast: each prediction is appended to the
    /// window for the next step. With `adapt` on, the effective window length
    /// is `clamp(round(L σ_ref / σ_recent), 4, L)` where σ_recent is the std
    /// of the last L normalized history points — the window shrinks when
    /// recent volatility exceeds the training-split reference.
    pub fn autoregressive_forecast(
        &self,
        history: &ZplTrace,
        horizon: usize,
        adapt: bool,
    ) -> Result<ForecastResult> {
        if horizon < 1 {
            return Err(Error::InvalidInput("horizon must be >= 1".into()));
        }
        let l = self.hp.sequence_length;
        if history.len() < l {
            return Err(Error::InvalidInput(format!(
                "history length {} shorter than sequence_length {l}",
                history.len()
            )));
        }
        let mut buf: Vec<f64> = history.values().iter().map(|&v| self.normalize(v)).collect();

        let l_eff = if adapt {
            let recent = &buf[buf.len() - l..];
            let sigma_recent = population_std(recent);
            if sigma_recent > self.train_meta.sigma_ref {
                let raw = (l as f64 * self.train_meta.sigma_ref / sigma_recent).round() as usize;
                raw.clamp(MIN_ADAPTIVE_LEN.min(l), l)
            } else {
                l
            }
        } else {
            l
        };

        let step = history.step_s().ok_or_else(|| {
            Error::InvalidInput("history has no uniform sampling step".into())
        })?;
        let t_last = *history.timestamps().last().unwrap();

        let mut predictions_nm = Vec::with_capacity(horizon);
        let mut t_s = Vec::with_capacity(horizon);
        let mut attention_maps = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let window = &buf[buf.len() - l_eff..];
            let (y, alpha) = self.forward(window)?;
            buf.push(y);
            predictions_nm.push(self.denormalize(y));
            t_s.push(t_last + (k + 1) as f64 * step);
            attention_maps.push(alpha);
        }
        Ok(ForecastResult {
            model_kind: ModelKind::BiAttnLstm,
            horizon,
            t_s,
            predictions_nm,
            attention_maps,
        })
    }

    /// One-step-ahead RMSE (normalized units) over the samples whose target
    /// falls in the given split segment.
    pub fn one_step_rmse(&self, trace: &ZplTrace, split: (u8, u8, u8), segment: SplitPart) -> Result<f64> {
        let vals = trace.values();
        let n = vals.len();
        let (b0, b1) = split_bounds(n, split)?;
        let (lo, hi) = match segment {
            SplitPart::Train => (0, b0),
            SplitPart::Val => (b0, b1),
            SplitPart::Test => (b1, n),
        };
        let samples = build_samples(n, self.hp.sequence_length, lo, hi);
        if samples.is_empty() {
            return Err(Error::InvalidInput("segment has no samples".into()));
        }
        let z: Vec<f64> = vals.iter().map(|&v| self.normalize(v)).collect();
        let lay = Layout::new(&self.hp);
        Ok(batch_rmse(&self.params, &self.hp, &lay, &z, &samples))
    }

    /// Serialize to a versioned JSON checkpoint.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })
        .map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        let model = ckpt.model;
        model.hp.validate()?;
        if model.params.len() != Layout::new(&model.hp).total {
            return Err(Error::Serialization(
                "parameter count inconsistent with hyperparameters".into(),
            ));
        }
        if !(model.sigma > 0.0) {
            return Err(Error::Serialization("non-positive sigma".into()));
        }
        Ok(model)
    }
}

/// Which segment of a train:val:test split to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

/// Compare analytic gradients against central finite differences (default
/// step 1e-5) on a fixed random batch. Returns the max relative error over
/// `n_params_sampled` randomly chosen parameters. Intended for small models
/// (h <= 8, L <= 6).
pub fn gradient_check(hp: &Hyperparams, seed: u64, n_params_sampled: usize) -> Result<f64> {
    gradient_check_with_step(hp, seed, n_params_sampled, 1e-5)
}

pub fn gradient_check_with_step(
    hp: &Hyperparams,
    seed: u64,
    n_params_sampled: usize,
    step: f64,
) -> Result<f64> {
    hp.validate()?;
    let lay = Layout::new(hp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params(hp, &lay, &mut rng);

    let n_batch = 8;
    let l = hp.sequence_length;
    let windows: Vec<Vec<f64>> = (0..n_batch)
        .map(|_| (0..l).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let targets: Vec<f64> = (0..n_batch).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

    let loss = |p: &[f64]| -> f64 {
        let mut se = 0.0;
        for (w, &t) in windows.iter().zip(&targets) {
            let c = net_forward(p, hp, &lay, w, None);
            se += (c.y - t) * (c.y - t);
        }
        se / n_batch as f64
    };

    let mut analytic = vec![0.0; lay.total];
    let inv_n = 1.0 / n_batch as f64;
    for (w, &t) in windows.iter().zip(&targets) {
        let c = net_forward(&params, hp, &lay, w, None);
        net_backward(&params, hp, &lay, &c, 2.0 * (c.y - t) * inv_n, &mut analytic);
    }

    let count = n_params_sampled.min(lay.total);
    let idx = rand::seq::index::sample(&mut rng, lay.total, count);
    let mut p = params.clone();
    let mut max_rel = 0.0f64;
    // Floor the denominator at a small fraction of the gradient scale so
    // that finite-difference roundoff on near-zero components does not
    // dominate the relative error.
    let gscale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-3);
    for j in idx {
        let orig = p[j];
        p[j] = orig + step;
        let up = loss(&p);
        p[j] = orig - step;
        let dn = loss(&p);
        p[j] = orig;
        let fd = (up - dn) / (2.0 * step);
        let rel = (analytic[j] - fd).abs() / analytic[j].abs().max(fd.abs()).max(1e-4 * gscale);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

// ---------------------------------------------------------------------------
// Forecast results and baselines
// ---------------------------------------------------------------------------

/// Model family of a forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BiAttnLstm,
    Linear,
    Poly5,
    Sine,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::BiAttnLstm => "bi-attn-lstm",
            ModelKind::Linear => "linear",
            ModelKind::Poly5 => "poly5",
            ModelKind::Sine => "sine",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bi-attn-lstm" => Ok(ModelKind::BiAttnLstm),
            "linear" => Ok(ModelKind::Linear),
            "poly5" => Ok(ModelKind::Poly5),
            "sine" => Ok(ModelKind::Sine),
            other => Err(Error::InvalidInput(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Multi-step forecast output in physical units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastResult {
    pub model_kind: ModelKind,
    pub horizon: usize,
    /// Absolute timestamps of the predicted steps.
    pub t_s: Vec<f64>,
    pub predictions_nm: Vec<f64>,
    /// Per-step attention weight vectors (empty for baselines).
    pub attention_maps: Vec<Vec<f64>>,
}

/// Fit `a sin(ω t + φ) + c` by bounded least squares with an FFT-seeded ω.
pub fn fit_sine(t: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(Error::InvalidInput(
            "sine fit needs at least 4 (t, y) pairs".into(),
        ));
    }
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let std = population_std(y);

    // Seed ω from the dominant periodogram bin of the demeaned series.
    let mut buf: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let kmax = (1..n / 2)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .unwrap_or(1);
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    let omega0 = 2.0 * std::f64::consts::PI * kmax as f64 / (n as f64 * dt);

    let init = [std * std::f64::consts::SQRT_2, omega0, 0.0, mean];
    let lower = [
        f64::NEG_INFINITY,
        omega0 * 1e-3,
        -2.0 * std::f64::consts::PI,
        f64::NEG_INFINITY,
    ];
    let upper = [
        f64::INFINITY,
        std::f64::consts::PI / dt,
        2.0 * std::f64::consts::PI,
        f64::INFINITY,
    ];
    let model = |p: &[f64], x: f64| p[0] * (p[1] * x + p[2]).sin() + p[3];
    let opts = SolverOptions {
        max_iter: 500,
        gtol: 1e-12,
    };
    let fit = peakfit::least_squares_fit(model, &init, &lower, &upper, t, y, &opts)?;
    Ok([fit.params[0], fit.params[1], fit.params[2], fit.params[3]])
}

/// Classical baseline forecasts: least-squares fit on the whole history,
/// extrapolated `horizon` steps.
pub fn baseline_forecast(kind: ModelKind, history: &ZplTrace, horizon: usize) -> Result<ForecastResult> {
    if horizon < 1 {
        return Err(Error::InvalidInput("horizon must be >= 1".into()));
    }
    let n = history.len();
    let min_len = match kind {
        ModelKind::Linear => 2,
        ModelKind::Poly5 => 6,
        ModelKind::Sine => 4,
        ModelKind::BiAttnLstm => {
            return Err(Error::InvalidInput(
                "bi-attn-lstm requires a trained model; use autoregressive_forecast".into(),
            ))
        }
    };
    if n < min_len {
        return Err(Error::InvalidInput(format!(
            "{} baseline needs at least {min_len} points, got {n}",
            kind.as_str()
        )));
    }
    // Fit against the sample index for conditioning; timestamps are uniform.
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y = history.values();
    let future: Vec<f64> = (0..horizon).map(|k| (n + k) as f64).collect();

    let predictions_nm: Vec<f64> = match kind {
        ModelKind::Linear => {
            let (slope, intercept, _, _) = linalg::ols_line(&x, y);
            future.iter().map(|&xf| slope * xf + intercept).collect()
        }
        ModelKind::Poly5 => {
            let coeffs = linalg::polyfit(&x, y, 5)?;
            future.iter().map(|&xf| linalg::polyval(&coeffs, xf)).collect()
        }
        ModelKind::Sine => {
            let [a, w, phi, c] = fit_sine(&x, y)?;
            future.iter().map(|&xf| a * (w * xf + phi).sin() + c).collect()
        }
        ModelKind::BiAttnLstm => unreachable!(),
    };

    let step = history
        .step_s()
        .ok_or_else(|| Error::InvalidInput("history has no uniform sampling step".into()))?;
    let t_last = *history.timestamps().last().unwrap();
    let t_s = (0..horizon).map(|k| t_last + (k + 1) as f64 * step).collect();

    Ok(ForecastResult {
        model_kind: kind,
        horizon,
        t_s,
        predictions_nm,
        attention_maps: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Hyperparameter search
// ---------------------------------------------------------------------------

/// Random-search space; integer ranges inclusive, learning rate log-uniform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSpace {
    pub hidden_size: (usize, usize),
    pub sequence_length: (usize, usize),
    pub num_layers: (usize, usize),
    pub dropout: (f64, f64),
    pub log10_learning_rate: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_size: (8, 128),
            sequence_length: (8, 64),
            num_layers: (1, 3),
            dropout: (0.0, 0.5),
            log10_learning_rate: (-4.0, -2.0),
        }
    }
}

/// One entry of the search log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchTrial {
    pub trial: usize,
    pub hp: Hyperparams,
    pub seed: u64,
    /// Best validation RMSE of the trial; infinite when diverged.
    pub val_rmse: f64,
    pub diverged: bool,
}

/// Algorithm-1-style random hyperparameter search: `trials` seeded
/// sample→train→validate rounds; returns the model with minimum validation
/// loss together with the full search log. Deterministic per seed.
pub fn hyperparameter_search(
    trace: &ZplTrace,
    space: &SearchSpace,
    trials: usize,
    split: (u8, u8, u8),
    seed: u64,
    max_epochs: usize,
    patience: usize,
) -> Result<(TrainedForecaster, Vec<SearchTrial>)> {
    if trials < 1 {
        return Err(Error::InvalidInput("need at least 1 trial".into()));
    }
    // Longest window the trace can support.
    let l_cap = trace.len().saturating_sub(DEFAULT_HORIZON + 10);
    if l_cap < space.sequence_length.0.max(2) {
        return Err(Error::InvalidInput("trace too short for the search space".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = Vec::with_capacity(trials);
    let mut best: Option<(f64, TrainedForecaster)> = None;

    for trial in 0..trials {
        let hp = Hyperparams {
            hidden_size: rng.random_range(space.hidden_size.0..=space.hidden_size.1),
            sequence_length: rng
                .random_range(space.sequence_length.0..=space.sequence_length.1.min(l_cap)),
            num_layers: rng.random_range(space.num_layers.0..=space.num_layers.1),
            dropout: rng.random_range(space.dropout.0..=space.dropout.1),
            learning_rate: 10f64.powf(
                rng.random_range(space.log10_learning_rate.0..=space.log10_learning_rate.1),
            ),
        };
        let trial_seed: u64 = rng.random();
        match train(trace, &hp, split, trial_seed, max_epochs, patience) {
            Ok(model) => {
                let val = model.train_meta.best_val_rmse;
                log.push(SearchTrial {
                    trial,
                    hp,
                    seed: trial_seed,
                    val_rmse: val,
                    diverged: false,
                });
                if best.as_ref().is_none_or(|(b, _)| val < *b) {
                    best = Some((val, model));
                }
            }
            Err(Error::Diverged(_)) => {
                log.push(SearchTrial {
                    trial,
                    hp,
                    seed: trial_seed,
                    val_rmse: f64::INFINITY,
                    diverged: true,
                });
            }
            Err(e) => return Err(e),
        }
    }

    match best {
        Some((_, model)) => Ok((model, log)),
        None => Err(Error::Diverged("all search trials diverged".into())),
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
