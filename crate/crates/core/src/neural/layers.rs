//! Per-sample layer kernels on flat slices. Every `*_backward` accumulates
//! (`+=`) into its gradient outputs.

use crate::linear::sigmoid;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += W x`, `W` is `rows × cols`.
pub(crate) fn gemv_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `dx += Wᵀ dy`.
pub(crate) fn gemv_t_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (r, &g) in dy.iter().enumerate() {
        if g != 0.0 {
            let row = &w[r * cols..(r + 1) * cols];
            dx.iter_mut().zip(row).for_each(|(d, wv)| *d += wv * g);
        }
    }
}

/// `dW += dy xᵀ`.
pub(crate) fn outer_acc(dw: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (r, &g) in dy.iter().enumerate() {
        if g != 0.0 {
            let row = &mut dw[r * cols..(r + 1) * cols];
            row.iter_mut().zip(x).for_each(|(d, xv)| *d += g * xv);
        }
    }
}

pub(crate) struct LstmWeights<'a> {
    /// `4H × E`, gate blocks in order input, forget, output, candidate.
    pub w: &'a [f64],
    /// `4H × H`.
    pub u: &'a [f64],
    /// `4H`.
    pub b: &'a [f64],
    pub hidden: usize,
    pub input: usize,
}

pub(crate) struct LstmGrads<'a> {
    pub w: &'a mut [f64],
    pub u: &'a mut [f64],
    pub b: &'a mut [f64],
}

/// Activations of one direction over `steps` inputs, in processing order.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// `steps × 4H`, post-activation gates (i, f, o, g).
    pub gates: Vec<f64>,
    /// `steps × H`.
    pub c: Vec<f64>,
    /// `steps × H`.
    pub h: Vec<f64>,
    pub steps: usize,
}

impl LstmCache {
    pub fn h_at(&self, t: usize, hidden: usize) -> &[f64] {
        &self.h[t * hidden..(t + 1) * hidden]
    }

    /// Last hidden state, zeros for an empty sequence.
    pub fn last_h(&self, hidden: usize) -> Vec<f64> {
        if self.steps == 0 {
            vec![0.0; hidden]
        } else {
            self.h_at(self.steps - 1, hidden).to_vec()
        }
    }
}

/// `xs` is `steps × E` in processing order.
pub(crate) fn lstm_forward(p: &LstmWeights<'_>, xs: &[f64], steps: usize) -> LstmCache {
    let (hd, e) = (p.hidden, p.input);
    let mut gates = vec![0.0; steps * 4 * hd];
    let mut c = vec![0.0; steps * hd];
    let mut h = vec![0.0; steps * hd];
    let zero = vec![0.0; hd];
    for t in 0..steps {
        let z = &mut gates[t * 4 * hd..(t + 1) * 4 * hd];
        z.copy_from_slice(p.b);
        gemv_acc(p.w, e, &xs[t * e..(t + 1) * e], z);
        let (h_prev, c_prev): (&[f64], &[f64]) = if t == 0 {
            (&zero, &zero)
        } else {
            (&h[(t - 1) * hd..t * hd], &c[(t - 1) * hd..t * hd])
        };
        gemv_acc(p.u, hd, h_prev, z);
        let (gates, cand) = z.split_at_mut(3 * hd);
        gates.iter_mut().for_each(|v| *v = sigmoid(*v));
        cand.iter_mut().for_each(|v| *v = v.tanh());
        let mut c_t = vec![0.0; hd];
        let mut h_t = vec![0.0; hd];
        for j in 0..hd {
            let (i_g, f_g, o_g, g_g) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
            c_t[j] = f_g * c_prev[j] + i_g * g_g;
            h_t[j] = o_g * c_t[j].tanh();
        }
        c[t * hd..(t + 1) * hd].copy_from_slice(&c_t);
        h[t * hd..(t + 1) * hd].copy_from_slice(&h_t);
    }
    LstmCache { gates, c, h, steps }
}

/// Backpropagation through time. `dh` is `steps × H` (gradient arriving at
/// each hidden state from above); returns `steps × E` input gradients.
pub(crate) fn lstm_backward(
    p: &LstmWeights<'_>,
    cache: &LstmCache,
    xs: &[f64],
    dh: &[f64],
    g: &mut LstmGrads<'_>,
) -> Vec<f64> {
    let (hd, e) = (p.hidden, p.input);
    let steps = cache.steps;
    let mut dx = vec![0.0; steps * e];
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    let zero = vec![0.0; hd];
    for t in (0..steps).rev() {
        let z = &cache.gates[t * 4 * hd..(t + 1) * 4 * hd];
        let c_t = &cache.c[t * hd..(t + 1) * hd];
        let (h_prev, c_prev): (&[f64], &[f64]) = if t == 0 {
            (&zero, &zero)
        } else {
            (&cache.h[(t - 1) * hd..t * hd], &cache.c[(t - 1) * hd..t * hd])
        };
        for j in 0..hd {
            let (i_g, f_g, o_g, g_g) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
            let dh_j = dh[t * hd + j] + dh_next[j];
            let tc = c_t[j].tanh();
            let d_o = dh_j * tc;
            let dc = dc_next[j] + dh_j * o_g * (1.0 - tc * tc);
            let d_i = dc * g_g;
            let d_g = dc * i_g;
            let d_f = dc * c_prev[j];
            dc_next[j] = dc * f_g;
            dz[j] = d_i * i_g * (1.0 - i_g);
            dz[hd + j] = d_f * f_g * (1.0 - f_g);
            dz[2 * hd + j] = d_o * o_g * (1.0 - o_g);
            dz[3 * hd + j] = d_g * (1.0 - g_g * g_g);
        }
        let x_t = &xs[t * e..(t + 1) * e];
        outer_acc(g.w, e, &dz, x_t);
        outer_acc(g.u, hd, &dz, h_prev);
        g.b.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        gemv_t_acc(p.w, e, &dz, &mut dx[t * e..(t + 1) * e]);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        gemv_t_acc(p.u, hd, &dz, &mut dh_next);
    }
    dx
}

/// Attention pooling over `steps` rows of width `d`:
/// `M = tanh(H)`, `α = softmax(w·M_t)`, `r = Σ α_t H_t`, output `tanh(r)`.
#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    pub alpha: Vec<f64>,
    pub r_tanh: Vec<f64>,
}

pub(crate) fn attention_forward(w: &[f64], hs: &[f64], steps: usize, d: usize) -> AttentionCache {
    let mut alpha = vec![0.0; steps];
    let mut r = vec![0.0; d];
    if steps > 0 {
        let scores: Vec<f64> = (0..steps)
            .map(|t| {
                hs[t * d..(t + 1) * d]
                    .iter()
                    .zip(w)
                    .map(|(h, wv)| h.tanh() * wv)
                    .sum()
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (a, s) in alpha.iter_mut().zip(&scores) {
            *a = (s - max).exp();
            total += *a;
        }
        alpha.iter_mut().for_each(|a| *a /= total);
        for t in 0..steps {
            let h_t = &hs[t * d..(t + 1) * d];
            r.iter_mut().zip(h_t).for_each(|(rv, hv)| *rv += alpha[t] * hv);
        }
    }
    AttentionCache {
        alpha,
        r_tanh: r.iter().map(|v| v.tanh()).collect(),
    }
}

/// Returns `dH` (`steps × d`); accumulates into `dw`.
pub(crate) fn attention_backward(
    w: &[f64],
    hs: &[f64],
    steps: usize,
    d: usize,
    cache: &AttentionCache,
    d_out: &[f64],
    dw: &mut [f64],
) -> Vec<f64> {
    let mut dhs = vec![0.0; steps * d];
    if steps == 0 {
        return dhs;
    }
    let dr: Vec<f64> = d_out
        .iter()
        .zip(&cache.r_tanh)
        .map(|(g, t)| g * (1.0 - t * t))
        .collect();
    let d_alpha: Vec<f64> = (0..steps).map(|t| dot(&dr, &hs[t * d..(t + 1) * d])).collect();
    let weighted: f64 = cache.alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
    for t in 0..steps {
        let a = cache.alpha[t];
        let ds = a * (d_alpha[t] - weighted);
        let h_t = &hs[t * d..(t + 1) * d];
        let dh_t = &mut dhs[t * d..(t + 1) * d];
        for j in 0..d {
            let m = h_t[j].tanh();
            dw[j] += ds * m;
            dh_t[j] += a * dr[j] + ds * w[j] * (1.0 - m * m);
        }
    }
    dhs
}

/// One convolution width: `filters × (width·E)` weights, max-pooled over time
/// after ReLU. Windows start at `0..max(len − width + 1, 1)`; positions past
/// the sequence contribute zero vectors. An empty sequence pools to zero.
#[derive(Debug, Clone)]
pub(crate) struct ConvCache {
    /// Window start of the maximum pre-activation per filter.
    pub argmax: Vec<usize>,
    /// Maximum pre-activation per filter (unused when `len == 0`).
    pub max_pre: Vec<f64>,
    pub pooled: Vec<f64>,
}

pub(crate) fn window(xs: &[f64], len: usize, e: usize, start: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width * e];
    for k in 0..width {
        let pos = start + k;
        if pos < len {
            v[k * e..(k + 1) * e].copy_from_slice(&xs[pos * e..(pos + 1) * e]);
        }
    }
    v
}

pub(crate) fn n_windows(len: usize, width: usize) -> usize {
    if len == 0 {
        0
    } else {
        (len + 1).saturating_sub(width).max(1)
    }
}

pub(crate) fn conv_forward(
    w: &[f64],
    b: &[f64],
    xs: &[f64],
    len: usize,
    e: usize,
    width: usize,
) -> ConvCache {
    let filters = b.len();
    let cols = width * e;
    let mut argmax = vec![0; filters];
    let mut max_pre = vec![f64::NEG_INFINITY; filters];
    let nw = n_windows(len, width);
    let mut pre = vec![0.0; filters];
    for s in 0..nw {
        let x = window(xs, len, e, s, width);
        pre.copy_from_slice(b);
        gemv_acc(w, cols, &x, &mut pre);
        for f in 0..filters {
            if pre[f] > max_pre[f] {
                max_pre[f] = pre[f];
                argmax[f] = s;
            }
        }
    }
    let pooled = if nw == 0 {
        vec![0.0; filters]
    } else {
        max_pre.iter().map(|v| v.max(0.0)).collect()
    };
    ConvCache {
        argmax,
        max_pre,
        pooled,
    }
}

/// Accumulates weight/bias grads; returns `len × E` input gradients.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    w: &[f64],
    xs: &[f64],
    len: usize,
    e: usize,
    width: usize,
    cache: &ConvCache,
    d_pooled: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let cols = width * e;
    let mut dxs = vec![0.0; len * e];
    if len == 0 {
        return dxs;
    }
    for (f, &g) in d_pooled.iter().enumerate() {
        if g == 0.0 || cache.max_pre[f] <= 0.0 {
            continue;
        }
        let s = cache.argmax[f];
        let x = window(xs, len, e, s, width);
        dw[f * cols..(f + 1) * cols]
            .iter_mut()
            .zip(&x)
            .for_each(|(d, xv)| *d += g * xv);
        db[f] += g;
        let row = &w[f * cols..(f + 1) * cols];
        for k in 0..width {
            let pos = s + k;
            if pos < len {
                for j in 0..e {
                    dxs[pos * e + j] += g * row[k * e + j];
                }
            }
        }
    }
    dxs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_lstm_step_matches_hand_evaluation() {
        // hidden 1, input 1; gate pre-activations are w*x + b
        let w = [0.5, -0.3, 0.8, 0.2];
        let u = [0.0; 4];
        let b = [0.1, 0.2, -0.1, 0.05];
        let x = 2.0;
        let p = LstmWeights { w: &w, u: &u, b: &b, hidden: 1, input: 1 };
        let cache = lstm_forward(&p, &[x], 1);
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.1);
        let g = (0.2 * x + 0.05f64).tanh();
        let o = s(0.8 * x - 0.1);
        let c = i * g;
        let h = o * c.tanh();
        assert!((cache.c[0] - c).abs() < 1e-15);
        assert!((cache.h[0] - h).abs() < 1e-15);
    }

    #[test]
    fn attention_uniform_for_identical_steps() {
        let hs = [0.3, -0.2, 0.3, -0.2, 0.3, -0.2];
        let c = attention_forward(&[0.7, 1.1], &hs, 3, 2);
        for a in &c.alpha {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
        let c = attention_forward(&[0.7, 1.1], &hs[..2], 1, 2);
        assert_eq!(c.alpha, vec![1.0]);
    }

    #[test]
    fn windows_cover_short_sequences() {
        assert_eq!(n_windows(0, 3), 0);
        assert_eq!(n_windows(2, 3), 1);
        assert_eq!(n_windows(5, 3), 3);
        let xs = [1.0, 2.0];
        assert_eq!(window(&xs, 2, 1, 1, 3), vec![2.0, 0.0, 0.0]);
    }
}
