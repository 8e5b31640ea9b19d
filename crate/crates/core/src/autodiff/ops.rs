//! Forward and backward kernels. Convolutions and the LSTM lower to GEMM
//! (im2col for convolutions); everything else is straightforward loops.
//!
//! Layout conventions: feature maps are `[N, C, H, W]`, sequences are
//! `[N, T, F]`, dense activations are `[N, F]`, all row-major.

use super::tensor::{Scalar, Tensor};
use ndarray::{ArrayView2, ArrayViewMut2, ShapeBuilder};

pub(crate) fn gemm<S: Scalar>(
    a: ArrayView2<'_, S>,
    b: ArrayView2<'_, S>,
    beta: S,
    c: &mut ArrayViewMut2<'_, S>,
) {
    ndarray::linalg::general_mat_mul(S::one(), &a, &b, beta, c);
}

// ---------------------------------------------------------------- conv2d

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub pl: usize,
    pub pr: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    pub fn new(x_shape: &[usize], w_shape: &[usize], pl: usize, pr: usize) -> Self {
        let (n, cin, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
        let (cout, kh, kw) = (w_shape[0], w_shape[2], w_shape[3]);
        debug_assert_eq!(cin, w_shape[1]);
        ConvDims {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            pl,
            pr,
            oh: h - kh + 1,
            ow: w + pl + pr - kw + 1,
        }
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn m(&self) -> usize {
        self.n * self.oh * self.ow
    }
}

/// Patches as rows: `cols[m, (ci kh + dh) kw + dw]`, with zero padding on
/// the W axis only.
fn im2col<S: Scalar>(x: &[S], d: &ConvDims) -> Vec<S> {
    let (k, m) = (d.k(), d.m());
    let mut cols = vec![S::zero(); m * k];
    for n in 0..d.n {
        for oh in 0..d.oh {
            for ow in 0..d.ow {
                let col_base = ((n * d.oh + oh) * d.ow + ow) * k;
                for ci in 0..d.cin {
                    for dh in 0..d.kh {
                        let src_row = ((n * d.cin + ci) * d.h + oh + dh) * d.w;
                        let dst = col_base + (ci * d.kh + dh) * d.kw;
                        let lo = d.pl.saturating_sub(ow);
                        let hi = (d.w + d.pl - ow).min(d.kw);
                        if lo < hi {
                            let src = src_row + ow + lo - d.pl;
                            cols[dst + lo..dst + hi]
                                .copy_from_slice(&x[src..src + (hi - lo)]);
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add<S: Scalar>(dcols: &[S], d: &ConvDims, dx: &mut [S]) {
    let k = d.k();
    for n in 0..d.n {
        for oh in 0..d.oh {
            for ow in 0..d.ow {
                let col_base = ((n * d.oh + oh) * d.ow + ow) * k;
                for ci in 0..d.cin {
                    for dh in 0..d.kh {
                        let dst_row = ((n * d.cin + ci) * d.h + oh + dh) * d.w;
                        let src = col_base + (ci * d.kh + dh) * d.kw;
                        let lo = d.pl.saturating_sub(ow);
                        let hi = (d.w + d.pl - ow).min(d.kw);
                        for dw in lo..hi {
                            dx[dst_row + ow + dw - d.pl] =
                                dx[dst_row + ow + dw - d.pl] + dcols[src + dw];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    pl: usize,
    pr: usize,
) -> Tensor<S> {
    let d = ConvDims::new(x.shape(), weight.shape(), pl, pr);
    let (k, m) = (d.k(), d.m());
    let cols = im2col(x.data(), &d);
    let cols_v = ArrayView2::from_shape((m, k), &cols).unwrap();
    let w_v = weight.view2(d.cout, k);

    // yt[m, co] = cols . W^T
    let mut yt = vec![S::zero(); m * d.cout];
    gemm(cols_v, w_v.t(), S::zero(), &mut ArrayViewMut2::from_shape((m, d.cout), &mut yt).unwrap());

    let mut out = Tensor::zeros(&[d.n, d.cout, d.oh, d.ow]);
    let out_data = out.data_mut();
    let b = bias.data();
    let plane = d.oh * d.ow;
    for mi in 0..m {
        let n = mi / plane;
        let sp = mi % plane;
        let row = &yt[mi * d.cout..(mi + 1) * d.cout];
        for (co, &v) in row.iter().enumerate() {
            out_data[(n * d.cout + co) * plane + sp] = v + b[co];
        }
    }
    out
}

pub(crate) fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    dy: &Tensor<S>,
    pl: usize,
    pr: usize,
    dw_acc: &mut Tensor<S>,
    db_acc: &mut Tensor<S>,
) -> Tensor<S> {
    let d = ConvDims::new(x.shape(), weight.shape(), pl, pr);
    let (k, m) = (d.k(), d.m());
    let plane = d.oh * d.ow;

    // Scatter dY back into [M, Cout] order.
    let mut dyt = vec![S::zero(); m * d.cout];
    let dy_data = dy.data();
    for mi in 0..m {
        let n = mi / plane;
        let sp = mi % plane;
        for co in 0..d.cout {
            dyt[mi * d.cout + co] = dy_data[(n * d.cout + co) * plane + sp];
        }
    }
    let dyt_v = ArrayView2::from_shape((m, d.cout), &dyt).unwrap();

    let cols = im2col(x.data(), &d);
    let cols_v = ArrayView2::from_shape((m, k), &cols).unwrap();

    // dW += dyt^T . cols, db += column sums of dyt.
    gemm(dyt_v.t(), cols_v, S::one(), &mut dw_acc.view2_mut(d.cout, k));
    let db = db_acc.data_mut();
    for mi in 0..m {
        for co in 0..d.cout {
            db[co] = db[co] + dyt[mi * d.cout + co];
        }
    }

    // dX = col2im(dyt . W).
    let mut dcols = vec![S::zero(); m * k];
    gemm(
        dyt_v,
        weight.view2(d.cout, k),
        S::zero(),
        &mut ArrayViewMut2::from_shape((m, k), &mut dcols).unwrap(),
    );
    let mut dx = Tensor::zeros(x.shape());
    col2im_add(&dcols, &d, dx.data_mut());
    dx
}

// ----------------------------------------------------------------- dense

pub(crate) fn dense_forward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
) -> Tensor<S> {
    let n = x.shape()[0];
    let (d_in, d_out) = (weight.shape()[0], weight.shape()[1]);
    let mut out = Tensor::zeros(&[n, d_out]);
    gemm(x.view2(n, d_in), weight.view2(d_in, d_out), S::zero(), &mut out.view2_mut(n, d_out));
    let b = bias.data();
    for row in out.data_mut().chunks_exact_mut(d_out) {
        for (v, &bv) in row.iter_mut().zip(b) {
            *v = *v + bv;
        }
    }
    out
}

pub(crate) fn dense_backward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    dy: &Tensor<S>,
    dw_acc: &mut Tensor<S>,
    db_acc: &mut Tensor<S>,
) -> Tensor<S> {
    let n = x.shape()[0];
    let (d_in, d_out) = (weight.shape()[0], weight.shape()[1]);
    let x_v = x.view2(n, d_in);
    let dy_v = dy.view2(n, d_out);

    gemm(x_v.t(), dy_v, S::one(), &mut dw_acc.view2_mut(d_in, d_out));
    let db = db_acc.data_mut();
    for row in dy.data().chunks_exact(d_out) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }

    let mut dx = Tensor::zeros(x.shape());
    gemm(dy_v, weight.view2(d_in, d_out).t(), S::zero(), &mut dx.view2_mut(n, d_in));
    dx
}

// ------------------------------------------------------------- batch norm

pub(crate) struct BnAux<S> {
    pub xhat: Tensor<S>,
    pub inv_std: Vec<S>,
}

/// Train-mode batch norm over (N, H, W) per channel map.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_forward_train<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    running_mean: &mut Tensor<S>,
    running_var: &mut Tensor<S>,
    momentum: f64,
    eps: f64,
    update_running: bool,
) -> (Tensor<S>, BnAux<S>) {
    let (n, c, h, w) = shape4(x);
    let plane = h * w;
    let m = (n * plane) as f64;
    let mut out = Tensor::zeros(x.shape());
    let mut xhat = Tensor::zeros(x.shape());
    let mut inv_std = vec![S::zero(); c];

    for ci in 0..c {
        let mut sum = S::zero();
        let mut sum_sq = S::zero();
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for &v in &x.data()[base..base + plane] {
                sum = sum + v;
                sum_sq = sum_sq + v * v;
            }
        }
        let mean = sum.as_f64() / m;
        let var = (sum_sq.as_f64() / m - mean * mean).max(0.0);
        let istd = S::from_f64(1.0 / (var + eps).sqrt());
        let mean_s = S::from_f64(mean);
        inv_std[ci] = istd;

        if update_running {
            let rm = running_mean.data_mut();
            let rv = running_var.data_mut();
            rm[ci] = S::from_f64(momentum * rm[ci].as_f64() + (1.0 - momentum) * mean);
            rv[ci] = S::from_f64(momentum * rv[ci].as_f64() + (1.0 - momentum) * var);
        }

        let (g, b) = (gamma.data()[ci], beta.data()[ci]);
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                let xh = (x.data()[i] - mean_s) * istd;
                xhat.data_mut()[i] = xh;
                out.data_mut()[i] = g * xh + b;
            }
        }
    }
    (out, BnAux { xhat, inv_std })
}

pub(crate) fn batchnorm_forward_eval<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    running_mean: &Tensor<S>,
    running_var: &Tensor<S>,
    eps: f64,
) -> Tensor<S> {
    let (n, c, h, w) = shape4(x);
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    for ci in 0..c {
        let istd = S::from_f64(1.0 / (running_var.data()[ci].as_f64() + eps).sqrt());
        let mean = running_mean.data()[ci];
        let (g, b) = (gamma.data()[ci], beta.data()[ci]);
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                out.data_mut()[i] = g * (x.data()[i] - mean) * istd + b;
            }
        }
    }
    out
}

pub(crate) fn batchnorm_backward_train<S: Scalar>(
    dy: &Tensor<S>,
    aux: &BnAux<S>,
    gamma: &Tensor<S>,
    dgamma_acc: &mut Tensor<S>,
    dbeta_acc: &mut Tensor<S>,
) -> Tensor<S> {
    let (n, c, h, w) = shape4(dy);
    let plane = h * w;
    let m = S::from_f64((n * plane) as f64);
    let mut dx = Tensor::zeros(dy.shape());

    for ci in 0..c {
        let mut sum_dy = S::zero();
        let mut sum_dy_xhat = S::zero();
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                sum_dy = sum_dy + dy.data()[i];
                sum_dy_xhat = sum_dy_xhat + dy.data()[i] * aux.xhat.data()[i];
            }
        }
        dgamma_acc.data_mut()[ci] = dgamma_acc.data()[ci] + sum_dy_xhat;
        dbeta_acc.data_mut()[ci] = dbeta_acc.data()[ci] + sum_dy;

        let scale = gamma.data()[ci] * aux.inv_std[ci] / m;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                dx.data_mut()[i] = scale
                    * (m * dy.data()[i]
                        - aux.xhat.data()[i] * sum_dy_xhat
                        - sum_dy);
            }
        }
    }
    dx
}

/// Backward through eval-mode batch norm (a per-channel affine map).
pub(crate) fn batchnorm_backward_eval<S: Scalar>(
    x: &Tensor<S>,
    dy: &Tensor<S>,
    gamma: &Tensor<S>,
    running_mean: &Tensor<S>,
    running_var: &Tensor<S>,
    eps: f64,
    dgamma_acc: &mut Tensor<S>,
    dbeta_acc: &mut Tensor<S>,
) -> Tensor<S> {
    let (n, c, h, w) = shape4(dy);
    let plane = h * w;
    let mut dx = Tensor::zeros(dy.shape());
    for ci in 0..c {
        let istd = S::from_f64(1.0 / (running_var.data()[ci].as_f64() + eps).sqrt());
        let mean = running_mean.data()[ci];
        let g = gamma.data()[ci];
        let mut sum_dy = S::zero();
        let mut sum_dy_xhat = S::zero();
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                let xh = (x.data()[i] - mean) * istd;
                sum_dy = sum_dy + dy.data()[i];
                sum_dy_xhat = sum_dy_xhat + dy.data()[i] * xh;
                dx.data_mut()[i] = dy.data()[i] * g * istd;
            }
        }
        dgamma_acc.data_mut()[ci] = dgamma_acc.data()[ci] + sum_dy_xhat;
        dbeta_acc.data_mut()[ci] = dbeta_acc.data()[ci] + sum_dy;
    }
    dx
}

fn shape4<S: Scalar>(t: &Tensor<S>) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

// ------------------------------------------------------------------- elu

pub(crate) fn elu_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < S::zero() {
            *v = v.exp() - S::one();
        }
    }
    out
}

pub(crate) fn elu_backward<S: Scalar>(x: &Tensor<S>, y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let mut dx = dy.clone();
    for ((d, &xv), &yv) in dx.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
        if xv <= S::zero() {
            // d/dx (e^x - 1) = e^x = y + 1; both one-sided derivatives are 1
            // at x = 0, so ELU is C1 there.
            *d = *d * (yv + S::one());
        }
    }
    dx
}

// ----------------------------------------------------------------- pools

pub(crate) fn maxpool_forward<S: Scalar>(
    x: &Tensor<S>,
    kh: usize,
    kw: usize,
) -> (Tensor<S>, Vec<u32>) {
    let (n, c, h, w) = shape4(x);
    let (oh, ow) = (h / kh, w / kw);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0u32; n * c * oh * ow];
    let xd = x.data();
    let mut oi = 0;
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            for ohh in 0..oh {
                for oww in 0..ow {
                    let mut best = S::neg_infinity();
                    let mut best_idx = 0usize;
                    // Scan in index order; strict > keeps the first maximum,
                    // which is the subgradient convention for ties.
                    for dh in 0..kh {
                        let row = base + (ohh * kh + dh) * w + oww * kw;
                        for dw in 0..kw {
                            let v = xd[row + dw];
                            if v > best {
                                best = v;
                                best_idx = row + dw;
                            }
                        }
                    }
                    out.data_mut()[oi] = best;
                    argmax[oi] = best_idx as u32;
                    oi += 1;
                }
            }
        }
    }
    (out, argmax)
}

pub(crate) fn maxpool_backward<S: Scalar>(
    dy: &Tensor<S>,
    argmax: &[u32],
    x_shape: &[usize],
) -> Tensor<S> {
    let mut dx = Tensor::zeros(x_shape);
    let dxd = dx.data_mut();
    for (&g, &idx) in dy.data().iter().zip(argmax) {
        dxd[idx as usize] = dxd[idx as usize] + g;
    }
    dx
}

pub(crate) fn avgpool_forward<S: Scalar>(x: &Tensor<S>, kh: usize, kw: usize) -> Tensor<S> {
    let (n, c, h, w) = shape4(x);
    let (oh, ow) = (h / kh, w / kw);
    let inv = S::from_f64(1.0 / (kh * kw) as f64);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let xd = x.data();
    let mut oi = 0;
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            for ohh in 0..oh {
                for oww in 0..ow {
                    let mut acc = S::zero();
                    for dh in 0..kh {
                        let row = base + (ohh * kh + dh) * w + oww * kw;
                        for dw in 0..kw {
                            acc = acc + xd[row + dw];
                        }
                    }
                    out.data_mut()[oi] = acc * inv;
                    oi += 1;
                }
            }
        }
    }
    out
}

pub(crate) fn avgpool_backward<S: Scalar>(
    dy: &Tensor<S>,
    x_shape: &[usize],
    kh: usize,
    kw: usize,
) -> Tensor<S> {
    let (n, c, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (oh, ow) = (h / kh, w / kw);
    let inv = S::from_f64(1.0 / (kh * kw) as f64);
    let mut dx = Tensor::zeros(x_shape);
    let dxd = dx.data_mut();
    let mut oi = 0;
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            for ohh in 0..oh {
                for oww in 0..ow {
                    let g = dy.data()[oi] * inv;
                    oi += 1;
                    for dh in 0..kh {
                        let row = base + (ohh * kh + dh) * w + oww * kw;
                        for dw in 0..kw {
                            dxd[row + dw] = dxd[row + dw] + g;
                        }
                    }
                }
            }
        }
    }
    dx
}

// ------------------------------------------------------------- reshaping

/// `[N, C, H, W]` to a `[N, T=W, F=C*H]` sequence for the recurrent stage.
pub(crate) fn to_sequence_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (n, c, h, w) = shape4(x);
    let f = c * h;
    let mut out = Tensor::zeros(&[n, w, f]);
    let xd = x.data();
    let od = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            for hi in 0..h {
                let src = ((ni * c + ci) * h + hi) * w;
                let feat = ci * h + hi;
                for wi in 0..w {
                    od[(ni * w + wi) * f + feat] = xd[src + wi];
                }
            }
        }
    }
    out
}

pub(crate) fn to_sequence_backward<S: Scalar>(dy: &Tensor<S>, x_shape: &[usize]) -> Tensor<S> {
    let (n, c, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let f = c * h;
    let mut dx = Tensor::zeros(x_shape);
    let dyd = dy.data();
    let dxd = dx.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            for hi in 0..h {
                let dst = ((ni * c + ci) * h + hi) * w;
                let feat = ci * h + hi;
                for wi in 0..w {
                    dxd[dst + wi] = dyd[(ni * w + wi) * f + feat];
                }
            }
        }
    }
    dx
}

// --------------------------------------------------------------- softmax

pub(crate) fn softmax_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let k = *x.shape().last().unwrap();
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

pub(crate) fn softmax_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let k = *y.shape().last().unwrap();
    let mut dx = Tensor::zeros(y.shape());
    for ((dxr, yr), dyr) in dx
        .data_mut()
        .chunks_exact_mut(k)
        .zip(y.data().chunks_exact(k))
        .zip(dy.data().chunks_exact(k))
    {
        let dot: S = yr.iter().zip(dyr).map(|(&p, &g)| p * g).sum();
        for ((d, &p), &g) in dxr.iter_mut().zip(yr).zip(dyr) {
            *d = p * (g - dot);
        }
    }
    dx
}

// ------------------------------------------------------------------ lstm

pub(crate) struct LstmAux<S> {
    pub gate_i: Tensor<S>,
    pub gate_f: Tensor<S>,
    pub gate_g: Tensor<S>,
    pub gate_o: Tensor<S>,
    pub cell: Tensor<S>,
    pub tanh_cell: Tensor<S>,
    pub hidden: Tensor<S>,
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Strided `[N, F]` view of time step `t` inside a `[N, T, F]` tensor.
fn step_view<S: Scalar>(data: &[S], n: usize, t_len: usize, f: usize, t: usize) -> ArrayView2<'_, S> {
    ArrayView2::from_shape((n, f).strides((t_len * f, 1)), &data[t * f..])
        .expect("step view in bounds")
}

/// Plain LSTM with gate order (input, forget, candidate, output):
/// `z = x Wx + h Wh + b`, `c = f c_prev + i g`, `h = o tanh(c)`.
pub(crate) fn lstm_forward<S: Scalar>(
    x: &Tensor<S>,
    wx: &Tensor<S>,
    wh: &Tensor<S>,
    bias: &Tensor<S>,
    hidden: usize,
    return_sequence: bool,
) -> (Tensor<S>, LstmAux<S>) {
    let (n, t_len, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let hdim = hidden;
    let mut aux = LstmAux {
        gate_i: Tensor::zeros(&[t_len, n, hdim]),
        gate_f: Tensor::zeros(&[t_len, n, hdim]),
        gate_g: Tensor::zeros(&[t_len, n, hdim]),
        gate_o: Tensor::zeros(&[t_len, n, hdim]),
        cell: Tensor::zeros(&[t_len, n, hdim]),
        tanh_cell: Tensor::zeros(&[t_len, n, hdim]),
        hidden: Tensor::zeros(&[t_len, n, hdim]),
    };

    let mut z = vec![S::zero(); n * 4 * hdim];
    let step = n * hdim;
    for t in 0..t_len {
        {
            let xt = step_view(x.data(), n, t_len, f, t);
            let mut z_v = ArrayViewMut2::from_shape((n, 4 * hdim), &mut z).unwrap();
            gemm(xt, wx.view2(f, 4 * hdim), S::zero(), &mut z_v);
            if t > 0 {
                let h_prev =
                    ArrayView2::from_shape((n, hdim), &aux.hidden.data()[(t - 1) * step..t * step])
                        .unwrap();
                gemm(h_prev, wh.view2(hdim, 4 * hdim), S::one(), &mut z_v);
            }
        }
        let b = bias.data();
        for (row, zrow) in z.chunks_exact_mut(4 * hdim).enumerate() {
            let base = t * step + row * hdim;
            for j in 0..hdim {
                let zi = zrow[j] + b[j];
                let zf = zrow[hdim + j] + b[hdim + j];
                let zg = zrow[2 * hdim + j] + b[2 * hdim + j];
                let zo = zrow[3 * hdim + j] + b[3 * hdim + j];
                let i_g = sigmoid(zi);
                let f_g = sigmoid(zf);
                let g_g = zg.tanh();
                let o_g = sigmoid(zo);
                let c_prev = if t > 0 { aux.cell.data()[base - step + j] } else { S::zero() };
                let c = f_g * c_prev + i_g * g_g;
                let tc = c.tanh();
                aux.gate_i.data_mut()[base + j] = i_g;
                aux.gate_f.data_mut()[base + j] = f_g;
                aux.gate_g.data_mut()[base + j] = g_g;
                aux.gate_o.data_mut()[base + j] = o_g;
                aux.cell.data_mut()[base + j] = c;
                aux.tanh_cell.data_mut()[base + j] = tc;
                aux.hidden.data_mut()[base + j] = o_g * tc;
            }
        }
    }

    let out = if return_sequence {
        // [T, N, H] -> [N, T, H]
        let mut out = Tensor::zeros(&[n, t_len, hdim]);
        let od = out.data_mut();
        let hd = aux.hidden.data();
        for t in 0..t_len {
            for ni in 0..n {
                let src = (t * n + ni) * hdim;
                let dst = (ni * t_len + t) * hdim;
                od[dst..dst + hdim].copy_from_slice(&hd[src..src + hdim]);
            }
        }
        out
    } else {
        let mut out = Tensor::zeros(&[n, hdim]);
        out.data_mut()
            .copy_from_slice(&aux.hidden.data()[(t_len - 1) * step..t_len * step]);
        out
    };
    (out, aux)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward<S: Scalar>(
    x: &Tensor<S>,
    wx: &Tensor<S>,
    wh: &Tensor<S>,
    aux: &LstmAux<S>,
    dy: &Tensor<S>,
    return_sequence: bool,
    dwx_acc: &mut Tensor<S>,
    dwh_acc: &mut Tensor<S>,
    db_acc: &mut Tensor<S>,
) -> Tensor<S> {
    let (n, t_len, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let hdim = wh.shape()[0];
    let step = n * hdim;

    let mut dx = Tensor::zeros(x.shape());
    let mut dh_next = vec![S::zero(); step];
    let mut dc_next = vec![S::zero(); step];
    let mut dz = vec![S::zero(); n * 4 * hdim];

    for t in (0..t_len).rev() {
        let base = t * step;
        for row in 0..n {
            for j in 0..hdim {
                let idx = base + row * hdim + j;
                let flat = row * hdim + j;
                let mut dh = dh_next[flat];
                if return_sequence {
                    dh = dh + dy.data()[(row * t_len + t) * hdim + j];
                } else if t == t_len - 1 {
                    dh = dh + dy.data()[flat];
                }
                let (i_g, f_g, g_g, o_g) = (
                    aux.gate_i.data()[idx],
                    aux.gate_f.data()[idx],
                    aux.gate_g.data()[idx],
                    aux.gate_o.data()[idx],
                );
                let tc = aux.tanh_cell.data()[idx];
                let c_prev =
                    if t > 0 { aux.cell.data()[idx - step] } else { S::zero() };

                let dc = dc_next[flat] + dh * o_g * (S::one() - tc * tc);
                let d_o = dh * tc;
                let d_i = dc * g_g;
                let d_f = dc * c_prev;
                let d_g = dc * i_g;

                let zrow = row * 4 * hdim;
                dz[zrow + j] = d_i * i_g * (S::one() - i_g);
                dz[zrow + hdim + j] = d_f * f_g * (S::one() - f_g);
                dz[zrow + 2 * hdim + j] = d_g * (S::one() - g_g * g_g);
                dz[zrow + 3 * hdim + j] = d_o * o_g * (S::one() - o_g);

                dc_next[flat] = dc * f_g;
            }
        }

        let dz_v = ArrayView2::from_shape((n, 4 * hdim), &dz).unwrap();
        {
            let xt = step_view(x.data(), n, t_len, f, t);
            gemm(xt.t(), dz_v, S::one(), &mut dwx_acc.view2_mut(f, 4 * hdim));
        }
        if t > 0 {
            let h_prev =
                ArrayView2::from_shape((n, hdim), &aux.hidden.data()[base - step..base]).unwrap();
            gemm(h_prev.t(), dz_v, S::one(), &mut dwh_acc.view2_mut(hdim, 4 * hdim));
        }
        {
            let db = db_acc.data_mut();
            for zrow in dz.chunks_exact(4 * hdim) {
                for (acc, &v) in db.iter_mut().zip(zrow) {
                    *acc = *acc + v;
                }
            }
        }

        // dX_t = dz Wx^T, dh_prev = dz Wh^T.
        {
            let mut dxt = vec![S::zero(); n * f];
            gemm(
                dz_v,
                wx.view2(f, 4 * hdim).t(),
                S::zero(),
                &mut ArrayViewMut2::from_shape((n, f), &mut dxt).unwrap(),
            );
            let dxd = dx.data_mut();
            for row in 0..n {
                let dst = (row * t_len + t) * f;
                dxd[dst..dst + f].copy_from_slice(&dxt[row * f..(row + 1) * f]);
            }
        }
        gemm(
            dz_v,
            wh.view2(hdim, 4 * hdim).t(),
            S::zero(),
            &mut ArrayViewMut2::from_shape((n, hdim), &mut dh_next).unwrap(),
        );
    }
    dx
}
