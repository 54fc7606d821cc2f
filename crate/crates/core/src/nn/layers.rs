//! Forward and backward kernels for every node type, NHWC layout.

use crate::decoder::PoolStride;
use crate::nn::tensor::Tensor4;

pub const BN_EPS: f64 = 1e-5;

/// `[start, end)` of the input window feeding output coordinate `o`.
#[inline]
fn window(o: usize, k: usize, len: usize, stride: PoolStride) -> (usize, usize) {
    match stride {
        PoolStride::Same => {
            let pad = k / 2;
            (o.saturating_sub(pad), (o + pad + 1).min(len))
        }
        PoolStride::Strided => (o * k, (o * k + k).min(len)),
    }
}

fn pooled_len(len: usize, k: usize, stride: PoolStride) -> usize {
    match stride {
        PoolStride::Same => len,
        PoolStride::Strided => len.div_ceil(k),
    }
}

fn im2col(x: &Tensor4, b: usize, k: usize, cols: &mut [f64]) {
    let (h, w, c) = (x.h, x.w, x.c);
    let pad = k / 2;
    let row_len = k * k * c;
    cols.fill(0.0);
    let img = x.instance(b);
    for y in 0..h {
        for xx in 0..w {
            let row = &mut cols[(y * w + xx) * row_len..(y * w + xx + 1) * row_len];
            for ky in 0..k {
                let iy = y + ky;
                if iy < pad || iy - pad >= h {
                    continue;
                }
                let iy = iy - pad;
                for kx in 0..k {
                    let ix = xx + kx;
                    if ix < pad || ix - pad >= w {
                        continue;
                    }
                    let ix = ix - pad;
                    let src = (iy * w + ix) * c;
                    let dst = (ky * k + kx) * c;
                    row[dst..dst + c].copy_from_slice(&img[src..src + c]);
                }
            }
        }
    }
}

fn col2im_add(dcols: &[f64], k: usize, dx: &mut [f64], h: usize, w: usize, c: usize) {
    let pad = k / 2;
    let row_len = k * k * c;
    for y in 0..h {
        for xx in 0..w {
            let row = &dcols[(y * w + xx) * row_len..(y * w + xx + 1) * row_len];
            for ky in 0..k {
                let iy = y + ky;
                if iy < pad || iy - pad >= h {
                    continue;
                }
                let iy = iy - pad;
                for kx in 0..k {
                    let ix = xx + kx;
                    if ix < pad || ix - pad >= w {
                        continue;
                    }
                    let ix = ix - pad;
                    let dst = (iy * w + ix) * c;
                    let src = (ky * k + kx) * c;
                    for (d, s) in dx[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// `c = a (m×k) · b (k×n)`, all row-major, optionally transposing inputs by
/// passing strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    // SAFETY: slice lengths cover the strided extents asserted below.
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 'same' cross-correlation, stride 1, plus bias and ReLU.
/// `weight` is `(k·k·c_in) × c_out` row-major.
pub fn conv_forward(x: &Tensor4, weight: &[f64], bias: &[f64], k: usize, c_out: usize) -> Tensor4 {
    let (h, w) = (x.h, x.w);
    let kk = k * k * x.c;
    let mut out = Tensor4::zeros(x.n, h, w, c_out);
    let mut cols = vec![0.0; h * w * kk];
    for b in 0..x.n {
        im2col(x, b, k, &mut cols);
        let y = out.instance_mut(b);
        for px in y.chunks_exact_mut(c_out) {
            px.copy_from_slice(bias);
        }
        gemm(h * w, kk, c_out, &cols, (kk, 1), weight, (c_out, 1), 1.0, y);
        for v in y.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    out
}

/// Backward through ReLU, bias and convolution. `y` is the forward output
/// (post-ReLU). Accumulates into `dw`, `db` and returns `dx`.
pub fn conv_backward(
    x: &Tensor4,
    y: &Tensor4,
    dy: &Tensor4,
    weight: &[f64],
    k: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Tensor4 {
    let (h, w, c_in, c_out) = (x.h, x.w, x.c, y.c);
    let kk = k * k * c_in;
    let mut dx = Tensor4::zeros(x.n, h, w, c_in);
    let mut cols = vec![0.0; h * w * kk];
    let mut dcols = vec![0.0; h * w * kk];
    let mut dz = vec![0.0; h * w * c_out];
    for b in 0..x.n {
        for ((z, &g), &out) in dz.iter_mut().zip(dy.instance(b)).zip(y.instance(b)) {
            *z = if out > 0.0 { g } else { 0.0 };
        }
        for px in dz.chunks_exact(c_out) {
            for (acc, g) in db.iter_mut().zip(px) {
                *acc += g;
            }
        }
        im2col(x, b, k, &mut cols);
        // dW += colsᵀ · dZ
        gemm(kk, h * w, c_out, &cols, (1, kk), &dz, (c_out, 1), 1.0, dw);
        // dcols = dZ · Wᵀ
        gemm(h * w, c_out, kk, &dz, (c_out, 1), weight, (1, c_out), 0.0, &mut dcols);
        col2im_add(&dcols, k, dx.instance_mut(b), h, w, c_in);
    }
    dx
}

/// Max pooling; returns the output and, per output element, the flat input
/// index of the (first) maximum.
pub fn maxpool_forward(x: &Tensor4, k: usize, stride: PoolStride) -> (Tensor4, Vec<usize>) {
    let (oh, ow) = (pooled_len(x.h, k, stride), pooled_len(x.w, k, stride));
    let mut out = Tensor4::zeros(x.n, oh, ow, x.c);
    let mut argmax = vec![0usize; out.data.len()];
    for b in 0..x.n {
        for oy in 0..oh {
            let (y0, y1) = window(oy, k, x.h, stride);
            for ox in 0..ow {
                let (x0, x1) = window(ox, k, x.w, stride);
                for ch in 0..x.c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            let i = x.index(b, iy, ix, ch);
                            if x.data[i] > best {
                                best = x.data[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = out.index(b, oy, ox, ch);
                    out.data[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool_backward(x: &Tensor4, dy: &Tensor4, argmax: &[usize]) -> Tensor4 {
    let mut dx = Tensor4::zeros(x.n, x.h, x.w, x.c);
    for (g, &i) in dy.data.iter().zip(argmax) {
        dx.data[i] += g;
    }
    dx
}

/// Average pooling over the in-bounds part of each window.
pub fn avgpool_forward(x: &Tensor4, k: usize, stride: PoolStride) -> Tensor4 {
    let (oh, ow) = (pooled_len(x.h, k, stride), pooled_len(x.w, k, stride));
    let mut out = Tensor4::zeros(x.n, oh, ow, x.c);
    for b in 0..x.n {
        for oy in 0..oh {
            let (y0, y1) = window(oy, k, x.h, stride);
            for ox in 0..ow {
                let (x0, x1) = window(ox, k, x.w, stride);
                let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
                let o = out.index(b, oy, ox, 0);
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let i = x.index(b, iy, ix, 0);
                        for ch in 0..x.c {
                            out.data[o + ch] += x.data[i + ch] * inv;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn avgpool_backward(x: &Tensor4, dy: &Tensor4, k: usize, stride: PoolStride) -> Tensor4 {
    let mut dx = Tensor4::zeros(x.n, x.h, x.w, x.c);
    for b in 0..x.n {
        for oy in 0..dy.h {
            let (y0, y1) = window(oy, k, x.h, stride);
            for ox in 0..dy.w {
                let (x0, x1) = window(ox, k, x.w, stride);
                let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
                let o = dy.index(b, oy, ox, 0);
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let i = x.index(b, iy, ix, 0);
                        for ch in 0..x.c {
                            dx.data[i + ch] += dy.data[o + ch] * inv;
                        }
                    }
                }
            }
        }
    }
    dx
}

pub struct BatchNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub batch_stats: bool,
}

/// Per-channel normalization. With `running = None` the batch statistics
/// are used (training); otherwise the supplied running mean/variance.
pub fn batchnorm_forward(
    x: &Tensor4,
    gamma: &[f64],
    beta: &[f64],
    running: Option<(&[f64], &[f64])>,
) -> (Tensor4, BatchNormCache) {
    let c = x.c;
    let m = (x.n * x.h * x.w) as f64;
    let (mean, var, batch_stats) = match running {
        Some((rm, rv)) => (rm.to_vec(), rv.to_vec(), false),
        None => {
            let mut mean = vec![0.0; c];
            for px in x.data.chunks_exact(c) {
                for (acc, v) in mean.iter_mut().zip(px) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            let mut var = vec![0.0; c];
            for px in x.data.chunks_exact(c) {
                for ((acc, v), mu) in var.iter_mut().zip(px).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            (mean, var, true)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.data.len()];
    let mut out = Tensor4::zeros(x.n, x.h, x.w, c);
    for ((xh, o), px) in xhat
        .chunks_exact_mut(c)
        .zip(out.data.chunks_exact_mut(c))
        .zip(x.data.chunks_exact(c))
    {
        for ch in 0..c {
            xh[ch] = (px[ch] - mean[ch]) * inv_std[ch];
            o[ch] = gamma[ch] * xh[ch] + beta[ch];
        }
    }
    (
        out,
        BatchNormCache {
            xhat,
            inv_std,
            mean,
            var,
            batch_stats,
        },
    )
}

pub fn batchnorm_backward(
    dy: &Tensor4,
    gamma: &[f64],
    cache: &BatchNormCache,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Tensor4 {
    let c = dy.c;
    let m = (dy.n * dy.h * dy.w) as f64;
    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    for (g, xh) in dy.data.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
        for ch in 0..c {
            sum_dy[ch] += g[ch];
            sum_dy_xhat[ch] += g[ch] * xh[ch];
        }
    }
    for ch in 0..c {
        dgamma[ch] += sum_dy_xhat[ch];
        dbeta[ch] += sum_dy[ch];
    }
    let mut dx = Tensor4::zeros(dy.n, dy.h, dy.w, c);
    for ((d, g), xh) in dx
        .data
        .chunks_exact_mut(c)
        .zip(dy.data.chunks_exact(c))
        .zip(cache.xhat.chunks_exact(c))
    {
        for ch in 0..c {
            let scale = gamma[ch] * cache.inv_std[ch];
            d[ch] = if cache.batch_stats {
                scale * (g[ch] - sum_dy[ch] / m - xh[ch] * sum_dy_xhat[ch] / m)
            } else {
                scale * g[ch]
            };
        }
    }
    dx
}

/// Channel concatenation of two equally sized (spatially) tensors.
pub fn concat_forward(a: &Tensor4, b: &Tensor4) -> Tensor4 {
    let c = a.c + b.c;
    let mut out = Tensor4::zeros(a.n, a.h, a.w, c);
    for ((o, pa), pb) in out
        .data
        .chunks_exact_mut(c)
        .zip(a.data.chunks_exact(a.c))
        .zip(b.data.chunks_exact(b.c))
    {
        o[..a.c].copy_from_slice(pa);
        o[a.c..].copy_from_slice(pb);
    }
    out
}

pub fn concat_backward(dy: &Tensor4, ca: usize) -> (Tensor4, Tensor4) {
    let cb = dy.c - ca;
    let mut da = Tensor4::zeros(dy.n, dy.h, dy.w, ca);
    let mut db = Tensor4::zeros(dy.n, dy.h, dy.w, cb);
    for ((g, pa), pb) in dy
        .data
        .chunks_exact(dy.c)
        .zip(da.data.chunks_exact_mut(ca))
        .zip(db.data.chunks_exact_mut(cb))
    {
        pa.copy_from_slice(&g[..ca]);
        pb.copy_from_slice(&g[ca..]);
    }
    (da, db)
}

/// Center crop to `(h, w)`.
pub fn align_forward(x: &Tensor4, h: usize, w: usize) -> Tensor4 {
    let (oy, ox) = ((x.h - h) / 2, (x.w - w) / 2);
    let mut out = Tensor4::zeros(x.n, h, w, x.c);
    for b in 0..x.n {
        for y in 0..h {
            let src = x.index(b, y + oy, ox, 0);
            let dst = out.index(b, y, 0, 0);
            out.data[dst..dst + w * x.c].copy_from_slice(&x.data[src..src + w * x.c]);
        }
    }
    out
}

pub fn align_backward(x: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let (oy, ox) = ((x.h - dy.h) / 2, (x.w - dy.w) / 2);
    let mut dx = Tensor4::zeros(x.n, x.h, x.w, x.c);
    for b in 0..x.n {
        for y in 0..dy.h {
            let dst = dx.index(b, y + oy, ox, 0);
            let src = dy.index(b, y, 0, 0);
            dx.data[dst..dst + dy.w * x.c].copy_from_slice(&dy.data[src..src + dy.w * x.c]);
        }
    }
    dx
}

pub fn gap_forward(x: &Tensor4) -> Tensor4 {
    let mut out = Tensor4::zeros(x.n, 1, 1, x.c);
    let inv = 1.0 / (x.h * x.w) as f64;
    for b in 0..x.n {
        let o = &mut out.data[b * x.c..(b + 1) * x.c];
        for px in x.instance(b).chunks_exact(x.c) {
            for (acc, v) in o.iter_mut().zip(px) {
                *acc += v * inv;
            }
        }
    }
    out
}

pub fn gap_backward(x: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut dx = Tensor4::zeros(x.n, x.h, x.w, x.c);
    let inv = 1.0 / (x.h * x.w) as f64;
    for b in 0..x.n {
        let g = &dy.data[b * x.c..(b + 1) * x.c];
        for px in dx.instance_mut(b).chunks_exact_mut(x.c) {
            for (d, v) in px.iter_mut().zip(g) {
                *d = v * inv;
            }
        }
    }
    dx
}

/// Affine map on `(n, 1, 1, c_in)`; `weight` is `c_in × c_out` row-major.
pub fn dense_forward(x: &Tensor4, weight: &[f64], bias: &[f64], c_out: usize) -> Tensor4 {
    let mut out = Tensor4::zeros(x.n, 1, 1, c_out);
    for row in out.data.chunks_exact_mut(c_out) {
        row.copy_from_slice(bias);
    }
    gemm(x.n, x.c, c_out, &x.data, (x.c, 1), weight, (c_out, 1), 1.0, &mut out.data);
    out
}

pub fn dense_backward(
    x: &Tensor4,
    dy: &Tensor4,
    weight: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Tensor4 {
    let (c_in, c_out) = (x.c, dy.c);
    for row in dy.data.chunks_exact(c_out) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    gemm(c_in, x.n, c_out, &x.data, (1, c_in), &dy.data, (c_out, 1), 1.0, dw);
    let mut dx = Tensor4::zeros(x.n, 1, 1, c_in);
    gemm(x.n, c_out, c_in, &dy.data, (c_out, 1), weight, (1, c_out), 0.0, &mut dx.data);
    dx
}

pub fn softmax_forward(x: &Tensor4) -> Tensor4 {
    let c = x.c;
    let mut out = x.clone();
    for row in out.data.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}
