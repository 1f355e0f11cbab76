//! Forward kernels and their hand-derived backward passes.
//!
//! Backward functions take the forward inputs plus the upstream gradient and
//! return gradients with the same shapes as the corresponding inputs.

use super::TensorF;
use crate::error::{Error, Result};

pub const ADAIN_EPS: f64 = 1e-5;

/// `out[..., j] = sum_i x[..., i] * w[i, j] + b[j]`
pub fn linear_forward(x: &TensorF, w: &TensorF, b: &TensorF) -> Result<TensorF> {
    let (d_in, d_out) = w.dims2()?;
    if x.last_dim() != d_in {
        return Err(Error::dim("linear", x.shape(), w.shape()));
    }
    if b.shape() != [d_out] {
        return Err(Error::dim("linear bias", w.shape(), b.shape()));
    }
    let rows = x.numel() / d_in;
    let mut out = vec![0.0; rows * d_out];
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    for r in 0..rows {
        let orow = &mut out[r * d_out..(r + 1) * d_out];
        orow.copy_from_slice(bd);
        let xrow = &xd[r * d_in..(r + 1) * d_in];
        for (i, &xv) in xrow.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &wd[i * d_out..(i + 1) * d_out];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = d_out;
    TensorF::new(shape, out)
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub fn linear_backward(x: &TensorF, w: &TensorF, gout: &TensorF) -> (TensorF, TensorF, TensorF) {
    let (d_in, d_out) = (w.dim(0), w.dim(1));
    let rows = x.numel() / d_in;
    let (xd, wd, gd) = (x.data(), w.data(), gout.data());
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; d_out];
    for r in 0..rows {
        let grow = &gd[r * d_out..(r + 1) * d_out];
        let xrow = &xd[r * d_in..(r + 1) * d_in];
        for (b, g) in gb.iter_mut().zip(grow) {
            *b += g;
        }
        for i in 0..d_in {
            let wrow = &wd[i * d_out..(i + 1) * d_out];
            gx[r * d_in + i] = wrow.iter().zip(grow).map(|(a, b)| a * b).sum();
            let xv = xrow[i];
            if xv != 0.0 {
                for (gwv, g) in gw[i * d_out..(i + 1) * d_out].iter_mut().zip(grow) {
                    *gwv += xv * g;
                }
            }
        }
    }
    (
        TensorF::new(x.shape().to_vec(), gx).unwrap(),
        TensorF::new(w.shape().to_vec(), gw).unwrap(),
        TensorF::vector(gb),
    )
}

/// Plain 2-D matrix product.
pub fn matmul(a: &TensorF, b: &TensorF) -> Result<TensorF> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    linear_forward(a, b, &TensorF::zeros(&[n])).inspect(|t| {
        debug_assert_eq!(t.shape(), [m, n]);
    })
}

pub fn matmul_backward(a: &TensorF, b: &TensorF, gout: &TensorF) -> (TensorF, TensorF) {
    let (ga, gb, _) = linear_backward(a, b, gout);
    (ga, gb)
}

pub fn transpose(x: &TensorF) -> Result<TensorF> {
    let (r, c) = x.dims2()?;
    let d = x.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    TensorF::new(vec![c, r], out)
}

pub fn conv1d_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = len + 2 * pad;
    if k > padded {
        return Err(Error::InvalidWindow {
            op: "conv1d",
            kernel: k,
            padded,
        });
    }
    if stride == 0 {
        return Err(Error::Contract("conv1d stride must be >= 1".into()));
    }
    Ok((padded - k) / stride + 1)
}

/// Cross-correlation of `x: [c_in, L]` with `kernel: [c_out, c_in, k]`, zero padded.
pub fn conv1d_forward(
    x: &TensorF,
    kernel: &TensorF,
    bias: &TensorF,
    stride: usize,
    pad: usize,
) -> Result<TensorF> {
    let (c_in, len) = x.dims2()?;
    let &[c_out, kc_in, k] = kernel.shape() else {
        return Err(Error::Contract(format!("conv1d kernel must be rank 3, got {:?}", kernel.shape())));
    };
    if kc_in != c_in {
        return Err(Error::dim("conv1d", x.shape(), kernel.shape()));
    }
    if bias.shape() != [c_out] {
        return Err(Error::dim("conv1d bias", kernel.shape(), bias.shape()));
    }
    let out_len = conv1d_out_len(len, k, stride, pad)?;
    let (xd, kd, bd) = (x.data(), kernel.data(), bias.data());
    let mut out = vec![0.0; c_out * out_len];
    for o in 0..c_out {
        for p in 0..out_len {
            let mut acc = bd[o];
            for c in 0..c_in {
                let krow = &kd[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                for (j, &kv) in krow.iter().enumerate() {
                    let pos = (p * stride + j) as isize - pad as isize;
                    if pos >= 0 && (pos as usize) < len {
                        acc += kv * xd[c * len + pos as usize];
                    }
                }
            }
            out[o * out_len + p] = acc;
        }
    }
    TensorF::new(vec![c_out, out_len], out)
}

/// Returns `(grad_x, grad_kernel, grad_bias)`.
pub fn conv1d_backward(
    x: &TensorF,
    kernel: &TensorF,
    stride: usize,
    pad: usize,
    gout: &TensorF,
) -> (TensorF, TensorF, TensorF) {
    let (c_in, len) = (x.dim(0), x.dim(1));
    let (c_out, k) = (kernel.dim(0), kernel.dim(2));
    let out_len = gout.dim(1);
    let (xd, kd, gd) = (x.data(), kernel.data(), gout.data());
    let mut gx = vec![0.0; x.numel()];
    let mut gk = vec![0.0; kernel.numel()];
    let mut gb = vec![0.0; c_out];
    for o in 0..c_out {
        for p in 0..out_len {
            let g = gd[o * out_len + p];
            gb[o] += g;
            for c in 0..c_in {
                for j in 0..k {
                    let pos = (p * stride + j) as isize - pad as isize;
                    if pos >= 0 && (pos as usize) < len {
                        let xi = c * len + pos as usize;
                        let ki = (o * c_in + c) * k + j;
                        gk[ki] += g * xd[xi];
                        gx[xi] += g * kd[ki];
                    }
                }
            }
        }
    }
    (
        TensorF::new(x.shape().to_vec(), gx).unwrap(),
        TensorF::new(kernel.shape().to_vec(), gk).unwrap(),
        TensorF::vector(gb),
    )
}

/// Per-column mean and population standard deviation of a `[T, D]` tensor.
fn column_stats(x: &TensorF) -> (Vec<f64>, Vec<f64>) {
    let (t, d) = (x.dim(0), x.dim(1));
    let xd = x.data();
    // shifted by the first row so identical rows give exactly zero variance
    let mut mean = vec![0.0; d];
    for r in 1..t {
        for j in 0..d {
            mean[j] += xd[r * d + j] - xd[j];
        }
    }
    for (j, m) in mean.iter_mut().enumerate() {
        *m = xd[j] + *m / t as f64;
    }
    let mut var = vec![0.0; d];
    for r in 0..t {
        for j in 0..d {
            let u = xd[r * d + j] - mean[j];
            var[j] += u * u;
        }
    }
    let std = var.into_iter().map(|v| (v / t as f64).sqrt()).collect();
    (mean, std)
}

fn adain_check(content: &TensorF, style: &TensorF, eps: f64) -> Result<(usize, usize)> {
    let (t, d) = content.dims2()?;
    if content.shape() != style.shape() {
        return Err(Error::dim("adain", content.shape(), style.shape()));
    }
    if t < 2 {
        return Err(Error::DegenerateStatistics(format!(
            "adain needs at least 2 tokens for per-channel statistics, got {t}"
        )));
    }
    if eps <= 0.0 {
        return Err(Error::Contract("adain eps must be > 0".into()));
    }
    Ok((t, d))
}

/// Adaptive instance normalization over the token axis, per feature channel:
/// `out[:, j] = std_s[j] * (c[:, j] - mean_c[j]) / (std_c[j] + eps) + mean_s[j]`.
pub fn adain(content: &TensorF, style: &TensorF, eps: f64) -> Result<TensorF> {
    let (t, d) = adain_check(content, style, eps)?;
    let (mc, sc) = column_stats(content);
    let (ms, ss) = column_stats(style);
    let cd = content.data();
    let mut out = vec![0.0; t * d];
    for r in 0..t {
        for j in 0..d {
            out[r * d + j] = ss[j] * (cd[r * d + j] - mc[j]) / (sc[j] + eps) + ms[j];
        }
    }
    TensorF::new(vec![t, d], out)
}

/// Returns `(grad_content, grad_style)`. Where a standard deviation is exactly
/// zero its derivative is taken as zero, matching symmetric finite differences.
pub fn adain_backward(content: &TensorF, style: &TensorF, eps: f64, gout: &TensorF) -> (TensorF, TensorF) {
    let (t, d) = (content.dim(0), content.dim(1));
    let tf = t as f64;
    let (mc, sc) = column_stats(content);
    let (ms, ss) = column_stats(style);
    let (cd, sd, gd) = (content.data(), style.data(), gout.data());
    let mut gc = vec![0.0; t * d];
    let mut gs = vec![0.0; t * d];
    for j in 0..d {
        let denom = sc[j] + eps;
        let mut g_mean = 0.0;
        let mut g_dot_u = 0.0;
        let mut g_mu_s = 0.0;
        let mut g_sigma_s = 0.0;
        for r in 0..t {
            let u = cd[r * d + j] - mc[j];
            let gy = gd[r * d + j];
            g_mean += ss[j] * gy;
            g_dot_u += ss[j] * gy * u;
            g_mu_s += gy;
            g_sigma_s += gy * u / denom;
        }
        g_mean /= tf;
        for r in 0..t {
            let u = cd[r * d + j] - mc[j];
            let gn = ss[j] * gd[r * d + j];
            let mut g = (gn - g_mean) / denom;
            if sc[j] > 0.0 {
                g -= u * g_dot_u / (denom * denom * tf * sc[j]);
            }
            gc[r * d + j] = g;

            let us = sd[r * d + j] - ms[j];
            let mut g_style = g_mu_s / tf;
            if ss[j] > 0.0 {
                g_style += g_sigma_s * us / (tf * ss[j]);
            }
            gs[r * d + j] = g_style;
        }
    }
    (
        TensorF::new(vec![t, d], gc).unwrap(),
        TensorF::new(vec![t, d], gs).unwrap(),
    )
}

/// Window `[floor(i*L/n), ceil((i+1)*L/n))` of adaptive average pooling.
pub fn pool_window(i: usize, len: usize, out_len: usize) -> (usize, usize) {
    let start = i * len / out_len;
    let end = ((i + 1) * len).div_ceil(out_len);
    (start, end)
}

pub fn adaptive_avg_pool1d(x: &TensorF, out_len: usize) -> Result<TensorF> {
    let (c, len) = x.dims2()?;
    if out_len == 0 {
        return Err(Error::Contract("adaptive_avg_pool1d out_len must be >= 1".into()));
    }
    let xd = x.data();
    let mut out = vec![0.0; c * out_len];
    for ch in 0..c {
        let row = &xd[ch * len..(ch + 1) * len];
        for i in 0..out_len {
            let (s, e) = pool_window(i, len, out_len);
            out[ch * out_len + i] = row[s..e].iter().sum::<f64>() / (e - s) as f64;
        }
    }
    TensorF::new(vec![c, out_len], out)
}

pub fn adaptive_avg_pool1d_backward(x_shape: &[usize], out_len: usize, gout: &TensorF) -> TensorF {
    let (c, len) = (x_shape[0], x_shape[1]);
    let gd = gout.data();
    let mut gx = vec![0.0; c * len];
    for ch in 0..c {
        for i in 0..out_len {
            let (s, e) = pool_window(i, len, out_len);
            let g = gd[ch * out_len + i] / (e - s) as f64;
            for v in &mut gx[ch * len + s..ch * len + e] {
                *v += g;
            }
        }
    }
    TensorF::new(x_shape.to_vec(), gx).unwrap()
}

/// 2-D adaptive average pooling of `x: [c, H, W]` to `[c, out_h * out_w]`,
/// using the same window rule on each axis.
pub fn adaptive_avg_pool2d_flat(x: &TensorF, out_h: usize, out_w: usize) -> Result<TensorF> {
    let &[c, h, w] = x.shape() else {
        return Err(Error::Contract(format!("pool2d expects [c, H, W], got {:?}", x.shape())));
    };
    if out_h == 0 || out_w == 0 || h < out_h || w < out_w {
        return Err(Error::dim("adaptive_avg_pool2d", &[h, w], &[out_h, out_w]));
    }
    let xd = x.data();
    let mut out = vec![0.0; c * out_h * out_w];
    for ch in 0..c {
        let plane = &xd[ch * h * w..(ch + 1) * h * w];
        for i in 0..out_h {
            let (r0, r1) = pool_window(i, h, out_h);
            for j in 0..out_w {
                let (c0, c1) = pool_window(j, w, out_w);
                let mut acc = 0.0;
                for r in r0..r1 {
                    acc += plane[r * w + c0..r * w + c1].iter().sum::<f64>();
                }
                out[(ch * out_h + i) * out_w + j] = acc / ((r1 - r0) * (c1 - c0)) as f64;
            }
        }
    }
    TensorF::new(vec![c, out_h * out_w], out)
}

/// Concatenate two rank-2 tensors along `axis` (0 = rows/tokens, 1 = columns/embedding).
pub fn concat2(a: &TensorF, b: &TensorF, axis: usize) -> Result<TensorF> {
    let (ar, ac) = a.dims2()?;
    let (br, bc) = b.dims2()?;
    match axis {
        0 => {
            if ac != bc {
                return Err(Error::dim("concat(tokens)", a.shape(), b.shape()));
            }
            let mut data = a.data().to_vec();
            data.extend_from_slice(b.data());
            TensorF::new(vec![ar + br, ac], data)
        }
        1 => {
            if ar != br {
                return Err(Error::dim("concat(embedding)", a.shape(), b.shape()));
            }
            let mut data = Vec::with_capacity(ar * (ac + bc));
            for r in 0..ar {
                data.extend_from_slice(&a.data()[r * ac..(r + 1) * ac]);
                data.extend_from_slice(&b.data()[r * bc..(r + 1) * bc]);
            }
            TensorF::new(vec![ar, ac + bc], data)
        }
        _ => Err(Error::Contract(format!("concat axis {axis} out of range for rank 2"))),
    }
}

/// Split the gradient of `concat2(a, b, axis)` back into `(grad_a, grad_b)`.
pub fn concat2_backward(a_shape: &[usize], b_shape: &[usize], axis: usize, gout: &TensorF) -> (TensorF, TensorF) {
    let gd = gout.data();
    if axis == 0 {
        let n = a_shape.iter().product();
        (
            TensorF::new(a_shape.to_vec(), gd[..n].to_vec()).unwrap(),
            TensorF::new(b_shape.to_vec(), gd[n..].to_vec()).unwrap(),
        )
    } else {
        let (rows, ac, bc) = (a_shape[0], a_shape[1], b_shape[1]);
        let mut ga = Vec::with_capacity(rows * ac);
        let mut gb = Vec::with_capacity(rows * bc);
        for r in 0..rows {
            let row = &gd[r * (ac + bc)..(r + 1) * (ac + bc)];
            ga.extend_from_slice(&row[..ac]);
            gb.extend_from_slice(&row[ac..]);
        }
        (
            TensorF::new(a_shape.to_vec(), ga).unwrap(),
            TensorF::new(b_shape.to_vec(), gb).unwrap(),
        )
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let th = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &TensorF) -> TensorF {
    let v = logits.last_dim();
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(v) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|x| *x -= lse);
    }
    TensorF::new(logits.shape().to_vec(), out).unwrap()
}

/// Mean token cross-entropy of `logits: [L, V]` against `targets` (length L).
pub fn softmax_xent(logits: &TensorF, targets: &[usize]) -> Result<f64> {
    let (l, v) = logits.dims2()?;
    if targets.len() != l {
        return Err(Error::dim("softmax_xent", logits.shape(), &[targets.len()]));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
        return Err(Error::Contract(format!("target id {bad} out of range for vocabulary {v}")));
    }
    let lp = log_softmax_rows(logits);
    let total: f64 = targets.iter().enumerate().map(|(r, &t)| -lp.data()[r * v + t]).sum();
    Ok(total / l as f64)
}

pub fn softmax_xent_backward(logits: &TensorF, targets: &[usize], gout: f64) -> TensorF {
    let (l, v) = (logits.dim(0), logits.dim(1));
    let lp = log_softmax_rows(logits);
    let mut g: Vec<f64> = lp.data().iter().map(|x| x.exp()).collect();
    for (r, &t) in targets.iter().enumerate() {
        g[r * v + t] -= 1.0;
    }
    let s = gout / l as f64;
    g.iter_mut().for_each(|x| *x *= s);
    TensorF::new(vec![l, v], g).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(rows: &[&[f64]]) -> TensorF {
        TensorF::from_rows(rows)
    }

    #[test]
    fn linear_examples() {
        let x = TensorF::vector(vec![1.0, 2.0]);
        let out = linear_forward(&x, &TensorF::identity(2), &TensorF::zeros(&[2])).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
        let out = linear_forward(&x, &TensorF::zeros(&[2, 2]), &TensorF::vector(vec![3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
        let w = t(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let out = linear_forward(&x, &w, &TensorF::vector(vec![0.0, 1.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 3.0]);
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let x = TensorF::vector(vec![1.0, 2.0, 3.0]);
        let err = linear_forward(&x, &TensorF::identity(2), &TensorF::zeros(&[2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn linear_batched_leading_dims() {
        let x = TensorF::new(vec![2, 3, 2], (0..12).map(f64::from).collect()).unwrap();
        let out = linear_forward(&x, &TensorF::identity(2), &TensorF::zeros(&[2])).unwrap();
        assert_eq!(out.shape(), &[2, 3, 2]);
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn conv1d_examples() {
        let x = t(&[&[1.0, 2.0, 3.0]]);
        let k = TensorF::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let out = conv1d_forward(&x, &k, &TensorF::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);

        let x = t(&[&[1.0, 1.0, 1.0]]);
        let k = TensorF::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        let out = conv1d_forward(&x, &k, &TensorF::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[2.0, 2.0]);

        let x = t(&[&[1.0, 2.0]]);
        let k = TensorF::new(vec![1, 1, 1], vec![0.0]).unwrap();
        let out = conv1d_forward(&x, &k, &TensorF::vector(vec![5.0]), 1, 0).unwrap();
        assert_eq!(out.data(), &[5.0, 5.0]);
    }

    #[test]
    fn conv1d_output_length_with_stride_and_pad() {
        let x = TensorF::full(&[2, 7], 1.0);
        let k = TensorF::full(&[3, 2, 3], 1.0);
        let out = conv1d_forward(&x, &k, &TensorF::zeros(&[3]), 2, 1).unwrap();
        // floor((7 + 2 - 3) / 2) + 1
        assert_eq!(out.shape(), &[3, 4]);
        // first window touches the zero pad on the left
        assert_eq!(out.get2(0, 0), 4.0);
        assert_eq!(out.get2(0, 1), 6.0);
    }

    #[test]
    fn conv1d_window_too_large() {
        let x = t(&[&[1.0, 2.0]]);
        let k = TensorF::full(&[1, 1, 5], 1.0);
        let err = conv1d_forward(&x, &k, &TensorF::zeros(&[1]), 1, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidWindow { kernel: 5, padded: 4, .. }));
    }

    #[test]
    fn adain_examples() {
        let x = t(&[&[0.5, -1.0], &[2.0, 3.0], &[-0.25, 0.75]]);
        let out = adain(&x, &x, 1e-12).unwrap();
        assert!(out.max_abs_diff(&x) < 1e-6);

        let c = t(&[&[0.0], &[2.0]]);
        let s = t(&[&[10.0], &[14.0]]);
        let out = adain(&c, &s, ADAIN_EPS).unwrap();
        assert_abs_diff_eq!(out.data()[0], 10.0, epsilon = 1e-4);
        assert_abs_diff_eq!(out.data()[1], 14.0, epsilon = 1e-4);

        // constant content: eps keeps it finite and output collapses to style means
        let c = t(&[&[3.0, 3.0], &[3.0, 3.0], &[3.0, 3.0]]);
        let s = t(&[&[1.0, 4.0], &[2.0, 5.0], &[3.0, 9.0]]);
        let out = adain(&c, &s, ADAIN_EPS).unwrap();
        for r in 0..3 {
            assert_abs_diff_eq!(out.get2(r, 0), 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(out.get2(r, 1), 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn adain_needs_two_tokens() {
        let c = t(&[&[1.0, 2.0]]);
        assert!(matches!(adain(&c, &c, ADAIN_EPS), Err(Error::DegenerateStatistics(_))));
    }

    #[test]
    fn pool1d_examples() {
        let x = t(&[&[1.0, 2.0, 3.0, 4.0, 5.0]]);
        assert_eq!(adaptive_avg_pool1d(&x, 5).unwrap(), x);
        assert_eq!(adaptive_avg_pool1d(&x, 1).unwrap().data(), &[3.0]);
        assert_eq!(adaptive_avg_pool1d(&x, 3).unwrap().data(), &[1.5, 3.0, 4.5]);
    }

    #[test]
    fn pool2d_quadrants() {
        #[rustfmt::skip]
        let plane = vec![
            1.0, 1.0, 0.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 1.0,
            0.0, 0.0, 1.0, 1.0,
        ];
        let x = TensorF::new(vec![1, 4, 4], plane).unwrap();
        let p = adaptive_avg_pool2d_flat(&x, 2, 2).unwrap();
        assert_eq!(p.data(), &[0.75, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_axes() {
        let a = t(&[&[1.0, 2.0]]);
        let b = t(&[&[3.0, 4.0]]);
        assert_eq!(concat2(&a, &b, 0).unwrap().shape(), &[2, 2]);
        assert_eq!(concat2(&a, &b, 1).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        let c = t(&[&[1.0, 2.0, 3.0]]);
        assert!(concat2(&a, &c, 0).is_err());
    }

    #[test]
    fn xent_uniform_logits() {
        let logits = TensorF::zeros(&[2, 4]);
        let loss = softmax_xent(&logits, &[0, 3]).unwrap();
        assert_abs_diff_eq!(loss, 4f64.ln(), epsilon = 1e-15);
    }
}
