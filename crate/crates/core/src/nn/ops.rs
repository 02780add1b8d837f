//! Layer kernels with hand-written backward passes. Every backward returns
//! exact gradients of the matching forward.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

fn out_size(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    let span = input + 2 * pad;
    if span < k {
        return Err(Error::DimensionMismatch(format!(
            "kernel {k} larger than padded input {span}"
        )));
    }
    Ok((span - k) / stride + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }
}

fn conv_geom<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<(usize, usize, ConvGeom)> {
    let (n, c, h, wd) = x.dims4()?;
    let (o, wc, kh, kw) = w.dims4()?;
    if wc != c {
        return Err(Error::DimensionMismatch(format!(
            "conv weight {:?} expects {wc} input channels, input has {c}",
            w.shape()
        )));
    }
    let ho = out_size(h, kh, stride, pad)?;
    let wo = out_size(wd, kw, stride, pad)?;
    Ok((
        n,
        o,
        ConvGeom {
            c,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        },
    ))
}

/// Unfolds one `[C, H, W]` sample into `[C*KH*KW, Ho*Wo]`.
fn im2col<T: Scalar>(src: &[T], g: &ConvGeom, cols: &mut [T]) {
    let hw_out = g.ho * g.wo;
    for c in 0..g.c {
        let plane = &src[c * g.h * g.w..(c + 1) * g.h * g.w];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = (c * g.kh + u) * g.kw + v;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for i in 0..g.ho {
                    let y = (i * g.stride + u) as isize - g.pad as isize;
                    let line = &mut dst[i * g.wo..(i + 1) * g.wo];
                    if y < 0 || y >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[y as usize * g.w..(y as usize + 1) * g.w];
                    for (j, d) in line.iter_mut().enumerate() {
                        let x = (j * g.stride + v) as isize - g.pad as isize;
                        *d = if x < 0 || x >= g.w as isize {
                            T::zero()
                        } else {
                            srow[x as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into a `[C, H, W]` sample.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dst: &mut [T]) {
    let hw_out = g.ho * g.wo;
    for c in 0..g.c {
        let plane = &mut dst[c * g.h * g.w..(c + 1) * g.h * g.w];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = (c * g.kh + u) * g.kw + v;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for i in 0..g.ho {
                    let y = (i * g.stride + u) as isize - g.pad as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let drow = &mut plane[y as usize * g.w..(y as usize + 1) * g.w];
                    for j in 0..g.wo {
                        let x = (j * g.stride + v) as isize - g.pad as isize;
                        if x >= 0 && x < g.w as isize {
                            drow[x as usize] += src[i * g.wo + j];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation without bias: `x [N, C, H, W]`, `w [O, C, KH, KW]`,
/// zero padding.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let (n, o, g) = conv_geom(x, w, stride, pad)?;
    let in_per = g.c * g.h * g.w;
    let hw_out = g.ho * g.wo;
    let mut y = Tensor::zeros(&[n, o, g.ho, g.wo]);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.rows() * hw_out]
    };
    for i in 0..n {
        let xs = &x.data()[i * in_per..(i + 1) * in_per];
        let b: &[T] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, &g, &mut cols);
            &cols
        };
        let ys = &mut y.data_mut()[i * o * hw_out..(i + 1) * o * hw_out];
        T::gemm(o, g.rows(), hw_out, T::one(), w.data(), false, b, false, T::zero(), ys);
    }
    Ok(y)
}

/// Gradients `(dx, dw)` of [`conv2d_forward`] given upstream `dy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, o, g) = conv_geom(x, w, stride, pad)?;
    if dy.shape() != [n, o, g.ho, g.wo] {
        return Err(Error::DimensionMismatch(format!(
            "conv upstream gradient {:?}, expected {:?}",
            dy.shape(),
            [n, o, g.ho, g.wo]
        )));
    }
    let in_per = g.c * g.h * g.w;
    let hw_out = g.ho * g.wo;
    let k = g.rows();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); k * hw_out]
    };
    let mut dcols = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); k * hw_out]
    };
    for i in 0..n {
        let xs = &x.data()[i * in_per..(i + 1) * in_per];
        let dys = &dy.data()[i * o * hw_out..(i + 1) * o * hw_out];
        let b: &[T] = if pointwise {
            xs
        } else {
            im2col(xs, &g, &mut cols);
            &cols
        };
        // dw += dy_i * cols^T
        T::gemm(o, hw_out, k, T::one(), dys, false, b, true, T::one(), dw.data_mut());
        let dxs = &mut dx.data_mut()[i * in_per..(i + 1) * in_per];
        if pointwise {
            T::gemm(k, o, hw_out, T::one(), w.data(), true, dys, false, T::zero(), dxs);
        } else {
            T::gemm(
                k,
                o,
                hw_out,
                T::one(),
                w.data(),
                true,
                dys,
                false,
                T::zero(),
                &mut dcols,
            );
            col2im(&dcols, &g, dxs);
        }
    }
    Ok((dx, dw))
}

fn check_channels<T: Scalar>(x: &Tensor<T>, params: &[&Tensor<T>], what: &str) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = x.dims4()?;
    for p in params {
        if p.shape() != [c] {
            return Err(Error::DimensionMismatch(format!(
                "{what} parameter {:?} for {c} channels",
                p.shape()
            )));
        }
    }
    Ok((n, c, h * w))
}

/// Saved state of a training-mode batch normalization.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T: Scalar> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
}

/// Normalizes each channel by its batch statistics.
pub fn batchnorm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (n, c, hw) = check_channels(x, &[gamma, beta], "batchnorm")?;
    let m = n * hw;
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "training batchnorm needs >= 2 values per channel, got {m}"
        )));
    }
    let mf = T::from_usize(m).expect("count");
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    let xd = x.data();
    for ch in 0..c {
        let mut s = T::zero();
        for i in 0..n {
            for &v in &xd[(i * c + ch) * hw..(i * c + ch + 1) * hw] {
                s += v;
            }
        }
        let mu = s / mf;
        let mut q = T::zero();
        for i in 0..n {
            for &v in &xd[(i * c + ch) * hw..(i * c + ch + 1) * hw] {
                q += (v - mu) * (v - mu);
            }
        }
        mean[ch] = mu;
        var[ch] = q / mf;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut x_hat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for i in 0..n {
        for ch in 0..c {
            let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for k in r {
                let xh = (xd[k] - mean[ch]) * inv_std[ch];
                x_hat.data_mut()[k] = xh;
                y.data_mut()[k] = g * xh + b;
            }
        }
    }
    Ok((
        y,
        BatchNormCache {
            x_hat,
            inv_std,
            mean,
            var,
        },
    ))
}

/// Normalizes with fixed running statistics.
pub fn batchnorm_eval<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    let (n, c, hw) = check_channels(x, &[gamma, beta, running_mean, running_var], "batchnorm")?;
    let mut y = x.clone();
    for ch in 0..c {
        let scale = gamma.data()[ch] / (running_var.data()[ch] + eps).sqrt();
        let shift = beta.data()[ch] - running_mean.data()[ch] * scale;
        for i in 0..n {
            for v in &mut y.data_mut()[(i * c + ch) * hw..(i * c + ch + 1) * hw] {
                *v = *v * scale + shift;
            }
        }
    }
    Ok(y)
}

/// `(dx, dgamma, dbeta)` for [`batchnorm_train`].
pub fn batchnorm_backward<T: Scalar>(
    dy: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BatchNormCache<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    if dy.shape() != cache.x_hat.shape() {
        return Err(Error::DimensionMismatch(format!(
            "batchnorm upstream gradient {:?}, expected {:?}",
            dy.shape(),
            cache.x_hat.shape()
        )));
    }
    let (n, c, hw) = check_channels(dy, &[gamma], "batchnorm")?;
    let mf = T::from_usize(n * hw).expect("count");
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    let (dyd, xh) = (dy.data(), cache.x_hat.data());
    for ch in 0..c {
        let (mut sg, mut sb) = (T::zero(), T::zero());
        for i in 0..n {
            for k in (i * c + ch) * hw..(i * c + ch + 1) * hw {
                sg += dyd[k] * xh[k];
                sb += dyd[k];
            }
        }
        dgamma.data_mut()[ch] = sg;
        dbeta.data_mut()[ch] = sb;
    }
    let mut dx = Tensor::zeros(dy.shape());
    for ch in 0..c {
        let k0 = gamma.data()[ch] * cache.inv_std[ch] / mf;
        let (sg, sb) = (dgamma.data()[ch], dbeta.data()[ch]);
        for i in 0..n {
            for k in (i * c + ch) * hw..(i * c + ch + 1) * hw {
                dx.data_mut()[k] = k0 * (mf * dyd[k] - sb - xh[k] * sg);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `dy` where the forward input was positive.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != dy.shape() {
        return Err(Error::DimensionMismatch(format!(
            "relu {:?} vs {:?}",
            x.shape(),
            dy.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Max pooling with implicit `-inf` padding. The second value holds, per
/// output, the flat input index that won (first in scan order on ties).
pub fn maxpool_forward<T: Scalar>(
    x: &Tensor<T>,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if pad >= k {
        return Err(Error::InvalidArgument(format!(
            "pool padding {pad} must be below kernel {k}"
        )));
    }
    let ho = out_size(h, k, stride, pad)?;
    let wo = out_size(w, k, stride, pad)?;
    let mut y = Tensor::zeros(&[n, c, ho, wo]);
    let mut arg = vec![0usize; n * c * ho * wo];
    let xd = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let mut best = T::neg_infinity();
                let mut at = usize::MAX;
                for u in 0..k {
                    let yy = (i * stride + u) as isize - pad as isize;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for v in 0..k {
                        let xx = (j * stride + v) as isize - pad as isize;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let idx = base + yy as usize * w + xx as usize;
                        if at == usize::MAX || xd[idx] > best {
                            best = xd[idx];
                            at = idx;
                        }
                    }
                }
                let o = (plane * ho + i) * wo + j;
                y.data_mut()[o] = best;
                arg[o] = at;
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], dy: &Tensor<T>) -> Result<Tensor<T>> {
    if argmax.len() != dy.len() {
        return Err(Error::DimensionMismatch(format!(
            "maxpool gradient has {} values for {} routes",
            dy.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&a, &g) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[a] += g;
    }
    Ok(dx)
}

/// Average pooling without padding.
pub fn avgpool_forward<T: Scalar>(x: &Tensor<T>, k: usize, stride: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let ho = out_size(h, k, stride, 0)?;
    let wo = out_size(w, k, stride, 0)?;
    let norm = T::one() / T::from_usize(k * k).expect("count");
    let mut y = Tensor::zeros(&[n, c, ho, wo]);
    let xd = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let mut s = T::zero();
                for u in 0..k {
                    let row = base + (i * stride + u) * w + j * stride;
                    for &v in &xd[row..row + k] {
                        s += v;
                    }
                }
                y.data_mut()[(plane * ho + i) * wo + j] = s * norm;
            }
        }
    }
    Ok(y)
}

pub fn avgpool_backward<T: Scalar>(
    input_shape: &[usize],
    k: usize,
    stride: usize,
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(input_shape);
    let (n, c, h, w) = dx.dims4()?;
    let (ho, wo) = (out_size(h, k, stride, 0)?, out_size(w, k, stride, 0)?);
    if dy.shape() != [n, c, ho, wo] {
        return Err(Error::DimensionMismatch(format!(
            "avgpool upstream gradient {:?}, expected {:?}",
            dy.shape(),
            [n, c, ho, wo]
        )));
    }
    let norm = T::one() / T::from_usize(k * k).expect("count");
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let g = dy.data()[(plane * ho + i) * wo + j] * norm;
                for u in 0..k {
                    let row = base + (i * stride + u) * w + j * stride;
                    for v in &mut dx.data_mut()[row..row + k] {
                        *v += g;
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Mean over each `H x W` plane, giving `[N, C, 1, 1]`.
pub fn global_avgpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let norm = T::one() / T::from_usize(hw).expect("count");
    let data = x
        .data()
        .chunks_exact(hw)
        .map(|p| p.iter().fold(T::zero(), |a, &b| a + b) * norm)
        .collect();
    Tensor::from_vec(&[n, c, 1, 1], data)
}

pub fn global_avgpool_backward<T: Scalar>(input_shape: &[usize], dy: &Tensor<T>) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(input_shape);
    let (n, c, h, w) = dx.dims4()?;
    if dy.len() != n * c {
        return Err(Error::DimensionMismatch(format!(
            "global pool gradient {:?} for input {input_shape:?}",
            dy.shape()
        )));
    }
    let hw = h * w;
    let norm = T::one() / T::from_usize(hw).expect("count");
    for (plane, &g) in dx.data_mut().chunks_exact_mut(hw).zip(dy.data()) {
        plane.fill(g * norm);
    }
    Ok(dx)
}

/// `y = x w^T + b` with `x [N, F]`, `w [O, F]`, `b [O]`.
pub fn linear_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, f) = x.dims2()?;
    let (o, wf) = w.dims2()?;
    if wf != f || b.shape() != [o] {
        return Err(Error::DimensionMismatch(format!(
            "linear input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut y = Tensor::zeros(&[n, o]);
    for row in y.data_mut().chunks_exact_mut(o) {
        row.copy_from_slice(b.data());
    }
    T::gemm(
        n,
        f,
        o,
        T::one(),
        x.data(),
        false,
        w.data(),
        true,
        T::one(),
        y.data_mut(),
    );
    Ok(y)
}

/// `(dx, dw, db)` for [`linear_forward`].
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, f) = x.dims2()?;
    let (o, _) = w.dims2()?;
    if dy.shape() != [n, o] {
        return Err(Error::DimensionMismatch(format!(
            "linear upstream gradient {:?}, expected {:?}",
            dy.shape(),
            [n, o]
        )));
    }
    let mut dx = Tensor::zeros(&[n, f]);
    T::gemm(
        n,
        o,
        f,
        T::one(),
        dy.data(),
        false,
        w.data(),
        false,
        T::zero(),
        dx.data_mut(),
    );
    let mut dw = Tensor::zeros(&[o, f]);
    T::gemm(
        o,
        n,
        f,
        T::one(),
        dy.data(),
        true,
        x.data(),
        false,
        T::zero(),
        dw.data_mut(),
    );
    let mut db = Tensor::zeros(&[o]);
    for row in dy.data().chunks_exact(o) {
        for (d, &g) in db.data_mut().iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok((dx, dw, db))
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = logits.dims2()?;
    let mut p = logits.clone();
    for row in p.data_mut().chunks_exact_mut(k) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    Ok(p)
}

/// Mean cross-entropy over the batch and its gradient `(p - onehot) / N`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} outside [0, {k})")));
    }
    let nf = T::from_usize(n).expect("count");
    let mut grad = logits.clone();
    let mut loss = T::zero();
    for (row, &label) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse = row.iter().fold(T::zero(), |a, &v| a + (v - m).exp()).ln() + m;
        loss += lse - row[label];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / nf;
        }
        row[label] -= T::one() / nf;
    }
    Ok((loss / nf, grad))
}
