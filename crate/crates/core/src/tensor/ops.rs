//! Forward and backward kernels on plain tensors.
//!
//! Every backward function takes the upstream gradient `gy` (same shape as
//! the forward output) and returns gradients for the forward inputs.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Zero-padded 2D convolution geometry (same padding on all four sides).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub pad: usize,
}

impl Conv2dSpec {
    pub const fn new(stride: usize, pad: usize) -> Self {
        Conv2dSpec { stride, pad }
    }

    /// Stride 1 with padding that preserves the spatial size of an odd kernel.
    pub const fn same(k: usize) -> Self {
        Conv2dSpec {
            stride: 1,
            pad: (k - 1) / 2,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize, kh: usize, kw: usize) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(Error::shape("conv2d stride must be positive"));
        }
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if ph < kh || pw < kw {
            return Err(Error::shape(format!(
                "padded input {ph}x{pw} smaller than kernel {kh}x{kw}"
            )));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }
}

fn conv_shapes<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    spec: Conv2dSpec,
) -> Result<(Shape, Shape)> {
    let xs = x.shape();
    let ks = kernel.shape();
    if ks.c != xs.c {
        return Err(Error::shape(format!(
            "conv2d kernel {ks} expects {} input channels, input is {xs}",
            ks.c
        )));
    }
    let (oh, ow) = spec.output_hw(xs.h, xs.w, ks.h, ks.w)?;
    Ok((ks, Shape::new(xs.n, ks.n, oh, ow)))
}

/// Unfolds one batch item into columns `base..base + oh*ow` of a column
/// matrix with `cin*kh*kw` rows and row stride `ld`.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    item: &[T],
    xs: Shape,
    ks: Shape,
    out: Shape,
    spec: Conv2dSpec,
    col: &mut [T],
    ld: usize,
    base: usize,
) {
    let ohw = out.h * out.w;
    let pad = spec.pad as isize;
    for ci in 0..xs.c {
        let plane = &item[ci * xs.plane()..(ci + 1) * xs.plane()];
        for ky in 0..ks.h {
            for kx in 0..ks.w {
                let row = (ci * ks.h + ky) * ks.w + kx;
                let dst = &mut col[row * ld + base..row * ld + base + ohw];
                for oy in 0..out.h {
                    let iy = (oy * spec.stride + ky) as isize - pad;
                    let dst_row = &mut dst[oy * out.w..(oy + 1) * out.w];
                    if iy < 0 || iy >= xs.h as isize {
                        dst_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * xs.w..(iy as usize + 1) * xs.w];
                    let (lo, hi) = valid_columns(xs.w, out.w, kx, spec);
                    dst_row[..lo].fill(T::zero());
                    dst_row[hi..].fill(T::zero());
                    if lo < hi {
                        let first = lo * spec.stride + kx - spec.pad;
                        if spec.stride == 1 {
                            dst_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (d, &v) in dst_row[lo..hi]
                                .iter_mut()
                                .zip(src[first..].iter().step_by(spec.stride))
                            {
                                *d = v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `lo..hi` whose input column `ox * stride + kx - pad`
/// falls inside a row of width `w`.
fn valid_columns(w: usize, out_w: usize, kx: usize, spec: Conv2dSpec) -> (usize, usize) {
    let lo = if spec.pad > kx {
        (spec.pad - kx).div_ceil(spec.stride)
    } else {
        0
    };
    let hi = if w + spec.pad > kx {
        (w + spec.pad - kx).div_ceil(spec.stride).min(out_w)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Folds columns `base..base + oh*ow` back, accumulating into one batch item.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    col: &[T],
    xs: Shape,
    ks: Shape,
    out: Shape,
    spec: Conv2dSpec,
    item: &mut [T],
    ld: usize,
    base: usize,
) {
    let pad = spec.pad as isize;
    for ci in 0..xs.c {
        let plane = &mut item[ci * xs.plane()..(ci + 1) * xs.plane()];
        for ky in 0..ks.h {
            for kx in 0..ks.w {
                let row = (ci * ks.h + ky) * ks.w + kx;
                let src = &col[row * ld + base..];
                for oy in 0..out.h {
                    let iy = (oy * spec.stride + ky) as isize - pad;
                    if iy < 0 || iy >= xs.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * xs.w..(iy as usize + 1) * xs.w];
                    let (lo, hi) = valid_columns(xs.w, out.w, kx, spec);
                    if lo < hi {
                        let first = lo * spec.stride + kx - spec.pad;
                        let srow = &src[oy * out.w + lo..oy * out.w + hi];
                        for (d, &v) in dst[first..].iter_mut().step_by(spec.stride).zip(srow) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// Columns per GEMM call; batch items are grouped until this is reached so
/// small late-stage maps still produce reasonably shaped products.
const GEMM_COLUMNS: usize = 4096;

fn group_size(ohw: usize, n: usize) -> usize {
    (GEMM_COLUMNS / ohw.max(1)).clamp(1, n.max(1))
}

/// Gathers items `n0..n0+g` of an `N x C x HW` buffer into a `C x (g*HW)`
/// matrix.
fn to_matrix<T: Scalar>(t: &[T], m: &mut [T], c: usize, hw: usize, n0: usize, g: usize) {
    for i in 0..g {
        for ch in 0..c {
            let src = (n0 + i) * c * hw + ch * hw;
            let dst = ch * g * hw + i * hw;
            m[dst..dst + hw].copy_from_slice(&t[src..src + hw]);
        }
    }
}

/// Inverse of [`to_matrix`].
fn from_matrix<T: Scalar>(m: &[T], t: &mut [T], c: usize, hw: usize, n0: usize, g: usize) {
    for i in 0..g {
        for ch in 0..c {
            let dst = (n0 + i) * c * hw + ch * hw;
            let src = ch * g * hw + i * hw;
            t[dst..dst + hw].copy_from_slice(&m[src..src + hw]);
        }
    }
}

/// Cross-correlation of `x` (N,Cin,H,W) with `kernel` (Cout,Cin,Kh,Kw); no bias.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, spec: Conv2dSpec) -> Result<Tensor<T>> {
    let xs = x.shape();
    let (ks, os) = conv_shapes(x, kernel, spec)?;
    let mut out = Tensor::zeros(os);
    let ckk = ks.c * ks.h * ks.w;
    let ohw = os.h * os.w;
    let group = group_size(ohw, xs.n);
    let mut col = vec![T::zero(); ckk * group * ohw];
    let mut res = vec![T::zero(); ks.n * group * ohw];
    let mut n0 = 0;
    while n0 < xs.n {
        let g = group.min(xs.n - n0);
        let ld = g * ohw;
        for i in 0..g {
            im2col(x.item(n0 + i), xs, ks, os, spec, &mut col, ld, i * ohw);
        }
        T::gemm(
            ks.n,
            ckk,
            ld,
            T::one(),
            kernel.data(),
            (ckk as isize, 1),
            &col,
            (ld as isize, 1),
            T::zero(),
            &mut res,
            (ld as isize, 1),
        );
        from_matrix(&res, out.data_mut(), ks.n, ohw, n0, g);
        n0 += g;
    }
    Ok(out)
}

/// Gradients of [`conv2d`]: `(dx, dkernel)`. `dx` is skipped when not needed.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    spec: Conv2dSpec,
    gy: &Tensor<T>,
    need_dx: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>)> {
    let xs = x.shape();
    let (ks, os) = conv_shapes(x, kernel, spec)?;
    if gy.shape() != os {
        return Err(Error::shape(format!(
            "conv2d upstream gradient {} != output {os}",
            gy.shape()
        )));
    }
    let ckk = ks.c * ks.h * ks.w;
    let ohw = os.h * os.w;
    let group = group_size(ohw, xs.n);
    let mut dk = Tensor::zeros(ks);
    let mut dx = need_dx.then(|| Tensor::zeros(xs));
    let mut col = vec![T::zero(); ckk * group * ohw];
    let mut gmat = vec![T::zero(); ks.n * group * ohw];
    let mut dcol = vec![T::zero(); if need_dx { ckk * group * ohw } else { 0 }];
    let mut n0 = 0;
    while n0 < xs.n {
        let g = group.min(xs.n - n0);
        let ld = g * ohw;
        for i in 0..g {
            im2col(x.item(n0 + i), xs, ks, os, spec, &mut col, ld, i * ohw);
        }
        to_matrix(gy.data(), &mut gmat, ks.n, ohw, n0, g);
        // dK += G * col^T
        T::gemm(
            ks.n,
            ld,
            ckk,
            T::one(),
            &gmat,
            (ld as isize, 1),
            &col,
            (1, ld as isize),
            T::one(),
            dk.data_mut(),
            (ckk as isize, 1),
        );
        if let Some(dx) = dx.as_mut() {
            // dcol = K^T * G
            T::gemm(
                ckk,
                ks.n,
                ld,
                T::one(),
                kernel.data(),
                (1, ckk as isize),
                &gmat,
                (ld as isize, 1),
                T::zero(),
                &mut dcol,
                (ld as isize, 1),
            );
            for i in 0..g {
                col2im(&dcol, xs, ks, os, spec, dx.item_mut(n0 + i), ld, i * ohw);
            }
        }
        n0 += g;
    }
    Ok((dx, dk))
}

/// Saved state of a training-mode batchnorm forward.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Unbiased per-channel variance, used for running statistics.
    pub var_unbiased: Vec<T>,
}

fn check_affine<T: Scalar>(x: &Tensor<T>, alpha: &[T], beta: &[T]) -> Result<()> {
    let c = x.shape().c;
    if alpha.len() != c || beta.len() != c {
        return Err(Error::shape(format!(
            "batchnorm affine of length {}/{} for {} channels",
            alpha.len(),
            beta.len(),
            c
        )));
    }
    Ok(())
}

/// Batch-statistics normalization: `alpha * (x - mean) / sqrt(var + eps) + beta`.
pub fn batchnorm2d<T: Scalar>(
    x: &Tensor<T>,
    alpha: &[T],
    beta: &[T],
    eps: T,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    check_affine(x, alpha, beta)?;
    let s = x.shape();
    let m = s.n * s.plane();
    if m < 2 {
        return Err(Error::shape(format!(
            "batchnorm needs at least 2 values per channel, input is {s}"
        )));
    }
    let mf = T::of(m as f64);
    let mut out = Tensor::zeros(s);
    let mut xhat = Tensor::zeros(s);
    let mut inv_std = vec![T::zero(); s.c];
    let mut means = vec![T::zero(); s.c];
    let mut var_unbiased = vec![T::zero(); s.c];
    for c in 0..s.c {
        let mut sum = T::zero();
        for n in 0..s.n {
            sum += x.plane(n, c).iter().copied().sum::<T>();
        }
        let mean = sum / mf;
        let mut ss = T::zero();
        for n in 0..s.n {
            ss += x
                .plane(n, c)
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<T>();
        }
        let var = ss / mf;
        let istd = T::one() / (var + eps).sqrt();
        means[c] = mean;
        inv_std[c] = istd;
        var_unbiased[c] = ss / T::of((m - 1) as f64);
        for n in 0..s.n {
            let src = x.plane(n, c);
            let xh = xhat.plane_mut(n, c);
            for (d, &v) in xh.iter_mut().zip(src) {
                *d = (v - mean) * istd;
            }
            let xh = xhat.plane(n, c).to_vec();
            for (o, v) in out.plane_mut(n, c).iter_mut().zip(xh) {
                *o = alpha[c] * v + beta[c];
            }
        }
    }
    Ok((
        out,
        BatchNormCache {
            xhat,
            inv_std,
            mean: means,
            var_unbiased,
        },
    ))
}

/// Gradients of [`batchnorm2d`]: `(dx, dalpha, dbeta)`.
pub fn batchnorm2d_backward<T: Scalar>(
    gy: &Tensor<T>,
    alpha: &[T],
    cache: &BatchNormCache<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let s = gy.shape();
    let mf = T::of((s.n * s.plane()) as f64);
    let mut dx = Tensor::zeros(s);
    let mut dalpha = vec![T::zero(); s.c];
    let mut dbeta = vec![T::zero(); s.c];
    for c in 0..s.c {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for n in 0..s.n {
            for (&g, &xh) in gy.plane(n, c).iter().zip(cache.xhat.plane(n, c)) {
                sum_g += g;
                sum_gx += g * xh;
            }
        }
        dalpha[c] = sum_gx;
        dbeta[c] = sum_g;
        let k = alpha[c] * cache.inv_std[c] / mf;
        for n in 0..s.n {
            let g = gy.plane(n, c).to_vec();
            let xh = cache.xhat.plane(n, c).to_vec();
            for ((d, gv), xv) in dx.plane_mut(n, c).iter_mut().zip(g).zip(xh) {
                *d = k * (mf * gv - sum_g - xv * sum_gx);
            }
        }
    }
    (dx, dalpha, dbeta)
}

/// Normalization with frozen statistics (evaluation mode).
pub fn batchnorm2d_frozen<T: Scalar>(
    x: &Tensor<T>,
    alpha: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    check_affine(x, alpha, beta)?;
    let s = x.shape();
    let mut out = Tensor::zeros(s);
    for c in 0..s.c {
        let istd = T::one() / (var[c] + eps).sqrt();
        for n in 0..s.n {
            let src = x.plane(n, c).to_vec();
            for (o, v) in out.plane_mut(n, c).iter_mut().zip(src) {
                *o = alpha[c] * (v - mean[c]) * istd + beta[c];
            }
        }
    }
    Ok(out)
}

/// Gradients of [`batchnorm2d_frozen`]: `(dx, dalpha, dbeta)`.
pub fn batchnorm2d_frozen_backward<T: Scalar>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    alpha: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let s = x.shape();
    let mut dx = Tensor::zeros(s);
    let mut dalpha = vec![T::zero(); s.c];
    let mut dbeta = vec![T::zero(); s.c];
    for c in 0..s.c {
        let istd = T::one() / (var[c] + eps).sqrt();
        for n in 0..s.n {
            let xs = x.plane(n, c).to_vec();
            let g = gy.plane(n, c).to_vec();
            for ((d, &gv), &xv) in dx.plane_mut(n, c).iter_mut().zip(&g).zip(&xs) {
                *d = gv * alpha[c] * istd;
                dalpha[c] += gv * (xv - mean[c]) * istd;
                dbeta[c] += gv;
            }
        }
    }
    (dx, dalpha, dbeta)
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { slope * v })
}

pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, gy: &Tensor<T>, slope: T) -> Tensor<T> {
    x.zip_map(gy, |v, g| if v >= T::zero() { g } else { slope * g })
        .expect("leaky_relu gradient shape")
}

/// Numerically stable softmax of one window of logits.
pub fn softmax_window<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax across the channel axis at every (n, h, w) location.
pub fn softmax_channels<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let mut out = Tensor::zeros(s);
    let mut window = vec![T::zero(); s.c];
    for n in 0..s.n {
        for p in 0..s.plane() {
            for (c, v) in window.iter_mut().enumerate() {
                *v = x.item(n)[c * s.plane() + p];
            }
            let probs = softmax_window(&window);
            let item = out.item_mut(n);
            for (c, v) in probs.into_iter().enumerate() {
                item[c * s.plane() + p] = v;
            }
        }
    }
    out
}

/// Gradient of [`softmax_channels`] given its output `y`.
pub fn softmax_channels_backward<T: Scalar>(y: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let s = y.shape();
    let mut dx = Tensor::zeros(s);
    for n in 0..s.n {
        let yi = y.item(n);
        let gi = gy.item(n);
        let di = dx.item_mut(n);
        for p in 0..s.plane() {
            let dot: T = (0..s.c)
                .map(|c| yi[c * s.plane() + p] * gi[c * s.plane() + p])
                .sum();
            for c in 0..s.c {
                let i = c * s.plane() + p;
                di[i] = yi[i] * (gi[i] - dot);
            }
        }
    }
    dx
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::shape(format!("cannot concat {sa} with {sb}")));
    }
    let shape = sa.with_c(sa.c + sb.c);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..sa.n {
        data.extend_from_slice(a.item(n));
        data.extend_from_slice(b.item(n));
    }
    Tensor::from_vec(shape, data)
}

/// Splits a channel-concatenated gradient back into its two parts.
pub fn split_channels<T: Scalar>(g: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let cb = g.shape().c - ca;
    (
        g.channels(0, ca).expect("split range"),
        g.channels(ca, cb).expect("split range"),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    H,
    W,
}

/// Half-sample symmetric extension along one axis: the edge sample is
/// repeated, then the signal is mirrored (`1 2 3` -> `1 1 2 3 3`).
pub fn symmetric_pad<T: Scalar>(
    x: &Tensor<T>,
    before: usize,
    after: usize,
    axis: Axis,
) -> Result<Tensor<T>> {
    let s = x.shape();
    let len = match axis {
        Axis::H => s.h,
        Axis::W => s.w,
    };
    if before > len || after > len {
        return Err(Error::shape(format!(
            "symmetric pad ({before}, {after}) exceeds axis length {len}"
        )));
    }
    let out_shape = match axis {
        Axis::H => s.with_hw(s.h + before + after, s.w),
        Axis::W => s.with_hw(s.h, s.w + before + after),
    };
    Ok(Tensor::from_fn(out_shape, |n, c, h, w| match axis {
        Axis::H => x.at(n, c, symmetric_index(h as isize - before as isize, s.h), w),
        Axis::W => x.at(n, c, h, symmetric_index(w as isize - before as isize, s.w)),
    }))
}

/// Maps an index of the symmetrically extended signal back into `0..len`.
pub fn symmetric_index(i: isize, len: usize) -> usize {
    let len = len as isize;
    let period = 2 * len;
    let mut k = i.rem_euclid(period);
    if k >= len {
        k = period - 1 - k;
    }
    k as usize
}

/// Window `[top..top+h, left..left+w]` of every plane.
pub fn crop<T: Scalar>(
    x: &Tensor<T>,
    top: usize,
    left: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let s = x.shape();
    if top + h > s.h || left + w > s.w {
        return Err(Error::shape(format!(
            "crop {h}x{w} at ({top},{left}) exceeds {s}"
        )));
    }
    Ok(Tensor::from_fn(s.with_hw(h, w), |n, c, y, z| {
        x.at(n, c, y + top, z + left)
    }))
}

pub fn crop_backward<T: Scalar>(
    input_shape: Shape,
    gy: &Tensor<T>,
    top: usize,
    left: usize,
) -> Tensor<T> {
    let gs = gy.shape();
    let mut dx = Tensor::zeros(input_shape);
    for n in 0..gs.n {
        for c in 0..gs.c {
            for y in 0..gs.h {
                for z in 0..gs.w {
                    *dx.at_mut(n, c, y + top, z + left) = gy.at(n, c, y, z);
                }
            }
        }
    }
    dx
}

/// Bilinear interpolation weights for a fractional coordinate.
#[derive(Clone, Copy, Debug)]
pub struct BilinearTaps<T> {
    pub y0: isize,
    pub x0: isize,
    pub fy: T,
    pub fx: T,
}

impl<T: Scalar> BilinearTaps<T> {
    pub fn new(y: T, x: T) -> Option<Self> {
        if !y.is_finite() || !x.is_finite() {
            return None;
        }
        let (yf, xf) = (y.floor(), x.floor());
        Some(BilinearTaps {
            y0: yf.to_isize()?,
            x0: xf.to_isize()?,
            fy: y - yf,
            fx: x - xf,
        })
    }

    /// The four neighbours with their weights and the weights' partial
    /// derivatives with respect to `y` and `x`: `(row, col, w, dw/dy, dw/dx)`.
    pub fn taps(&self) -> [(isize, isize, T, T, T); 4] {
        let one = T::one();
        let (fy, fx) = (self.fy, self.fx);
        [
            (
                self.y0,
                self.x0,
                (one - fy) * (one - fx),
                -(one - fx),
                -(one - fy),
            ),
            (self.y0, self.x0 + 1, (one - fy) * fx, -fx, one - fy),
            (self.y0 + 1, self.x0, fy * (one - fx), one - fx, -fy),
            (self.y0 + 1, self.x0 + 1, fy * fx, fx, fy),
        ]
    }
}

#[inline]
fn in_plane(row: isize, col: isize, h: usize, w: usize) -> bool {
    row >= 0 && col >= 0 && (row as usize) < h && (col as usize) < w
}

/// Reads `map[n, c]` at fractional `(y, x)`; neighbours outside the plane read zero.
pub fn bilinear_sample<T: Scalar>(map: &Tensor<T>, n: usize, c: usize, y: T, x: T) -> T {
    bilinear_sample_grad(map, n, c, y, x).0
}

/// Value together with its partial derivatives with respect to `y` and `x`.
pub fn bilinear_sample_grad<T: Scalar>(
    map: &Tensor<T>,
    n: usize,
    c: usize,
    y: T,
    x: T,
) -> (T, T, T) {
    let s = map.shape();
    let Some(b) = BilinearTaps::new(y, x) else {
        return (T::zero(), T::zero(), T::zero());
    };
    let plane = map.plane(n, c);
    let mut acc = (T::zero(), T::zero(), T::zero());
    for (r, q, wt, dy, dx) in b.taps() {
        if in_plane(r, q, s.h, s.w) {
            let v = plane[r as usize * s.w + q as usize];
            acc.0 += wt * v;
            acc.1 += dy * v;
            acc.2 += dx * v;
        }
    }
    acc
}

fn check_align<T: Scalar>(ft: &Tensor<T>, offsets: &Tensor<T>, u: &Tensor<T>) -> Result<usize> {
    let (fs, os, us) = (ft.shape(), offsets.shape(), u.shape());
    if os.n != fs.n || os.c != 2 || os.h != fs.h || os.w != fs.w {
        return Err(Error::shape(format!(
            "offset field {os} does not match features {fs} (expected Nx2xHxW)"
        )));
    }
    if us.numel() != us.h * us.w || us.h != us.w || us.h % 2 == 0 {
        return Err(Error::shape(format!(
            "aggregation weights {us} must be a single odd KxK window"
        )));
    }
    Ok(us.h)
}

/// Shifted-receptive-field resampling: for every output pixel `(r, q)`,
/// `sum_{u,v} U[u,v] * F(r + u + dy(r,q), q + v + dx(r,q))` with `(u, v)`
/// centred on zero and bilinear reads. Offsets are channel 0 = dy, 1 = dx.
pub fn csa_align<T: Scalar>(
    ft: &Tensor<T>,
    offsets: &Tensor<T>,
    u: &Tensor<T>,
) -> Result<Tensor<T>> {
    let k = check_align(ft, offsets, u)?;
    let half = (k / 2) as isize;
    let s = ft.shape();
    let mut out = Tensor::zeros(s);
    let uw = u.data();
    for n in 0..s.n {
        for r in 0..s.h {
            for q in 0..s.w {
                let oy = offsets.at(n, 0, r, q);
                let ox = offsets.at(n, 1, r, q);
                for a in 0..k {
                    for b in 0..k {
                        let weight = uw[a * k + b];
                        let y = T::of((r as isize + a as isize - half) as f64) + oy;
                        let x = T::of((q as isize + b as isize - half) as f64) + ox;
                        let Some(bt) = BilinearTaps::new(y, x) else {
                            continue;
                        };
                        for (rr, qq, wt, _, _) in bt.taps() {
                            if !in_plane(rr, qq, s.h, s.w) {
                                continue;
                            }
                            let idx = rr as usize * s.w + qq as usize;
                            let coef = weight * wt;
                            for c in 0..s.c {
                                let v = ft.plane(n, c)[idx];
                                *out.at_mut(n, c, r, q) += coef * v;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`csa_align`]: `(dF, doffsets, dU)`.
pub fn csa_align_backward<T: Scalar>(
    ft: &Tensor<T>,
    offsets: &Tensor<T>,
    u: &Tensor<T>,
    gy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let k = check_align(ft, offsets, u)?;
    let half = (k / 2) as isize;
    let s = ft.shape();
    let mut dft = Tensor::zeros(s);
    let mut doff = Tensor::zeros(offsets.shape());
    let mut du = Tensor::zeros(u.shape());
    let uw = u.data();
    for n in 0..s.n {
        for r in 0..s.h {
            for q in 0..s.w {
                let oy = offsets.at(n, 0, r, q);
                let ox = offsets.at(n, 1, r, q);
                let mut g_oy = T::zero();
                let mut g_ox = T::zero();
                for a in 0..k {
                    for b in 0..k {
                        let weight = uw[a * k + b];
                        let y = T::of((r as isize + a as isize - half) as f64) + oy;
                        let x = T::of((q as isize + b as isize - half) as f64) + ox;
                        let Some(bt) = BilinearTaps::new(y, x) else {
                            continue;
                        };
                        let mut g_u = T::zero();
                        for (rr, qq, wt, dwy, dwx) in bt.taps() {
                            if !in_plane(rr, qq, s.h, s.w) {
                                continue;
                            }
                            let idx = rr as usize * s.w + qq as usize;
                            for c in 0..s.c {
                                let g = gy.at(n, c, r, q);
                                let v = ft.plane(n, c)[idx];
                                g_u += g * wt * v;
                                g_oy += g * weight * dwy * v;
                                g_ox += g * weight * dwx * v;
                                dft.plane_mut(n, c)[idx] += g * weight * wt;
                            }
                        }
                        du.data_mut()[a * k + b] += g_u;
                    }
                }
                *doff.at_mut(n, 0, r, q) = g_oy;
                *doff.at_mut(n, 1, r, q) = g_ox;
            }
        }
    }
    Ok((dft, doff, du))
}

fn check_srf<T: Scalar>(f: &Tensor<T>, weights: &Tensor<T>) -> Result<usize> {
    let (fs, ws) = (f.shape(), weights.shape());
    let kr = (ws.c as f64).sqrt().round() as usize;
    if kr * kr != ws.c || kr.is_multiple_of(2) {
        return Err(Error::shape(format!(
            "rearranging weights have {} channels; expected an odd square",
            ws.c
        )));
    }
    if ws.n != fs.n || ws.h != fs.h || ws.w != fs.w {
        return Err(Error::shape(format!(
            "weight map {ws} does not match features {fs}"
        )));
    }
    Ok(kr)
}

/// Per-pixel dynamic filtering: `G(l) = sum_{x,y} W_l(x,y) F(m+x, n+y)`.
/// Weight channel `i` addresses the window tap `(i / kr - k, i % kr - k)`.
pub fn srf_aggregate<T: Scalar>(f: &Tensor<T>, weights: &Tensor<T>) -> Result<Tensor<T>> {
    let kr = check_srf(f, weights)?;
    let k = (kr / 2) as isize;
    let s = f.shape();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for i in 0..kr * kr {
            let dy = (i / kr) as isize - k;
            let dx = (i % kr) as isize - k;
            let wplane = weights.plane(n, i).to_vec();
            for c in 0..s.c {
                let src = f.plane(n, c).to_vec();
                let dst = out.plane_mut(n, c);
                for r in 0..s.h {
                    let rr = r as isize + dy;
                    if rr < 0 || rr >= s.h as isize {
                        continue;
                    }
                    for q in 0..s.w {
                        let qq = q as isize + dx;
                        if qq < 0 || qq >= s.w as isize {
                            continue;
                        }
                        dst[r * s.w + q] +=
                            wplane[r * s.w + q] * src[rr as usize * s.w + qq as usize];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`srf_aggregate`]: `(dF, dW)`.
pub fn srf_aggregate_backward<T: Scalar>(
    f: &Tensor<T>,
    weights: &Tensor<T>,
    gy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let kr = check_srf(f, weights)?;
    let k = (kr / 2) as isize;
    let s = f.shape();
    let mut df = Tensor::zeros(s);
    let mut dw = Tensor::zeros(weights.shape());
    for n in 0..s.n {
        for i in 0..kr * kr {
            let dy = (i / kr) as isize - k;
            let dx = (i % kr) as isize - k;
            let wplane = weights.plane(n, i).to_vec();
            let mut dwplane = vec![T::zero(); s.plane()];
            for c in 0..s.c {
                let src = f.plane(n, c).to_vec();
                let g = gy.plane(n, c).to_vec();
                let dst = df.plane_mut(n, c);
                for r in 0..s.h {
                    let rr = r as isize + dy;
                    if rr < 0 || rr >= s.h as isize {
                        continue;
                    }
                    for q in 0..s.w {
                        let qq = q as isize + dx;
                        if qq < 0 || qq >= s.w as isize {
                            continue;
                        }
                        let j = rr as usize * s.w + qq as usize;
                        let o = r * s.w + q;
                        dwplane[o] += g[o] * src[j];
                        dst[j] += g[o] * wplane[o];
                    }
                }
            }
            dw.plane_mut(n, i).copy_from_slice(&dwplane);
        }
    }
    Ok((df, dw))
}

/// Spatial mean per (n, c), output `N x C x 1 x 1`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let inv = T::one() / T::of(s.plane() as f64);
    Tensor::from_fn(Shape::new(s.n, s.c, 1, 1), |n, c, _, _| {
        x.plane(n, c).iter().copied().sum::<T>() * inv
    })
}

pub fn global_avg_pool_backward<T: Scalar>(input_shape: Shape, gy: &Tensor<T>) -> Tensor<T> {
    let inv = T::one() / T::of(input_shape.plane() as f64);
    Tensor::from_fn(input_shape, |n, c, _, _| gy.at(n, c, 0, 0) * inv)
}

/// Fully connected layer on `N x C x 1 x 1` inputs.
/// `weight` is `P x C x 1 x 1`, `bias` is `1 x P x 1 x 1`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.item() != ws.item() || bias.len() != ws.n {
        return Err(Error::shape(format!(
            "linear weight {ws} / bias {} incompatible with input {xs}",
            bias.shape()
        )));
    }
    let (c, p) = (ws.item(), ws.n);
    let mut out = Tensor::zeros(Shape::new(xs.n, p, 1, 1));
    for n in 0..xs.n {
        out.item_mut(n).copy_from_slice(bias.data());
    }
    T::gemm(
        xs.n,
        c,
        p,
        T::one(),
        x.data(),
        (c as isize, 1),
        weight.data(),
        (1, c as isize),
        T::one(),
        out.data_mut(),
        (p as isize, 1),
    );
    Ok(out)
}

/// Gradients of [`linear`]: `(dx, dweight, dbias)`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    gy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (xs, ws) = (x.shape(), weight.shape());
    let (c, p) = (ws.item(), ws.n);
    let mut dx = Tensor::zeros(xs);
    let mut dw = Tensor::zeros(ws);
    let mut db = Tensor::zeros(Shape::new(1, p, 1, 1));
    T::gemm(
        xs.n,
        p,
        c,
        T::one(),
        gy.data(),
        (p as isize, 1),
        weight.data(),
        (c as isize, 1),
        T::zero(),
        dx.data_mut(),
        (c as isize, 1),
    );
    T::gemm(
        p,
        xs.n,
        c,
        T::one(),
        gy.data(),
        (1, p as isize),
        x.data(),
        (c as isize, 1),
        T::zero(),
        dw.data_mut(),
        (c as isize, 1),
    );
    for n in 0..xs.n {
        for (d, &g) in db.data_mut().iter_mut().zip(gy.item(n)) {
            *d += g;
        }
    }
    (dx, dw, db)
}

/// Mean softmax cross-entropy over the batch; returns `(loss, probabilities)`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let s = logits.shape();
    if labels.len() != s.n {
        return Err(Error::shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            s.n
        )));
    }
    let classes = s.item();
    let mut probs = Tensor::zeros(s);
    let mut loss = T::zero();
    for (n, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::shape(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let p = softmax_window(logits.item(n));
        // `max` would swallow a NaN probability
        let pl = p[label];
        loss -= if pl.is_nan() {
            pl
        } else {
            pl.max(T::min_positive_value()).ln()
        };
        probs.item_mut(n).copy_from_slice(&p);
    }
    Ok((loss / T::of(s.n as f64), probs))
}

pub fn softmax_cross_entropy_backward<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
    g: T,
) -> Tensor<T> {
    let s = probs.shape();
    let scale = g / T::of(s.n as f64);
    let mut dx = probs.scale(scale);
    for (n, &label) in labels.iter().enumerate() {
        dx.item_mut(n)[label] -= scale;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, spec: Conv2dSpec) -> Tensor<f64> {
        let xs = x.shape();
        let ks = k.shape();
        let (oh, ow) = spec.output_hw(xs.h, xs.w, ks.h, ks.w).unwrap();
        let mut out = Tensor::zeros(Shape::new(xs.n, ks.n, oh, ow));
        for n in 0..xs.n {
            for co in 0..ks.n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..xs.c {
                            for ky in 0..ks.h {
                                for kx in 0..ks.w {
                                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                                    let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                                    if iy >= 0
                                        && ix >= 0
                                        && (iy as usize) < xs.h
                                        && (ix as usize) < xs.w
                                    {
                                        acc += x.at(n, ci, iy as usize, ix as usize)
                                            * k.at(co, ci, ky, kx);
                                    }
                                }
                            }
                        }
                        *out.at_mut(n, co, oy, ox) = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_scalar_kernel_scales() {
        let x = Tensor::<f32>::full(Shape::new(1, 1, 2, 2), 1.0);
        let k = Tensor::<f32>::full(Shape::new(1, 1, 1, 1), 2.0);
        let y = conv2d(&x, &k, Conv2dSpec::new(1, 0)).unwrap();
        assert_eq!(y.data(), &[2.0; 4]);
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::randn(Shape::new(1, 1, 3, 3), 1.0, &mut rng);
        let mut k = Tensor::<f32>::zeros(Shape::new(1, 1, 3, 3));
        *k.at_mut(0, 0, 1, 1) = 1.0;
        let y = conv2d(&x, &k, Conv2dSpec::same(3)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_grouping_is_invisible() {
        // 70x70 maps put one item per GEMM, 3x3 maps the whole batch
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (n, hw) in [(3, 70), (5, 3)] {
            let x = Tensor::<f64>::randn(Shape::new(n, 2, hw, hw), 1.0, &mut rng);
            let k = Tensor::<f64>::randn(Shape::new(3, 2, 3, 3), 1.0, &mut rng);
            let gy = Tensor::<f64>::randn(Shape::new(n, 3, hw, hw), 1.0, &mut rng);
            let spec = Conv2dSpec::same(3);
            let y = conv2d(&x, &k, spec).unwrap();
            assert!(y.max_abs_diff(&naive_conv(&x, &k, spec)) < 1e-10);
            let (dx, dk) = conv2d_backward(&x, &k, spec, &gy, true).unwrap();
            let mut dk_sum = Tensor::zeros(k.shape());
            for i in 0..n {
                let xi = x.batch_range(i, 1).unwrap();
                let gi = gy.batch_range(i, 1).unwrap();
                let (dxi, dki) = conv2d_backward(&xi, &k, spec, &gi, true).unwrap();
                assert!(
                    dxi.unwrap()
                        .max_abs_diff(&dx.as_ref().unwrap().batch_range(i, 1).unwrap())
                        < 1e-10
                );
                dk_sum = dk_sum.add(&dki).unwrap();
            }
            assert!(dk.max_abs_diff(&dk_sum) < 1e-9);
        }
    }

    #[test]
    fn conv_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f64>::randn(Shape::new(2, 3, 8, 8), 1.0, &mut rng);
        let k = Tensor::<f64>::randn(Shape::new(4, 3, 3, 3), 1.0, &mut rng);
        for spec in [
            Conv2dSpec::new(1, 0),
            Conv2dSpec::new(1, 1),
            Conv2dSpec::new(2, 1),
        ] {
            let fast = conv2d(&x, &k, spec).unwrap();
            let slow = naive_conv(&x, &k, spec);
            assert!(fast.max_abs_diff(&slow) < 1e-6, "{spec:?}");
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let k = Tensor::<f32>::zeros(Shape::new(1, 3, 3, 3));
        assert!(matches!(
            conv2d(&x, &k, Conv2dSpec::same(3)),
            Err(Error::Shape(_))
        ));
        let small = Tensor::<f32>::zeros(Shape::new(1, 3, 2, 2));
        assert!(conv2d(&small, &k, Conv2dSpec::new(1, 0)).is_err());
    }

    #[test]
    fn batchnorm_two_point_and_affine_collapse() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, 3.0]).unwrap();
        let (y, _) = batchnorm2d(&x, &[1.0], &[0.0], 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9 && (y.data()[1] - 1.0).abs() < 1e-9);
        let (y, _) = batchnorm2d(&x, &[0.0], &[5.0], 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn batchnorm_constant_channel_is_finite() {
        let x = Tensor::<f32>::full(Shape::new(2, 1, 2, 2), 3.0);
        let (y, _) = batchnorm2d(&x, &[1.0], &[0.0], 1e-5).unwrap();
        assert!(y.all_finite());
        assert!(y.max_abs() < 1e-6);
    }

    #[test]
    fn batchnorm_needs_two_values() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 1, 1));
        assert!(batchnorm2d(&x, &[1.0], &[0.0], 1e-5).is_err());
    }

    #[test]
    fn batchnorm_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::randn(Shape::new(4, 2, 4, 4), 3.0, &mut rng).map(|v| v + 7.0);
        let (y, _) = batchnorm2d(&x, &[1.0, 1.0], &[0.0, 0.0], 1e-5).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..4).flat_map(|n| y.plane(n, c).to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() <= 1e-5);
            assert!((var.sqrt() - 1.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::<f32>::from_vec(Shape::new(1, 1, 1, 2), vec![2.0, -2.0]).unwrap();
        let y = leaky_relu(&x, 0.1);
        assert_eq!(y.data()[0], 2.0);
        assert!((y.data()[1] + 0.2).abs() < 1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = Tensor::<f32>::randn(Shape::new(1, 2, 3, 3), 1.0, &mut rng);
        let y = leaky_relu(&r, 0.1);
        for (a, b) in r.data().iter().zip(y.data()) {
            assert_eq!(*b, if *a >= 0.0 { *a } else { 0.1 * a });
        }
    }

    #[test]
    fn softmax_uniform_and_saturated() {
        let p = softmax_window(&[0.3f64; 9]);
        assert!(p.iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-12));
        let mut logits = [0.0f64; 9];
        logits[0] = 1000.0;
        let p = softmax_window(&logits);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1..].iter().all(|&v| v < 1e-300));
    }

    #[test]
    fn softmax_matches_exp_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
        let denom: f64 = logits.iter().map(|v| v.exp()).sum();
        for (p, l) in softmax_window(&logits).iter().zip(&logits) {
            assert!((p - l.exp() / denom).abs() < 1e-7);
        }
    }

    #[test]
    fn concat_layout() {
        let a = Tensor::<f32>::full(Shape::new(1, 2, 2, 2), 1.0);
        let b = Tensor::<f32>::zeros(Shape::new(1, 3, 2, 2));
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 5, 2, 2));
        assert_eq!(c.channels(0, 2).unwrap(), a);
        assert_eq!(c.channels(2, 3).unwrap(), b);
        let bad = Tensor::<f32>::zeros(Shape::new(1, 3, 2, 3));
        assert!(concat_channels(&a, &bad).is_err());
    }

    #[test]
    fn concat_index_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Tensor::<f32>::randn(Shape::new(2, 2, 3, 4), 1.0, &mut rng);
        let b = Tensor::<f32>::randn(Shape::new(2, 3, 3, 4), 1.0, &mut rng);
        let c = concat_channels(&a, &b).unwrap();
        for n in 0..2 {
            for ch in 0..5 {
                for h in 0..3 {
                    for w in 0..4 {
                        let expect = if ch < 2 {
                            a.at(n, ch, h, w)
                        } else {
                            b.at(n, ch - 2, h, w)
                        };
                        assert_eq!(c.data()[((n * 5 + ch) * 3 + h) * 4 + w], expect);
                    }
                }
            }
        }
    }

    fn row(vals: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(Shape::new(1, 1, 1, vals.len()), vals.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_pad_definition() {
        let p = symmetric_pad(&row(&[1.0, 2.0, 3.0]), 1, 1, Axis::W).unwrap();
        assert_eq!(p.data(), &[1.0, 1.0, 2.0, 3.0, 3.0]);
        let p = symmetric_pad(&row(&[1.0, 2.0, 3.0, 4.0]), 2, 2, Axis::W).unwrap();
        assert_eq!(p.data(), &[2.0, 1.0, 1.0, 2.0, 3.0, 4.0, 4.0, 3.0]);
        let same = symmetric_pad(&row(&[1.0, 2.0]), 0, 0, Axis::W).unwrap();
        assert_eq!(same.data(), &[1.0, 2.0]);
        assert!(symmetric_pad(&row(&[1.0, 2.0]), 3, 0, Axis::W).is_err());
    }

    #[test]
    fn bilinear_rules() {
        let r = row(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(bilinear_sample(&r, 0, 0, 0.0, 2.0), 2.0);
        assert!((bilinear_sample(&r, 0, 0, 0.0, 1.5) - 1.5).abs() < 1e-7);
        assert!((bilinear_sample(&r, 0, 0, 0.0, 3.5) - 1.5).abs() < 1e-7);
        assert_eq!(bilinear_sample(&r, 0, 0, 0.0, -1.0), 0.0);
        assert_eq!(bilinear_sample(&r, 0, 0, f32::NAN, 0.0), 0.0);
    }

    #[test]
    fn softmax_cross_entropy_uniform() {
        let logits = Tensor::<f64>::zeros(Shape::new(2, 4, 1, 1));
        let (loss, probs) = softmax_cross_entropy(&logits, &[0, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        let g = softmax_cross_entropy_backward(&probs, &[0, 3], 1.0);
        assert!((g.at(0, 0, 0, 0) - (0.25 - 1.0) / 2.0).abs() < 1e-12);
        assert!(softmax_cross_entropy(&logits, &[0, 4]).is_err());
    }
}
