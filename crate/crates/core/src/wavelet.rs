//! Separable 2D discrete wavelet transform and the adaptive DWT layer.
//!
//! Subbands are named vertical filter first: `LH` is the vertical low-pass
//! of the horizontal high-pass output. Filters are applied as stride-2
//! correlation (no flip) over a half-sample symmetric extension.
//!
//! Cost convention: a two-channel filter bank is counted in lifting steps,
//! one unit per two executed filter taps. For the detail/approximation pair
//! used by [`AdwtLayer`] this is exactly `3K` units per output pixel and
//! input channel.

use crate::error::{Error, Result};
use crate::tensor::ops::{symmetric_index, Axis};
use crate::tensor::{Graph, NodeId, ParamId, ParamKind, ParamStore, Scalar, Shape, Tensor};

/// Paired low-pass `g` / high-pass `h` analysis filters.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletKernel {
    g: Vec<f64>,
    h: Vec<f64>,
}

impl WaveletKernel {
    pub fn haar() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        WaveletKernel {
            g: vec![r, r],
            h: vec![r, -r],
        }
    }

    /// Validates that `g` and `h` are unit-norm, mutually orthogonal and of
    /// equal even length.
    pub fn new(g: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if g.len() != h.len() || g.is_empty() || !g.len().is_multiple_of(2) {
            return Err(Error::config(format!(
                "wavelet filters must share an even length, got {} and {}",
                g.len(),
                h.len()
            )));
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let tol = 1e-9;
        if (dot(&g, &g) - 1.0).abs() > tol
            || (dot(&h, &h) - 1.0).abs() > tol
            || dot(&g, &h).abs() > tol
        {
            return Err(Error::config("wavelet filters are not orthonormal"));
        }
        Ok(WaveletKernel { g, h })
    }

    pub fn low(&self) -> &[f64] {
        &self.g
    }

    pub fn high(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    fn cast<T: Scalar>(&self) -> (Vec<T>, Vec<T>) {
        (
            self.g.iter().map(|&v| T::of(v)).collect(),
            self.h.iter().map(|&v| T::of(v)).collect(),
        )
    }
}

/// The four half-resolution subbands of one analysis level.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSet<T> {
    pub ll: Tensor<T>,
    pub lh: Tensor<T>,
    pub hl: Tensor<T>,
    pub hh: Tensor<T>,
}

impl<T: Scalar> SubbandSet<T> {
    pub fn shape(&self) -> Shape {
        self.ll.shape()
    }

    pub fn energy(&self) -> T {
        self.ll.sq_norm() + self.lh.sq_norm() + self.hl.sq_norm() + self.hh.sq_norm()
    }
}

/// Padding `(before, after)` that turns a length-`len` axis into an even
/// signal of exactly `2 * ceil(len / 2) + taps - 2` samples.
fn axis_padding(len: usize, taps: usize) -> (usize, usize) {
    let total = taps - 2 + len % 2;
    (total / 2, total - total / 2)
}

/// Outputs `lo..hi` whose taps all land inside the unpadded axis.
fn interior(len: usize, out_len: usize, before: usize, taps: usize) -> (usize, usize) {
    let lo = before.div_ceil(2);
    let hi = if len + before >= taps {
        ((len + before - taps) / 2 + 1).min(out_len)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Stride-2 correlation of every lane along `axis` with `filter` over the
/// symmetric extension. Returns the output and the number of executed taps.
fn analyze_axis<T: Scalar>(x: &Tensor<T>, filter: &[T], axis: Axis) -> (Tensor<T>, u64) {
    let s = x.shape();
    let len = match axis {
        Axis::H => s.h,
        Axis::W => s.w,
    };
    let (before, _) = axis_padding(len, filter.len());
    let out_len = len.div_ceil(2);
    let out_shape = match axis {
        Axis::H => s.with_hw(out_len, s.w),
        Axis::W => s.with_hw(s.h, out_len),
    };
    let src_index =
        |o: usize, k: usize| symmetric_index((2 * o + k) as isize - before as isize, len);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            match axis {
                Axis::W => {
                    let (lo, hi) = interior(len, out_len, before, filter.len());
                    for r in 0..s.h {
                        let row = &src[r * s.w..(r + 1) * s.w];
                        let drow = &mut dst[r * out_len..(r + 1) * out_len];
                        for o in (0..lo).chain(hi..out_len) {
                            let mut acc = T::zero();
                            for (k, &f) in filter.iter().enumerate() {
                                acc += f * row[src_index(o, k)];
                            }
                            drow[o] = acc;
                        }
                        if lo < hi {
                            let windows = row[2 * lo - before..].windows(filter.len()).step_by(2);
                            for (d, win) in drow[lo..hi].iter_mut().zip(windows) {
                                *d = filter
                                    .iter()
                                    .zip(win)
                                    .fold(T::zero(), |acc, (&f, &v)| acc + f * v);
                            }
                        }
                    }
                }
                Axis::H => {
                    for o in 0..out_len {
                        for (k, &f) in filter.iter().enumerate() {
                            let r = src_index(o, k);
                            let row = &src[r * s.w..(r + 1) * s.w];
                            let drow = &mut dst[o * s.w..(o + 1) * s.w];
                            for (d, &v) in drow.iter_mut().zip(row) {
                                *d += f * v;
                            }
                        }
                    }
                }
            }
        }
    }
    let taps = (out_shape.numel() * filter.len()) as u64;
    (out, taps)
}

/// Adjoint of [`analyze_axis`] onto an axis of length `len`.
fn analyze_axis_adjoint<T: Scalar>(
    gy: &Tensor<T>,
    filter: &[T],
    axis: Axis,
    len: usize,
) -> Tensor<T> {
    let gs = gy.shape();
    let (before, _) = axis_padding(len, filter.len());
    let in_shape = match axis {
        Axis::H => gs.with_hw(len, gs.w),
        Axis::W => gs.with_hw(gs.h, len),
    };
    let out_len = match axis {
        Axis::H => gs.h,
        Axis::W => gs.w,
    };
    let src_index =
        |o: usize, k: usize| symmetric_index((2 * o + k) as isize - before as isize, len);
    let mut dx = Tensor::zeros(in_shape);
    for n in 0..gs.n {
        for c in 0..gs.c {
            let g = gy.plane(n, c);
            let dst = dx.plane_mut(n, c);
            match axis {
                Axis::W => {
                    let (lo, hi) = interior(len, out_len, before, filter.len());
                    for r in 0..gs.h {
                        let grow = &g[r * out_len..(r + 1) * out_len];
                        let drow = &mut dst[r * len..(r + 1) * len];
                        for o in (0..lo).chain(hi..out_len) {
                            for (k, &f) in filter.iter().enumerate() {
                                drow[src_index(o, k)] += f * grow[o];
                            }
                        }
                        for (o, &v) in grow.iter().enumerate().take(hi).skip(lo) {
                            let win = &mut drow[2 * o - before..2 * o - before + filter.len()];
                            for (d, &f) in win.iter_mut().zip(filter) {
                                *d += f * v;
                            }
                        }
                    }
                }
                Axis::H => {
                    for o in 0..out_len {
                        let grow = &g[o * gs.w..(o + 1) * gs.w];
                        for (k, &f) in filter.iter().enumerate() {
                            let r = src_index(o, k);
                            let drow = &mut dst[r * gs.w..(r + 1) * gs.w];
                            for (d, &v) in drow.iter_mut().zip(grow) {
                                *d += f * v;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn check_nonempty<T: Scalar>(x: &Tensor<T>) -> Result<()> {
    if x.is_empty() {
        return Err(Error::shape(format!(
            "cannot transform empty tensor {}",
            x.shape()
        )));
    }
    Ok(())
}

/// One level of the separable 2D analysis. Odd axes are symmetrically
/// extended by one sample, so every output axis is `ceil(len / 2)`.
pub fn dwt2d<T: Scalar>(x: &Tensor<T>, kernel: &WaveletKernel) -> Result<SubbandSet<T>> {
    check_nonempty(x)?;
    let (g, h) = kernel.cast::<T>();
    let (a, _) = analyze_axis(x, &g, Axis::W);
    let (d, _) = analyze_axis(x, &h, Axis::W);
    Ok(SubbandSet {
        ll: analyze_axis(&a, &g, Axis::H).0,
        hl: analyze_axis(&a, &h, Axis::H).0,
        lh: analyze_axis(&d, &g, Axis::H).0,
        hh: analyze_axis(&d, &h, Axis::H).0,
    })
}

/// Synthesis as the adjoint of [`dwt2d`]. This is the exact inverse when the
/// analysis is orthogonal, i.e. for a two-tap kernel on even-sized input,
/// which is the only case accepted.
pub fn idwt2d<T: Scalar>(s: &SubbandSet<T>, kernel: &WaveletKernel) -> Result<Tensor<T>> {
    let shape = s.ll.shape();
    if [&s.lh, &s.hl, &s.hh].iter().any(|t| t.shape() != shape) {
        return Err(Error::shape(format!(
            "inconsistent subband shapes: LL {}, LH {}, HL {}, HH {}",
            shape,
            s.lh.shape(),
            s.hl.shape(),
            s.hh.shape()
        )));
    }
    if kernel.len() != 2 {
        return Err(Error::config(
            "reconstruction is only exact for two-tap kernels (no boundary extension)",
        ));
    }
    let (g, h) = kernel.cast::<T>();
    let (rows, cols) = (2 * shape.h, 2 * shape.w);
    let a = analyze_axis_adjoint(&s.ll, &g, Axis::H, rows).add(&analyze_axis_adjoint(
        &s.hl,
        &h,
        Axis::H,
        rows,
    ))?;
    let d = analyze_axis_adjoint(&s.lh, &g, Axis::H, rows).add(&analyze_axis_adjoint(
        &s.hh,
        &h,
        Axis::H,
        rows,
    ))?;
    analyze_axis_adjoint(&a, &g, Axis::W, cols).add(&analyze_axis_adjoint(&d, &h, Axis::W, cols))
}

/// `[HH, LL]` stacked on channels, plus executed filter taps.
pub(crate) fn detail_approx<T: Scalar>(
    x: &Tensor<T>,
    g: &[T],
    h: &[T],
) -> Result<(Tensor<T>, u64)> {
    check_nonempty(x)?;
    let s = x.shape();
    if g.len() == 2 && h.len() == 2 && s.h.is_multiple_of(2) && s.w.is_multiple_of(2) {
        return Ok(detail_approx_blocks(x, g, h));
    }
    let (a, t1) = analyze_axis(x, g, Axis::W);
    let (d, t2) = analyze_axis(x, h, Axis::W);
    let (hh, t3) = analyze_axis(&d, h, Axis::H);
    let (ll, t4) = analyze_axis(&a, g, Axis::H);
    let out = crate::tensor::ops::concat_channels(&hh, &ll)?;
    Ok((out, t1 + t2 + t3 + t4))
}

/// Two-tap filters on even sides touch disjoint 2x2 blocks, so both subbands
/// come out of one sweep. Same operation order as the separable passes.
fn detail_approx_blocks<T: Scalar>(x: &Tensor<T>, g: &[T], h: &[T]) -> (Tensor<T>, u64) {
    let s = x.shape();
    let (oh, ow) = (s.h / 2, s.w / 2);
    let plane = oh * ow;
    let mut out = Tensor::zeros(Shape::new(s.n, 2 * s.c, oh, ow));
    let (g0, g1, h0, h1) = (g[0], g[1], h[0], h[1]);
    for (n, image) in out.data_mut().chunks_exact_mut(2 * s.c * plane).enumerate() {
        let (hh, ll) = image.split_at_mut(s.c * plane);
        for c in 0..s.c {
            let src = x.plane(n, c);
            for o in 0..oh {
                let r0 = &src[2 * o * s.w..(2 * o + 1) * s.w];
                let r1 = &src[(2 * o + 1) * s.w..(2 * o + 2) * s.w];
                let dst = c * plane + o * ow;
                let blocks = r0.chunks_exact(2).zip(r1.chunks_exact(2));
                for ((d, a), (p, q)) in hh[dst..dst + ow]
                    .iter_mut()
                    .zip(&mut ll[dst..dst + ow])
                    .zip(blocks)
                {
                    let (d0, d1) = (
                        T::zero() + h0 * p[0] + h1 * p[1],
                        T::zero() + h0 * q[0] + h1 * q[1],
                    );
                    let (a0, a1) = (
                        T::zero() + g0 * p[0] + g1 * p[1],
                        T::zero() + g0 * q[0] + g1 * q[1],
                    );
                    *d = T::zero() + h0 * d0 + h1 * d1;
                    *a = T::zero() + g0 * a0 + g1 * a1;
                }
            }
        }
    }
    let taps = (2 * 2 * s.n * s.c * (s.h * ow + oh * ow)) as u64;
    (out, taps)
}

pub(crate) fn detail_approx_backward<T: Scalar>(
    input: Shape,
    g: &[T],
    h: &[T],
    gy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let c = input.c;
    let (ghh, gll) = crate::tensor::ops::split_channels(gy, c);
    let dd = analyze_axis_adjoint(&ghh, h, Axis::H, input.h);
    let da = analyze_axis_adjoint(&gll, g, Axis::H, input.h);
    analyze_axis_adjoint(&dd, h, Axis::W, input.w).add(&analyze_axis_adjoint(
        &da,
        g,
        Axis::W,
        input.w,
    ))
}

/// Lifting-step units charged for a filter-bank pass that executed `taps`
/// filter multiplications.
pub fn lifting_units(taps: u64) -> u64 {
    taps / 2
}

/// Adaptive DWT layer: fixed wavelet filters plus two learnable subband
/// scores.
///
/// Given `x` with `C` channels it yields `I_T = [l1 * HH, l2 * LL]` with
/// `2C` channels and the unscaled approximation `LL` with `C` channels for
/// the next stage, both at half resolution.
#[derive(Clone, Debug)]
pub struct AdwtLayer {
    pub lambda1: ParamId,
    pub lambda2: ParamId,
    pub low: ParamId,
    pub high: ParamId,
}

impl AdwtLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, kernel: &WaveletKernel) -> Self {
        let one = Shape::new(1, 1, 1, 1);
        let taps = Shape::new(1, 1, 1, kernel.len());
        let (g, h) = kernel.cast::<T>();
        AdwtLayer {
            lambda1: store.trainable(
                format!("{name}.lambda1"),
                ParamKind::Score,
                Tensor::full(one, T::one()),
            ),
            lambda2: store.trainable(
                format!("{name}.lambda2"),
                ParamKind::Score,
                Tensor::full(one, T::one()),
            ),
            low: store.fixed(
                format!("{name}.g"),
                ParamKind::WaveletFilter,
                Tensor::from_vec(taps, g).expect("filter shape"),
            ),
            high: store.fixed(
                format!("{name}.h"),
                ParamKind::WaveletFilter,
                Tensor::from_vec(taps, h).expect("filter shape"),
            ),
        }
    }

    /// Returns `(I_T, A_next)`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<(NodeId, NodeId)> {
        let c = g.shape(x).c;
        let stacked = g.detail_approx(x, (self.low, self.high))?;
        let detail = g.channels(stacked, 0, c)?;
        let approx = g.channels(stacked, c, c)?;
        let l1 = g.param(self.lambda1);
        let l2 = g.param(self.lambda2);
        let detail = g.scale_by(detail, l1)?;
        let scaled_approx = g.scale_by(approx, l2)?;
        let it = g.concat(detail, scaled_approx)?;
        Ok((it, approx))
    }
}

/// Graph-free evaluation of the adaptive layer with explicit scores.
pub fn adwt_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &WaveletKernel,
    lambda1: T,
    lambda2: T,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (g, h) = kernel.cast::<T>();
    let (stacked, _) = detail_approx(x, &g, &h)?;
    let c = x.shape().c;
    let detail = stacked.channels(0, c)?.scale(lambda1);
    let approx = stacked.channels(c, c)?;
    let it = crate::tensor::ops::concat_channels(&detail, &approx.scale(lambda2))?;
    Ok((it, approx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{gradcheck, Mode};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn haar() -> WaveletKernel {
        WaveletKernel::haar()
    }

    #[test]
    fn haar_is_orthonormal() {
        let k = haar();
        assert!(WaveletKernel::new(k.low().to_vec(), k.high().to_vec()).is_ok());
        assert!(WaveletKernel::new(vec![1.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(WaveletKernel::new(vec![1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn constant_image() {
        let x = Tensor::<f64>::full(Shape::new(1, 1, 2, 2), 3.0);
        let s = dwt2d(&x, &haar()).unwrap();
        assert!((s.ll.data()[0] - 6.0).abs() < 1e-12);
        for t in [&s.lh, &s.hl, &s.hh] {
            assert!(t.data()[0].abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_stripes_land_in_lh() {
        let x =
            Tensor::<f64>::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let s = dwt2d(&x, &haar()).unwrap();
        assert!((s.lh.data()[0] - 2.0).abs() < 1e-12);
        for t in [&s.ll, &s.hl, &s.hh] {
            assert!(t.data()[0].abs() < 1e-12);
        }
    }

    /// Orthogonal 1D Haar analysis matrix: rows `0..n/2` low-pass, the rest high-pass.
    fn haar_matrix(n: usize) -> Vec<Vec<f64>> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n / 2 {
            m[i][2 * i] = r;
            m[i][2 * i + 1] = r;
            m[n / 2 + i][2 * i] = r;
            m[n / 2 + i][2 * i + 1] = -r;
        }
        m
    }

    #[test]
    fn matches_kronecker_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Tensor::<f32>::randn(Shape::new(1, 1, 4, 4), 1.0, &mut rng);
        let m = haar_matrix(4);
        // Y = M X M^T ; quadrant (row block, col block) = (vertical, horizontal)
        let xv: Vec<Vec<f64>> = (0..4)
            .map(|r| (0..4).map(|c| x.at(0, 0, r, c) as f64).collect())
            .collect();
        let mut y = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for a in 0..4 {
                    for b in 0..4 {
                        y[i][j] += m[i][a] * xv[a][b] * m[j][b];
                    }
                }
            }
        }
        let s = dwt2d(&x, &haar()).unwrap();
        let quad = |t: &Tensor<f32>, bi: usize, bj: usize| {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((t.at(0, 0, i, j) as f64 - y[bi * 2 + i][bj * 2 + j]).abs() < 1e-6);
                }
            }
        };
        quad(&s.ll, 0, 0);
        quad(&s.lh, 0, 1);
        quad(&s.hl, 1, 0);
        quad(&s.hh, 1, 1);
    }

    #[test]
    fn odd_axes_are_extended() {
        let x = Tensor::<f64>::full(Shape::new(1, 2, 5, 3), 1.0);
        let s = dwt2d(&x, &haar()).unwrap();
        assert_eq!(s.shape(), Shape::new(1, 2, 3, 2));
        assert!(s.ll.data().iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(s.hh.max_abs() < 1e-12);
    }

    #[test]
    fn empty_rejected() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 0, 2, 2));
        assert!(dwt2d(&x, &haar()).is_err());
    }

    #[test]
    fn inverse_edge_cases() {
        let zero = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 2));
        let s = SubbandSet {
            ll: zero.clone(),
            lh: zero.clone(),
            hl: zero.clone(),
            hh: zero.clone(),
        };
        assert_eq!(idwt2d(&s, &haar()).unwrap().max_abs(), 0.0);

        let c = Tensor::<f64>::full(Shape::new(1, 1, 4, 4), 1.5);
        let mut sub = dwt2d(&c, &haar()).unwrap();
        sub.lh = Tensor::zeros(sub.lh.shape());
        sub.hl = Tensor::zeros(sub.hl.shape());
        sub.hh = Tensor::zeros(sub.hh.shape());
        assert!(idwt2d(&sub, &haar()).unwrap().max_abs_diff(&c) < 1e-12);

        let bad = SubbandSet {
            ll: zero.clone(),
            lh: zero.clone(),
            hl: Tensor::zeros(Shape::new(1, 1, 3, 2)),
            hh: zero,
        };
        assert!(idwt2d(&bad, &haar()).is_err());
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f32>::randn(Shape::new(1, 2, 8, 8), 1.0, &mut rng);
        let back = idwt2d(&dwt2d(&x, &haar()).unwrap(), &haar()).unwrap();
        assert!(back.max_abs_diff(&x) <= 1e-6);
    }

    proptest! {
        #[test]
        fn perfect_reconstruction_and_energy(
            n in 1usize..3, c in 1usize..4, h2 in 1usize..9, w2 in 1usize..9, seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f64>::randn(Shape::new(n, c, 2 * h2, 2 * w2), 1.0, &mut rng);
            let s = dwt2d(&x, &haar()).unwrap();
            let back = idwt2d(&s, &haar()).unwrap();
            prop_assert!(back.max_abs_diff(&x) <= 1e-12);
            let e = x.sq_norm();
            prop_assert!((s.energy() - e).abs() <= 1e-10 * e.max(1.0));
        }

        #[test]
        fn symmetric_pad_then_crop_is_identity(len in 1usize..10, before in 0usize..10, after in 0usize..10, seed in any::<u64>()) {
            prop_assume!(before <= len && after <= len);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f64>::randn(Shape::new(1, 2, 3, len), 1.0, &mut rng);
            let p = crate::tensor::ops::symmetric_pad(&x, before, after, Axis::W).unwrap();
            let back = crate::tensor::ops::crop(&p, 0, before, 3, len).unwrap();
            prop_assert_eq!(back, x);
        }

        #[test]
        fn axis_pass_matches_padded_correlation(
            len in 1usize..12, half_taps in 1usize..4, rows in 1usize..4, seed in any::<u64>()
        ) {
            let taps = 2 * half_taps;
            prop_assume!(taps <= len + 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = (0..taps).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let x = Tensor::<f64>::randn(Shape::new(1, 2, rows, len), 1.0, &mut rng);
            let (before, after) = axis_padding(len, taps);
            let p = crate::tensor::ops::symmetric_pad(&x, before, after, Axis::W).unwrap();
            let (y, _) = analyze_axis(&x, &f, Axis::W);
            let out_len = len.div_ceil(2);
            for c in 0..2 {
                for r in 0..rows {
                    for o in 0..out_len {
                        let want: f64 = (0..taps).map(|k| f[k] * p.at(0, c, r, 2 * o + k)).sum();
                        prop_assert!((y.at(0, c, r, o) - want).abs() < 1e-12);
                    }
                }
            }
            // <A x, g> = <x, A^T g> along both axes
            let g = Tensor::<f64>::randn(y.shape(), 1.0, &mut rng);
            let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let back = analyze_axis_adjoint(&g, &f, Axis::W, len);
            let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9);
            let xt = Tensor::<f64>::randn(Shape::new(1, 1, len, rows), 1.0, &mut rng);
            let (yt, _) = analyze_axis(&xt, &f, Axis::H);
            let gt = Tensor::<f64>::randn(yt.shape(), 1.0, &mut rng);
            let lhs: f64 = yt.data().iter().zip(gt.data()).map(|(a, b)| a * b).sum();
            let back = analyze_axis_adjoint(&gt, &f, Axis::H, len);
            let rhs: f64 = xt.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn adwt_constant_and_scale_out() {
        let x = Tensor::<f64>::full(Shape::new(1, 1, 4, 4), 2.0);
        let (it, a) = adwt_forward(&x, &haar(), 1.0, 1.0).unwrap();
        assert_eq!(it.shape(), Shape::new(1, 2, 2, 2));
        assert!(it.channels(0, 1).unwrap().max_abs() < 1e-12);
        assert!(it
            .channels(1, 1)
            .unwrap()
            .data()
            .iter()
            .all(|v| (v - 4.0).abs() < 1e-12));
        assert!(a.data().iter().all(|v| (v - 4.0).abs() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let r = Tensor::<f64>::randn(Shape::new(1, 3, 6, 6), 1.0, &mut rng);
        let (it, a) = adwt_forward(&r, &haar(), 0.0, 1.0).unwrap();
        assert_eq!(it.channels(0, 3).unwrap().max_abs(), 0.0);
        assert_eq!(a, dwt2d(&r, &haar()).unwrap().ll);
    }

    #[test]
    fn adwt_is_scaled_subbands() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = Tensor::<f64>::randn(Shape::new(2, 2, 8, 8), 1.0, &mut rng);
        let (it, a) = adwt_forward(&x, &haar(), 0.5, 2.0).unwrap();
        let s = dwt2d(&x, &haar()).unwrap();
        assert!(it.channels(0, 2).unwrap().max_abs_diff(&s.hh.scale(0.5)) < 1e-12);
        assert!(it.channels(2, 2).unwrap().max_abs_diff(&s.ll.scale(2.0)) < 1e-12);
        assert!(a.max_abs_diff(&s.ll) < 1e-12);
    }

    #[test]
    fn layer_matches_free_function_and_cascades() {
        let mut store = ParamStore::<f64>::new();
        let l1 = AdwtLayer::new(&mut store, "s1", &haar());
        let l2 = AdwtLayer::new(&mut store, "s2", &haar());
        let x = Tensor::<f64>::full(Shape::new(1, 1, 8, 8), 0.5);
        let mut g = Graph::new(&mut store, Mode::Eval);
        let xi = g.input(x.clone());
        let (it, a1) = l1.forward(&mut g, xi).unwrap();
        let (_, a2) = l2.forward(&mut g, a1).unwrap();
        assert_eq!(g.shape(it).c, 2);
        assert_eq!(g.shape(a2), Shape::new(1, 1, 2, 2));
        assert!(g.value(a2).data().iter().all(|v| (v - 2.0).abs() < 1e-12));
        let (free_it, _) = adwt_forward(&x, &haar(), 1.0, 1.0).unwrap();
        assert!(g.value(it).max_abs_diff(&free_it) < 1e-12);
        // 3K lifting units per output pixel per channel, for both layers
        assert_eq!(g.macs().dwt, (3 * 2 * 16 + 3 * 2 * 4) as u64);
    }

    #[test]
    fn lambda1_gradient_is_detail_subband() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = Tensor::<f64>::randn(Shape::new(1, 2, 6, 6), 1.0, &mut rng);
        let mut store = ParamStore::<f64>::new();
        let layer = AdwtLayer::new(&mut store, "adwt", &haar());
        {
            let mut g = Graph::new(&mut store, Mode::Train);
            let xi = g.input(x.clone());
            let (it, _) = layer.forward(&mut g, xi).unwrap();
            let total = g.sum(it);
            g.backward(total).unwrap();
        }
        let hh_sum = dwt2d(&x, &haar()).unwrap().hh.sum();
        let grad = store.value(layer.lambda1).grad().unwrap()[0];
        assert!((grad - hh_sum).abs() < 1e-12);

        let report = gradcheck(&mut store, &[x], 1e-5, |g, ids| {
            let (it, a) = layer.forward(g, ids[0])?;
            let a = g.mul_const(a, 0.3);
            let a = g.concat(it, a)?;
            // weight entries unevenly so the check is not degenerate
            Ok(g.leaky_relu(a, 0.1))
        })
        .unwrap();
        assert!(report.max_rel_err <= 1e-4, "{report:?}");
    }

    #[test]
    fn block_sweep_matches_separable_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f32>::randn(Shape::new(2, 3, 6, 10), 1.0, &mut rng);
        let (g, h) = haar().cast::<f32>();
        let (fast, fast_taps) = detail_approx_blocks(&x, &g, &h);
        let (a, t1) = analyze_axis(&x, &g, Axis::W);
        let (d, t2) = analyze_axis(&x, &h, Axis::W);
        let (hh, t3) = analyze_axis(&d, &h, Axis::H);
        let (ll, t4) = analyze_axis(&a, &g, Axis::H);
        assert_eq!(fast, crate::tensor::ops::concat_channels(&hh, &ll).unwrap());
        assert_eq!(fast_taps, t1 + t2 + t3 + t4);
    }

    #[test]
    fn unit_counting_matches_taps() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 3, 8, 8));
        let (g, h) = haar().cast::<f32>();
        let (_, taps) = detail_approx(&x, &g, &h).unwrap();
        // horizontal: 2 filters * (8 rows * 4 cols) * 2 taps; vertical: 2 * (4*4) * 2
        assert_eq!(taps, 3 * (2 * 32 * 2 + 2 * 16 * 2));
        assert_eq!(lifting_units(taps), 3 * 16 * 3 * 2);
    }
}
