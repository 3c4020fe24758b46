//! Convolution kernels: cross-correlation forward passes and the three
//! gradient kernels each for `conv2d` and its stride-matched adjoint
//! `conv_transpose2d`.
//!
//! The inner loops are structured for two properties at once:
//!
//! * Throughput on one core. Per (kernel tap, input channel) the work is a
//!   saxpy over a contiguous output row, or a dot product between two
//!   contiguous rows; both vectorize well at `opt-level = 3` without any
//!   unsafe code.
//! * Bit determinism under any thread count. Parallelism only ever splits
//!   output buffers into disjoint (batch, channel) planes, and each element's
//!   accumulation chain is a fixed code-defined order. Dot products use four
//!   independent partial sums combined as `(s0 + s1) + (s2 + s3)`; that order
//!   is part of the kernel's contract, not a scheduler artifact.
//!
//! Weight layouts: `conv2d` takes `[out_c, in_c, kh, kw]`;
//! `conv_transpose2d` takes `[in_c, out_c, kh, kw]`, so the same buffer that
//! convolves `in_c -> out_c` transposes `out_c -> in_c`, which is exactly the
//! pairing the adjoint identity wants.

use rayon::prelude::*;
use std::ops::Range;

use crate::tensor::Tensor;

/// Zero-fill padding mode for `conv2d`.
///
/// `Same` keeps `out = ceil(in / stride)` and splits the total pad with the
/// smaller half leading; `Valid` pads nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Output spatial dims plus leading pads for the given geometry.
pub(crate) fn out_geometry(
    ih: usize,
    iw: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: Padding,
) -> (usize, usize, usize, usize) {
    match padding {
        Padding::Valid => ((ih - kh) / stride + 1, (iw - kw) / stride + 1, 0, 0),
        Padding::Same => {
            let oh = ih.div_ceil(stride);
            let ow = iw.div_ceil(stride);
            let total_y = ((oh - 1) * stride + kh).saturating_sub(ih);
            let total_x = ((ow - 1) * stride + kw).saturating_sub(iw);
            (oh, ow, total_y / 2, total_x / 2)
        }
    }
}

/// Output positions `o` for which `o*stride + k_off - pad` lands in
/// `[0, in_len)`, clipped to `[0, out_len)`. Empty ranges are allowed.
#[inline]
fn tap_range(out_len: usize, in_len: usize, k_off: usize, pad: usize, stride: usize) -> Range<usize> {
    let lo = if k_off >= pad { 0 } else { (pad - k_off).div_ceil(stride) };
    let hi = if in_len + pad > k_off {
        ((in_len - 1 + pad - k_off) / stride + 1).min(out_len)
    } else {
        0
    };
    lo.min(hi)..hi
}

#[inline]
pub(crate) fn saxpy(a: f64, xs: &[f64], out: &mut [f64]) {
    debug_assert_eq!(xs.len(), out.len());
    for (o, &v) in out.iter_mut().zip(xs.iter()) {
        *o += a * v;
    }
}

/// Dot product with four fixed partial-sum chains; the combination order is
/// deliberate and must not change, or bit determinism breaks.
#[inline]
pub(crate) fn dot4(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n4 = a.len() / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < n4 {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for j in n4..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Sum with the same four-chain structure as [`dot4`].
#[inline]
pub(crate) fn sum4(a: &[f64]) -> f64 {
    let n4 = a.len() / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < n4 {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
        i += 4;
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for j in n4..a.len() {
        s += a[j];
    }
    s
}

pub(crate) fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    padding: Padding,
) -> Tensor {
    let [bn, ic, ih, iw] = x.shape();
    let [oc, _, kh, kw] = w.shape();
    let (oh, ow, py, px) = out_geometry(ih, iw, kh, kw, stride, padding);
    let mut out = Tensor::zeros([bn, oc, oh, ow]);
    let wd = w.data();
    let bd = b.data();
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(pi, plane)| {
            let (n, o) = (pi / oc, pi % oc);
            plane.fill(bd[o]);
            for i in 0..ic {
                let xp = x.plane(n, i);
                for ky in 0..kh {
                    let oys = tap_range(oh, ih, ky, py, stride);
                    for kx in 0..kw {
                        let wv = wd[((o * ic + i) * kh + ky) * kw + kx];
                        let oxs = tap_range(ow, iw, kx, px, stride);
                        if oxs.is_empty() {
                            continue;
                        }
                        for oy in oys.clone() {
                            let iy = oy * stride + ky - py;
                            let orow = &mut plane[oy * ow + oxs.start..oy * ow + oxs.end];
                            if stride == 1 {
                                let ix0 = oxs.start + kx - px;
                                saxpy(wv, &xp[iy * iw + ix0..iy * iw + ix0 + orow.len()], orow);
                            } else {
                                for (j, o_val) in orow.iter_mut().enumerate() {
                                    let ix = (oxs.start + j) * stride + kx - px;
                                    *o_val += wv * xp[iy * iw + ix];
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

pub(crate) fn conv2d_input_grad(
    dy: &Tensor,
    w: &Tensor,
    stride: usize,
    padding: Padding,
    dx: &mut Tensor,
) {
    let [_, ic, ih, iw] = dx.shape();
    let [oc, _, kh, kw] = w.shape();
    let [_, _, oh, ow] = dy.shape();
    let (_, _, py, px) = out_geometry(ih, iw, kh, kw, stride, padding);
    let wd = w.data();
    dx.data_mut()
        .par_chunks_mut(ih * iw)
        .enumerate()
        .for_each(|(pi, plane)| {
            let (n, i) = (pi / ic, pi % ic);
            for o in 0..oc {
                let dyp = dy.plane(n, o);
                for ky in 0..kh {
                    let oys = tap_range(oh, ih, ky, py, stride);
                    for kx in 0..kw {
                        let wv = wd[((o * ic + i) * kh + ky) * kw + kx];
                        let oxs = tap_range(ow, iw, kx, px, stride);
                        if oxs.is_empty() {
                            continue;
                        }
                        for oy in oys.clone() {
                            let iy = oy * stride + ky - py;
                            let dyrow = &dyp[oy * ow + oxs.start..oy * ow + oxs.end];
                            if stride == 1 {
                                let ix0 = oxs.start + kx - px;
                                saxpy(wv, dyrow, &mut plane[iy * iw + ix0..iy * iw + ix0 + dyrow.len()]);
                            } else {
                                for (j, &g) in dyrow.iter().enumerate() {
                                    let ix = (oxs.start + j) * stride + kx - px;
                                    plane[iy * iw + ix] += wv * g;
                                }
                            }
                        }
                    }
                }
            }
        });
}

pub(crate) fn conv2d_weight_grad(
    dy: &Tensor,
    x: &Tensor,
    stride: usize,
    padding: Padding,
    dw: &mut Tensor,
) {
    let [bn, ic, ih, iw] = x.shape();
    let [_, _, kh, kw] = dw.shape();
    let [_, _, oh, ow] = dy.shape();
    let (_, _, py, px) = out_geometry(ih, iw, kh, kw, stride, padding);
    dw.data_mut()
        .par_chunks_mut(ic * kh * kw)
        .enumerate()
        .for_each(|(o, wslice)| {
            for i in 0..ic {
                for ky in 0..kh {
                    let oys = tap_range(oh, ih, ky, py, stride);
                    for kx in 0..kw {
                        let oxs = tap_range(ow, iw, kx, px, stride);
                        if oxs.is_empty() {
                            continue;
                        }
                        let mut acc = 0.0;
                        for n in 0..bn {
                            let dyp = dy.plane(n, o);
                            let xp = x.plane(n, i);
                            for oy in oys.clone() {
                                let iy = oy * stride + ky - py;
                                let dyrow = &dyp[oy * ow + oxs.start..oy * ow + oxs.end];
                                if stride == 1 {
                                    let ix0 = oxs.start + kx - px;
                                    acc += dot4(dyrow, &xp[iy * iw + ix0..iy * iw + ix0 + dyrow.len()]);
                                } else {
                                    for (j, &g) in dyrow.iter().enumerate() {
                                        let ix = (oxs.start + j) * stride + kx - px;
                                        acc += g * xp[iy * iw + ix];
                                    }
                                }
                            }
                        }
                        wslice[(i * kh + ky) * kw + kx] += acc;
                    }
                }
            }
        });
}

/// Shared by `conv2d` and `conv_transpose2d`: the bias gradient is the sum of
/// the upstream gradient over each output channel.
pub(crate) fn bias_grad(dy: &Tensor, db: &mut Tensor) {
    let [bn, _, _, _] = dy.shape();
    db.data_mut().par_iter_mut().enumerate().for_each(|(o, slot)| {
        let mut acc = 0.0;
        for n in 0..bn {
            acc += sum4(dy.plane(n, o));
        }
        *slot += acc;
    });
}

pub(crate) fn conv_transpose2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Tensor {
    let [bn, ic, ih, iw] = x.shape();
    let [_, oc, kh, kw] = w.shape();
    let oh = (ih - 1) * stride + kh;
    let ow = (iw - 1) * stride + kw;
    let mut out = Tensor::zeros([bn, oc, oh, ow]);
    let wd = w.data();
    let bd = b.data();
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(pi, plane)| {
            let (n, o) = (pi / oc, pi % oc);
            plane.fill(bd[o]);
            for i in 0..ic {
                let xp = x.plane(n, i);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wd[((i * oc + o) * kh + ky) * kw + kx];
                        for iy in 0..ih {
                            let oy = iy * stride + ky;
                            let xrow = &xp[iy * iw..(iy + 1) * iw];
                            let orow = &mut plane[oy * ow + kx..oy * ow + kx + (iw - 1) * stride + 1];
                            if stride == 1 {
                                saxpy(wv, xrow, orow);
                            } else {
                                for (ix, &xv) in xrow.iter().enumerate() {
                                    orow[ix * stride] += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

pub(crate) fn conv_transpose2d_input_grad(dy: &Tensor, w: &Tensor, stride: usize, dx: &mut Tensor) {
    let [_, ic, ih, iw] = dx.shape();
    let [_, oc, kh, kw] = w.shape();
    let ow = (iw - 1) * stride + kw;
    let wd = w.data();
    dx.data_mut()
        .par_chunks_mut(ih * iw)
        .enumerate()
        .for_each(|(pi, plane)| {
            let (n, i) = (pi / ic, pi % ic);
            for o in 0..oc {
                let dyp = dy.plane(n, o);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wd[((i * oc + o) * kh + ky) * kw + kx];
                        for iy in 0..ih {
                            let oy = iy * stride + ky;
                            let dxrow = &mut plane[iy * iw..(iy + 1) * iw];
                            let dybase = oy * ow + kx;
                            if stride == 1 {
                                saxpy(wv, &dyp[dybase..dybase + iw], dxrow);
                            } else {
                                for (ix, slot) in dxrow.iter_mut().enumerate() {
                                    *slot += wv * dyp[dybase + ix * stride];
                                }
                            }
                        }
                    }
                }
            }
        });
}

pub(crate) fn conv_transpose2d_weight_grad(dy: &Tensor, x: &Tensor, stride: usize, dw: &mut Tensor) {
    let [bn, _, ih, iw] = x.shape();
    let [_, oc, kh, kw] = dw.shape();
    let ow = (iw - 1) * stride + kw;
    dw.data_mut()
        .par_chunks_mut(oc * kh * kw)
        .enumerate()
        .for_each(|(i, wslice)| {
            for o in 0..oc {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = 0.0;
                        for n in 0..bn {
                            let xp = x.plane(n, i);
                            let dyp = dy.plane(n, o);
                            for iy in 0..ih {
                                let oy = iy * stride + ky;
                                let xrow = &xp[iy * iw..(iy + 1) * iw];
                                let dybase = oy * ow + kx;
                                if stride == 1 {
                                    acc += dot4(xrow, &dyp[dybase..dybase + iw]);
                                } else {
                                    let mut s = 0.0;
                                    for (ix, &xv) in xrow.iter().enumerate() {
                                        s += xv * dyp[dybase + ix * stride];
                                    }
                                    acc += s;
                                }
                            }
                        }
                        wslice[(o * kh + ky) * kw + kx] += acc;
                    }
                }
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(shape: [usize; 4]) -> Tensor {
        Tensor::filled(shape, 1.0)
    }

    fn zero_bias(oc: usize) -> Tensor {
        Tensor::zeros([1, oc, 1, 1])
    }

    #[test]
    fn valid_conv_of_ones_counts_taps() {
        let out = conv2d_forward(&ones([1, 1, 3, 3]), &ones([1, 1, 2, 2]), &zero_bias(1), 1, Padding::Valid);
        assert_eq!(out.shape(), [1, 1, 2, 2]);
        assert_eq!(out.data(), &[4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn one_by_one_identity_kernel_passes_input_through() {
        let x = Tensor::from_vec([1, 1, 2, 3], vec![1.0, -2.0, 3.0, 4.0, 0.5, -0.25]).unwrap();
        let w = Tensor::from_vec([1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d_forward(&x, &w, &zero_bias(1), 1, Padding::Same);
        assert_eq!(out, x);
    }

    #[test]
    fn same_padding_centers_a_three_tap_kernel() {
        // One channel, kernel [[0,0,0],[1,0,0],[0,0,0]] reads the left
        // neighbor; the leftmost column therefore sees the zero pad.
        let x = Tensor::from_vec([1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut wdata = vec![0.0; 9];
        wdata[3] = 1.0;
        let w = Tensor::from_vec([1, 1, 3, 3], wdata).unwrap();
        let out = conv2d_forward(&x, &w, &zero_bias(1), 1, Padding::Same);
        assert_eq!(out.data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn bias_offsets_every_output_element() {
        let b = Tensor::from_vec([1, 2, 1, 1], vec![0.5, -1.0]).unwrap();
        let out = conv2d_forward(&ones([1, 1, 2, 2]), &ones([2, 1, 1, 1]), &b, 1, Padding::Valid);
        assert_eq!(out.data(), &[1.5, 1.5, 1.5, 1.5, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn stride_two_same_follows_ceil_arithmetic() {
        let x = ones([1, 1, 9, 9]);
        let out = conv2d_forward(&x, &ones([1, 1, 3, 3]), &zero_bias(1), 2, Padding::Same);
        assert_eq!(out.shape(), [1, 1, 5, 5]);
        // Center taps all land inside, corners lose the padded rows/columns.
        assert_eq!(out.at(0, 0, 2, 2), 9.0);
        assert_eq!(out.at(0, 0, 0, 0), 4.0);
    }

    #[test]
    fn transpose_of_single_pixel_stamps_the_kernel() {
        let x = Tensor::from_vec([1, 1, 1, 1], vec![3.0]).unwrap();
        let w = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let out = conv_transpose2d_forward(&x, &w, &zero_bias(1), 2);
        assert_eq!(out.shape(), [1, 1, 2, 2]);
        assert_eq!(out.data(), &[3.0, 6.0, -3.0, 1.5]);
    }

    #[test]
    fn stride_two_transpose_interleaves_contributions() {
        // Two input pixels one apart land k=2 stamps with no overlap.
        let x = Tensor::from_vec([1, 1, 1, 2], vec![1.0, 10.0]).unwrap();
        let w = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = conv_transpose2d_forward(&x, &w, &zero_bias(1), 2);
        assert_eq!(out.shape(), [1, 1, 2, 4]);
        assert_eq!(out.data(), &[1.0, 2.0, 10.0, 20.0, 3.0, 4.0, 30.0, 40.0]);
    }

    #[test]
    fn conv_is_linear_in_its_input() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut fill = |shape| {
            let t: Vec<f64> = (0..Tensor::zeros(shape).numel())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            Tensor::from_vec(shape, t).unwrap()
        };
        let x = fill([2, 3, 5, 6]);
        let y = fill([2, 3, 5, 6]);
        let w = fill([4, 3, 3, 3]);
        let (alpha, beta) = (0.7, -1.3);
        let mut combo = Tensor::zeros([2, 3, 5, 6]);
        combo.add_scaled(&x, alpha);
        combo.add_scaled(&y, beta);
        let lhs = conv2d_forward(&combo, &w, &zero_bias(4), 1, Padding::Same);
        let fx = conv2d_forward(&x, &w, &zero_bias(4), 1, Padding::Same);
        let fy = conv2d_forward(&y, &w, &zero_bias(4), 1, Padding::Same);
        for i in 0..lhs.numel() {
            let rhs = alpha * fx.data()[i] + beta * fy.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-10);
        }
    }
}
