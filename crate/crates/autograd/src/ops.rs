//! Pointwise, pooling, rearrangement, and loss kernels.
//!
//! Backward kernels accumulate into caller-provided gradient buffers (`+=`)
//! so fan-out sums naturally; none of them overwrite.

use crate::conv::sum4;
use crate::tensor::Tensor;

pub(crate) fn leaky_relu_forward(x: &Tensor, slope: f64) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    out
}

/// Gradient factor is 1 on the positive side, `slope` at zero and below;
/// the tie at exactly zero takes the negative branch.
pub(crate) fn leaky_relu_backward(g: &Tensor, x: &Tensor, slope: f64, dx: &mut Tensor) {
    let gd = g.data();
    let xd = x.data();
    for (i, slot) in dx.data_mut().iter_mut().enumerate() {
        let factor = if xd[i] > 0.0 { 1.0 } else { slope };
        *slot += factor * gd[i];
    }
}

/// Square max pooling with stride equal to the window size. Returns the
/// pooled tensor and, per output element, the flat index of its argmax in the
/// input buffer; ties go to the first maximum in row-major window order.
pub(crate) fn maxpool2d_forward(x: &Tensor, size: usize) -> (Tensor, Vec<usize>) {
    let [bn, c, ih, iw] = x.shape();
    let (oh, ow) = (ih / size, iw / size);
    let mut out = Tensor::zeros([bn, c, oh, ow]);
    let mut argmax = vec![0usize; bn * c * oh * ow];
    let plane_out = oh * ow;
    for n in 0..bn {
        for ch in 0..c {
            let xp = x.plane(n, ch);
            let in_base = (n * c + ch) * ih * iw;
            let out_base = (n * c + ch) * plane_out;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0;
                    for wy in 0..size {
                        let iy = oy * size + wy;
                        for wx in 0..size {
                            let ix = ox * size + wx;
                            let v = xp[iy * iw + ix];
                            if v > best {
                                best = v;
                                best_at = in_base + iy * iw + ix;
                            }
                        }
                    }
                    out.data_mut()[out_base + oy * ow + ox] = best;
                    argmax[out_base + oy * ow + ox] = best_at;
                }
            }
        }
    }
    (out, argmax)
}

pub(crate) fn maxpool2d_backward(g: &Tensor, argmax: &[usize], dx: &mut Tensor) {
    let dxd = dx.data_mut();
    for (j, &a) in argmax.iter().enumerate() {
        dxd[a] += g.data()[j];
    }
}

/// `out[n][c*b*b + br*b + bc][oy][ox] = x[n][c][oy*b + br][ox*b + bc]`:
/// output channels enumerate (source channel, block row, block col)
/// lexicographically.
pub(crate) fn space_to_depth_forward(x: &Tensor, block: usize) -> Tensor {
    let [bn, c, ih, iw] = x.shape();
    let (oh, ow) = (ih / block, iw / block);
    let mut out = Tensor::zeros([bn, c * block * block, oh, ow]);
    for n in 0..bn {
        for ci in 0..c {
            let xp = x.plane(n, ci);
            for br in 0..block {
                for bc in 0..block {
                    let oplane = out.plane_mut(n, (ci * block + br) * block + bc);
                    for oy in 0..oh {
                        let xrow = (oy * block + br) * iw;
                        for ox in 0..ow {
                            oplane[oy * ow + ox] = xp[xrow + ox * block + bc];
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn space_to_depth_backward(g: &Tensor, block: usize, dx: &mut Tensor) {
    let [bn, c, ih, iw] = dx.shape();
    let (oh, ow) = (ih / block, iw / block);
    for n in 0..bn {
        for ci in 0..c {
            for br in 0..block {
                for bc in 0..block {
                    let gp = g.plane(n, (ci * block + br) * block + bc);
                    let dplane = dx.plane_mut(n, ci);
                    for oy in 0..oh {
                        let drow = (oy * block + br) * iw;
                        for ox in 0..ow {
                            dplane[drow + ox * block + bc] += gp[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn depth_to_space_forward(x: &Tensor, block: usize) -> Tensor {
    let [bn, c_in, ih, iw] = x.shape();
    let c = c_in / (block * block);
    let (oh, ow) = (ih * block, iw * block);
    let mut out = Tensor::zeros([bn, c, oh, ow]);
    for n in 0..bn {
        for ci in 0..c {
            for br in 0..block {
                for bc in 0..block {
                    let xp = x.plane(n, (ci * block + br) * block + bc);
                    let oplane = out.plane_mut(n, ci);
                    for iy in 0..ih {
                        let orow = (iy * block + br) * ow;
                        for ix in 0..iw {
                            oplane[orow + ix * block + bc] = xp[iy * iw + ix];
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn depth_to_space_backward(g: &Tensor, block: usize, dx: &mut Tensor) {
    let [bn, c_in, ih, iw] = dx.shape();
    let c = c_in / (block * block);
    let ow = iw * block;
    for n in 0..bn {
        for ci in 0..c {
            for br in 0..block {
                for bc in 0..block {
                    let gp = g.plane(n, ci);
                    let dplane = dx.plane_mut(n, (ci * block + br) * block + bc);
                    for iy in 0..ih {
                        let grow = (iy * block + br) * ow;
                        for ix in 0..iw {
                            dplane[iy * iw + ix] += gp[grow + ix * block + bc];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn concat_channels_forward(xs: &[&Tensor]) -> Tensor {
    let [bn, _, h, w] = xs[0].shape();
    let total_c: usize = xs.iter().map(|t| t.shape()[1]).sum();
    let mut out = Tensor::zeros([bn, total_c, h, w]);
    for n in 0..bn {
        let mut offset = 0;
        for x in xs {
            let c = x.shape()[1];
            for ci in 0..c {
                out.plane_mut(n, offset + ci).copy_from_slice(x.plane(n, ci));
            }
            offset += c;
        }
    }
    out
}

/// Adds the channel block `[offset, offset + dx_channels)` of `g` into `dx`.
pub(crate) fn concat_channels_backward(g: &Tensor, offset: usize, dx: &mut Tensor) {
    let [bn, c, _, _] = dx.shape();
    for n in 0..bn {
        for ci in 0..c {
            let gp = g.plane(n, offset + ci);
            let dplane = dx.plane_mut(n, ci);
            for (slot, &gv) in dplane.iter_mut().zip(gp.iter()) {
                *slot += gv;
            }
        }
    }
}

/// Mean absolute error as a scalar tensor.
pub(crate) fn l1_loss_forward(pred: &Tensor, target: &Tensor) -> Tensor {
    let mut diffs = Vec::with_capacity(pred.numel());
    for (p, t) in pred.data().iter().zip(target.data().iter()) {
        diffs.push((p - t).abs());
    }
    Tensor::scalar(sum4(&diffs) / pred.numel() as f64)
}

/// `d/dpred = sign(pred - target) / N`, with sign(0) = 0; the target gradient
/// is the negation.
pub(crate) fn l1_loss_backward(
    g: &Tensor,
    pred: &Tensor,
    target: &Tensor,
    dpred: Option<&mut Tensor>,
    dtarget: Option<&mut Tensor>,
) {
    let factor = g.data()[0] / pred.numel() as f64;
    let sign = |d: f64| {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    if let Some(dp) = dpred {
        for (i, slot) in dp.data_mut().iter_mut().enumerate() {
            *slot += factor * sign(pred.data()[i] - target.data()[i]);
        }
    }
    if let Some(dt) = dtarget {
        for (i, slot) in dt.data_mut().iter_mut().enumerate() {
            *slot -= factor * sign(pred.data()[i] - target.data()[i]);
        }
    }
}
