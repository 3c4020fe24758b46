//! The define-by-run tape: operation recording, shape validation, and the
//! reverse sweep.

use crate::conv::{self, Padding};
use crate::ops;
use crate::tensor::Tensor;
use crate::AutogradError;

/// Handle to a node in one specific [`Graph`]; using it with a different
/// graph is a logic error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    Conv2d { x: usize, w: usize, b: usize, stride: usize, padding: Padding },
    ConvTranspose2d { x: usize, w: usize, b: usize, stride: usize },
    LeakyRelu { x: usize, slope: f64 },
    MaxPool2d { x: usize, argmax: Vec<usize> },
    SpaceToDepth { x: usize, block: usize },
    DepthToSpace { x: usize, block: usize },
    ConcatChannels { xs: Vec<usize>, offsets: Vec<usize> },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Scale { x: usize, factor: f64 },
    L1Loss { pred: usize, target: usize },
}

/// A recorded forward pass. Values live for the graph's lifetime so the
/// backward sweep can reuse them; gradients appear after [`Graph::backward`].
#[derive(Default)]
pub struct Graph {
    values: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
    ops: Vec<Op>,
    requires: Vec<bool>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inserts a tensor as a leaf. Leaves with `requires_grad` receive
    /// gradients in the backward sweep; others act as constants.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    /// The accumulated gradient, present after `backward` if a path from the
    /// loss reaches this node and it requires grad.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, requires: bool) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(op);
        self.requires.push(requires);
        Var(self.values.len() - 1)
    }

    fn shape_err(detail: String) -> AutogradError {
        AutogradError::ShapeMismatch { detail }
    }

    /// Cross-correlation with zero padding. `w` is `[out_c, in_c, kh, kw]`,
    /// `b` is `[1, out_c, 1, 1]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: Padding,
    ) -> Result<Var, AutogradError> {
        let [_, ic, ih, iw] = self.values[x.0].shape();
        let [oc, wic, kh, kw] = self.values[w.0].shape();
        if stride == 0 {
            return Err(AutogradError::InvalidArg { detail: "stride must be >= 1".into() });
        }
        if wic != ic {
            return Err(Self::shape_err(format!(
                "conv2d weight expects {wic} input channels, input has {ic}"
            )));
        }
        if self.values[b.0].shape() != [1, oc, 1, 1] {
            return Err(Self::shape_err(format!(
                "conv2d bias must be [1, {oc}, 1, 1], got {:?}",
                self.values[b.0].shape()
            )));
        }
        if padding == Padding::Valid && (ih < kh || iw < kw) {
            return Err(Self::shape_err(format!(
                "valid conv needs input >= kernel, got {ih}x{iw} vs {kh}x{kw}"
            )));
        }
        let out = conv::conv2d_forward(
            &self.values[x.0],
            &self.values[w.0],
            &self.values[b.0],
            stride,
            padding,
        );
        let requires = self.requires[x.0] || self.requires[w.0] || self.requires[b.0];
        Ok(self.push(out, Op::Conv2d { x: x.0, w: w.0, b: b.0, stride, padding }, requires))
    }

    /// Adjoint of a valid-mode `conv2d` with the same stride. `w` is
    /// `[in_c, out_c, kh, kw]`, so a buffer shared with `conv2d` swaps its
    /// channel roles; output spatial size is `(in - 1) * stride + k`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
    ) -> Result<Var, AutogradError> {
        let [_, ic, _, _] = self.values[x.0].shape();
        let [wic, oc, _, _] = self.values[w.0].shape();
        if stride == 0 {
            return Err(AutogradError::InvalidArg { detail: "stride must be >= 1".into() });
        }
        if wic != ic {
            return Err(Self::shape_err(format!(
                "conv_transpose2d weight expects {wic} input channels, input has {ic}"
            )));
        }
        if self.values[b.0].shape() != [1, oc, 1, 1] {
            return Err(Self::shape_err(format!(
                "conv_transpose2d bias must be [1, {oc}, 1, 1], got {:?}",
                self.values[b.0].shape()
            )));
        }
        let out = conv::conv_transpose2d_forward(
            &self.values[x.0],
            &self.values[w.0],
            &self.values[b.0],
            stride,
        );
        let requires = self.requires[x.0] || self.requires[w.0] || self.requires[b.0];
        Ok(self.push(out, Op::ConvTranspose2d { x: x.0, w: w.0, b: b.0, stride }, requires))
    }

    /// Elementwise `max(x, slope * x)`; `slope` must lie in `[0, 1)`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, AutogradError> {
        if !(0.0..1.0).contains(&slope) {
            return Err(AutogradError::InvalidArg {
                detail: format!("leaky_relu slope must be in [0, 1), got {slope}"),
            });
        }
        let out = ops::leaky_relu_forward(&self.values[x.0], slope);
        let requires = self.requires[x.0];
        Ok(self.push(out, Op::LeakyRelu { x: x.0, slope }, requires))
    }

    /// Square max pooling with stride = window size; spatial dims must divide.
    pub fn maxpool2d(&mut self, x: Var, size: usize) -> Result<Var, AutogradError> {
        let [_, _, ih, iw] = self.values[x.0].shape();
        if size == 0 {
            return Err(AutogradError::InvalidArg { detail: "pool size must be >= 1".into() });
        }
        if ih % size != 0 || iw % size != 0 {
            return Err(Self::shape_err(format!(
                "maxpool2d needs spatial dims divisible by {size}, got {ih}x{iw}"
            )));
        }
        let (out, argmax) = ops::maxpool2d_forward(&self.values[x.0], size);
        let requires = self.requires[x.0];
        Ok(self.push(out, Op::MaxPool2d { x: x.0, argmax }, requires))
    }

    /// Trades 2x2 (for `block = 2`) spatial blocks for channels; output
    /// channels are ordered (source channel, block row, block col).
    pub fn space_to_depth(&mut self, x: Var, block: usize) -> Result<Var, AutogradError> {
        let [_, _, ih, iw] = self.values[x.0].shape();
        if block == 0 {
            return Err(AutogradError::InvalidArg { detail: "block must be >= 1".into() });
        }
        if ih % block != 0 || iw % block != 0 {
            return Err(Self::shape_err(format!(
                "space_to_depth needs spatial dims divisible by {block}, got {ih}x{iw}"
            )));
        }
        let out = ops::space_to_depth_forward(&self.values[x.0], block);
        let requires = self.requires[x.0];
        Ok(self.push(out, Op::SpaceToDepth { x: x.0, block }, requires))
    }

    /// Exact inverse of [`Graph::space_to_depth`]; channels must divide by
    /// `block * block`.
    pub fn depth_to_space(&mut self, x: Var, block: usize) -> Result<Var, AutogradError> {
        let [_, c, _, _] = self.values[x.0].shape();
        if block == 0 {
            return Err(AutogradError::InvalidArg { detail: "block must be >= 1".into() });
        }
        if c % (block * block) != 0 {
            return Err(Self::shape_err(format!(
                "depth_to_space needs channels divisible by {}, got {c}",
                block * block
            )));
        }
        let out = ops::depth_to_space_forward(&self.values[x.0], block);
        let requires = self.requires[x.0];
        Ok(self.push(out, Op::DepthToSpace { x: x.0, block }, requires))
    }

    /// Concatenates along the channel axis in argument order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var, AutogradError> {
        if xs.is_empty() {
            return Err(AutogradError::InvalidArg { detail: "empty concatenation".into() });
        }
        let [bn, _, h, w] = self.values[xs[0].0].shape();
        for v in xs {
            let [vn, _, vh, vw] = self.values[v.0].shape();
            if (vn, vh, vw) != (bn, h, w) {
                return Err(Self::shape_err(format!(
                    "concat_channels operands disagree: {:?} vs {:?}",
                    self.values[xs[0].0].shape(),
                    self.values[v.0].shape()
                )));
            }
        }
        let tensors: Vec<&Tensor> = xs.iter().map(|v| &self.values[v.0]).collect();
        let out = ops::concat_channels_forward(&tensors);
        let mut offsets = Vec::with_capacity(xs.len());
        let mut at = 0;
        for v in xs {
            offsets.push(at);
            at += self.values[v.0].shape()[1];
        }
        let requires = xs.iter().any(|v| self.requires[v.0]);
        let ids = xs.iter().map(|v| v.0).collect();
        Ok(self.push(out, Op::ConcatChannels { xs: ids, offsets }, requires))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.elementwise_pair(a, b, false)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.elementwise_pair(a, b, true)
    }

    fn elementwise_pair(&mut self, a: Var, b: Var, negate: bool) -> Result<Var, AutogradError> {
        if self.values[a.0].shape() != self.values[b.0].shape() {
            return Err(Self::shape_err(format!(
                "elementwise operands disagree: {:?} vs {:?}",
                self.values[a.0].shape(),
                self.values[b.0].shape()
            )));
        }
        let mut out = self.values[a.0].clone();
        out.add_scaled(&self.values[b.0], if negate { -1.0 } else { 1.0 });
        let requires = self.requires[a.0] || self.requires[b.0];
        let op = if negate { Op::Sub { a: a.0, b: b.0 } } else { Op::Add { a: a.0, b: b.0 } };
        Ok(self.push(out, op, requires))
    }

    /// Multiplication by a compile-time-known constant, e.g. a loss weight.
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, AutogradError> {
        if !factor.is_finite() {
            return Err(AutogradError::InvalidArg {
                detail: format!("scale factor must be finite, got {factor}"),
            });
        }
        let mut out = self.values[x.0].clone();
        for v in out.data_mut() {
            *v *= factor;
        }
        let requires = self.requires[x.0];
        Ok(self.push(out, Op::Scale { x: x.0, factor }, requires))
    }

    /// Mean absolute error, returned as a scalar node.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var, AutogradError> {
        if self.values[pred.0].shape() != self.values[target.0].shape() {
            return Err(Self::shape_err(format!(
                "l1_loss operands disagree: {:?} vs {:?}",
                self.values[pred.0].shape(),
                self.values[target.0].shape()
            )));
        }
        let out = ops::l1_loss_forward(&self.values[pred.0], &self.values[target.0]);
        let requires = self.requires[pred.0] || self.requires[target.0];
        Ok(self.push(out, Op::L1Loss { pred: pred.0, target: target.0 }, requires))
    }

    /// Reverse sweep from a scalar loss. Gradients of earlier backward calls
    /// are cleared first, so each call reports exactly one loss.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutogradError> {
        let shape = self.values[loss.0].shape();
        if self.values[loss.0].numel() != 1 {
            return Err(AutogradError::NotScalar { shape });
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.requires[i] {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Conv2d { x, w, b, stride, padding } => {
                    let (x, w, b, stride, padding) = (*x, *w, *b, *stride, *padding);
                    if self.requires[x] {
                        let shape = self.values[x].shape();
                        let buf = Self::slot(&mut self.grads, x, shape);
                        conv::conv2d_input_grad(&g, &self.values[w], stride, padding, buf);
                    }
                    if self.requires[w] {
                        let shape = self.values[w].shape();
                        let buf = Self::slot(&mut self.grads, w, shape);
                        conv::conv2d_weight_grad(&g, &self.values[x], stride, padding, buf);
                    }
                    if self.requires[b] {
                        let shape = self.values[b].shape();
                        let buf = Self::slot(&mut self.grads, b, shape);
                        conv::bias_grad(&g, buf);
                    }
                }
                Op::ConvTranspose2d { x, w, b, stride } => {
                    let (x, w, b, stride) = (*x, *w, *b, *stride);
                    if self.requires[x] {
                        let shape = self.values[x].shape();
                        let buf = Self::slot(&mut self.grads, x, shape);
                        conv::conv_transpose2d_input_grad(&g, &self.values[w], stride, buf);
                    }
                    if self.requires[w] {
                        let shape = self.values[w].shape();
                        let buf = Self::slot(&mut self.grads, w, shape);
                        conv::conv_transpose2d_weight_grad(&g, &self.values[x], stride, buf);
                    }
                    if self.requires[b] {
                        let shape = self.values[b].shape();
                        let buf = Self::slot(&mut self.grads, b, shape);
                        conv::bias_grad(&g, buf);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let (x, slope) = (*x, *slope);
                    if self.requires[x] {
                        let shape = self.values[x].shape();
                        let buf = Self::slot(&mut self.grads, x, shape);
                        ops::leaky_relu_backward(&g, &self.values[x], slope, buf);
                    }
                }
                Op::MaxPool2d { x, argmax } => {
                    let xi = *x;
                    if self.requires[xi] {
                        let shape = self.values[xi].shape();
                        let buf = Self::slot(&mut self.grads, xi, shape);
                        ops::maxpool2d_backward(&g, argmax, buf);
                    }
                }
                Op::SpaceToDepth { x, block } => {
                    let (x, block) = (*x, *block);
                    if self.requires[x] {
                        let shape = self.values[x].shape();
                        let buf = Self::slot(&mut self.grads, x, shape);
                        ops::space_to_depth_backward(&g, block, buf);
                    }
                }
                Op::DepthToSpace { x, block } => {
                    let (x, block) = (*x, *block);
                    if self.requires[x] {
                        let shape = self.values[x].shape();
                        let buf = Self::slot(&mut self.grads, x, shape);
                        ops::depth_to_space_backward(&g, block, buf);
                    }
                }
                Op::ConcatChannels { xs, offsets } => {
                    for (&x, &offset) in xs.iter().zip(offsets.iter()) {
                        if self.requires[x] {
                            let shape = self.values[x].shape();
                            let buf = Self::slot(&mut self.grads, x, shape);
                            ops::concat_channels_backward(&g, offset, buf);
                        }
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    for idx in [a, b] {
                        if self.requires[idx] {
                            let shape = self.values[idx].shape();
                            Self::slot(&mut self.grads, idx, shape).add_scaled(&g, 1.0);
                        }
                    }
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.requires[a] {
                        let shape = self.values[a].shape();
                        Self::slot(&mut self.grads, a, shape).add_scaled(&g, 1.0);
                    }
                    if self.requires[b] {
                        let shape = self.values[b].shape();
                        Self::slot(&mut self.grads, b, shape).add_scaled(&g, -1.0);
                    }
                }
                Op::Scale { x, factor } => {
                    let (x, factor) = (*x, *factor);
                    if self.requires[x] {
                        let shape = self.values[x].shape();
                        Self::slot(&mut self.grads, x, shape).add_scaled(&g, factor);
                    }
                }
                Op::L1Loss { pred, target } => {
                    let (pred, target) = (*pred, *target);
                    if self.requires[pred] {
                        let shape = self.values[pred].shape();
                        let buf = Self::slot(&mut self.grads, pred, shape);
                        // Buffers borrow grads; values borrow separately.
                        ops::l1_loss_backward(
                            &g,
                            &self.values[pred],
                            &self.values[target],
                            Some(buf),
                            None,
                        );
                    }
                    if self.requires[target] {
                        let shape = self.values[target].shape();
                        let buf = Self::slot(&mut self.grads, target, shape);
                        ops::l1_loss_backward(
                            &g,
                            &self.values[pred],
                            &self.values[target],
                            None,
                            Some(buf),
                        );
                    }
                }
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn slot(grads: &mut [Option<Tensor>], idx: usize, shape: [usize; 4]) -> &mut Tensor {
        grads[idx].get_or_insert_with(|| Tensor::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_of_one_tensor_is_identity() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::filled([1, 4, 2, 2], 3.0), false);
        let y = g.concat_channels(&[x]).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn concat_of_three_quads_feeds_twelve_channels() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::filled([2, 4, 3, 3], 1.0), false);
        let b = g.leaf(Tensor::filled([2, 4, 3, 3], 2.0), false);
        let c = g.leaf(Tensor::filled([2, 4, 3, 3], 3.0), false);
        let out = g.concat_channels(&[a, b, c]).unwrap();
        assert_eq!(g.value(out).shape(), [2, 12, 3, 3]);
    }

    #[test]
    fn scale_multiplies_values_and_gradients() {
        // loss = mean |3x| with x = [2], so value 6 and dloss/dx = 3.
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0), true);
        let tripled = g.scale(x, 3.0).unwrap();
        let target = g.leaf(Tensor::scalar(0.0), false);
        let loss = g.l1_loss(tripled, target).unwrap();
        assert_eq!(g.value(loss).data()[0], 6.0);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data()[0], 3.0);
        assert!(g.scale(x, f64::NAN).is_err());
    }

    #[test]
    fn fan_out_gradients_accumulate_additively() {
        // loss = mean |x + x|  with x = [3], so dloss/dx = 2.
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0), true);
        let doubled = g.add(x, x).unwrap();
        let target = g.leaf(Tensor::scalar(0.0), false);
        let loss = g.l1_loss(doubled, target).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn subtraction_wiring_passes_negated_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::scalar(5.0), true);
        let b = g.leaf(Tensor::scalar(1.0), true);
        let diff = g.sub(a, b).unwrap();
        let target = g.leaf(Tensor::scalar(0.0), false);
        let loss = g.l1_loss(diff, target).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[1.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[-1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_roots() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::filled([1, 1, 2, 2], 1.0), true);
        let y = g.leaky_relu(x, 0.2).unwrap();
        assert!(matches!(g.backward(y), Err(AutogradError::NotScalar { .. })));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0), true);
        let c = g.leaf(Tensor::scalar(7.0), false);
        let s = g.add(x, c).unwrap();
        let target = g.leaf(Tensor::scalar(0.0), false);
        let loss = g.l1_loss(s, target).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn mismatched_channel_count_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::filled([1, 3, 4, 4], 1.0), false);
        let w = g.leaf(Tensor::filled([2, 4, 3, 3], 0.1), false);
        let b = g.leaf(Tensor::zeros([1, 2, 1, 1]), false);
        assert!(matches!(
            g.conv2d(x, w, b, 1, Padding::Same),
            Err(AutogradError::ShapeMismatch { .. })
        ));
    }
}
