//! The shared U-shaped network grammar.
//!
//! A network is a flat layer tape with an explicit skip stack: the encoder
//! pushes the tensor in front of every downsampling stage, the decoder pops
//! and concatenates it after the matching upsampling stage, decoder branch
//! first. Channel widths come from the ladder documented in `config`.
//!
//! Parameters are named tensors owned by the network; a forward pass leafs
//! them into a graph, so the same network serves inference (constants) and
//! training (gradient-bearing leaves).

use autograd::{he_normal, Graph, Padding, Tensor, Var};
use rand_chacha::ChaCha8Rng;

use crate::config::{DenoiserConfig, SubnetConfig, NEGATIVE_SLOPE, PACKED_CHANNELS};
use crate::NodeArchError;

/// Builds a 4-in/4-out noise-estimation sub-network.
pub fn build_subnetwork(cfg: &SubnetConfig, rng: &mut ChaCha8Rng) -> Result<Network, NodeArchError> {
    Network::build(cfg, rng)
}

/// Builds the 12-in/4-out denoiser.
pub fn build_denoiser(cfg: &DenoiserConfig, rng: &mut ChaCha8Rng) -> Result<Network, NodeArchError> {
    cfg.validate()?;
    Network::build(&cfg.as_subnet_shape(), rng)
}

enum LayerSpec {
    /// Stride-1 same-padding conv; `w`/`b` index into the parameter list.
    Conv { w: usize, b: usize, activated: bool },
    /// 2x2 stride-2 transposed conv, always activated.
    ConvTranspose { w: usize, b: usize },
    SpaceToDepth,
    DepthToSpace,
    MaxPool,
    PushSkip,
    PopConcat,
}

pub struct Network {
    specs: Vec<LayerSpec>,
    params: Vec<(String, Tensor)>,
    in_channels: usize,
    out_channels: usize,
    downsample: usize,
}

struct Builder<'r> {
    specs: Vec<LayerSpec>,
    params: Vec<(String, Tensor)>,
    rng: &'r mut ChaCha8Rng,
}

impl Builder<'_> {
    fn param(&mut self, name: String, tensor: Tensor) -> usize {
        self.params.push((name, tensor));
        self.params.len() - 1
    }

    fn conv(&mut self, name: &str, in_c: usize, out_c: usize, k: usize, activated: bool) {
        let weight = he_normal([out_c, in_c, k, k], in_c * k * k, NEGATIVE_SLOPE, self.rng);
        let w = self.param(format!("{name}.w"), weight);
        let b = self.param(format!("{name}.b"), Tensor::zeros([1, out_c, 1, 1]));
        self.specs.push(LayerSpec::Conv { w, b, activated });
    }

    fn conv_transpose(&mut self, name: &str, in_c: usize, out_c: usize) {
        // With a 2x2 kernel at stride 2 each output sees exactly in_c taps.
        let weight = he_normal([in_c, out_c, 2, 2], in_c, NEGATIVE_SLOPE, self.rng);
        let w = self.param(format!("{name}.w"), weight);
        let b = self.param(format!("{name}.b"), Tensor::zeros([1, out_c, 1, 1]));
        self.specs.push(LayerSpec::ConvTranspose { w, b });
    }
}

impl Network {
    /// Builds and He-initializes a network; the parameter draw order is part
    /// of the format, so a fixed seed fully determines the weights.
    pub fn build(shape: &SubnetConfig, rng: &mut ChaCha8Rng) -> Result<Self, NodeArchError> {
        shape.validate()?;
        let mut b = Builder { specs: Vec::new(), params: Vec::new(), rng };
        let k = shape.kernel_size;

        let mut w = shape.in_channels;
        for i in 0..shape.head_conv_count {
            b.conv(&format!("head{i}"), w, shape.base_channels, k, true);
            w = shape.base_channels;
        }
        if shape.bottleneck {
            b.conv("bottleneck", w, shape.base_channels / 2, 1, true);
            w = shape.base_channels / 2;
        }

        let mut skips: Vec<usize> = Vec::new();
        for s in 0..shape.shuffle_stages {
            b.specs.push(LayerSpec::PushSkip);
            skips.push(w);
            b.specs.push(LayerSpec::SpaceToDepth);
            let out = shape.base_channels << s;
            b.conv(&format!("down{s}"), 4 * w, out, k, true);
            w = out;
        }
        for p in 0..shape.pool_stages {
            let stage = shape.shuffle_stages + p;
            b.specs.push(LayerSpec::PushSkip);
            skips.push(w);
            b.specs.push(LayerSpec::MaxPool);
            let out = shape.base_channels << stage;
            b.conv(&format!("down{stage}"), w, out, k, true);
            w = out;
        }

        for p in (0..shape.pool_stages).rev() {
            let stage = shape.shuffle_stages + p;
            let sw = skips.pop().expect("one skip per stage");
            b.conv_transpose(&format!("up{stage}"), w, sw);
            b.specs.push(LayerSpec::PopConcat);
            b.conv(&format!("post{stage}"), 2 * sw, sw, k, true);
            w = sw;
        }
        for s in (0..shape.shuffle_stages).rev() {
            let sw = skips.pop().expect("one skip per stage");
            b.conv(&format!("up{s}"), w, 4 * sw, k, true);
            b.specs.push(LayerSpec::DepthToSpace);
            b.specs.push(LayerSpec::PopConcat);
            b.conv(&format!("post{s}"), 2 * sw, sw, k, true);
            w = sw;
        }
        b.conv("out", w, PACKED_CHANNELS, k, false);

        Ok(Network {
            specs: b.specs,
            params: b.params,
            in_channels: shape.in_channels,
            out_channels: PACKED_CHANNELS,
            downsample: shape.downsample_factor(),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn downsample_factor(&self) -> usize {
        self.downsample
    }

    /// Named parameters, in tape order.
    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Replaces one parameter; the shape must match.
    pub fn set_param(&mut self, name: &str, tensor: Tensor) -> Result<(), NodeArchError> {
        let slot = self
            .params
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| NodeArchError::Model { detail: format!("no parameter named {name}") })?;
        if slot.1.shape() != tensor.shape() {
            return Err(NodeArchError::Model {
                detail: format!(
                    "parameter {name} expects shape {:?}, got {:?}",
                    slot.1.shape(),
                    tensor.shape()
                ),
            });
        }
        slot.1 = tensor;
        Ok(())
    }

    pub(crate) fn param_tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.params[index].1
    }

    fn check_input(&self, shape: [usize; 4]) -> Result<(), NodeArchError> {
        let [_, c, h, w] = shape;
        if c != self.in_channels {
            return Err(NodeArchError::Input {
                detail: format!("network expects {} input channels, got {c}", self.in_channels),
            });
        }
        if h % self.downsample != 0 || w % self.downsample != 0 {
            return Err(NodeArchError::Input {
                detail: format!(
                    "spatial dims {h}x{w} must be divisible by the downsampling factor {}",
                    self.downsample
                ),
            });
        }
        Ok(())
    }

    /// Runs the tape with caller-supplied parameter nodes (one per entry of
    /// [`Network::params`], same order). This is what the finite-difference
    /// harness drives.
    pub fn forward_with(
        &self,
        g: &mut Graph,
        input: Var,
        params: &[Var],
    ) -> Result<Var, NodeArchError> {
        if params.len() != self.params.len() {
            return Err(NodeArchError::Input {
                detail: format!("expected {} parameter nodes, got {}", self.params.len(), params.len()),
            });
        }
        self.check_input(g.value(input).shape())?;
        let mut cur = input;
        let mut skips: Vec<Var> = Vec::new();
        for spec in &self.specs {
            cur = match spec {
                LayerSpec::Conv { w, b, activated } => {
                    let y = g.conv2d(cur, params[*w], params[*b], 1, Padding::Same)?;
                    if *activated {
                        g.leaky_relu(y, NEGATIVE_SLOPE)?
                    } else {
                        y
                    }
                }
                LayerSpec::ConvTranspose { w, b } => {
                    let y = g.conv_transpose2d(cur, params[*w], params[*b], 2)?;
                    g.leaky_relu(y, NEGATIVE_SLOPE)?
                }
                LayerSpec::SpaceToDepth => g.space_to_depth(cur, 2)?,
                LayerSpec::DepthToSpace => g.depth_to_space(cur, 2)?,
                LayerSpec::MaxPool => g.maxpool2d(cur, 2)?,
                LayerSpec::PushSkip => {
                    skips.push(cur);
                    cur
                }
                LayerSpec::PopConcat => {
                    let skip = skips.pop().expect("decoder mirrors encoder");
                    g.concat_channels(&[cur, skip])?
                }
            };
        }
        Ok(cur)
    }

    /// Records a forward pass, leafing the stored parameters into the graph.
    /// Returns the output and the parameter nodes in [`Network::params`]
    /// order; with `trainable` they receive gradients on backward.
    pub fn forward(
        &self,
        g: &mut Graph,
        input: Var,
        trainable: bool,
    ) -> Result<(Var, Vec<Var>), NodeArchError> {
        let vars: Vec<Var> = self.params.iter().map(|(_, t)| g.leaf(t.clone(), trainable)).collect();
        let out = self.forward_with(g, input, &vars)?;
        Ok((out, vars))
    }

    /// Convenience single-tensor inference.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor, NodeArchError> {
        let mut g = Graph::new();
        let x = g.leaf(input.clone(), false);
        let (out, _) = self.forward(&mut g, x, false)?;
        Ok(g.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn toy_subnet_parameter_count_matches_hand_sum() {
        // head0 4->8 (296) + head1 8->8 (584) + bottleneck 8->4 1x1 (36)
        // + down0 16->8 (1160) + down1 8->16 (1168)
        // + up1 transpose 16->8 (520) + post1 16->8 (1160)
        // + up0 8->16 (1168) + post0 8->4 (292) + out 4->4 (148)
        let net = Network::build(&SubnetConfig::default(), &mut rng()).unwrap();
        assert_eq!(net.parameter_count(), 6532);
    }

    #[test]
    fn shapes_are_preserved_for_divisible_inputs() {
        let net = Network::build(&SubnetConfig::default(), &mut rng()).unwrap();
        for (n, h, w) in [(1, 64, 64), (2, 8, 8), (1, 12, 20)] {
            let out = net.infer(&Tensor::zeros([n, 4, h, w])).unwrap();
            assert_eq!(out.shape(), [n, 4, h, w]);
        }
    }

    #[test]
    fn denoiser_maps_twelve_channels_to_four() {
        let shape = crate::DenoiserConfig::default().as_subnet_shape();
        let net = Network::build(&shape, &mut rng()).unwrap();
        let out = net.infer(&Tensor::zeros([1, 12, 16, 16])).unwrap();
        assert_eq!(out.shape(), [1, 4, 16, 16]);
    }

    #[test]
    fn indivisible_or_mischanneled_inputs_are_rejected() {
        let net = Network::build(&SubnetConfig::default(), &mut rng()).unwrap();
        assert!(matches!(
            net.infer(&Tensor::zeros([1, 4, 64, 66])),
            Err(NodeArchError::Input { .. })
        ));
        assert!(matches!(
            net.infer(&Tensor::zeros([1, 5, 64, 64])),
            Err(NodeArchError::Input { .. })
        ));
    }

    #[test]
    fn same_seed_builds_identical_weights() {
        let a = Network::build(&SubnetConfig::default(), &mut rng()).unwrap();
        let b = Network::build(&SubnetConfig::default(), &mut rng()).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn full_scale_preset_builds_and_runs() {
        let net = Network::build(&SubnetConfig::full_scale(), &mut rng()).unwrap();
        assert_eq!(net.downsample_factor(), 16);
        let out = net.infer(&Tensor::zeros([1, 4, 16, 16])).unwrap();
        assert_eq!(out.shape(), [1, 4, 16, 16]);
    }
}
