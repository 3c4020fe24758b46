//! Adam training loops for the sub-networks and the assembled model.
//!
//! Every step draws its batch from an RNG stream keyed by the absolute step
//! index, so two properties fall out for free: reruns with one seed are
//! bit-identical, and a run resumed from a checkpoint at step k continues
//! exactly as the uninterrupted run would have.

use std::time::Instant;

use autograd::{adam_step, AdamParams, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{TrainConfig, PACKED_CHANNELS};
use crate::model::{wire_node, NodeModel, TrainState};
use crate::net::Network;
use crate::NodeArchError;

/// One training example: a noisy packed image and what the network should
/// turn it into, both `[1, 4, H, W]` in normalized units.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub noisy: Tensor,
    pub target: Tensor,
}

impl TrainPair {
    pub fn new(noisy: Tensor, target: Tensor) -> Result<Self, NodeArchError> {
        let [n, c, _, _] = noisy.shape();
        if n != 1 || c != PACKED_CHANNELS {
            return Err(NodeArchError::Input {
                detail: format!("training pairs are [1, 4, H, W], got {:?}", noisy.shape()),
            });
        }
        if noisy.shape() != target.shape() {
            return Err(NodeArchError::Input {
                detail: format!(
                    "noisy and target disagree: {:?} vs {:?}",
                    noisy.shape(),
                    target.shape()
                ),
            });
        }
        Ok(TrainPair { noisy, target })
    }
}

/// Per-step progress passed to the caller's sink.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

/// Fine-tuning switches. Both default off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneOptions {
    /// Train only the denoiser; sub-network weights stay untouched.
    pub freeze_subnets: bool,
    /// Keep the sub-network objectives during fine-tuning, added to the
    /// final L1 with this weight. Only valid under complement wiring.
    pub aux_loss_weight: Option<f64>,
}

fn check_pairs(pairs: &[TrainPair], patch: usize) -> Result<(), NodeArchError> {
    if pairs.is_empty() {
        return Err(NodeArchError::EmptyDataset);
    }
    for (i, pair) in pairs.iter().enumerate() {
        let [_, _, h, w] = pair.noisy.shape();
        if h < patch || w < patch {
            return Err(NodeArchError::Input {
                detail: format!("pair {i} is {h}x{w}, smaller than the {patch}-pixel patch"),
            });
        }
    }
    Ok(())
}

/// Copies one flipped window of `src` into batch slot `b` of `dst`.
fn copy_patch(
    src: &Tensor,
    dst: &mut Tensor,
    b: usize,
    oy: usize,
    ox: usize,
    patch: usize,
    flip_h: bool,
    flip_v: bool,
) {
    for c in 0..PACKED_CHANNELS {
        for y in 0..patch {
            let sy = oy + if flip_v { patch - 1 - y } else { y };
            for x in 0..patch {
                let sx = ox + if flip_h { patch - 1 - x } else { x };
                dst.set(b, c, y, x, src.at(0, c, sy, sx));
            }
        }
    }
}

/// Assembles the batch for one step: item index, window corner, and flip
/// bits are drawn in that order from the stream `(cfg.seed, step)`. Noisy
/// and target receive identical geometry.
pub fn sample_batch(
    pairs: &[TrainPair],
    cfg: &TrainConfig,
    step: u64,
) -> Result<(Tensor, Tensor), NodeArchError> {
    check_pairs(pairs, cfg.patch_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(step);
    let p = cfg.patch_size;
    let mut noisy = Tensor::zeros([cfg.batch_size, PACKED_CHANNELS, p, p]);
    let mut target = noisy.clone();
    for b in 0..cfg.batch_size {
        let pair = &pairs[rng.random_range(0..pairs.len())];
        let [_, _, h, w] = pair.noisy.shape();
        let oy = if h > p { rng.random_range(0..=h - p) } else { 0 };
        let ox = if w > p { rng.random_range(0..=w - p) } else { 0 };
        let (fh, fv) =
            if cfg.augmentation { (rng.random::<bool>(), rng.random::<bool>()) } else { (false, false) };
        copy_patch(&pair.noisy, &mut noisy, b, oy, ox, p, fh, fv);
        copy_patch(&pair.target, &mut target, b, oy, ox, p, fh, fv);
    }
    Ok((noisy, target))
}

fn adam_params(cfg: &TrainConfig) -> AdamParams {
    AdamParams { learning_rate: cfg.learning_rate, beta1: cfg.beta1, ..AdamParams::default() }
}

/// Trains one sub-network on (noisy, complement-target) pairs with L1 loss.
pub fn pretrain_subnetwork(
    net: &mut Network,
    pairs: &[TrainPair],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(StepRecord),
) -> Result<(), NodeArchError> {
    if net.in_channels() != PACKED_CHANNELS || net.out_channels() != PACKED_CHANNELS {
        return Err(NodeArchError::Config {
            detail: "pre-training drives 4-in/4-out sub-networks".into(),
        });
    }
    cfg.validate(net.downsample_factor())?;
    check_pairs(pairs, cfg.patch_size)?;
    let hp = adam_params(cfg);
    let mut states: Vec<autograd::AdamState> =
        net.params().iter().map(|(_, t)| autograd::AdamState::new(t.numel())).collect();

    for step in 0..cfg.max_steps {
        let t0 = Instant::now();
        let (x, t) = sample_batch(pairs, cfg, step)?;
        let mut g = Graph::new();
        let xv = g.leaf(x, false);
        let (out, pvars) = net.forward(&mut g, xv, true)?;
        let tv = g.leaf(t, false);
        let loss = g.l1_loss(out, tv)?;
        let loss_value = g.value(loss).data()[0];
        g.backward(loss)?;
        for (i, pv) in pvars.iter().enumerate() {
            let grad = g.grad(*pv).expect("every parameter feeds the loss");
            adam_step(net.param_tensor_mut(i), grad, &mut states[i], &hp)?;
        }
        on_step(StepRecord {
            step,
            loss: loss_value,
            lr: cfg.learning_rate,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(())
}

/// Fine-tunes the assembled model end-to-end on (noisy, clean) pairs.
///
/// Runs steps `state.step .. cfg.max_steps`; pass a fresh
/// [`TrainState::new`] for a full run or a loaded one to resume. Gradients
/// reach the sub-networks through the subtraction wiring unless
/// `state.options.freeze_subnets` is set.
pub fn finetune_node(
    model: &mut NodeModel,
    pairs: &[TrainPair],
    cfg: &TrainConfig,
    state: &mut TrainState,
    mut on_step: impl FnMut(StepRecord),
) -> Result<(), NodeArchError> {
    cfg.validate(model.downsample_factor())?;
    check_pairs(pairs, cfg.patch_size)?;
    let options = state.options;
    if options.aux_loss_weight.is_some() && model.wiring.direct_noise {
        return Err(NodeArchError::Config {
            detail: "auxiliary losses assume complement wiring, not direct_noise".into(),
        });
    }
    let trainable: usize =
        model.trainable_networks(options.freeze_subnets).iter().map(|(_, n)| n.params().len()).sum();
    if state.adam.len() != trainable {
        return Err(NodeArchError::Model {
            detail: format!(
                "optimizer state covers {} parameters, the trainable set has {trainable}",
                state.adam.len()
            ),
        });
    }
    let hp = adam_params(cfg);

    while state.step < cfg.max_steps {
        let step = state.step;
        let t0 = Instant::now();
        let (noisy, clean) = sample_batch(pairs, cfg, step)?;
        let mut g = Graph::new();
        let yv = g.leaf(noisy, false);
        let wired = wire_node(model, &mut g, yv, !options.freeze_subnets, true)?;
        let cleanv = g.leaf(clean, false);
        let main = g.l1_loss(wired.denoised, cleanv)?;
        let loss = match options.aux_loss_weight {
            Some(weight) => {
                let gp = g.l1_loss(wired.gp_out, cleanv)?;
                let dp = g.l1_loss(wired.dp_out, cleanv)?;
                let aux = g.add(gp, dp)?;
                let scaled = g.scale(aux, weight)?;
                g.add(main, scaled)?
            }
            None => main,
        };
        let loss_value = g.value(loss).data()[0];
        g.backward(loss)?;

        let mut pvars = Vec::with_capacity(state.adam.len());
        if !options.freeze_subnets {
            pvars.extend_from_slice(&wired.gp_params);
            pvars.extend_from_slice(&wired.dp_params);
        }
        pvars.extend_from_slice(&wired.dn_params);
        for (i, pv) in pvars.iter().enumerate() {
            let grad = g.grad(*pv).expect("every trainable parameter feeds the loss");
            let slot = model.trainable_param_mut(options.freeze_subnets, i);
            adam_step(slot, grad, &mut state.adam[i].1, &hp)?;
        }

        state.step += 1;
        on_step(StepRecord {
            step,
            loss: loss_value,
            lr: cfg.learning_rate,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
    }
    model.provenance.finetune_steps = state.step;
    Ok(())
}
