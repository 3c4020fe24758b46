//! The assembled three-network model, its wiring, and persistence.
//!
//! Wiring (complement mode, the default): each sub-network regresses the
//! noisy image minus its own noise component, so the component estimate is
//! the subtraction `y - subnet(y)` -- plain arithmetic on the graph, with no
//! learned parameters of its own. The denoiser then consumes
//! `concat[y, v_gp, v_dp]`.

use std::path::Path;

use autograd::{AdamState, Checkpoint, Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DenoiserConfig, SubnetConfig, WiringConfig};
use crate::net::{build_denoiser, build_subnetwork, Network};
use crate::train::FinetuneOptions;
use crate::NodeArchError;

/// Architecture-header format tag; bump on incompatible layout changes.
pub const MODEL_FORMAT: &str = "node/v1";

/// How a set of weights came to be, carried inside every model file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Provenance {
    pub seed: u64,
    pub dataset_hash: Option<String>,
    pub pretrain_gp_steps: u64,
    pub pretrain_dp_steps: u64,
    pub finetune_steps: u64,
}

/// Optimizer state of an in-progress fine-tune, checkpointed alongside the
/// weights so a resumed run continues bit-exactly.
pub struct TrainState {
    pub step: u64,
    pub options: FinetuneOptions,
    pub(crate) adam: Vec<(String, AdamState)>,
}

impl TrainState {
    /// Fresh state covering the parameter set `options` makes trainable.
    pub fn new(model: &NodeModel, options: FinetuneOptions) -> Self {
        let mut adam = Vec::new();
        for (prefix, net) in model.trainable_networks(options.freeze_subnets) {
            for (name, tensor) in net.params() {
                adam.push((format!("{prefix}.{name}"), AdamState::new(tensor.numel())));
            }
        }
        TrainState { step: 0, options, adam }
    }
}

pub struct NodeModel {
    pub subnet_gp: Network,
    pub subnet_dp: Network,
    pub denoiser: Network,
    pub subnet_config: SubnetConfig,
    pub denoiser_config: DenoiserConfig,
    pub wiring: WiringConfig,
    pub provenance: Provenance,
}

/// Node handles produced by [`wire_node`], for training and inspection.
pub(crate) struct Wired {
    pub v_gp: Var,
    pub v_dp: Var,
    pub gp_out: Var,
    pub dp_out: Var,
    pub denoised: Var,
    pub gp_params: Vec<Var>,
    pub dp_params: Vec<Var>,
    pub dn_params: Vec<Var>,
}

/// Records the full decomposition wiring on a graph.
pub(crate) fn wire_node(
    model: &NodeModel,
    g: &mut Graph,
    y: Var,
    train_subnets: bool,
    train_denoiser: bool,
) -> Result<Wired, NodeArchError> {
    let (gp_out, gp_params) = model.subnet_gp.forward(g, y, train_subnets)?;
    let (dp_out, dp_params) = model.subnet_dp.forward(g, y, train_subnets)?;
    let (v_gp, v_dp) = if model.wiring.direct_noise {
        (gp_out, dp_out)
    } else {
        (g.sub(y, gp_out)?, g.sub(y, dp_out)?)
    };
    let stack = g.concat_channels(&[y, v_gp, v_dp])?;
    let (dn_out, dn_params) = model.denoiser.forward(g, stack, train_denoiser)?;
    let denoised = if model.wiring.residual_denoiser { g.add(y, dn_out)? } else { dn_out };
    Ok(Wired { v_gp, v_dp, gp_out, dp_out, denoised, gp_params, dp_params, dn_params })
}

impl NodeModel {
    /// Builds a fresh model. Each network draws from its own RNG stream of
    /// `seed`, so the weights are a pure function of (configs, seed).
    pub fn new(
        subnet_config: SubnetConfig,
        denoiser_config: DenoiserConfig,
        wiring: WiringConfig,
        seed: u64,
    ) -> Result<Self, NodeArchError> {
        subnet_config.validate()?;
        denoiser_config.validate()?;
        let base = ChaCha8Rng::seed_from_u64(seed);
        let stream = |index: u64| {
            let mut rng = base.clone();
            rng.set_stream(index);
            rng
        };
        Ok(NodeModel {
            subnet_gp: build_subnetwork(&subnet_config, &mut stream(0))?,
            subnet_dp: build_subnetwork(&subnet_config, &mut stream(1))?,
            denoiser: build_denoiser(&denoiser_config, &mut stream(2))?,
            subnet_config,
            denoiser_config,
            wiring,
            provenance: Provenance { seed, ..Provenance::default() },
        })
    }

    /// Coarsest downsampling factor across the three networks; inputs padded
    /// to a multiple of this fit all of them.
    pub fn downsample_factor(&self) -> usize {
        self.subnet_gp
            .downsample_factor()
            .max(self.subnet_dp.downsample_factor())
            .max(self.denoiser.downsample_factor())
    }

    fn estimate(&self, net: &Network, y: &Tensor) -> Result<Tensor, NodeArchError> {
        let regressed = net.infer(y)?;
        if self.wiring.direct_noise {
            return Ok(regressed);
        }
        let mut data = y.data().to_vec();
        for (d, s) in data.iter_mut().zip(regressed.data()) {
            *d -= s;
        }
        Ok(Tensor::from_vec(y.shape(), data).expect("same shape"))
    }

    /// Gaussian+Poisson noise estimate: `y - subnet_gp(y)`.
    pub fn estimate_gp_noise(&self, y: &Tensor) -> Result<Tensor, NodeArchError> {
        self.estimate(&self.subnet_gp, y)
    }

    /// Defective-pixel noise estimate: `y - subnet_dp(y)`.
    pub fn estimate_dp_noise(&self, y: &Tensor) -> Result<Tensor, NodeArchError> {
        self.estimate(&self.subnet_dp, y)
    }

    /// Full decomposition pass: both noise estimates and the denoised image.
    pub fn node_forward(&self, y: &Tensor) -> Result<(Tensor, Tensor, Tensor), NodeArchError> {
        let mut g = Graph::new();
        let yv = g.leaf(y.clone(), false);
        let wired = wire_node(self, &mut g, yv, false, false)?;
        Ok((
            g.value(wired.v_gp).clone(),
            g.value(wired.v_dp).clone(),
            g.value(wired.denoised).clone(),
        ))
    }

    /// The networks the given freeze setting trains, with their checkpoint
    /// prefixes, in optimizer order.
    pub(crate) fn trainable_networks(&self, freeze_subnets: bool) -> Vec<(&'static str, &Network)> {
        if freeze_subnets {
            vec![("dn", &self.denoiser)]
        } else {
            vec![("gp", &self.subnet_gp), ("dp", &self.subnet_dp), ("dn", &self.denoiser)]
        }
    }

    /// Mutable access to the i-th trainable parameter under the given freeze
    /// setting, same order as [`NodeModel::trainable_networks`].
    pub(crate) fn trainable_param_mut(&mut self, freeze_subnets: bool, index: usize) -> &mut Tensor {
        let mut i = index;
        if !freeze_subnets {
            if i < self.subnet_gp.params().len() {
                return self.subnet_gp.param_tensor_mut(i);
            }
            i -= self.subnet_gp.params().len();
            if i < self.subnet_dp.params().len() {
                return self.subnet_dp.param_tensor_mut(i);
            }
            i -= self.subnet_dp.params().len();
        }
        self.denoiser.param_tensor_mut(i)
    }

    fn networks(&self) -> [(&'static str, &Network); 3] {
        [("gp", &self.subnet_gp), ("dp", &self.subnet_dp), ("dn", &self.denoiser)]
    }

    /// Writes weights (and optionally optimizer state) as a checkpoint with
    /// a `node/v1` architecture header.
    pub fn save(&self, path: &Path, state: Option<&TrainState>) -> Result<(), NodeArchError> {
        let header = serde_json::json!({
            "format": MODEL_FORMAT,
            "subnet": self.subnet_config,
            "denoiser": self.denoiser_config,
            "wiring": self.wiring,
            "provenance": self.provenance,
            "train_state": state.map(|s| serde_json::json!({
                "step": s.step,
                "options": s.options,
            })),
        });
        let mut ckpt = Checkpoint::new(header);
        for (prefix, net) in self.networks() {
            for (name, tensor) in net.params() {
                ckpt.push(format!("{prefix}.{name}"), tensor.clone())?;
            }
        }
        if let Some(s) = state {
            for (name, adam) in &s.adam {
                let (m, v) = adam.moments();
                let len = m.len();
                ckpt.push(
                    format!("opt.{name}.m"),
                    Tensor::from_vec([1, 1, 1, len], m.to_vec()).expect("flat moment"),
                )?;
                ckpt.push(
                    format!("opt.{name}.v"),
                    Tensor::from_vec([1, 1, 1, len], v.to_vec()).expect("flat moment"),
                )?;
            }
        }
        ckpt.save(path)?;
        Ok(())
    }

    /// Loads a checkpoint written by [`NodeModel::save`]. The tensor set
    /// must match the header's architecture exactly.
    pub fn load(path: &Path) -> Result<(Self, Option<TrainState>), NodeArchError> {
        let ckpt = Checkpoint::load(path)?;
        let bad = |detail: String| NodeArchError::Model { detail };

        let format = ckpt.arch.get("format").and_then(|v| v.as_str()).unwrap_or("missing");
        if format != MODEL_FORMAT {
            return Err(bad(format!("format {format:?}, this build reads {MODEL_FORMAT:?}")));
        }
        let field = |key: &str| {
            ckpt.arch.get(key).cloned().ok_or_else(|| bad(format!("header lacks {key:?}")))
        };
        let subnet_config: SubnetConfig = serde_json::from_value(field("subnet")?)
            .map_err(|e| bad(format!("subnet config: {e}")))?;
        let denoiser_config: DenoiserConfig = serde_json::from_value(field("denoiser")?)
            .map_err(|e| bad(format!("denoiser config: {e}")))?;
        let wiring: WiringConfig = serde_json::from_value(field("wiring")?)
            .map_err(|e| bad(format!("wiring config: {e}")))?;
        let provenance: Provenance = serde_json::from_value(field("provenance")?)
            .map_err(|e| bad(format!("provenance: {e}")))?;

        let mut model =
            NodeModel::new(subnet_config, denoiser_config, wiring, provenance.seed)?;
        model.provenance = provenance;

        let mut expected: Vec<String> = Vec::new();
        for (prefix, net) in model.networks() {
            for (name, _) in net.params() {
                expected.push(format!("{prefix}.{name}"));
            }
        }
        for full in &expected {
            let tensor = ckpt
                .tensor(full)
                .ok_or_else(|| bad(format!("checkpoint lacks tensor {full}")))?
                .clone();
            let (prefix, name) = full.split_once('.').expect("prefixed name");
            let net = match prefix {
                "gp" => &mut model.subnet_gp,
                "dp" => &mut model.subnet_dp,
                _ => &mut model.denoiser,
            };
            net.set_param(name, tensor)?;
        }

        let state = match ckpt.arch.get("train_state") {
            None | Some(serde_json::Value::Null) => None,
            Some(raw) => {
                let step = raw
                    .get("step")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| bad("train_state lacks step".into()))?;
                let options: FinetuneOptions =
                    serde_json::from_value(field_of(raw, "options").map_err(bad)?)
                        .map_err(|e| bad(format!("train options: {e}")))?;
                let mut state = TrainState::new(&model, options);
                state.step = step;
                for (name, adam) in &mut state.adam {
                    let m = moment(&ckpt, name, "m").map_err(bad)?;
                    let v = moment(&ckpt, name, "v").map_err(bad)?;
                    *adam = AdamState::from_parts(m, v, step)?;
                }
                Some(state)
            }
        };

        let allowed = expected.len() + state.as_ref().map_or(0, |s| 2 * s.adam.len());
        if ckpt.tensors.len() != allowed {
            return Err(bad(format!(
                "checkpoint holds {} tensors, architecture expects {allowed}",
                ckpt.tensors.len()
            )));
        }
        Ok((model, state))
    }
}

fn field_of(value: &serde_json::Value, key: &str) -> Result<serde_json::Value, String> {
    value.get(key).cloned().ok_or_else(|| format!("train_state lacks {key:?}"))
}

fn moment(ckpt: &Checkpoint, name: &str, which: &str) -> Result<Vec<f64>, String> {
    let full = format!("opt.{name}.{which}");
    Ok(ckpt
        .tensor(&full)
        .ok_or_else(|| format!("checkpoint lacks optimizer tensor {full}"))?
        .data()
        .to_vec())
}
