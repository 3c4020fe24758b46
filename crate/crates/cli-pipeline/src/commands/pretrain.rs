//! `pretrain`: teach each noise branch on its single-noise dataset.
//!
//! The GP branch trains on Gaussian+Poisson corruptions and the DP branch
//! on defect-only corruptions, both against the clean scenes. Because those
//! datasets contain only one noise component each, regressing the clean
//! image is exactly regressing the complement the wiring expects. The
//! denoiser is left at its seeded initialization for `finetune`.

use std::path::Path;

use node_arch::{pretrain_subnetwork, NodeModel};
use serde_json::json;

use crate::commands::load_pairs;
use crate::manifest::{Manifest, Split};
use crate::seed::stage_seed;
use crate::{logging, CliError, Context};

/// Trains both sub-networks from the manifest's training split and writes
/// `pretrained.ckpt`.
pub fn run(ctx: &Context, manifest_path: &Path) -> Result<(), CliError> {
    let (manifest, root) = Manifest::load(manifest_path)?;
    let gp_pairs = load_pairs(&manifest, &root, "gp", Split::Train)?;
    let dp_pairs = load_pairs(&manifest, &root, "defect", Split::Train)?;

    let mut model = NodeModel::new(
        ctx.config.subnet.clone(),
        ctx.config.denoiser.clone(),
        ctx.config.wiring,
        stage_seed(ctx.seed, "model"),
    )?;

    for (branch, pairs, net) in [
        ("gp", &gp_pairs, &mut model.subnet_gp),
        ("dp", &dp_pairs, &mut model.subnet_dp),
    ] {
        let cfg = ctx
            .config
            .pretrain
            .to_train_config(stage_seed(ctx.seed, &format!("pretrain/{branch}")));
        logging::event("pretrain_branch", json!({ "branch": branch, "pairs": pairs.len() }));
        pretrain_subnetwork(net, pairs, &cfg, logging::step)?;
    }

    model.provenance.pretrain_gp_steps = ctx.config.pretrain.max_steps;
    model.provenance.pretrain_dp_steps = ctx.config.pretrain.max_steps;
    model.provenance.dataset_hash = Some(manifest.content_hash.clone());
    let path = ctx.out.join("pretrained.ckpt");
    model.save(&path, None)?;
    logging::event("pretrained", json!({ "checkpoint": path.display().to_string() }));
    Ok(())
}
