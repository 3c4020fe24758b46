//! `finetune`: train the assembled model end to end on mixed noise.

use std::path::Path;

use node_arch::{finetune_node, NodeModel, TrainState};
use serde_json::json;

use crate::commands::load_pairs;
use crate::manifest::{Manifest, Split};
use crate::seed::stage_seed;
use crate::{logging, CliError, Context};

/// Loads the pretrained checkpoint, trains on the mixed training split,
/// and writes `model.ckpt` with its optimizer state.
pub fn run(ctx: &Context, manifest_path: &Path, model_path: &Path) -> Result<(), CliError> {
    let (mut model, _) = NodeModel::load(model_path)?;
    check_architecture(ctx, &model, model_path)?;

    let (manifest, root) = Manifest::load(manifest_path)?;
    let pairs = load_pairs(&manifest, &root, "mixed", Split::Train)?;
    let cfg = ctx.config.finetune.to_train_config(stage_seed(ctx.seed, "finetune"));
    let mut state = TrainState::new(&model, ctx.config.finetune_options);
    logging::event("finetune", json!({ "pairs": pairs.len(), "steps": cfg.max_steps }));
    finetune_node(&mut model, &pairs, &cfg, &mut state, logging::step)?;

    model.provenance.dataset_hash = Some(manifest.content_hash.clone());
    let path = ctx.out.join("model.ckpt");
    model.save(&path, Some(&state))?;
    logging::event("finetuned", json!({ "checkpoint": path.display().to_string() }));
    Ok(())
}

/// The checkpoint must carry exactly the architecture this run is
/// configured for; a mismatch means the stages disagree about the model.
pub(crate) fn check_architecture(
    ctx: &Context,
    model: &NodeModel,
    path: &Path,
) -> Result<(), CliError> {
    if model.subnet_config != ctx.config.subnet
        || model.denoiser_config != ctx.config.denoiser
        || model.wiring != ctx.config.wiring
    {
        return Err(CliError::State(format!(
            "{}: checkpoint architecture mismatch: checkpoint was built for \
             subnet {:?}, denoiser {:?}, wiring {:?}",
            path.display(),
            model.subnet_config,
            model.denoiser_config,
            model.wiring,
        )));
    }
    Ok(())
}
