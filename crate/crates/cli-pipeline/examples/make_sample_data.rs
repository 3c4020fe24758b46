//! Generates the bundled sample dataset: 16 clean 128x128 scenes, a
//! 12-frame calibration burst, and a matching toy pipeline config.
//!
//! Usage: cargo run -p cli-pipeline --example make_sample_data -- OUT_DIR [SEED]
//!
//! The full toy workflow from there:
//!
//! ```text
//! node-pipeline calibrate  --burst-dir OUT/burst --out OUT/cal --config OUT/config.json
//! node-pipeline synthesize --clean-dir OUT/clean --model OUT/cal/noise_model.json \
//!     --out OUT/data --config OUT/config.json
//! node-pipeline pretrain   --manifest OUT/data/manifest.json --out OUT/pre --config OUT/config.json
//! node-pipeline finetune   --manifest OUT/data/manifest.json --model OUT/pre/pretrained.ckpt \
//!     --out OUT/fit --config OUT/config.json
//! node-pipeline denoise    --manifest OUT/data/manifest.json --model OUT/fit/model.ckpt \
//!     --variant mixed --out OUT/denoised --config OUT/config.json
//! node-pipeline evaluate   --manifest OUT/data/manifest.json --images-dir OUT/denoised \
//!     --variant mixed --out OUT/report --config OUT/config.json
//! ```

use std::path::Path;
use std::process;
use std::{env, fs};

use cli_pipeline::config::PipelineConfig;
use cli_pipeline::sample::{calibration_burst, sample_scenes, staircase_scene};
use raw_core::io::save_raw;

const SCENES: usize = 16;
const SCENE_SIZE: usize = 128;
const BURST_FRAMES: usize = 12;
const SIGMA_R_SQ: f64 = 4.0;
const SIGMA_S: f64 = 0.5;

fn main() {
    let args: Vec<String> = env::args().collect();
    if args.len() < 2 || args.len() > 3 {
        eprintln!("Usage: {} OUT_DIR [SEED]", args[0]);
        process::exit(1);
    }
    let out = Path::new(&args[1]);
    let seed: u64 = match args.get(2).map(|s| s.parse()).unwrap_or(Ok(0)) {
        Ok(seed) => seed,
        Err(e) => {
            eprintln!("SEED must be a u64: {e}");
            process::exit(1);
        }
    };

    let clean_dir = out.join("clean");
    let burst_dir = out.join("burst");
    fs::create_dir_all(&clean_dir).expect("create clean dir");
    fs::create_dir_all(&burst_dir).expect("create burst dir");

    for (i, scene) in sample_scenes(SCENES, SCENE_SIZE, SCENE_SIZE, seed).iter().enumerate() {
        save_raw(scene, &clean_dir.join(format!("img_{i:03}.pgm"))).expect("write scene");
    }

    // A flat staircase burst calibrates cleanly: each band contributes one
    // (mean, variance) point. The lowest band sits just above black so the
    // read-noise intercept is anchored, not extrapolated.
    let staircase = staircase_scene(320, 320, 10, 74, 914);
    let frames = calibration_burst(&staircase, SIGMA_R_SQ, SIGMA_S, BURST_FRAMES, seed)
        .expect("synthesize burst");
    for (i, frame) in frames.iter().enumerate() {
        save_raw(frame, &burst_dir.join(format!("frame_{i:02}.pgm"))).expect("write frame");
    }

    // Toy training settings sized for a CPU: small patches, short runs, and
    // a learning rate matched to those budgets.
    let mut config = PipelineConfig { seed, ..PipelineConfig::default() };
    for settings in [&mut config.pretrain, &mut config.finetune] {
        settings.patch_size = 16;
        settings.batch_size = 4;
        settings.learning_rate = 1e-3;
        settings.max_steps = 2000;
    }
    let config_path = out.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config).expect("config serializes"))
        .expect("write config");

    println!("Wrote {SCENES} scenes, a {BURST_FRAMES}-frame burst, and {}", config_path.display());
}
