//! Staged pre-training of one variant on freshly simulated clips, saving the
//! final checkpoint.
//!
//! cargo run --example pretrain -- [variant] [steps_per_stage] [out.iajc]

use std::path::PathBuf;

use iajepa::jepacore::{JepaModel, ModelConfig};
use iajepa::tokenfab::NormConstants;
use iajepa::trainfab::{run_staged_pipeline, save_checkpoint, Checkpoint, StageConfig, TrainSet, Variant};
use iajepa::worldsim::WorldConfig;

fn main() -> iajepa::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().as_deref().unwrap_or("ia").parse()?;
    let steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "pretrain.iajc".into()));

    let model = ModelConfig::tiny();
    let norm = NormConstants::default();
    let data = TrainSet::generate(&WorldConfig::default(), &model.grid, &norm, 64, 1000, 1)?;
    let base = StageConfig {
        steps,
        batch: 4,
        ..StageConfig::default()
    };
    let mut state = Checkpoint::new(JepaModel::<f32>::init(&model, base.seed)?, &norm, "example");
    run_staged_pipeline(&variant.stages(&base), 0, &mut state, &data, |_, log| {
        let first = log.losses.first().copied().unwrap_or(f64::NAN);
        let last = log.losses.last().copied().unwrap_or(f64::NAN);
        println!("{:<16} {:>4} steps  loss {first:.5} -> {last:.5}", log.stage, log.losses.len());
        Ok(())
    })?;
    save_checkpoint(&out, &state)?;
    println!("saved {} (backbone {})", out.display(), state.model.backbone_digest());
    Ok(())
}
