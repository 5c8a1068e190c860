//! Analyses of a feature bank: motion energy against latent dispersion,
//! latent rollout similarity, and one sparsified saliency map. Writes
//! linearity.csv, linearity.svg and saliency.pgm into the output directory.
//!
//! cargo run --example analysis -- [out_dir]

use std::path::PathBuf;

use iajepa::analyzer::{analysis_records, emit_csv, emit_svg, linearity, mean_curve, rollout_curve, saliency_viz, to_pgm, Plot};
use iajepa::jepacore::{JepaModel, ModelConfig};
use iajepa::maskfab::{MaskStrategy, MASK_RATIO};
use iajepa::tokenfab::NormConstants;
use iajepa::trainfab::{extract_features, run_staged_pipeline, Checkpoint, StageConfig, TrainSet, Variant};
use iajepa::worldsim::WorldConfig;

fn main() -> iajepa::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "analysis-out".into()));
    std::fs::create_dir_all(&out)?;
    let model = ModelConfig::tiny();
    let norm = NormConstants::default();
    let data = TrainSet::generate(&WorldConfig::default(), &model.grid, &norm, 64, 1000, 1)?;
    let base = StageConfig {
        steps: 10,
        batch: 4,
        ..StageConfig::default()
    };
    let mut state = Checkpoint::new(JepaModel::<f32>::init(&model, 0)?, &norm, "example");
    run_staged_pipeline(&Variant::Ia.stages(&base), 0, &mut state, &data, |_, _| Ok(()))?;
    let bank = extract_features(&state, &data, 1)?;

    let records = analysis_records(&bank, &data, Some((MaskStrategy::Ia, MASK_RATIO, 0)), 1)?;
    let fit = linearity(&records)?;
    println!("dispersion = {:.4} * energy + {:.4}   R2 {:.4}  ({} clips)", fit.slope, fit.intercept, fit.r2, fit.n);
    let x: Vec<f64> = records.iter().map(|r| r.motion_energy).collect();
    let y: Vec<f64> = records.iter().map(|r| r.dispersion).collect();
    emit_csv(&records, &out.join("linearity.csv"))?;
    let plot = Plot::Scatter {
        x: &x,
        y: &y,
        fit: Some(fit),
        x_label: "motion energy",
        y_label: "latent dispersion",
    };
    emit_svg(&plot, "motion energy vs dispersion", "example", &out.join("linearity.svg"))?;

    let curves = (0..8)
        .map(|i| rollout_curve(&state.model, &data.tokens::<f32>(i)?, 2))
        .collect::<iajepa::Result<Vec<_>>>()?;
    let curve = mean_curve(&curves)?;
    let shown: Vec<String> = curve.iter().map(|s| format!("{s:.6}")).collect();
    println!("rollout cosine from 2 context slices: {}", shown.join(" "));

    let grid = model.grid;
    let viz = saliency_viz(bank.slab(0), bank.dims, None)?;
    let kept = viz.iter().filter(|&&v| v > 0.0).count();
    std::fs::write(out.join("saliency.pgm"), to_pgm(&viz, grid.cols(), grid.rows())?)?;
    println!("saliency map of clip 0 keeps {kept} of {} cells; files in {}", viz.len(), out.display());
    Ok(())
}
