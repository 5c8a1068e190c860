//! Frozen-feature probes on a briefly pre-trained backbone: collision and
//! event-class linear probes, then the question-answering reasoner.
//!
//! cargo run --example probe -- [clips] [steps_per_stage]

use iajepa::jepacore::{JepaModel, ModelConfig};
use iajepa::probefab::{build_qa_set, train_probe, ProbeConfig, ProbeData, ProbeKind, Vocab};
use iajepa::tokenfab::NormConstants;
use iajepa::trainfab::{extract_features, run_staged_pipeline, Checkpoint, StageConfig, TrainSet, Variant};
use iajepa::worldsim::WorldConfig;

fn main() -> iajepa::Result<()> {
    let mut args = std::env::args().skip(1);
    let clips: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(160);
    let steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);

    let world = WorldConfig::default();
    let model = ModelConfig::tiny();
    let norm = NormConstants::default();
    let data = TrainSet::generate(&world, &model.grid, &norm, clips, 1000, 1)?;
    let base = StageConfig {
        steps,
        batch: 4,
        ..StageConfig::default()
    };
    let mut state = Checkpoint::new(JepaModel::<f32>::init(&model, 0)?, &norm, "example");
    run_staged_pipeline(&Variant::Ia.stages(&base), 0, &mut state, &data, |_, _| Ok(()))?;
    let bank = extract_features(&state, &data, 1)?;

    let vocab = Vocab::for_world(&world);
    let scenes: Vec<(u32, u64)> = data.ids().iter().zip(data.all_labels()).map(|(&id, l)| (id, l.seed)).collect();
    let items = build_qa_set(&world, &vocab, &scenes, 7, 1)?;
    let input = ProbeData {
        bank: &bank,
        labels: data.all_labels(),
        items: &items,
        vocab_size: vocab.len(),
        n_answers: world.max_objects + 1,
    };
    let cfg = ProbeConfig {
        reasoner_epochs: 2,
        ..ProbeConfig::default()
    };
    for kind in [ProbeKind::Collision, ProbeKind::Readout, ProbeKind::Reasoner] {
        let m = train_probe(kind, &input, &cfg)?;
        print!("{:<10} accuracy {:.4}  chance {:.4}", kind.name(), m.accuracy, m.chance);
        if let Some(d) = m.descriptive_accuracy {
            print!("  descriptive {d:.4}  ({} causal questions)", m.questions);
        }
        println!();
    }
    Ok(())
}
