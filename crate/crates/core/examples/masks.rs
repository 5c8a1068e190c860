//! Renders one collision scene and compares the masking strategies: how many
//! tokens each hides and how many of the contact tokens it catches.
//!
//! cargo run --example masks -- [seed]

use iajepa::maskfab::{build_mask, interaction_recall, MaskInputs, MaskStrategy, MASK_RATIO};
use iajepa::tokenfab::TokenGridSpec;
use iajepa::worldsim::{make_labels, render, simulate, WorldConfig};

fn main() -> iajepa::Result<()> {
    let mut seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let cfg = WorldConfig::default();
    let grid = TokenGridSpec::default();
    let trace = loop {
        let t = simulate(&cfg, seed)?;
        if t.collisions().next().is_some() {
            break t;
        }
        seed += 1;
    };
    let clip = render(&trace, &cfg);
    let labels = make_labels(&trace, &cfg, &grid);
    let inputs = MaskInputs {
        clip: &clip,
        object_occupancy: &labels.object_occupancy,
    };
    println!(
        "seed {seed}: {} objects, {} collisions, {} interaction tokens",
        trace.n_objects(),
        trace.collisions().count(),
        labels.interaction_tokens.len()
    );
    for strategy in MaskStrategy::ALL {
        let mask = build_mask(strategy, &inputs, &grid, MASK_RATIO, 1)?;
        let recall = interaction_recall(&mask, &labels.interaction_tokens).unwrap_or(0.0);
        println!("{:<10} masks {:>3} of {}  recall {:.3}", strategy.name(), mask.masked.len(), grid.n_tokens(), recall);
    }

    // slice where the first contact happens, masked cells as '#'
    let (frame, ..) = trace.collisions().next().expect("collision scene");
    let slice = frame / grid.tubelet;
    let mask = build_mask(MaskStrategy::Ia, &inputs, &grid, MASK_RATIO, 1)?;
    println!("ia mask at slice {slice}:");
    for r in 0..grid.rows() {
        let row: String = (0..grid.cols())
            .map(|c| if mask.is_masked(grid.index(slice, r, c)) { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
    Ok(())
}
