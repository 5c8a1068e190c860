//! Interaction recall of the saliency mask with a static camera and with a
//! panning one over a textured background.
//!
//! cargo run --example fragility -- [pan_x] [pairs]

use iajepa::maskfab::{fragility_analysis, MASK_RATIO};
use iajepa::tokenfab::TokenGridSpec;
use iajepa::worldsim::{Background, WorldConfig};

fn main() -> iajepa::Result<()> {
    let mut args = std::env::args().skip(1);
    let pan_x: i32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);
    let pairs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let world = WorldConfig {
        background: Background::Checkerboard {
            cell: 8,
            low: 0.2,
            high: 0.6,
        },
        ..WorldConfig::default()
    };
    let r = fragility_analysis(&world, &TokenGridSpec::default(), (pan_x, 0), pairs, 0, MASK_RATIO)?;
    println!("{} paired collision scenes, pan {:?}", r.seeds.len(), r.pan);
    println!("              static    panning");
    println!("recall       {:8.4}   {:8.4}", r.recall_static, r.recall_pan);
    println!("TV to uniform{:8.4}   {:8.4}", r.tv_static, r.tv_pan);
    Ok(())
}
