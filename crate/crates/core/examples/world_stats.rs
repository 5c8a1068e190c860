//! Simulates a batch of scenes and prints the event-class distribution.
//!
//! cargo run --example world_stats -- [n_clips] [master_seed]

use iajepa::tokenfab::TokenGridSpec;
use iajepa::worldsim::{generate_scenes, EventClass, WorldConfig};

fn main() -> iajepa::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(512);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let cfg = WorldConfig::default();
    let scenes = generate_scenes(&cfg, &TokenGridSpec::default(), n, seed, 1)?;
    let mut counts = [0usize; 5];
    for s in &scenes {
        counts[s.labels.event_class.index()] += 1;
    }
    for c in EventClass::ALL {
        let k = counts[c.index()];
        println!("{:<18} {:>5}  {:5.1}%", c.name(), k, 100.0 * k as f64 / n as f64);
    }
    let with_collision = scenes.iter().filter(|s| s.labels.collision_present).count();
    println!("collision_present  {:>5}  {:5.1}%", with_collision, 100.0 * with_collision as f64 / n as f64);
    Ok(())
}
