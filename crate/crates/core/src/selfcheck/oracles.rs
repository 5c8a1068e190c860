use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::composite::{flatten, toy_model_config};
use crate::error::Result;
use crate::jepacore::{ema_update, JepaModel};
use crate::maskfab::{ia_mask, object_mask, tube_mask, uniform_mask, MASK_RATIO};
use crate::tokenfab::TokenGridSpec;
use crate::worldsim::{simulate, EventKind, WorldConfig};

/// Largest deviation of `‖ξ_k − φ‖` from `m^k ‖ξ_0 − φ‖` over `steps`
/// updates with φ held fixed.
pub fn ema_law_error(steps: usize, seed: u64) -> Result<f64> {
    let cfg = toy_model_config();
    let model = JepaModel::<f64>::init(&cfg, seed)?;
    let mut xi = model.phi.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for a in xi.arrays_mut() {
        a.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
    }
    let phi = flatten(&[&model.phi]);
    let dist = |xi: &crate::gradfab::ParamSet<f64>| {
        flatten(&[xi]).iter().zip(&phi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let d0 = dist(&xi);
    let mut worst = 0.0f64;
    for k in 1..=steps {
        ema_update(&mut xi, &model.phi, cfg.ema_momentum)?;
        worst = worst.max((dist(&xi) - cfg.ema_momentum.powi(k as i32) * d0).abs());
    }
    Ok(worst)
}

/// Number of saliency maps on which the interaction-aware mask differs from a
/// full sort, plus any cardinality violation of the other strategies.
pub fn mask_oracle_failures(maps: usize, seed: u64) -> Result<usize> {
    let grid = TokenGridSpec::default();
    let n = grid.n_tokens();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for i in 0..maps {
        // every other map draws from a handful of levels to force ties
        let scores: Vec<f64> = if i % 2 == 0 {
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
        } else {
            (0..n).map(|_| rng.gen_range(0..4) as f64 * 0.25).collect()
        };
        let k = (MASK_RATIO * n as f64).ceil() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let mut want = order[..k].to_vec();
        want.sort_unstable();
        let s = rng.gen();
        if ia_mask(&scores, &grid, MASK_RATIO, s)?.masked != want {
            failures += 1;
        }
        let occ: Vec<Vec<f64>> = (0..rng.gen_range(1..6))
            .map(|_| (0..n).map(|_| if rng.gen_bool(0.2) { rng.gen() } else { 0.0 }).collect())
            .collect();
        let counts = [
            uniform_mask(&grid, MASK_RATIO, s)?.masked.len(),
            tube_mask(&grid, MASK_RATIO, s)?.masked.len(),
            object_mask(&occ, &grid, MASK_RATIO, s)?.masked.len(),
        ];
        if counts != [116, 120, 116] {
            failures += 1;
        }
    }
    Ok(failures)
}

/// Worst kinetic-energy drift and worst frame-to-frame momentum change over
/// frames whose only events are collisions.
pub fn physics_error(traces: usize, seed: u64) -> Result<(f64, f64)> {
    let cfg = WorldConfig::default();
    let (mut energy, mut momentum) = (0.0f64, 0.0f64);
    for s in 0..traces as u64 {
        let trace = simulate(&cfg, seed.wrapping_add(s))?;
        let e0 = trace.kinetic_energy(0);
        for t in 0..trace.frames.len() {
            energy = energy.max((trace.kinetic_energy(t) - e0).abs());
        }
        let p = |t: usize| trace.frames[t].iter().fold((0.0, 0.0), |(x, y), o| (x + o.vx, y + o.vy));
        for f in 1..trace.frames.len() {
            let events: Vec<_> = trace.events.iter().filter(|e| e.frame == f).collect();
            if events.is_empty() || events.iter().any(|e| !matches!(e.kind, EventKind::Collision { .. })) {
                continue;
            }
            let (a, b) = (p(f - 1), p(f));
            momentum = momentum.max((a.0 - b.0).abs().max((a.1 - b.1).abs()));
        }
    }
    Ok((energy, momentum))
}
