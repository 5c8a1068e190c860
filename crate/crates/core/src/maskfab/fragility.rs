use serde::{Deserialize, Serialize};

use super::{ia_mask, interaction_recall, pool_saliency, motion_energy, MaskSpec, SaliencyMode};
use crate::error::{Error, Result};
use crate::tokenfab::TokenGridSpec;
use crate::worldsim::{make_labels, render, simulate, WorldConfig};

/// Paired static-camera versus panning comparison of the saliency mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragilityReport {
    pub seeds: Vec<u64>,
    pub pan: (i32, i32),
    pub recall_static: f64,
    pub recall_pan: f64,
    /// Mean total-variation distance of the masked spatial histogram to uniform.
    pub tv_static: f64,
    pub tv_pan: f64,
}

/// Share of masked tokens falling in each spatial cell.
pub fn masked_cell_histogram(mask: &MaskSpec, grid: &TokenGridSpec) -> Vec<f64> {
    let mut h = vec![0.0; grid.cells()];
    for &t in &mask.masked {
        h[t % grid.cells()] += 1.0;
    }
    let n = mask.masked.len().max(1) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

pub fn tv_to_uniform(hist: &[f64]) -> f64 {
    let u = 1.0 / hist.len() as f64;
    0.5 * hist.iter().map(|p| (p - u).abs()).sum::<f64>()
}

/// Runs the interaction-aware mask on `pairs` collision scenes rendered twice:
/// once with `config` as given (its pan ignored) and once panned by `pan`.
///
/// Seeds are scanned upward from `first_seed`; physics is identical in both
/// renderings, only the camera differs.
pub fn fragility_analysis(
    config: &WorldConfig,
    grid: &TokenGridSpec,
    pan: (i32, i32),
    pairs: usize,
    first_seed: u64,
    ratio: f64,
) -> Result<FragilityReport> {
    let still = WorldConfig {
        pan: (0, 0),
        ..config.clone()
    };
    let moving = WorldConfig { pan, ..config.clone() };
    let mut seeds = Vec::with_capacity(pairs);
    let (mut rs, mut rp, mut ts, mut tp) = (0.0, 0.0, 0.0, 0.0);
    let mut seed = first_seed;
    let limit = first_seed + 1000 * pairs.max(1) as u64;
    while seeds.len() < pairs {
        if seed >= limit {
            return Err(Error::Degenerate(format!("found only {} collision scenes", seeds.len())));
        }
        let trace = simulate(&still, seed)?;
        if trace.collisions().next().is_none() {
            seed += 1;
            continue;
        }
        for (cfg, recall, tv) in [(&still, &mut rs, &mut ts), (&moving, &mut rp, &mut tp)] {
            let labels = make_labels(&trace, cfg, grid);
            let g = motion_energy(&render(&trace, cfg), grid, SaliencyMode::Spatiotemporal)?;
            let mask = ia_mask(&pool_saliency(&g, grid)?, grid, ratio, seed)?;
            *recall += interaction_recall(&mask, &labels.interaction_tokens).unwrap_or(0.0);
            *tv += tv_to_uniform(&masked_cell_histogram(&mask, grid));
        }
        seeds.push(seed);
        seed += 1;
    }
    let n = pairs.max(1) as f64;
    Ok(FragilityReport {
        seeds,
        pan,
        recall_static: rs / n,
        recall_pan: rp / n,
        tv_static: ts / n,
        tv_pan: tp / n,
    })
}
