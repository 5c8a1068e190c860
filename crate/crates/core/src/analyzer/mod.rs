//! Measurements on frozen features: latent dispersion, the motion-energy
//! linearity fit, latent rollouts, and sparsified saliency maps.

mod plot;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradfab::{Scalar, Tape};
use crate::jepacore::{encode_tokens, predict_rows, JepaModel};
use crate::maskfab::MaskStrategy;
use crate::trainfab::{FeatureBank, TrainSet};
use crate::worldsim::with_workers;

pub use crate::maskfab::interaction_recall as mask_recall;
pub use plot::{emit_csv, emit_svg, read_csv, render_svg, to_pgm, Plot};

/// Percentile below which [`saliency_viz`] zeroes cells.
pub const SALIENCY_PERCENTILE: f64 = 0.8;

/// One clip's row of the linearity analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub clip_id: u32,
    /// Mean pixel motion energy of the clip.
    pub motion_energy: f64,
    pub dispersion: f64,
    pub mask_strategy: Option<MaskStrategy>,
    pub mask_recall: Option<f64>,
}

/// Population standard deviation over every entry of a feature slab.
pub fn latent_dispersion(slab: &[f32]) -> f64 {
    if slab.is_empty() {
        return 0.0;
    }
    let n = slab.len() as f64;
    let mean = slab.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = slab.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Ordinary least squares of `y` on `x` with `R² = 1 − SS_res/SS_tot`.
pub fn ols_r2(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::dim("ols_r2", &[&[x.len()], &[y.len()]]));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("{n} points, need at least 3")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ols_r2 input".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("x has zero variance".into()));
    }
    if syy == 0.0 {
        return Err(Error::Degenerate("y has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(LinearFit {
        slope,
        intercept,
        r2: 1.0 - ss_res / syy,
        n,
    })
}

/// Records for every bank clip that `data` also holds, in bank order.
///
/// With `recall` set, each record also carries the interaction recall of that
/// strategy's mask (ratio, seed).
pub fn analysis_records(
    bank: &FeatureBank,
    data: &TrainSet,
    recall: Option<(MaskStrategy, f64, u64)>,
    workers: usize,
) -> Result<Vec<AnalysisRecord>> {
    let index: std::collections::HashMap<u32, usize> = data.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    with_workers(workers, || {
        (0..bank.len())
            .into_par_iter()
            .map(|p| {
                let id = bank.ids[p];
                let i = *index
                    .get(&id)
                    .ok_or_else(|| Error::Contract(format!("clip {id} of the bank is not in the dataset")))?;
                let g = data.saliency(i);
                let (mask_strategy, mask_recall) = match recall {
                    Some((s, ratio, seed)) => {
                        let mask = data.mask(i, s, ratio, seed.wrapping_add(id as u64))?;
                        (Some(s), mask_recall(&mask, &data.labels(i).interaction_tokens))
                    }
                    None => (None, None),
                };
                Ok(AnalysisRecord {
                    clip_id: id,
                    motion_energy: g.iter().sum::<f64>() / g.len() as f64,
                    dispersion: latent_dispersion(bank.slab(p)),
                    mask_strategy,
                    mask_recall,
                })
            })
            .collect()
    })?
}

/// Motion energy against dispersion over `records`.
pub fn linearity(records: &[AnalysisRecord]) -> Result<LinearFit> {
    let x: Vec<f64> = records.iter().map(|r| r.motion_energy).collect();
    let y: Vec<f64> = records.iter().map(|r| r.dispersion).collect();
    ols_r2(&x, &y)
}

/// Cosine similarities between consecutive predicted slice means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutCurve {
    pub context_slices: usize,
    /// Entry `j` compares predicted slice `context_slices + j + 1` with the one before it.
    pub similarity: Vec<f64>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (true, true) => (dot / (na * nb)).clamp(-1.0, 1.0),
        (false, false) => 1.0,
        _ => 0.0,
    }
}

/// Autoregressive latent rollout of one clip.
///
/// The first `k0` slices are encoded as context; the predictor fills the next
/// slice, whose predicted rows are appended to the context before the
/// following slice is predicted, up to the last slice.
pub fn rollout_curve<T: Scalar>(model: &JepaModel<T>, tokens: &[T], k0: usize) -> Result<RolloutCurve> {
    let grid = model.config.grid;
    let slices = grid.slices();
    if k0 == 0 || k0 >= slices {
        return Err(Error::Contract(format!("context slices {k0} outside [1, {})", slices)));
    }
    let slice_tokens = |s: usize| -> Vec<usize> {
        (0..grid.rows())
            .flat_map(|r| (0..grid.cols()).map(move |c| grid.index(s, r, c)))
            .collect()
    };
    let mut tape = Tape::new();
    let phi = model.phi.bind(&mut tape, false);
    let theta = model.theta.bind(&mut tape, false);
    let mut visible: Vec<usize> = (0..k0).flat_map(slice_tokens).collect();
    let mut ctx = encode_tokens(&mut tape, &model.config, &model.enc, &phi, tokens, &visible)?;
    let d = model.config.dim;
    let mut means: Vec<Vec<f64>> = Vec::new();
    for s in k0..slices {
        let target = slice_tokens(s);
        let pred = predict_rows(&mut tape, model, &phi, &theta, ctx, &visible, &target)?;
        let mut mean = vec![0.0; d];
        for row in tape.value(pred).chunks(d) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v.as_f64());
        }
        mean.iter_mut().for_each(|m| *m /= target.len() as f64);
        means.push(mean);
        ctx = tape.concat_rows(&[ctx, pred])?;
        visible.extend(target);
    }
    Ok(RolloutCurve {
        context_slices: k0,
        similarity: means.windows(2).map(|w| cosine(&w[0], &w[1])).collect(),
    })
}

/// Entry-wise mean of equally long curves.
pub fn mean_curve(curves: &[RolloutCurve]) -> Result<Vec<f64>> {
    let first = curves.first().ok_or_else(|| Error::Contract("no rollout curves".into()))?;
    let n = first.similarity.len();
    if curves.iter().any(|c| c.similarity.len() != n) {
        return Err(Error::Contract("rollout curves differ in length".into()));
    }
    Ok((0..n)
        .map(|j| curves.iter().map(|c| c.similarity[j]).sum::<f64>() / curves.len() as f64)
        .collect())
}

/// Largest per-token L2 norm of a `[slices, cells, dim]` slab; the scale a
/// shared `global_max` is taken over.
pub fn saliency_peak(slab: &[f32], dims: [usize; 3]) -> Result<f64> {
    Ok(temporal_max(slab, dims)?.into_iter().fold(0.0, f64::max))
}

fn temporal_max(slab: &[f32], dims: [usize; 3]) -> Result<Vec<f64>> {
    let [slices, cells, dim] = dims;
    if slab.len() != slices * cells * dim || dim == 0 {
        return Err(Error::dim("saliency_viz", &[&[slab.len()], &dims]));
    }
    let mut out = vec![0.0f64; cells];
    for (t, row) in slab.chunks(dim).enumerate() {
        let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        let c = t % cells;
        out[c] = out[c].max(norm);
    }
    Ok(out)
}

/// Sparsified per-cell saliency of a feature slab.
///
/// Token L2 norms are max-pooled over time, divided by `global_max` (the
/// slab's own peak when `None`), and every cell below the nearest-rank 80th
/// percentile is zeroed. Ties at the percentile value are all kept; an
/// all-zero slab gives an all-zero map.
pub fn saliency_viz(slab: &[f32], dims: [usize; 3], global_max: Option<f64>) -> Result<Vec<f64>> {
    let mut map = temporal_max(slab, dims)?;
    let scale = match global_max {
        Some(g) if g.is_finite() && g > 0.0 => g,
        Some(g) => return Err(Error::Contract(format!("global max {g} must be positive"))),
        None => map.iter().cloned().fold(0.0, f64::max),
    };
    if scale == 0.0 {
        return Ok(map);
    }
    map.iter_mut().for_each(|v| *v /= scale);
    let mut sorted = map.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = (SALIENCY_PERCENTILE * map.len() as f64).ceil() as usize;
    let threshold = sorted[rank.max(1) - 1];
    map.iter_mut().for_each(|v| {
        if *v < threshold {
            *v = 0.0
        }
    });
    Ok(map)
}
