//! Motion-energy saliency and the masking distributions.
//!
//! Token scores come from the absolute second temporal difference of raw
//! pixels, pooled over each token's spatial cell. The interaction-aware mask
//! hides the highest-scoring tokens; the baselines hide uniform tokens,
//! uniform spatial tubes, or whole ground-truth objects.

mod fragility;

pub use fragility::{fragility_analysis, masked_cell_histogram, tv_to_uniform, FragilityReport};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenfab::TokenGridSpec;
use crate::worldsim::Clip;

/// Default fraction of hidden tokens for every strategy.
pub const MASK_RATIO: f64 = 0.40;
/// Below this peak score the map carries no ranking signal.
pub const STATIC_THRESHOLD: f64 = 1e-8;
/// Per-object occupancy a token needs to count as part of that object.
pub const OBJECT_OCCUPANCY_MIN: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    Patch,
    Tube,
    Object,
    Ia,
    IaTube,
}

impl MaskStrategy {
    pub const ALL: [MaskStrategy; 5] = [
        MaskStrategy::Patch,
        MaskStrategy::Tube,
        MaskStrategy::Object,
        MaskStrategy::Ia,
        MaskStrategy::IaTube,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskStrategy::Patch => "patch",
            MaskStrategy::Tube => "tube",
            MaskStrategy::Object => "object",
            MaskStrategy::Ia => "ia",
            MaskStrategy::IaTube => "ia_tube",
        }
    }

    /// Whether the strategy masks whole spatial tubes.
    pub fn is_tube(self) -> bool {
        matches!(self, MaskStrategy::Tube | MaskStrategy::IaTube)
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskStrategy::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown masking strategy `{s}`")))
    }
}

/// Partition of the token indices into masked and visible sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub strategy: MaskStrategy,
    pub seed: u64,
    pub ratio: f64,
    /// Sorted, unique.
    pub masked: Vec<usize>,
    /// Sorted complement of `masked`.
    pub visible: Vec<usize>,
}

impl MaskSpec {
    pub fn from_masked(strategy: MaskStrategy, seed: u64, ratio: f64, n_tokens: usize, masked: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = masked.into_iter().collect();
        let visible = (0..n_tokens).filter(|i| !set.contains(i)).collect();
        MaskSpec {
            strategy,
            seed,
            ratio,
            masked: set.into_iter().collect(),
            visible,
        }
    }

    pub fn is_masked(&self, token: usize) -> bool {
        self.masked.binary_search(&token).is_ok()
    }

    /// Diagnostic JSON `{strategy, seed, masked}`.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            strategy: MaskStrategy,
            seed: u64,
            masked: &'a [usize],
        }
        Ok(serde_json::to_string(&Dump {
            strategy: self.strategy,
            seed: self.seed,
            masked: &self.masked,
        })?)
    }
}

/// `⌈ratio·n⌉`, robust to representation error in the product.
pub fn mask_count(ratio: f64, n: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Contract(format!("mask ratio {ratio} outside (0,1)")));
    }
    Ok(((ratio * n as f64) - 1e-9).ceil() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyMode {
    /// One map averaged over every frame.
    Spatial,
    /// One map per temporal slice.
    Spatiotemporal,
}

/// Raw pixel motion energy `G`, `[slices, height, width]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub mode: SaliencyMode,
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    pub energy: Vec<f64>,
}

impl SaliencyMap {
    pub fn at(&self, s: usize, y: usize, x: usize) -> f64 {
        self.energy[(s * self.height + y) * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.energy.iter().sum::<f64>() / self.energy.len() as f64
    }

    /// 16-bit binary PGM scaled to the map maximum; slices are tiled left to right.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.energy.iter().cloned().fold(0.0f64, f64::max);
        let (w, h) = (self.width * self.slices, self.height);
        let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
        for y in 0..h {
            for s in 0..self.slices {
                for x in 0..self.width {
                    let v = if max > 0.0 { self.at(s, y, x) / max } else { 0.0 };
                    out.extend_from_slice(&((v * 65535.0).round() as u16).to_be_bytes());
                }
            }
        }
        out
    }
}

/// Mean `|V[t+1] − 2V[t] + V[t−1]|` over channels and frames.
///
/// The stencil is evaluated for `t ∈ [1, T−2]`; the first and last frames take
/// the value of their neighbour. Spatiotemporal mode averages within each
/// tubelet's frames, spatial mode over all frames.
pub fn motion_energy(clip: &Clip, grid: &TokenGridSpec, mode: SaliencyMode) -> Result<SaliencyMap> {
    grid.validate()?;
    let want = [grid.frames, grid.channels, grid.height, grid.width];
    if clip.dims() != want || grid.frames < 3 {
        return Err(Error::dim("motion_energy", &[&clip.dims(), &want]));
    }
    let (t_len, ch, plane) = (clip.frames, clip.channels, clip.height * clip.width);
    // |d2| summed over channels, per frame
    let mut d2 = vec![0.0f64; t_len * plane];
    for t in 1..t_len - 1 {
        for c in 0..ch {
            let prev = &clip.data[((t - 1) * ch + c) * plane..][..plane];
            let cur = &clip.data[(t * ch + c) * plane..][..plane];
            let next = &clip.data[((t + 1) * ch + c) * plane..][..plane];
            let row = &mut d2[t * plane..(t + 1) * plane];
            for p in 0..plane {
                row[p] += (next[p] as f64 - 2.0 * cur[p] as f64 + prev[p] as f64).abs();
            }
        }
    }
    d2.copy_within(plane..2 * plane, 0);
    d2.copy_within((t_len - 2) * plane..(t_len - 1) * plane, (t_len - 1) * plane);

    let (slices, group) = match mode {
        SaliencyMode::Spatial => (1, t_len),
        SaliencyMode::Spatiotemporal => (grid.slices(), grid.tubelet),
    };
    let norm = (group * ch) as f64;
    let mut energy = vec![0.0; slices * plane];
    for s in 0..slices {
        let out = &mut energy[s * plane..(s + 1) * plane];
        for t in s * group..(s + 1) * group {
            for (o, v) in out.iter_mut().zip(&d2[t * plane..(t + 1) * plane]) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= norm);
    }
    Ok(SaliencyMap {
        mode,
        slices,
        height: clip.height,
        width: clip.width,
        energy,
    })
}

/// Average of `G` over each token's spatial cell.
///
/// Returns `n_tokens` scores; a spatial map is broadcast to every slice.
pub fn pool_saliency(g: &SaliencyMap, grid: &TokenGridSpec) -> Result<Vec<f64>> {
    if g.height != grid.height || g.width != grid.width || !(g.slices == 1 || g.slices == grid.slices()) {
        return Err(Error::dim("pool_saliency", &[&[g.slices, g.height, g.width]]));
    }
    let p = grid.patch;
    let area = (p * p) as f64;
    let mut per_slice = vec![0.0; g.slices * grid.cells()];
    for s in 0..g.slices {
        for y in 0..g.height {
            for x in 0..g.width {
                per_slice[s * grid.cells() + (y / p) * grid.cols() + x / p] += g.at(s, y, x);
            }
        }
    }
    per_slice.iter_mut().for_each(|v| *v /= area);
    Ok((0..grid.n_tokens())
        .map(|i| {
            let (s, r, c) = grid.coords(i);
            let s = if g.slices == 1 { 0 } else { s };
            per_slice[s * grid.cells() + r * grid.cols() + c]
        })
        .collect())
}

/// Per-cell scores of a spatial map (the time-broadcast slice of [`pool_saliency`]).
pub fn cell_scores(tokens: &[f64], grid: &TokenGridSpec) -> Vec<f64> {
    tokens[..grid.cells()].to_vec()
}

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_mask(grid: &TokenGridSpec, ratio: f64, seed: u64) -> Result<MaskSpec> {
    let n = grid.n_tokens();
    let k = mask_count(ratio, n)?;
    let picked = index::sample(&mut rng(seed), n, k);
    Ok(MaskSpec::from_masked(MaskStrategy::Patch, seed, ratio, n, picked.into_iter()))
}

fn broadcast_cells(grid: &TokenGridSpec, cells: &[usize]) -> Vec<usize> {
    (0..grid.slices())
        .flat_map(|s| cells.iter().map(move |&c| s * grid.cells() + c))
        .collect()
}

pub fn tube_mask(grid: &TokenGridSpec, ratio: f64, seed: u64) -> Result<MaskSpec> {
    let k = mask_count(ratio, grid.cells())?;
    let cells = index::sample(&mut rng(seed), grid.cells(), k).into_vec();
    Ok(MaskSpec::from_masked(
        MaskStrategy::Tube,
        seed,
        ratio,
        grid.n_tokens(),
        broadcast_cells(grid, &cells),
    ))
}

/// Masks the highest-scoring tokens.
///
/// `scores` holds either one value per token (`ia`) or one per spatial cell
/// (`ia_tube`, whose chosen cells are masked in every slice). A map whose peak
/// is below [`STATIC_THRESHOLD`] falls back to the seeded uniform law.
pub fn ia_mask(scores: &[f64], grid: &TokenGridSpec, ratio: f64, seed: u64) -> Result<MaskSpec> {
    let tube = if scores.len() == grid.n_tokens() {
        false
    } else if scores.len() == grid.cells() {
        true
    } else {
        return Err(Error::dim("ia_mask", &[&[scores.len()], &[grid.n_tokens()], &[grid.cells()]]));
    };
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Contract("saliency scores must be finite and nonnegative".into()));
    }
    let strategy = if tube { MaskStrategy::IaTube } else { MaskStrategy::Ia };
    let peak = scores.iter().cloned().fold(0.0, f64::max);
    let mut spec = if peak < STATIC_THRESHOLD {
        if tube {
            tube_mask(grid, ratio, seed)?
        } else {
            uniform_mask(grid, ratio, seed)?
        }
    } else {
        let k = mask_count(ratio, scores.len())?;
        let chosen = top_k(scores, k);
        let masked = if tube { broadcast_cells(grid, &chosen) } else { chosen };
        MaskSpec::from_masked(strategy, seed, ratio, grid.n_tokens(), masked)
    };
    spec.strategy = strategy;
    Ok(spec)
}

/// Masks whole ground-truth objects in seeded random order.
///
/// Objects contribute every token where their own occupancy exceeds
/// [`OBJECT_OCCUPANCY_MIN`] until the target count is reached; the surplus with
/// the lowest total occupancy is trimmed (higher index first on ties) and any
/// shortfall is padded with seeded uniform tokens.
pub fn object_mask(object_occupancy: &[Vec<f64>], grid: &TokenGridSpec, ratio: f64, seed: u64) -> Result<MaskSpec> {
    let n = grid.n_tokens();
    if object_occupancy.iter().any(|o| o.len() != n) {
        return Err(Error::dim("object_mask", &[&[object_occupancy.len(), n]]));
    }
    let k = mask_count(ratio, n)?;
    let mut r = rng(seed);
    let mut order: Vec<usize> = (0..object_occupancy.len()).collect();
    order.shuffle(&mut r);
    let mut chosen = BTreeSet::new();
    for &o in &order {
        if chosen.len() >= k {
            break;
        }
        chosen.extend((0..n).filter(|&t| object_occupancy[o][t] > OBJECT_OCCUPANCY_MIN));
    }
    if chosen.len() > k {
        let total = |t: usize| object_occupancy.iter().map(|o| o[t]).sum::<f64>();
        let mut ranked: Vec<usize> = chosen.into_iter().collect();
        ranked.sort_by(|&a, &b| total(b).total_cmp(&total(a)).then(a.cmp(&b)));
        ranked.truncate(k);
        chosen = ranked.into_iter().collect();
    } else if chosen.len() < k {
        let rest: Vec<usize> = (0..n).filter(|t| !chosen.contains(t)).collect();
        let pad = index::sample(&mut r, rest.len(), k - chosen.len());
        chosen.extend(pad.into_iter().map(|i| rest[i]));
    }
    Ok(MaskSpec::from_masked(MaskStrategy::Object, seed, ratio, n, chosen))
}

/// Axis-aligned pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Contract(format!("region `{s}`: {e}")))?;
        match v[..] {
            [x0, y0, x1, y1] => Ok(Region { x0, y0, x1, y1 }),
            _ => Err(Error::Contract(format!("region `{s}` needs x0,y0,x1,y1"))),
        }
    }
}

/// Copy of `g` with the motion energy inside `region` set to zero.
///
/// Diagnostic only: it shows how the mask reorganises once a salient region is
/// suppressed and is never applied during training.
pub fn zero_motion_region(g: &SaliencyMap, region: Region) -> Result<SaliencyMap> {
    let Region { x0, y0, x1, y1 } = region;
    if x0 >= x1 || y0 >= y1 || x1 > g.width || y1 > g.height {
        return Err(Error::Contract(format!(
            "region {region:?} outside the {}x{} map",
            g.width, g.height
        )));
    }
    let mut out = g.clone();
    for s in 0..g.slices {
        for y in y0..y1 {
            let row = (s * g.height + y) * g.width;
            out.energy[row + x0..row + x1].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}

/// Fraction of `interaction` tokens that `mask` hides; `None` when there are none.
pub fn interaction_recall(mask: &MaskSpec, interaction: &[usize]) -> Option<f64> {
    if interaction.is_empty() {
        return None;
    }
    let hit = interaction.iter().filter(|&&t| mask.is_masked(t)).count();
    Some(hit as f64 / interaction.len() as f64)
}

/// Inputs a strategy may need besides the seed.
pub struct MaskInputs<'a> {
    pub clip: &'a Clip,
    pub object_occupancy: &'a [Vec<f64>],
}

/// Scores for the saliency strategies of `clip`.
pub fn saliency_scores(clip: &Clip, grid: &TokenGridSpec, strategy: MaskStrategy) -> Result<Vec<f64>> {
    match strategy {
        MaskStrategy::IaTube => {
            let g = motion_energy(clip, grid, SaliencyMode::Spatial)?;
            Ok(cell_scores(&pool_saliency(&g, grid)?, grid))
        }
        _ => {
            let g = motion_energy(clip, grid, SaliencyMode::Spatiotemporal)?;
            pool_saliency(&g, grid)
        }
    }
}

/// Builds the mask of `strategy` for one clip.
pub fn build_mask(
    strategy: MaskStrategy,
    inputs: &MaskInputs<'_>,
    grid: &TokenGridSpec,
    ratio: f64,
    seed: u64,
) -> Result<MaskSpec> {
    let scores = match strategy {
        MaskStrategy::Ia | MaskStrategy::IaTube => saliency_scores(inputs.clip, grid, strategy)?,
        _ => Vec::new(),
    };
    build_mask_with_scores(strategy, &scores, inputs.object_occupancy, grid, ratio, seed)
}

/// [`build_mask`] with the saliency scores of the strategy already computed.
pub fn build_mask_with_scores(
    strategy: MaskStrategy,
    scores: &[f64],
    object_occupancy: &[Vec<f64>],
    grid: &TokenGridSpec,
    ratio: f64,
    seed: u64,
) -> Result<MaskSpec> {
    match strategy {
        MaskStrategy::Patch => uniform_mask(grid, ratio, seed),
        MaskStrategy::Tube => tube_mask(grid, ratio, seed),
        MaskStrategy::Object => object_mask(object_occupancy, grid, ratio, seed),
        MaskStrategy::Ia | MaskStrategy::IaTube => ia_mask(scores, grid, ratio, seed),
    }
}
