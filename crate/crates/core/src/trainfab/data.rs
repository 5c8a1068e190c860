use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradfab::Scalar;
use crate::maskfab::{build_mask_with_scores, saliency_scores, MaskSpec, MaskStrategy};
use crate::tokenfab::{normalize_clip, tubelet_partition, NormConstants, TokenGridSpec};
use crate::worldsim::{generate_scenes, read_clip, with_workers, Clip, LabelSet, Manifest, Scene, WorldConfig};

#[derive(Clone, Debug)]
enum Source {
    Scenes(Vec<Scene>),
    Files(Vec<PathBuf>),
}

/// Clips addressed by position, with labels and precomputed saliency.
///
/// Pixels are re-rendered (or re-read) on demand so a few hundred clips fit
/// comfortably in memory.
#[derive(Clone, Debug)]
pub struct TrainSet {
    world: WorldConfig,
    grid: TokenGridSpec,
    norm: NormConstants,
    source: Source,
    ids: Vec<u32>,
    labels: Vec<LabelSet>,
    ia_scores: Vec<Vec<f64>>,
    tube_scores: Vec<Vec<f64>>,
}

impl TrainSet {
    fn check_grid(world: &WorldConfig, grid: &TokenGridSpec) -> Result<()> {
        grid.validate()?;
        if world.arena != grid.height || world.arena != grid.width || world.frames != grid.frames {
            return Err(Error::Contract(format!(
                "world renders {0}x{0}x{1} but the grid expects {2}x{3}x{4}",
                world.arena, world.frames, grid.height, grid.width, grid.frames
            )));
        }
        Ok(())
    }

    fn scores(clips: impl Fn(usize) -> Result<Clip> + Sync, n: usize, grid: &TokenGridSpec, workers: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let pairs = with_workers(workers, || {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let clip = clips(i)?;
                    Ok((
                        saliency_scores(&clip, grid, MaskStrategy::Ia)?,
                        saliency_scores(&clip, grid, MaskStrategy::IaTube)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        Ok(pairs.into_iter().unzip())
    }

    /// Wraps already simulated scenes; ids are the scene indices.
    pub fn from_scenes(world: &WorldConfig, grid: &TokenGridSpec, norm: &NormConstants, scenes: Vec<Scene>, workers: usize) -> Result<Self> {
        Self::check_grid(world, grid)?;
        norm.validate()?;
        let (ia_scores, tube_scores) = Self::scores(|i| Ok(scenes[i].clip(world)), scenes.len(), grid, workers)?;
        Ok(TrainSet {
            world: world.clone(),
            grid: *grid,
            norm: *norm,
            ids: scenes.iter().map(|s| s.index as u32).collect(),
            labels: scenes.iter().map(|s| s.labels.clone()).collect(),
            source: Source::Scenes(scenes),
            ia_scores,
            tube_scores,
        })
    }

    /// Simulates `n` scenes with seeds `master_seed + i`.
    pub fn generate(
        world: &WorldConfig,
        grid: &TokenGridSpec,
        norm: &NormConstants,
        n: usize,
        master_seed: u64,
        workers: usize,
    ) -> Result<Self> {
        Self::check_grid(world, grid)?;
        let scenes = generate_scenes(world, grid, n, master_seed, workers)?;
        Self::from_scenes(world, grid, norm, scenes, workers)
    }

    /// Reads a directory written by `gen_dataset`.
    pub fn from_dir(dir: &Path, world: &WorldConfig, grid: &TokenGridSpec, norm: &NormConstants, workers: usize) -> Result<Self> {
        Self::check_grid(world, grid)?;
        norm.validate()?;
        let manifest = Manifest::load(&dir.join("manifest.json"))?;
        let paths: Vec<PathBuf> = manifest.entries.iter().map(|e| dir.join(&e.file)).collect();
        let labels = with_workers(workers, || {
            paths
                .par_iter()
                .map(|p| read_clip(p).map(|(_, l)| l))
                .collect::<Result<Vec<_>>>()
        })??;
        let (ia_scores, tube_scores) = Self::scores(|i| read_clip(&paths[i]).map(|(c, _)| c), paths.len(), grid, workers)?;
        Ok(TrainSet {
            world: world.clone(),
            grid: *grid,
            norm: *norm,
            ids: (0..paths.len() as u32).collect(),
            labels,
            source: Source::Files(paths),
            ia_scores,
            tube_scores,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn world(&self) -> &WorldConfig {
        &self.world
    }

    pub fn grid(&self) -> &TokenGridSpec {
        &self.grid
    }

    pub fn norm(&self) -> &NormConstants {
        &self.norm
    }

    pub fn labels(&self, i: usize) -> &LabelSet {
        &self.labels[i]
    }

    pub fn all_labels(&self) -> &[LabelSet] {
        &self.labels
    }

    /// Pooled spatiotemporal saliency, one score per token.
    pub fn saliency(&self, i: usize) -> &[f64] {
        &self.ia_scores[i]
    }

    /// Raw (unnormalized) pixels of clip `i`.
    pub fn clip(&self, i: usize) -> Result<Clip> {
        match &self.source {
            Source::Scenes(s) => Ok(s[i].clip(&self.world)),
            Source::Files(p) => read_clip(&p[i]).map(|(c, _)| c),
        }
    }

    /// Normalized tubelet tokens `[n_tokens, token_dim]` of clip `i`.
    pub fn tokens<T: Scalar>(&self, i: usize) -> Result<Vec<T>> {
        self.tokens_with(i, &self.norm)
    }

    pub fn tokens_with<T: Scalar>(&self, i: usize, norm: &NormConstants) -> Result<Vec<T>> {
        let clip = normalize_clip(&self.clip(i)?, norm)?;
        tubelet_partition(&clip, &self.grid)
    }

    pub fn mask(&self, i: usize, strategy: MaskStrategy, ratio: f64, seed: u64) -> Result<MaskSpec> {
        let scores = match strategy {
            MaskStrategy::IaTube => &self.tube_scores[i],
            _ => &self.ia_scores[i],
        };
        build_mask_with_scores(strategy, scores, &self.labels[i].object_occupancy, &self.grid, ratio, seed)
    }
}
