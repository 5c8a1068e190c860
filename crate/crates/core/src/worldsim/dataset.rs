use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{make_labels, render, simulate, write_clip, Clip, EventClass, LabelSet, WorldConfig, WorldTrace};
use crate::error::{Error, Result};
use crate::tokenfab::TokenGridSpec;

/// A simulated scene with its labels; pixels are rendered on demand.
#[derive(Clone, Debug)]
pub struct Scene {
    pub index: usize,
    pub seed: u64,
    pub trace: WorldTrace,
    pub labels: LabelSet,
}

impl Scene {
    pub fn build(config: &WorldConfig, grid: &TokenGridSpec, index: usize, seed: u64) -> Result<Self> {
        let trace = simulate(config, seed)?;
        let labels = make_labels(&trace, config, grid);
        Ok(Scene {
            index,
            seed,
            trace,
            labels,
        })
    }

    pub fn clip(&self, config: &WorldConfig) -> Clip {
        render(&self.trace, config)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub event_class: EventClass,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn class_counts(&self) -> BTreeMap<EventClass, usize> {
        let mut counts: BTreeMap<EventClass, usize> = EventClass::ALL.iter().map(|&c| (c, 0)).collect();
        for e in &self.entries {
            *counts.entry(e.event_class).or_default() += 1;
        }
        counts
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries = serde_json::from_slice(&fs::read(path)?)?;
        Ok(Manifest { entries })
    }
}

pub(crate) fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Scenes `master_seed + i` for `i < n`, in index order.
pub fn generate_scenes(
    config: &WorldConfig,
    grid: &TokenGridSpec,
    n: usize,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<Scene>> {
    config.validate()?;
    with_workers(workers, || {
        (0..n)
            .into_par_iter()
            .map(|i| Scene::build(config, grid, i, master_seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Writes `clip_NNNNN.iajv` files and `manifest.json` into `out_dir`.
pub fn gen_dataset(
    config: &WorldConfig,
    grid: &TokenGridSpec,
    n_clips: usize,
    master_seed: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<Manifest> {
    if n_clips == 0 {
        return Err(Error::Contract("n_clips must be positive".into()));
    }
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let entries = with_workers(workers, || {
        (0..n_clips)
            .into_par_iter()
            .map(|i| {
                let seed = master_seed.wrapping_add(i as u64);
                let scene = Scene::build(config, grid, i, seed)?;
                let file = format!("clip_{i:05}.iajv");
                write_clip(&scene.clip(config), &scene.labels, &out_dir.join(&file))?;
                Ok(ManifestEntry {
                    file,
                    seed,
                    event_class: scene.labels.event_class,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    fs::write(out_dir.join("manifest.json"), serde_json::to_vec_pretty(&entries)?)?;
    Ok(Manifest { entries })
}
