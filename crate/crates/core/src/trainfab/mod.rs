//! Staged pre-training, checkpoints, and frozen feature extraction.

mod bank;
mod checkpoint;
mod data;

pub use bank::{decode_featurebank, encode_featurebank, read_featurebank, write_featurebank, FeatureBank, BANK_MAGIC, BANK_VERSION};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use data::TrainSet;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradfab::{adamw_step, AdamWConfig, OptState, ParamSet, Scalar};
use crate::jepacore::{clip_loss_grad, ema_update, encode_full, JepaModel};
use crate::maskfab::{MaskStrategy, MASK_RATIO};
use crate::tokenfab::NormConstants;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageConfig {
    pub strategy: MaskStrategy,
    pub steps: usize,
    pub batch: usize,
    pub optim: AdamWConfig,
    pub ratio: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            strategy: MaskStrategy::Patch,
            steps: 300,
            batch: 8,
            optim: AdamWConfig::default(),
            ratio: MASK_RATIO,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Contract("batch size must be positive".into()));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Contract(format!("mask ratio {} outside (0,1)", self.ratio)));
        }
        Ok(())
    }

    /// Batch positions of `step`: consecutive slices of per-epoch shuffles.
    pub fn batch_indices(&self, step: usize, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        let mut epoch = usize::MAX;
        let mut perm: Vec<usize> = Vec::new();
        for slot in 0..self.batch {
            let pos = step * self.batch + slot;
            if pos / n != epoch {
                epoch = pos / n;
                perm = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(epoch as u64);
                perm.shuffle(&mut rng);
            }
            out.push(perm[pos % n]);
        }
        out
    }

    /// Mask seeds of `step`, one per batch slot.
    pub fn mask_seeds(&self, step: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((1u64 << 40) | step as u64);
        (0..self.batch).map(|_| rng.gen()).collect()
    }
}

/// Pre-training recipes compared in the main experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Patch masking for all three stages.
    Baseline,
    /// Patch, then object masking.
    ObjectAblation,
    /// Patch, object, then interaction-aware masking.
    Ia,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::ObjectAblation, Variant::Ia];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::ObjectAblation => "object-ablation",
            Variant::Ia => "ia",
        }
    }

    pub fn strategies(self) -> [MaskStrategy; 3] {
        use MaskStrategy::*;
        match self {
            Variant::Baseline => [Patch, Patch, Patch],
            Variant::ObjectAblation => [Patch, Object, Object],
            Variant::Ia => [Patch, Object, Ia],
        }
    }

    /// Stage configs from `base`; stage `i` uses seed `16·base.seed + i`
    /// regardless of variant, so variants differ only in masking.
    pub fn stages(self, base: &StageConfig) -> Vec<StageConfig> {
        self.strategies()
            .iter()
            .enumerate()
            .map(|(i, &strategy)| StageConfig {
                strategy,
                seed: base.seed.wrapping_mul(16).wrapping_add(i as u64),
                ..base.clone()
            })
            .collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown variant {s:?}")))
    }
}

/// Complete training state: parameters, optimizer moments, and position.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Scalar> {
    pub model: JepaModel<T>,
    pub opt_phi: Vec<OptState<T>>,
    pub opt_theta: Vec<OptState<T>>,
    pub stage: String,
    /// Steps completed in the current stage.
    pub stage_step: usize,
    pub global_step: u64,
    /// Seed of the current stage; with `stage_step` it fixes every later draw.
    pub stage_seed: u64,
    pub config_digest: String,
    pub norm_digest: String,
}

fn fresh_states<T: Scalar>(set: &ParamSet<T>, config: AdamWConfig) -> Vec<OptState<T>> {
    set.arrays().iter().map(|a| OptState::for_param(a, config)).collect()
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: JepaModel<T>, norm: &NormConstants, config_digest: impl Into<String>) -> Self {
        let optim = AdamWConfig::default();
        Checkpoint {
            opt_phi: fresh_states(&model.phi, optim),
            opt_theta: fresh_states(&model.theta, optim),
            model,
            stage: "init".into(),
            stage_step: 0,
            global_step: 0,
            stage_seed: 0,
            config_digest: config_digest.into(),
            norm_digest: norm.digest(),
        }
    }

    /// Enters a new stage: optimizer moments reset, stage counter zeroed.
    pub fn begin_stage(&mut self, tag: &str, config: &StageConfig) {
        self.opt_phi = fresh_states(&self.model.phi, config.optim);
        self.opt_theta = fresh_states(&self.model.theta, config.optim);
        self.stage = tag.into();
        self.stage_step = 0;
        self.stage_seed = config.seed;
    }
}

pub fn stage_tag(index: usize, strategy: MaskStrategy) -> String {
    format!("stage{}-{}", index + 1, strategy.name())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub stage: String,
    pub strategy: MaskStrategy,
    /// Stage step of the first entry in `losses`.
    pub first_step: usize,
    pub losses: Vec<f64>,
}

/// Trains until `state.stage_step == config.steps`, resuming mid-stage when
/// the state already holds progress.
pub fn run_stage<T: Scalar>(config: &StageConfig, state: &mut Checkpoint<T>, data: &TrainSet) -> Result<RunLog> {
    config.validate()?;
    if T::DTYPE != config.precision.name() {
        return Err(Error::Contract(format!(
            "stage precision {} but model is {}",
            config.precision.name(),
            T::DTYPE
        )));
    }
    if data.is_empty() {
        return Err(Error::Contract("empty training set".into()));
    }
    if data.grid() != &state.model.config.grid {
        return Err(Error::Contract("training set grid differs from the model grid".into()));
    }
    if data.norm().digest() != state.norm_digest {
        return Err(Error::NormalizationMandate {
            expected: state.norm_digest.clone(),
            actual: data.norm().digest(),
        });
    }
    if state.stage_step > 0 && state.stage_seed != config.seed {
        return Err(Error::Contract("resuming a stage with a different seed".into()));
    }
    let mut log = RunLog {
        stage: state.stage.clone(),
        strategy: config.strategy,
        first_step: state.stage_step,
        losses: Vec::new(),
    };
    if state.stage_step >= config.steps {
        return Ok(log);
    }
    state.stage_seed = config.seed;
    let scale = T::of(1.0 / config.batch as f64);
    while state.stage_step < config.steps {
        let step = state.stage_step;
        let model = &mut state.model;
        model.phi.zero_grad();
        model.theta.zero_grad();
        let mut loss = 0.0;
        let idx = config.batch_indices(step, data.len());
        for (&i, &seed) in idx.iter().zip(&config.mask_seeds(step)) {
            let tokens = data.tokens::<T>(i)?;
            let mask = data.mask(i, config.strategy, config.ratio, seed)?;
            let out = clip_loss_grad(model, &tokens, &mask)?;
            loss += out.loss;
            model.phi.accumulate(&out.grads, &out.phi, scale)?;
            model.theta.accumulate(&out.grads, &out.theta, scale)?;
        }
        loss /= config.batch as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { step: step as u64, loss });
        }
        for (set, states) in [(&mut model.phi, &mut state.opt_phi), (&mut model.theta, &mut state.opt_theta)] {
            for (p, st) in set.arrays_mut().iter_mut().zip(states.iter_mut()) {
                let g = p.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![T::zero(); p.len()]);
                adamw_step(p.data_mut(), &g, st)?;
            }
        }
        ema_update(&mut model.xi, &model.phi, model.config.ema_momentum)?;
        log.losses.push(loss);
        state.stage_step += 1;
        state.global_step += 1;
    }
    Ok(log)
}

/// Runs `stages` in order from `state`, resetting the optimizer at every
/// boundary; `on_stage` sees the checkpoint after each stage.
pub fn run_staged_pipeline<T: Scalar>(
    stages: &[StageConfig],
    first_index: usize,
    state: &mut Checkpoint<T>,
    data: &TrainSet,
    mut on_stage: impl FnMut(&Checkpoint<T>, &RunLog) -> Result<()>,
) -> Result<Vec<RunLog>> {
    let mut logs = Vec::with_capacity(stages.len());
    for (k, cfg) in stages.iter().enumerate() {
        state.begin_stage(&stage_tag(first_index + k, cfg.strategy), cfg);
        let log = run_stage(cfg, state, data)?;
        on_stage(state, &log)?;
        logs.push(log);
    }
    Ok(logs)
}

/// Full-visibility context-encoder features of every clip in `data`, in clip
/// order.
pub fn extract_features<T: Scalar>(state: &Checkpoint<T>, data: &TrainSet, workers: usize) -> Result<FeatureBank> {
    if data.norm().digest() != state.norm_digest {
        return Err(Error::NormalizationMandate {
            expected: state.norm_digest.clone(),
            actual: data.norm().digest(),
        });
    }
    extract_unchecked(state, data, data.norm(), workers)
}

/// Extraction with explicit constants and no digest check; used to show what
/// the mandate guards against.
pub fn extract_unchecked<T: Scalar>(
    state: &Checkpoint<T>,
    data: &TrainSet,
    norm: &NormConstants,
    workers: usize,
) -> Result<FeatureBank> {
    let model = &state.model;
    let grid = model.config.grid;
    let per_clip = grid.n_tokens() * model.config.dim;
    let slabs = crate::worldsim::with_workers(workers, || {
        (0..data.len())
            .into_par_iter()
            .map(|i| {
                let tokens = data.tokens_with::<T>(i, norm)?;
                let f = encode_full(&model.config, &model.enc, &model.phi, &tokens)?;
                Ok(f.into_iter().map(|v| v.as_f64() as f32).collect::<Vec<f32>>())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut values = Vec::with_capacity(data.len() * per_clip);
    for s in slabs {
        values.extend(s);
    }
    FeatureBank::new(
        data.ids().to_vec(),
        [grid.slices(), grid.cells(), model.config.dim],
        values,
        format!("{}:{}", state.model.backbone_digest(), norm.digest()),
    )
}

#[cfg(test)]
mod tests;
