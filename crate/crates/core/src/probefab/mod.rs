//! Frozen-feature probes: templated QA, the gated reasoner, and the linear
//! collision and event-class readouts.

mod linear;
mod qa;
mod reasoner;

pub use linear::{train_linear, LinearProbe};
pub use qa::{build_qa, build_qa_set, read_jsonl, write_jsonl, QAItem, Task, Vocab, PAD, PREDICT_HORIZON};
pub use reasoner::{
    batch_loss, predictions, probe_loss, Forward, Prediction, Reasoner, ReasonerConfig, CAUSAL_HEAD, DESCRIPTIVE_HEAD,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradfab::{adamw_step, AdamWConfig, OptState, Scalar, Tape};
use crate::trainfab::FeatureBank;
use crate::worldsim::{EventClass, LabelSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Reasoner,
    Collision,
    Readout,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 3] = [ProbeKind::Reasoner, ProbeKind::Collision, ProbeKind::Readout];

    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Reasoner => "reasoner",
            ProbeKind::Collision => "collision",
            ProbeKind::Readout => "readout",
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProbeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown probe task {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Epochs of the linear probes.
    pub epochs: usize,
    pub reasoner_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 200,
            reasoner_epochs: 10,
            batch: 32,
            lr: 1e-3,
            weight_decay: 0.0,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn optim(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Seeded split of clip ids; the first `fraction` of a shuffle trains.
pub fn split_clips(ids: &[u32], fraction: f64, seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut uniq: Vec<u32> = ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if uniq.len() < 2 || !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Contract("split needs at least two clips and a fraction in (0,1)".into()));
    }
    uniq.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((uniq.len() as f64 * fraction).round() as usize).clamp(1, uniq.len() - 1);
    let test = uniq.split_off(k);
    check_disjoint(&uniq, &test)?;
    Ok((uniq, test))
}

/// Aborts with the first clip id present on both sides.
pub fn check_disjoint(train: &[u32], test: &[u32]) -> Result<()> {
    let a: BTreeSet<u32> = train.iter().copied().collect();
    match test.iter().find(|id| a.contains(id)) {
        Some(&id) => Err(Error::SplitLeakage(id)),
        None => Ok(()),
    }
}

/// Per-question all-four-choices score and the mean.
pub fn mc_score(preds: &[[f64; 4]], truths: &[[bool; 4]], threshold: f64) -> (Vec<u8>, f64) {
    let per: Vec<u8> = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (0..4).all(|i| (p[i] > threshold) == t[i]) as u8)
        .collect();
    let acc = if per.is_empty() {
        0.0
    } else {
        per.iter().map(|&x| x as f64).sum::<f64>() / per.len() as f64
    };
    (per, acc)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub task: String,
    pub train_clips: usize,
    pub test_clips: usize,
    /// Held-out accuracy: collision or 5-way event accuracy for the linear
    /// probes, all-choices accuracy over causal questions for the reasoner.
    pub accuracy: f64,
    /// Majority-class rate of the held-out labels, or 1/16 for MC questions.
    pub chance: f64,
    pub descriptive_accuracy: Option<f64>,
    pub mc_by_task: BTreeMap<String, f64>,
    pub questions: usize,
    pub final_train_loss: f64,
    pub bank_digest: String,
}

/// Per-clip mean over slices and cells, `[dim]`.
pub fn clip_mean(bank: &FeatureBank, pos: usize) -> Vec<f64> {
    let [s, c, d] = bank.dims;
    let slab = bank.slab(pos);
    let mut out = vec![0.0; d];
    for row in slab.chunks_exact(d) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v as f64;
        }
    }
    out.iter_mut().for_each(|v| *v /= (s * c) as f64);
    out
}

/// Per-clip spatial mean, `[slices, dim]`.
pub fn temporal_rows(bank: &FeatureBank, pos: usize) -> Vec<f64> {
    let [s, c, d] = bank.dims;
    let slab = bank.slab(pos);
    let mut out = vec![0.0; s * d];
    for t in 0..s {
        for k in 0..c {
            let row = &slab[(t * c + k) * d..(t * c + k + 1) * d];
            for (o, &v) in out[t * d..(t + 1) * d].iter_mut().zip(row) {
                *o += v as f64;
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= c as f64);
    out
}

/// Column statistics of `rows` (each of width `dim`), for z-scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0.0;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for r in rows {
            for chunk in r.chunks_exact(dim) {
                n += 1.0;
                for j in 0..dim {
                    let d = chunk[j] - mean[j];
                    mean[j] += d / n;
                    m2[j] += d * (chunk[j] - mean[j]);
                }
            }
        }
        let std = m2
            .iter()
            .map(|&s| if n > 0.0 { (s / n).sqrt() } else { 0.0 })
            .map(|s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        row.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect()
    }
}

fn bank_positions(bank: &FeatureBank) -> BTreeMap<u32, usize> {
    bank.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
}

/// Inputs shared by the probe kinds.
pub struct ProbeData<'a> {
    pub bank: &'a FeatureBank,
    /// `labels[i]` describes the clip at bank position `i`.
    pub labels: &'a [LabelSet],
    /// Read by the reasoner only.
    pub items: &'a [QAItem],
    pub vocab_size: usize,
    pub n_answers: usize,
}

/// Trains one probe kind on frozen features.
pub fn train_probe(kind: ProbeKind, data: &ProbeData<'_>, config: &ProbeConfig) -> Result<ProbeMetrics> {
    let (bank, labels) = (data.bank, data.labels);
    match kind {
        ProbeKind::Reasoner => train_reasoner::<f32>(data, config).map(|(_, m)| m),
        ProbeKind::Collision | ProbeKind::Readout => {
            if labels.len() != bank.len() {
                return Err(Error::Contract(format!(
                    "{} labels for a bank of {} clips",
                    labels.len(),
                    bank.len()
                )));
            }
            let targets: Vec<usize> = labels
                .iter()
                .map(|l| match kind {
                    ProbeKind::Collision => l.collision_present as usize,
                    _ => l.event_class.index(),
                })
                .collect();
            let classes = if kind == ProbeKind::Collision { 2 } else { EventClass::ALL.len() };
            let (_, mut m) = train_linear(bank, &targets, classes, config)?;
            m.task = kind.name().into();
            Ok(m)
        }
    }
}

/// Trains the reasoner on the training clips of `items` and scores the rest.
pub fn train_reasoner<T: Scalar>(data: &ProbeData<'_>, config: &ProbeConfig) -> Result<(Reasoner<T>, ProbeMetrics)> {
    let (bank, items) = (data.bank, data.items);
    let pos = bank_positions(bank);
    if let Some(it) = items.iter().find(|it| !pos.contains_key(&it.clip_id)) {
        return Err(Error::Contract(format!("item refers to clip {} absent from the bank", it.clip_id)));
    }
    let ids: Vec<u32> = items.iter().map(|it| it.clip_id).collect();
    let (train_ids, test_ids) = split_clips(&ids, config.train_fraction, config.seed)?;
    let train_set: BTreeSet<u32> = train_ids.iter().copied().collect();
    let train: Vec<&QAItem> = items.iter().filter(|it| train_set.contains(&it.clip_id)).collect();
    let test: Vec<&QAItem> = items.iter().filter(|it| !train_set.contains(&it.clip_id)).collect();
    check_disjoint(
        &train.iter().map(|i| i.clip_id).collect::<Vec<_>>(),
        &test.iter().map(|i| i.clip_id).collect::<Vec<_>>(),
    )?;

    let [slices, _, dim] = bank.dims;
    let rows: BTreeMap<u32, Vec<f64>> = pos.iter().map(|(&id, &p)| (id, temporal_rows(bank, p))).collect();
    let z = Standardizer::fit(train_ids.iter().map(|id| rows[id].as_slice()), dim);
    let scenes: BTreeMap<u32, Vec<T>> = rows
        .iter()
        .map(|(&id, r)| (id, z.apply(r).into_iter().map(T::of).collect()))
        .collect();

    for it in items {
        it.validate(data.vocab_size)?;
        if it.answer.is_some_and(|a| a >= data.n_answers) {
            return Err(Error::Contract(format!("clip {}: answer beyond {} classes", it.clip_id, data.n_answers)));
        }
    }
    let rc = ReasonerConfig::standard(data.vocab_size, dim, slices, data.n_answers);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut model = Reasoner::<T>::init(&rc, &mut rng)?;
    let final_loss = fit_reasoner(&mut model, &train, &scenes, config)?;
    let mut metrics = evaluate_reasoner(&model, &test, &scenes)?;
    metrics.train_clips = train_ids.len();
    metrics.test_clips = test_ids.len();
    metrics.final_train_loss = final_loss;
    metrics.bank_digest = bank.digest.clone();
    Ok((model, metrics))
}

/// Mini-batch AdamW on the reasoner. Parameters that receive no gradient in
/// a step (the idle head) are left untouched. Returns the last epoch's mean
/// loss.
pub fn fit_reasoner<T: Scalar>(
    model: &mut Reasoner<T>,
    train: &[&QAItem],
    scenes: &BTreeMap<u32, Vec<T>>,
    config: &ProbeConfig,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Contract("no training items".into()));
    }
    let mut states: Vec<OptState<T>> = model
        .params
        .arrays()
        .iter()
        .map(|a| OptState::for_param(a, config.optim()))
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut step = 0u64;
    let mut last = f64::NAN;
    for _ in 0..config.reasoner_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch.max(1)) {
            let batch: Vec<&QAItem> = chunk.iter().map(|&i| train[i]).collect();
            let sc: Vec<&[T]> = batch.iter().map(|it| scenes[&it.clip_id].as_slice()).collect();
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape, true);
            let fwd = model.forward(&mut tape, &bound, &batch, &sc, Some(config.seed.wrapping_add(step)))?;
            let loss = batch_loss(&mut tape, &fwd, &batch)?;
            let value = tape.scalar_value(loss).as_f64();
            if !value.is_finite() {
                return Err(Error::Diverged { step, loss: value });
            }
            let grads = tape.backward(loss)?;
            for ((p, st), &var) in model.params.arrays_mut().iter_mut().zip(states.iter_mut()).zip(bound.vars()) {
                if let Some(g) = grads.get_ref(var) {
                    adamw_step(p.data_mut(), g, st)?;
                }
            }
            total += value;
            batches += 1;
            step += 1;
        }
        last = total / batches as f64;
    }
    Ok(last)
}

/// Held-out descriptive accuracy and all-choices MC accuracy per task.
pub fn evaluate_reasoner<T: Scalar>(
    model: &Reasoner<T>,
    items: &[&QAItem],
    scenes: &BTreeMap<u32, Vec<T>>,
) -> Result<ProbeMetrics> {
    let mut desc_hits = (0usize, 0usize);
    let mut mc: BTreeMap<Task, (Vec<[f64; 4]>, Vec<[bool; 4]>)> = BTreeMap::new();
    for chunk in items.chunks(64) {
        let sc: Vec<&[T]> = chunk.iter().map(|it| scenes[&it.clip_id].as_slice()).collect();
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape, false);
        let fwd = model.forward(&mut tape, &bound, chunk, &sc, None)?;
        for (it, p) in chunk.iter().zip(predictions(&tape, &fwd, chunk.len())) {
            match p {
                Prediction::Answer(a) => {
                    desc_hits.1 += 1;
                    desc_hits.0 += (Some(a) == it.answer) as usize;
                }
                Prediction::Choices(c) => {
                    let e = mc.entry(it.task).or_default();
                    e.0.push(c);
                    e.1.push([it.labels[0], it.labels[1], it.labels[2], it.labels[3]]);
                }
            }
        }
    }
    let mut metrics = ProbeMetrics {
        task: ProbeKind::Reasoner.name().into(),
        chance: 1.0 / 16.0,
        ..ProbeMetrics::default()
    };
    if desc_hits.1 > 0 {
        metrics.descriptive_accuracy = Some(desc_hits.0 as f64 / desc_hits.1 as f64);
    }
    let (mut hits, mut n) = (0.0, 0usize);
    for (task, (p, t)) in &mc {
        let (per, acc) = mc_score(p, t, 0.5);
        metrics.mc_by_task.insert(task.name().into(), acc);
        hits += per.iter().map(|&x| x as f64).sum::<f64>();
        n += per.len();
    }
    metrics.questions = n;
    metrics.accuracy = if n > 0 { hits / n as f64 } else { 0.0 };
    Ok(metrics)
}
