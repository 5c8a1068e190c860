use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worldsim::{counterfactual_remove_from, simulate, ObjectInit, with_workers, EventKind, WorldConfig, WorldTrace};

/// Frame boundary of the predictive questions: they describe frames up to
/// here and ask about later exits.
pub const PREDICT_HORIZON: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Descriptive,
    Predictive,
    Explanatory,
    Counterfactual,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Descriptive, Task::Predictive, Task::Explanatory, Task::Counterfactual];
    pub const CAUSAL: [Task; 3] = [Task::Predictive, Task::Explanatory, Task::Counterfactual];

    pub fn name(self) -> &'static str {
        match self {
            Task::Descriptive => "descriptive",
            Task::Predictive => "predictive",
            Task::Explanatory => "explanatory",
            Task::Counterfactual => "counterfactual",
        }
    }

    pub fn is_causal(self) -> bool {
        self != Task::Descriptive
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown task {s:?}")))
    }
}

const DESCRIPTIVE: &str = "how many objects are moving at the start";
const PREDICTIVE: &str = "which objects will leave the arena after frame 8";
const EXPLANATORY: &str = "which object collides with the {color} object";
const COUNTERFACTUAL: &str = "if the object is removed does a collision still occur";
const CHOICE: &str = "the {color} object";

/// Closed word list; id 0 is padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: BTreeMap<String, u32>,
}

pub const PAD: &str = "<pad>";

impl Vocab {
    /// Padding, template words in order of first appearance, then colors and
    /// the numbers 0..=16.
    pub fn build(colors: &[&str]) -> Self {
        let mut words = vec![PAD.to_string()];
        let templates = [DESCRIPTIVE, PREDICTIVE, EXPLANATORY, COUNTERFACTUAL, CHOICE];
        let extra = colors
            .iter()
            .map(|c| c.to_string())
            .chain((0..=16).map(|n| n.to_string()));
        for w in templates
            .iter()
            .flat_map(|t| t.split_whitespace())
            .filter(|w| *w != "{color}")
            .map(str::to_string)
            .chain(extra)
        {
            if !words.contains(&w) {
                words.push(w);
            }
        }
        let ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Vocab { words, ids }
    }

    pub fn for_world(config: &WorldConfig) -> Self {
        let names: Vec<&str> = config.palette.iter().map(|c| c.name.as_str()).collect();
        Self::build(&names)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace()
            .map(|w| self.id(w).ok_or_else(|| Error::Contract(format!("word {w:?} not in vocabulary"))))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let words = ids
            .iter()
            .map(|&i| self.word(i).ok_or_else(|| Error::Contract(format!("token id {i} out of range"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QAItem {
    pub clip_id: u32,
    pub task: Task,
    pub question: Vec<u32>,
    /// Four choices for causal tasks, empty for descriptive ones.
    pub choices: Vec<Vec<u32>>,
    pub labels: Vec<bool>,
    /// Answer class of descriptive items.
    pub answer: Option<usize>,
}

impl QAItem {
    pub fn validate(&self, vocab_len: usize) -> Result<()> {
        let ids_ok = self
            .question
            .iter()
            .chain(self.choices.iter().flatten())
            .all(|&i| (i as usize) < vocab_len);
        if !ids_ok || self.question.is_empty() {
            return Err(Error::Contract(format!("clip {}: token ids out of range", self.clip_id)));
        }
        let ok = match self.task {
            Task::Descriptive => self.choices.is_empty() && self.answer.is_some(),
            _ => self.choices.len() == 4 && self.labels.len() == 4 && self.choices.iter().all(|c| !c.is_empty()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("clip {}: malformed {} item", self.clip_id, self.task)))
        }
    }
}

fn fill(template: &str, color: &str) -> String {
    template.replace("{color}", color)
}

/// Four choice objects: scene objects from `pool` (shuffled, at most four),
/// padded with palette colors absent from the scene. Returns color indices
/// and, per choice, the scene object index if present.
fn choose(pool: &[usize], trace: &WorldTrace, palette_len: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, Option<usize>)> {
    let mut objs = pool.to_vec();
    objs.shuffle(rng);
    objs.truncate(4);
    let first = &trace.frames[0];
    let mut out: Vec<(usize, Option<usize>)> = objs.iter().map(|&i| (first[i].color, Some(i))).collect();
    let mut absent: Vec<usize> = (0..palette_len).filter(|c| first.iter().all(|o| o.color != *c)).collect();
    absent.shuffle(rng);
    for c in absent.into_iter().take(4 - out.len()) {
        out.push((c, None));
    }
    out.shuffle(rng);
    out
}

/// Templated questions about one scene. Items whose template does not apply
/// to the scene are skipped rather than mislabeled.
pub fn build_qa(trace: &WorldTrace, config: &WorldConfig, vocab: &Vocab, clip_id: u32, seed: u64) -> Result<Vec<QAItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(clip_id as u64);
    let n = trace.n_objects();
    let first = &trace.frames[0];
    let name = |c: usize| config.color_name(c).to_string();
    let mut items = Vec::new();
    let max_answer = config.max_objects;

    let moving = trace.moving_objects();
    if moving <= max_answer {
        items.push(QAItem {
            clip_id,
            task: Task::Descriptive,
            question: vocab.encode(DESCRIPTIVE)?,
            choices: Vec::new(),
            labels: Vec::new(),
            answer: Some(moving),
        });
    }

    let mut causal = |task: Task, question: String, picks: Vec<(usize, Option<usize>)>, truth: &dyn Fn(Option<usize>) -> Result<bool>| -> Result<()> {
        if picks.len() != 4 {
            return Ok(());
        }
        let mut choices = Vec::with_capacity(4);
        let mut labels = Vec::with_capacity(4);
        for (color, obj) in picks {
            choices.push(vocab.encode(&fill(CHOICE, &name(color)))?);
            labels.push(truth(obj)?);
        }
        items.push(QAItem {
            clip_id,
            task,
            question: vocab.encode(&question)?,
            choices,
            labels,
            answer: None,
        });
        Ok(())
    };

    // predictive: exits strictly after the horizon
    let exits: Vec<(usize, usize)> = trace
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Exit { object } => Some((object, e.frame)),
            _ => None,
        })
        .collect();
    let present: Vec<usize> = (0..n).collect();
    let picks = choose(&present, trace, config.palette.len(), &mut rng);
    causal(Task::Predictive, PREDICTIVE.to_string(), picks, &|obj| {
        Ok(obj.is_some_and(|o| exits.iter().any(|&(i, f)| i == o && f > PREDICT_HORIZON)))
    })?;

    // explanatory: partners of one collided object
    let collisions: Vec<(usize, usize)> = trace.collisions().map(|(_, a, b, _)| (a, b)).collect();
    let mut involved: Vec<usize> = collisions.iter().flat_map(|&(a, b)| [a, b]).collect();
    involved.sort();
    involved.dedup();
    if let Some(&subject) = involved.choose(&mut rng) {
        let others: Vec<usize> = (0..n).filter(|&i| i != subject).collect();
        let picks = choose(&others, trace, config.palette.len(), &mut rng);
        let hit = |o: usize| collisions.iter().any(|&(a, b)| (a == subject && b == o) || (b == subject && a == o));
        let has_partner = picks.iter().any(|&(_, o)| o.is_some_and(hit));
        if has_partner {
            causal(
                Task::Explanatory,
                fill(EXPLANATORY, &name(first[subject].color)),
                picks,
                &|obj| Ok(obj.is_some_and(hit)),
            )?;
        }
    }

    // counterfactual: re-simulate without each chosen object
    if !collisions.is_empty() {
        let picks = choose(&present, trace, config.palette.len(), &mut rng);
        let init: Vec<ObjectInit> = trace.frames[0]
            .iter()
            .map(|s| ObjectInit {
                x: s.x,
                y: s.y,
                vx: s.vx,
                vy: s.vy,
                radius: s.radius,
                color: s.color,
            })
            .collect();
        causal(Task::Counterfactual, COUNTERFACTUAL.to_string(), picks, &|obj| match obj {
            Some(o) => Ok(counterfactual_remove_from(config, &init, trace.seed, o)?.collisions().next().is_some()),
            None => Ok(true),
        })?;
    }
    Ok(items)
}

/// QA items for scenes `(clip_id, scene seed)`, in clip order.
pub fn build_qa_set(config: &WorldConfig, vocab: &Vocab, scenes: &[(u32, u64)], seed: u64, workers: usize) -> Result<Vec<QAItem>> {
    let per = with_workers(workers, || {
        scenes
            .par_iter()
            .map(|&(id, scene_seed)| {
                let trace = simulate(config, scene_seed)?;
                build_qa(&trace, config, vocab, id, seed)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(per.into_iter().flatten().collect())
}

#[derive(Serialize, Deserialize)]
struct QaLine {
    clip_id: u32,
    task: Task,
    question: String,
    choices: Vec<String>,
    labels: Vec<bool>,
    answer: Option<usize>,
}

pub fn write_jsonl(path: &Path, items: &[QAItem], vocab: &Vocab) -> Result<()> {
    let mut out = Vec::new();
    for it in items {
        let line = QaLine {
            clip_id: it.clip_id,
            task: it.task,
            question: vocab.decode(&it.question)?,
            choices: it.choices.iter().map(|c| vocab.decode(c)).collect::<Result<_>>()?,
            labels: it.labels.clone(),
            answer: it.answer,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_jsonl(path: &Path, vocab: &Vocab) -> Result<Vec<QAItem>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut items = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: QaLine = serde_json::from_str(&line)?;
        let item = QAItem {
            clip_id: l.clip_id,
            task: l.task,
            question: vocab.encode(&l.question)?,
            choices: l.choices.iter().map(|c| vocab.encode(c)).collect::<Result<_>>()?,
            labels: l.labels,
            answer: l.answer,
        };
        item.validate(vocab.len())?;
        items.push(item);
    }
    Ok(items)
}
