use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::qa::QAItem;
use crate::error::{Error, Result};
use crate::gradfab::{gru_cell, Bound, DiffArray, GruVars, ParamId, ParamSet, Scalar, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasonerConfig {
    pub vocab_size: usize,
    pub word_dim: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub slices: usize,
    pub kernel: usize,
    pub conv_channels: usize,
    pub scene_dim: usize,
    pub n_answers: usize,
    pub dropout: f64,
}

impl ReasonerConfig {
    /// Paper-sized heads over features of width `feature_dim`.
    pub fn standard(vocab_size: usize, feature_dim: usize, slices: usize, n_answers: usize) -> Self {
        ReasonerConfig {
            vocab_size,
            word_dim: 32,
            hidden: 256,
            feature_dim,
            slices,
            kernel: 3,
            conv_channels: 512,
            scene_dim: 512,
            n_answers,
            dropout: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Ids {
    emb: ParamId,
    gru: [ParamId; 9],
    conv_w: ParamId,
    conv_b: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
    desc_w: ParamId,
    desc_b: ParamId,
    causal_w: ParamId,
    causal_b: ParamId,
}

/// Text encoder, scene tower and the two gated heads.
#[derive(Clone, Debug)]
pub struct Reasoner<T: Scalar> {
    pub config: ReasonerConfig,
    pub params: ParamSet<T>,
    ids: Ids,
}

/// Parameter names of the causal head; descriptive training never touches them.
pub const CAUSAL_HEAD: [&str; 2] = ["causal_w", "causal_b"];
pub const DESCRIPTIVE_HEAD: [&str; 2] = ["desc_w", "desc_b"];

const GRU_NAMES: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

impl<T: Scalar> Reasoner<T> {
    pub fn init<R: Rng + ?Sized>(config: &ReasonerConfig, rng: &mut R) -> Result<Self> {
        let c = config;
        if c.kernel % 2 == 0 || c.slices == 0 || c.vocab_size == 0 || c.n_answers == 0 {
            return Err(Error::Contract("invalid reasoner config".into()));
        }
        let mut p = ParamSet::new();
        let lin = |p: &mut ParamSet<T>, name: &str, shape: &[usize], fan_in: usize, rng: &mut R| {
            p.push(name, DiffArray::randn(shape, 1.0 / (fan_in as f64).sqrt(), rng))
        };
        let emb = lin(&mut p, "word_emb", &[c.vocab_size, c.word_dim], 1, rng);
        let mut gru = [ParamId(0); 9];
        for (k, n) in GRU_NAMES.iter().enumerate() {
            let name = format!("gru.{n}");
            gru[k] = match k % 3 {
                0 => lin(&mut p, &name, &[c.word_dim, c.hidden], c.word_dim, rng),
                1 => lin(&mut p, &name, &[c.hidden, c.hidden], c.hidden, rng),
                _ => p.push(name, DiffArray::zeros(&[c.hidden])),
            };
        }
        let conv_w = lin(&mut p, "conv_w", &[c.kernel, c.feature_dim, c.conv_channels], c.kernel * c.feature_dim, rng);
        let conv_b = p.push("conv_b", DiffArray::zeros(&[c.conv_channels]));
        let flat = c.slices * c.conv_channels;
        let proj_w = lin(&mut p, "proj_w", &[flat, c.scene_dim], flat, rng);
        let proj_b = p.push("proj_b", DiffArray::zeros(&[c.scene_dim]));
        let din = c.scene_dim + c.hidden;
        let desc_w = lin(&mut p, "desc_w", &[din, c.n_answers], din, rng);
        let desc_b = p.push("desc_b", DiffArray::zeros(&[c.n_answers]));
        let cin = din + c.hidden;
        let causal_w = lin(&mut p, "causal_w", &[cin, 1], cin, rng);
        let causal_b = p.push("causal_b", DiffArray::zeros(&[1]));
        Ok(Reasoner {
            config: config.clone(),
            params: p,
            ids: Ids {
                emb,
                gru,
                conv_w,
                conv_b,
                proj_w,
                proj_b,
                desc_w,
                desc_b,
                causal_w,
                causal_b,
            },
        })
    }

    /// Sets every parameter to zero.
    pub fn zeroed(mut self) -> Self {
        for a in self.params.arrays_mut() {
            a.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        self
    }

    fn gru_vars(&self, b: &Bound) -> GruVars {
        let g = self.ids.gru.map(|id| b[id]);
        GruVars {
            w_z: g[0],
            u_z: g[1],
            b_z: g[2],
            w_r: g[3],
            u_r: g[4],
            b_r: g[5],
            w_h: g[6],
            u_h: g[7],
            b_h: g[8],
        }
    }

    /// Final GRU hidden states `[n, H]` of `seqs`, in input order. Sequences
    /// of equal length share one batched recurrence.
    pub fn encode_text(&self, tape: &mut Tape<T>, b: &Bound, seqs: &[&[u32]]) -> Result<Var> {
        if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::Contract("encode_text needs nonempty sequences".into()));
        }
        if let Some(&bad) = seqs.iter().flat_map(|s| s.iter()).find(|&&i| i as usize >= self.config.vocab_size) {
            return Err(Error::Contract(format!("unknown token id {bad}")));
        }
        let gv = self.gru_vars(b);
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in seqs.iter().enumerate() {
            by_len.entry(s.len()).or_default().push(i);
        }
        let mut parts = Vec::new();
        let mut order = Vec::with_capacity(seqs.len());
        for (len, members) in by_len {
            let mut h = tape.constant(&[members.len(), self.config.hidden], vec![T::zero(); members.len() * self.config.hidden])?;
            for t in 0..len {
                let ids: Vec<usize> = members.iter().map(|&m| seqs[m][t] as usize).collect();
                let x = tape.gather_rows(b[self.ids.emb], &ids)?;
                h = gru_cell(tape, x, h, &gv)?;
            }
            parts.push(h);
            order.extend(members);
        }
        let stacked = if parts.len() == 1 { parts[0] } else { tape.concat_rows(&parts)? };
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return Ok(stacked);
        }
        let mut back = vec![0; order.len()];
        for (pos, &o) in order.iter().enumerate() {
            back[o] = pos;
        }
        tape.gather_rows(stacked, &back)
    }

    /// Scene vectors `[n, scene_dim]` from per-clip temporal feature rows
    /// `[slices, feature_dim]` (already averaged over space).
    pub fn scene_vector(&self, tape: &mut Tape<T>, b: &Bound, scenes: &[&[T]]) -> Result<Var> {
        let c = &self.config;
        let mut rows = Vec::with_capacity(scenes.len());
        for s in scenes {
            if s.len() != c.slices * c.feature_dim {
                return Err(Error::dim("scene_vector", &[&[s.len()], &[c.slices, c.feature_dim]]));
            }
            let x = tape.constant(&[c.slices, c.feature_dim], s.to_vec())?;
            let h = tape.conv1d_time(x, b[self.ids.conv_w], b[self.ids.conv_b])?;
            let h = tape.relu(h)?;
            rows.push(tape.reshape(h, &[1, c.slices * c.conv_channels])?);
        }
        let flat = if rows.len() == 1 { rows[0] } else { tape.concat_rows(&rows)? };
        let v = tape.matmul(flat, b[self.ids.proj_w])?;
        tape.add(v, b[self.ids.proj_b])
    }

    /// Descriptive logits `[n, answers]` from `v [n,·]`, `q [n,·]`.
    pub fn descriptive_head(&self, tape: &mut Tape<T>, b: &Bound, v: Var, q: Var) -> Result<Var> {
        let x = tape.concat_lastdim(&[v, q])?;
        let l = tape.matmul(x, b[self.ids.desc_w])?;
        tape.add(l, b[self.ids.desc_b])
    }

    /// Choice probabilities `[n, 1]` from aligned rows of `v`, `q`, `c`.
    pub fn causal_head(&self, tape: &mut Tape<T>, b: &Bound, v: Var, q: Var, c: Var) -> Result<Var> {
        let x = tape.concat_lastdim(&[v, q, c])?;
        let l = tape.matmul(x, b[self.ids.causal_w])?;
        let l = tape.add(l, b[self.ids.causal_b])?;
        tape.sigmoid(l)
    }

    /// Gated forward pass over a batch. `scenes[i]` belongs to `items[i]`;
    /// `dropout` carries the seed when training.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        items: &[&QAItem],
        scenes: &[&[T]],
        dropout: Option<u64>,
    ) -> Result<Forward> {
        if items.is_empty() || items.len() != scenes.len() {
            return Err(Error::Contract("reasoner batch must be nonempty and aligned".into()));
        }
        for it in items {
            if it.task.is_causal() && (it.choices.len() != 4 || it.labels.len() != 4) {
                return Err(Error::Contract(format!("clip {}: causal item needs 4 choices", it.clip_id)));
            }
        }
        let rate = self.config.dropout;
        let drop = |tape: &mut Tape<T>, x: Var, salt: u64| -> Result<Var> {
            match dropout {
                Some(seed) => tape.dropout(x, rate, seed.wrapping_mul(4).wrapping_add(salt), true),
                None => Ok(x),
            }
        };
        let v = self.scene_vector(tape, b, scenes)?;
        let v = drop(tape, v, 0)?;
        let qs: Vec<&[u32]> = items.iter().map(|i| i.question.as_slice()).collect();
        let q = self.encode_text(tape, b, &qs)?;
        let q = drop(tape, q, 1)?;

        let desc_rows: Vec<usize> = (0..items.len()).filter(|&i| !items[i].task.is_causal()).collect();
        let causal_rows: Vec<usize> = (0..items.len()).filter(|&i| items[i].task.is_causal()).collect();
        let desc_logits = if desc_rows.is_empty() {
            None
        } else {
            let vd = tape.gather_rows(v, &desc_rows)?;
            let qd = tape.gather_rows(q, &desc_rows)?;
            Some(self.descriptive_head(tape, b, vd, qd)?)
        };
        let causal_probs = if causal_rows.is_empty() {
            None
        } else {
            let rep: Vec<usize> = causal_rows.iter().flat_map(|&r| [r; 4]).collect();
            let choices: Vec<&[u32]> = causal_rows
                .iter()
                .flat_map(|&r| items[r].choices.iter().map(Vec::as_slice))
                .collect();
            let c = self.encode_text(tape, b, &choices)?;
            let c = drop(tape, c, 2)?;
            let vc = tape.gather_rows(v, &rep)?;
            let qc = tape.gather_rows(q, &rep)?;
            Some(self.causal_head(tape, b, vc, qc, c)?)
        };
        Ok(Forward {
            desc_logits,
            desc_rows,
            causal_probs,
            causal_rows,
        })
    }
}

/// Head outputs of one batch; `*_rows` index into the batch.
#[derive(Clone, Debug)]
pub struct Forward {
    pub desc_logits: Option<Var>,
    pub desc_rows: Vec<usize>,
    /// `[4·|causal_rows|, 1]`, choices of each item consecutive.
    pub causal_probs: Option<Var>,
    pub causal_rows: Vec<usize>,
}

/// Mean cross-entropy over descriptive items plus mean binary cross-entropy
/// over every causal choice decision.
pub fn probe_loss<T: Scalar>(
    tape: &mut Tape<T>,
    desc: Option<(Var, &[usize])>,
    causal: Option<(Var, &[f64])>,
) -> Result<Var> {
    let ce = desc.map(|(l, answers)| tape.cross_entropy(l, answers)).transpose()?;
    let bce = causal.map(|(p, t)| tape.binary_cross_entropy(p, t)).transpose()?;
    match (ce, bce) {
        (Some(a), Some(b)) => tape.add(a, b),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::Contract("probe_loss on an empty batch".into())),
    }
}

/// Loss of a forward pass against the items' own truths.
pub fn batch_loss<T: Scalar>(tape: &mut Tape<T>, fwd: &Forward, items: &[&QAItem]) -> Result<Var> {
    let answers: Vec<usize> = fwd
        .desc_rows
        .iter()
        .map(|&r| items[r].answer.ok_or_else(|| Error::Contract("descriptive item without answer".into())))
        .collect::<Result<_>>()?;
    let targets: Vec<f64> = fwd
        .causal_rows
        .iter()
        .flat_map(|&r| items[r].labels.iter().map(|&l| if l { 1.0 } else { 0.0 }))
        .collect();
    probe_loss(
        tape,
        fwd.desc_logits.map(|l| (l, answers.as_slice())),
        fwd.causal_probs.map(|p| (p, targets.as_slice())),
    )
}

/// Per-item prediction: answer class, or the four choice probabilities.
#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Answer(usize),
    Choices([f64; 4]),
}

pub fn predictions<T: Scalar>(tape: &Tape<T>, fwd: &Forward, n: usize) -> Vec<Prediction> {
    let mut out = vec![Prediction::Answer(0); n];
    if let Some(l) = fwd.desc_logits {
        let c = tape.shape(l)[1];
        for (k, &r) in fwd.desc_rows.iter().enumerate() {
            let row = &tape.value(l)[k * c..(k + 1) * c];
            let best = (0..c).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            out[r] = Prediction::Answer(best);
        }
    }
    if let Some(p) = fwd.causal_probs {
        for (k, &r) in fwd.causal_rows.iter().enumerate() {
            let v = &tape.value(p)[4 * k..4 * k + 4];
            out[r] = Prediction::Choices([v[0].as_f64(), v[1].as_f64(), v[2].as_f64(), v[3].as_f64()]);
        }
    }
    out
}
