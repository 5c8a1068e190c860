//! Reverse-mode tape over [`DiffArray`] values.
//!
//! Every value produced during a forward pass lives on the [`Tape`] as a node.
//! A node records the primitive that produced it only when at least one input
//! requires a gradient; nodes built purely from constants are plain values.
//! [`Tape::backward`] consumes the tape and walks the recorded nodes in reverse
//! insertion order, which is a topological order by construction.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::array::{gemm, DiffArray, MatRef, Scalar};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Clamp used inside cross-entropy style losses.
pub const PROB_CLAMP: f64 = 1e-7;

/// Epsilon inside the layer-norm denominator.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Names of the primitive inventory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    MatMul,
    Add,
    Mul,
    Scale,
    Gelu,
    Relu,
    Sigmoid,
    Tanh,
    SoftmaxLastDim,
    LayerNorm,
    GatherRows,
    ConcatLastDim,
    SliceLastDim,
    ConcatRows,
    SliceRows,
    MeanOverAxis,
    SumAll,
    Reshape,
    Conv1dTime,
    Dropout,
    MseMasked,
    CrossEntropy,
    BinaryCrossEntropy,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 23] = [
        PrimitiveKind::MatMul,
        PrimitiveKind::Add,
        PrimitiveKind::Mul,
        PrimitiveKind::Scale,
        PrimitiveKind::Gelu,
        PrimitiveKind::Relu,
        PrimitiveKind::Sigmoid,
        PrimitiveKind::Tanh,
        PrimitiveKind::SoftmaxLastDim,
        PrimitiveKind::LayerNorm,
        PrimitiveKind::GatherRows,
        PrimitiveKind::ConcatLastDim,
        PrimitiveKind::SliceLastDim,
        PrimitiveKind::ConcatRows,
        PrimitiveKind::SliceRows,
        PrimitiveKind::MeanOverAxis,
        PrimitiveKind::SumAll,
        PrimitiveKind::Reshape,
        PrimitiveKind::Conv1dTime,
        PrimitiveKind::Dropout,
        PrimitiveKind::MseMasked,
        PrimitiveKind::CrossEntropy,
        PrimitiveKind::BinaryCrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::MatMul => "matmul",
            PrimitiveKind::Add => "add",
            PrimitiveKind::Mul => "mul",
            PrimitiveKind::Scale => "scale",
            PrimitiveKind::Gelu => "gelu",
            PrimitiveKind::Relu => "relu",
            PrimitiveKind::Sigmoid => "sigmoid",
            PrimitiveKind::Tanh => "tanh",
            PrimitiveKind::SoftmaxLastDim => "softmax_lastdim",
            PrimitiveKind::LayerNorm => "layer_norm",
            PrimitiveKind::GatherRows => "gather_rows",
            PrimitiveKind::ConcatLastDim => "concat_lastdim",
            PrimitiveKind::SliceLastDim => "slice_lastdim",
            PrimitiveKind::ConcatRows => "concat_rows",
            PrimitiveKind::SliceRows => "slice_rows",
            PrimitiveKind::MeanOverAxis => "mean_over_axis",
            PrimitiveKind::SumAll => "sum_all",
            PrimitiveKind::Reshape => "reshape",
            PrimitiveKind::Conv1dTime => "conv1d_time",
            PrimitiveKind::Dropout => "dropout",
            PrimitiveKind::MseMasked => "mse_masked",
            PrimitiveKind::CrossEntropy => "cross_entropy",
            PrimitiveKind::BinaryCrossEntropy => "binary_cross_entropy",
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrimitiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrimitiveKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnsupportedPrimitive(s.to_string()))
    }
}

/// A primitive together with its static attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `[m,k]·[k,n]`; the transpose flags read an operand as stored transposed.
    MatMul { trans_a: bool, trans_b: bool },
    /// Elementwise sum; the second operand may broadcast over leading axes.
    Add,
    /// Elementwise product with the same broadcasting rule as `Add`.
    Mul,
    Scale(f64),
    Gelu,
    Relu,
    Sigmoid,
    Tanh,
    SoftmaxLastDim,
    /// Inputs `(x, gamma, beta)`.
    LayerNorm,
    GatherRows(Vec<usize>),
    ConcatLastDim,
    SliceLastDim { start: usize, len: usize },
    ConcatRows,
    SliceRows { start: usize, len: usize },
    MeanOverAxis(usize),
    SumAll,
    Reshape(Vec<usize>),
    /// Inputs `(x [T,Cin], w [K,Cin,Cout], b [Cout])`, zero same-padding, odd `K`.
    Conv1dTime,
    /// Inverted dropout; the identity when `rate == 0` or `!training`.
    Dropout { rate: f64, seed: u64, training: bool },
    /// Inputs `(pred [m,D], target [N,D])`; row `i` of `pred` is compared
    /// against row `rows[i]` of `target`. Mean of squared L2 row norms.
    MseMasked { rows: Vec<usize> },
    /// Input logits `[n,C]`; mean negative log-likelihood of `labels`.
    CrossEntropy { labels: Vec<usize> },
    /// Input probabilities (any shape); mean binary cross-entropy.
    BinaryCrossEntropy { targets: Vec<f64> },
}

impl Primitive {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::MatMul { .. } => PrimitiveKind::MatMul,
            Primitive::Add => PrimitiveKind::Add,
            Primitive::Mul => PrimitiveKind::Mul,
            Primitive::Scale(_) => PrimitiveKind::Scale,
            Primitive::Gelu => PrimitiveKind::Gelu,
            Primitive::Relu => PrimitiveKind::Relu,
            Primitive::Sigmoid => PrimitiveKind::Sigmoid,
            Primitive::Tanh => PrimitiveKind::Tanh,
            Primitive::SoftmaxLastDim => PrimitiveKind::SoftmaxLastDim,
            Primitive::LayerNorm => PrimitiveKind::LayerNorm,
            Primitive::GatherRows(_) => PrimitiveKind::GatherRows,
            Primitive::ConcatLastDim => PrimitiveKind::ConcatLastDim,
            Primitive::SliceLastDim { .. } => PrimitiveKind::SliceLastDim,
            Primitive::ConcatRows => PrimitiveKind::ConcatRows,
            Primitive::SliceRows { .. } => PrimitiveKind::SliceRows,
            Primitive::MeanOverAxis(_) => PrimitiveKind::MeanOverAxis,
            Primitive::SumAll => PrimitiveKind::SumAll,
            Primitive::Reshape(_) => PrimitiveKind::Reshape,
            Primitive::Conv1dTime => PrimitiveKind::Conv1dTime,
            Primitive::Dropout { .. } => PrimitiveKind::Dropout,
            Primitive::MseMasked { .. } => PrimitiveKind::MseMasked,
            Primitive::CrossEntropy { .. } => PrimitiveKind::CrossEntropy,
            Primitive::BinaryCrossEntropy { .. } => PrimitiveKind::BinaryCrossEntropy,
        }
    }

    fn name(&self) -> &'static str {
        self.kind().name()
    }
}

struct Record<T> {
    prim: Primitive,
    inputs: Vec<Var>,
    /// Values the reverse pass needs beyond inputs and output.
    saved: Vec<T>,
    saved_aux: Vec<T>,
}

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
    record: Option<Record<T>>,
}

/// Ordered record of executed primitives.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let k = T::of(0.044715);
    let half = T::of(0.5);
    let u = c * (x + k * x * x * x);
    let th = u.tanh();
    let y = half * x * (T::one() + th);
    let dy = half * (T::one() + th)
        + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0) * k * x * x);
    (y, dy)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn clamp_prob<T: Scalar>(p: T) -> (T, bool) {
    let lo = T::of(PROB_CLAMP);
    let hi = T::one() - lo;
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes carrying a primitive record.
    pub fn recorded_ops(&self) -> usize {
        self.nodes.iter().filter(|n| n.record.is_some()).count()
    }

    /// Inserts an array as a leaf; it is differentiable iff the array requires grad.
    pub fn leaf(&mut self, array: &DiffArray<T>) -> Var {
        self.push_leaf(array.shape().to_vec(), array.data().to_vec(), array.requires_grad())
    }

    pub fn leaf_owned(&mut self, array: DiffArray<T>) -> Var {
        let rg = array.requires_grad();
        let shape = array.shape().to_vec();
        self.push_leaf(shape, array.into_data(), rg)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(Error::dim("constant", &[shape, &[data.len()]]));
        }
        Ok(self.push_leaf(shape.to_vec(), data, false))
    }

    pub fn variable(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(Error::dim("variable", &[shape, &[data.len()]]));
        }
        Ok(self.push_leaf(shape.to_vec(), data, true))
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            record: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn to_array(&self, v: Var) -> DiffArray<T> {
        let n = &self.nodes[v.0];
        DiffArray::new(&n.shape, n.value.clone()).expect("tape node shape invariant")
    }

    fn push(
        &mut self,
        prim: Primitive,
        inputs: &[Var],
        shape: Vec<usize>,
        value: Vec<T>,
        saved: Vec<T>,
        saved_aux: Vec<T>,
    ) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let record = requires_grad.then(|| Record {
            prim,
            inputs: inputs.to_vec(),
            saved,
            saved_aux,
        });
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            record,
        });
        Var(self.nodes.len() - 1)
    }

    fn arity(&self, prim: &Primitive, inputs: &[Var], n: usize) -> Result<()> {
        if inputs.len() != n {
            let shapes: Vec<&[usize]> = inputs.iter().map(|v| self.shape(*v)).collect();
            return Err(Error::dim(prim.kind().name(), &shapes));
        }
        Ok(())
    }

    /// Applies one primitive to tape values.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let name = prim.name();
        match prim {
            Primitive::MatMul { trans_a, trans_b } => {
                self.arity(&prim, inputs, 2)?;
                let (a, b) = (inputs[0], inputs[1]);
                let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
                if sa.len() != 2 || sb.len() != 2 {
                    return Err(Error::dim(name, &[&sa, &sb]));
                }
                let (m, ka) = if trans_a { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
                let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
                if ka != kb {
                    return Err(Error::dim(name, &[&sa, &sb]));
                }
                let mut out = vec![T::zero(); m * n];
                gemm(
                    MatRef::new(self.value(a), m, ka, trans_a),
                    MatRef::new(self.value(b), kb, n, trans_b),
                    &mut out,
                    false,
                    T::zero(),
                );
                Ok(self.push(prim, inputs, vec![m, n], out, vec![], vec![]))
            }
            Primitive::Add | Primitive::Mul => {
                self.arity(&prim, inputs, 2)?;
                let (a, b) = (inputs[0], inputs[1]);
                let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
                if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != sb[..] {
                    return Err(Error::dim(name, &[&sa, &sb]));
                }
                let bv = self.value(b);
                let bl = bv.len();
                let is_add = matches!(prim, Primitive::Add);
                let out: Vec<T> = self
                    .value(a)
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let y = bv[i % bl];
                        if is_add {
                            x + y
                        } else {
                            x * y
                        }
                    })
                    .collect();
                Ok(self.push(prim, inputs, sa, out, vec![], vec![]))
            }
            Primitive::Scale(s) => {
                self.arity(&prim, inputs, 1)?;
                let s = T::of(s);
                let out = self.value(inputs[0]).iter().map(|&x| x * s).collect();
                let shape = self.shape(inputs[0]).to_vec();
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::Gelu | Primitive::Relu | Primitive::Sigmoid | Primitive::Tanh => {
                self.arity(&prim, inputs, 1)?;
                let x = self.value(inputs[0]);
                let out: Vec<T> = match prim {
                    Primitive::Gelu => x.iter().map(|&v| gelu_parts(v).0).collect(),
                    Primitive::Relu => x.iter().map(|&v| v.max(T::zero())).collect(),
                    Primitive::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
                    _ => x.iter().map(|&v| v.tanh()).collect(),
                };
                let shape = self.shape(inputs[0]).to_vec();
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::SoftmaxLastDim => {
                self.arity(&prim, inputs, 1)?;
                let shape = self.shape(inputs[0]).to_vec();
                let d = *shape.last().unwrap_or(&1);
                let mut out = self.value(inputs[0]).to_vec();
                for row in out.chunks_mut(d) {
                    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut sum = T::zero();
                    for v in row.iter_mut() {
                        *v = (*v - mx).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                }
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::LayerNorm => {
                self.arity(&prim, inputs, 3)?;
                let (x, g, b) = (inputs[0], inputs[1], inputs[2]);
                let sx = self.shape(x).to_vec();
                let d = *sx.last().unwrap_or(&0);
                if sx.is_empty() || self.shape(g) != [d] || self.shape(b) != [d] {
                    return Err(Error::dim(name, &[&sx, self.shape(g), self.shape(b)]));
                }
                let (xv, gv, bv) = (self.value(x), self.value(g), self.value(b));
                let rows = xv.len() / d;
                let mut xhat = vec![T::zero(); xv.len()];
                let mut rstd = vec![T::zero(); rows];
                let mut out = vec![T::zero(); xv.len()];
                let dn = T::of(d as f64);
                let eps = T::of(LAYER_NORM_EPS);
                for r in 0..rows {
                    let row = &xv[r * d..(r + 1) * d];
                    let mean = row.iter().copied().sum::<T>() / dn;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
                    let rs = T::one() / (var + eps).sqrt();
                    rstd[r] = rs;
                    for j in 0..d {
                        let h = (row[j] - mean) * rs;
                        xhat[r * d + j] = h;
                        out[r * d + j] = gv[j] * h + bv[j];
                    }
                }
                Ok(self.push(prim, inputs, sx, out, xhat, rstd))
            }
            Primitive::GatherRows(ref idx) => {
                self.arity(&prim, inputs, 1)?;
                let sa = self.shape(inputs[0]).to_vec();
                if sa.is_empty() || idx.iter().any(|&i| i >= sa[0]) || idx.is_empty() {
                    return Err(Error::dim(name, &[&sa, &[idx.len()]]));
                }
                let row = numel(&sa[1..]);
                let av = self.value(inputs[0]);
                let mut out = Vec::with_capacity(idx.len() * row);
                for &i in idx {
                    out.extend_from_slice(&av[i * row..(i + 1) * row]);
                }
                let mut shape = sa.clone();
                shape[0] = idx.len();
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::ConcatLastDim => {
                if inputs.is_empty() {
                    return Err(Error::dim(name, &[]));
                }
                let s0 = self.shape(inputs[0]).to_vec();
                if s0.is_empty() {
                    return Err(Error::dim(name, &[&s0]));
                }
                let lead = &s0[..s0.len() - 1];
                let mut widths = Vec::new();
                for v in inputs {
                    let s = self.shape(*v);
                    if s.len() != s0.len() || &s[..s.len() - 1] != lead {
                        let shapes: Vec<&[usize]> = inputs.iter().map(|v| self.shape(*v)).collect();
                        return Err(Error::dim(name, &shapes));
                    }
                    widths.push(*s.last().unwrap());
                }
                let total: usize = widths.iter().sum();
                let rows = numel(lead);
                let mut out = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for (v, &w) in inputs.iter().zip(&widths) {
                        out.extend_from_slice(&self.value(*v)[r * w..(r + 1) * w]);
                    }
                }
                let mut shape = lead.to_vec();
                shape.push(total);
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::SliceLastDim { start, len } => {
                self.arity(&prim, inputs, 1)?;
                let sa = self.shape(inputs[0]).to_vec();
                let d = *sa.last().unwrap_or(&0);
                if sa.is_empty() || len == 0 || start + len > d {
                    return Err(Error::dim(name, &[&sa, &[start, len]]));
                }
                let av = self.value(inputs[0]);
                let mut out = Vec::with_capacity(av.len() / d * len);
                for row in av.chunks(d) {
                    out.extend_from_slice(&row[start..start + len]);
                }
                let mut shape = sa.clone();
                *shape.last_mut().unwrap() = len;
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::ConcatRows => {
                if inputs.is_empty() {
                    return Err(Error::dim(name, &[]));
                }
                let s0 = self.shape(inputs[0]).to_vec();
                if s0.is_empty() {
                    return Err(Error::dim(name, &[&s0]));
                }
                let mut rows = 0;
                for v in inputs {
                    let s = self.shape(*v);
                    if s.len() != s0.len() || s[1..] != s0[1..] {
                        let shapes: Vec<&[usize]> = inputs.iter().map(|v| self.shape(*v)).collect();
                        return Err(Error::dim(name, &shapes));
                    }
                    rows += s[0];
                }
                let mut out = Vec::with_capacity(rows * numel(&s0[1..]));
                for v in inputs {
                    out.extend_from_slice(self.value(*v));
                }
                let mut shape = s0.clone();
                shape[0] = rows;
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::SliceRows { start, len } => {
                self.arity(&prim, inputs, 1)?;
                let sa = self.shape(inputs[0]).to_vec();
                if sa.is_empty() || len == 0 || start + len > sa[0] {
                    return Err(Error::dim(name, &[&sa, &[start, len]]));
                }
                let row = numel(&sa[1..]);
                let out = self.value(inputs[0])[start * row..(start + len) * row].to_vec();
                let mut shape = sa.clone();
                shape[0] = len;
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::MeanOverAxis(axis) => {
                self.arity(&prim, inputs, 1)?;
                let sa = self.shape(inputs[0]).to_vec();
                if axis >= sa.len() {
                    return Err(Error::dim(name, &[&sa, &[axis]]));
                }
                let pre = numel(&sa[..axis]);
                let n = sa[axis];
                let post = numel(&sa[axis + 1..]);
                let av = self.value(inputs[0]);
                let mut out = vec![T::zero(); pre * post];
                let inv = T::one() / T::of(n as f64);
                for p in 0..pre {
                    for i in 0..n {
                        let src = &av[(p * n + i) * post..(p * n + i + 1) * post];
                        for (o, &s) in out[p * post..(p + 1) * post].iter_mut().zip(src) {
                            *o += s;
                        }
                    }
                }
                out.iter_mut().for_each(|o| *o *= inv);
                let mut shape = sa.clone();
                shape.remove(axis);
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::SumAll => {
                self.arity(&prim, inputs, 1)?;
                let s: T = self.value(inputs[0]).iter().copied().sum();
                Ok(self.push(prim, inputs, vec![], vec![s], vec![], vec![]))
            }
            Primitive::Reshape(ref shape) => {
                self.arity(&prim, inputs, 1)?;
                let sa = self.shape(inputs[0]).to_vec();
                if numel(shape) != numel(&sa) {
                    return Err(Error::dim(name, &[&sa, shape]));
                }
                let shape = shape.clone();
                let out = self.value(inputs[0]).to_vec();
                Ok(self.push(prim, inputs, shape, out, vec![], vec![]))
            }
            Primitive::Conv1dTime => {
                self.arity(&prim, inputs, 3)?;
                let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
                let (sx, sw, sb) = (
                    self.shape(x).to_vec(),
                    self.shape(w).to_vec(),
                    self.shape(b).to_vec(),
                );
                if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[1] || sb != [sw[2]] || sw[0] % 2 == 0 {
                    return Err(Error::dim(name, &[&sx, &sw, &sb]));
                }
                let (t_len, cin, k, cout) = (sx[0], sx[1], sw[0], sw[2]);
                let mut out = Vec::with_capacity(t_len * cout);
                let bv = self.value(b);
                for _ in 0..t_len {
                    out.extend_from_slice(bv);
                }
                let (xv, wv) = (self.value(x), self.value(w));
                for kk in 0..k {
                    let Some((src, dst, len)) = conv_span(t_len, k, kk) else {
                        continue;
                    };
                    gemm(
                        MatRef::new(&xv[src * cin..(src + len) * cin], len, cin, false),
                        MatRef::new(&wv[kk * cin * cout..(kk + 1) * cin * cout], cin, cout, false),
                        &mut out[dst * cout..(dst + len) * cout],
                        false,
                        T::one(),
                    );
                }
                Ok(self.push(prim, inputs, vec![t_len, cout], out, vec![], vec![]))
            }
            Primitive::Dropout { rate, seed, training } => {
                self.arity(&prim, inputs, 1)?;
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Contract(format!("dropout rate {rate} outside [0,1)")));
                }
                let shape = self.shape(inputs[0]).to_vec();
                let xv = self.value(inputs[0]);
                if !training || rate == 0.0 {
                    let out = xv.to_vec();
                    let mask = vec![T::one(); out.len()];
                    return Ok(self.push(prim, inputs, shape, out, mask, vec![]));
                }
                let keep = T::of(1.0 / (1.0 - rate));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mask: Vec<T> = (0..xv.len())
                    .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
                    .collect();
                let out = xv.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
                Ok(self.push(prim, inputs, shape, out, mask, vec![]))
            }
            Primitive::MseMasked { ref rows } => {
                self.arity(&prim, inputs, 2)?;
                let (p, t) = (inputs[0], inputs[1]);
                let (sp, st) = (self.shape(p).to_vec(), self.shape(t).to_vec());
                if sp.len() != 2
                    || st.len() != 2
                    || sp[1] != st[1]
                    || sp[0] != rows.len()
                    || rows.is_empty()
                    || rows.iter().any(|&r| r >= st[0])
                {
                    return Err(Error::dim(name, &[&sp, &st, &[rows.len()]]));
                }
                let d = sp[1];
                let (pv, tv) = (self.value(p), self.value(t));
                let mut total = T::zero();
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..d {
                        let diff = pv[i * d + j] - tv[r * d + j];
                        total += diff * diff;
                    }
                }
                let loss = total / T::of(rows.len() as f64);
                Ok(self.push(prim, inputs, vec![], vec![loss], vec![], vec![]))
            }
            Primitive::CrossEntropy { ref labels } => {
                self.arity(&prim, inputs, 1)?;
                let sl = self.shape(inputs[0]).to_vec();
                if sl.len() != 2 || sl[0] != labels.len() || labels.is_empty() || labels.iter().any(|&l| l >= sl[1]) {
                    return Err(Error::dim(name, &[&sl, &[labels.len()]]));
                }
                let c = sl[1];
                let mut probs = self.value(inputs[0]).to_vec();
                let mut total = T::zero();
                let mut clamped = vec![T::zero(); labels.len()];
                for (r, row) in probs.chunks_mut(c).enumerate() {
                    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut sum = T::zero();
                    for v in row.iter_mut() {
                        *v = (*v - mx).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                    let (p, was_clamped) = clamp_prob(row[labels[r]]);
                    if was_clamped {
                        clamped[r] = T::one();
                    }
                    total -= p.ln();
                }
                let loss = total / T::of(labels.len() as f64);
                Ok(self.push(prim, inputs, vec![], vec![loss], probs, clamped))
            }
            Primitive::BinaryCrossEntropy { ref targets } => {
                self.arity(&prim, inputs, 1)?;
                let sp = self.shape(inputs[0]).to_vec();
                let pv = self.value(inputs[0]);
                if pv.len() != targets.len() || targets.is_empty() {
                    return Err(Error::dim(name, &[&sp, &[targets.len()]]));
                }
                let mut total = T::zero();
                for (&p, &y) in pv.iter().zip(targets) {
                    let (p, _) = clamp_prob(p);
                    let y = T::of(y);
                    total -= y * p.ln() + (T::one() - y) * (T::one() - p).ln();
                }
                let loss = total / T::of(targets.len() as f64);
                Ok(self.push(prim, inputs, vec![], vec![loss], vec![], vec![]))
            }
        }
    }

    // Convenience wrappers.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul { trans_a: false, trans_b: false }, &[a, b])
    }

    pub fn matmul_t(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        self.apply(Primitive::MatMul { trans_a, trans_b }, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(Primitive::Scale(s), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Gelu, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[a])
    }

    pub fn softmax_lastdim(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::SoftmaxLastDim, &[a])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        self.apply(Primitive::LayerNorm, &[x, gamma, beta])
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        self.apply(Primitive::GatherRows(idx.to_vec()), &[a])
    }

    pub fn concat_lastdim(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Primitive::ConcatLastDim, parts)
    }

    pub fn slice_lastdim(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(Primitive::SliceLastDim { start, len }, &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Primitive::ConcatRows, parts)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(Primitive::SliceRows { start, len }, &[a])
    }

    pub fn mean_over_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::MeanOverAxis(axis), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::SumAll, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[a])
    }

    pub fn conv1d_time(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Conv1dTime, &[x, w, b])
    }

    pub fn dropout(&mut self, a: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        self.apply(Primitive::Dropout { rate, seed, training }, &[a])
    }

    pub fn mse_masked(&mut self, pred: Var, target: Var, rows: &[usize]) -> Result<Var> {
        self.apply(Primitive::MseMasked { rows: rows.to_vec() }, &[pred, target])
    }

    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.apply(Primitive::CrossEntropy { labels: labels.to_vec() }, &[logits])
    }

    pub fn binary_cross_entropy(&mut self, probs: Var, targets: &[f64]) -> Result<Var> {
        self.apply(Primitive::BinaryCrossEntropy { targets: targets.to_vec() }, &[probs])
    }

    /// Reverse pass from a scalar `loss`; consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(rec) = node.record.as_ref() else {
                continue;
            };
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.backprop_node(node, rec, &gout, &mut grads);
        }
        let leaves = self
            .nodes
            .iter()
            .map(|n| n.record.is_none() && n.requires_grad)
            .collect::<Vec<_>>();
        for (g, is_leaf) in grads.iter_mut().zip(&leaves) {
            if !is_leaf {
                *g = None;
            }
        }
        Ok(Gradients { grads, leaves })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn backprop_node(&self, node: &Node<T>, rec: &Record<T>, gout: &[T], grads: &mut [Option<Vec<T>>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let ins = &rec.inputs;
        match &rec.prim {
            Primitive::MatMul { trans_a, trans_b } => {
                let (a, b) = (ins[0], ins[1]);
                let sa = &self.nodes[a.0].shape;
                let (m, k) = if *trans_a { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
                let n = node.shape[1];
                let dc = MatRef::new(gout, m, n, false);
                if wants(a) {
                    let bm = MatRef::new(&self.nodes[b.0].value, k, n, *trans_b);
                    let g = self.slot(grads, a).unwrap();
                    gemm(dc, bm.t(), g, *trans_a, T::one());
                }
                if wants(b) {
                    let am = MatRef::new(&self.nodes[a.0].value, m, k, *trans_a);
                    let g = self.slot(grads, b).unwrap();
                    gemm(am.t(), dc, g, *trans_b, T::one());
                }
            }
            Primitive::Add => {
                if let Some(g) = self.slot(grads, ins[0]) {
                    g.iter_mut().zip(gout).for_each(|(g, &d)| *g += d);
                }
                if let Some(g) = self.slot(grads, ins[1]) {
                    let bl = g.len();
                    for (i, &d) in gout.iter().enumerate() {
                        g[i % bl] += d;
                    }
                }
            }
            Primitive::Mul => {
                let av = &self.nodes[ins[0].0].value;
                let bv = &self.nodes[ins[1].0].value;
                let bl = bv.len();
                if let Some(g) = self.slot(grads, ins[0]) {
                    for (i, (g, &d)) in g.iter_mut().zip(gout).enumerate() {
                        *g += d * bv[i % bl];
                    }
                }
                if let Some(g) = self.slot(grads, ins[1]) {
                    for (i, &d) in gout.iter().enumerate() {
                        g[i % bl] += d * av[i];
                    }
                }
            }
            Primitive::Scale(s) => {
                let s = T::of(*s);
                if let Some(g) = self.slot(grads, ins[0]) {
                    g.iter_mut().zip(gout).for_each(|(g, &d)| *g += d * s);
                }
            }
            Primitive::Gelu => {
                let xv = &self.nodes[ins[0].0].value;
                if let Some(g) = self.slot(grads, ins[0]) {
                    for ((g, &d), &x) in g.iter_mut().zip(gout).zip(xv) {
                        *g += d * gelu_parts(x).1;
                    }
                }
            }
            Primitive::Relu => {
                let xv = &self.nodes[ins[0].0].value;
                if let Some(g) = self.slot(grads, ins[0]) {
                    for ((g, &d), &x) in g.iter_mut().zip(gout).zip(xv) {
                        if x > T::zero() {
                            *g += d;
                        }
                    }
                }
            }
            Primitive::Sigmoid => {
                let yv = &node.value;
                if let Some(g) = self.slot(grads, ins[0]) {
                    for ((g, &d), &y) in g.iter_mut().zip(gout).zip(yv) {
                        *g += d * y * (T::one() - y);
                    }
                }
            }
            Primitive::Tanh => {
                let yv = &node.value;
                if let Some(g) = self.slot(grads, ins[0]) {
                    for ((g, &d), &y) in g.iter_mut().zip(gout).zip(yv) {
                        *g += d * (T::one() - y * y);
                    }
                }
            }
            Primitive::SoftmaxLastDim => {
                let d = *node.shape.last().unwrap_or(&1);
                let yv = &node.value;
                if let Some(g) = self.slot(grads, ins[0]) {
                    for ((grow, yrow), drow) in g.chunks_mut(d).zip(yv.chunks(d)).zip(gout.chunks(d)) {
                        let dot: T = yrow.iter().zip(drow).map(|(&y, &dy)| y * dy).sum();
                        for j in 0..d {
                            grow[j] += yrow[j] * (drow[j] - dot);
                        }
                    }
                }
            }
            Primitive::LayerNorm => {
                let d = *node.shape.last().unwrap();
                let (xhat, rstd) = (&rec.saved, &rec.saved_aux);
                let gv = &self.nodes[ins[1].0].value;
                if wants(ins[1]) {
                    let g = self.slot(grads, ins[1]).unwrap();
                    for (hrow, drow) in xhat.chunks(d).zip(gout.chunks(d)) {
                        for j in 0..d {
                            g[j] += drow[j] * hrow[j];
                        }
                    }
                }
                if wants(ins[2]) {
                    let g = self.slot(grads, ins[2]).unwrap();
                    for drow in gout.chunks(d) {
                        for j in 0..d {
                            g[j] += drow[j];
                        }
                    }
                }
                if let Some(g) = self.slot(grads, ins[0]) {
                    let dn = T::of(d as f64);
                    let mut dxhat = vec![T::zero(); d];
                    for (r, (hrow, drow)) in xhat.chunks(d).zip(gout.chunks(d)).enumerate() {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..d {
                            dxhat[j] = drow[j] * gv[j];
                            m1 += dxhat[j];
                            m2 += dxhat[j] * hrow[j];
                        }
                        m1 /= dn;
                        m2 /= dn;
                        let grow = &mut g[r * d..(r + 1) * d];
                        for j in 0..d {
                            grow[j] += rstd[r] * (dxhat[j] - m1 - hrow[j] * m2);
                        }
                    }
                }
            }
            Primitive::GatherRows(idx) => {
                if let Some(g) = self.slot(grads, ins[0]) {
                    let row = gout.len() / idx.len();
                    for (k, &i) in idx.iter().enumerate() {
                        for j in 0..row {
                            g[i * row + j] += gout[k * row + j];
                        }
                    }
                }
            }
            Primitive::ConcatLastDim => {
                let total = *node.shape.last().unwrap();
                let rows = gout.len() / total;
                let mut off = 0;
                for &v in ins {
                    let w = *self.nodes[v.0].shape.last().unwrap();
                    if let Some(g) = self.slot(grads, v) {
                        for r in 0..rows {
                            for j in 0..w {
                                g[r * w + j] += gout[r * total + off + j];
                            }
                        }
                    }
                    off += w;
                }
            }
            Primitive::SliceLastDim { start, len } => {
                let d = *self.nodes[ins[0].0].shape.last().unwrap();
                if let Some(g) = self.slot(grads, ins[0]) {
                    for (r, drow) in gout.chunks(*len).enumerate() {
                        for j in 0..*len {
                            g[r * d + start + j] += drow[j];
                        }
                    }
                }
            }
            Primitive::ConcatRows => {
                let mut off = 0;
                for &v in ins {
                    let n = self.nodes[v.0].value.len();
                    if let Some(g) = self.slot(grads, v) {
                        g.iter_mut().zip(&gout[off..off + n]).for_each(|(g, &d)| *g += d);
                    }
                    off += n;
                }
            }
            Primitive::SliceRows { start, .. } => {
                let row = numel(&node.shape[1..]);
                if let Some(g) = self.slot(grads, ins[0]) {
                    let base = start * row;
                    g[base..base + gout.len()]
                        .iter_mut()
                        .zip(gout)
                        .for_each(|(g, &d)| *g += d);
                }
            }
            Primitive::MeanOverAxis(axis) => {
                let sa = &self.nodes[ins[0].0].shape;
                let pre = numel(&sa[..*axis]);
                let n = sa[*axis];
                let post = numel(&sa[axis + 1..]);
                let inv = T::one() / T::of(n as f64);
                if let Some(g) = self.slot(grads, ins[0]) {
                    for p in 0..pre {
                        for i in 0..n {
                            let dst = &mut g[(p * n + i) * post..(p * n + i + 1) * post];
                            for (o, &d) in dst.iter_mut().zip(&gout[p * post..(p + 1) * post]) {
                                *o += d * inv;
                            }
                        }
                    }
                }
            }
            Primitive::SumAll => {
                if let Some(g) = self.slot(grads, ins[0]) {
                    g.iter_mut().for_each(|g| *g += gout[0]);
                }
            }
            Primitive::Reshape(_) => {
                if let Some(g) = self.slot(grads, ins[0]) {
                    g.iter_mut().zip(gout).for_each(|(g, &d)| *g += d);
                }
            }
            Primitive::Conv1dTime => {
                let (x, w, b) = (ins[0], ins[1], ins[2]);
                let sw = &self.nodes[w.0].shape;
                let (k, cin, cout) = (sw[0], sw[1], sw[2]);
                let t_len = node.shape[0];
                let xv = &self.nodes[x.0].value;
                let wv = &self.nodes[w.0].value;
                if let Some(g) = self.slot(grads, b) {
                    for row in gout.chunks(cout) {
                        g.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
                    }
                }
                if wants(w) {
                    let g = self.slot(grads, w).unwrap();
                    for kk in 0..k {
                        let Some((src, dst, len)) = conv_span(t_len, k, kk) else {
                            continue;
                        };
                        let xs = MatRef::new(&xv[src * cin..(src + len) * cin], len, cin, false);
                        let dy = MatRef::new(&gout[dst * cout..(dst + len) * cout], len, cout, false);
                        gemm(xs.t(), dy, &mut g[kk * cin * cout..(kk + 1) * cin * cout], false, T::one());
                    }
                }
                if wants(x) {
                    let g = self.slot(grads, x).unwrap();
                    for kk in 0..k {
                        let Some((src, dst, len)) = conv_span(t_len, k, kk) else {
                            continue;
                        };
                        let dy = MatRef::new(&gout[dst * cout..(dst + len) * cout], len, cout, false);
                        let wk = MatRef::new(&wv[kk * cin * cout..(kk + 1) * cin * cout], cin, cout, false);
                        gemm(dy, wk.t(), &mut g[src * cin..(src + len) * cin], false, T::one());
                    }
                }
            }
            Primitive::Dropout { .. } => {
                let mask = &rec.saved;
                if let Some(g) = self.slot(grads, ins[0]) {
                    for ((g, &d), &m) in g.iter_mut().zip(gout).zip(mask) {
                        *g += d * m;
                    }
                }
            }
            Primitive::MseMasked { rows } => {
                let (p, t) = (ins[0], ins[1]);
                let d = self.nodes[p.0].shape[1];
                let pv = &self.nodes[p.0].value;
                let tv = &self.nodes[t.0].value;
                let scale = gout[0] * T::of(2.0) / T::of(rows.len() as f64);
                if let Some(g) = self.slot(grads, p) {
                    for (i, &r) in rows.iter().enumerate() {
                        for j in 0..d {
                            g[i * d + j] += scale * (pv[i * d + j] - tv[r * d + j]);
                        }
                    }
                }
                if let Some(g) = self.slot(grads, t) {
                    for (i, &r) in rows.iter().enumerate() {
                        for j in 0..d {
                            g[r * d + j] -= scale * (pv[i * d + j] - tv[r * d + j]);
                        }
                    }
                }
            }
            Primitive::CrossEntropy { labels } => {
                let c = self.nodes[ins[0].0].shape[1];
                let probs = &rec.saved;
                let clamped = &rec.saved_aux;
                let scale = gout[0] / T::of(labels.len() as f64);
                if let Some(g) = self.slot(grads, ins[0]) {
                    for (r, &l) in labels.iter().enumerate() {
                        if clamped[r] > T::zero() {
                            continue;
                        }
                        for j in 0..c {
                            let onehot = if j == l { T::one() } else { T::zero() };
                            g[r * c + j] += scale * (probs[r * c + j] - onehot);
                        }
                    }
                }
            }
            Primitive::BinaryCrossEntropy { targets } => {
                let pv = &self.nodes[ins[0].0].value;
                let scale = gout[0] / T::of(targets.len() as f64);
                if let Some(g) = self.slot(grads, ins[0]) {
                    for ((g, &p), &y) in g.iter_mut().zip(pv).zip(targets) {
                        let (pc, was_clamped) = clamp_prob(p);
                        if was_clamped {
                            continue;
                        }
                        let y = T::of(y);
                        *g += scale * (-y / pc + (T::one() - y) / (T::one() - pc));
                    }
                }
            }
        }
    }
}

/// Source row, destination row and length for kernel tap `kk` under zero
/// same-padding.
fn conv_span(t_len: usize, k: usize, kk: usize) -> Option<(usize, usize, usize)> {
    let pad = (k / 2) as isize;
    let shift = kk as isize - pad; // y[t] += x[t + shift] · w[kk]
    let t0 = (-shift).max(0) as usize;
    let t1 = ((t_len as isize) - shift).min(t_len as isize);
    if t1 <= t0 as isize {
        return None;
    }
    let len = t1 as usize - t0;
    Some(((t0 as isize + shift) as usize, t0, len))
}

/// Gradients of a loss with respect to every differentiable leaf.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    leaves: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf; `None` for non-differentiable nodes.
    ///
    /// Differentiable leaves that did not participate in the loss come back
    /// as exact zeros.
    pub fn get(&self, v: Var, len: usize) -> Option<Vec<T>> {
        if !self.leaves.get(v.0).copied().unwrap_or(false) {
            return None;
        }
        Some(self.grads[v.0].clone().unwrap_or_else(|| vec![T::zero(); len]))
    }

    pub fn get_ref(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds this leaf's gradient into `array`'s gradient slot.
    pub fn accumulate_into(&self, v: Var, array: &mut DiffArray<T>) -> Result<()> {
        match self.get_ref(v) {
            Some(g) => array.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_span_covers_valid_rows() {
        // k=3, T=8: tap 0 reads x[t-1] for t in 1..8
        assert_eq!(conv_span(8, 3, 0), Some((0, 1, 7)));
        assert_eq!(conv_span(8, 3, 1), Some((0, 0, 8)));
        assert_eq!(conv_span(8, 3, 2), Some((1, 0, 7)));
        assert_eq!(conv_span(1, 3, 0), None);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(matches!("conv3d".parse::<PrimitiveKind>(), Err(Error::UnsupportedPrimitive(_))));
        for k in PrimitiveKind::ALL {
            assert_eq!(k.name().parse::<PrimitiveKind>().unwrap(), k);
        }
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let mut t = Tape::<f64>::new();
        let x = t.variable(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_only_graph_records_nothing() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(&[2, 2], vec![1.0; 4]).unwrap();
        let b = t.matmul(a, a).unwrap();
        let _ = t.gelu(b).unwrap();
        assert_eq!(t.recorded_ops(), 0);
    }
}
