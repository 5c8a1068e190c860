use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradfab::{finite_diff_check, Primitive, PrimitiveKind, Tape, Var};

/// One randomized instance of a primitive: the primitive with attributes,
/// input shapes, and which inputs are differentiable.
struct Case {
    prim: Primitive,
    shapes: Vec<Vec<usize>>,
    differentiable: Vec<bool>,
    values: Vec<Vec<f64>>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values bounded away from zero so a central difference never straddles a kink.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn make_case(kind: PrimitiveKind, rng: &mut ChaCha8Rng) -> Case {
    let r = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| rng.gen_range(lo..=hi);
    let mut shapes: Vec<Vec<usize>> = Vec::new();
    let mut differentiable = Vec::new();
    let mut values = Vec::new();
    let mut push = |shape: Vec<usize>, diff: bool, vals: Vec<f64>| {
        shapes.push(shape);
        differentiable.push(diff);
        values.push(vals);
    };
    let prim = match kind {
        PrimitiveKind::MatMul => {
            let (m, k, n) = (r(rng, 1, 4), r(rng, 1, 4), r(rng, 1, 4));
            let (ta, tb) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
            let sa = if ta { vec![k, m] } else { vec![m, k] };
            let sb = if tb { vec![n, k] } else { vec![k, n] };
            push(sa, true, uniform(rng, m * k, -1.0, 1.0));
            push(sb, true, uniform(rng, k * n, -1.0, 1.0));
            Primitive::MatMul { trans_a: ta, trans_b: tb }
        }
        PrimitiveKind::Add | PrimitiveKind::Mul => {
            let (a, b) = (r(rng, 1, 3), r(rng, 1, 4));
            push(vec![a, b], true, uniform(rng, a * b, -1.0, 1.0));
            if rng.gen_bool(0.5) {
                push(vec![b], true, uniform(rng, b, -1.0, 1.0));
            } else {
                push(vec![a, b], true, uniform(rng, a * b, -1.0, 1.0));
            }
            if kind == PrimitiveKind::Add {
                Primitive::Add
            } else {
                Primitive::Mul
            }
        }
        PrimitiveKind::Scale => {
            let n = r(rng, 1, 6);
            push(vec![n], true, uniform(rng, n, -1.0, 1.0));
            Primitive::Scale(rng.gen_range(-3.0..3.0))
        }
        PrimitiveKind::Gelu | PrimitiveKind::Sigmoid | PrimitiveKind::Tanh | PrimitiveKind::SoftmaxLastDim => {
            let (a, b) = (r(rng, 1, 3), r(rng, 1, 5));
            push(vec![a, b], true, uniform(rng, a * b, -2.0, 2.0));
            match kind {
                PrimitiveKind::Gelu => Primitive::Gelu,
                PrimitiveKind::Sigmoid => Primitive::Sigmoid,
                PrimitiveKind::Tanh => Primitive::Tanh,
                _ => Primitive::SoftmaxLastDim,
            }
        }
        PrimitiveKind::Relu => {
            let n = r(rng, 1, 8);
            push(vec![n], true, away_from_zero(rng, n));
            Primitive::Relu
        }
        PrimitiveKind::LayerNorm => {
            let (a, d) = (r(rng, 1, 3), r(rng, 2, 6));
            push(vec![a, d], true, uniform(rng, a * d, -2.0, 2.0));
            push(vec![d], true, uniform(rng, d, 0.5, 1.5));
            push(vec![d], true, uniform(rng, d, -0.5, 0.5));
            Primitive::LayerNorm
        }
        PrimitiveKind::GatherRows => {
            let (n, d) = (r(rng, 1, 5), r(rng, 1, 3));
            push(vec![n, d], true, uniform(rng, n * d, -1.0, 1.0));
            let len = r(rng, 1, 6);
            Primitive::GatherRows((0..len).map(|_| rng.gen_range(0..n)).collect())
        }
        PrimitiveKind::ConcatLastDim | PrimitiveKind::ConcatRows => {
            let parts = r(rng, 1, 3);
            let (a, b) = (r(rng, 1, 3), r(rng, 1, 3));
            for _ in 0..parts {
                let w = r(rng, 1, 3);
                let shape = if kind == PrimitiveKind::ConcatLastDim {
                    vec![a, w]
                } else {
                    vec![w, b]
                };
                let n = shape.iter().product();
                push(shape, true, uniform(rng, n, -1.0, 1.0));
            }
            if kind == PrimitiveKind::ConcatLastDim {
                Primitive::ConcatLastDim
            } else {
                Primitive::ConcatRows
            }
        }
        PrimitiveKind::SliceLastDim | PrimitiveKind::SliceRows => {
            let (a, b) = (r(rng, 1, 5), r(rng, 1, 5));
            push(vec![a, b], true, uniform(rng, a * b, -1.0, 1.0));
            let extent = if kind == PrimitiveKind::SliceLastDim { b } else { a };
            let start = rng.gen_range(0..extent);
            let len = rng.gen_range(1..=extent - start);
            if kind == PrimitiveKind::SliceLastDim {
                Primitive::SliceLastDim { start, len }
            } else {
                Primitive::SliceRows { start, len }
            }
        }
        PrimitiveKind::MeanOverAxis => {
            let shape = vec![r(rng, 1, 3), r(rng, 1, 4), r(rng, 1, 3)];
            let n = shape.iter().product();
            let axis = rng.gen_range(0..3);
            push(shape, true, uniform(rng, n, -1.0, 1.0));
            Primitive::MeanOverAxis(axis)
        }
        PrimitiveKind::SumAll => {
            let n = r(rng, 1, 6);
            push(vec![n], true, uniform(rng, n, -1.0, 1.0));
            Primitive::SumAll
        }
        PrimitiveKind::Reshape => {
            let (a, b) = (r(rng, 1, 3), r(rng, 1, 3));
            push(vec![a, b], true, uniform(rng, a * b, -1.0, 1.0));
            Primitive::Reshape(vec![b, a])
        }
        PrimitiveKind::Conv1dTime => {
            let (t, cin, cout) = (r(rng, 1, 6), r(rng, 1, 3), r(rng, 1, 3));
            let k = if rng.gen_bool(0.5) { 3 } else { 1 };
            push(vec![t, cin], true, uniform(rng, t * cin, -1.0, 1.0));
            push(vec![k, cin, cout], true, uniform(rng, k * cin * cout, -1.0, 1.0));
            push(vec![cout], true, uniform(rng, cout, -1.0, 1.0));
            Primitive::Conv1dTime
        }
        PrimitiveKind::Dropout => {
            let n = r(rng, 1, 8);
            push(vec![n], true, uniform(rng, n, -1.0, 1.0));
            Primitive::Dropout {
                rate: rng.gen_range(0.0..0.6),
                seed: rng.gen(),
                training: rng.gen_bool(0.7),
            }
        }
        PrimitiveKind::MseMasked => {
            let (n, d) = (r(rng, 1, 5), r(rng, 1, 4));
            let m = r(rng, 1, n);
            push(vec![m, d], true, uniform(rng, m * d, -1.0, 1.0));
            push(vec![n, d], true, uniform(rng, n * d, -1.0, 1.0));
            let mut rows: Vec<usize> = (0..n).collect();
            rows.truncate(m);
            rows.reverse();
            Primitive::MseMasked { rows }
        }
        PrimitiveKind::CrossEntropy => {
            let (n, c) = (r(rng, 1, 4), r(rng, 2, 5));
            push(vec![n, c], true, uniform(rng, n * c, -2.0, 2.0));
            Primitive::CrossEntropy {
                labels: (0..n).map(|_| rng.gen_range(0..c)).collect(),
            }
        }
        PrimitiveKind::BinaryCrossEntropy => {
            let n = r(rng, 1, 6);
            push(vec![n], true, uniform(rng, n, 0.05, 0.95));
            Primitive::BinaryCrossEntropy {
                targets: (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect(),
            }
        }
    };
    Case {
        prim,
        shapes,
        differentiable,
        values,
    }
}

/// Evaluates `Σ w ⊙ prim(inputs)` (or the scalar output directly) and its
/// gradient with respect to the flattened differentiable inputs.
fn evaluate(case: &Case, flat: &[f64], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::<f64>::new();
    let mut off = 0;
    let mut vars: Vec<Var> = Vec::new();
    for ((shape, &diff), vals) in case.shapes.iter().zip(&case.differentiable).zip(&case.values) {
        let n: usize = shape.iter().product();
        let v = if diff {
            let v = tape.variable(shape, flat[off..off + n].to_vec())?;
            off += n;
            v
        } else {
            tape.constant(shape, vals.clone())?
        };
        vars.push(v);
    }
    let out = tape.apply(case.prim.clone(), &vars)?;
    let loss = if tape.value(out).len() == 1 && tape.shape(out).is_empty() {
        out
    } else {
        let shape = tape.shape(out).to_vec();
        let w = tape.constant(&shape, weights[..tape.value(out).len()].to_vec())?;
        let p = tape.mul(out, w)?;
        tape.sum_all(p)?
    };
    let value = tape.scalar_value(loss);
    let grads = tape.backward(loss)?;
    let mut g = Vec::with_capacity(flat.len());
    for (v, (shape, &diff)) in vars.iter().zip(case.shapes.iter().zip(&case.differentiable)) {
        if diff {
            g.extend(grads.get(*v, shape.iter().product()).unwrap());
        }
    }
    Ok((value, g))
}

/// Worst finite-difference relative error per primitive over `cases` random
/// instances each (64-bit, central differences with `step`).
pub fn primitive_gradient_errors(cases: usize, seed: u64, step: f64) -> Result<Vec<(PrimitiveKind, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Vec::new();
    for kind in PrimitiveKind::ALL {
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let case = make_case(kind, &mut rng);
            let flat: Vec<f64> = case
                .values
                .iter()
                .zip(&case.differentiable)
                .filter(|(_, &d)| d)
                .flat_map(|(v, _)| v.iter().copied())
                .collect();
            let weights = uniform(&mut rng, 64, -1.0, 1.0);
            let err = finite_diff_check(|p| evaluate(&case, p, &weights), &flat, step, None)?;
            worst = worst.max(err);
        }
        report.push((kind, worst));
    }
    Ok(report)
}
