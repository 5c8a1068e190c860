use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn matmul_identity() {
    let mut t = Tape::<f64>::new();
    let eye = t.constant(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
    let x = t.constant(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
    let y = t.matmul(eye, x).unwrap();
    assert_eq!(t.value(y), t.value(x));
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_vec(&mut rng, 20);
    let b = rand_vec(&mut rng, 15);
    let mut t = Tape::<f64>::new();
    let va = t.constant(&[4, 5], a.clone()).unwrap();
    let vb = t.constant(&[5, 3], b.clone()).unwrap();
    let c = t.matmul(va, vb).unwrap();
    let oracle = naive_matmul(&a, &b, 4, 5, 3);
    for (x, y) in t.value(c).iter().zip(&oracle) {
        assert!((x - y).abs() < 1e-12);
    }
    // transposed operands read the same logical matrices
    let at: Vec<f64> = (0..20).map(|i| a[(i % 4) * 5 + i / 4]).collect();
    let vat = t.constant(&[5, 4], at).unwrap();
    let c2 = t.matmul_t(vat, vb, true, false).unwrap();
    for (x, y) in t.value(c2).iter().zip(&oracle) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn matmul_shape_error_names_primitive() {
    let mut t = Tape::<f64>::new();
    let a = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let err = t.matmul(a, a).unwrap_err();
    match err {
        Error::Dimension { op, shapes } => {
            assert_eq!(op, "matmul");
            assert_eq!(shapes, vec![vec![2, 3], vec![2, 3]]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn layer_norm_constant_row_maps_to_beta() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(&[1, 4], vec![5.0; 4]).unwrap();
    let g = t.constant(&[4], vec![1.0; 4]).unwrap();
    let b = t.constant(&[4], vec![0.0; 4]).unwrap();
    let y = t.layer_norm(x, g, b).unwrap();
    assert_eq!(t.value(y), &[0.0; 4]);
    let b2 = t.constant(&[4], vec![0.5, -1.0, 2.0, 3.0]).unwrap();
    let y2 = t.layer_norm(x, g, b2).unwrap();
    assert_eq!(t.value(y2), &[0.5, -1.0, 2.0, 3.0]);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(&[2], vec![0.0, 0.0]).unwrap();
    let y = t.softmax_lastdim(x).unwrap();
    assert_eq!(t.value(y), &[0.5, 0.5]);
}

#[test]
fn sum_gradient_is_ones() {
    let mut t = Tape::<f64>::new();
    let x = t.variable(&[4], vec![0.3, -2.0, 1.0, 7.0]).unwrap();
    let s = t.sum_all(x).unwrap();
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(x, 4).unwrap(), vec![1.0; 4]);
}

#[test]
fn mse_masked_at_optimum_has_zero_grads() {
    let mut t = Tape::<f64>::new();
    let p = t.variable(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
    let tg = t.variable(&[3, 3], vec![9., 9., 9., 1., 2., 3., 4., 5., 6.]).unwrap();
    let l = t.mse_masked(p, tg, &[1, 2]).unwrap();
    assert_eq!(t.scalar_value(l), 0.0);
    let g = t.backward(l).unwrap();
    assert!(g.get(p, 6).unwrap().iter().all(|&v| v == 0.0));
    assert!(g.get(tg, 9).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn unused_leaf_gets_exact_zero() {
    let mut t = Tape::<f64>::new();
    let x = t.variable(&[2], vec![1.0, 2.0]).unwrap();
    let unused = t.variable(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let s = t.sum_all(x).unwrap();
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(unused, 3).unwrap(), vec![0.0; 3]);
}

#[test]
fn dropout_identity_cases() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(&[5], vec![1., 2., 3., 4., 5.]).unwrap();
    let a = t.dropout(x, 0.0, 1, true).unwrap();
    let b = t.dropout(x, 0.9, 1, false).unwrap();
    assert_eq!(t.value(a), t.value(x));
    assert_eq!(t.value(b), t.value(x));
    let c = t.dropout(x, 0.5, 3, true).unwrap();
    for (&o, &i) in t.value(c).iter().zip(t.value(x)) {
        assert!(o == 0.0 || o == 2.0 * i);
    }
}

fn zero_gru(tape: &mut Tape<f64>, input: usize, hidden: usize, bias_z: f64) -> GruVars {
    let mut z = |shape: &[usize], v: f64| tape.constant(shape, vec![v; shape.iter().product()]).unwrap();
    GruVars {
        w_z: z(&[input, hidden], 0.0),
        u_z: z(&[hidden, hidden], 0.0),
        b_z: z(&[hidden], bias_z),
        w_r: z(&[input, hidden], 0.0),
        u_r: z(&[hidden, hidden], 0.0),
        b_r: z(&[hidden], 0.0),
        w_h: z(&[input, hidden], 0.0),
        u_h: z(&[hidden, hidden], 0.0),
        b_h: z(&[hidden], 0.0),
    }
}

#[test]
fn gru_zero_params_halves_hidden() {
    let mut t = Tape::<f64>::new();
    let p = zero_gru(&mut t, 3, 2, 0.0);
    let x = t.constant(&[1, 3], vec![0.4, -1.0, 2.0]).unwrap();
    let h = t.constant(&[1, 2], vec![1.0, 1.0]).unwrap();
    let h2 = gru_cell(&mut t, x, h, &p).unwrap();
    assert_eq!(t.value(h2), &[0.5, 0.5]);
}

#[test]
fn gru_closed_update_gate_keeps_state() {
    let mut t = Tape::<f64>::new();
    let p = zero_gru(&mut t, 2, 3, -40.0);
    let x = t.constant(&[1, 2], vec![3.0, -3.0]).unwrap();
    let h = t.constant(&[1, 3], vec![0.2, -0.7, 1.5]).unwrap();
    let h2 = gru_cell(&mut t, x, h, &p).unwrap();
    for (a, b) in t.value(h2).iter().zip(t.value(h)) {
        assert!((a - b).abs() < 1e-6);
    }
}

/// Direct scalar evaluation of the GRU equations; weights `[in,H]`/`[H,H]`.
pub(crate) fn gru_scalar_oracle(x: &[f64], h: &[f64], w: &[Vec<f64>; 9]) -> Vec<f64> {
    let (ni, nh) = (x.len(), h.len());
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let lin = |wx: &[f64], uh: &[f64], b: &[f64], xin: &[f64], hin: &[f64], j: usize| {
        let mut s = b[j];
        for i in 0..ni {
            s += xin[i] * wx[i * nh + j];
        }
        for i in 0..nh {
            s += hin[i] * uh[i * nh + j];
        }
        s
    };
    let mut out = vec![0.0; nh];
    let r: Vec<f64> = (0..nh).map(|j| sig(lin(&w[3], &w[4], &w[5], x, h, j))).collect();
    let rh: Vec<f64> = (0..nh).map(|j| r[j] * h[j]).collect();
    for j in 0..nh {
        let z = sig(lin(&w[0], &w[1], &w[2], x, h, j));
        let cand = lin(&w[6], &w[7], &w[8], x, &rh, j).tanh();
        out[j] = (1.0 - z) * h[j] + z * cand;
    }
    out
}

#[test]
fn gru_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (ni, nh) = (3, 3);
    let shapes = [
        vec![ni, nh],
        vec![nh, nh],
        vec![nh],
        vec![ni, nh],
        vec![nh, nh],
        vec![nh],
        vec![ni, nh],
        vec![nh, nh],
        vec![nh],
    ];
    let w: [Vec<f64>; 9] = std::array::from_fn(|i| rand_vec(&mut rng, shapes[i].iter().product()));
    let x = rand_vec(&mut rng, ni);
    let h = rand_vec(&mut rng, nh);
    let mut t = Tape::<f64>::new();
    let v: Vec<Var> = (0..9).map(|i| t.constant(&shapes[i], w[i].clone()).unwrap()).collect();
    let p = GruVars {
        w_z: v[0],
        u_z: v[1],
        b_z: v[2],
        w_r: v[3],
        u_r: v[4],
        b_r: v[5],
        w_h: v[6],
        u_h: v[7],
        b_h: v[8],
    };
    let xv = t.constant(&[1, ni], x.clone()).unwrap();
    let hv = t.constant(&[1, nh], h.clone()).unwrap();
    let out = gru_cell(&mut t, xv, hv, &p).unwrap();
    let oracle = gru_scalar_oracle(&x, &h, &w);
    for (a, b) in t.value(out).iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn gru_dimension_mismatch() {
    let mut t = Tape::<f64>::new();
    let p = zero_gru(&mut t, 3, 2, 0.0);
    let x = t.constant(&[1, 4], vec![0.0; 4]).unwrap();
    let h = t.constant(&[1, 2], vec![0.0; 2]).unwrap();
    assert!(matches!(gru_cell(&mut t, x, h, &p), Err(Error::Dimension { .. })));
}

#[test]
fn finite_diff_of_square() {
    let err = finite_diff_check(|p| Ok((p[0] * p[0], vec![2.0 * p[0]])), &[3.0], 1e-5, None).unwrap();
    assert!(err < 1e-9);
    assert!(finite_diff_check(|p| Ok((p[0], vec![1.0])), &[1.0], 0.0, None).is_err());
    assert!(finite_diff_check(|_| Ok((f64::NAN, vec![1.0])), &[1.0], 1e-5, None).is_err());
}

#[test]
fn backward_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let xs = rand_vec(&mut rng, 6);
        let wv = rand_vec(&mut rng, 6);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let grad_of = |ca: f64, cb: f64| {
            let mut t = Tape::<f64>::new();
            let x = t.variable(&[2, 3], xs.clone()).unwrap();
            let w = t.constant(&[2, 3], wv.clone()).unwrap();
            let f1 = t.tanh(x).unwrap();
            let f1 = t.mul(f1, w).unwrap();
            let f = t.sum_all(f1).unwrap();
            let g1 = t.softmax_lastdim(x).unwrap();
            let g1 = t.mul(g1, w).unwrap();
            let g = t.sum_all(g1).unwrap();
            let fa = t.scale(f, ca).unwrap();
            let gb = t.scale(g, cb).unwrap();
            let l = t.add(fa, gb).unwrap();
            t.backward(l).unwrap().get(x, 6).unwrap()
        };
        let combo = grad_of(a, b);
        let gf = grad_of(1.0, 0.0);
        let gg = grad_of(0.0, 1.0);
        for i in 0..6 {
            assert!((combo[i] - (a * gf[i] + b * gg[i])).abs() < 1e-10);
        }
    }
}

#[test]
fn deterministic_forward_and_backward() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = Tape::<f32>::new();
        let x = t.variable(&[4, 8], (0..32).map(|_| rng.gen::<f32>()).collect()).unwrap();
        let w = t.variable(&[8, 8], (0..64).map(|_| rng.gen::<f32>() - 0.5).collect()).unwrap();
        let y = t.matmul(x, w).unwrap();
        let y = t.gelu(y).unwrap();
        let y = t.dropout(y, 0.3, 9, true).unwrap();
        let l = t.sum_all(y).unwrap();
        let lv = t.scalar_value(l);
        let g = t.backward(l).unwrap();
        (lv.to_bits(), g.get(w, 64).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}
