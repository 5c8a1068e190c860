//! Builds a two-layer classifier on the tape and compares its reverse-mode
//! gradient with central differences, then runs the full primitive suite.
//!
//! cargo run --example gradcheck -- [cases]

use iajepa::gradfab::{finite_diff_check, Tape};
use iajepa::selfcheck::primitive_gradient_errors;

const IN: usize = 5;
const HID: usize = 7;
const CLASSES: usize = 3;

/// Mean cross-entropy of `x` through linear, layer norm, gelu, linear.
fn loss_and_grad(flat: &[f64], x: &[f64], labels: &[usize]) -> iajepa::Result<(f64, Vec<f64>)> {
    let mut tape = Tape::<f64>::new();
    let mut off = 0;
    let mut take = |tape: &mut Tape<f64>, shape: &[usize]| {
        let n: usize = shape.iter().product();
        let v = tape.variable(shape, flat[off..off + n].to_vec());
        off += n;
        v
    };
    let w1 = take(&mut tape, &[IN, HID])?;
    let g = take(&mut tape, &[HID])?;
    let b = take(&mut tape, &[HID])?;
    let w2 = take(&mut tape, &[HID, CLASSES])?;
    let xs = tape.constant(&[labels.len(), IN], x.to_vec())?;
    let h = tape.matmul(xs, w1)?;
    let h = tape.layer_norm(h, g, b)?;
    let h = tape.gelu(h)?;
    let logits = tape.matmul(h, w2)?;
    let loss = tape.cross_entropy(logits, labels)?;
    let value = tape.scalar_value(loss);
    let grads = tape.backward(loss)?;
    let mut out = Vec::with_capacity(flat.len());
    for (v, n) in [(w1, IN * HID), (g, HID), (b, HID), (w2, HID * CLASSES)] {
        out.extend(grads.get(v, n).expect("variable leaf"));
    }
    Ok((value, out))
}

fn main() -> iajepa::Result<()> {
    let cases: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let n = IN * HID + 2 * HID + HID * CLASSES;
    let params: Vec<f64> = (0..n).map(|i| ((i * 37 % 17) as f64 - 8.0) / 10.0 + if (IN * HID..IN * HID + HID).contains(&i) { 1.0 } else { 0.0 }).collect();
    let x: Vec<f64> = (0..4 * IN).map(|i| ((i * 13 % 11) as f64 - 5.0) / 4.0).collect();
    let labels = [0, 2, 1, 2];
    let err = finite_diff_check(|p| loss_and_grad(p, &x, &labels), &params, 1e-5, None)?;
    println!("two-layer classifier: max relative error {err:.3e} over {n} parameters");

    for (kind, e) in primitive_gradient_errors(cases, 0, 1e-5)? {
        println!("{:<22} {e:.3e}", format!("{kind:?}"));
    }
    Ok(())
}
