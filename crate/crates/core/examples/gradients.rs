//! Reverse-mode gradients of a small conv net against central differences.
//!
//! cargo run --release --example gradients

use eenas::autodiff::{he_uniform, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(x: &Tensor, w: &Tensor, b: &Tensor, v: &Tensor, c: &Tensor, labels: &[usize]) -> f64 {
    let mut tape = Tape::no_grad();
    let out = forward(&mut tape, x, w, b, v, c, labels);
    tape.item(out.0)
}

fn forward(
    tape: &mut Tape,
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    v: &Tensor,
    c: &Tensor,
    labels: &[usize],
) -> (eenas::autodiff::Var, eenas::autodiff::Var) {
    let (x, w, b, v, c) = (
        tape.leaf(x),
        tape.leaf(w),
        tape.leaf(b),
        tape.leaf(v),
        tape.leaf(c),
    );
    let h = tape.conv2d(x, w, b, 1, 1).unwrap();
    let h = tape.relu(h).unwrap();
    let h = tape.maxpool2d(h, 2).unwrap();
    let h = tape.flatten(h).unwrap();
    let logits = tape.dense(h, v, c).unwrap();
    (tape.cross_entropy(logits, labels).unwrap(), w)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::new(
        vec![2, 3, 6, 6],
        (0..216).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let w = he_uniform(vec![4, 3, 3, 3], 27, &mut rng).requiring_grad();
    let b = Tensor::zeros(vec![4]);
    let v = he_uniform(vec![5, 36], 36, &mut rng);
    let c = Tensor::zeros(vec![5]);
    let labels = [1, 4];

    let mut tape = Tape::new();
    let (out, wv) = forward(&mut tape, &x, &w, &b, &v, &c, &labels);
    println!("cross-entropy {:.6}", tape.item(out));
    let grads = tape.backward(out).unwrap();
    let analytic = grads.get(wv).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in (0..w.numel()).step_by(9) {
        let bump = |d: f64| {
            let mut data = w.data().to_vec();
            data[i] += d;
            Tensor::new(w.shape().to_vec(), data).unwrap()
        };
        let numeric = (loss(&x, &bump(h), &b, &v, &c, &labels)
            - loss(&x, &bump(-h), &b, &v, &c, &labels))
            / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(err);
        println!(
            "dL/dw[{i:>3}] tape {:+.8}  finite difference {numeric:+.8}",
            analytic[i]
        );
    }
    println!("largest relative error {worst:.2e}");
}
