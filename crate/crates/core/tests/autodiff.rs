mod common;

use common::gradcheck::{
    loss_worst, network_worst, primitive_worst, LOSSES, PRIMITIVES, TOLERANCE,
};
use eenas::autodiff::{Primitive, Tape, Tensor};

#[test]
fn every_primitive_matches_central_differences() {
    for (k, name) in PRIMITIVES.iter().enumerate() {
        let worst = primitive_worst(name, 100 + k as u64);
        assert!(worst <= TOLERANCE, "{name}: relative error {worst:e}");
    }
}

#[test]
fn every_loss_matches_central_differences() {
    for (k, name) in LOSSES.iter().enumerate() {
        let worst = loss_worst(name, 200 + k as u64);
        assert!(worst <= TOLERANCE, "{name}: relative error {worst:e}");
    }
}

#[test]
fn network_loss_matches_central_differences() {
    let worst = network_worst(300, 5, 40);
    assert!(worst <= TOLERANCE, "relative error {worst:e}");
}

#[test]
fn apply_dispatches_like_the_named_methods() {
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.5]).unwrap();
    let mut tape = Tape::new();
    let v = tape.leaf(&x);
    let a = tape.apply(&Primitive::Softmax, &[v]).unwrap();
    let b = tape.softmax(v).unwrap();
    assert_eq!(tape.value(a), tape.value(b));
    let a = tape
        .apply(&Primitive::CrossEntropy { labels: vec![2, 1] }, &[v])
        .unwrap();
    let b = tape.cross_entropy(v, &[2, 1]).unwrap();
    assert_eq!(tape.value(a), tape.value(b));
    assert!(tape.apply(&Primitive::Add, &[v]).is_err());
}

#[test]
fn forward_and_gradients_are_bit_identical_across_runs() {
    let run = || {
        let x = Tensor::new(
            vec![1, 2, 4, 4],
            (0..32).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        let w = Tensor::new(
            vec![3, 2, 3, 3],
            (0..54).map(|i| (i as f64 * 0.11).cos()).collect(),
        )
        .unwrap()
        .requiring_grad();
        let b = Tensor::new(vec![3], vec![0.1, -0.2, 0.3])
            .unwrap()
            .requiring_grad();
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.leaf(&x), tape.leaf(&w), tape.leaf(&b));
        let h = tape.conv2d(xv, wv, bv, 1, 1).unwrap();
        let h = tape.relu(h).unwrap();
        let h = tape.flatten(h).unwrap();
        let l = tape.cross_entropy(h, &[5]).unwrap();
        let g = tape.backward(l).unwrap();
        (
            tape.item(l).to_bits(),
            g.get(wv)
                .unwrap()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}
