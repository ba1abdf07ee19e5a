use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::network::{aggregate_outputs_on, cumulative_confidences_on};

/// Row-wise argmax of `[N, classes]` logits.
pub fn argmax_rows(logits: &[f64], classes: usize) -> Vec<usize> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

fn correctness(tape: &Tape, logits: Var, labels: &[usize]) -> Vec<f64> {
    let classes = tape.shape(logits)[1];
    argmax_rows(tape.value(logits), classes)
        .iter()
        .zip(labels)
        .map(|(p, y)| if p == y { 1.0 } else { 0.0 })
        .collect()
}

/// Final-exit cross-entropy, cross-entropy of the aggregated output up to
/// the second-last exit, and (optionally) binary cross-entropy between each
/// early confidence and whether its own exit classified the sample correctly.
pub fn loss_acc(
    tape: &mut Tape,
    logits: &[Var],
    conf: &[Var],
    labels: &[usize],
    regularize: bool,
) -> Result<Var> {
    let b = logits.len();
    if b == 0 || conf.len() != b {
        return Err(Error::contract(format!(
            "{b} logits with {} confidences",
            conf.len()
        )));
    }
    let mut loss = tape.cross_entropy(logits[b - 1], labels)?;
    if b == 1 {
        return Ok(loss);
    }
    let cr = cumulative_confidences_on(tape, conf)?;
    let agg = aggregate_outputs_on(tape, logits, &cr, b - 1)?;
    let ce = tape.cross_entropy(agg, labels)?;
    loss = tape.add(loss, ce)?;
    if regularize {
        for i in 0..b - 1 {
            let target = correctness(tape, logits[i], labels);
            let r = tape.bce(conf[i], &target)?;
            loss = tape.add(loss, r)?;
        }
    }
    Ok(loss)
}

/// `l(f_B, y) + λ Σ_{i<B} l(f_i, y)`.
pub fn loss_joint(tape: &mut Tape, logits: &[Var], labels: &[usize], lambda: f64) -> Result<Var> {
    let (&last, early) = logits
        .split_last()
        .ok_or_else(|| Error::contract("no exits"))?;
    let mut loss = tape.cross_entropy(last, labels)?;
    for &f in early {
        let ce = tape.cross_entropy(f, labels)?;
        let w = tape.affine(ce, lambda, 0.0)?;
        loss = tape.add(loss, w)?;
    }
    Ok(loss)
}

/// Batch mean of the recursive expected cost `γ̃_1`, where
/// `γ̃_i = c_i γ_i + (1 − c_i) γ̃_{i+1}` and `γ̃_B = γ_B`.
pub fn expected_cost_on(tape: &mut Tape, conf: &[Var], gamma: &[f64]) -> Result<Var> {
    if conf.len() != gamma.len() || conf.is_empty() {
        return Err(Error::contract(format!(
            "{} confidences for {} costs",
            conf.len(),
            gamma.len()
        )));
    }
    let b = gamma.len();
    let n = tape.shape(conf[0])[0];
    let mut g = tape.constant(vec![n, 1], vec![gamma[b - 1]; n])?;
    for i in (0..b - 1).rev() {
        let own = tape.affine(conf[i], gamma[i], 0.0)?;
        let carried = tape.mul(conf[i], g)?;
        let rest = tape.sub(g, carried)?;
        g = tape.add(own, rest)?;
    }
    tape.mean(g)
}

/// Plain-value form of [`expected_cost_on`] for one sample.
pub fn expected_cost(conf: &[f64], gamma: &[f64]) -> f64 {
    let b = gamma.len();
    let mut g = gamma[b - 1];
    for i in (0..b - 1).rev() {
        g = conf[i] * gamma[i] + (1.0 - conf[i]) * g;
    }
    g
}

/// `max(0, γ̃ − F̄_M) / (γ_B − F̄_M)`; `None` when the bound is vacuous.
pub fn loss_cost_on(
    tape: &mut Tape,
    expected: Var,
    max_macs: f64,
    gamma_last: f64,
) -> Result<Option<Var>> {
    if max_macs >= gamma_last {
        return Ok(None);
    }
    let span = gamma_last - max_macs;
    let shifted = tape.affine(expected, 1.0 / span, -max_macs / span)?;
    Ok(Some(tape.relu(shifted)?))
}

pub fn loss_cost(expected: f64, max_macs: f64, gamma_last: f64) -> f64 {
    if max_macs >= gamma_last {
        log::debug!(
            "cost bound {max_macs} is not below the final exit cost {gamma_last}; cost loss is 0"
        );
        return 0.0;
    }
    (expected - max_macs).max(0.0) / (gamma_last - max_macs)
}

/// Mean squared gap between early-exit confidences and the support-matrix
/// accuracies of each sample's class. `targets[i][n]` is the entry for exit
/// `i` and sample `n`.
pub fn loss_peak(tape: &mut Tape, conf: &[Var], targets: &[Vec<f64>]) -> Result<Var> {
    if conf.is_empty() || conf.len() != targets.len() {
        return Err(Error::contract(format!(
            "{} confidences for {} target rows",
            conf.len(),
            targets.len()
        )));
    }
    let mut total = None;
    for (&c, t) in conf.iter().zip(targets) {
        let tv = tape.constant(tape.shape(c).to_vec(), t.clone())?;
        let m = tape.mse(c, tv)?;
        total = Some(match total {
            None => m,
            Some(acc) => tape.add(acc, m)?,
        });
    }
    tape.affine(total.expect("non-empty"), 1.0 / conf.len() as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(tape: &mut Tape, v: &[f64]) -> Var {
        tape.constant(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn single_exit_is_plain_cross_entropy() {
        let mut tape = Tape::new();
        let f = tape
            .constant(vec![2, 3], vec![1.0, 2.0, 0.5, -1.0, 0.0, 3.0])
            .unwrap();
        let c = col(&mut tape, &[1.0, 1.0]);
        let l = loss_acc(&mut tape, &[f], &[c], &[1, 2], true).unwrap();
        let ce = tape.cross_entropy(f, &[1, 2]).unwrap();
        assert_eq!(tape.item(l), tape.item(ce));
        let j = loss_joint(&mut tape, &[f], &[1, 2], 0.7).unwrap();
        assert_eq!(tape.item(j), tape.item(ce));
    }

    #[test]
    fn regularizer_vanishes_at_its_target() {
        let mut tape = Tape::new();
        let f1 = tape
            .constant(vec![2, 2], vec![50.0, -50.0, -50.0, 50.0])
            .unwrap();
        let f2 = f1;
        let c1 = col(&mut tape, &[1.0, 1.0]);
        let c2 = col(&mut tape, &[1.0, 1.0]);
        let with = loss_acc(&mut tape, &[f1, f2], &[c1, c2], &[0, 1], true).unwrap();
        let without = loss_acc(&mut tape, &[f1, f2], &[c1, c2], &[0, 1], false).unwrap();
        assert!((tape.item(with) - tape.item(without)).abs() < 1e-10);
    }

    #[test]
    fn joint_with_equal_logits_doubles() {
        let mut tape = Tape::new();
        let f = tape.constant(vec![1, 3], vec![0.2, 0.1, -0.4]).unwrap();
        let one = loss_joint(&mut tape, &[f], &[2], 1.0).unwrap();
        let two = loss_joint(&mut tape, &[f, f], &[2], 1.0).unwrap();
        assert!((tape.item(two) - 2.0 * tape.item(one)).abs() < 1e-15);
        let zero = loss_joint(&mut tape, &[f, f], &[2], 0.0).unwrap();
        assert_eq!(tape.item(zero), tape.item(one));
    }

    #[test]
    fn expected_cost_examples() {
        assert_eq!(expected_cost(&[1.0, 0.3], &[2.0, 6.0]), 2.0);
        assert_eq!(expected_cost(&[0.0, 1.0], &[2.0, 6.0]), 6.0);
        assert!((expected_cost(&[0.6, 0.5, 1.0], &[1.0, 2.0, 4.0]) - 1.8).abs() < 1e-12);
        let mut tape = Tape::new();
        let c1 = col(&mut tape, &[0.6, 1.0]);
        let c2 = col(&mut tape, &[0.5, 0.0]);
        let c3 = col(&mut tape, &[1.0, 1.0]);
        let g = expected_cost_on(&mut tape, &[c1, c2, c3], &[1.0, 2.0, 4.0]).unwrap();
        assert!((tape.item(g) - (1.8 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cost_loss_examples() {
        assert_eq!(loss_cost(2.0, 2.7, 5.95), 0.0);
        assert!((loss_cost(5.95, 2.7, 5.95) - 1.0).abs() < 1e-12);
        assert!((loss_cost(4.0, 2.7, 5.95) - 0.4).abs() < 1e-12);
        assert_eq!(loss_cost(4.0, 6.0, 5.95), 0.0);
        let mut tape = Tape::new();
        let e = tape.constant(vec![1], vec![4.0]).unwrap();
        let l = loss_cost_on(&mut tape, e, 2.7, 5.95).unwrap().unwrap();
        assert!((tape.item(l) - 0.4).abs() < 1e-12);
        assert!(loss_cost_on(&mut tape, e, 6.0, 5.95).unwrap().is_none());
    }

    #[test]
    fn peak_loss_examples() {
        let mut tape = Tape::new();
        let c1 = col(&mut tape, &[1.0]);
        let c2 = col(&mut tape, &[0.0]);
        let l = loss_peak(&mut tape, &[c1, c2], &[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(tape.item(l), 1.0);
        let l = loss_peak(&mut tape, &[c1, c2], &[vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(tape.item(l), 0.0);
    }

    #[test]
    fn peak_gradient_reaches_confidences_only() {
        let mut tape = Tape::new();
        let t = crate::autodiff::Tensor::new(vec![2, 1], vec![0.3, 0.9])
            .unwrap()
            .requiring_grad();
        let c = tape.leaf(&t);
        let l = loss_peak(&mut tape, &[c], &[vec![0.5, 0.5]]).unwrap();
        let g = tape.backward(l).unwrap();
        let gc = g.get(c).unwrap();
        assert!((gc[0] - (0.3 - 0.5)).abs() < 1e-12);
        assert!((gc[1] - (0.9 - 0.5)).abs() < 1e-12);
    }
}
