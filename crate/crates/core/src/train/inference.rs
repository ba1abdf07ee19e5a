use serde::{Deserialize, Serialize};

use super::loss::argmax_rows;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::EennModel;

/// Per-sample predictions and confidences of every exit, cached from one
/// forward pass so threshold sweeps need no further inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitTable {
    pub labels: Vec<usize>,
    /// `predictions[i][n]`: class predicted by exit `i` for sample `n`.
    pub predictions: Vec<Vec<usize>>,
    /// `confidences[i][n]`; the final exit's row is all ones.
    pub confidences: Vec<Vec<f64>>,
}

impl ExitTable {
    pub fn collect(
        model: &EennModel,
        ds: &Dataset,
        indices: &[usize],
        chunk: usize,
    ) -> Result<Self> {
        let b = model.spec.exit_count();
        let classes = model.spec.classes;
        let mut table = ExitTable {
            labels: ds.batch_labels(indices),
            predictions: vec![Vec::with_capacity(indices.len()); b],
            confidences: vec![Vec::with_capacity(indices.len()); b],
        };
        for part in indices.chunks(chunk.max(1)) {
            let (logits, conf) = model.predict(&ds.batch(part))?;
            for i in 0..b {
                table.predictions[i].extend(argmax_rows(&logits[i], classes));
                table.confidences[i].extend_from_slice(&conf[i]);
            }
        }
        Ok(table)
    }

    pub fn exits(&self) -> usize {
        self.predictions.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn correct(&self, exit: usize, n: usize) -> bool {
        self.predictions[exit][n] == self.labels[n]
    }

    pub fn sample_confidences(&self, n: usize) -> Vec<f64> {
        self.confidences.iter().map(|row| row[n]).collect()
    }
}

/// Index of the exit where a sample with confidences `c` halts: the first
/// `i` whose cumulative confidence `c_i · Π_{k<i} (1 − c_k)` reaches `ε_i`.
pub fn exit_index(c: &[f64], thresholds: &[f64]) -> usize {
    let mut rest = 1.0;
    for (i, &eps) in thresholds.iter().enumerate() {
        if c[i] * rest >= eps {
            return i;
        }
        rest *= 1.0 - c[i];
    }
    thresholds.len()
}

/// Predictions and exit indices under thresholded early exiting.
pub fn early_exit_inference(
    table: &ExitTable,
    thresholds: &[f64],
) -> Result<(Vec<usize>, Vec<usize>)> {
    if thresholds.len() + 1 != table.exits() {
        return Err(Error::contract(format!(
            "{} thresholds for {} exits",
            thresholds.len(),
            table.exits()
        )));
    }
    let mut preds = Vec::with_capacity(table.len());
    let mut exits = Vec::with_capacity(table.len());
    for n in 0..table.len() {
        let e = exit_index(&table.sample_confidences(n), thresholds);
        preds.push(table.predictions[e][n]);
        exits.push(e);
    }
    Ok((preds, exits))
}

/// `F_M = Σ γ_i U_i`.
pub fn adaptive_macs(gamma: &[f64], utilization: &[f64]) -> Result<f64> {
    if gamma.len() != utilization.len() {
        return Err(Error::contract(format!(
            "{} costs for {} utilizations",
            gamma.len(),
            utilization.len()
        )));
    }
    let total: f64 = utilization.iter().sum();
    if (total - 1.0).abs() > 1e-9 || utilization.iter().any(|&u| u < 0.0) {
        return Err(Error::contract(format!(
            "utilizations {utilization:?} do not form a partition"
        )));
    }
    Ok(gamma.iter().zip(utilization).map(|(g, u)| g * u).sum())
}

/// Accuracy, utilization and adaptive MACs of one threshold vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub thresholds: Vec<f64>,
    pub correct: usize,
    pub accuracy: f64,
    pub utilization: Vec<f64>,
    pub macs: f64,
}

pub fn evaluate_thresholds(
    table: &ExitTable,
    gamma: &[f64],
    thresholds: &[f64],
) -> Result<ThresholdOutcome> {
    let (preds, exits) = early_exit_inference(table, thresholds)?;
    if table.is_empty() {
        return Err(Error::contract("evaluation on an empty sample set"));
    }
    let n = table.len() as f64;
    let correct = preds
        .iter()
        .zip(&table.labels)
        .filter(|(p, y)| p == y)
        .count();
    let mut counts = vec![0usize; table.exits()];
    for e in exits {
        counts[e] += 1;
    }
    let utilization: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let macs = adaptive_macs(gamma, &utilization)?;
    Ok(ThresholdOutcome {
        thresholds: thresholds.to_vec(),
        correct,
        accuracy: correct as f64 / n,
        utilization,
        macs,
    })
}

/// Threshold grid step.
pub const GRID_STEPS: usize = 10;

fn grid_value(k: usize) -> f64 {
    k as f64 / GRID_STEPS as f64
}

/// Grid search for the most accurate thresholds (ties: fewer MACs, then
/// lexicographically smallest), then, from the second-last exit backwards,
/// lowers each threshold one grid step at a time while the MAC bound is
/// violated and the accuracy bound still holds.
pub fn tune_thresholds(
    table: &ExitTable,
    gamma: &[f64],
    min_accuracy: f64,
    max_macs: Option<f64>,
) -> Result<ThresholdOutcome> {
    let m = table.exits().saturating_sub(1);
    let mut ks = vec![0usize; m];
    let mut best: Option<(Vec<usize>, ThresholdOutcome)> = None;
    loop {
        let eps: Vec<f64> = ks.iter().map(|&k| grid_value(k)).collect();
        let out = evaluate_thresholds(table, gamma, &eps)?;
        let better = match &best {
            None => true,
            Some((_, b)) => {
                out.correct > b.correct || (out.correct == b.correct && out.macs < b.macs)
            }
        };
        if better {
            best = Some((ks.clone(), out));
        }
        let Some(pos) = (0..m).rev().find(|&i| ks[i] + 1 < GRID_STEPS) else {
            break;
        };
        ks[pos] += 1;
        ks[pos + 1..].iter_mut().for_each(|k| *k = 0);
    }
    let (mut ks, mut out) = best.expect("grid is non-empty");
    let Some(bound) = max_macs else {
        return Ok(out);
    };
    for i in (0..m).rev() {
        if out.macs <= bound {
            break;
        }
        while out.macs > bound && ks[i] > 0 {
            let mut trial = ks.clone();
            trial[i] -= 1;
            let eps: Vec<f64> = trial.iter().map(|&k| grid_value(k)).collect();
            let next = evaluate_thresholds(table, gamma, &eps)?;
            if next.accuracy < min_accuracy {
                break;
            }
            ks = trial;
            out = next;
        }
    }
    Ok(out)
}

/// Expected calibration error in percent over equal-width confidence bins.
pub fn compute_ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<f64> {
    if confidences.is_empty() || confidences.len() != correct.len() || bins == 0 {
        return Err(Error::contract(format!(
            "ECE over {} confidences and {} outcomes",
            confidences.len(),
            correct.len()
        )));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::contract(format!("confidence {c} outside [0, 1]")));
    }
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ((c * bins as f64) as usize).min(bins - 1);
        conf_sum[b] += c;
        hits[b] += if ok { 1.0 } else { 0.0 };
        count[b] += 1;
    }
    let n = confidences.len() as f64;
    let ece: f64 = (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (conf_sum[b] - hits[b]).abs() / n)
        .sum();
    Ok(100.0 * ece)
}

/// Per-class, per-exit accuracy on a class-balanced probe set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportMatrix {
    /// `rows[class][exit]`.
    pub rows: Vec<Vec<f64>>,
}

impl SupportMatrix {
    pub fn from_table(table: &ExitTable, classes: usize) -> Result<Self> {
        let mut hits = vec![vec![0.0; table.exits()]; classes];
        let mut count = vec![0usize; classes];
        for n in 0..table.len() {
            let y = table.labels[n];
            count[y] += 1;
            for (i, h) in hits[y].iter_mut().enumerate() {
                if table.correct(i, n) {
                    *h += 1.0;
                }
            }
        }
        if let Some(c) = count.iter().position(|&c| c == 0) {
            return Err(Error::contract(format!(
                "class {c} is absent from the support set"
            )));
        }
        for (row, &c) in hits.iter_mut().zip(&count) {
            row.iter_mut().for_each(|h| *h /= c as f64);
        }
        Ok(SupportMatrix { rows: hits })
    }

    pub fn compute(model: &EennModel, ds: &Dataset, support: &[usize]) -> Result<Self> {
        let table = ExitTable::collect(model, ds, support, 256)?;
        Self::from_table(&table, ds.classes())
    }

    /// `targets[i][n] = SM[labels[n]][i]` for the early exits.
    pub fn targets(&self, labels: &[usize]) -> Vec<Vec<f64>> {
        let early = self.rows[0].len() - 1;
        (0..early)
            .map(|i| labels.iter().map(|&y| self.rows[y][i]).collect())
            .collect()
    }
}
