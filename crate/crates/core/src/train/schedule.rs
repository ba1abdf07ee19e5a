use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, TrainMode};
use super::inference::{compute_ece, tune_thresholds, ExitTable, SupportMatrix};
use super::loss::{
    argmax_rows, expected_cost, expected_cost_on, loss_acc, loss_cost_on, loss_joint, loss_peak,
};
use crate::autodiff::{Optimizer, ParamSet, Tape, Var};
use crate::data::{batches, support_set, Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{CostVector, EennModel, EennSpec, ForwardMode};

const EVAL_CHUNK: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: u8,
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug)]
pub struct TrainedModel {
    pub model: EennModel,
    pub trace: Vec<EpochRecord>,
    /// Position in `trace` of the checkpoint that was kept.
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Copy)]
struct Terms {
    acc: f64,
    cost: f64,
    peak: f64,
    final_only: bool,
}

fn batch_loss(
    model: &EennModel,
    cfg: &TrainConfig,
    ds: &Dataset,
    idx: &[usize],
    terms: Terms,
    sm: Option<&SupportMatrix>,
    tape: &mut Tape,
) -> Result<(Var, crate::model::ForwardOutputs)> {
    let x = ds.batch(idx);
    let labels = ds.batch_labels(idx);
    let mode = if terms.final_only {
        ForwardMode::FinalOnly
    } else {
        ForwardMode::All
    };
    let out = model.forward(tape, &x, mode)?;
    if terms.final_only {
        let l = tape.cross_entropy(*out.logits.last().expect("final exit"), &labels)?;
        return Ok((l, out));
    }
    let mut loss = match cfg.mode {
        TrainMode::Staged => loss_acc(
            tape,
            &out.logits,
            &out.confidences,
            &labels,
            cfg.exit_regularizer,
        )?,
        TrainMode::Joint => {
            let mut l = loss_joint(tape, &out.logits, &labels, cfg.lambda_e)?;
            if cfg.exit_regularizer && out.logits.len() > 1 {
                let early = out.logits.len() - 1;
                l = add_regularizers(
                    tape,
                    l,
                    &out.logits[..early],
                    &out.confidences[..early],
                    &labels,
                )?;
            }
            l
        }
    };
    loss = tape.affine(loss, terms.acc, 0.0)?;
    let gamma = model.spec.gamma.as_slice();
    if terms.cost > 0.0 {
        if let Some(bound) = cfg.max_macs {
            let g = expected_cost_on(tape, &out.confidences, gamma)?;
            if let Some(lc) = loss_cost_on(tape, g, bound, model.spec.gamma.last())? {
                let w = tape.affine(lc, terms.cost, 0.0)?;
                loss = tape.add(loss, w)?;
            }
        }
    }
    if terms.peak > 0.0 && out.confidences.len() > 1 {
        let sm = sm.ok_or_else(|| Error::contract("peak loss without a support matrix"))?;
        let early = out.confidences.len() - 1;
        let lp = loss_peak(tape, &out.confidences[..early], &sm.targets(&labels))?;
        let w = tape.affine(lp, terms.peak, 0.0)?;
        loss = tape.add(loss, w)?;
    }
    Ok((loss, out))
}

fn add_regularizers(
    tape: &mut Tape,
    mut loss: Var,
    logits: &[Var],
    conf: &[Var],
    labels: &[usize],
) -> Result<Var> {
    for (&f, &c) in logits.iter().zip(conf) {
        let classes = tape.shape(f)[1];
        let target: Vec<f64> = argmax_rows(tape.value(f), classes)
            .iter()
            .zip(labels)
            .map(|(p, y)| if p == y { 1.0 } else { 0.0 })
            .collect();
        let r = tape.bce(c, &target)?;
        loss = tape.add(loss, r)?;
    }
    Ok(loss)
}

fn run_epoch(
    model: &mut EennModel,
    cfg: &TrainConfig,
    ds: &Dataset,
    train: &[usize],
    terms: Terms,
    sm: Option<&SupportMatrix>,
    opt: &mut Optimizer,
    trainable: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut total = 0.0;
    let mut seen = 0usize;
    for idx in batches(train, cfg.batch_size, rng) {
        let mut tape = Tape::new();
        let (loss, out) = batch_loss(model, cfg, ds, &idx, terms, sm, &mut tape)?;
        total += tape.item(loss) * idx.len() as f64;
        seen += idx.len();
        let grads = tape.backward(loss)?;
        model.accumulate_grads(&grads, &out)?;
        fill_missing_grads(&mut model.params, trainable);
        opt.step(&mut model.params.select_mut(trainable))?;
    }
    Ok(total / seen.max(1) as f64)
}

/// Parameters that did not reach the loss (e.g. a confidence head whose
/// term is switched off) take a zero gradient.
fn fill_missing_grads(params: &mut ParamSet, trainable: &[usize]) {
    for &i in trainable {
        let t = params.tensor_mut(i);
        if t.grad().is_none() {
            let zeros = vec![0.0; t.numel()];
            t.accumulate_grad(&zeros).expect("matching length");
        }
    }
}

fn validation_loss(
    model: &EennModel,
    cfg: &TrainConfig,
    ds: &Dataset,
    split: &Split,
    support: &[usize],
) -> Result<f64> {
    let sm = if cfg.weights[2] > 0.0 && model.spec.exit_count() > 1 {
        Some(SupportMatrix::compute(model, ds, support)?)
    } else {
        None
    };
    let terms = Terms {
        acc: cfg.weights[0],
        cost: cfg.weights[1],
        peak: cfg.weights[2],
        final_only: false,
    };
    let mut total = 0.0;
    for part in split.validation.chunks(EVAL_CHUNK) {
        let mut tape = Tape::new();
        let (loss, _) = batch_loss(model, cfg, ds, part, terms, sm.as_ref(), &mut tape)?;
        total += tape.item(loss) * part.len() as f64;
    }
    Ok(total / split.validation.len() as f64)
}

/// Trains `spec` from a seeded initialization and keeps the weights of the
/// epoch with the lowest validation loss.
pub fn train_eenn(
    spec: &EennSpec,
    ds: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(Error::contract(
            "training needs non-empty training and validation splits",
        ));
    }
    if let Some(bound) = cfg.max_macs {
        if bound >= spec.gamma.last() {
            log::debug!(
                "cost bound {bound} is not below the final exit cost {}; cost loss is 0",
                spec.gamma.last()
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = EennModel::init(spec.clone(), cfg.seed)?;
    let mut support = support_set(ds, &split.train, cfg.support_per_class, &mut rng)?;
    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut record = |model: &EennModel,
                      phase: u8,
                      epoch: usize,
                      train_loss: f64,
                      support: &[usize],
                      trace: &mut Vec<EpochRecord>|
     -> Result<()> {
        let validation_loss = validation_loss(model, cfg, ds, split, support)?;
        log::debug!(
            "phase {phase} epoch {epoch}: train {train_loss:.4} validation {validation_loss:.4}"
        );
        trace.push(EpochRecord {
            phase,
            epoch,
            train_loss,
            validation_loss,
        });
        if best.as_ref().is_none_or(|b| validation_loss < b.0) {
            best = Some((validation_loss, trace.len() - 1, model.params.clone()));
        }
        Ok(())
    };
    let all = model.all_param_indices();
    let phases: Vec<(u8, usize, Terms, Vec<usize>)> = match cfg.mode {
        TrainMode::Staged => vec![
            (
                1,
                cfg.epochs[0],
                Terms {
                    acc: 1.0,
                    cost: 0.0,
                    peak: 0.0,
                    final_only: true,
                },
                model.backbone_param_indices(),
            ),
            (
                2,
                cfg.epochs[1],
                Terms {
                    acc: cfg.weights[0],
                    cost: cfg.weights[1],
                    peak: 0.0,
                    final_only: false,
                },
                all.clone(),
            ),
            (
                3,
                cfg.epochs[2],
                Terms {
                    acc: cfg.weights[0],
                    cost: cfg.weights[1],
                    peak: cfg.weights[2],
                    final_only: false,
                },
                all,
            ),
        ],
        TrainMode::Joint => vec![(
            1,
            cfg.epochs.iter().sum(),
            Terms {
                acc: 1.0,
                cost: 0.0,
                peak: 0.0,
                final_only: false,
            },
            all,
        )],
    };
    for (phase, epochs, terms, trainable) in phases {
        let mut opt = Optimizer::adam(cfg.learning_rate);
        for epoch in 0..epochs {
            let sm = if terms.peak > 0.0 && model.spec.exit_count() > 1 {
                support = support_set(ds, &split.train, cfg.support_per_class, &mut rng)?;
                Some(SupportMatrix::compute(&model, ds, &support)?)
            } else {
                None
            };
            let loss = run_epoch(
                &mut model,
                cfg,
                ds,
                &split.train,
                terms,
                sm.as_ref(),
                &mut opt,
                &trainable,
                &mut rng,
            )?;
            record(&model, phase, epoch, loss, &support, &mut trace)?;
        }
    }
    let best_epoch = best.as_ref().map(|b| b.1);
    if let Some((_, _, params)) = best {
        model.params = params;
    }
    Ok(TrainedModel {
        model,
        trace,
        best_epoch,
    })
}

/// Measured quality and cost of a trained candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// Top-1 fraction with early exiting.
    pub accuracy: f64,
    /// Top-1 fraction of the final exit alone.
    pub backbone_accuracy: f64,
    /// Adaptive MACs per sample.
    pub macs: f64,
    pub utilization: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Per-exit ECE in percent.
    pub ece: Vec<f64>,
    pub gamma: CostVector,
    /// Validation mean of the confidence-weighted expected cost.
    pub expected_cost: f64,
    /// Mean |c_i − SM| over early exits on validation; 0 without early exits.
    pub peak_gap: f64,
    pub epochs_trained: usize,
}

/// Caches exit outputs on the validation split, tunes thresholds and
/// gathers the evaluation record.
pub fn evaluate(
    trained: &TrainedModel,
    ds: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(EvaluationResult, ExitTable)> {
    let model = &trained.model;
    let table = ExitTable::collect(model, ds, &split.validation, EVAL_CHUNK)?;
    let gamma = model.spec.gamma.clone();
    let tuned = tune_thresholds(&table, gamma.as_slice(), cfg.min_accuracy, cfg.max_macs)?;
    let b = table.exits();
    let backbone_accuracy = (0..table.len())
        .filter(|&n| table.correct(b - 1, n))
        .count() as f64
        / table.len() as f64;
    let ece = (0..b)
        .map(|i| {
            let ok: Vec<bool> = (0..table.len()).map(|n| table.correct(i, n)).collect();
            compute_ece(&table.confidences[i], &ok, 10)
        })
        .collect::<Result<Vec<_>>>()?;
    let expected = (0..table.len())
        .map(|n| expected_cost(&table.sample_confidences(n), gamma.as_slice()))
        .sum::<f64>()
        / table.len() as f64;
    let peak_gap = if b > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
        let support = support_set(ds, &split.train, cfg.support_per_class, &mut rng)?;
        let sm = SupportMatrix::compute(model, ds, &support)?;
        let mut gap = 0.0;
        for n in 0..table.len() {
            for i in 0..b - 1 {
                gap += (table.confidences[i][n] - sm.rows[table.labels[n]][i]).abs();
            }
        }
        gap / (table.len() * (b - 1)) as f64
    } else {
        0.0
    };
    let result = EvaluationResult {
        accuracy: tuned.accuracy,
        backbone_accuracy,
        macs: tuned.macs,
        utilization: tuned.utilization,
        thresholds: tuned.thresholds,
        ece,
        gamma,
        expected_cost: expected,
        peak_gap,
        epochs_trained: trained.trace.len(),
    };
    Ok((result, table))
}
