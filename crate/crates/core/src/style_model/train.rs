//! Mini-batch training with early stopping on dev weighted accuracy.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classifier::StyleClassifier;
use super::metrics::Metrics;
use super::weights::{count_labels, ClassWeights, DEFAULT_NEUTRAL_CAP};
use crate::corpus::{FeatureBundle, NormMode, NormStats};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, gradient_error, Adam, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub neutral_cap: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 32, lr: 1e-3, patience: 20, clip_norm: 5.0, neutral_cap: DEFAULT_NEUTRAL_CAP, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_weighted_acc: f64,
    pub dev_unweighted_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The checkpoint with the best dev weighted accuracy.
    pub model: StyleClassifier,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub weights: ClassWeights,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,dev_weighted_acc,dev_unweighted_acc\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.dev_weighted_acc, r.dev_unweighted_acc);
    }
    out
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

/// Normalizes each bundle with the statistics of its own corpus.
pub fn normalize_by_corpus(bundles: &[FeatureBundle], stats: &[NormStats], mode: NormMode) -> Result<Vec<FeatureBundle>> {
    bundles
        .iter()
        .map(|b| {
            if mode == NormMode::None {
                return Ok(b.clone());
            }
            let st = stats
                .iter()
                .find(|s| s.corpus_id == b.corpus)
                .ok_or_else(|| Error::invalid(format!("{}: no normalization statistics for corpus `{}`", b.id, b.corpus)))?;
            Ok(b.normalized(st, mode))
        })
        .collect()
}

/// Metrics of `model` on the labelled items of `items`.
pub fn evaluate(model: &StyleClassifier, items: &[FeatureBundle], weights: &ClassWeights) -> Result<Metrics> {
    let labelled: Vec<&FeatureBundle> = items.iter().filter(|b| b.style.is_some()).collect();
    if labelled.is_empty() {
        return Err(Error::invalid("evaluation set has no labelled utterances"));
    }
    let preds = model.predict(&labelled)?;
    let pairs: Vec<(usize, usize)> =
        labelled.iter().zip(&preds).map(|(b, p)| (b.style.unwrap().index(), p.argmax().index())).collect();
    Metrics::from_predictions(&pairs, weights)
}

/// Splits shuffled indices into batches, folding a trailing single item
/// into the previous batch (batch statistics need two rows).
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size.max(2)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().map(Vec::len) == Some(1) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

/// Trains on the labelled items of `train`, selecting the epoch with the best
/// dev weighted accuracy (ties go to the lower training loss). With an empty
/// dev set, selection uses training loss alone.
pub fn train_classifier(
    init: StyleClassifier,
    train: &[FeatureBundle],
    dev: &[FeatureBundle],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let items: Vec<&FeatureBundle> = train.iter().filter(|b| b.style.is_some()).collect();
    if items.len() < 2 {
        return Err(Error::invalid(format!("training needs at least two labelled utterances, got {}", items.len())));
    }
    let weights = ClassWeights::from_counts(&count_labels(items.iter().map(|b| &b.style)), cfg.neutral_cap)?;
    let dev: Vec<FeatureBundle> = dev.iter().filter(|b| b.style.is_some()).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init;
    let mut opt = Adam::new(&model.params, cfg.lr);
    let m = model.config.bn_momentum;
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, StyleClassifier)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..items.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for idx in batches(&order, cfg.batch_size) {
            let chunk: Vec<&FeatureBundle> = idx.iter().map(|&i| items[i]).collect();
            let batch = model.make_batch(&chunk)?;
            let labels: Vec<usize> = batch.labels.iter().map(|l| l.unwrap().index()).collect();
            let w: Vec<f64> = labels.iter().map(|&l| weights.w[l]).collect();
            let (mut grads, loss, mean, var) = {
                let mut tape = Tape::new(&model.params);
                let (logits, mean, var) = model.forward_train(&mut tape, &batch);
                let loss = tape.softmax_xent(logits, &labels, &w);
                (tape.backward(loss), tape.scalar(loss), mean, var)
            };
            if !loss.is_finite() {
                return Err(Error::invalid(format!("training diverged at epoch {epoch}")));
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            opt.step(&mut model.params, &grads);
            for c in 0..mean.len() {
                model.running_mean[c] = m * model.running_mean[c] + (1.0 - m) * mean[c];
                model.running_var[c] = m * model.running_var[c] + (1.0 - m) * var[c];
            }
            loss_sum += loss;
            n_batches += 1;
        }
        let train_loss = loss_sum / n_batches as f64;
        let (dw, du) = if dev.is_empty() {
            (0.0, 0.0)
        } else {
            let mt = evaluate(&model, &dev, &weights)?;
            (mt.weighted_acc, mt.unweighted_acc)
        };
        history.push(EpochRecord { epoch, train_loss, dev_weighted_acc: dw, dev_unweighted_acc: du });
        tracing::debug!(epoch, train_loss, dev_weighted_acc = dw, dev_unweighted_acc = du, "classifier epoch");
        let better = match &best {
            None => true,
            Some((bw, bl, _, _)) => dw > *bw || (dw == *bw && train_loss < *bl),
        };
        if better {
            best = Some((dw, train_loss, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, _, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, history, best_epoch, weights })
}

/// Relative error between the weighted training loss gradient (batch
/// statistics in the normalization layer) and central differences.
pub fn classifier_gradient_error(
    model: &StyleClassifier,
    items: &[&FeatureBundle],
    weights: &ClassWeights,
    h: f64,
    per_tensor: usize,
) -> Result<f64> {
    let batch = model.make_batch(items)?;
    let labels = batch
        .labels
        .iter()
        .map(|l| l.map(|s| s.index()).ok_or_else(|| Error::invalid("gradient check needs labelled items")))
        .collect::<Result<Vec<usize>>>()?;
    let w: Vec<f64> = labels.iter().map(|&l| weights.w[l]).collect();
    let loss_of = |tape: &mut Tape| {
        let (logits, _, _) = model.forward_train(tape, &batch);
        tape.softmax_xent(logits, &labels, &w)
    };
    let mut tape = Tape::new(&model.params);
    let loss = loss_of(&mut tape);
    let grads = tape.backward(loss);
    Ok(gradient_error(&model.params, &grads, h, per_tensor, |p| {
        let mut t = Tape::new(p);
        let l = loss_of(&mut t);
        t.scalar(l)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batching_never_leaves_a_single_row() {
        let order: Vec<usize> = (0..65).collect();
        let b = batches(&order, 32);
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].len(), 33);
        assert_eq!(batches(&order[..64], 32).len(), 2);
    }

    #[test]
    fn csv_header() {
        let h = vec![EpochRecord { epoch: 1, train_loss: 0.5, dev_weighted_acc: 0.25, dev_unweighted_acc: 0.5 }];
        assert_eq!(history_csv(&h), "epoch,train_loss,dev_weighted_acc,dev_unweighted_acc\n1,0.5,0.25,0.5\n");
    }
}
