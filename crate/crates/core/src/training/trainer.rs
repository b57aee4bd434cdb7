use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{k_fold, lr_at, sgd_step, split, Split, SplitSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::derive_seed;
use crate::params::ParamRegistry;
use crate::Matrix;

/// Labelled samples.
#[derive(Clone, Debug)]
pub struct Dataset<S> {
    pub samples: Vec<S>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<S> Dataset<S> {
    pub fn new(samples: Vec<S>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::contract("sample and label counts differ"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::contract(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self {
            samples,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A classifier trainable by minibatch SGD.
pub trait Trainable {
    type Sample: Sync;

    fn classes(&self) -> usize;

    /// Smallest batch the model can process (graph models need neighbors).
    fn min_batch(&self) -> usize {
        1
    }

    /// Class probabilities, one row per sample.
    fn predict(&self, batch: &[&Self::Sample]) -> Result<Matrix>;

    /// Mean cross-entropy of the batch and its gradient registry.
    fn gradients(&mut self, batch: &[&Self::Sample], labels: &[usize], epoch: usize) -> Result<(f64, ParamRegistry)>;

    fn parameters(&self) -> ParamRegistry;

    fn set_parameters(&mut self, params: &ParamRegistry) -> Result<()>;
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(rename = "loss")]
    pub mean_loss: f64,
    /// Accuracy of the end-of-epoch parameters on the fitted samples.
    #[serde(rename = "acc")]
    pub train_accuracy: f64,
    pub lr: f64,
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = probs.argmax_rows().iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Probabilities for `indices`, processed in order in chunks of
/// `batch_size`. A trailing chunk smaller than the model's minimum batch is
/// merged into the one before it. A whole set smaller than the minimum is
/// padded with the lowest-indexed other samples as context, whose
/// predictions are dropped.
pub fn evaluate<M: Trainable>(
    model: &M,
    data: &Dataset<M::Sample>,
    indices: &[usize],
    batch_size: usize,
) -> Result<Matrix> {
    let min = model.min_batch();
    if indices.len() < min {
        if indices.is_empty() {
            return Ok(Matrix::zeros(0, model.classes()));
        }
        let context = (0..data.len()).filter(|i| !indices.contains(i)).take(min - indices.len());
        let padded: Vec<usize> = indices.iter().copied().chain(context).collect();
        if padded.len() < min {
            return Err(Error::contract(format!(
                "dataset of {} samples is smaller than the minimum batch {min}",
                data.len()
            )));
        }
        let batch: Vec<&M::Sample> = padded.iter().map(|&i| &data.samples[i]).collect();
        return Ok(model.predict(&batch)?.select_rows(&(0..indices.len()).collect::<Vec<_>>()));
    }
    let mut bounds: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    while start < indices.len() {
        let end = (start + batch_size.max(min)).min(indices.len());
        if end - start < min {
            if let Some(last) = bounds.last_mut() {
                *last = (last.0, end);
            }
        } else {
            bounds.push((start, end));
        }
        start = end;
    }
    let mut out = Matrix::zeros(indices.len(), model.classes());
    for (s, e) in bounds {
        let batch: Vec<&M::Sample> = indices[s..e].iter().map(|&i| &data.samples[i]).collect();
        let probs = model.predict(&batch)?;
        for r in 0..probs.rows() {
            out.row_mut(s + r).copy_from_slice(probs.row(r));
        }
    }
    Ok(out)
}

/// Trains on `indices` for `config.epochs` epochs of `⌈n / batch⌉` SGD
/// steps each, reshuffling per epoch from the configured seed.
///
/// A final batch smaller than the model's minimum is topped up with samples
/// from the head of that epoch's order.
pub fn fit<M: Trainable>(
    model: &mut M,
    data: &Dataset<M::Sample>,
    indices: &[usize],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    let n = indices.len();
    let min = model.min_batch();
    if n < min {
        return Err(Error::contract(format!("{n} training samples, model needs batches of {min}")));
    }
    let fit_labels: Vec<usize> = indices.iter().map(|&i| data.labels[i]).collect();
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch)?;
        let mut order = indices.to_vec();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64, u64::MAX)));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for start in (0..n).step_by(config.batch_size) {
            let mut batch_idx: Vec<usize> = order[start..(start + config.batch_size).min(n)].to_vec();
            if batch_idx.len() < min {
                let need = min - batch_idx.len();
                batch_idx.extend_from_slice(&order[..need]);
            }
            let batch: Vec<&M::Sample> = batch_idx.iter().map(|&i| &data.samples[i]).collect();
            let labels: Vec<usize> = batch_idx.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = model.gradients(&batch, &labels, epoch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            let mut params = model.parameters();
            sgd_step(&mut params, &grads, lr)?;
            if params.iter().any(|(_, m)| !m.is_finite()) {
                return Err(Error::NonFinite("parameter update"));
            }
            model.set_parameters(&params)?;
            loss_sum += loss * labels.len() as f64;
            seen += labels.len();
        }
        let probs = evaluate(model, data, indices, config.batch_size)?;
        let log = EpochLog {
            epoch,
            mean_loss: loss_sum / seen as f64,
            train_accuracy: accuracy(&probs, &fit_labels),
            lr,
        };
        on_epoch(&log)?;
        logs.push(log);
    }
    Ok(logs)
}

/// Result of [`train_loop`].
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub logs: Vec<EpochLog>,
    pub split: Split,
}

/// Splits `data`, then fits `model` on the training segment.
pub fn train_loop<M: Trainable>(
    model: &mut M,
    data: &Dataset<M::Sample>,
    config: &TrainConfig,
    split_spec: &SplitSpec,
    on_epoch: &mut dyn FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainRun> {
    let split = split(&data.labels, split_spec)?;
    let logs = fit(model, data, &split.train, config, on_epoch)?;
    Ok(TrainRun { logs, split })
}

/// Validation accuracy per fold, with mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvSummary {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// k-fold cross-validation inside `train`: a fresh model per fold, trained
/// on the other folds and scored on the held-out one. Used for reporting
/// only.
pub fn cross_validate<M: Trainable>(
    make_model: &dyn Fn() -> Result<M>,
    data: &Dataset<M::Sample>,
    train: &[usize],
    config: &TrainConfig,
    folds: usize,
    seed: u64,
) -> Result<CvSummary> {
    let mut fold_accuracies = Vec::with_capacity(folds);
    for fold in k_fold(train, folds, seed)? {
        let mut model = make_model()?;
        fit(&mut model, data, &fold.fit, config, &mut |_| Ok(()))?;
        let probs = evaluate(&model, data, &fold.validation, config.batch_size)?;
        let labels: Vec<usize> = fold.validation.iter().map(|&i| data.labels[i]).collect();
        fold_accuracies.push(accuracy(&probs, &labels));
    }
    let k = fold_accuracies.len() as f64;
    let mean = fold_accuracies.iter().sum::<f64>() / k;
    let var = fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok(CvSummary {
        fold_accuracies,
        mean,
        std: var.sqrt(),
    })
}
