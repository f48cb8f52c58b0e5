//! Loss, optimizer, training loop and ensembling.

pub mod adam;
pub mod dropout;
mod ensemble;
mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::adam::{adam_step, AdamConfig, AdamState};
pub use self::dropout::{dropout_mask, Dropout};
pub use self::ensemble::{check_compatible, ensemble_accuracy, ensemble_predict};
pub use self::metrics::{MetricLog, MetricRecord, Split};

use crate::config::ModelConfig;
use crate::embeddings::{EmbeddingTable, EncodedExample};
use crate::error::{QacnnError, Result};
use crate::model::{Model, QacnnParams, Variant};
use crate::real::Real;
use crate::similarity::{build_maps, SimilarityMaps};
use crate::tape::NLL_EPS;
use crate::tensor::Tensor;

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Keep probability of dropout after each representation convolution.
    pub dropout_keep: f64,
    pub seed: u64,
    /// Epochs without a validation improvement (higher accuracy, or equal
    /// accuracy and lower loss) before stopping.
    pub patience: usize,
    /// Worker threads for per-example gradients; `None` uses the rayon default.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 16,
            epochs: 50,
            dropout_keep: 0.8,
            seed: 0,
            patience: 5,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.learning_rate > 0.0) {
            return Err(QacnnError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(QacnnError::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(QacnnError::Config("batch_size and epochs must be at least 1".into()));
        }
        dropout::check_keep(self.dropout_keep)
    }
}

/// `−ln(probs[label] + 1e−12)`
pub fn cross_entropy_loss<T: Real>(probs: &Tensor<T>, label: usize) -> Result<T> {
    if probs.rank() != 1 || label >= probs.len() {
        return Err(QacnnError::InvalidArgument(format!(
            "label {label} out of range for probabilities of shape {:?}",
            probs.shape()
        )));
    }
    Ok(-(probs.data()[label] + T::of(NLL_EPS)).ln())
}

/// Similarity maps for one question with its optional answer.
#[derive(Clone, Debug)]
pub struct LabeledMaps<T> {
    pub maps: SimilarityMaps<T>,
    pub label: Option<usize>,
}

/// Computes similarity maps once per example; embeddings never change during training.
pub fn prepare<T: Real>(examples: &[EncodedExample], table: &EmbeddingTable) -> Result<Vec<LabeledMaps<T>>> {
    examples
        .iter()
        .map(|e| {
            Ok(LabeledMaps {
                maps: build_maps(e, table)?,
                label: e.label,
            })
        })
        .collect()
}

/// Accuracy and mean loss over a labeled split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub count: usize,
}

fn require_label<T>(ex: &LabeledMaps<T>, index: usize) -> Result<usize> {
    ex.label
        .ok_or_else(|| QacnnError::Data(format!("example {index} has no answer label")))
}

pub fn evaluate<T: Real>(model: &Model<T>, data: &[LabeledMaps<T>]) -> Result<Evaluation> {
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (i, ex) in data.iter().enumerate() {
        let label = require_label(ex, i)?;
        let p = model.predict_maps(&ex.maps)?;
        if p.answer() == label {
            correct += 1;
        }
        loss += cross_entropy_loss(&p.probs, label)?.as_f64();
    }
    let n = data.len().max(1) as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
        count: data.len(),
    })
}

/// Mean loss and summed-then-averaged gradient over `batch` (indices into `data`).
pub fn batch_gradient<T: Real>(
    model: &Model<T>,
    data: &[LabeledMaps<T>],
    batch: &[usize],
    dropout: Option<(f64, u64, u64)>,
) -> Result<(f64, usize, QacnnParams<T>)> {
    let per_example = batch
        .par_iter()
        .map(|&idx| {
            let ex = &data[idx];
            let label = require_label(ex, idx)?;
            let mut d = match dropout {
                Some((keep, seed, epoch)) if keep < 1.0 => Some(Dropout::new(keep, seed, epoch, idx as u64)?),
                _ => None,
            };
            let g = model.gradient(&ex.maps, label, d.as_mut())?;
            Ok((g, label))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = model.params.map(|t| Tensor::zeros(t.shape()));
    let mut loss = 0.0;
    let mut correct = 0;
    for (g, label) in &per_example {
        loss += g.loss.as_f64();
        if g.probs.argmax() == *label {
            correct += 1;
        }
        for (acc, gi) in total.slots_mut().into_iter().zip(g.grads.slots()) {
            acc.data_mut().iter_mut().zip(gi.data()).for_each(|(a, &b)| *a = *a + b);
        }
    }
    let scale = T::of(1.0 / batch.len() as f64);
    for t in total.slots_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = *v * scale);
    }
    Ok((loss, correct, total))
}

/// Outcome of [`fit`].
#[derive(Clone, Debug)]
pub struct FitOutcome<T> {
    /// Weights from the epoch with the best monitored accuracy.
    pub best: Model<T>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub epochs_run: usize,
    pub log: MetricLog,
}

/// Trains a freshly initialized model.
///
/// Each epoch shuffles the training set with a seeded RNG, runs mini-batches of
/// Adam updates, and logs training loss/accuracy and validation loss/accuracy.
/// The weights with the best validation accuracy (training accuracy when `val`
/// is empty), ties broken by lower loss, are kept; training stops after
/// `patience` epochs without improvement.
pub fn fit<T: Real>(
    train: &[LabeledMaps<T>],
    val: &[LabeledMaps<T>],
    model_config: &ModelConfig,
    variant: Variant,
    config: &TrainConfig,
) -> Result<FitOutcome<T>> {
    config.validate()?;
    let model = Model::init(model_config.clone(), variant, config.seed)?;
    fit_model(model, train, val, config)
}

/// Like [`fit`], starting from existing weights.
pub fn fit_model<T: Real>(
    mut model: Model<T>,
    train: &[LabeledMaps<T>],
    val: &[LabeledMaps<T>],
    config: &TrainConfig,
) -> Result<FitOutcome<T>> {
    config.validate()?;
    if train.is_empty() {
        return Err(QacnnError::Data("training set is empty".into()));
    }
    for (i, ex) in train.iter().enumerate() {
        require_label(ex, i)?;
        model.check_maps(&ex.maps)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| QacnnError::Config(format!("thread pool: {e}")))?;

    let mut adam = AdamState::new(model.params.slots());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = MetricLog::default();
    let mut best = model.clone();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0xa076_1d64_78bd_642f));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let (loss, hits, grads) = pool.install(|| {
                batch_gradient(
                    &model,
                    train,
                    batch,
                    Some((config.dropout_keep, config.seed, epoch as u64)),
                )
            })?;
            loss_sum += loss;
            correct += hits;
            adam_step(model.params.slots_mut(), grads.slots(), &mut adam, &config.adam)?;
        }
        if !model.params.all_finite() {
            return Err(QacnnError::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }
        epochs_run = epoch;
        let train_acc = correct as f64 / train.len() as f64;
        log.push(MetricRecord {
            epoch,
            split: Split::Train,
            loss: loss_sum / train.len() as f64,
            accuracy: train_acc,
        });
        let monitored = if val.is_empty() {
            (train_acc, loss_sum / train.len() as f64)
        } else {
            let e = pool.install(|| evaluate(&model, val))?;
            log.push(MetricRecord {
                epoch,
                split: Split::Val,
                loss: e.loss,
                accuracy: e.accuracy,
            });
            (e.accuracy, e.loss)
        };
        let (accuracy, loss) = monitored;
        if accuracy > best_accuracy || (accuracy == best_accuracy && loss < best_loss) {
            best_accuracy = accuracy;
            best_loss = loss;
            best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    Ok(FitOutcome {
        best,
        best_epoch,
        best_accuracy,
        epochs_run,
        log,
    })
}
