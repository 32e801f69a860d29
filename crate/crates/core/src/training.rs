//! Per-example SGD with global-norm clipping, shared by both models.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::corpus::{LabeledChunk, Sentence};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::mathcore::{Gradients, NodeId, ParamGrad, ParamStore, Tape};
use crate::wordrep::Mode;
use crate::Rng;

/// A trainable labeler that owns its parameters.
pub trait SequenceModel {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Scalar training loss of one tagged sentence.
    fn loss(&self, tape: &mut Tape, sentence: &Sentence, mode: Mode, rng: &mut Rng) -> Result<NodeId>;
    fn predict(&self, sentence: &Sentence) -> Result<Vec<LabeledChunk>>;
    /// Gold chunks of a tagged sentence, read in the model's scheme.
    fn gold_chunks(&self, sentence: &Sentence) -> Result<Vec<LabeledChunk>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub clip_threshold: f64,
    pub epochs: usize,
    /// Seeds shuffling and every train-mode draw (dropout, UNK replacement).
    pub seed: u64,
    /// Stop after this many epochs without a dev improvement.
    pub patience: Option<usize>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 0.01, clip_threshold: 5.0, epochs: 100, seed: 1, patience: None }
    }
}

impl SgdConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Usage(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.clip_threshold > 0.0) {
            return Err(Error::Usage(format!("clip threshold must be positive, got {}", self.clip_threshold)));
        }
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Rescales `grads` to global norm `threshold` if above it; returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, threshold: f64) -> f64 {
    let norm = grads.norm();
    if norm > threshold {
        grads.scale(threshold / norm);
    }
    norm
}

/// `p ← p - lr·g` for every coordinate, then clears `grads`.
pub fn sgd_step(store: &mut ParamStore, grads: &mut Gradients, lr: f64) {
    for (id, g) in grads.iter() {
        let values = store.get_mut(id).values_mut();
        match g {
            ParamGrad::Dense(d) => {
                for (p, g) in values.iter_mut().zip(d) {
                    *p -= lr * g;
                }
            }
            ParamGrad::Rows(rows) => {
                for (&r, d) in rows {
                    let w = d.len();
                    for (p, g) in values[r * w..(r + 1) * w].iter_mut().zip(d) {
                        *p -= lr * g;
                    }
                }
            }
        }
    }
    grads.clear();
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev: Option<EvalReport>,
}

impl EpochRecord {
    /// `epoch=3 loss=0.012345 dev_precision=98.00 dev_recall=97.00 dev_f1=97.50`
    pub fn to_line(&self) -> String {
        let mut line = format!("epoch={} loss={:.6}", self.epoch, self.mean_loss);
        if let Some(d) = &self.dev {
            let _ =
                write!(line, " dev_precision={:.2} dev_recall={:.2} dev_f1={:.2}", d.precision(), d.recall(), d.f1());
        }
        line
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters the model holds after training.
    pub best_epoch: usize,
    pub best_dev_f1: Option<f64>,
}

impl TrainReport {
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        let _ = write!(out, "best_epoch={}", self.best_epoch);
        if let Some(f) = self.best_dev_f1 {
            let _ = write!(out, " best_dev_f1={f:.2}");
        }
        out.push('\n');
        out
    }
}

/// Entity-level scores of `model` on tagged sentences.
pub fn evaluate_model<M: SequenceModel + ?Sized>(model: &M, sentences: &[Sentence]) -> Result<EvalReport> {
    let mut pred = Vec::with_capacity(sentences.len());
    let mut gold = Vec::with_capacity(sentences.len());
    for s in sentences {
        pred.push(model.predict(s)?);
        gold.push(model.gold_chunks(s)?);
    }
    evaluate(&pred, &gold)
}

/// One SGD update on a single sentence; returns its loss before the update.
pub fn train_step<M: SequenceModel + ?Sized>(
    model: &mut M,
    sentence: &Sentence,
    config: &SgdConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = model.loss(&mut tape, sentence, Mode::Train, rng)?;
    let value = tape.value(loss).item();
    let mut grads = tape.backward(loss)?;
    clip_gradients(&mut grads, config.clip_threshold);
    sgd_step(model.store_mut(), &mut grads, config.learning_rate);
    Ok(value)
}

/// Trains for `config.epochs` epochs, shuffling each one. With a non-empty
/// dev set the parameters of the best dev-F1 epoch (earliest on ties) are
/// restored at the end; otherwise the final ones are kept.
pub fn train<M: SequenceModel + ?Sized>(
    model: &mut M,
    train_set: &[Sentence],
    dev_set: &[Sentence],
    config: &SgdConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Usage("empty training set".into()));
    }
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            total += train_step(model, &train_set[i], config, &mut rng)?;
        }
        let dev = if dev_set.is_empty() { None } else { Some(evaluate_model(model, dev_set)?) };
        let record = EpochRecord { epoch, mean_loss: total / train_set.len() as f64, dev };
        on_epoch(&record);
        if let Some(d) = &record.dev {
            let f1 = d.f1();
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, model.store().clone()));
                report.best_epoch = epoch;
                report.best_dev_f1 = Some(f1);
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            report.best_epoch = epoch;
        }
        report.epochs.push(record);
        if config.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    if let Some((_, store)) = best {
        *model.store_mut() = store;
    }
    Ok(report)
}
