use std::collections::BTreeSet;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamState};
use super::model::{CnnModel, Trace};
use super::rows::InputRows;
use super::{NnError, Scalar};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "f32" => Ok(Precision::Single),
            "double" | "f64" => Ok(Precision::Double),
            _ => Err(format!("unknown precision {s:?} (expected single or double)")),
        }
    }
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Precision,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 32,
            seed: 0,
            precision: Precision::Single,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::InvalidConfig("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sorted class labels; a label's position is its output unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelIndex {
    labels: Vec<String>,
}

impl LabelIndex {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(|s| s.as_ref().to_string()).collect();
        LabelIndex { labels: set.into_iter().collect() }
    }

    pub fn index_of(&self, label: &str) -> Result<usize, NnError> {
        self.labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .map_err(|_| NnError::UnknownLabel(label.to_string()))
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    /// Running word accuracy of the forward passes made while training.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochMetrics>,
    pub steps: u64,
}

fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_inputs<T: Scalar, R: InputRows<T> + ?Sized>(
    model: &CnnModel<T>,
    inputs: &R,
    labels: &[usize],
) -> Result<(), NnError> {
    if inputs.n_rows() != labels.len() {
        return Err(NnError::Shape(format!("{} inputs for {} labels", inputs.n_rows(), labels.len())));
    }
    let n = model.input_len();
    if let Some(bad) = (0..inputs.n_rows()).map(|i| inputs.row_len(i)).find(|&l| l != n) {
        return Err(NnError::Shape(format!("input of length {bad}, expected {n}")));
    }
    if !inputs.all_finite() {
        return Err(NnError::InvalidConfig("non-finite input value".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.n_classes()) {
        return Err(NnError::UnknownLabel(format!("class index {bad}")));
    }
    Ok(())
}

/// Mini-batch Adam training for `cfg.epochs` epochs. Sample order is
/// reshuffled each epoch from `(cfg.seed, epoch)`; the final model is the
/// one after the last epoch.
pub fn train<T: Scalar, R: InputRows<T> + ?Sized>(
    model: &mut CnnModel<T>,
    inputs: &R,
    labels: &[usize],
    val: Option<(&dyn InputRows<T>, &[usize])>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    cfg.validate()?;
    if inputs.n_rows() == 0 {
        return Err(NnError::InvalidConfig("empty training set".into()));
    }
    check_inputs(model, inputs, labels)?;
    if let Some((vx, vy)) = val {
        check_inputs(model, vx, vy)?;
    }
    let mut adam = AdamState::with_lr(model.params(), cfg.learning_rate);
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.epsilon = cfg.epsilon;
    adam.validate()?;

    let n_classes = model.n_classes();
    let mut order: Vec<usize> = (0..inputs.n_rows()).collect();
    let mut trace = Trace::default();
    let mut grads = model.zero_grads();
    let mut batch_x: Vec<T> = Vec::with_capacity(cfg.batch_size * model.input_len());
    let mut batch_y = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(&crate::seed_key!(cfg.seed, "shuffle", epoch as u64)));
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                inputs.append_row(i, &mut batch_x);
                batch_y.push(labels[i]);
            }
            grads.iter_mut().for_each(|g| g.fill(T::zero()));
            let loss = model.accumulate_batch(&batch_x, &batch_y, &mut trace, &mut grads)?;
            let out = trace.output();
            correct += batch_y
                .iter()
                .enumerate()
                .filter(|&(b, &y)| argmax(&out[b * n_classes..(b + 1) * n_classes]) == y)
                .count();
            loss_sum += loss.to_f64();
            n_batches += 1;
            adam_step(model.params_mut(), &grads, &mut adam)?;
        }
        let val_accuracy = match val {
            Some((vx, vy)) if vx.n_rows() > 0 => Some(accuracy(model, vx, vy)?),
            _ => None,
        };
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n_batches as f64,
            train_accuracy: correct as f64 / inputs.n_rows() as f64,
            val_accuracy,
        };
        log::info!(
            "epoch {}/{}: loss {:.5} train acc {:.4} val acc {}",
            m.epoch,
            cfg.epochs,
            m.train_loss,
            m.train_accuracy,
            m.val_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
        history.push(m);
    }
    Ok(TrainOutcome { epochs: history, steps: adam.t })
}

/// Class index with the highest score (lowest index on ties) and the scores.
pub fn predict<T: Scalar>(model: &CnnModel<T>, input: &[T]) -> Result<(usize, Vec<T>), NnError> {
    let scores = model.scores(input)?;
    Ok((argmax(&scores), scores))
}

pub fn predict_batch<T: Scalar, R: InputRows<T> + ?Sized>(model: &CnnModel<T>, inputs: &R) -> Result<Vec<usize>, NnError> {
    const CHUNK: usize = 32;
    let n = model.n_classes();
    let total = inputs.n_rows();
    let mut out = Vec::with_capacity(total);
    let mut buf = Vec::new();
    let mut trace = Trace::default();
    for start in (0..total).step_by(CHUNK) {
        let end = (start + CHUNK).min(total);
        buf.clear();
        for i in start..end {
            let len = inputs.row_len(i);
            if len != model.input_len() {
                return Err(NnError::Shape(format!("input of length {len}, expected {}", model.input_len())));
            }
            inputs.append_row(i, &mut buf);
        }
        model.forward_into(&buf, end - start, &mut trace)?;
        out.extend(trace.output().chunks_exact(n).map(argmax));
    }
    Ok(out)
}

/// Fraction of `inputs` whose predicted class equals the label.
pub fn accuracy<T: Scalar, R: InputRows<T> + ?Sized>(
    model: &CnnModel<T>,
    inputs: &R,
    labels: &[usize],
) -> Result<f64, NnError> {
    if inputs.n_rows() != labels.len() {
        return Err(NnError::Shape(format!("{} inputs for {} labels", inputs.n_rows(), labels.len())));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let pred = predict_batch(model, inputs)?;
    Ok(pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
}
