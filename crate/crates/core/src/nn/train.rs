use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::arch::ArchitectureSpec;
use super::loss::{Loss, Targets};
use super::network::{LayerParams, Network};
use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
    /// Return the parameters of the epoch with the best validation metric
    /// instead of the last epoch. Needs a validation set.
    pub keep_best: bool,
}

impl TrainConfig {
    pub fn new(loss: Loss, epochs: usize, seed: u64) -> Self {
        Self { learning_rate: 1e-3, batch_size: 1024, epochs, loss, seed, keep_best: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetData<T> {
    Classes(Vec<usize>),
    Values { data: Vec<T>, dim: usize },
}

/// Row-major examples with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Vec<T>,
    pub input_dim: usize,
    pub targets: TargetData<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Vec<T>, input_dim: usize, targets: TargetData<T>) -> Result<Self> {
        if input_dim == 0 || !inputs.len().is_multiple_of(input_dim) {
            return Err(Error::shape("inputs are not a whole number of rows"));
        }
        let n = inputs.len() / input_dim;
        let m = match &targets {
            TargetData::Classes(c) => c.len(),
            TargetData::Values { data, dim } => {
                if *dim == 0 || data.len() % dim != 0 {
                    return Err(Error::shape("targets are not a whole number of rows"));
                }
                data.len() / dim
            }
        };
        if n != m {
            return Err(Error::shape(format!("{n} inputs but {m} targets")));
        }
        Ok(Self { inputs, input_dim, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> &[T] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Copy the rows listed in `idx` into a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(idx.len() * self.input_dim);
        for &i in idx {
            inputs.extend_from_slice(self.input(i));
        }
        let targets = match &self.targets {
            TargetData::Classes(c) => TargetData::Classes(idx.iter().map(|&i| c[i]).collect()),
            TargetData::Values { data, dim } => {
                let mut out = Vec::with_capacity(idx.len() * dim);
                for &i in idx {
                    out.extend_from_slice(&data[i * dim..(i + 1) * dim]);
                }
                TargetData::Values { data: out, dim: *dim }
            }
        };
        Self { inputs, input_dim: self.input_dim, targets }
    }

    /// Seeded shuffle, then the last `fraction` of rows become the held-out set.
    pub fn split(&self, fraction: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::seeded(rng::derive_seed(seed, domain::SHUFFLE, u64::MAX)));
        let held = ((self.len() as f64) * fraction).round() as usize;
        let cut = self.len() - held.min(self.len());
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }

    fn batch_targets(&self, idx: &[usize], classes: &mut Vec<usize>, values: &mut Vec<T>) {
        classes.clear();
        values.clear();
        match &self.targets {
            TargetData::Classes(c) => classes.extend(idx.iter().map(|&i| c[i])),
            TargetData::Values { data, dim } => {
                for &i in idx {
                    values.extend_from_slice(&data[i * dim..(i + 1) * dim]);
                }
            }
        }
    }
}

fn targets_of<'a, T>(data: &TargetData<T>, classes: &'a [usize], values: &'a [T]) -> Targets<'a, T> {
    match data {
        TargetData::Classes(_) => Targets::Classes(classes),
        TargetData::Values { .. } => Targets::Values(values),
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean training loss of each epoch.
    pub loss: Vec<f64>,
    /// Validation metric after each epoch: accuracy for classifiers, mean
    /// loss for regressors. Empty without a validation set.
    pub validation: Vec<f64>,
    /// Epoch whose parameters were returned when `keep_best` was set.
    pub best_epoch: Option<usize>,
}

pub struct TrainOutcome<T> {
    pub network: Network<T>,
    pub history: TrainHistory,
}

/// Mini-batch Adam training, single-threaded and deterministic per seed.
pub fn train<T: Scalar>(
    arch: &ArchitectureSpec,
    data: &Dataset<T>,
    validation: Option<&Dataset<T>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let mut network = Network::init(arch, &mut rng::seeded(rng::derive_seed(cfg.seed, domain::INIT, 0)))?;
    let history = train_network(&mut network, data, validation, cfg, |_, _| {})?;
    Ok(TrainOutcome { network, history })
}

/// Continue training `network` in place. `on_epoch(epoch, history)` runs
/// after each epoch.
pub fn train_network<T: Scalar>(
    network: &mut Network<T>,
    data: &Dataset<T>,
    validation: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &TrainHistory),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::shape("training set is empty"));
    }
    if data.input_dim != network.input_size() {
        return Err(Error::shape(format!(
            "examples have {} features, network expects {}",
            data.input_dim,
            network.input_size()
        )));
    }
    let mut adam = Adam::new(network, cfg.learning_rate);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch_in: Vec<T> = Vec::new();
    let (mut classes, mut values) = (Vec::new(), Vec::new());
    if cfg.keep_best && validation.is_none() {
        return Err(Error::Config("keeping the best epoch needs a validation set".into()));
    }
    let mut best: Option<(f64, Vec<LayerParams<T>>)> = None;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::seeded(rng::derive_seed(cfg.seed, domain::SHUFFLE, epoch as u64)));
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch_in.clear();
            for &i in idx {
                batch_in.extend_from_slice(data.input(i));
            }
            data.batch_targets(idx, &mut classes, &mut values);
            let cache = network.forward(&batch_in)?;
            let eval = cfg.loss.evaluate(network, &cache, targets_of(&data.targets, &classes, &values))?;
            if !eval.loss.is_finite() {
                return Err(Error::Diverged(format!("loss {} at epoch {epoch}, batch {b}", eval.loss)));
            }
            total += eval.loss * idx.len() as f64;
            let grads = network.backward_from(&cache, eval.grad, eval.end)?;
            adam.step(network, &grads);
        }
        history.loss.push(total / data.len() as f64);
        if let Some(v) = validation {
            let metric = evaluate(network, v, cfg.loss)?;
            history.validation.push(metric);
            // accuracy for classes, loss for values
            let score = if matches!(v.targets, TargetData::Classes(_)) { metric } else { -metric };
            if cfg.keep_best && best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, network.params().to_vec()));
                history.best_epoch = Some(epoch);
            }
        }
        on_epoch(epoch, &history);
    }
    if let Some((_, params)) = best {
        network.params_mut().clone_from_slice(&params);
    }
    Ok(history)
}

/// Accuracy for class targets, mean loss for value targets.
pub fn evaluate<T: Scalar>(network: &Network<T>, data: &Dataset<T>, loss: Loss) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let chunk = 1024;
    let mut acc = 0.0;
    let all: Vec<usize> = (0..data.len()).collect();
    let (mut classes, mut values) = (Vec::new(), Vec::new());
    for idx in all.chunks(chunk) {
        let inputs = &data.inputs[idx[0] * data.input_dim..(idx[idx.len() - 1] + 1) * data.input_dim];
        let cache = network.forward(inputs)?;
        data.batch_targets(idx, &mut classes, &mut values);
        match &data.targets {
            TargetData::Classes(_) => {
                let n = network.output_size();
                acc += cache
                    .output()
                    .chunks(n)
                    .zip(&classes)
                    .filter(|(row, &c)| argmax(row) == c)
                    .count() as f64;
            }
            TargetData::Values { .. } => {
                let e = loss.evaluate(network, &cache, Targets::Values(&values))?;
                acc += e.loss * idx.len() as f64;
            }
        }
    }
    Ok(acc / data.len() as f64)
}

/// Index of the largest element; the first one wins ties.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
