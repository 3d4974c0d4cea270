//! Tag-count estimation: how many tags (1 to 4) collided in a slot.
//!
//! Three estimators share one output type. The mixture estimator fits the
//! constellation with `L = 1..=16` Gaussian components, keeps the BIC
//! minimiser and maps `L*` to the smallest `x` with `L* <= 2^x`. The two
//! learned estimators are softmax classifiers over the raw I/Q sequence.

pub mod gmm;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::baseband::{symbol_average, SlotSignal, PILOT_LEN, SLOT_SYMBOLS};
use crate::error::{Error, Result};
use crate::fsa::MAX_RESOLVABLE;
use crate::nn::{
    argmax, dense_stack, train, ArchitectureSpec, Dataset, LayerSpec, Loss, Network, Shape, TargetData, TrainConfig,
    TrainOutcome,
};
use crate::scalar::Scalar;

pub use gmm::{bic_score, free_parameters, gmm_fit_em, Cov2, EmOptions, GmmFit, GmmParams};

/// Largest mixture size tried by the mixture estimator.
pub const MAX_COMPONENTS: usize = 1 << MAX_RESOLVABLE;

/// Held-out share of a classifier training set.
pub const VALIDATION_FRACTION: f64 = 0.1;

pub const FNN_HIDDEN: [usize; 7] = [1024, 512, 256, 128, 64, 32, 16];
pub const CNN_CHANNELS: [usize; 3] = [16, 64, 32];
pub const CNN_KERNEL: usize = 5;
pub const CNN_DENSE: [usize; 4] = [512, 256, 64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMethod {
    Gmm,
    Fnn,
    Cnn,
    /// The true count, for isolating later pipeline stages.
    Oracle,
}

impl CountMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CountMethod::Gmm => "gmm",
            CountMethod::Fnn => "fnn",
            CountMethod::Cnn => "cnn",
            CountMethod::Oracle => "oracle",
        }
    }
}

/// `scores` is oriented so that higher is better and `tags - 1` is its
/// argmax: class probabilities for the classifiers, negated best BIC per
/// candidate count for the mixture estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TagCountEstimate {
    pub method: CountMethod,
    pub tags: usize,
    pub scores: [f64; MAX_RESOLVABLE],
}

/// Smallest `x >= 1` with `l <= 2^x`.
pub fn clusters_to_tags(l: usize) -> Result<usize> {
    if !(1..=MAX_COMPONENTS).contains(&l) {
        return Err(Error::domain(format!("cluster count {l} outside 1..={MAX_COMPONENTS}")));
    }
    Ok((usize::BITS - (l - 1).leading_zeros()).max(1) as usize)
}

/// Every candidate fit of the mixture estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSelection {
    /// BIC of `L = 1..=16`, index `L - 1`.
    pub bic: Vec<f64>,
    pub best_components: usize,
    pub estimate: TagCountEstimate,
}

/// Fit every candidate mixture size to `points` and select by BIC.
pub fn gmm_select<T: Scalar>(points: &[Complex<T>], seed: u64, opts: &EmOptions) -> Result<GmmSelection> {
    if points.len() < MAX_COMPONENTS {
        return Err(Error::domain(format!("{} points, need at least {MAX_COMPONENTS}", points.len())));
    }
    let mut bic = Vec::with_capacity(MAX_COMPONENTS);
    for l in 1..=MAX_COMPONENTS {
        let fit = gmm_fit_em(points, l, seed, opts)?;
        bic.push(bic_score(fit.log_likelihood.as_f64(), l, points.len()));
    }
    let best_components = 1 + (0..bic.len()).fold(0, |b, i| if bic[i] < bic[b] { i } else { b });
    let mut scores = [f64::NEG_INFINITY; MAX_RESOLVABLE];
    for (i, b) in bic.iter().enumerate() {
        let x = clusters_to_tags(i + 1)?;
        scores[x - 1] = scores[x - 1].max(-b);
    }
    let estimate = TagCountEstimate { method: CountMethod::Gmm, tags: clusters_to_tags(best_components)?, scores };
    Ok(GmmSelection { bic, best_components, estimate })
}

/// Mixture estimate from constellation points, normally a slot's raw samples.
pub fn gmm_estimate_tag_count<T: Scalar>(points: &[Complex<T>], seed: u64) -> Result<TagCountEstimate> {
    Ok(gmm_select(points, seed, &EmOptions::default())?.estimate)
}

/// What the classifiers see of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureOptions {
    pub include_pilots: bool,
    /// Average each symbol's samples first (one point per symbol).
    pub symbol_averaged: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { include_pilots: true, symbol_averaged: false }
    }
}

impl FeatureOptions {
    /// Complex points per slot, the sequence length of the classifier input.
    pub fn sequence_len(&self, oversampling: usize) -> usize {
        let symbols = if self.include_pilots { SLOT_SYMBOLS } else { SLOT_SYMBOLS - PILOT_LEN };
        if self.symbol_averaged {
            symbols
        } else {
            symbols * oversampling
        }
    }

    /// Interleaved I/Q; doubles as a two-channel channels-last sequence.
    pub fn features<T: Scalar>(&self, slot: &SlotSignal<T>) -> Vec<T> {
        if self.symbol_averaged {
            let skip = if self.include_pilots { 0 } else { slot.pilot_len };
            symbol_average(slot)[skip..].iter().flat_map(|s| [s.re, s.im]).collect()
        } else {
            slot.interleaved(self.include_pilots)
        }
    }
}

/// Fully connected classifier over `2 * len` reals with the given hidden widths.
pub fn fnn_arch(len: usize, hidden: &[usize]) -> Result<ArchitectureSpec> {
    let mut widths = hidden.to_vec();
    widths.push(MAX_RESOLVABLE);
    let mut layers = dense_stack(2 * len, &widths);
    layers.push(LayerSpec::Softmax);
    ArchitectureSpec::new(Shape::Flat(2 * len), layers)
}

/// Seven halving hidden layers from 1024 down to 16.
pub fn build_fnn_arch(len: usize) -> Result<ArchitectureSpec> {
    fnn_arch(len, &FNN_HIDDEN)
}

/// Valid 1-D convolutions with ReLU over a two-channel sequence, then a
/// dense softmax head.
pub fn cnn_arch(len: usize, channels: &[usize], kernel: usize, dense: &[usize]) -> Result<ArchitectureSpec> {
    let mut layers = Vec::new();
    let (mut c_in, mut l) = (2, len);
    for &c in channels {
        if l < kernel {
            return Err(Error::shape(format!("sequence of {len} too short for {} convolutions", channels.len())));
        }
        layers.push(LayerSpec::Conv1d { in_channels: c_in, out_channels: c, kernel });
        layers.push(LayerSpec::Relu);
        c_in = c;
        l = l + 1 - kernel;
    }
    layers.push(LayerSpec::Flatten);
    let mut widths = dense.to_vec();
    widths.push(MAX_RESOLVABLE);
    layers.extend(dense_stack(l * c_in, &widths));
    layers.push(LayerSpec::Softmax);
    ArchitectureSpec::new(Shape::Seq { len, channels: 2 }, layers)
}

/// Convolutions of 16, 64 and 32 channels, kernel 5, then dense 512, 256,
/// 64, 32 and 4.
pub fn build_cnn_arch(len: usize) -> Result<ArchitectureSpec> {
    cnn_arch(len, &CNN_CHANNELS, CNN_KERNEL, &CNN_DENSE)
}

/// Labelled classifier examples; class `R - 1` for a slot with `R` tags.
pub fn count_dataset<T: Scalar>(slots: &[SlotSignal<T>], features: &FeatureOptions) -> Result<Dataset<T>> {
    let first = slots.first().ok_or_else(|| Error::shape("no slots"))?;
    let dim = 2 * features.sequence_len(first.oversampling);
    let mut inputs = Vec::with_capacity(slots.len() * dim);
    let mut labels = Vec::with_capacity(slots.len());
    for slot in slots {
        let truth = slot.truth.as_ref().ok_or_else(|| Error::shape("slot without ground truth"))?;
        let x = features.features(slot);
        if x.len() != dim {
            return Err(Error::shape("slots of mixed oversampling in one dataset"));
        }
        inputs.extend(x);
        labels.push(truth.tags() - 1);
    }
    Dataset::new(inputs, dim, TargetData::Classes(labels))
}

/// Train with cross-entropy, holding out a tenth of `data` for the
/// per-epoch validation accuracy.
pub fn train_classifier<T: Scalar>(arch: &ArchitectureSpec, data: &Dataset<T>, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    if cfg.loss != Loss::CrossEntropy {
        return Err(Error::Config("tag-count classifiers train with the cross-entropy loss".into()));
    }
    if !arch.ends_with_softmax() || arch.output_size() != MAX_RESOLVABLE {
        return Err(Error::shape(format!("classifier must end in a {MAX_RESOLVABLE}-way softmax")));
    }
    let (fit, held) = data.split(VALIDATION_FRACTION, cfg.seed);
    train(arch, &fit, Some(&held), cfg)
}

/// Estimate from one row of class probabilities.
pub fn estimate_from_probabilities<T: Scalar>(method: CountMethod, probs: &[T]) -> Result<TagCountEstimate> {
    if probs.len() != MAX_RESOLVABLE {
        return Err(Error::shape(format!("{} class scores, expected {MAX_RESOLVABLE}", probs.len())));
    }
    let mut scores = [0.0; MAX_RESOLVABLE];
    for (s, p) in scores.iter_mut().zip(probs) {
        *s = p.as_f64();
    }
    Ok(TagCountEstimate { method, tags: 1 + argmax(&scores), scores })
}

/// A trained FNN or CNN count classifier with its input convention.
#[derive(Debug, Clone, PartialEq)]
pub struct TagCountClassifier<T> {
    method: CountMethod,
    features: FeatureOptions,
    network: Network<T>,
}

impl<T: Scalar> TagCountClassifier<T> {
    pub fn new(method: CountMethod, features: FeatureOptions, oversampling: usize, network: Network<T>) -> Result<Self> {
        if !matches!(method, CountMethod::Fnn | CountMethod::Cnn) {
            return Err(Error::domain(format!("{} is not a learned estimator", method.name())));
        }
        let want = 2 * features.sequence_len(oversampling);
        if network.input_size() != want || network.output_size() != MAX_RESOLVABLE || !network.arch().ends_with_softmax() {
            return Err(Error::shape(format!(
                "network maps {} -> {}, classifier needs {want} -> {MAX_RESOLVABLE} softmax",
                network.input_size(),
                network.output_size()
            )));
        }
        Ok(Self { method, features, network })
    }

    pub fn method(&self) -> CountMethod {
        self.method
    }

    pub fn features(&self) -> FeatureOptions {
        self.features
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    pub fn estimate(&self, slot: &SlotSignal<T>) -> Result<TagCountEstimate> {
        let probs = self.network.predict(&self.features.features(slot))?;
        estimate_from_probabilities(self.method, &probs)
    }

    /// Batched inference, parallel over chunks of slots.
    pub fn estimate_batch(&self, slots: &[SlotSignal<T>]) -> Result<Vec<TagCountEstimate>> {
        let inputs: Vec<T> = slots.iter().flat_map(|s| self.features.features(s)).collect();
        let probs = self.network.predict_parallel(&inputs, 256)?;
        probs.chunks(MAX_RESOLVABLE).map(|p| estimate_from_probabilities(self.method, p)).collect()
    }
}

/// Shorthand for [`TagCountClassifier::estimate`].
pub fn estimate_tag_count_nn<T: Scalar>(clf: &TagCountClassifier<T>, slot: &SlotSignal<T>) -> Result<TagCountEstimate> {
    clf.estimate(slot)
}
