//! Pilot-aided channel estimation.
//!
//! Tag `i` sends row `i` of a 4x4 Sylvester-Hadamard matrix as its pilot
//! prefix. The rows are orthogonal, so `h_i = (1/4) sum_k P[i][k] y_k` on
//! noiseless pilot observations. That least-squares estimate is the
//! reference for the learned estimator, one small regression network per
//! tag count.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::baseband::{symbol_average, SlotSignal, PILOT_LEN};
use crate::error::{Error, Result};
use crate::fsa::MAX_RESOLVABLE;
use crate::nn::{
    dense_stack, train, ArchitectureSpec, Dataset, Loss, Network, Shape, TargetData, TrainConfig, TrainOutcome,
};
use crate::scalar::Scalar;

const HADAMARD4: [[i8; PILOT_LEN]; 4] = [[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]];

/// Hidden layer width of the channel regression network.
pub const CHANNEL_HIDDEN: usize = 128;
pub const CHANNEL_HIDDEN_LAYERS: usize = 4;
/// Real inputs: I/Q of the four symbol-averaged pilots.
pub const CHANNEL_INPUT: usize = 2 * PILOT_LEN;

/// The first `R` Hadamard rows, one pilot sequence per tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotMatrix {
    rows: Vec<[i8; PILOT_LEN]>,
}

impl PilotMatrix {
    pub fn rows(&self) -> &[[i8; PILOT_LEN]] {
        &self.rows
    }

    pub fn tags(&self) -> usize {
        self.rows.len()
    }

    /// `P P^T`, which is `4 I` by construction.
    pub fn gram(&self) -> Vec<Vec<i32>> {
        self.rows
            .iter()
            .map(|a| self.rows.iter().map(|b| a.iter().zip(b).map(|(x, y)| (*x as i32) * (*y as i32)).sum()).collect())
            .collect()
    }
}

pub fn pilot_matrix(r: usize) -> Result<PilotMatrix> {
    if !(1..=MAX_RESOLVABLE).contains(&r) {
        return Err(Error::domain(format!("tag count {r} outside 1..={MAX_RESOLVABLE}")));
    }
    Ok(PilotMatrix { rows: HADAMARD4[..r].to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMethod {
    Nn,
    Ls,
    Oracle,
}

/// Estimated gains; index `i` is the tag that sent pilot row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate<T> {
    pub gains: Vec<Complex<T>>,
    pub method: ChannelMethod,
}

impl<T> ChannelEstimate<T> {
    pub fn tags(&self) -> usize {
        self.gains.len()
    }
}

/// Symbol-averaged pilot observations of a slot.
pub fn pilot_observations<T: Scalar>(slot: &SlotSignal<T>) -> [Complex<T>; PILOT_LEN] {
    let avg = symbol_average(slot);
    let mut out = [Complex::new(T::zero(), T::zero()); PILOT_LEN];
    out.copy_from_slice(&avg[..PILOT_LEN]);
    out
}

/// Least-squares estimate `h = (1/4) P y`.
pub fn ls_estimate<T: Scalar>(pilots: &[Complex<T>; PILOT_LEN], r: usize) -> Result<ChannelEstimate<T>> {
    let p = pilot_matrix(r)?;
    let quarter = T::lit(0.25);
    let gains = p
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(pilots)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (&s, y)| acc + y * T::lit(s as f64))
                * quarter
        })
        .collect();
    Ok(ChannelEstimate { gains, method: ChannelMethod::Ls })
}

/// Four ReLU layers of 128 units, linear `2R` output (interleaved re/im).
pub fn build_channel_net(r: usize) -> Result<ArchitectureSpec> {
    if !(1..=MAX_RESOLVABLE).contains(&r) {
        return Err(Error::domain(format!("tag count {r} outside 1..={MAX_RESOLVABLE}")));
    }
    let mut widths = vec![CHANNEL_HIDDEN; CHANNEL_HIDDEN_LAYERS];
    widths.push(2 * r);
    ArchitectureSpec::new(Shape::Flat(CHANNEL_INPUT), dense_stack(CHANNEL_INPUT, &widths))
}

fn interleave<T: Scalar>(values: &[Complex<T>]) -> Vec<T> {
    values.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Regression examples `(pilot I/Q, true gains)` from simulated slots that
/// all hold exactly `r` tags.
pub fn channel_dataset<T: Scalar>(slots: &[SlotSignal<T>], r: usize) -> Result<Dataset<T>> {
    let mut inputs = Vec::with_capacity(slots.len() * CHANNEL_INPUT);
    let mut targets = Vec::with_capacity(slots.len() * 2 * r);
    for slot in slots {
        let truth = slot.truth.as_ref().ok_or_else(|| Error::shape("slot without ground truth"))?;
        if truth.tags() != r {
            return Err(Error::shape(format!("slot has {} tags, dataset is for {r}", truth.tags())));
        }
        inputs.extend(interleave(&pilot_observations(slot)));
        targets.extend(interleave(truth.channel.gains()));
    }
    Dataset::new(inputs, CHANNEL_INPUT, TargetData::Values { data: targets, dim: 2 * r })
}

/// A trained gain regressor for one tag count.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimator<T> {
    r: usize,
    network: Network<T>,
}

impl<T: Scalar> ChannelEstimator<T> {
    pub fn new(r: usize, network: Network<T>) -> Result<Self> {
        let arch = build_channel_net(r)?;
        if network.input_size() != arch.input_size() || network.output_size() != 2 * r {
            return Err(Error::shape(format!(
                "network maps {} -> {}, a {r}-tag estimator needs {} -> {}",
                network.input_size(),
                network.output_size(),
                CHANNEL_INPUT,
                2 * r
            )));
        }
        Ok(Self { r, network })
    }

    pub fn tags(&self) -> usize {
        self.r
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    /// Gains from already symbol-averaged pilot observations.
    pub fn estimate_from_pilots(&self, pilots: &[Complex<T>; PILOT_LEN]) -> Result<ChannelEstimate<T>> {
        let out = self.network.predict(&interleave(pilots))?;
        Ok(ChannelEstimate {
            gains: out.chunks(2).map(|c| Complex::new(c[0], c[1])).collect(),
            method: ChannelMethod::Nn,
        })
    }
}

/// Train the `r`-tag estimator with squared-error loss.
pub fn train_channel_estimator<T: Scalar>(
    r: usize,
    data: &Dataset<T>,
    validation: Option<&Dataset<T>>,
    cfg: &TrainConfig,
) -> Result<(ChannelEstimator<T>, TrainOutcome<T>)> {
    if cfg.loss != Loss::Mse {
        return Err(Error::Config("channel estimators train with the mse loss".into()));
    }
    let arch = build_channel_net(r)?;
    let outcome = train(&arch, data, validation, cfg)?;
    Ok((ChannelEstimator::new(r, outcome.network.clone())?, outcome))
}

/// Symbol-average the pilot segment of `slot` and run the estimator.
pub fn estimate_channels<T: Scalar>(est: &ChannelEstimator<T>, r: usize, slot: &SlotSignal<T>) -> Result<ChannelEstimate<T>> {
    if r != est.r {
        return Err(Error::shape(format!("estimator is for {} tags, asked for {r}", est.r)));
    }
    est.estimate_from_pilots(&pilot_observations(slot))
}

/// Estimated and true gains of one slot.
pub type GainPair<T> = (Vec<Complex<T>>, Vec<Complex<T>>);

/// Mean of `|h_hat_i - h_i|^2` over all gains of all pairs.
pub fn per_gain_mse<T: Scalar>(pairs: &[GainPair<T>]) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for (est, truth) in pairs {
        for (a, b) in est.iter().zip(truth) {
            acc += (a - b).norm_sqr().as_f64();
            n += 1;
        }
    }
    acc / n.max(1) as f64
}
