//! Minimum-distance separation of collided RN16 replies.
//!
//! With gains known, every payload symbol lies near one of the `2^R` levels
//! `sum_i +-h_i`. Under AWGN the nearest level is the maximum-likelihood
//! decision, and its sign pattern gives every tag's symbol at once.

use num_complex::Complex;

use crate::baseband::{ideal_levels, symbol_average, ChannelVector, Level, Rn16, SlotSignal, SlotTruth, RN16_LEN};
use crate::chanest::ChannelEstimate;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Levels of an estimate, in the canonical pattern order (index 0 = all `+1`).
pub fn enumerate_levels<T: Scalar>(est: &ChannelEstimate<T>) -> Result<Vec<Level<T>>> {
    Ok(ideal_levels(&ChannelVector::new(est.gains.clone())?))
}

/// Index of the nearest level; the lowest index wins ties.
pub fn nearest_level<T: Scalar>(levels: &[Level<T>], y: Complex<T>) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (i, l) in levels.iter().enumerate() {
        let d = (l.value - y).norm_sqr();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSlot {
    /// One decoded RN16 per estimated tag.
    pub bits: Vec<Rn16>,
    /// Chosen level index per payload symbol.
    pub levels: Vec<usize>,
    /// Per true tag: decoded without error. Present when the slot carries
    /// ground truth.
    pub success: Option<Vec<bool>>,
}

/// Per-symbol decisions on arbitrary observations.
pub fn decode_symbols<T: Scalar>(observations: &[Complex<T>], levels: &[Level<T>]) -> Vec<usize> {
    observations.iter().map(|y| nearest_level(levels, *y)).collect()
}

/// Decode the payload of `slot` with `est.tags()` tags.
pub fn min_distance_decode<T: Scalar>(slot: &SlotSignal<T>, est: &ChannelEstimate<T>) -> Result<DecodedSlot> {
    if slot.payload_len != RN16_LEN {
        return Err(Error::shape(format!("payload of {} symbols, RN16 needs {RN16_LEN}", slot.payload_len)));
    }
    let levels = enumerate_levels(est)?;
    let avg = symbol_average(slot);
    let chosen = decode_symbols(&avg[slot.pilot_len..], &levels);
    let mut bits = vec![[0i8; RN16_LEN]; est.tags()];
    for (k, &idx) in chosen.iter().enumerate() {
        for (tag, b) in bits.iter_mut().enumerate() {
            b[k] = levels[idx].pattern[tag];
        }
    }
    let mut decoded = DecodedSlot { bits, levels: chosen, success: None };
    if let Some(truth) = &slot.truth {
        decoded.success = Some(score_decode(&decoded, truth).per_tag);
    }
    Ok(decoded)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeScore {
    /// Per true tag, whether some decoded stream reproduced its RN16.
    pub per_tag: Vec<bool>,
}

impl DecodeScore {
    pub fn successes(&self) -> usize {
        self.per_tag.iter().filter(|s| **s).count()
    }

    /// Tags credited to a receiver that decodes at most `j` per slot.
    pub fn capped(&self, j: usize) -> usize {
        self.successes().min(j)
    }
}

fn agreement(a: &Rn16, b: &Rn16) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// Match decoded streams to true tags.
///
/// When at least as many streams as tags were decoded, stream `i` is tag `i`
/// (pilot row binding) and surplus streams are ignored. With fewer streams,
/// each stream is paired greedily with the distinct true tag it agrees with
/// most, so an undercount loses the missing tags but nothing more.
pub fn score_decode<T>(decoded: &DecodedSlot, truth: &SlotTruth<T>) -> DecodeScore {
    let r = truth.tags();
    let streams = decoded.bits.len();
    let mut per_tag = vec![false; r];
    if streams >= r {
        for (t, ok) in per_tag.iter_mut().enumerate() {
            *ok = decoded.bits[t] == truth.payloads[t];
        }
        return DecodeScore { per_tag };
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::with_capacity(streams * r);
    for (s, bits) in decoded.bits.iter().enumerate() {
        for (t, payload) in truth.payloads.iter().enumerate() {
            pairs.push((agreement(bits, payload), s, t));
        }
    }
    // highest agreement first, then lowest stream, then lowest tag
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut stream_used = vec![false; streams];
    let mut tag_used = vec![false; r];
    for (agree, s, t) in pairs {
        if stream_used[s] || tag_used[t] {
            continue;
        }
        stream_used[s] = true;
        tag_used[t] = true;
        per_tag[t] = agree == RN16_LEN;
    }
    DecodeScore { per_tag }
}
