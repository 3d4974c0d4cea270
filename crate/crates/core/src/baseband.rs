//! Complex-baseband model of one inventory slot.
//!
//! A slot carries `PILOT_LEN` orthogonal pilot symbols followed by the
//! `RN16_LEN`-symbol RN16 reply of every colliding tag. Tags are symbol
//! synchronous and use a rectangular pulse, so each symbol is held for
//! `oversampling` samples. The received sample is
//! `s = sum_i h_i a_i + L + n`, with `n ~ CN(0, N0)` drawn per sample.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chanest::pilot_matrix;
use crate::error::{Error, Result};
use crate::fsa::MAX_RESOLVABLE;
use crate::scalar::Scalar;

pub const PILOT_LEN: usize = 4;
pub const RN16_LEN: usize = 16;
pub const SLOT_SYMBOLS: usize = PILOT_LEN + RN16_LEN;
pub const DEFAULT_OVERSAMPLING: usize = 8;

/// One RN16 reply as antipodal symbols: `+1` reflect, `-1` absorb.
pub type Rn16 = [i8; RN16_LEN];

/// Composite per-tag gains `h_i` (forward, backward and differential RCS).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector<T> {
    gains: Vec<Complex<T>>,
}

impl<T: Scalar> ChannelVector<T> {
    pub fn new(gains: Vec<Complex<T>>) -> Result<Self> {
        if gains.is_empty() || gains.len() > MAX_RESOLVABLE {
            return Err(Error::domain(format!("channel vector needs 1..={MAX_RESOLVABLE} gains, got {}", gains.len())));
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::domain("channel gains must be finite"));
        }
        Ok(Self { gains })
    }

    pub fn gains(&self) -> &[Complex<T>] {
        &self.gains
    }

    pub fn tags(&self) -> usize {
        self.gains.len()
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        Self { gains: self.gains.iter().map(|g| g * c).collect() }
    }
}

/// Noise and leakage of a slot. An infinite SNR means noiseless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub leakage: Complex<f64>,
}

impl NoiseConfig {
    pub fn new(snr_db: f64) -> Self {
        Self { snr_db, leakage: Complex::new(0.0, 0.0) }
    }

    pub fn noiseless() -> Self {
        Self::new(f64::INFINITY)
    }

    pub fn with_leakage(mut self, leakage: Complex<f64>) -> Self {
        self.leakage = leakage;
        self
    }

    pub fn noise_power(&self) -> f64 {
        snr_to_noise_power(self.snr_db)
    }
}

/// `N0` for unit-power gains and symbols: `10^(-snr_db/10)`.
pub fn snr_to_noise_power(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Draw `r` i.i.d. `CN(0, 1)` gains.
pub fn sample_channel<T: Scalar, R: Rng + ?Sized>(r: usize, rng: &mut R) -> Result<ChannelVector<T>> {
    if !(1..=MAX_RESOLVABLE).contains(&r) {
        return Err(Error::domain(format!("tag count {r} outside 1..={MAX_RESOLVABLE}")));
    }
    let gains = (0..r).map(|_| complex_normal(rng, 1.0)).collect();
    ChannelVector::new(gains)
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
pub fn complex_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex<T> {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(T::lit(re * s), T::lit(im * s))
}

pub fn generate_rn16<R: Rng + ?Sized>(rng: &mut R) -> Rn16 {
    let mut out = [0i8; RN16_LEN];
    for v in &mut out {
        *v = if rng.random::<bool>() { 1 } else { -1 };
    }
    out
}

/// Ground truth attached to simulated slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTruth<T> {
    pub channel: ChannelVector<T>,
    pub payloads: Vec<Rn16>,
}

impl<T> SlotTruth<T> {
    pub fn tags(&self) -> usize {
        self.payloads.len()
    }
}

/// Received samples of one slot: pilots then payload, `oversampling` samples
/// per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSignal<T> {
    pub samples: Vec<Complex<T>>,
    pub oversampling: usize,
    pub pilot_len: usize,
    pub payload_len: usize,
    pub truth: Option<SlotTruth<T>>,
}

impl<T: Scalar> SlotSignal<T> {
    pub fn from_samples(samples: Vec<Complex<T>>, oversampling: usize) -> Result<Self> {
        if oversampling == 0 || samples.len() != SLOT_SYMBOLS * oversampling {
            return Err(Error::shape(format!(
                "slot needs {SLOT_SYMBOLS} x oversampling samples, got {} at oversampling {oversampling}",
                samples.len()
            )));
        }
        Ok(Self { samples, oversampling, pilot_len: PILOT_LEN, payload_len: RN16_LEN, truth: None })
    }

    pub fn symbols(&self) -> usize {
        self.pilot_len + self.payload_len
    }

    /// Subtract the slot sample mean, the leakage estimate used when the
    /// carrier leakage term is enabled.
    pub fn remove_leakage(&mut self) {
        let n = T::lit(self.samples.len() as f64);
        let mean = self.samples.iter().fold(Complex::new(T::zero(), T::zero()), |a, s| a + s) / n;
        for s in &mut self.samples {
            *s -= mean;
        }
    }

    /// Interleaved `(re, im)` reals of the raw samples, optionally skipping
    /// the pilot segment.
    pub fn interleaved(&self, include_pilots: bool) -> Vec<T> {
        let start = if include_pilots { 0 } else { self.pilot_len * self.oversampling };
        self.samples[start..].iter().flat_map(|s| [s.re, s.im]).collect()
    }
}

/// Tag `i` antipodal symbol at slot symbol position `k`.
fn tag_symbol(pilots: &[[i8; PILOT_LEN]], payloads: &[Rn16], i: usize, k: usize) -> i8 {
    if k < PILOT_LEN {
        pilots[i][k]
    } else {
        payloads[i][k - PILOT_LEN]
    }
}

/// Build the received slot for channel `h`, one RN16 per tag.
pub fn synthesize_slot<T: Scalar, R: Rng + ?Sized>(
    h: &ChannelVector<T>,
    payloads: &[Rn16],
    noise: &NoiseConfig,
    oversampling: usize,
    rng: &mut R,
) -> Result<SlotSignal<T>> {
    let r = h.tags();
    if payloads.len() != r {
        return Err(Error::shape(format!("{r} gains but {} payloads", payloads.len())));
    }
    if oversampling == 0 {
        return Err(Error::shape("oversampling must be at least 1"));
    }
    let pilots = pilot_matrix(r)?;
    let n0 = noise.noise_power();
    let leak = Complex::new(T::lit(noise.leakage.re), T::lit(noise.leakage.im));
    let mut samples = Vec::with_capacity(SLOT_SYMBOLS * oversampling);
    for k in 0..SLOT_SYMBOLS {
        let clean = h
            .gains()
            .iter()
            .enumerate()
            .fold(leak, |acc, (i, g)| acc + g * T::lit(tag_symbol(pilots.rows(), payloads, i, k) as f64));
        for _ in 0..oversampling {
            let n = if n0 > 0.0 { complex_normal(rng, n0) } else { Complex::new(T::zero(), T::zero()) };
            samples.push(clean + n);
        }
    }
    Ok(SlotSignal {
        samples,
        oversampling,
        pilot_len: PILOT_LEN,
        payload_len: RN16_LEN,
        truth: Some(SlotTruth { channel: h.clone(), payloads: payloads.to_vec() }),
    })
}

/// Draw a fresh channel and RN16s for `r` tags and synthesize the slot.
pub fn simulate_slot<T: Scalar, R: Rng + ?Sized>(
    r: usize,
    noise: &NoiseConfig,
    oversampling: usize,
    rng: &mut R,
) -> Result<SlotSignal<T>> {
    let h = sample_channel(r, rng)?;
    let payloads: Vec<Rn16> = (0..r).map(|_| generate_rn16(rng)).collect();
    synthesize_slot(&h, &payloads, noise, oversampling, rng)
}

/// Mean of each symbol's `oversampling` samples.
pub fn symbol_average<T: Scalar>(slot: &SlotSignal<T>) -> Vec<Complex<T>> {
    let os = T::lit(slot.oversampling as f64);
    slot.samples
        .chunks(slot.oversampling)
        .map(|chunk| chunk.iter().fold(Complex::new(T::zero(), T::zero()), |a, s| a + s) / os)
        .collect()
}

/// One constellation point `sum_i sign_i h_i` with its sign pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Level<T> {
    pub value: Complex<T>,
    pub pattern: Vec<i8>,
}

/// Sign of tag `tag` in level `index` for `r` tags: tag 0 is the most
/// significant bit and a set bit means `-1`, so index 0 is all `+1`.
pub fn pattern_sign(index: usize, tag: usize, r: usize) -> i8 {
    if (index >> (r - 1 - tag)) & 1 == 1 {
        -1
    } else {
        1
    }
}

/// All `2^R` noiseless levels of a slot.
pub fn ideal_levels<T: Scalar>(h: &ChannelVector<T>) -> Vec<Level<T>> {
    let r = h.tags();
    (0..1usize << r)
        .map(|idx| {
            let pattern: Vec<i8> = (0..r).map(|i| pattern_sign(idx, i, r)).collect();
            let value = h
                .gains()
                .iter()
                .zip(&pattern)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (g, &s)| acc + g * T::lit(s as f64));
            Level { value, pattern }
        })
        .collect()
}
