//! Simulated slot datasets and their binary file format.
//!
//! Layout, all little-endian: magic `RFDS`, `u32` version, `u32` tag count,
//! `u64` record count, `u32` oversampling, `f64` SNR in dB. Each record holds
//! the slot samples as interleaved `f32` I/Q, a `u32` tag count, `2R` `f32`
//! gains (re, im) and one `u16` per tag with the RN16 bits, first symbol in
//! the most significant bit and `1` meaning `+1`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;

use crate::baseband::{simulate_slot, ChannelVector, NoiseConfig, Rn16, SlotSignal, SlotTruth, RN16_LEN, SLOT_SYMBOLS};
use crate::error::{Error, Result};
use crate::fsa::MAX_RESOLVABLE;
use crate::rng::{self, domain};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"RFDS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub tags: usize,
    pub count: usize,
    pub oversampling: usize,
    pub snr_db: f64,
}

/// `count` slots of exactly `r` tags. Slot `i` draws from its own seed
/// stream, so the result does not depend on the thread count.
pub fn generate_slots<T: Scalar>(
    r: usize,
    count: usize,
    noise: &NoiseConfig,
    oversampling: usize,
    seed: u64,
) -> Result<Vec<SlotSignal<T>>> {
    if !(1..=MAX_RESOLVABLE).contains(&r) {
        return Err(Error::domain(format!("tag count {r} outside 1..={MAX_RESOLVABLE}")));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::seeded(rng::derive_seed(seed, domain::DATASET, ((r as u64) << 40) | i as u64));
            simulate_slot(r, noise, oversampling, &mut g)
        })
        .collect()
}

fn pack_bits(bits: &Rn16) -> u16 {
    bits.iter().fold(0u16, |acc, &b| (acc << 1) | u16::from(b > 0))
}

fn unpack_bits(word: u16) -> Rn16 {
    let mut out = [0i8; RN16_LEN];
    for (k, b) in out.iter_mut().enumerate() {
        *b = if word >> (RN16_LEN - 1 - k) & 1 == 1 { 1 } else { -1 };
    }
    out
}

pub fn write_slots<T: Scalar, W: Write>(mut w: W, snr_db: f64, slots: &[SlotSignal<T>]) -> Result<()> {
    let first = slots.first().ok_or_else(|| Error::shape("no slots to write"))?;
    let tags = first.truth.as_ref().map_or(0, |t| t.tags());
    let os = first.oversampling;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tags as u32).to_le_bytes())?;
    w.write_all(&(slots.len() as u64).to_le_bytes())?;
    w.write_all(&(os as u32).to_le_bytes())?;
    w.write_all(&snr_db.to_le_bytes())?;
    for slot in slots {
        let truth = slot.truth.as_ref().ok_or_else(|| Error::shape("slot without ground truth"))?;
        if truth.tags() != tags || slot.oversampling != os {
            return Err(Error::shape("all slots in a dataset file share tag count and oversampling"));
        }
        for s in &slot.samples {
            w.write_all(&s.re.as_f32().to_le_bytes())?;
            w.write_all(&s.im.as_f32().to_le_bytes())?;
        }
        w.write_all(&(tags as u32).to_le_bytes())?;
        for g in truth.channel.gains() {
            w.write_all(&g.re.as_f32().to_le_bytes())?;
            w.write_all(&g.im.as_f32().to_le_bytes())?;
        }
        for p in &truth.payloads {
            w.write_all(&pack_bits(p).to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::format("dataset", format!("truncated: {e}")))?;
    Ok(buf)
}

fn take_f32<T: Scalar>(r: &mut impl Read) -> Result<T> {
    Ok(T::lit(f32::from_le_bytes(take(r)?) as f64))
}

pub fn read_slots<T: Scalar, R: Read>(mut r: R) -> Result<(DatasetHeader, Vec<SlotSignal<T>>)> {
    if &take::<4>(&mut r)? != MAGIC {
        return Err(Error::format("dataset", "bad magic"));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::format("dataset", format!("unsupported version {version}")));
    }
    let tags = u32::from_le_bytes(take(&mut r)?) as usize;
    let count = u64::from_le_bytes(take(&mut r)?) as usize;
    let oversampling = u32::from_le_bytes(take(&mut r)?) as usize;
    let snr_db = f64::from_le_bytes(take(&mut r)?);
    if !(1..=MAX_RESOLVABLE).contains(&tags) || oversampling == 0 {
        return Err(Error::format("dataset", format!("header tags {tags}, oversampling {oversampling}")));
    }
    let header = DatasetHeader { tags, count, oversampling, snr_db };
    let n = SLOT_SYMBOLS * oversampling;
    let mut slots = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            samples.push(Complex::new(take_f32(&mut r)?, take_f32(&mut r)?));
        }
        let rec_tags = u32::from_le_bytes(take(&mut r)?) as usize;
        if rec_tags != tags {
            return Err(Error::format("dataset", format!("record has {rec_tags} tags, header {tags}")));
        }
        let mut gains = Vec::with_capacity(tags);
        for _ in 0..tags {
            gains.push(Complex::new(take_f32(&mut r)?, take_f32(&mut r)?));
        }
        let mut payloads = Vec::with_capacity(tags);
        for _ in 0..tags {
            payloads.push(unpack_bits(u16::from_le_bytes(take(&mut r)?)));
        }
        let mut slot = SlotSignal::from_samples(samples, oversampling)?;
        slot.truth = Some(SlotTruth { channel: ChannelVector::new(gains)?, payloads });
        slots.push(slot);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::format("dataset", "trailing bytes"));
    }
    Ok((header, slots))
}

pub fn save_slots<T: Scalar>(path: &Path, snr_db: f64, slots: &[SlotSignal<T>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_slots(&mut w, snr_db, slots)?;
    w.flush()?;
    Ok(())
}

pub fn load_slots<T: Scalar>(path: &Path) -> Result<(DatasetHeader, Vec<SlotSignal<T>>)> {
    read_slots(BufReader::new(File::open(path)?))
}
