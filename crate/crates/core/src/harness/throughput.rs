//! Monte Carlo throughput of a full receiver pipeline over an SNR sweep.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseband::{simulate_slot, NoiseConfig, SlotSignal};
use crate::chanest::{ls_estimate, pilot_observations, ChannelEstimate, ChannelEstimator, ChannelMethod};
use crate::count::{gmm_estimate_tag_count, CountMethod, TagCountClassifier};
use crate::decoder::{min_distance_decode, score_decode};
use crate::error::{Error, Result};
use crate::fsa::{assign_slots, FrameConfig, RecoveryCapability};
use crate::rng::{self, domain};

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.959_963_984_540_054;

pub enum CountStage {
    Oracle,
    Gmm,
    Classifier(TagCountClassifier<f32>),
}

impl CountStage {
    pub fn method(&self) -> CountMethod {
        match self {
            CountStage::Oracle => CountMethod::Oracle,
            CountStage::Gmm => CountMethod::Gmm,
            CountStage::Classifier(c) => c.method(),
        }
    }
}

pub enum ChannelStage {
    Oracle,
    Ls,
    /// Estimator for `R` at index `R - 1`; counts without one are not
    /// decodable.
    Nn(Vec<Option<ChannelEstimator<f32>>>),
}

impl ChannelStage {
    pub fn method(&self) -> ChannelMethod {
        match self {
            ChannelStage::Oracle => ChannelMethod::Oracle,
            ChannelStage::Ls => ChannelMethod::Ls,
            ChannelStage::Nn(_) => ChannelMethod::Nn,
        }
    }
}

pub struct Pipeline {
    pub count: CountStage,
    pub channel: ChannelStage,
}

impl Pipeline {
    pub fn oracle() -> Self {
        Self { count: CountStage::Oracle, channel: ChannelStage::Oracle }
    }
}

/// Everything but the SNR that fixes a throughput simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputSpec {
    pub capability: RecoveryCapability,
    pub frame: FrameConfig,
    pub frames: usize,
    pub seed: u64,
    pub oversampling: usize,
    pub leakage: Complex<f64>,
    pub remove_leakage: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputPoint {
    pub snr_db: f64,
    pub throughput: f64,
    pub ci_half_width: f64,
    pub slots: usize,
    pub decoded: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputCurve {
    pub points: Vec<ThroughputPoint>,
}

/// Mean and 95% half-width of per-slot decoded counts.
pub fn mean_ci(values: &[u8]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

fn oracle_gains(slot: &SlotSignal<f32>, r_hat: usize) -> Vec<Complex<f32>> {
    let truth = slot.truth.as_ref().expect("simulated slots carry truth").channel.gains();
    (0..r_hat).map(|i| truth.get(i).copied().unwrap_or_default()).collect()
}

fn channel_estimate(stage: &ChannelStage, slot: &SlotSignal<f32>, r_hat: usize) -> Result<Option<ChannelEstimate<f32>>> {
    Ok(match stage {
        ChannelStage::Oracle => Some(ChannelEstimate { gains: oracle_gains(slot, r_hat), method: ChannelMethod::Oracle }),
        ChannelStage::Ls => Some(ls_estimate(&pilot_observations(slot), r_hat)?),
        ChannelStage::Nn(models) => match models.get(r_hat - 1) {
            Some(Some(m)) => Some(m.estimate_from_pilots(&pilot_observations(slot))?),
            _ => None,
        },
    })
}

/// Tags credited for one slot after count estimate `r_hat`.
fn decode_slot(pipeline: &Pipeline, cap: RecoveryCapability, slot: &SlotSignal<f32>, r_hat: usize) -> Result<u8> {
    if r_hat == 0 || r_hat > cap.max_resolvable() {
        return Ok(0);
    }
    let Some(est) = channel_estimate(&pipeline.channel, slot, r_hat)? else {
        return Ok(0);
    };
    let decoded = min_distance_decode(slot, &est)?;
    let truth = slot.truth.as_ref().expect("simulated slots carry truth");
    Ok(score_decode(&decoded, truth).capped(cap.max_decodable()) as u8)
}

/// Per-slot decoded counts of one frame at one SNR, in slot order.
pub fn simulate_frame(pipeline: &Pipeline, spec: &ThroughputSpec, snr_db: f64, frame: usize) -> Result<Vec<u8>> {
    let cap = spec.capability;
    let occupancy = assign_slots(spec.frame, &mut rng::seeded(rng::derive_seed(spec.seed, domain::FRAME, frame as u64)));
    let noise = NoiseConfig::new(snr_db).with_leakage(spec.leakage);
    // slots the receiver attempts: at least one tag, at most M
    let active: Vec<(usize, usize)> = occupancy
        .slots()
        .iter()
        .enumerate()
        .filter(|(_, tags)| (1..=cap.max_resolvable()).contains(&tags.len()))
        .map(|(k, tags)| (k, tags.len()))
        .collect();
    let slots: Vec<SlotSignal<f32>> = active
        .par_iter()
        .map(|&(k, r)| {
            let seed = rng::derive_seed(spec.seed, domain::SLOT, ((frame as u64) << 32) | k as u64);
            let mut slot = simulate_slot(r, &noise, spec.oversampling, &mut rng::seeded(seed))?;
            if spec.remove_leakage {
                slot.remove_leakage();
            }
            Ok(slot)
        })
        .collect::<Result<_>>()?;
    let counts: Vec<usize> = match &pipeline.count {
        CountStage::Oracle => active.iter().map(|&(_, r)| r).collect(),
        CountStage::Gmm => active
            .par_iter()
            .zip(&slots)
            .map(|(&(k, _), slot)| {
                let seed = rng::derive_seed(spec.seed, domain::GMM, ((frame as u64) << 32) | k as u64);
                let points: Vec<Complex<f64>> = slot.samples.iter().map(|s| Complex::new(s.re as f64, s.im as f64)).collect();
                Ok(gmm_estimate_tag_count(&points, seed)?.tags)
            })
            .collect::<Result<_>>()?,
        CountStage::Classifier(c) => c.estimate_batch(&slots)?.iter().map(|e| e.tags).collect(),
    };
    let credited: Vec<u8> = slots
        .par_iter()
        .zip(&counts)
        .map(|(slot, &r_hat)| decode_slot(pipeline, cap, slot, r_hat))
        .collect::<Result<_>>()?;
    let mut per_slot = vec![0u8; spec.frame.slots()];
    for (&(k, _), c) in active.iter().zip(credited) {
        per_slot[k] = c;
    }
    Ok(per_slot)
}

/// Throughput (decoded tags per slot) at each SNR. Slot and frame random
/// streams do not depend on the SNR, so curves use common random numbers
/// across SNR points and across pipelines.
pub fn run_throughput(pipeline: &Pipeline, spec: &ThroughputSpec, snr_db: &[f64]) -> Result<ThroughputCurve> {
    if spec.frames == 0 {
        return Err(Error::Config("experiment.frames: must be at least 1".into()));
    }
    if snr_db.is_empty() {
        return Err(Error::Config("experiment.snr_db: needs at least one value".into()));
    }
    let mut points = Vec::with_capacity(snr_db.len());
    for &snr in snr_db {
        let mut all = Vec::with_capacity(spec.frames * spec.frame.slots());
        for f in 0..spec.frames {
            all.extend(simulate_frame(pipeline, spec, snr, f)?);
        }
        let (throughput, ci_half_width) = mean_ci(&all);
        let decoded = all.iter().map(|&v| v as u64).sum();
        points.push(ThroughputPoint { snr_db: snr, throughput, ci_half_width, slots: all.len(), decoded });
    }
    Ok(ThroughputCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::theoretical_throughput;

    fn spec(m: usize, j: usize, n: usize, k: usize, frames: usize) -> ThroughputSpec {
        ThroughputSpec {
            capability: RecoveryCapability::new(m, j).unwrap(),
            frame: FrameConfig::new(n, k).unwrap(),
            frames,
            seed: 11,
            oversampling: 8,
            leakage: Complex::new(0.0, 0.0),
            remove_leakage: false,
        }
    }

    #[test]
    fn ci_of_constant_is_zero() {
        assert_eq!(mean_ci(&[1, 1, 1, 1]), (1.0, 0.0));
        let (m, h) = mean_ci(&[0, 1]);
        assert_eq!(m, 0.5);
        assert!((h - Z95 * (0.5f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn conventional_oracle_matches_theory() {
        let s = spec(1, 1, 100, 100, 300);
        let curve = run_throughput(&Pipeline::oracle(), &s, &[40.0]).unwrap();
        let p = curve.points[0];
        let theory: f64 = theoretical_throughput(s.frame, s.capability);
        assert_eq!(p.slots, 30_000);
        assert!((p.throughput - theory).abs() < 2.0 * p.ci_half_width, "{} vs {theory}", p.throughput);
    }

    #[test]
    fn ls_pipeline_decodes_collisions_at_high_snr() {
        let s = spec(4, 4, 60, 30, 20);
        let oracle = run_throughput(&Pipeline::oracle(), &s, &[40.0]).unwrap().points[0];
        let ls = Pipeline { count: CountStage::Oracle, channel: ChannelStage::Ls };
        let ls = run_throughput(&ls, &s, &[40.0]).unwrap().points[0];
        assert!(ls.throughput > 1.0);
        assert!((ls.throughput - oracle.throughput).abs() <= oracle.ci_half_width);
    }

    #[test]
    fn curve_has_one_point_per_snr_and_is_monotone() {
        let s = spec(4, 2, 60, 30, 10);
        let ls = Pipeline { count: CountStage::Oracle, channel: ChannelStage::Ls };
        let c = run_throughput(&ls, &s, &[0.0, 10.0, 20.0]).unwrap();
        assert_eq!(c.points.len(), 3);
        for w in c.points.windows(2) {
            assert!(w[1].throughput + w[1].ci_half_width >= w[0].throughput - w[0].ci_half_width);
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let s = spec(4, 4, 40, 20, 3);
        let ls = Pipeline { count: CountStage::Gmm, channel: ChannelStage::Ls };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_throughput(&ls, &s, &[15.0])).unwrap();
        let b = four.install(|| run_throughput(&ls, &s, &[15.0])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nn_stage_without_model_scores_zero() {
        let s = spec(2, 2, 20, 20, 2);
        let p = Pipeline { count: CountStage::Oracle, channel: ChannelStage::Nn(vec![None, None]) };
        let c = run_throughput(&p, &s, &[30.0]).unwrap();
        assert_eq!(c.points[0].decoded, 0);
    }

    #[test]
    fn rejects_empty_sweep() {
        assert!(run_throughput(&Pipeline::oracle(), &spec(1, 1, 10, 10, 1), &[]).is_err());
    }
}
