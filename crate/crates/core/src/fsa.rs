//! Framed slotted ALOHA: closed-form slot statistics, throughput with
//! collision recovery, optimal frame sizing and slot-choice simulation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest collision multiplicity any receiver in this crate can resolve.
pub const MAX_RESOLVABLE: usize = 4;

/// `N` tags contending in a frame of `K` slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    tags: usize,
    slots: usize,
}

impl FrameConfig {
    pub fn new(tags: usize, slots: usize) -> Result<Self> {
        if tags == 0 || slots == 0 {
            return Err(Error::domain(format!("frame needs N >= 1 and K >= 1, got N={tags}, K={slots}")));
        }
        Ok(Self { tags, slots })
    }

    pub fn tags(&self) -> usize {
        self.tags
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn ratio(&self) -> f64 {
        self.slots as f64 / self.tags as f64
    }
}

/// Receiver capability: resolves collisions of up to `M` tags and decodes up
/// to `J` of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecoveryCapability {
    max_resolvable: usize,
    max_decodable: usize,
}

impl RecoveryCapability {
    pub fn new(max_resolvable: usize, max_decodable: usize) -> Result<Self> {
        if !(1..=MAX_RESOLVABLE).contains(&max_resolvable) || !(1..=max_resolvable).contains(&max_decodable) {
            return Err(Error::domain(format!(
                "capability requires 1 <= J <= M <= {MAX_RESOLVABLE}, got M={max_resolvable}, J={max_decodable}"
            )));
        }
        Ok(Self { max_resolvable, max_decodable })
    }

    /// Plain FSA: singletons only.
    pub fn conventional() -> Self {
        Self { max_resolvable: 1, max_decodable: 1 }
    }

    /// `M`
    pub fn max_resolvable(&self) -> usize {
        self.max_resolvable
    }

    /// `J`
    pub fn max_decodable(&self) -> usize {
        self.max_decodable
    }
}

/// `ln C(n, r)` as a sum of `min(r, n-r)` log ratios.
fn ln_binomial<T: Scalar>(n: usize, r: usize) -> T {
    let m = r.min(n - r);
    (0..m)
        .map(|i| (T::lit((n - i) as f64) / T::lit((i + 1) as f64)).ln())
        .fold(T::zero(), |acc, v| acc + v)
}

/// Expected number of slots holding exactly `r` tags.
///
/// Evaluated in log space so `N` can reach the millions. For `K = 1` the
/// empty-slot factor follows `0^0 = 1`.
pub fn expected_collision_slots<T: Scalar>(cfg: FrameConfig, r: usize) -> Result<T> {
    let (n, k) = (cfg.tags, cfg.slots);
    if r > n {
        return Err(Error::domain(format!("R={r} exceeds tag count N={n}")));
    }
    Ok(expected_unchecked(n, k, r))
}

fn expected_unchecked<T: Scalar>(n: usize, k: usize, r: usize) -> T {
    if r > n {
        return T::zero();
    }
    let kf = T::lit(k as f64);
    if k == 1 {
        return if r == n { T::one() } else { T::zero() };
    }
    let log_empty = (-kf.recip()).ln_1p();
    let log = kf.ln() + ln_binomial::<T>(n, r) - T::lit(r as f64) * kf.ln() + T::lit((n - r) as f64) * log_empty;
    log.exp()
}

/// `E{X_R}` for every `R = 0..=N`, via the pmf ratio recurrence.
pub fn collision_slot_distribution<T: Scalar>(cfg: FrameConfig) -> Vec<T> {
    let (n, k) = (cfg.tags, cfg.slots);
    if k == 1 {
        let mut out = vec![T::zero(); n + 1];
        out[n] = T::one();
        return out;
    }
    let kf = T::lit(k as f64);
    let mut log = kf.ln() + T::lit(n as f64) * (-kf.recip()).ln_1p();
    let log_km1 = T::lit((k - 1) as f64).ln();
    let mut out = Vec::with_capacity(n + 1);
    out.push(log.exp());
    for r in 0..n {
        log += T::lit((n - r) as f64).ln() - T::lit((r + 1) as f64).ln() - log_km1;
        out.push(log.exp());
    }
    out
}

/// Expected decoded tags per slot:
/// `(1/K) * (sum_{R<=J} R E{X_R} + sum_{J<R<=M} J E{X_R})`.
pub fn theoretical_throughput<T: Scalar>(cfg: FrameConfig, cap: RecoveryCapability) -> T {
    let (n, k) = (cfg.tags, cfg.slots);
    let j = cap.max_decodable;
    let total = (1..=cap.max_resolvable).fold(T::zero(), |acc, r| {
        let weight = T::lit(r.min(j) as f64);
        acc + weight * expected_unchecked::<T>(n, k, r)
    });
    total / T::lit(k as f64)
}

/// Best integer frame size for `n` tags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalFrame<T> {
    pub slots: usize,
    /// `K*/N`
    pub ratio: T,
    pub throughput: T,
}

/// Grid search over integer `K in [max(1, N/20), 4N]`; the first maximiser wins.
pub fn optimal_frame_ratio<T: Scalar>(cap: RecoveryCapability, n: usize) -> Result<OptimalFrame<T>> {
    if n == 0 {
        return Err(Error::domain("tag count must be positive"));
    }
    let lo = (n / 20).max(1);
    let mut best = OptimalFrame { slots: lo, ratio: T::zero(), throughput: T::neg_infinity() };
    for k in lo..=4 * n {
        let t = theoretical_throughput::<T>(FrameConfig { tags: n, slots: k }, cap);
        if t > best.throughput {
            best = OptimalFrame { slots: k, ratio: T::zero(), throughput: t };
        }
    }
    best.ratio = T::lit(best.slots as f64) / T::lit(n as f64);
    Ok(best)
}

/// Realised slot choices of one frame: `slots[s]` lists the tag ids in slot `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOccupancy {
    slots: Vec<Vec<usize>>,
}

impl SlotOccupancy {
    pub fn slots(&self) -> &[Vec<usize>] {
        &self.slots
    }

    pub fn occupants(&self, slot: usize) -> &[usize] {
        &self.slots[slot]
    }

    /// `hist[r]` = number of slots holding exactly `r` tags, for `r = 0..=max_r`.
    /// Slots with more than `max_r` tags are not counted.
    pub fn histogram(&self, max_r: usize) -> Vec<usize> {
        let mut hist = vec![0; max_r + 1];
        for s in &self.slots {
            if s.len() <= max_r {
                hist[s.len()] += 1;
            }
        }
        hist
    }
}

/// Every tag picks a slot independently and uniformly.
pub fn assign_slots<R: Rng + ?Sized>(cfg: FrameConfig, rng: &mut R) -> SlotOccupancy {
    let mut slots = vec![Vec::new(); cfg.slots];
    for tag in 0..cfg.tags {
        slots[rng.random_range(0..cfg.slots)].push(tag);
    }
    SlotOccupancy { slots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn cfg(n: usize, k: usize) -> FrameConfig {
        FrameConfig::new(n, k).unwrap()
    }

    #[test]
    fn single_tag_single_slot() {
        let v: f64 = expected_collision_slots(cfg(1, 1), 1).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_values() {
        let v: f64 = expected_collision_slots(cfg(2, 2), 2).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        // 10 * 10 * 0.1 * 0.9^9
        let v: f64 = expected_collision_slots(cfg(10, 10), 1).unwrap();
        assert!((v - 10.0 * 0.9f64.powi(9)).abs() < 1e-12);
    }

    #[test]
    fn r_above_n_is_a_domain_error() {
        assert!(matches!(expected_collision_slots::<f64>(cfg(3, 5), 4), Err(Error::Domain(_))));
    }

    #[test]
    fn k_one_uses_zero_power_zero() {
        let d: Vec<f64> = collision_slot_distribution(cfg(4, 1));
        assert_eq!(d, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let v: f64 = expected_collision_slots(cfg(4, 1), 3).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn throughput_ten_by_ten_m4_j1() {
        // binomial sum for R = 1..4 at N = K = 10
        let oracle: f64 = (1..=4)
            .map(|r| {
                let c = (0..r).fold(1.0, |acc, i| acc * (10 - i) as f64 / (i + 1) as f64);
                c * 0.1f64.powi(r) * 0.9f64.powi(10 - r)
            })
            .sum();
        let t: f64 = theoretical_throughput(cfg(10, 10), RecoveryCapability::new(4, 1).unwrap());
        assert!((t - oracle).abs() < 1e-12);
        assert!((t - 0.6497).abs() < 5e-4);
    }

    #[test]
    fn conventional_peak() {
        let t: f64 = theoretical_throughput(cfg(5000, 5000), RecoveryCapability::conventional());
        assert!((t - 0.368).abs() < 1e-3);
    }

    #[test]
    fn large_frame_limit_approaches_n_over_k() {
        let cap = RecoveryCapability::new(3, 3).unwrap();
        let mut prev_gap = f64::INFINITY;
        for k in [100usize, 1_000, 10_000, 100_000] {
            let t: f64 = theoretical_throughput(cfg(20, k), cap);
            let gap = (20.0 / k as f64 - t).abs() * k as f64 / 20.0;
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3);
    }

    #[test]
    fn capability_bounds() {
        assert!(RecoveryCapability::new(0, 0).is_err());
        assert!(RecoveryCapability::new(5, 1).is_err());
        assert!(RecoveryCapability::new(2, 3).is_err());
        assert!(FrameConfig::new(0, 3).is_err());
    }

    #[test]
    fn f32_and_f64_agree() {
        let cap = RecoveryCapability::new(4, 2).unwrap();
        let a: f32 = theoretical_throughput(cfg(300, 150), cap);
        let b: f64 = theoretical_throughput(cfg(300, 150), cap);
        assert!((a as f64 - b).abs() < 1e-5);
    }

    #[test]
    fn assign_slots_trivial_and_deterministic() {
        let occ = assign_slots(cfg(1, 1), &mut seeded(3));
        assert_eq!(occ.slots(), &[vec![0]]);
        let a = assign_slots(cfg(5, 3), &mut seeded(11));
        let b = assign_slots(cfg(5, 3), &mut seeded(11));
        assert_eq!(a, b);
        let mut ids: Vec<usize> = a.slots().iter().flatten().copied().collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn singleton_count_tracks_closed_form() {
        let c = cfg(10_000, 10_000);
        let mean = (0..100)
            .map(|s| assign_slots(c, &mut seeded(s)).histogram(1)[1] as f64)
            .sum::<f64>()
            / 100.0;
        let expected: f64 = expected_collision_slots(c, 1).unwrap();
        assert!((mean - expected).abs() / expected < 0.02, "{mean} vs {expected}");
    }

    proptest! {
        #[test]
        fn slot_and_tag_conservation(n in 1usize..400, k in 1usize..400) {
            let c = cfg(n, k);
            let d: Vec<f64> = collision_slot_distribution(c);
            let slots: f64 = d.iter().sum();
            let tags: f64 = d.iter().enumerate().map(|(r, e)| r as f64 * e).sum();
            prop_assert!((slots - k as f64).abs() <= 1e-9 * k as f64);
            prop_assert!((tags - n as f64).abs() <= 1e-9 * n as f64);
        }

        #[test]
        fn recurrence_matches_direct_terms(n in 1usize..200, k in 1usize..200, r in 0usize..8) {
            prop_assume!(r <= n);
            let c = cfg(n, k);
            let d: Vec<f64> = collision_slot_distribution(c);
            let direct: f64 = expected_collision_slots(c, r).unwrap();
            prop_assert!((d[r] - direct).abs() <= 1e-10 * (1.0 + direct));
        }

        #[test]
        fn throughput_monotone_in_m_and_j(n in 1usize..300, k in 1usize..300) {
            let c = cfg(n, k);
            for j in 1..=4 {
                for m in j..4 {
                    let lo: f64 = theoretical_throughput(c, RecoveryCapability::new(m, j).unwrap());
                    let hi: f64 = theoretical_throughput(c, RecoveryCapability::new(m + 1, j).unwrap());
                    prop_assert!(hi + 1e-15 >= lo);
                }
            }
            for m in 1..=4 {
                for j in 1..m {
                    let lo: f64 = theoretical_throughput(c, RecoveryCapability::new(m, j).unwrap());
                    let hi: f64 = theoretical_throughput(c, RecoveryCapability::new(m, j + 1).unwrap());
                    prop_assert!(hi + 1e-15 >= lo);
                }
            }
        }
    }
}
