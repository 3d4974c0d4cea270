//! Experiment configuration, read from TOML with three sections.
//!
//! ```toml
//! [experiment]
//! snr_db = [0.0, 10.0, 20.0, 30.0]
//! max_resolvable = 4
//! max_decodable = 1
//! count_method = "cnn"      # gmm | fnn | cnn | oracle
//! channel_method = "nn"     # nn | ls | oracle
//! tags = 1000
//! frame_slots = "optimal"   # or a slot count
//! seed = 1
//!
//! [training]
//! samples_per_class = 10000
//!
//! [io]
//! run_dir = "runs/demo"
//! ```
//!
//! Every key is optional except `io.run_dir`; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseband::DEFAULT_OVERSAMPLING;
use crate::chanest::ChannelMethod;
use crate::count::{CountMethod, FeatureOptions};
use crate::error::{Error, Result};
use crate::fsa::{RecoveryCapability, MAX_RESOLVABLE};

/// `"optimal"` or a fixed number of slots per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSlots {
    Optimal,
    Fixed(usize),
}

impl Serialize for FrameSlots {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FrameSlots::Optimal => s.serialize_str("optimal"),
            FrameSlots::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for FrameSlots {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Slots(u64),
        }
        match Repr::deserialize(d)? {
            Repr::Name(n) if n == "optimal" => Ok(FrameSlots::Optimal),
            Repr::Name(n) => Err(serde::de::Error::custom(format!("frame_slots must be \"optimal\" or a count, got {n:?}"))),
            Repr::Slots(k) => Ok(FrameSlots::Fixed(k as usize)),
        }
    }
}

/// 0 to 30 dB in 2 dB steps.
pub fn default_snr_sweep() -> Vec<f64> {
    (0..=15).map(|i| 2.0 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub snr_db: Vec<f64>,
    pub max_resolvable: usize,
    pub max_decodable: usize,
    pub count_method: CountMethod,
    pub channel_method: ChannelMethod,
    /// Frames per SNR point; when absent, enough frames for 20 000 slots.
    pub frames: Option<usize>,
    pub tags: usize,
    pub frame_slots: FrameSlots,
    pub seed: u64,
    pub oversampling: usize,
    /// Carrier leakage `[re, im]` added to every sample.
    pub leakage: [f64; 2],
    pub remove_leakage: bool,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            snr_db: default_snr_sweep(),
            max_resolvable: MAX_RESOLVABLE,
            max_decodable: 1,
            count_method: CountMethod::Cnn,
            channel_method: ChannelMethod::Nn,
            frames: None,
            tags: 1000,
            frame_slots: FrameSlots::Optimal,
            seed: 1,
            oversampling: DEFAULT_OVERSAMPLING,
            leakage: [0.0, 0.0],
            remove_leakage: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub snr_db: f64,
    pub samples_per_class: usize,
    /// Held-out slots per tag count for `eval-count` and `eval-chan`.
    pub test_per_class: usize,
    /// Smaller test budget for the mixture estimator, which is slow.
    pub gmm_test_per_class: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub count_epochs: usize,
    pub channel_epochs: usize,
    pub channel_batch_size: usize,
    pub include_pilots: bool,
    pub symbol_averaged: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            snr_db: 20.0,
            samples_per_class: 10_000,
            test_per_class: 2_000,
            gmm_test_per_class: 250,
            learning_rate: 1e-3,
            batch_size: 1024,
            count_epochs: 30,
            channel_epochs: 800,
            channel_batch_size: 1024,
            include_pilots: true,
            symbol_averaged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub training: TrainingSection,
    pub io: IoSection,
}

impl ExperimentConfig {
    pub fn with_run_dir(run_dir: impl Into<PathBuf>) -> Self {
        Self {
            experiment: ExperimentSection::default(),
            training: TrainingSection::default(),
            io: IoSection { run_dir: run_dir.into() },
        }
    }

    /// Parse and validate. Relative `run_dir` paths stay relative to the
    /// working directory.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact { key: "--config".into(), path: path.into() },
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded. The worker count
    /// does not affect results and is left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.experiment.workers = 0;
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    pub fn capability(&self) -> Result<RecoveryCapability> {
        RecoveryCapability::new(self.experiment.max_resolvable, self.experiment.max_decodable)
            .map_err(|e| Error::Config(format!("experiment.max_resolvable/max_decodable: {e}")))
    }

    pub fn features(&self) -> FeatureOptions {
        FeatureOptions { include_pilots: self.training.include_pilots, symbol_averaged: self.training.symbol_averaged }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Config(format!("{key}: {msg}")));
        let e = &self.experiment;
        if e.snr_db.is_empty() {
            return bad("experiment.snr_db", "needs at least one value");
        }
        if e.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("experiment.snr_db", "values must be finite");
        }
        self.capability()?;
        if e.frames == Some(0) {
            return bad("experiment.frames", "must be at least 1");
        }
        if e.tags == 0 {
            return bad("experiment.tags", "must be at least 1");
        }
        if e.frame_slots == FrameSlots::Fixed(0) {
            return bad("experiment.frame_slots", "must be at least 1");
        }
        if e.seed > i64::MAX as u64 {
            return bad("experiment.seed", "must fit in a signed 64-bit integer");
        }
        if e.oversampling == 0 {
            return bad("experiment.oversampling", "must be at least 1");
        }
        if e.leakage.iter().any(|v| !v.is_finite()) {
            return bad("experiment.leakage", "values must be finite");
        }
        let t = &self.training;
        if !t.snr_db.is_finite() {
            return bad("training.snr_db", "must be finite");
        }
        for (key, v) in [
            ("training.samples_per_class", t.samples_per_class),
            ("training.test_per_class", t.test_per_class),
            ("training.gmm_test_per_class", t.gmm_test_per_class),
            ("training.batch_size", t.batch_size),
            ("training.channel_batch_size", t.channel_batch_size),
        ] {
            if v == 0 {
                return bad(key, "must be at least 1");
            }
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return bad("training.learning_rate", "must be positive");
        }
        if self.io.run_dir.as_os_str().is_empty() {
            return bad("io.run_dir", "must not be empty");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("[io]\nrun_dir = \"r\"\n").unwrap();
        assert_eq!(cfg.experiment.snr_db.len(), 16);
        assert_eq!(cfg.experiment.snr_db[15], 30.0);
        assert_eq!(cfg.experiment.tags, 1000);
        assert_eq!(cfg.experiment.frame_slots, FrameSlots::Optimal);
        assert_eq!(cfg.training.snr_db, 20.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml("[io]\nrun_dir = \"r\"\n[experiment]\nsnr = [1.0]\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("snr"), "{err}");
        assert!(ExperimentConfig::from_toml("[io]\nrun_dir = \"r\"\n[extra]\n").is_err());
        assert!(ExperimentConfig::from_toml("[experiment]\n").is_err());
    }

    #[test]
    fn invariants_checked() {
        for bad in [
            "[experiment]\nsnr_db = []",
            "[experiment]\nframes = 0",
            "[experiment]\nmax_resolvable = 5",
            "[experiment]\nmax_resolvable = 2\nmax_decodable = 3",
            "[experiment]\nframe_slots = \"best\"",
            "[experiment]\ncount_method = \"svm\"",
            "[training]\nbatch_size = 0",
        ] {
            let text = format!("{bad}\n[io]\nrun_dir = \"r\"\n");
            let err = ExperimentConfig::from_toml(&text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn round_trip_and_hash() {
        let text = "[experiment]\nsnr_db = [20.0]\nframe_slots = 300\ncount_method = \"oracle\"\nchannel_method = \"ls\"\n[io]\nrun_dir = \"r\"\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.experiment.frame_slots, FrameSlots::Fixed(300));
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
        let mut other = cfg.clone();
        other.experiment.seed += 1;
        assert_ne!(other.hash(), cfg.hash());
        let mut threads = cfg.clone();
        threads.experiment.workers = 7;
        assert_eq!(threads.hash(), cfg.hash());
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("--config"));
    }
}
