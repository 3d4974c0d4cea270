//! Run directory layout and the manifest that makes a run reproducible.
//!
//! `manifest.toml` holds the crate version, the config hash, the seed of
//! every random stream family, the full resolved config and one entry per
//! completed subcommand with the SHA-256 of each file it wrote. It carries
//! no timestamps, so rerunning from it reproduces it byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{default_snr_sweep, ExperimentConfig};
use crate::count::CountMethod;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Paths inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn train_data(&self, r: usize) -> PathBuf {
        self.root.join("data").join(format!("r{r}_train.rfds"))
    }

    pub fn test_data(&self, r: usize) -> PathBuf {
        self.root.join("data").join(format!("r{r}_test.rfds"))
    }

    pub fn count_model(&self, method: CountMethod) -> PathBuf {
        self.root.join("models").join(format!("count_{}.rfnn", method.name()))
    }

    pub fn chan_model(&self, r: usize) -> PathBuf {
        self.root.join("models").join(format!("chan_r{r}.rfnn"))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// `path` if it exists, otherwise a missing-artifact error naming `key`.
    pub fn require(&self, path: PathBuf, key: &str) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact { key: key.into(), path })
        }
    }

    /// Path relative to the run directory, `/`-separated.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
    }
}

/// TOML integers are signed 64-bit, so derived seeds are stored as strings.
mod seed_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }

    pub mod array {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[u64; 4], s: S) -> Result<S::Ok, S::Error> {
            v.map(|x| x.to_string()).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u64; 4], D::Error> {
            let text = <[String; 4]>::deserialize(d)?;
            let mut out = [0u64; 4];
            for (o, t) in out.iter_mut().zip(&text) {
                *o = t.parse().map_err(serde::de::Error::custom)?;
            }
            Ok(out)
        }
    }
}

/// Root seeds of every random stream family, all derived from the master.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
    #[serde(with = "seed_text")]
    pub train_data: u64,
    #[serde(with = "seed_text")]
    pub test_data: u64,
    #[serde(with = "seed_text")]
    pub count_fnn: u64,
    #[serde(with = "seed_text")]
    pub count_cnn: u64,
    #[serde(with = "seed_text::array")]
    pub channel: [u64; 4],
    /// Frame, slot and mixture-fit streams of the throughput simulation
    /// are derived from the master directly.
    pub throughput: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            train_data: derive_seed(master, domain::DATASET, 0),
            test_data: derive_seed(master, domain::TEST, 0),
            count_fnn: derive_seed(master, domain::INIT, 1),
            count_cnn: derive_seed(master, domain::INIT, 2),
            channel: [1, 2, 3, 4].map(|r| derive_seed(master, domain::INIT, 10 + r)),
            throughput: master,
        }
    }

    pub fn count(&self, method: CountMethod) -> u64 {
        match method {
            CountMethod::Fnn => self.count_fnn,
            _ => self.count_cnn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub command: String,
    /// Output path (relative to the run directory) to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub crate_version: String,
    pub config_hash: String,
    /// Whether the SNR list is the built-in 0 to 30 dB sweep.
    pub default_snr_sweep: bool,
    pub seeds: Seeds,
    pub steps: Vec<Step>,
    pub config: ExperimentConfig,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: cfg.hash(),
            default_snr_sweep: cfg.experiment.snr_db == default_snr_sweep(),
            seeds: Seeds::from_master(cfg.experiment.seed),
            steps: Vec::new(),
            config: cfg.clone(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.config.validate()?;
        if m.config.hash() != m.config_hash {
            return Err(Error::Config(format!(
                "manifest config hash {} does not match its config ({})",
                m.config_hash,
                m.config.hash()
            )));
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest always serializes")
    }

    /// Record `command` and hash its outputs, replacing an earlier entry
    /// for the same command.
    pub fn record(&mut self, run: &RunDir, command: &str, outputs: &[PathBuf]) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for p in outputs {
            hashes.insert(run.relative(p), sha256_file(p)?);
        }
        let step = Step { command: command.into(), outputs: hashes };
        match self.steps.iter_mut().find(|s| s.command == command) {
            Some(s) => *s = step,
            None => self.steps.push(step),
        }
        Ok(())
    }
}

/// Read a config file, or the config stored in a manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact { key: "--config".into(), path: path.into() },
        _ => Error::Io(e),
    })?;
    let looks_like_manifest = toml::from_str::<toml::Table>(&text).is_ok_and(|t| t.contains_key("config_hash"));
    if looks_like_manifest {
        Ok(Manifest::from_toml(&text)?.config)
    } else {
        ExperimentConfig::from_toml(&text)
    }
}

/// Open the run directory's manifest, creating it for a fresh directory.
/// A directory that already belongs to a different config is refused.
pub fn open_manifest(run: &RunDir, cfg: &ExperimentConfig) -> Result<Manifest> {
    let path = run.file(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Manifest::new(cfg));
    }
    let m = Manifest::from_toml(&std::fs::read_to_string(&path)?)?;
    if m.config_hash != cfg.hash() {
        return Err(Error::Config(format!(
            "io.run_dir {} holds a run of a different config (hash {})",
            run.root().display(),
            m.config_hash
        )));
    }
    Ok(m)
}

pub fn save_manifest(run: &RunDir, m: &Manifest) -> Result<PathBuf> {
    std::fs::create_dir_all(run.root())?;
    let path = run.file(MANIFEST_FILE);
    std::fs::write(&path, m.to_toml())?;
    Ok(path)
}
