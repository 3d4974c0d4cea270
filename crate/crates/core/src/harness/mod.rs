//! Experiment orchestration: dataset generation, training, evaluation,
//! throughput sweeps and reports, all inside one run directory.
//!
//! Each subcommand is a function taking the resolved config and returning
//! the files it wrote; the manifest is updated after every one.

pub mod config;
pub mod manifest;
pub mod throughput;

use std::path::{Path, PathBuf};

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseband::{NoiseConfig, SlotSignal};
use crate::chanest::{
    channel_dataset, estimate_channels, ls_estimate, per_gain_mse, pilot_observations, train_channel_estimator,
    ChannelEstimator, ChannelMethod,
};
use crate::count::{
    build_cnn_arch, build_fnn_arch, count_dataset, gmm_estimate_tag_count, train_classifier, CountMethod,
    TagCountClassifier,
};
use crate::dataset::{generate_slots, load_slots, save_slots};
use crate::error::{Error, Result};
use crate::fsa::{optimal_frame_ratio, theoretical_throughput, FrameConfig, RecoveryCapability, MAX_RESOLVABLE};
use crate::nn::{checkpoint, Loss, TrainConfig, TrainHistory};
use crate::rng::{derive_seed, domain};

pub use config::{ExperimentConfig, FrameSlots};
pub use manifest::{load_config, Manifest, RunDir, Seeds};
pub use throughput::{
    run_throughput, ChannelStage, CountStage, Pipeline, ThroughputCurve, ThroughputPoint, ThroughputSpec,
};

/// Slots per SNR point when `experiment.frames` is not set.
pub const DEFAULT_SLOTS_PER_POINT: usize = 20_000;

/// Theory grid: K/N from 0.2 to 3.0 in steps of 0.01.
pub fn theory_ratios() -> Vec<f64> {
    (20..=300).map(|i| i as f64 / 100.0).collect()
}

/// Every `(M, J)` with `1 <= J <= M <= 4`.
pub fn all_capabilities() -> Vec<RecoveryCapability> {
    let mut out = Vec::new();
    for m in 1..=MAX_RESOLVABLE {
        for j in 1..=m {
            out.push(RecoveryCapability::new(m, j).expect("valid by construction"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryRow {
    pub max_resolvable: usize,
    pub max_decodable: usize,
    pub tags: usize,
    pub slots: usize,
    pub ratio: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalRow {
    pub max_resolvable: usize,
    pub max_decodable: usize,
    pub tags: usize,
    pub optimal_slots: usize,
    pub optimal_ratio: f64,
    pub throughput: f64,
}

/// Expected throughput over a grid of frame-to-tag ratios (rounded to whole
/// slots) and the optimum of each capability.
pub fn emit_theory_curves(
    caps: &[RecoveryCapability],
    tags: usize,
    ratios: &[f64],
) -> Result<(Vec<TheoryRow>, Vec<OptimalRow>)> {
    let mut curve = Vec::with_capacity(caps.len() * ratios.len());
    let mut optimal = Vec::with_capacity(caps.len());
    for &cap in caps {
        for &ratio in ratios {
            let slots = ((ratio * tags as f64).round() as usize).max(1);
            let cfg = FrameConfig::new(tags, slots)?;
            curve.push(TheoryRow {
                max_resolvable: cap.max_resolvable(),
                max_decodable: cap.max_decodable(),
                tags,
                slots,
                ratio: cfg.ratio(),
                throughput: theoretical_throughput(cfg, cap),
            });
        }
        let best = optimal_frame_ratio::<f64>(cap, tags)?;
        optimal.push(OptimalRow {
            max_resolvable: cap.max_resolvable(),
            max_decodable: cap.max_decodable(),
            tags,
            optimal_slots: best.slots,
            optimal_ratio: best.ratio,
            throughput: best.throughput,
        });
    }
    Ok((curve, optimal))
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format("csv", format!("{other:?}")),
    }
}

/// Run `f` on a pool of `workers` threads (all cores when 0).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("experiment.workers: {e}")))?;
    Ok(pool.install(f))
}

/// A run directory opened for one config.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub dir: RunDir,
    pub manifest: Manifest,
}

impl Run {
    pub fn open(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = RunDir::new(cfg.io.run_dir.clone());
        let manifest = manifest::open_manifest(&dir, &cfg)?;
        Ok(Self { cfg, dir, manifest })
    }

    pub fn seeds(&self) -> &Seeds {
        &self.manifest.seeds
    }

    fn finish(&mut self, command: &str, outputs: Vec<PathBuf>) -> Result<Vec<PathBuf>> {
        self.manifest.record(&self.dir, command, &outputs)?;
        manifest::save_manifest(&self.dir, &self.manifest)?;
        Ok(outputs)
    }

    fn train_noise(&self) -> NoiseConfig {
        let [re, im] = self.cfg.experiment.leakage;
        NoiseConfig::new(self.cfg.training.snr_db).with_leakage(Complex::new(re, im))
    }

    fn prepare(&self, mut slots: Vec<SlotSignal<f32>>) -> Vec<SlotSignal<f32>> {
        if self.cfg.experiment.remove_leakage {
            slots.iter_mut().for_each(SlotSignal::remove_leakage);
        }
        slots
    }

    fn load_split(&self, r: usize, test: bool) -> Result<Vec<SlotSignal<f32>>> {
        let (path, key) = if test {
            (self.dir.test_data(r), format!("data/r{r}_test (run gen-data)"))
        } else {
            (self.dir.train_data(r), format!("data/r{r}_train (run gen-data)"))
        };
        let (_, slots) = load_slots(&self.dir.require(path, &key)?)?;
        Ok(self.prepare(slots))
    }

    /// `gen-data`: training and test slots for every tag count at the
    /// training SNR.
    pub fn gen_data(&mut self) -> Result<Vec<PathBuf>> {
        let t = &self.cfg.training;
        let noise = self.train_noise();
        let os = self.cfg.experiment.oversampling;
        std::fs::create_dir_all(self.dir.root().join("data"))?;
        let mut outputs = Vec::new();
        for r in 1..=MAX_RESOLVABLE {
            for (path, count, seed) in [
                (self.dir.train_data(r), t.samples_per_class, self.seeds().train_data),
                (self.dir.test_data(r), t.test_per_class, self.seeds().test_data),
            ] {
                let slots: Vec<SlotSignal<f32>> = generate_slots(r, count, &noise, os, seed)?;
                save_slots(&path, t.snr_db, &slots)?;
                outputs.push(path);
            }
        }
        self.finish("gen-data", outputs)
    }

    fn train_config(&self, loss: Loss, epochs: usize, batch: usize, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::new(loss, epochs, seed);
        c.learning_rate = self.cfg.training.learning_rate;
        c.batch_size = batch;
        c.keep_best = true;
        c
    }

    /// `train-count --method fnn|cnn`.
    pub fn train_count(&mut self, method: CountMethod) -> Result<Vec<PathBuf>> {
        let features = self.cfg.features();
        let len = features.sequence_len(self.cfg.experiment.oversampling);
        let arch = match method {
            CountMethod::Fnn => build_fnn_arch(len)?,
            CountMethod::Cnn => build_cnn_arch(len)?,
            other => return Err(Error::Config(format!("--method {} has no training step", other.name()))),
        };
        let mut slots = Vec::new();
        for r in 1..=MAX_RESOLVABLE {
            slots.extend(self.load_split(r, false)?);
        }
        let data = count_dataset(&slots, &features)?;
        drop(slots);
        let t = &self.cfg.training;
        let cfg = self.train_config(Loss::CrossEntropy, t.count_epochs, t.batch_size, self.seeds().count(method));
        let outcome = train_classifier(&arch, &data, &cfg)?;
        let model = self.dir.count_model(method);
        std::fs::create_dir_all(model.parent().expect("models dir"))?;
        checkpoint::save(&model, &outcome.network)?;
        let history = self.dir.file(&format!("train_count_{}.csv", method.name()));
        write_csv(&history, &history_rows(&outcome.history))?;
        self.finish(&format!("train-count --method {}", method.name()), vec![model, history])
    }

    pub fn load_classifier(&self, method: CountMethod) -> Result<TagCountClassifier<f32>> {
        let key = format!("models/count_{} (run train-count --method {})", method.name(), method.name());
        let net = checkpoint::load(&self.dir.require(self.dir.count_model(method), &key)?)?;
        TagCountClassifier::new(method, self.cfg.features(), self.cfg.experiment.oversampling, net)
    }

    /// Estimated counts for the test slots of every class, index `R - 1`.
    pub fn count_predictions(&self, method: CountMethod) -> Result<Vec<Vec<usize>>> {
        let clf = match method {
            CountMethod::Fnn | CountMethod::Cnn => Some(self.load_classifier(method)?),
            _ => None,
        };
        let mut out = Vec::new();
        for r in 1..=MAX_RESOLVABLE {
            let slots = self.load_split(r, true)?;
            let pred = match (&clf, method) {
                (Some(c), _) => c.estimate_batch(&slots)?.iter().map(|e| e.tags).collect(),
                (None, CountMethod::Gmm) => {
                    let n = self.cfg.training.gmm_test_per_class.min(slots.len());
                    slots[..n]
                        .par_iter()
                        .enumerate()
                        .map(|(i, s)| {
                            let pts: Vec<Complex<f64>> =
                                s.samples.iter().map(|p| Complex::new(p.re as f64, p.im as f64)).collect();
                            let seed = derive_seed(self.seeds().master, domain::GMM, ((r as u64) << 32) | i as u64);
                            Ok(gmm_estimate_tag_count(&pts, seed)?.tags)
                        })
                        .collect::<Result<_>>()?
                }
                _ => vec![r; slots.len()],
            };
            out.push(pred);
        }
        Ok(out)
    }

    /// `eval-count --method gmm|fnn|cnn`: per-class and overall accuracy on
    /// the test slots.
    pub fn eval_count(&mut self, method: CountMethod) -> Result<Vec<PathBuf>> {
        let pred = self.count_predictions(method)?;
        let rows = accuracy_rows(method, &pred);
        let path = self.dir.file(&format!("count_accuracy_{}.csv", method.name()));
        write_csv(&path, &rows)?;
        self.finish(&format!("eval-count --method {}", method.name()), vec![path])
    }

    /// `train-chan --r R`, or every tag count when `r` is `None`.
    pub fn train_chan(&mut self, r: Option<usize>) -> Result<Vec<PathBuf>> {
        let which: Vec<usize> = match r {
            Some(r) if (1..=MAX_RESOLVABLE).contains(&r) => vec![r],
            Some(r) => return Err(Error::Config(format!("--r {r} outside 1..={MAX_RESOLVABLE}"))),
            None => (1..=MAX_RESOLVABLE).collect(),
        };
        let mut outputs = Vec::new();
        for r in which.iter().copied() {
            let data = channel_dataset(&self.load_split(r, false)?, r)?;
            let t = &self.cfg.training;
            let cfg = self.train_config(Loss::Mse, t.channel_epochs, t.channel_batch_size, self.seeds().channel[r - 1]);
            let (fit, held) = data.split(crate::count::VALIDATION_FRACTION, cfg.seed);
            let (est, outcome) = train_channel_estimator(r, &fit, Some(&held), &cfg)?;
            let model = self.dir.chan_model(r);
            std::fs::create_dir_all(model.parent().expect("models dir"))?;
            checkpoint::save(&model, est.network())?;
            let history = self.dir.file(&format!("train_chan_r{r}.csv"));
            write_csv(&history, &history_rows(&outcome.history))?;
            outputs.extend([model, history]);
        }
        let command = match r {
            Some(r) => format!("train-chan --r {r}"),
            None => "train-chan".into(),
        };
        self.finish(&command, outputs)
    }

    pub fn load_channel_estimator(&self, r: usize) -> Result<ChannelEstimator<f32>> {
        let key = format!("models/chan_r{r} (run train-chan --r {r})");
        ChannelEstimator::new(r, checkpoint::load(&self.dir.require(self.dir.chan_model(r), &key)?)?)
    }

    /// `eval-chan`: per-gain MSE of the least-squares and learned
    /// estimators on the test slots.
    pub fn eval_chan(&mut self) -> Result<Vec<PathBuf>> {
        let mut rows = Vec::new();
        for r in 1..=MAX_RESOLVABLE {
            let est = self.load_channel_estimator(r)?;
            let slots = self.load_split(r, true)?;
            let mut ls = Vec::with_capacity(slots.len());
            let mut nn = Vec::with_capacity(slots.len());
            for s in &slots {
                let truth = s.truth.as_ref().expect("dataset slots carry truth").channel.gains().to_vec();
                ls.push((ls_estimate(&pilot_observations(s), r)?.gains, truth.clone()));
                nn.push((estimate_channels(&est, r, s)?.gains, truth));
            }
            rows.push(ChannelRow {
                tags: r,
                snr_db: self.cfg.training.snr_db,
                samples: slots.len(),
                ls_mse: per_gain_mse(&ls),
                nn_mse: per_gain_mse(&nn),
            });
        }
        let path = self.dir.file("chan_mse.csv");
        write_csv(&path, &rows)?;
        self.finish("eval-chan", vec![path])
    }

    /// `theory`: expected-throughput curves and optimal frame sizes.
    pub fn theory(&mut self) -> Result<Vec<PathBuf>> {
        let (curve, optimal) = emit_theory_curves(&all_capabilities(), self.cfg.experiment.tags, &theory_ratios())?;
        let a = self.dir.file("theory_throughput.csv");
        let b = self.dir.file("theory_optimal.csv");
        write_csv(&a, &curve)?;
        write_csv(&b, &optimal)?;
        self.finish("theory", vec![a, b])
    }

    pub fn throughput_spec(&self) -> Result<ThroughputSpec> {
        let e = &self.cfg.experiment;
        let capability = self.cfg.capability()?;
        let slots = match e.frame_slots {
            FrameSlots::Optimal => optimal_frame_ratio::<f64>(capability, e.tags)?.slots,
            FrameSlots::Fixed(k) => k,
        };
        let frame = FrameConfig::new(e.tags, slots)?;
        let frames = e.frames.unwrap_or(DEFAULT_SLOTS_PER_POINT.div_ceil(slots));
        Ok(ThroughputSpec {
            capability,
            frame,
            frames,
            seed: self.seeds().throughput,
            oversampling: e.oversampling,
            leakage: Complex::new(e.leakage[0], e.leakage[1]),
            remove_leakage: e.remove_leakage,
        })
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        let e = &self.cfg.experiment;
        let count = match e.count_method {
            CountMethod::Oracle => CountStage::Oracle,
            CountMethod::Gmm => CountStage::Gmm,
            m => CountStage::Classifier(self.load_classifier(m)?),
        };
        let channel = match e.channel_method {
            ChannelMethod::Oracle => ChannelStage::Oracle,
            ChannelMethod::Ls => ChannelStage::Ls,
            ChannelMethod::Nn => ChannelStage::Nn(
                (1..=MAX_RESOLVABLE)
                    .map(|r| if r <= e.max_resolvable { self.load_channel_estimator(r).map(Some) } else { Ok(None) })
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Pipeline { count, channel })
    }

    pub fn throughput_file(&self) -> PathBuf {
        let e = &self.cfg.experiment;
        self.dir.file(&format!(
            "throughput_{}_{}_m{}_j{}.csv",
            e.count_method.name(),
            channel_name(e.channel_method),
            e.max_resolvable,
            e.max_decodable
        ))
    }

    /// `throughput`: the configured pipeline over the SNR sweep.
    pub fn throughput(&mut self) -> Result<Vec<PathBuf>> {
        let spec = self.throughput_spec()?;
        let pipeline = self.pipeline()?;
        let curve = run_throughput(&pipeline, &spec, &self.cfg.experiment.snr_db)?;
        let theory: f64 = theoretical_throughput(spec.frame, spec.capability);
        let rows: Vec<ThroughputRow> = curve
            .points
            .iter()
            .map(|p| ThroughputRow {
                snr_db: p.snr_db,
                throughput: p.throughput,
                ci_half_width: p.ci_half_width,
                slots: p.slots,
                decoded: p.decoded,
                theoretical: theory,
            })
            .collect();
        let path = self.throughput_file();
        write_csv(&path, &rows)?;
        self.finish("throughput", vec![path])
    }

    /// `report`: the accuracy grid of every evaluated count method and one
    /// summary row per throughput curve in the run directory.
    pub fn report(&mut self) -> Result<Vec<PathBuf>> {
        let mut grid = Vec::new();
        for m in [CountMethod::Gmm, CountMethod::Fnn, CountMethod::Cnn] {
            let path = self.dir.file(&format!("count_accuracy_{}.csv", m.name()));
            if path.exists() {
                grid.push(accuracy_grid_row(m, &read_accuracy(&path)?)?);
            }
        }
        let mut summary = Vec::new();
        let mut names: Vec<PathBuf> = std::fs::read_dir(self.dir.root())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("throughput_") && n.ends_with(".csv"))
            })
            .collect();
        names.sort();
        for path in &names {
            if let Some(row) = summary_row(path)? {
                summary.push(row);
            }
        }
        if grid.is_empty() && summary.is_empty() {
            return Err(Error::MissingArtifact {
                key: "count_accuracy_*.csv or throughput_*.csv (run eval-count or throughput)".into(),
                path: self.dir.root().to_path_buf(),
            });
        }
        let a = self.dir.file("report_accuracy.csv");
        let b = self.dir.file("report_throughput.csv");
        write_csv(&a, &grid)?;
        write_csv(&b, &summary)?;
        self.finish("report", vec![a, b])
    }
}

fn channel_name(m: ChannelMethod) -> &'static str {
    match m {
        ChannelMethod::Nn => "nn",
        ChannelMethod::Ls => "ls",
        ChannelMethod::Oracle => "oracle",
    }
}

#[derive(Debug, Clone, Serialize)]
struct HistoryRow {
    epoch: usize,
    loss: f64,
    validation: f64,
    selected: bool,
}

fn history_rows(h: &TrainHistory) -> Vec<HistoryRow> {
    h.loss
        .iter()
        .enumerate()
        .map(|(e, &loss)| HistoryRow {
            epoch: e,
            loss,
            validation: h.validation.get(e).copied().unwrap_or(f64::NAN),
            selected: h.best_epoch == Some(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct AccuracyRow {
    pub method: String,
    /// `1`..`4`, or `overall`.
    pub class: String,
    pub samples: usize,
    pub accuracy: f64,
}

/// Per-class accuracy and the overall accuracy from predictions indexed by
/// true count.
pub fn accuracy_rows(method: CountMethod, pred: &[Vec<usize>]) -> Vec<AccuracyRow> {
    let mut rows = Vec::new();
    let (mut hit, mut total) = (0usize, 0usize);
    for (i, p) in pred.iter().enumerate() {
        let ok = p.iter().filter(|&&x| x == i + 1).count();
        hit += ok;
        total += p.len();
        rows.push(AccuracyRow {
            method: method.name().into(),
            class: (i + 1).to_string(),
            samples: p.len(),
            accuracy: ok as f64 / p.len().max(1) as f64,
        });
    }
    rows.push(AccuracyRow {
        method: method.name().into(),
        class: "overall".into(),
        samples: total,
        accuracy: hit as f64 / total.max(1) as f64,
    });
    rows
}

fn read_accuracy(path: &Path) -> Result<Vec<AccuracyRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[derive(Debug, Clone, Serialize)]
struct GridRow {
    method: String,
    r1: f64,
    r2: f64,
    r3: f64,
    r4: f64,
    overall: f64,
}

fn accuracy_grid_row(m: CountMethod, rows: &[AccuracyRow]) -> Result<GridRow> {
    let get = |class: &str| {
        rows.iter()
            .find(|r| r.class == class)
            .map(|r| r.accuracy)
            .ok_or_else(|| Error::format("accuracy csv", format!("no row for class {class}")))
    };
    Ok(GridRow { method: m.name().into(), r1: get("1")?, r2: get("2")?, r3: get("3")?, r4: get("4")?, overall: get("overall")? })
}

#[derive(Debug, Clone, Serialize)]
struct ChannelRow {
    tags: usize,
    snr_db: f64,
    samples: usize,
    ls_mse: f64,
    nn_mse: f64,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
struct ThroughputRow {
    snr_db: f64,
    throughput: f64,
    ci_half_width: f64,
    slots: usize,
    decoded: u64,
    theoretical: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow {
    setup: String,
    count_method: String,
    channel_method: String,
    max_resolvable: usize,
    max_decodable: usize,
    snr_db: f64,
    throughput: f64,
    ci_half_width: f64,
    theoretical: f64,
}

/// Highest-SNR point of a `throughput_{count}_{chan}_m{M}_j{J}.csv` file.
fn summary_row(path: &Path) -> Result<Option<SummaryRow>> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let parts: Vec<&str> = stem.split('_').collect();
    let [_, count, chan, m, j] = parts[..] else { return Ok(None) };
    let (Some(m), Some(j)) = (m.strip_prefix('m').and_then(|v| v.parse().ok()), j.strip_prefix('j').and_then(|v| v.parse().ok()))
    else {
        return Ok(None);
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let rows: Vec<ThroughputRow> = r.deserialize().map(|row| row.map_err(csv_err)).collect::<Result<_>>()?;
    let Some(top) = rows.iter().max_by(|a, b| a.snr_db.total_cmp(&b.snr_db)) else { return Ok(None) };
    let setup = if m == 1 { "conventional FSA".to_string() } else { format!("ML recovery M={m} J={j}") };
    Ok(Some(SummaryRow {
        setup,
        count_method: count.into(),
        channel_method: chan.into(),
        max_resolvable: m,
        max_decodable: j,
        snr_db: top.snr_db,
        throughput: top.throughput,
        ci_half_width: top.ci_half_width,
        theoretical: top.theoretical,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theory_peaks() {
        let caps = [RecoveryCapability::conventional(), RecoveryCapability::new(4, 1).unwrap()];
        let (curve, optimal) = emit_theory_curves(&caps, 1000, &theory_ratios()).unwrap();
        assert_eq!(curve.len(), 2 * 281);
        assert!((optimal[0].throughput - 0.368).abs() < 0.005);
        assert!((optimal[1].throughput - 0.817).abs() < 0.005);
        let conv_peak = curve[..281].iter().max_by(|a, b| a.throughput.total_cmp(&b.throughput)).unwrap();
        assert_eq!(conv_peak.ratio, 1.0);
        for (a, b) in curve[..281].iter().zip(&curve[281..]) {
            assert!(b.throughput >= a.throughput);
        }
    }

    #[test]
    fn accuracy_rows_count_hits() {
        let pred = vec![vec![1, 1], vec![2, 3], vec![3], vec![4, 4, 1]];
        let rows = accuracy_rows(CountMethod::Cnn, &pred);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[1].accuracy, 0.5);
        assert_eq!(rows[4].class, "overall");
        assert_eq!(rows[4].accuracy, 6.0 / 8.0);
    }

    #[test]
    fn capability_list() {
        assert_eq!(all_capabilities().len(), 10);
    }

    #[test]
    fn oracle_throughput_run_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::with_run_dir(dir.path());
        cfg.experiment.snr_db = vec![30.0];
        cfg.experiment.count_method = CountMethod::Oracle;
        cfg.experiment.channel_method = ChannelMethod::Oracle;
        cfg.experiment.tags = 50;
        cfg.experiment.frames = Some(4);
        let mut run = Run::open(cfg.clone()).unwrap();
        let out = run.throughput().unwrap();
        assert!(out[0].ends_with("throughput_oracle_oracle_m4_j1.csv"));
        let text = std::fs::read_to_string(&out[0]).unwrap();
        assert!(text.starts_with("snr_db,throughput,ci_half_width,slots,decoded,theoretical\n"));
        let report = run.report().unwrap();
        let summary = std::fs::read_to_string(&report[1]).unwrap();
        assert!(summary.contains("ML recovery M=4 J=1"));
        let m = Run::open(cfg).unwrap().manifest;
        assert_eq!(m.steps.len(), 2);
    }

    #[test]
    fn missing_models_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::open(ExperimentConfig::with_run_dir(dir.path())).unwrap();
        let err = run.throughput().unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("count_cnn"), "{err}");
        assert_eq!(run.train_count(CountMethod::Fnn).unwrap_err().exit_code(), 3);
        assert_eq!(run.eval_chan().unwrap_err().exit_code(), 3);
        assert_eq!(run.report().unwrap_err().exit_code(), 3);
        assert_eq!(run.train_count(CountMethod::Gmm).unwrap_err().exit_code(), 2);
    }
}
