//! Acceptance checks, one PASS/FAIL line per criterion and a summary line.
//!
//! Criteria 5 to 8 share one desk-scale run directory (10^4 training slots
//! per tag count at 20 dB). Set `RFID_ACCEPTANCE_DIR` to keep it and reuse
//! its trained models on later invocations. The process exits with failure
//! on a FAIL line only when `RFID_ACCEPTANCE_STRICT` is set.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex;
use rfid_recovery::baseband::{complex_normal, generate_rn16, simulate_slot, synthesize_slot, ChannelVector, NoiseConfig};
use rfid_recovery::chanest::{estimate_channels, ls_estimate, per_gain_mse, pilot_observations, ChannelEstimate, ChannelMethod};
use rfid_recovery::count::CountMethod;
use rfid_recovery::decoder::min_distance_decode;
use rfid_recovery::fsa::{assign_slots, expected_collision_slots, optimal_frame_ratio, theoretical_throughput, FrameConfig, RecoveryCapability};
use rfid_recovery::harness::{
    accuracy_rows, load_config, run_throughput, with_workers, ChannelStage, CountStage, ExperimentConfig, Pipeline, Run,
    ThroughputSpec, DEFAULT_SLOTS_PER_POINT,
};
use rfid_recovery::nn::Loss;
use rfid_recovery::rng::{derive_seed, seeded};

const SEED: u64 = 20_240_501;

struct Outcome {
    pass: bool,
    detail: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, detail: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.detail.push(format!("{} {line}", if ok { "ok  " } else { "MISS" }));
    }
}

fn theory() -> Outcome {
    let mut o = Outcome::new();
    for (m, j, target) in [(1, 1, 0.368), (4, 1, 0.817)] {
        let opt = optimal_frame_ratio::<f64>(RecoveryCapability::new(m, j).unwrap(), 1000).unwrap();
        o.check(
            (opt.throughput - target).abs() <= 0.005,
            format!("M={m} J={j}: optimum {:.5} at K*={} (target {target} +/- 0.005)", opt.throughput, opt.slots),
        );
    }
    let opt = optimal_frame_ratio::<f64>(RecoveryCapability::new(4, 4).unwrap(), 1000).unwrap();
    o.check(opt.throughput >= 1.9, format!("M=4 J=4: optimum {:.5} at K*={} (needs >= 1.9)", opt.throughput, opt.slots));
    o
}

fn slot_statistics() -> Outcome {
    let mut o = Outcome::new();
    let frames = 1000;
    for (n, k) in [(100, 100), (1000, 500)] {
        let cfg = FrameConfig::new(n, k).unwrap();
        let max_r = 6;
        let mut hist = vec![0usize; max_r + 1];
        for f in 0..frames {
            let occ = assign_slots(cfg, &mut seeded(derive_seed(SEED, n as u64, f)));
            for (h, c) in hist.iter_mut().zip(occ.histogram(max_r)) {
                *h += c;
            }
        }
        let trials = (frames as usize * k) as f64;
        let mut worst: f64 = 0.0;
        for (r, &count) in hist.iter().enumerate() {
            let p: f64 = expected_collision_slots::<f64>(cfg, r).unwrap() / k as f64;
            let sigma = (trials * p * (1.0 - p)).sqrt();
            worst = worst.max((count as f64 - trials * p).abs() / sigma);
        }
        o.check(worst <= 3.0, format!("N={n} K={k}: R=0..={max_r}, largest deviation {worst:.2} sigma"));
    }
    o
}

fn numerics() -> Outcome {
    let mut o = Outcome::new();
    let cases = [
        ("dense + mse", common::dense_only(), Loss::Mse),
        ("dense + relu", common::dense_relu(), Loss::Mse),
        ("conv1d", common::conv_only(), Loss::Mse),
        ("softmax + cross-entropy", common::softmax_head(), Loss::CrossEntropy),
        ("reduced fnn", common::small_fnn(), Loss::CrossEntropy),
        ("reduced cnn", common::small_cnn(), Loss::CrossEntropy),
        ("reduced channel net R=4", common::small_channel_net(4), Loss::Mse),
    ];
    for (i, (name, arch, loss)) in cases.into_iter().enumerate() {
        let err = common::check_arch(&arch, loss, i as u64);
        o.check(err < common::GRAD_TOL, format!("{name}: max relative error {err:.2e}"));
    }
    o
}

/// `Q(x)` of the standard normal.
fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn decoding_oracle() -> Outcome {
    let mut o = Outcome::new();
    for r in 1..=4 {
        let mut exact = 0u64;
        let slots = 1000;
        for i in 0..slots {
            let mut rng = seeded(derive_seed(SEED, 40 + r as u64, i));
            let slot = simulate_slot::<f64, _>(r, &NoiseConfig::noiseless(), 8, &mut rng).unwrap();
            let truth = slot.truth.clone().unwrap();
            let est = ChannelEstimate { gains: truth.channel.gains().to_vec(), method: ChannelMethod::Oracle };
            let dec = min_distance_decode(&slot, &est).unwrap();
            exact += u64::from(dec.bits == truth.payloads);
        }
        o.check(exact == slots, format!("R={r}: noiseless oracle decoding exact in {exact}/{slots} slots"));
    }

    // R = 1 at 10 dB, one sample per symbol and a fresh Rayleigh gain per slot
    let snr_db = 10.0;
    let noise = NoiseConfig::new(snr_db);
    let n0 = noise.noise_power();
    let slots = 100_000 / 16;
    let (mut errors, mut expected) = (0usize, 0.0);
    for i in 0..slots {
        let mut rng = seeded(derive_seed(SEED, 50, i as u64));
        let h = ChannelVector::new(vec![complex_normal::<f64, _>(&mut rng, 1.0)]).unwrap();
        let payload = generate_rn16(&mut rng);
        let slot = synthesize_slot(&h, &[payload], &noise, 1, &mut rng).unwrap();
        let est = ChannelEstimate { gains: h.gains().to_vec(), method: ChannelMethod::Oracle };
        let dec = min_distance_decode(&slot, &est).unwrap();
        errors += dec.bits[0].iter().zip(&payload).filter(|(a, b)| a != b).count();
        expected += 16.0 * q_function((2.0 * h.gains()[0].norm_sqr() / n0).sqrt());
    }
    let symbols = (slots * 16) as f64;
    let ser = errors as f64 / symbols;
    let conditional = expected / symbols;
    let gamma = 1.0 / n0;
    let rayleigh = 0.5 * (1.0 - (gamma / (1.0 + gamma)).sqrt());
    o.check(
        (ser / conditional - 1.0).abs() <= 0.10,
        format!("R=1 at {snr_db} dB: SER {ser:.5} vs BPSK Q(sqrt(2|h|^2/N0)) averaged over the drawn gains {conditional:.5}"),
    );
    o.check(
        (ser / rayleigh - 1.0).abs() <= 0.10,
        format!("R=1 at {snr_db} dB: SER {ser:.5} vs Rayleigh-averaged BPSK closed form {rayleigh:.5}"),
    );
    o
}

/// Desk-scale run directory with data, both count classifiers and all
/// channel estimators.
struct Desk {
    _tmp: Option<tempfile::TempDir>,
    root: PathBuf,
    run: Run,
}

fn desk_config(root: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_run_dir(root);
    cfg.experiment.snr_db = vec![20.0];
    cfg.experiment.max_resolvable = 4;
    cfg.experiment.max_decodable = 4;
    cfg.experiment.frames = Some(4);
    cfg
}

fn build_desk() -> Desk {
    let (tmp, root) = match std::env::var_os("RFID_ACCEPTANCE_DIR") {
        Some(dir) => (None, PathBuf::from(dir)),
        None => {
            let t = tempfile::tempdir().unwrap();
            let root = t.path().join("desk");
            (Some(t), root)
        }
    };
    let mut run = Run::open(desk_config(&root)).unwrap();
    let done = |run: &Run, command: &str| run.manifest.steps.iter().any(|s| s.command == command);
    let stage = |name: &str, t: Instant| println!("  desk run: {name} ({:.0} s)", t.elapsed().as_secs_f64());
    with_workers(0, || {
        let t = Instant::now();
        if !done(&run, "gen-data") {
            run.gen_data().unwrap();
            stage("gen-data", t);
        }
        for m in [CountMethod::Fnn, CountMethod::Cnn] {
            let command = format!("train-count --method {}", m.name());
            if !done(&run, &command) {
                run.train_count(m).unwrap();
                stage(&command, t);
            }
        }
        if !done(&run, "train-chan") {
            run.train_chan(None).unwrap();
            stage("train-chan", t);
        }
    })
    .unwrap();
    Desk { _tmp: tmp, root, run }
}

fn channel_estimation(desk: &Desk) -> Outcome {
    let mut o = Outcome::new();
    for r in 1..=4 {
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let mut rng = seeded(derive_seed(SEED, 60 + r as u64, i));
            let slot = simulate_slot::<f64, _>(r, &NoiseConfig::noiseless(), 8, &mut rng).unwrap();
            let est = ls_estimate(&pilot_observations(&slot), r).unwrap();
            let truth = slot.truth.as_ref().unwrap().channel.gains();
            for (a, b) in est.gains.iter().zip(truth) {
                worst = worst.max((a - b).norm());
            }
        }
        o.check(worst < 1e-9, format!("R={r}: noiseless LS largest gain error {worst:.1e}"));
    }

    let ls_mse = |r: usize, snr_db: f64| {
        let noise = NoiseConfig::new(snr_db);
        let pairs: Vec<_> = (0..10_000)
            .map(|i| {
                let mut rng = seeded(derive_seed(SEED, 70 + r as u64, i));
                let slot = simulate_slot::<f64, _>(r, &noise, 8, &mut rng).unwrap();
                let truth = slot.truth.as_ref().unwrap().channel.gains().to_vec();
                (ls_estimate(&pilot_observations(&slot), r).unwrap().gains, truth)
            })
            .collect();
        per_gain_mse(&pairs)
    };
    let half_n0_db = 20.0 + 10.0 * 2f64.log10();
    for r in 1..=4 {
        let ratio = ls_mse(r, 20.0) / ls_mse(r, half_n0_db);
        o.check((ratio / 2.0 - 1.0).abs() <= 0.10, format!("R={r}: LS MSE(N0) / MSE(N0/2) = {ratio:.3} (expect 2)"));
    }

    for r in 1..=4 {
        let est = desk.run.load_channel_estimator(r).unwrap();
        let (_, slots) = rfid_recovery::dataset::load_slots::<f32>(&desk.run.dir.test_data(r)).unwrap();
        let (mut ls, mut nn) = (Vec::new(), Vec::new());
        for s in &slots {
            let truth = s.truth.as_ref().unwrap().channel.gains().to_vec();
            ls.push((ls_estimate(&pilot_observations(s), r).unwrap().gains, truth.clone()));
            nn.push((estimate_channels(&est, r, s).unwrap().gains, truth));
        }
        let (ls, nn) = (per_gain_mse(&ls), per_gain_mse(&nn));
        o.check(nn <= 2.0 * ls, format!("R={r} at 20 dB: NN MSE {nn:.2e}, LS MSE {ls:.2e}, ratio {:.2}", nn / ls));
    }
    o
}

fn count_accuracy(desk: &Desk) -> Outcome {
    let mut o = Outcome::new();
    let mut overall = Vec::new();
    for m in [CountMethod::Gmm, CountMethod::Fnn, CountMethod::Cnn] {
        let pred = with_workers(0, || desk.run.count_predictions(m)).unwrap().unwrap();
        let rows = accuracy_rows(m, &pred);
        let cells: Vec<String> = rows.iter().map(|r| format!("{}={:.3}", r.class, r.accuracy)).collect();
        o.detail.push(format!("     {}: {}", m.name(), cells.join(" ")));
        overall.push(rows.last().unwrap().accuracy);
    }
    let [gmm, fnn, cnn] = overall[..] else { unreachable!() };
    o.check(gmm >= 0.85, format!("GMM overall {gmm:.4} (needs >= 0.85)"));
    o.check(cnn >= 0.90, format!("CNN overall {cnn:.4} (needs >= 0.90)"));
    o.check(cnn > fnn && cnn > gmm, format!("CNN strictly best: CNN {cnn:.4}, FNN {fnn:.4}, GMM {gmm:.4}"));
    o.check(fnn >= gmm - 0.02, format!("FNN roughly at least GMM: FNN {fnn:.4}, GMM {gmm:.4}"));
    o
}

fn spec(cap: RecoveryCapability, slots: usize) -> ThroughputSpec {
    ThroughputSpec {
        capability: cap,
        frame: FrameConfig::new(1000, slots).unwrap(),
        frames: DEFAULT_SLOTS_PER_POINT.div_ceil(slots),
        seed: SEED,
        oversampling: 8,
        leakage: Complex::new(0.0, 0.0),
        remove_leakage: false,
    }
}

fn end_to_end(desk: &Desk) -> Outcome {
    let mut o = Outcome::new();
    let cnn_pipeline = || Pipeline {
        count: CountStage::Classifier(desk.run.load_classifier(CountMethod::Cnn).unwrap()),
        channel: ChannelStage::Nn((1..=4).map(|r| Some(desk.run.load_channel_estimator(r).unwrap())).collect()),
    };
    for (j, floor) in [(1, 0.70), (4, 1.5)] {
        let cap = RecoveryCapability::new(4, j).unwrap();
        let opt = optimal_frame_ratio::<f64>(cap, 1000).unwrap();
        let s = spec(cap, opt.slots);
        let theory: f64 = theoretical_throughput(s.frame, cap);
        let p = with_workers(0, || run_throughput(&Pipeline::oracle(), &s, &[30.0])).unwrap().unwrap().points[0];
        o.check(
            (p.throughput - theory).abs() <= p.ci_half_width,
            format!(
                "oracle M=4 J={j} at 30 dB, K={}: {:.4} +/- {:.4}, theory {theory:.4}",
                opt.slots, p.throughput, p.ci_half_width
            ),
        );
        let p = with_workers(0, || run_throughput(&cnn_pipeline(), &s, &[20.0])).unwrap().unwrap().points[0];
        o.check(
            p.throughput >= floor,
            format!("CNN + NN M=4 J={j} at 20 dB: {:.4} +/- {:.4} (needs >= {floor})", p.throughput, p.ci_half_width),
        );
    }
    let conventional = Pipeline { count: CountStage::Oracle, channel: ChannelStage::Ls };
    let s = spec(RecoveryCapability::conventional(), 1000);
    let p = with_workers(0, || run_throughput(&conventional, &s, &[20.0])).unwrap().unwrap().points[0];
    o.check(
        (p.throughput - 0.368).abs() <= 0.01,
        format!("conventional FSA, K=N=1000 at 20 dB: {:.4} +/- {:.4} (target 0.368 +/- 0.01)", p.throughput, p.ci_half_width),
    );
    o
}

fn determinism(desk: &Desk) -> Outcome {
    let mut o = Outcome::new();
    let manifest = desk.root.join("manifest.toml");
    let mut outputs = Vec::new();
    for workers in [1, 3, 0] {
        let mut cfg = load_config(&manifest).unwrap();
        cfg.experiment.workers = workers;
        let mut run = Run::open(cfg).unwrap();
        let files = with_workers(workers, || {
            let mut files = run.throughput().unwrap();
            files.extend(run.eval_count(CountMethod::Cnn).unwrap());
            files.extend(run.eval_chan().unwrap());
            files
        })
        .unwrap();
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        outputs.push((workers, files, bytes));
    }
    let (_, files, first) = &outputs[0];
    for (workers, _, bytes) in &outputs[1..] {
        for ((f, a), b) in files.iter().zip(first).zip(bytes) {
            let name = f.file_name().unwrap().to_string_lossy();
            o.check(a == b, format!("{name}: rerun from manifest with {workers} workers matches 1 worker"));
        }
    }
    o
}

/// Criteria named on the command line (`cargo test --test acceptance -- 1 4`),
/// or all of them.
fn selected() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).filter(|n| (1..=8).contains(n)).collect();
    if picked.is_empty() {
        (1..=8).collect()
    } else {
        picked
    }
}

fn main() -> ExitCode {
    let which = selected();
    let mut failed = Vec::new();
    let mut report = |n: usize, title: &str, run: &dyn Fn() -> Outcome| {
        if !which.contains(&n) {
            return;
        }
        let t = Instant::now();
        let o = run();
        for line in &o.detail {
            println!("  {line}");
        }
        println!("{} criterion {n}: {title} ({:.1} s)", if o.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(n);
        }
    };
    report(1, "theory optimum throughput", &theory);
    report(2, "slot occupancy statistics", &slot_statistics);
    report(3, "gradient checks", &numerics);
    report(4, "decoding oracle", &decoding_oracle);
    if which.iter().any(|&n| n >= 5) {
        let t = Instant::now();
        let desk = build_desk();
        println!("  desk run ready at {} ({:.0} s)", desk.root.display(), t.elapsed().as_secs_f64());
        report(5, "channel estimation", &|| channel_estimation(&desk));
        report(6, "tag-count accuracy at 20 dB", &|| count_accuracy(&desk));
        report(7, "end-to-end throughput", &|| end_to_end(&desk));
        report(8, "determinism", &|| determinism(&desk));
    }
    let failed_list: Vec<String> = failed.iter().map(|n| n.to_string()).collect();
    println!(
        "SUMMARY {} of {} criteria pass{}",
        which.len() - failed.len(),
        which.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {}", failed_list.join(", ")) }
    );
    if failed.is_empty() || std::env::var_os("RFID_ACCEPTANCE_STRICT").is_none() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
