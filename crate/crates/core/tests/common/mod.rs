#![allow(dead_code)]

use rand::Rng;
use rfid_recovery::count::{cnn_arch, fnn_arch};
use rfid_recovery::nn::{dense_stack, gradient_check, ArchitectureSpec, LayerSpec, Loss, Network, Shape, Targets};
use rfid_recovery::rng::seeded;

pub const GRAD_TOL: f64 = 1e-5;

/// Max relative gradient error of `arch` on a random batch of 3.
pub fn check_arch(arch: &ArchitectureSpec, loss: Loss, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let net = Network::<f64>::init(arch, &mut rng).unwrap();
    let batch = 3;
    let input: Vec<f64> = (0..batch * arch.input_size()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out = arch.output_size();
    let classes: Vec<usize> = (0..batch).map(|_| rng.random_range(0..out)).collect();
    let values: Vec<f64> = (0..batch * out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets = match loss {
        Loss::CrossEntropy => Targets::Classes(&classes),
        Loss::Mse => Targets::Values(&values),
    };
    let report = gradient_check(&net, &input, targets, loss, 400, seed).unwrap();
    assert!(report.checked > 0);
    report.max_rel_error
}

pub fn dense_only() -> ArchitectureSpec {
    ArchitectureSpec::new(Shape::Flat(5), vec![LayerSpec::Dense { input: 5, output: 3 }]).unwrap()
}

pub fn dense_relu() -> ArchitectureSpec {
    ArchitectureSpec::new(Shape::Flat(5), dense_stack(5, &[7, 3])).unwrap()
}

pub fn conv_only() -> ArchitectureSpec {
    ArchitectureSpec::new(
        Shape::Seq { len: 9, channels: 2 },
        vec![
            LayerSpec::Conv1d { in_channels: 2, out_channels: 3, kernel: 3 },
            LayerSpec::Flatten,
            LayerSpec::Dense { input: 21, output: 2 },
        ],
    )
    .unwrap()
}

pub fn softmax_head() -> ArchitectureSpec {
    ArchitectureSpec::new(Shape::Flat(4), vec![LayerSpec::Dense { input: 4, output: 4 }, LayerSpec::Softmax]).unwrap()
}

pub fn small_fnn() -> ArchitectureSpec {
    fnn_arch(12, &[32, 16, 8, 8, 6, 5, 5]).unwrap()
}

pub fn small_cnn() -> ArchitectureSpec {
    cnn_arch(16, &[3, 5, 4], 5, &[12, 8, 6, 5]).unwrap()
}

pub fn small_channel_net(r: usize) -> ArchitectureSpec {
    ArchitectureSpec::new(Shape::Flat(8), dense_stack(8, &[12, 12, 12, 12, 2 * r])).unwrap()
}
