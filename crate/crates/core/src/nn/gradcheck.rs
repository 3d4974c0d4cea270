//! Central finite-difference check of [`Network::backward_from`].

use rand::seq::index::sample;

use super::arch::LayerSpec;
use super::loss::{Loss, Targets};
use super::network::{ForwardCache, Network};
use crate::error::Result;
use crate::rng;

pub const STEP: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute rather than relative
/// terms.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation moved a ReLU input across zero; the
    /// finite difference is meaningless there.
    pub skipped_kinks: usize,
}

fn relu_signature(net: &Network<f64>, cache: &ForwardCache<f64>) -> Vec<bool> {
    net.arch()
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::Relu))
        .flat_map(|(i, _)| cache.activations[i].iter().map(|v| *v > 0.0))
        .collect()
}

/// Compare analytic and numeric gradients on `min_params` randomly chosen
/// parameters (all of them if the network is smaller) and return the
/// largest relative error `|a - n| / max(|a|, |n|, SCALE_FLOOR)`.
pub fn gradient_check(
    net: &Network<f64>,
    input: &[f64],
    targets: Targets<'_, f64>,
    loss: Loss,
    min_params: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let cache = net.forward(input)?;
    let base_sig = relu_signature(net, &cache);
    let eval = loss.evaluate(net, &cache, targets)?;
    let grads = net.backward_from(&cache, eval.grad, eval.end)?;
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.weight.iter().chain(&g.bias).copied()).collect();

    let total = net.param_count();
    let mut order: Vec<usize> = sample(&mut rng::seeded(seed), total, total).into_vec();
    let mut probe = net.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped_kinks: 0 };
    while report.checked < min_params.min(total) {
        let Some(p) = order.pop() else { break };
        let orig = probe.param(p);
        let side = |delta: f64, probe: &mut Network<f64>| -> Result<(f64, bool)> {
            *probe.param_mut(p) = orig + delta;
            let c = probe.forward(input)?;
            let kink = relu_signature(probe, &c) != base_sig;
            Ok((loss.evaluate(probe, &c, targets)?.loss, kink))
        };
        let (up, k1) = side(STEP, &mut probe)?;
        let (down, k2) = side(-STEP, &mut probe)?;
        *probe.param_mut(p) = orig;
        if k1 || k2 {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[p];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(SCALE_FLOOR);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
