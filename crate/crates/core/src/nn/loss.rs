use serde::{Deserialize, Serialize};

use super::network::{ForwardCache, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Softmax cross-entropy, fused with a terminal `Softmax` layer and
    /// evaluated from the logits.
    CrossEntropy,
    /// `(1/B) * sum_b ||y_b - t_b||^2`
    Mse,
}

/// Targets for one batch.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a, T> {
    Classes(&'a [usize]),
    Values(&'a [T]),
}

/// Loss value, gradient and the layer index the gradient applies to (the
/// output of layer `end - 1`).
pub struct LossEval<T> {
    pub loss: f64,
    pub grad: Vec<T>,
    pub end: usize,
}

impl Loss {
    pub fn evaluate<T: Scalar>(
        &self,
        net: &Network<T>,
        cache: &ForwardCache<T>,
        targets: Targets<'_, T>,
    ) -> Result<LossEval<T>> {
        let batch = cache.batch;
        let layers = net.arch().layers.len();
        match (self, targets) {
            (Loss::CrossEntropy, Targets::Classes(labels)) => {
                if !net.arch().ends_with_softmax() {
                    return Err(Error::shape("cross-entropy needs a terminal softmax layer"));
                }
                let logits = &cache.activations[layers - 1];
                let probs = cache.output();
                let n = net.output_size();
                if labels.len() != batch {
                    return Err(Error::shape(format!("{} labels for batch {batch}", labels.len())));
                }
                let scale = 1.0 / batch as f64;
                let mut loss = 0.0;
                let mut grad = Vec::with_capacity(batch * n);
                for (b, &label) in labels.iter().enumerate() {
                    if label >= n {
                        return Err(Error::shape(format!("label {label} outside {n} classes")));
                    }
                    let row = &logits[b * n..(b + 1) * n];
                    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
                    let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
                    loss += lse - row[label].as_f64();
                    for (k, &p) in probs[b * n..(b + 1) * n].iter().enumerate() {
                        let onehot = if k == label { 1.0 } else { 0.0 };
                        grad.push(T::lit((p.as_f64() - onehot) * scale));
                    }
                }
                Ok(LossEval { loss: loss * scale, grad, end: layers - 1 })
            }
            (Loss::Mse, Targets::Values(t)) => {
                let y = cache.output();
                if t.len() != y.len() {
                    return Err(Error::shape(format!("{} targets for {} outputs", t.len(), y.len())));
                }
                let scale = 1.0 / batch as f64;
                let mut loss = 0.0;
                let grad = y
                    .iter()
                    .zip(t)
                    .map(|(&y, &t)| {
                        let r = (y - t).as_f64();
                        loss += r * r;
                        T::lit(2.0 * r * scale)
                    })
                    .collect();
                Ok(LossEval { loss: loss * scale, grad, end: layers })
            }
            _ => Err(Error::shape("loss and target kind do not match")),
        }
    }
}
