use rand::Rng;
use rayon::prelude::*;

use super::arch::{ArchitectureSpec, LayerSpec, Shape};
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

/// Weight and bias of one layer; both empty for parameter-free layers.
///
/// Dense weights are row-major `(input, output)`. Conv1d weights are
/// row-major `(kernel * in_channels, out_channels)` with row index
/// `tap * in_channels + channel`, which lines up with a channels-last input
/// window.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros(spec: &LayerSpec) -> Self {
        let (w, b) = spec.param_sizes();
        Self { weight: vec![T::zero(); w], bias: vec![T::zero(); b] }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, i: usize) -> T {
        if i < self.weight.len() {
            self.weight[i]
        } else {
            self.bias[i - self.weight.len()]
        }
    }

    fn get_mut(&mut self, i: usize) -> &mut T {
        let nw = self.weight.len();
        if i < nw {
            &mut self.weight[i]
        } else {
            &mut self.bias[i - nw]
        }
    }
}

/// Per-layer parameter gradients, shaped like the network parameters.
pub type Gradients<T> = Vec<LayerParams<T>>;

/// Activations recorded by [`Network::forward`]. `activations[0]` is the
/// input and `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub batch: usize,
    pub activations: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("cache holds the input at least")
    }
}

/// Architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: ArchitectureSpec,
    shapes: Vec<Shape>,
    params: Vec<LayerParams<T>>,
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights `U(+-sqrt(6/(fan_in+fan_out)))`, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &ArchitectureSpec, rng: &mut R) -> Result<Self> {
        let shapes = arch.shapes()?;
        let params = arch
            .layers
            .iter()
            .map(|l| {
                let mut p = LayerParams::zeros(l);
                let (fi, fo) = l.fans();
                if fi + fo > 0 {
                    let limit = (6.0 / (fi + fo) as f64).sqrt();
                    for w in &mut p.weight {
                        *w = T::lit(rng.random_range(-limit..limit));
                    }
                }
                p
            })
            .collect();
        Ok(Self { arch: arch.clone(), shapes, params })
    }

    pub fn from_params(arch: &ArchitectureSpec, params: Vec<LayerParams<T>>) -> Result<Self> {
        let shapes = arch.shapes()?;
        if params.len() != arch.layers.len() {
            return Err(Error::shape(format!("{} layers but {} parameter sets", arch.layers.len(), params.len())));
        }
        for (i, (l, p)) in arch.layers.iter().zip(&params).enumerate() {
            let (w, b) = l.param_sizes();
            if p.weight.len() != w || p.bias.len() != b {
                return Err(Error::shape(format!("layer {i}: expected {w}+{b} parameters")));
            }
            if p.weight.iter().chain(&p.bias).any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(Self { arch: arch.clone(), shapes, params })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn params(&self) -> &[LayerParams<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.params
    }

    pub fn input_size(&self) -> usize {
        self.shapes[0].size()
    }

    pub fn output_size(&self) -> usize {
        self.shapes.last().unwrap().size()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(LayerParams::len).sum()
    }

    /// Flat parameter accessor over all layers (weights then bias per layer).
    pub fn param(&self, flat: usize) -> T {
        let (l, i) = self.locate(flat);
        self.params[l].get(i)
    }

    pub fn param_mut(&mut self, flat: usize) -> &mut T {
        let (l, i) = self.locate(flat);
        self.params[l].get_mut(i)
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (l, p) in self.params.iter().enumerate() {
            if flat < p.len() {
                return (l, flat);
            }
            flat -= p.len();
        }
        panic!("parameter index out of range");
    }

    /// Convert parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let params = self
            .params
            .iter()
            .map(|p| LayerParams {
                weight: p.weight.iter().map(|v| U::lit(v.as_f64())).collect(),
                bias: p.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
            })
            .collect();
        Network { arch: self.arch.clone(), shapes: self.shapes.clone(), params }
    }

    /// Run a batch of `input.len() / input_size` examples.
    pub fn forward(&self, input: &[T]) -> Result<ForwardCache<T>> {
        let n_in = self.input_size();
        if n_in == 0 || !input.len().is_multiple_of(n_in) {
            return Err(Error::shape(format!("input length {} is not a multiple of {n_in}", input.len())));
        }
        let batch = input.len() / n_in;
        let mut activations = Vec::with_capacity(self.arch.layers.len() + 1);
        activations.push(input.to_vec());
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let x = activations.last().unwrap();
            let y = self.layer_forward(i, layer, x, batch);
            activations.push(y);
        }
        Ok(ForwardCache { batch, activations })
    }

    /// Outputs only.
    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(input)?.activations.pop().unwrap_or_default())
    }

    /// Same result as [`Network::predict`], computed in parallel chunks of
    /// `chunk` examples. Each example's output depends only on its own row,
    /// so chunking does not change any value.
    pub fn predict_parallel(&self, input: &[T], chunk: usize) -> Result<Vec<T>> {
        let n_in = self.input_size();
        if !input.len().is_multiple_of(n_in) {
            return Err(Error::shape(format!("input length {} is not a multiple of {n_in}", input.len())));
        }
        let parts: Result<Vec<Vec<T>>> =
            input.par_chunks(chunk.max(1) * n_in).map(|c| self.predict(c)).collect();
        Ok(parts?.concat())
    }

    fn layer_forward(&self, i: usize, layer: &LayerSpec, x: &[T], batch: usize) -> Vec<T> {
        let p = &self.params[i];
        match *layer {
            LayerSpec::Dense { input, output } => {
                let mut y: Vec<T> = Vec::with_capacity(batch * output);
                for _ in 0..batch {
                    y.extend_from_slice(&p.bias);
                }
                gemm(
                    T::one(),
                    MatRef::row_major(x, batch, input),
                    MatRef::row_major(&p.weight, input, output),
                    T::one(),
                    &mut y,
                    output,
                );
                y
            }
            LayerSpec::Conv1d { in_channels, out_channels, kernel } => {
                let Shape::Seq { len, .. } = self.shapes[i] else { unreachable!() };
                let out_len = len - kernel + 1;
                let mut y = vec![T::zero(); batch * out_len * out_channels];
                let w = MatRef::row_major(&p.weight, kernel * in_channels, out_channels);
                for (xb, yb) in x.chunks(len * in_channels).zip(y.chunks_mut(out_len * out_channels)) {
                    for row in yb.chunks_mut(out_channels) {
                        row.copy_from_slice(&p.bias);
                    }
                    gemm(T::one(), window_view(xb, out_len, kernel, in_channels), w, T::one(), yb, out_channels);
                }
                y
            }
            LayerSpec::Relu => x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
            LayerSpec::Softmax => {
                let n = self.shapes[i].size();
                let mut y = Vec::with_capacity(x.len());
                for row in x.chunks(n) {
                    y.extend(softmax_row(row));
                }
                y
            }
            LayerSpec::Flatten => x.to_vec(),
        }
    }

    /// Reverse-mode gradients of the parameters of layers `0..end` given the
    /// gradient `grad` with respect to the output of layer `end - 1`.
    ///
    /// `end` is normally the layer count; fused losses pass one less to skip
    /// a terminal softmax.
    pub fn backward_from(&self, cache: &ForwardCache<T>, grad: Vec<T>, end: usize) -> Result<Gradients<T>> {
        if cache.activations.len() != self.arch.layers.len() + 1 || end > self.arch.layers.len() {
            return Err(Error::shape("forward cache does not belong to this network"));
        }
        if grad.len() != cache.activations[end].len() {
            return Err(Error::shape(format!(
                "gradient length {} does not match layer output {}",
                grad.len(),
                cache.activations[end].len()
            )));
        }
        let batch = cache.batch;
        let mut grads: Gradients<T> = self.arch.layers.iter().map(LayerParams::zeros).collect();
        let mut dy = grad;
        for i in (0..end).rev() {
            let layer = &self.arch.layers[i];
            let x = &cache.activations[i];
            let y = &cache.activations[i + 1];
            let need_dx = i > 0;
            dy = self.layer_backward(i, layer, x, y, dy, batch, &mut grads[i], need_dx);
        }
        Ok(grads)
    }

    pub fn backward(&self, cache: &ForwardCache<T>, grad: Vec<T>) -> Result<Gradients<T>> {
        self.backward_from(cache, grad, self.arch.layers.len())
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_backward(
        &self,
        i: usize,
        layer: &LayerSpec,
        x: &[T],
        y: &[T],
        dy: Vec<T>,
        batch: usize,
        g: &mut LayerParams<T>,
        need_dx: bool,
    ) -> Vec<T> {
        let p = &self.params[i];
        match *layer {
            LayerSpec::Dense { input, output } => {
                let dy_m = MatRef::row_major(&dy, batch, output);
                gemm(T::one(), MatRef::row_major(x, batch, input).t(), dy_m, T::zero(), &mut g.weight, output);
                for row in dy.chunks(output) {
                    for (b, d) in g.bias.iter_mut().zip(row) {
                        *b += *d;
                    }
                }
                if !need_dx {
                    return Vec::new();
                }
                let mut dx = vec![T::zero(); batch * input];
                gemm(T::one(), dy_m, MatRef::row_major(&p.weight, input, output).t(), T::zero(), &mut dx, input);
                dx
            }
            LayerSpec::Conv1d { in_channels, out_channels, kernel } => {
                let Shape::Seq { len, .. } = self.shapes[i] else { unreachable!() };
                let out_len = len - kernel + 1;
                let mut dx = if need_dx { vec![T::zero(); batch * len * in_channels] } else { Vec::new() };
                for b in 0..batch {
                    let xb = &x[b * len * in_channels..(b + 1) * len * in_channels];
                    let dyb = &dy[b * out_len * out_channels..(b + 1) * out_len * out_channels];
                    let dy_m = MatRef::row_major(dyb, out_len, out_channels);
                    gemm(T::one(), window_view(xb, out_len, kernel, in_channels).t(), dy_m, T::one(), &mut g.weight, out_channels);
                    for row in dyb.chunks(out_channels) {
                        for (bb, d) in g.bias.iter_mut().zip(row) {
                            *bb += *d;
                        }
                    }
                    if need_dx {
                        let dxb = &mut dx[b * len * in_channels..(b + 1) * len * in_channels];
                        for tap in 0..kernel {
                            let w_tap = MatRef::row_major(
                                &p.weight[tap * in_channels * out_channels..(tap + 1) * in_channels * out_channels],
                                in_channels,
                                out_channels,
                            );
                            gemm(T::one(), dy_m, w_tap.t(), T::one(), &mut dxb[tap * in_channels..], in_channels);
                        }
                    }
                }
                dx
            }
            LayerSpec::Relu => dy
                .into_iter()
                .zip(y)
                .map(|(d, &v)| if v > T::zero() { d } else { T::zero() })
                .collect(),
            LayerSpec::Softmax => {
                let n = self.shapes[i].size();
                let mut dx = Vec::with_capacity(dy.len());
                for (drow, prow) in dy.chunks(n).zip(y.chunks(n)) {
                    let dot: f64 = drow.iter().zip(prow).map(|(d, p)| d.as_f64() * p.as_f64()).sum();
                    let dot = T::lit(dot);
                    dx.extend(drow.iter().zip(prow).map(|(&d, &p)| p * (d - dot)));
                }
                dx
            }
            LayerSpec::Flatten => dy,
        }
    }
}

/// Overlapping `(out_len, kernel * channels)` view of a channels-last
/// sequence: row `t` is the contiguous window starting at sample `t`.
fn window_view<T>(x: &[T], out_len: usize, kernel: usize, channels: usize) -> MatRef<'_, T> {
    MatRef { data: x, rows: out_len, cols: kernel * channels, row_stride: channels, col_stride: 1 }
}

/// Max-subtracted softmax with the normaliser accumulated in `f64`.
pub fn softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).as_f64().exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| T::lit(e / sum)).collect()
}
