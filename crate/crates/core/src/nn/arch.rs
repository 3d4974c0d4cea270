use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation shape of a single example.
///
/// Sequences are stored channels-last, so `Seq { len, channels }` is a
/// row-major `(len, channels)` block. Interleaved I/Q samples are therefore
/// a two-channel sequence without any reshuffling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    Seq { len: usize, channels: usize },
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Seq { len, channels } => len * channels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    /// Stride 1, no padding.
    Conv1d { in_channels: usize, out_channels: usize, kernel: usize },
    Relu,
    Softmax,
    Flatten,
}

impl LayerSpec {
    /// `(weight_len, bias_len)`
    pub fn param_sizes(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { input, output } => (input * output, output),
            LayerSpec::Conv1d { in_channels, out_channels, kernel } => (kernel * in_channels * out_channels, out_channels),
            _ => (0, 0),
        }
    }

    /// Weight tensor shape as stored in checkpoints.
    pub fn weight_dims(&self) -> Vec<usize> {
        match *self {
            LayerSpec::Dense { input, output } => vec![input, output],
            LayerSpec::Conv1d { in_channels, out_channels, kernel } => vec![kernel, in_channels, out_channels],
            _ => vec![],
        }
    }

    /// `(fan_in, fan_out)` for initialisation.
    pub fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { input, output } => (input, output),
            LayerSpec::Conv1d { in_channels, out_channels, kernel } => (in_channels * kernel, out_channels * kernel),
            _ => (0, 0),
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. })
    }

    fn name(&self) -> String {
        match *self {
            LayerSpec::Dense { input, output } => format!("Dense({input}->{output})"),
            LayerSpec::Conv1d { in_channels, out_channels, kernel } => {
                format!("Conv1d({in_channels}->{out_channels}, k={kernel})")
            }
            LayerSpec::Relu => "ReLU".into(),
            LayerSpec::Softmax => "Softmax".into(),
            LayerSpec::Flatten => "Flatten".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let arch = Self { input, layers };
        arch.shapes()?;
        Ok(arch)
    }

    /// Shape after every layer; element 0 is the input shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input];
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let next = match (*layer, cur) {
                (LayerSpec::Dense { input, output }, Shape::Flat(n)) if n == input => Shape::Flat(output),
                (LayerSpec::Conv1d { in_channels, out_channels, kernel }, Shape::Seq { len, channels })
                    if channels == in_channels && kernel >= 1 && len >= kernel =>
                {
                    Shape::Seq { len: len - kernel + 1, channels: out_channels }
                }
                (LayerSpec::Relu, s) => s,
                (LayerSpec::Softmax, Shape::Flat(n)) if i == last => Shape::Flat(n),
                (LayerSpec::Flatten, s) => Shape::Flat(s.size()),
                (l, s) => {
                    return Err(Error::shape(format!("layer {i} {} cannot follow shape {s:?}", l.name())));
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn input_size(&self) -> usize {
        self.input.size()
    }

    pub fn output_size(&self) -> usize {
        self.shapes().map(|s| s.last().unwrap().size()).unwrap_or(0)
    }

    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Softmax))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| {
            let (w, b) = l.param_sizes();
            w + b
        }).sum()
    }

    /// Number of `Dense` layers.
    pub fn linear_layers(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LayerSpec::Dense { .. })).count()
    }

    pub fn conv_layers(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LayerSpec::Conv1d { .. })).count()
    }

    /// Human-readable model summary, one line per layer plus a total.
    pub fn summary(&self) -> String {
        let shapes = self.shapes().unwrap_or_default();
        let mut out = format!("input {:?}\n", self.input);
        for (i, l) in self.layers.iter().enumerate() {
            let (w, b) = l.param_sizes();
            let shape = shapes.get(i + 1).map(|s| format!("{s:?}")).unwrap_or_default();
            out.push_str(&format!("{i:>3} {:<28} {:<30} params {}\n", l.name(), shape, w + b));
        }
        out.push_str(&format!("total params {}\n", self.param_count()));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("architecture serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let arch: Self = serde_json::from_str(text).map_err(|e| Error::format("architecture descriptor", e.to_string()))?;
        arch.shapes()?;
        Ok(arch)
    }
}

/// Dense stack `input -> widths[0] -> ... -> widths[n-1]` with ReLU between
/// layers (not after the last one).
pub fn dense_stack(input: usize, widths: &[usize]) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut prev = input;
    for (i, &w) in widths.iter().enumerate() {
        layers.push(LayerSpec::Dense { input: prev, output: w });
        if i + 1 < widths.len() {
            layers.push(LayerSpec::Relu);
        }
        prev = w;
    }
    layers
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_then_dense_shapes() {
        let arch = ArchitectureSpec::new(
            Shape::Seq { len: 10, channels: 2 },
            vec![
                LayerSpec::Conv1d { in_channels: 2, out_channels: 3, kernel: 4 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { input: 21, output: 2 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        assert_eq!(arch.output_size(), 2);
        assert_eq!(arch.param_count(), 4 * 2 * 3 + 3 + 21 * 2 + 2);
        assert!(arch.summary().contains("total params 71"));
    }

    #[test]
    fn incompatible_layers_rejected() {
        let bad = ArchitectureSpec::new(Shape::Flat(4), vec![LayerSpec::Dense { input: 5, output: 2 }]);
        assert!(matches!(bad, Err(Error::Shape(_))));
        let early_softmax = ArchitectureSpec::new(
            Shape::Flat(4),
            vec![LayerSpec::Softmax, LayerSpec::Dense { input: 4, output: 2 }],
        );
        assert!(early_softmax.is_err());
        let conv_on_flat = ArchitectureSpec::new(
            Shape::Flat(4),
            vec![LayerSpec::Conv1d { in_channels: 1, out_channels: 1, kernel: 2 }],
        );
        assert!(conv_on_flat.is_err());
    }

    #[test]
    fn json_round_trip() {
        let arch = ArchitectureSpec::new(Shape::Flat(3), dense_stack(3, &[5, 2])).unwrap();
        assert_eq!(ArchitectureSpec::from_json(&arch.to_json()).unwrap(), arch);
    }
}
