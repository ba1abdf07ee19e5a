use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum LayerKind {
    Conv2d {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Sigmoid,
    MaxPool2d {
        window: usize,
    },
    Flatten,
    Dense,
}

/// One layer with fully resolved input and output extents.
///
/// Feature maps are `(channels, height, width)`; dense layers use
/// `(features, 1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    pub input: [usize; 3],
    pub output: [usize; 3],
}

impl LayerSpec {
    /// Multiply-accumulate count of a single forward pass for one sample.
    pub fn macs(&self) -> Result<u64> {
        let [c_in, h_in, w_in] = self.input;
        let [c_out, h_out, w_out] = self.output;
        if self.input.contains(&0) || self.output.contains(&0) {
            return Err(Error::contract(format!("unresolved shape in {self:?}")));
        }
        match self.kind {
            LayerKind::Conv2d {
                kernel,
                stride,
                pad,
            } => {
                let expect = |n: usize| {
                    (n + 2 * pad)
                        .checked_sub(kernel)
                        .map(|d| d / stride.max(1) + 1)
                };
                if expect(h_in) != Some(h_out) || expect(w_in) != Some(w_out) {
                    return Err(Error::contract(format!(
                        "inconsistent conv extents in {self:?}"
                    )));
                }
                Ok((kernel * kernel * c_in * c_out * h_out * w_out) as u64)
            }
            LayerKind::Dense => Ok((c_in * c_out) as u64),
            LayerKind::MaxPool2d { window } => {
                if h_out != h_in / window || w_out != w_in / window || c_in != c_out {
                    return Err(Error::contract(format!(
                        "inconsistent pooling extents in {self:?}"
                    )));
                }
                Ok(0)
            }
            LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Flatten => Ok(0),
        }
    }
}

/// Sum of per-layer MACs.
pub fn mac_count(layers: &[LayerSpec]) -> Result<u64> {
    layers.iter().map(LayerSpec::macs).sum()
}

/// Appends layers while tracking the running feature shape.
#[derive(Clone, Debug)]
pub struct LayerStack {
    shape: [usize; 3],
    layers: Vec<LayerSpec>,
}

impl LayerStack {
    pub fn new(input: [usize; 3]) -> Self {
        LayerStack {
            shape: input,
            layers: Vec::new(),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    fn push(&mut self, kind: LayerKind, output: [usize; 3]) -> &mut Self {
        self.layers.push(LayerSpec {
            kind,
            input: self.shape,
            output,
        });
        self.shape = output;
        self
    }

    /// Convolution with "same" padding `kernel / 2`.
    pub fn conv(&mut self, out_channels: usize, kernel: usize, stride: usize) -> &mut Self {
        let pad = kernel / 2;
        let [_, h, w] = self.shape;
        let ext = |n: usize| (n + 2 * pad - kernel) / stride + 1;
        self.push(
            LayerKind::Conv2d {
                kernel,
                stride,
                pad,
            },
            [out_channels, ext(h), ext(w)],
        )
    }

    pub fn relu(&mut self) -> &mut Self {
        self.push(LayerKind::Relu, self.shape)
    }

    pub fn sigmoid(&mut self) -> &mut Self {
        self.push(LayerKind::Sigmoid, self.shape)
    }

    pub fn maxpool(&mut self, window: usize) -> &mut Self {
        let [c, h, w] = self.shape;
        self.push(LayerKind::MaxPool2d { window }, [c, h / window, w / window])
    }

    pub fn flatten(&mut self) -> &mut Self {
        let [c, h, w] = self.shape;
        self.push(LayerKind::Flatten, [c * h * w, 1, 1])
    }

    pub fn dense(&mut self, out: usize) -> &mut Self {
        self.push(LayerKind::Dense, [out, 1, 1])
    }

    pub fn finish(&mut self) -> Vec<LayerSpec> {
        std::mem::take(&mut self.layers)
    }
}
