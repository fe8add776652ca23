use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Linear,
    Relu,
    Softmax,
    Add,
    Flatten,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    Linear(Linear),
    Relu,
    /// Softmax over a 1-D input.
    Softmax,
    /// Adds the input of an earlier layer (`skip`) to this layer's input.
    Add { skip: usize },
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Linear(_) => LayerKind::Linear,
            Layer::Relu => LayerKind::Relu,
            Layer::Softmax => LayerKind::Softmax,
            Layer::Add { .. } => LayerKind::Add,
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weight.len() + c.bias.len(),
            Layer::Linear(l) => l.weight.len() + l.bias.len(),
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(c) => c.output_shape(input),
            Layer::Linear(l) => {
                if input != [l.in_features()] {
                    return Err(Error::Shape(format!(
                        "linear layer expects [{}], got {input:?}",
                        l.in_features()
                    )));
                }
                Ok(vec![l.out_features()])
            }
            Layer::Softmax => {
                if input.len() != 1 {
                    return Err(Error::Shape(format!("softmax expects a vector, got {input:?}")));
                }
                Ok(input.to_vec())
            }
            Layer::Relu | Layer::Add { .. } => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Nonzero weight taps for one output channel: (in channel, ky, kx, weight).
type ConvTaps = Vec<Vec<(usize, usize, usize, f64)>>;

/// 2-D convolution without padding over a C×H×W input.
#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: (usize, usize),
    taps: OnceLock<ConvTaps>,
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Tensor, stride: (usize, usize)) -> Result<Self> {
        if weight.shape().len() != 4 {
            return Err(Error::Shape(format!(
                "conv weight must be out×in×kh×kw, got {:?}",
                weight.shape()
            )));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape(format!(
                "conv bias {:?} does not match {} output channels",
                bias.shape(),
                weight.shape()[0]
            )));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape("conv stride must be positive".into()));
        }
        Ok(Conv2d {
            weight,
            bias,
            stride,
            taps: OnceLock::new(),
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (kh, kw) = self.kernel();
        if input.len() != 3 || input[0] != self.in_channels() || input[1] < kh || input[2] < kw {
            return Err(Error::Shape(format!(
                "conv expects {}×H×W with H≥{kh}, W≥{kw}; got {input:?}",
                self.in_channels()
            )));
        }
        Ok(vec![
            self.out_channels(),
            (input[1] - kh) / self.stride.0 + 1,
            (input[2] - kw) / self.stride.1 + 1,
        ])
    }

    fn taps(&self) -> &ConvTaps {
        self.taps.get_or_init(|| {
            let (oc, ic) = (self.out_channels(), self.in_channels());
            let (kh, kw) = self.kernel();
            let w = self.weight.data();
            (0..oc)
                .map(|o| {
                    let mut v = Vec::new();
                    for i in 0..ic {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let val = w[((o * ic + i) * kh + ky) * kw + kx];
                                if val != 0.0 {
                                    v.push((i, ky, kx, val));
                                }
                            }
                        }
                    }
                    v
                })
                .collect()
        })
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Tensor {
        self.apply(x, true)
    }

    /// Forward pass with the bias optionally left out.
    pub(crate) fn apply(&self, x: &Tensor, with_bias: bool) -> Tensor {
        let shape = self.output_shape(x.shape()).expect("checked by graph");
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (oh, ow) = (shape[1], shape[2]);
        let (sh, sw) = self.stride;
        let xin = x.data();
        let pointwise = self.kernel() == (1, 1) && self.stride == (1, 1);
        let mut out = vec![0.0; shape.iter().product()];
        for (o, taps) in self.taps().iter().enumerate() {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            if with_bias {
                plane.fill(self.bias.data()[o]);
            }
            for &(i, ky, kx, wv) in taps {
                if pointwise {
                    for (ov, xv) in plane.iter_mut().zip(&xin[i * h * w..(i + 1) * h * w]) {
                        *ov += wv * xv;
                    }
                    continue;
                }
                for oy in 0..oh {
                    let row = (i * h + oy * sh + ky) * w + kx;
                    let orow = &mut plane[oy * ow..(oy + 1) * ow];
                    if sw == 1 {
                        for (ov, xv) in orow.iter_mut().zip(&xin[row..row + ow]) {
                            *ov += wv * xv;
                        }
                    } else {
                        for (ox, ov) in orow.iter_mut().enumerate() {
                            *ov += wv * xin[row + ox * sw];
                        }
                    }
                }
            }
        }
        Tensor::new(shape, out).expect("conv output shape")
    }

    /// Vector-Jacobian product with respect to the input.
    pub(crate) fn vjp(&self, grad: &Tensor, in_shape: &[usize]) -> Tensor {
        let (h, w) = (in_shape[1], in_shape[2]);
        let (oh, ow) = (grad.shape()[1], grad.shape()[2]);
        let (sh, sw) = self.stride;
        let g = grad.data();
        let pointwise = self.kernel() == (1, 1) && self.stride == (1, 1);
        let mut out = vec![0.0; in_shape.iter().product()];
        for (o, taps) in self.taps().iter().enumerate() {
            let plane = &g[o * oh * ow..(o + 1) * oh * ow];
            for &(i, ky, kx, wv) in taps {
                if pointwise {
                    for (ov, gv) in out[i * h * w..(i + 1) * h * w].iter_mut().zip(plane) {
                        *ov += wv * gv;
                    }
                    continue;
                }
                for oy in 0..oh {
                    let row = (i * h + oy * sh + ky) * w + kx;
                    let grow = &plane[oy * ow..(oy + 1) * ow];
                    if sw == 1 {
                        for (ov, gv) in out[row..row + ow].iter_mut().zip(grow) {
                            *ov += wv * gv;
                        }
                    } else {
                        for (ox, gv) in grow.iter().enumerate() {
                            out[row + ox * sw] += wv * gv;
                        }
                    }
                }
            }
        }
        Tensor::new(in_shape.to_vec(), out).expect("conv vjp shape")
    }
}

/// Fully connected layer on a 1-D input; weight is out × in.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
    rows: OnceLock<Vec<Vec<(usize, f64)>>>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "linear weight must be out×in, got {:?}",
                weight.shape()
            )));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape(format!(
                "linear bias {:?} does not match {} outputs",
                bias.shape(),
                weight.shape()[0]
            )));
        }
        Ok(Linear {
            weight,
            bias,
            rows: OnceLock::new(),
        })
    }

    /// Builds a layer from row-major weights.
    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        let out = rows.len();
        let inp = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != inp) {
            return Err(Error::Shape("ragged linear weight rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Linear::new(Tensor::new(vec![out, inp], data)?, Tensor::vector(bias))
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    fn rows(&self) -> &Vec<Vec<(usize, f64)>> {
        self.rows.get_or_init(|| {
            let n = self.in_features();
            self.weight
                .data()
                .chunks(n)
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, &w)| w != 0.0)
                        .map(|(j, &w)| (j, w))
                        .collect()
                })
                .collect()
        })
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Tensor {
        self.apply(x, true)
    }

    pub(crate) fn apply(&self, x: &Tensor, with_bias: bool) -> Tensor {
        let xin = x.data();
        let out = self
            .rows()
            .iter()
            .zip(self.bias.data())
            .map(|(row, &b)| {
                let acc: f64 = row.iter().map(|&(j, w)| w * xin[j]).sum();
                if with_bias {
                    acc + b
                } else {
                    acc
                }
            })
            .collect();
        Tensor::vector(out)
    }

    pub(crate) fn vjp(&self, grad: &Tensor) -> Tensor {
        let mut out = vec![0.0; self.in_features()];
        for (row, &g) in self.rows().iter().zip(grad.data()) {
            if g == 0.0 {
                continue;
            }
            for &(j, w) in row {
                out[j] += w * g;
            }
        }
        Tensor::vector(out)
    }
}
