use crate::error::{Error, Result};
use crate::tensor::{Conv2d, Layer, Linear, NetGraph, Tensor};

use super::Stack;

fn linear(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Layer {
    Layer::Linear(Linear::from_rows(&rows, bias).expect("gate weights are rectangular"))
}

/// Re-expresses a linear map as a 1×1 convolution applied at every pixel.
pub fn pointwise(l: &Linear) -> Conv2d {
    let (o, i) = (l.out_features(), l.in_features());
    let weight = l.weight().clone().reshape(&[o, i, 1, 1]).expect("same length");
    Conv2d::new(weight, l.bias().clone(), (1, 1)).expect("valid pointwise conv")
}

/// Turns every Linear layer of a per-value stack into a 1×1 convolution.
pub fn pointwise_stack(layers: Vec<Layer>) -> Vec<Layer> {
    layers
        .into_iter()
        .map(|l| match l {
            Layer::Linear(lin) => Layer::Conv2d(pointwise(&lin)),
            other => other,
        })
        .collect()
}

/// Layers computing `[x > i]` for integer `x`.
pub fn gt_gate_layers(i: f64) -> Vec<Layer> {
    vec![
        linear(vec![vec![1.0], vec![1.0]], vec![-i, -i - 1.0]),
        Layer::Relu,
        linear(vec![vec![1.0, -1.0]], vec![0.0]),
        Layer::Relu,
    ]
}

/// Layers computing `[x == n]` for integer `x`.
pub fn eq_gate_layers(n: f64) -> Vec<Layer> {
    vec![
        linear(
            vec![vec![1.0], vec![1.0], vec![1.0]],
            vec![-(n - 1.0), -n, -n - 1.0],
        ),
        Layer::Relu,
        linear(vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0]], vec![0.0, 0.0]),
        Layer::Relu,
        linear(vec![vec![1.0, -1.0]], vec![0.0]),
        Layer::Relu,
    ]
}

pub fn build_gt_gate(i: u64) -> NetGraph {
    let mut s = Stack::default();
    s.push_segment("gate", gt_gate_layers(i as f64));
    s.finish(vec![1]).expect("gate shapes compose")
}

pub fn build_eq_gate(n: u64) -> NetGraph {
    let mut s = Stack::default();
    s.push_segment("gate", eq_gate_layers(n as f64));
    s.finish(vec![1]).expect("gate shapes compose")
}

/// Layers mapping an integer count `x ∈ [0, capacity]` to `x mod n`.
///
/// The count is split into `m = ceil(capacity / n)` chunks of at most `n`;
/// every full chunk is detected by an equality gate and removed, and the
/// remainders are summed.
pub fn modulo_layers(n: usize, capacity: usize) -> Result<Vec<Layer>> {
    if n < 2 || n > capacity {
        return Err(Error::Config(format!(
            "modulo head needs 2 ≤ N ≤ U, got N = {n}, U = {capacity}"
        )));
    }
    let m = capacity.div_ceil(n);
    let nf = n as f64;
    let eye = |k: usize, len: usize| {
        let mut r = vec![0.0; len];
        r[k] = 1.0;
        r
    };
    let mut layers = Vec::new();

    // f1: shifted copies ReLU(x - kN), k = 0..=m
    layers.push(linear(
        vec![vec![1.0]; m + 1],
        (0..=m).map(|k| -(k as f64) * nf).collect(),
    ));
    layers.push(Layer::Relu);

    // f2: chunk sizes d_k = x_k - x_{k+1}
    let rows = (0..m)
        .map(|k| {
            let mut r = vec![0.0; m + 1];
            r[k] = 1.0;
            r[k + 1] = -1.0;
            r
        })
        .collect();
    layers.push(linear(rows, vec![0.0; m]));
    layers.push(Layer::Relu);

    // f3: carry d_k alongside an equality gate [d_k == N]
    let mut rows = Vec::with_capacity(4 * m);
    let mut bias = Vec::with_capacity(4 * m);
    for k in 0..m {
        rows.push(eye(k, m));
        bias.push(0.0);
        for shift in [nf - 1.0, nf, nf + 1.0] {
            rows.push(eye(k, m));
            bias.push(-shift);
        }
    }
    layers.push(linear(rows, bias));
    layers.push(Layer::Relu);

    let mut rows = Vec::with_capacity(3 * m);
    for k in 0..m {
        let b = 4 * k;
        rows.push(eye(b, 4 * m));
        let mut r = vec![0.0; 4 * m];
        r[b + 1] = 1.0;
        r[b + 2] = -1.0;
        rows.push(r);
        let mut r = vec![0.0; 4 * m];
        r[b + 2] = 1.0;
        r[b + 3] = -1.0;
        rows.push(r);
    }
    layers.push(linear(rows, vec![0.0; 3 * m]));
    layers.push(Layer::Relu);

    let mut rows = Vec::with_capacity(2 * m);
    for k in 0..m {
        let b = 3 * k;
        rows.push(eye(b, 3 * m));
        let mut r = vec![0.0; 3 * m];
        r[b + 1] = 1.0;
        r[b + 2] = -1.0;
        rows.push(r);
    }
    layers.push(linear(rows, vec![0.0; 2 * m]));
    layers.push(Layer::Relu);

    // f4: drop full chunks, ReLU(d_k - N * flag_k)
    let rows = (0..m)
        .map(|k| {
            let mut r = vec![0.0; 2 * m];
            r[2 * k] = 1.0;
            r[2 * k + 1] = -nf;
            r
        })
        .collect();
    layers.push(linear(rows, vec![0.0; m]));
    layers.push(Layer::Relu);

    // f5: sum of what is left
    layers.push(linear(vec![vec![1.0; m]], vec![0.0]));
    layers.push(Layer::Relu);
    Ok(layers)
}

pub fn build_modulo_head(n: usize, capacity: usize) -> Result<NetGraph> {
    let mut s = Stack::default();
    s.push_segment("modulo", modulo_layers(n, capacity)?);
    s.finish(vec![1])
}

/// Evaluates a scalar fragment at one value.
pub fn eval_scalar(net: &NetGraph, x: f64) -> f64 {
    net.eval(&Tensor::scalar(x)).expect("scalar fragment").data()[0]
}
