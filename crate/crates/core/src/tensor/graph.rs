use std::collections::HashMap;

use super::layer::softmax;
use super::{Layer, Tensor};
use crate::error::{Error, Result};

/// Values recorded by one forward pass: `values[k]` is the input of layer `k`
/// and `values[k + 1]` its output.
#[derive(Clone, Debug)]
pub struct ActivationTrace {
    values: Vec<Tensor>,
}

impl ActivationTrace {
    /// Number of layers covered.
    pub fn len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, layer: usize) -> &Tensor {
        &self.values[layer]
    }

    pub fn output(&self, layer: usize) -> &Tensor {
        &self.values[layer + 1]
    }

    /// Value at boundary `k` (0 is the network input, `len()` its output).
    pub fn value(&self, k: usize) -> &Tensor {
        &self.values[k]
    }
}

/// How ReLU and softmax layers transform the backward signal.
#[derive(Clone, Copy, Debug)]
pub enum BackwardRule<'a> {
    /// Ordinary vector-Jacobian products.
    Plain,
    /// Only positive signals pass through ReLUs.
    GuidedRelu,
    /// Multipliers Δout/Δin against a reference trace.
    DeepLiftRescale { reference: &'a ActivationTrace },
}

/// Straight-line feed-forward network with fixed weights.
#[derive(Clone, Debug)]
pub struct NetGraph {
    layers: Vec<Layer>,
    labels: Vec<String>,
    shapes: Vec<Vec<usize>>,
    /// Maximal spans of per-pixel layers (1×1 convolutions and ReLUs).
    runs: Vec<(usize, usize)>,
}

impl NetGraph {
    /// Validates that consecutive layer shapes compose and labels are unique.
    pub fn new(input_shape: Vec<usize>, layers: Vec<(String, Layer)>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("bad input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape];
        let mut labels = Vec::with_capacity(layers.len());
        let mut out = Vec::with_capacity(layers.len());
        for (k, (label, layer)) in layers.into_iter().enumerate() {
            let inp = shapes.last().unwrap().clone();
            if let Layer::Add { skip } = layer {
                if skip > k || shapes[skip] != inp {
                    return Err(Error::Shape(format!(
                        "layer {k} ({label}) adds the input of layer {skip} with an incompatible shape"
                    )));
                }
            }
            let next = layer
                .output_shape(&inp)
                .map_err(|e| Error::Shape(format!("layer {k} ({label}): {e}")))?;
            if labels.contains(&label) {
                return Err(Error::Config(format!("duplicate layer label `{label}`")));
            }
            shapes.push(next);
            labels.push(label);
            out.push(layer);
        }
        let runs = pointwise_runs(&out, &shapes);
        Ok(NetGraph {
            layers: out,
            labels,
            shapes,
            runs,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Shape of boundary value `k` (input of layer `k`).
    pub fn value_shape(&self, k: usize) -> &[usize] {
        &self.shapes[k]
    }

    pub fn output_arity(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Softmax))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Layers carrying weights (conv and linear).
    pub fn weighted_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Conv2d(_) | Layer::Linear(_)))
            .count()
    }

    /// Index of the layer whose output is tapped by `name`.
    pub fn tap(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::UnknownTap {
                name: name.to_string(),
                available: self.labels.join(", "),
            })
    }

    /// Index of the first layer whose label starts with `prefix`.
    pub fn segment_start(&self, prefix: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.starts_with(prefix))
    }

    /// Index one past the last layer whose label starts with `prefix`.
    pub fn segment_end(&self, prefix: &str) -> Option<usize> {
        self.labels.iter().rposition(|l| l.starts_with(prefix)).map(|i| i + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ActivationTrace)> {
        if x.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape(),
                x.shape()
            )));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.clone());
        let mut k = 0;
        while k < self.layers.len() {
            if let Some(run) = self.run_at(k, self.layers.len()) {
                if let Some(mut vals) = self.run_compact(&values[k], run, true) {
                    values.append(&mut vals);
                    k = run.1;
                    continue;
                }
            }
            let next = self.apply_layer(k, &self.layers[k], &values);
            values.push(next);
            k += 1;
        }
        let y = values.last().unwrap().clone();
        Ok((y, ActivationTrace { values }))
    }

    /// Runs layers `start..end` on `x`, which must have the shape of boundary
    /// `start`. Add layers may only reference boundaries inside the span.
    pub fn forward_span(&self, x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > self.layers.len() {
            return Err(Error::Shape(format!("bad layer span {start}..{end}")));
        }
        if x.shape() != self.value_shape(start) {
            return Err(Error::Shape(format!(
                "span starting at layer {start} expects {:?}, got {:?}",
                self.value_shape(start),
                x.shape()
            )));
        }
        // values[i] holds boundary start + i
        let mut values = vec![x.clone()];
        let mut k = start;
        while k < end {
            if let Some(run) = self.run_at(k, end) {
                if let Some(mut vals) = self.run_compact(&values[k - start], run, false) {
                    // only the run output is kept; Add layers cannot point inside a run
                    values.resize(run.1 - start, Tensor::scalar(0.0));
                    values.append(&mut vals);
                    k = run.1;
                    continue;
                }
            }
            let layer = &self.layers[k];
            let next = match layer {
                Layer::Add { skip } => {
                    if *skip < start {
                        return Err(Error::Shape(format!(
                            "layer {k} reaches boundary {skip} outside the span"
                        )));
                    }
                    values[k - start].zip_map(&values[skip - start], |a, b| a + b)
                }
                _ => self.apply_simple(layer, &values[k - start]),
            };
            values.push(next);
            k += 1;
        }
        Ok(values.pop().unwrap())
    }

    /// Evaluates only the network output.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_span(x, 0, self.layers.len())
    }

    fn apply_layer(&self, k: usize, layer: &Layer, values: &[Tensor]) -> Tensor {
        match layer {
            Layer::Add { skip } => values[k].zip_map(&values[*skip], |a, b| a + b),
            _ => self.apply_simple(layer, &values[k]),
        }
    }

    fn apply_simple(&self, layer: &Layer, x: &Tensor) -> Tensor {
        match layer {
            Layer::Conv2d(c) => c.forward(x),
            Layer::Linear(l) => l.forward(x),
            Layer::Relu => x.map(|v| v.max(0.0)),
            Layer::Softmax => Tensor::vector(softmax(x.data())),
            Layer::Flatten => x.clone().reshape(&[x.len()]).unwrap(),
            Layer::Add { .. } => unreachable!("handled by caller"),
        }
    }

    fn check_trace(&self, trace: &ActivationTrace) -> Result<()> {
        if trace.values.len() != self.shapes.len() {
            return Err(Error::TraceMismatch(format!(
                "trace covers {} layers, network has {}",
                trace.len(),
                self.len()
            )));
        }
        for (k, (v, s)) in trace.values.iter().zip(&self.shapes).enumerate() {
            if v.shape() != s.as_slice() {
                return Err(Error::TraceMismatch(format!(
                    "boundary {k} has shape {:?}, expected {s:?}",
                    v.shape()
                )));
            }
        }
        Ok(())
    }

    /// d⟨seed, y⟩/dx for the whole network.
    pub fn backward(&self, trace: &ActivationTrace, seed: &Tensor) -> Result<Tensor> {
        self.backward_span(trace, seed, self.len(), 0, BackwardRule::Plain)
    }

    /// Propagates `seed`, attached to boundary `end`, back to boundary `start`.
    pub fn backward_span(
        &self,
        trace: &ActivationTrace,
        seed: &Tensor,
        end: usize,
        start: usize,
        rule: BackwardRule<'_>,
    ) -> Result<Tensor> {
        self.check_trace(trace)?;
        if let BackwardRule::DeepLiftRescale { reference } = rule {
            self.check_trace(reference)?;
        }
        self.check_span(seed, end, start)?;
        let step = |k: usize| match rule {
            BackwardRule::Plain => Step::Plain,
            BackwardRule::GuidedRelu => Step::Guided,
            BackwardRule::DeepLiftRescale { reference } => Step::Rescale {
                x0: &reference.values[k],
                y0: &reference.values[k + 1],
            },
        };
        let mut pending: Vec<Option<Tensor>> = vec![None; self.len() + 1];
        let mut g = seed.clone();
        let mut k = end;
        while k > start {
            if let Some(p) = pending[k].take() {
                g = g.zip_map(&p, |a, b| a + b);
            }
            if let Some(run) = self.run_ending(k, start) {
                let fast = match rule {
                    BackwardRule::Plain => self.run_back_compact(trace, None, run, &g, Step::Plain),
                    BackwardRule::DeepLiftRescale { reference } => self.run_back_compact(
                        trace,
                        Some(reference),
                        run,
                        &g,
                        Step::Rescale {
                            x0: &reference.values[run.0],
                            y0: &reference.values[run.0],
                        },
                    ),
                    BackwardRule::GuidedRelu => None,
                };
                if let Some(gi) = fast {
                    g = gi;
                    k = run.0;
                    continue;
                }
            }
            k -= 1;
            g = match &self.layers[k] {
                Layer::Add { skip } => {
                    if *skip >= start {
                        accumulate(&mut pending[*skip], &g);
                    }
                    g
                }
                layer => layer_back(layer, &g, &trace.values[k], &trace.values[k + 1], step(k))?,
            };
        }
        if let Some(p) = pending[start].take() {
            g = g.zip_map(&p, |a, b| a + b);
        }
        Ok(g)
    }

    /// Epsilon-rule relevance propagation from boundary `end` to `start`.
    ///
    /// The initial relevance is `seed ⊙ value[end]`. ReLU and softmax layers
    /// pass relevance through unchanged; biases absorb their share.
    pub fn lrp_span(
        &self,
        trace: &ActivationTrace,
        seed: &Tensor,
        end: usize,
        start: usize,
        epsilon: f64,
    ) -> Result<Tensor> {
        self.check_trace(trace)?;
        self.check_span(seed, end, start)?;
        let stab = |z: f64| if z >= 0.0 { z + epsilon } else { z - epsilon };
        let mut pending: Vec<Option<Tensor>> = vec![None; self.len() + 1];
        let mut r = seed.zip_map(&trace.values[end], |s, v| s * v);
        let mut k = end;
        while k > start {
            if let Some(p) = pending[k].take() {
                r = r.zip_map(&p, |a, b| a + b);
            }
            if let Some(run) = self.run_ending(k, start) {
                if let Some(ri) = self.run_back_compact(trace, None, run, &r, Step::Lrp(epsilon)) {
                    r = ri;
                    k = run.0;
                    continue;
                }
            }
            k -= 1;
            let x = &trace.values[k];
            let z = &trace.values[k + 1];
            r = match &self.layers[k] {
                Layer::Add { skip } => {
                    let s = r.zip_map(z, |rv, zv| rv / stab(zv));
                    if *skip >= start {
                        let skipped = s.zip_map(&trace.values[*skip], |sv, v| sv * v);
                        accumulate(&mut pending[*skip], &skipped);
                    }
                    s.zip_map(x, |sv, v| sv * v)
                }
                layer => layer_back(layer, &r, x, z, Step::Lrp(epsilon))?,
            };
        }
        if let Some(p) = pending[start].take() {
            r = r.zip_map(&p, |a, b| a + b);
        }
        Ok(r)
    }

    fn check_span(&self, seed: &Tensor, end: usize, start: usize) -> Result<()> {
        if start > end || end > self.len() {
            return Err(Error::Shape(format!("bad backward span {start}..{end}")));
        }
        if seed.shape() != self.value_shape(end) {
            return Err(Error::Shape(format!(
                "seed shape {:?} does not match boundary {end} shape {:?}",
                seed.shape(),
                self.value_shape(end)
            )));
        }
        Ok(())
    }

    /// Pointwise run starting at layer `k` that fits before boundary `end`.
    fn run_at(&self, k: usize, end: usize) -> Option<(usize, usize)> {
        self.runs.iter().copied().find(|r| r.0 == k && r.1 <= end)
    }

    /// Pointwise run ending at boundary `k` that starts at or after `start`.
    fn run_ending(&self, k: usize, start: usize) -> Option<(usize, usize)> {
        self.runs.iter().copied().find(|r| r.1 == k && r.0 >= start)
    }

    /// Evaluates a pointwise run once per distinct input pixel. Returns the
    /// run's boundary values after its first layer (all of them, or only the
    /// last), or `None` when the input has too many distinct pixels.
    fn run_compact(&self, x: &Tensor, run: (usize, usize), all: bool) -> Option<Vec<Tensor>> {
        let pix = PixelIndex::build(&[x])?;
        let mut v = pix.gather(x);
        let mut out = Vec::with_capacity(run.1 - run.0);
        for k in run.0..run.1 {
            v = self.apply_simple(&self.layers[k], &v);
            if all || k + 1 == run.1 {
                out.push(pix.scatter(&v));
            }
        }
        Some(out)
    }

    /// Backward pass through a pointwise run using one small Jacobian per
    /// distinct pixel (the rules used here are linear in the incoming signal).
    fn run_back_compact(
        &self,
        trace: &ActivationTrace,
        reference: Option<&ActivationTrace>,
        run: (usize, usize),
        g: &Tensor,
        step: Step<'_>,
    ) -> Option<Tensor> {
        let x = &trace.values[run.0];
        let pix = match reference {
            Some(r) => PixelIndex::build(&[x, &r.values[run.0]])?,
            None => PixelIndex::build(&[x])?,
        };
        let vals: Vec<Tensor> = (run.0..=run.1).map(|b| pix.gather(&trace.values[b])).collect();
        let refs: Option<Vec<Tensor>> =
            reference.map(|r| (run.0..=run.1).map(|b| pix.gather(&r.values[b])).collect());
        let (c_out, u) = (vals.last().unwrap().shape()[0], pix.reps.len());
        let c_in = x.shape()[0];
        // jac[j] holds d(input)/d(output channel j) per distinct pixel
        let mut jac = Vec::with_capacity(c_out);
        for j in 0..c_out {
            let mut e = Tensor::zeros(&[c_out, 1, u]);
            e.data_mut()[j * u..(j + 1) * u].fill(1.0);
            for k in (run.0..run.1).rev() {
                let i = k - run.0;
                let st = match (step, &refs) {
                    (Step::Rescale { .. }, Some(r)) => Step::Rescale {
                        x0: &r[i],
                        y0: &r[i + 1],
                    },
                    (s, _) => s,
                };
                e = layer_back(&self.layers[k], &e, &vals[i], &vals[i + 1], st).ok()?;
            }
            jac.push(e);
        }
        let plane = pix.keys.len();
        let mut out = vec![0.0; c_in * plane];
        let gd = g.data();
        for (j, m) in jac.iter().enumerate() {
            let md = m.data();
            for c in 0..c_in {
                let row = &md[c * u..(c + 1) * u];
                let dst = &mut out[c * plane..(c + 1) * plane];
                let src = &gd[j * plane..(j + 1) * plane];
                for p in 0..plane {
                    dst[p] += row[pix.keys[p]] * src[p];
                }
            }
        }
        Tensor::new(x.shape().to_vec(), out).ok()
    }
}

#[derive(Clone, Copy)]
enum Step<'a> {
    Plain,
    Guided,
    Rescale { x0: &'a Tensor, y0: &'a Tensor },
    Lrp(f64),
}

/// Backward signal through one non-Add layer with input `x` and output `y`.
fn layer_back(layer: &Layer, g: &Tensor, x: &Tensor, y: &Tensor, step: Step<'_>) -> Result<Tensor> {
    let stab = |eps: f64, z: f64| if z >= 0.0 { z + eps } else { z - eps };
    Ok(match (layer, step) {
        (Layer::Conv2d(c), Step::Lrp(eps)) => {
            let s = g.zip_map(y, |rv, zv| rv / stab(eps, zv));
            c.vjp(&s, x.shape()).zip_map(x, |cv, xv| cv * xv)
        }
        (Layer::Linear(l), Step::Lrp(eps)) => {
            let s = g.zip_map(y, |rv, zv| rv / stab(eps, zv));
            l.vjp(&s).zip_map(x, |cv, xv| cv * xv)
        }
        (Layer::Relu | Layer::Softmax, Step::Lrp(_)) => g.clone(),
        (Layer::Conv2d(c), _) => c.vjp(g, x.shape()),
        (Layer::Linear(l), _) => l.vjp(g),
        (Layer::Flatten, _) => g.clone().reshape(x.shape())?,
        (Layer::Relu, Step::Plain) => g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }),
        (Layer::Relu, Step::Guided) => g.zip_map(x, |gv, xv| if xv > 0.0 && gv > 0.0 { gv } else { 0.0 }),
        (Layer::Relu, Step::Rescale { x0, y0 }) => {
            let data = g
                .data()
                .iter()
                .enumerate()
                .map(|(i, gv)| {
                    let dx = x.data()[i] - x0.data()[i];
                    let m = if dx.abs() > 1e-10 {
                        (y.data()[i] - y0.data()[i]) / dx
                    } else if x.data()[i] > 0.0 {
                        1.0
                    } else {
                        0.0
                    };
                    gv * m
                })
                .collect();
            Tensor::new(g.shape().to_vec(), data)?
        }
        (Layer::Softmax, Step::Rescale { x0, .. }) => softmax_rescale(x.data(), x0.data(), g.data()),
        (Layer::Softmax, _) => softmax_vjp(y.data(), g.data()),
        (Layer::Add { .. }, _) => unreachable!("handled by caller"),
    })
}

/// Runs of at least two per-pixel layers, including a convolution, whose
/// interior boundaries no Add layer refers to.
fn pointwise_runs(layers: &[Layer], shapes: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let pointwise = |k: usize| {
        shapes[k].len() == 3
            && match &layers[k] {
                Layer::Relu => true,
                Layer::Conv2d(c) => c.kernel() == (1, 1) && c.stride() == (1, 1),
                _ => false,
            }
    };
    let skips: Vec<usize> = layers
        .iter()
        .filter_map(|l| match l {
            Layer::Add { skip } => Some(*skip),
            _ => None,
        })
        .collect();
    let mut runs = Vec::new();
    let mut k = 0;
    while k < layers.len() {
        if !pointwise(k) {
            k += 1;
            continue;
        }
        let s = k;
        while k < layers.len() && pointwise(k) && (k == s || !skips.contains(&k)) {
            k += 1;
        }
        let has_conv = (s..k).any(|i| matches!(layers[i], Layer::Conv2d(_)));
        if k - s >= 2 && has_conv {
            runs.push((s, k));
        }
    }
    runs
}

/// Distinct pixels of one or more C×H×W tensors sharing H×W.
const MAX_KEY: usize = 8;

struct PixelIndex {
    /// Distinct-pixel id per pixel.
    keys: Vec<usize>,
    /// First pixel carrying each id.
    reps: Vec<usize>,
    h: usize,
    w: usize,
}

impl PixelIndex {
    fn build(xs: &[&Tensor]) -> Option<Self> {
        let (h, w) = (xs[0].shape()[1], xs[0].shape()[2]);
        let plane = h * w;
        // flattened channel planes of all inputs
        let planes: Vec<&[f64]> = xs.iter().flat_map(|x| x.data().chunks_exact(plane)).collect();
        if planes.len() > MAX_KEY {
            return None;
        }
        let mut ids: HashMap<[u64; MAX_KEY], usize> = HashMap::new();
        let mut keys = Vec::with_capacity(plane);
        let mut reps = Vec::new();
        for p in 0..plane {
            // neighbouring pixels usually repeat
            if p > 0 && planes.iter().all(|c| c[p].to_bits() == c[p - 1].to_bits()) {
                keys.push(keys[p - 1]);
                continue;
            }
            let mut key = [0u64; MAX_KEY];
            for (k, c) in key.iter_mut().zip(&planes) {
                *k = c[p].to_bits();
            }
            let next = reps.len();
            let id = *ids.entry(key).or_insert(next);
            if id == next {
                reps.push(p);
                if reps.len() * 4 > plane {
                    return None;
                }
            }
            keys.push(id);
        }
        Some(PixelIndex { keys, reps, h, w })
    }

    /// C×1×U tensor of the distinct pixels.
    fn gather(&self, x: &Tensor) -> Tensor {
        let c = x.shape()[0];
        let plane = self.h * self.w;
        let u = self.reps.len();
        let mut out = Vec::with_capacity(c * u);
        for ch in 0..c {
            out.extend(self.reps.iter().map(|&p| x.data()[ch * plane + p]));
        }
        Tensor::new(vec![c, 1, u], out).expect("gather shape")
    }

    fn scatter(&self, v: &Tensor) -> Tensor {
        let (c, u) = (v.shape()[0], v.shape()[2]);
        let mut out = Vec::with_capacity(c * self.keys.len());
        for ch in 0..c {
            let row = &v.data()[ch * u..(ch + 1) * u];
            out.extend(self.keys.iter().map(|&k| row[k]));
        }
        Tensor::new(vec![c, self.h, self.w], out).expect("scatter shape")
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: &Tensor) {
    *slot = Some(match slot.take() {
        Some(p) => p.zip_map(g, |a, b| a + b),
        None => g.clone(),
    });
}

fn softmax_vjp(p: &[f64], g: &[f64]) -> Tensor {
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    Tensor::vector(p.iter().zip(g).map(|(pv, gv)| pv * (gv - dot)).collect())
}

/// Multipliers for softmax: the gradient of ⟨g, softmax⟩ averaged along the
/// straight line between reference and actual logits, rescaled so that the
/// multipliers reproduce the exact output difference.
fn softmax_rescale(z: &[f64], z0: &[f64], g: &[f64]) -> Tensor {
    const STEPS: usize = 256;
    let n = z.len();
    let dz: Vec<f64> = z.iter().zip(z0).map(|(a, b)| a - b).collect();
    let mut m = vec![0.0; n];
    let mut point = vec![0.0; n];
    for s in 0..STEPS {
        let alpha = (s as f64 + 0.5) / STEPS as f64;
        for i in 0..n {
            point[i] = z0[i] + alpha * dz[i];
        }
        let p = softmax(&point);
        let local = softmax_vjp(&p, g);
        for (mv, lv) in m.iter_mut().zip(local.data()) {
            *mv += lv / STEPS as f64;
        }
    }
    let phi = |v: &[f64]| -> f64 { softmax(v).iter().zip(g).map(|(a, b)| a * b).sum() };
    let exact = phi(z) - phi(z0);
    let est: f64 = m.iter().zip(&dz).map(|(a, b)| a * b).sum();
    if est != 0.0 {
        let ratio = exact / est;
        if (0.5..=2.0).contains(&ratio) {
            m.iter_mut().for_each(|v| *v *= ratio);
        }
    }
    Tensor::vector(m)
}
