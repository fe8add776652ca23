use rayon::prelude::*;

use super::filters::upsample_bilinear;
use super::{reduce, BaselineSpec, ChannelReduction, Target};
use crate::error::{Error, Result};
use crate::tensor::{BackwardRule, NetGraph, Tensor};

fn input_gradient(net: &NetGraph, x: &Tensor, target: Target, rule: BackwardRule<'_>) -> Result<Tensor> {
    let (_, trace) = net.forward(x)?;
    let seed = target.one_hot(net)?;
    net.backward_span(&trace, &seed, target.boundary(net), 0, rule)
}

/// |∂y/∂x| summed over channels.
pub fn saliency(net: &NetGraph, x: &Tensor, target: Target) -> Result<Tensor> {
    let g = input_gradient(net, x, target, BackwardRule::Plain)?;
    Ok(reduce(&g, ChannelReduction::AbsSum))
}

pub fn guided_backprop(net: &NetGraph, x: &Tensor, target: Target) -> Result<Tensor> {
    let g = input_gradient(net, x, target, BackwardRule::GuidedRelu)?;
    Ok(reduce(&g, ChannelReduction::AbsSum))
}

/// Midpoint-rule path integral of gradients from the baseline to `x`.
pub fn integrated_gradients(
    net: &NetGraph,
    x: &Tensor,
    target: Target,
    baseline: &BaselineSpec,
    steps: usize,
) -> Result<Tensor> {
    if steps < 8 {
        return Err(Error::Config(format!("integrated gradients needs at least 8 steps, got {steps}")));
    }
    let x0 = baseline.fill(x)?;
    let delta = x.zip_map(&x0, |a, b| a - b);
    let seed = target.one_hot(net)?;
    let end = target.boundary(net);
    let grads: Vec<Tensor> = (0..steps)
        .into_par_iter()
        .map(|s| {
            let alpha = (s as f64 + 0.5) / steps as f64;
            let xa = x0.zip_map(&delta, |b, d| b + alpha * d);
            let (_, trace) = net.forward(&xa)?;
            net.backward_span(&trace, &seed, end, 0, BackwardRule::Plain)
        })
        .collect::<Result<_>>()?;
    // summed in step order so the result does not depend on scheduling
    let mut total = Tensor::zeros(x.shape());
    for g in &grads {
        total = total.zip_map(g, |a, b| a + b);
    }
    let attr = total.zip_map(&delta, |g, d| g * d / steps as f64);
    Ok(reduce(&attr, ChannelReduction::SignedSum))
}

/// Rescale-rule multipliers against a single reference, times (x - baseline).
pub fn deeplift_rescale(net: &NetGraph, x: &Tensor, target: Target, baseline: &BaselineSpec) -> Result<Tensor> {
    let x0 = baseline.fill(x)?;
    let (_, trace) = net.forward(x)?;
    let (_, reference) = net.forward(&x0)?;
    let seed = target.one_hot(net)?;
    let m = net.backward_span(
        &trace,
        &seed,
        target.boundary(net),
        0,
        BackwardRule::DeepLiftRescale { reference: &reference },
    )?;
    let attr = m.zip_map(&x.zip_map(&x0, |a, b| a - b), |m, d| m * d);
    Ok(reduce(&attr, ChannelReduction::SignedSum))
}

/// Epsilon-rule relevance of the target score.
pub fn lrp_epsilon(net: &NetGraph, x: &Tensor, target: Target, epsilon: f64) -> Result<Tensor> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let (_, trace) = net.forward(x)?;
    let seed = target.one_hot(net)?;
    let r = net.lrp_span(&trace, &seed, target.boundary(net), 0, epsilon)?;
    Ok(reduce(&r, ChannelReduction::SignedSum))
}

/// Gradient-weighted activations of the layer tapped by `tap`, clipped at
/// zero and resized to the input resolution.
pub fn gradcam(net: &NetGraph, x: &Tensor, target: Target, tap: &str) -> Result<Tensor> {
    let k = net.tap(tap)?;
    let b = k + 1;
    let end = target.boundary(net);
    if b > end {
        return Err(Error::Attribution(format!("tap `{tap}` lies after the explained output")));
    }
    let shape = net.value_shape(b).to_vec();
    if shape.len() != 3 {
        return Err(Error::Attribution(format!(
            "tap `{tap}` has shape {shape:?}; a C×H×W activation is required"
        )));
    }
    let (_, trace) = net.forward(x)?;
    let seed = target.one_hot(net)?;
    let grad = net.backward_span(&trace, &seed, end, b, BackwardRule::Plain)?;
    let act = trace.value(b);
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let plane = h * w;
    let mut cam = vec![0.0; plane];
    for ch in 0..c {
        let g = &grad.data()[ch * plane..(ch + 1) * plane];
        let alpha = g.iter().sum::<f64>() / plane as f64;
        if alpha == 0.0 {
            continue;
        }
        for (o, a) in cam.iter_mut().zip(&act.data()[ch * plane..(ch + 1) * plane]) {
            *o += alpha * a;
        }
    }
    let cam = Tensor::new(vec![h, w], cam.into_iter().map(|v| v.max(0.0)).collect())?;
    Ok(upsample_bilinear(&cam, x.shape()[1], x.shape()[2]))
}
