use serde::{Deserialize, Serialize};

use super::filters::gaussian_blur;
use super::Target;
use crate::error::{Error, Result};
use crate::tensor::{BackwardRule, NetGraph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremalConfig {
    /// Fraction of pixels the mask should keep.
    pub area: f64,
    pub blur_sigma: f64,
    pub steps: usize,
    pub step_size: f64,
    /// Weight of the squared distance between the sorted mask and the ideal
    /// step profile of the requested area.
    pub area_weight: f64,
    /// Gaussian smoothing applied to the mask before use; 0 disables it.
    pub mask_sigma: f64,
    /// Initial mask logit; large values start from an almost unperturbed image.
    pub init_logit: f64,
}

impl Default for ExtremalConfig {
    fn default() -> Self {
        ExtremalConfig {
            area: 0.1,
            blur_sigma: 21.0,
            steps: 400,
            step_size: 0.5,
            area_weight: 1.0,
            mask_sigma: 2.0,
            init_logit: 6.0,
        }
    }
}

impl ExtremalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0 && self.area <= 1.0) {
            return Err(Error::Config(format!(
                "extremal_perturbation.area must be in (0, 1], got {}",
                self.area
            )));
        }
        if self.steps == 0 || !(self.step_size > 0.0) || self.blur_sigma < 0.0 || self.mask_sigma < 0.0 {
            return Err(Error::Config(
                "extremal_perturbation needs positive steps and step_size and non-negative sigmas".into(),
            ));
        }
        Ok(())
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Gradient ascent on a soft mask that keeps the target score high while
/// preserving only `area` of the image; the rest is blended toward a
/// blurred copy. Returns the final mask.
pub fn extremal_perturbation(net: &NetGraph, x: &Tensor, target: Target, cfg: &ExtremalConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let n = h * w;
    let blurred = gaussian_blur(x, cfg.blur_sigma);
    let diff = x.zip_map(&blurred, |a, b| a - b);
    let keep = ((cfg.area * n as f64).round() as usize).min(n);
    // ideal sorted profile, ascending
    let profile: Vec<f64> = (0..n).map(|i| if i >= n - keep { 1.0 } else { 0.0 }).collect();
    let seed = target.one_hot(net)?;
    let end = target.boundary(net);
    let smooth = |m: &Tensor| {
        if cfg.mask_sigma > 0.0 {
            gaussian_blur(m, cfg.mask_sigma)
        } else {
            m.clone()
        }
    };

    let mut theta = Tensor::full(&[h, w], cfg.init_logit);
    for step in 0..=cfg.steps {
        let raw = theta.map(sigmoid);
        let mask = smooth(&raw);
        if step == cfg.steps {
            return Ok(mask.map(|v| v.clamp(0.0, 1.0)));
        }
        let mut xm = blurred.clone();
        for ch in 0..c {
            for p in 0..n {
                xm.data_mut()[ch * n + p] += mask.data()[p] * diff.data()[ch * n + p];
            }
        }
        let (_, trace) = net.forward(&xm)?;
        let score = trace.value(end).data()[target.class];
        let g = net.backward_span(&trace, &seed, end, 0, BackwardRule::Plain)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| mask.data()[a].total_cmp(&mask.data()[b]).then(a.cmp(&b)));
        let mut penalty = 0.0;
        let mut grad_mask = vec![0.0; n];
        for (rank, &p) in order.iter().enumerate() {
            let e = mask.data()[p] - profile[rank];
            penalty += e * e;
            grad_mask[p] = -2.0 * cfg.area_weight * e;
        }
        let objective = score - cfg.area_weight * penalty;
        if !objective.is_finite() {
            return Err(Error::Attribution(format!(
                "extremal perturbation diverged at iteration {step}"
            )));
        }
        for (p, gm) in grad_mask.iter_mut().enumerate() {
            *gm += (0..c).map(|ch| g.data()[ch * n + p] * diff.data()[ch * n + p]).sum::<f64>();
        }
        let grad_raw = smooth(&Tensor::new(vec![h, w], grad_mask)?);
        for ((t, r), gr) in theta.data_mut().iter_mut().zip(raw.data()).zip(grad_raw.data()) {
            *t += cfg.step_size * gr * r * (1.0 - r);
        }
    }
    unreachable!("loop returns on its last step")
}
