use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::segment::{segment, Segmentation, SegmentationSpec};
use super::{BaselineSpec, Target};
use crate::datagen::LabSample;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::rng::stream_rng;
use crate::tensor::{NetGraph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimeConfig {
    pub segmentation: SegmentationSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_width")]
    pub kernel_width: f64,
    #[serde(default = "default_lambda")]
    pub ridge_lambda: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fill for switched-off superpixels; black when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSpec>,
}

fn default_samples() -> usize {
    1000
}

fn default_width() -> f64 {
    0.25
}

fn default_lambda() -> f64 {
    1e-3
}

impl LimeConfig {
    pub fn new(segmentation: SegmentationSpec) -> Self {
        LimeConfig {
            segmentation,
            samples: default_samples(),
            kernel_width: default_width(),
            ridge_lambda: default_lambda(),
            seed: 0,
            baseline: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        if !(self.kernel_width > 0.0) {
            return Err(Error::Config("lime.kernel_width must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::Config("lime.ridge_lambda must be non-negative".into()));
        }
        if self.samples < 2 {
            return Err(Error::Config("lime.samples must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Penalty actually used (raised once if the first solve failed).
    pub lambda: f64,
}

/// exp(-d²/width²) with d the cosine distance between a mask and the
/// all-on mask.
pub fn cosine_kernel_weights(masks: &[Vec<bool>], width: f64) -> Vec<f64> {
    masks
        .iter()
        .map(|m| {
            let on = m.iter().filter(|&&b| b).count() as f64;
            let d = if on == 0.0 {
                1.0
            } else {
                1.0 - on / (on.sqrt() * (m.len() as f64).sqrt())
            };
            (-(d * d) / (width * width)).exp()
        })
        .collect()
}

/// Weighted ridge regression with an unpenalized intercept.
pub fn weighted_ridge(z: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Result<RidgeFit> {
    let n = z.len();
    let p = z.first().map_or(0, Vec::len);
    let sw: f64 = w.iter().sum();
    if n == 0 || !(sw > 0.0) {
        return Err(Error::Attribution("ridge regression needs positively weighted rows".into()));
    }
    let zbar: Vec<f64> = (0..p).map(|j| (0..n).map(|i| w[i] * z[i][j]).sum::<f64>() / sw).collect();
    let ybar = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / sw;
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for i in 0..n {
        let zc: Vec<f64> = (0..p).map(|j| z[i][j] - zbar[j]).collect();
        let yc = y[i] - ybar;
        for j in 0..p {
            b[j] += w[i] * zc[j] * yc;
            for k in j..p {
                a[j * p + k] += w[i] * zc[j] * zc[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[j * p + k] = a[k * p + j];
        }
    }
    let solve = |lam: f64| {
        let mut m = a.clone();
        for j in 0..p {
            m[j * p + j] += lam;
        }
        solve_spd(&m, p, &b)
    };
    let (coef, lambda) = match solve(lambda) {
        Some(c) => (c, lambda),
        None => {
            let raised = (lambda * 1e3).max(1e-6);
            let c = solve(raised).ok_or_else(|| {
                Error::Attribution(format!("ridge system singular even with lambda = {raised}"))
            })?;
            (c, raised)
        }
    };
    let intercept = ybar - zbar.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
    Ok(RidgeFit {
        coef,
        intercept,
        lambda,
    })
}

/// Image with the superpixels switched off in `mask` replaced by `fill`.
fn perturb(x: &Tensor, fill: &Tensor, seg: &Segmentation, mask: &[bool]) -> Tensor {
    let plane = seg.labels.len();
    let mut out = x.clone();
    for (p, &l) in seg.labels.iter().enumerate() {
        if !mask[l] {
            for c in 0..x.shape()[0] {
                out.data_mut()[c * plane + p] = fill.data()[c * plane + p];
            }
        }
    }
    out
}

/// Fits the surrogate on the given masks; each superpixel's coefficient is
/// broadcast to its pixels.
#[allow(clippy::too_many_arguments)]
pub fn lime_with_masks(
    net: &NetGraph,
    x: &Tensor,
    target: Target,
    seg: &Segmentation,
    masks: &[Vec<bool>],
    baseline: &BaselineSpec,
    kernel_width: f64,
    ridge_lambda: f64,
) -> Result<(Tensor, RidgeFit)> {
    let fill = baseline.fill(x)?;
    let y: Vec<f64> = masks
        .par_iter()
        .map(|m| target.score(net, &perturb(x, &fill, seg, m)))
        .collect::<Result<_>>()?;
    let w = cosine_kernel_weights(masks, kernel_width);
    let z: Vec<Vec<f64>> = masks
        .iter()
        .map(|m| m.iter().map(|&b| b as u8 as f64).collect())
        .collect();
    let fit = weighted_ridge(&z, &y, &w, ridge_lambda)?;
    let values = seg.labels.iter().map(|&l| fit.coef[l]).collect();
    Ok((Tensor::new(vec![seg.height, seg.width], values)?, fit))
}

pub fn lime(net: &NetGraph, sample: &LabSample, target: Target, cfg: &LimeConfig) -> Result<Tensor> {
    cfg.validate()?;
    let seg = segment(&sample.image, &cfg.segmentation)?;
    if cfg.samples < 2 * seg.count {
        return Err(Error::Config(format!(
            "lime.samples = {} is below twice the {} superpixels",
            cfg.samples, seg.count
        )));
    }
    let mut rng = stream_rng(cfg.seed, sample.meta.index as u64);
    let mut masks = vec![vec![true; seg.count]];
    for _ in 1..cfg.samples {
        masks.push((0..seg.count).map(|_| !rng.random_bool(0.5)).collect());
    }
    let baseline = cfg
        .baseline
        .unwrap_or(BaselineSpec::scalar(0.0, super::Provenance::DefaultZero));
    let (map, _) = lime_with_masks(
        net,
        &sample.image,
        target,
        &seg,
        &masks,
        &baseline,
        cfg.kernel_width,
        cfg.ridge_lambda,
    )?;
    Ok(map)
}
