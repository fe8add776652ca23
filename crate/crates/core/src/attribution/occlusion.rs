use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{reduce, BaselineSpec, ChannelReduction, OutputTap, Target};
use crate::error::{Error, Result};
use crate::tensor::{NetGraph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionConfig {
    /// Window extent as (channels, height, width).
    pub window: [usize; 3],
    pub strides: [usize; 3],
    pub baseline: BaselineSpec,
    /// Overrides the output tap of the requested target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap: Option<OutputTap>,
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window.contains(&0) || self.strides.contains(&0) {
            return Err(Error::Config("occlusion window and strides must be positive".into()));
        }
        Ok(())
    }
}

fn starts(dim: usize, win: usize, stride: usize) -> Vec<usize> {
    (0..=dim - win).step_by(stride).collect()
}

/// Output drop when each window is replaced by the baseline, averaged over
/// the windows covering each element. Uncovered elements score 0.
pub fn occlusion(net: &NetGraph, x: &Tensor, target: Target, cfg: &OcclusionConfig) -> Result<Tensor> {
    cfg.validate()?;
    let target = cfg.tap.map_or(target, |t| target.with_tap(t));
    let s = x.shape().to_vec();
    if cfg.window.iter().zip(&s).any(|(w, d)| w > d) {
        return Err(Error::Attribution(format!(
            "occlusion window {:?} is larger than the input {:?}",
            cfg.window, s
        )));
    }
    let fill = cfg.baseline.fill(x)?;
    let base = target.score(net, x)?;
    let [wc, wh, ww] = cfg.window;
    let mut windows = Vec::new();
    for c in starts(s[0], wc, cfg.strides[0]) {
        for y in starts(s[1], wh, cfg.strides[1]) {
            for xx in starts(s[2], ww, cfg.strides[2]) {
                windows.push((c, y, xx));
            }
        }
    }
    let idx = |c: usize, y: usize, xx: usize| (c * s[1] + y) * s[2] + xx;
    let deltas: Vec<f64> = windows
        .par_iter()
        .map(|&(c0, y0, x0)| {
            let mut occ = x.clone();
            for c in c0..c0 + wc {
                for y in y0..y0 + wh {
                    for xx in x0..x0 + ww {
                        occ.data_mut()[idx(c, y, xx)] = fill.data()[idx(c, y, xx)];
                    }
                }
            }
            Ok(base - target.score(net, &occ)?)
        })
        .collect::<Result<_>>()?;
    let mut total = Tensor::zeros(&s);
    let mut count = vec![0u32; x.len()];
    for (&(c0, y0, x0), d) in windows.iter().zip(&deltas) {
        for c in c0..c0 + wc {
            for y in y0..y0 + wh {
                for xx in x0..x0 + ww {
                    total.data_mut()[idx(c, y, xx)] += d;
                    count[idx(c, y, xx)] += 1;
                }
            }
        }
    }
    for (v, &n) in total.data_mut().iter_mut().zip(&count) {
        if n > 0 {
            *v /= n as f64;
        }
    }
    Ok(reduce(&total, ChannelReduction::SignedSum))
}
