use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{count_boundary, Environment};
use crate::datagen::{color_counts, generate, white_count, LabSample};
use crate::error::{Error, Result};
use crate::tensor::{NetGraph, Tensor};

const TOL: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-9;
const MAX_LISTED: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub samples: usize,
    /// Fraction of samples whose prediction matches the counting oracle.
    pub oracle_agreement: f64,
    /// Inclusive count range injected after the gates, if checked.
    pub exhaustive_range: Option<[usize; 2]>,
    pub flips_checked: usize,
    /// max - min of count deltas over all flipped ground-truth pixels.
    pub symmetry_spread: f64,
    pub layers: usize,
    pub weighted_layers: usize,
    pub parameters: usize,
    pub failures: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks a designed network against its counting oracle: predictions on
/// generated samples, exhaustive counts for the modulo head, and the effect
/// of removing each ground-truth pixel on the count.
pub fn verify_net(net: &NetGraph, env: &Environment, budget: usize, seed: u64) -> Result<VerificationReport> {
    let samples = generate(env, budget, seed)?;
    let cb = count_boundary(net).ok_or_else(|| Error::Verification("network has no count boundary".into()))?;
    let mut failures = Vec::new();

    let agree: Vec<Option<String>> = samples
        .par_iter()
        .map(|s| check_prediction(net, env, s, cb))
        .collect::<Result<_>>()?;
    let agreed = agree.iter().filter(|a| a.is_none()).count();
    failures.extend(agree.into_iter().flatten());

    let mut exhaustive_range = None;
    if let Environment::SingleColor(cfg) = env {
        exhaustive_range = Some([0, cfg.capacity]);
        let bad: Vec<String> = (0..=cfg.capacity)
            .into_par_iter()
            .filter_map(|c| {
                let y = net.forward_span(&Tensor::vector(vec![c as f64]), cb, net.len()).ok()?;
                let want = (c % cfg.modulus) as f64;
                ((y.data()[0] - want).abs() > TOL)
                    .then(|| format!("count {c}: output {} instead of {want}", y.data()[0]))
            })
            .collect();
        failures.extend(bad);
    }

    let deltas: Vec<(Vec<f64>, Vec<String>)> = samples
        .par_iter()
        .map(|s| flip_deltas(net, env, s, cb))
        .collect::<Result<_>>()?;
    let mut all = Vec::new();
    for (d, f) in deltas {
        all.extend(d);
        failures.extend(f);
    }
    let spread = if all.is_empty() {
        0.0
    } else {
        let (lo, hi) = all
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        hi - lo
    };
    if spread > SYMMETRY_TOL {
        failures.push(format!("count deltas vary by {spread:e} across pixel positions"));
    }

    let total = failures.len();
    if total > MAX_LISTED {
        failures.truncate(MAX_LISTED);
        failures.push(format!("... and {} more", total - MAX_LISTED));
    }
    Ok(VerificationReport {
        samples: samples.len(),
        oracle_agreement: agreed as f64 / samples.len() as f64,
        exhaustive_range,
        flips_checked: all.len(),
        symmetry_spread: spread,
        layers: net.len(),
        weighted_layers: net.weighted_layer_count(),
        parameters: net.parameter_count(),
        failures,
    })
}

fn check_prediction(net: &NetGraph, env: &Environment, s: &LabSample, cb: usize) -> Result<Option<String>> {
    let (y, trace) = net.forward(&s.image)?;
    let idx = s.meta.index;
    Ok(match env {
        Environment::SingleColor(cfg) => {
            let want = (white_count(&s.image) % cfg.modulus) as f64;
            ((y.data()[0] - want).abs() > TOL)
                .then(|| format!("sample {idx}: output {} instead of {want}", y.data()[0]))
        }
        Environment::MultiColor(cfg) => {
            let counts = color_counts(&s.image, &cfg.target_colors);
            let logits = trace.value(cb);
            let off = logits
                .data()
                .iter()
                .zip(&counts)
                .position(|(l, &c)| (l - c as f64).abs() > TOL);
            let argmax = argmax(y.data());
            if let Some(k) = off {
                Some(format!(
                    "sample {idx}: count {k} is {} instead of {}",
                    logits.data()[k],
                    counts[k]
                ))
            } else {
                (argmax != s.label).then(|| format!("sample {idx}: predicted {argmax}, label {}", s.label))
            }
        }
    })
}

/// Change of the counted class when each positive ground-truth pixel is
/// replaced by background.
fn flip_deltas(net: &NetGraph, env: &Environment, s: &LabSample, cb: usize) -> Result<(Vec<f64>, Vec<String>)> {
    let background: Vec<f64> = match env {
        Environment::SingleColor(_) => vec![0.0],
        Environment::MultiColor(cfg) => cfg.background.iter().map(|&v| v as f64).collect(),
    };
    let class = match env {
        Environment::SingleColor(_) => 0,
        Environment::MultiColor(_) => s.label,
    };
    let base = net.forward_span(&s.image, 0, cb)?;
    let (h, w) = (s.height(), s.width());
    let plane = h * w;
    let mut deltas = Vec::new();
    let mut failures = Vec::new();
    let mut img = s.image.clone();
    for p in 0..plane {
        if s.gt_signed.data()[p] <= 0.0 {
            continue;
        }
        let saved: Vec<f64> = (0..background.len()).map(|c| img.data()[c * plane + p]).collect();
        for (c, &b) in background.iter().enumerate() {
            img.data_mut()[c * plane + p] = b;
        }
        let out = net.forward_span(&img, 0, cb)?;
        for (c, &v) in saved.iter().enumerate() {
            img.data_mut()[c * plane + p] = v;
        }
        for (k, (a, b)) in out.data().iter().zip(base.data()).enumerate() {
            let d = b - a;
            if k == class {
                deltas.push(d);
                if (d - 1.0).abs() > TOL {
                    failures.push(format!(
                        "sample {}: removing pixel ({}, {}) changes the count by {d}",
                        s.meta.index,
                        p / w,
                        p % w
                    ));
                }
            } else if d.abs() > TOL {
                failures.push(format!(
                    "sample {}: removing pixel ({}, {}) changes count {k} by {d}",
                    s.meta.index,
                    p / w,
                    p % w
                ));
            }
        }
    }
    Ok((deltas, failures))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
