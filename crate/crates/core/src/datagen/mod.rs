//! Synthetic images whose relevant pixels are known for the designed networks.

mod export;
mod shapes;

pub use export::{export_dataset, import_dataset, DatasetManifest, DATASET_FORMAT_VERSION};
pub use shapes::{PatchSpec, ShapeKind};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netforge::{Environment, MultiColorConfig, SingleColorConfig};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

pub const PATCHES: usize = 4;
/// Smallest number of painted pixels a patch may end up with.
pub const MIN_PATCH_PIXELS: usize = 10;
const MAX_ATTEMPTS: usize = 200;
const MAX_PLACEMENTS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub index: usize,
    /// Draws rejected before this sample was accepted.
    pub rejected: usize,
    pub patches: Vec<PatchSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabSample {
    /// C×H×W, integer values in 0..=255.
    pub image: Tensor,
    pub label: usize,
    /// H×W with entries in {-1, 0, 1}.
    pub gt_signed: Tensor,
    pub meta: SampleMeta,
}

impl LabSample {
    pub fn channels(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    /// Pixel (y, x) as channel values.
    pub fn pixel(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels()).map(|c| self.image.at3(c, y, x)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum GtVariant {
    Overall,
    Positive,
    Negative,
    SmoothedPositive { radius: usize },
}

impl GtVariant {
    pub fn name(&self) -> String {
        match self {
            GtVariant::Overall => "overall".into(),
            GtVariant::Positive => "positive".into(),
            GtVariant::Negative => "negative".into(),
            GtVariant::SmoothedPositive { radius } => format!("smoothed_positive_{radius}"),
        }
    }
}

pub fn gt_mask(sample: &LabSample, variant: GtVariant) -> Tensor {
    let g = &sample.gt_signed;
    match variant {
        GtVariant::Overall => g.map(f64::abs),
        GtVariant::Positive => g.map(|v| v.max(0.0)),
        GtVariant::Negative => g.map(|v| (-v).max(0.0)),
        GtVariant::SmoothedPositive { radius } => dilate(&g.map(|v| v.max(0.0)), radius),
    }
}

/// Box dilation of a binary H×W mask.
pub fn dilate(mask: &Tensor, radius: usize) -> Tensor {
    let (h, w) = (mask.shape()[0], mask.shape()[1]);
    let mut out = Tensor::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            if mask.at2(y, x) > 0.0 {
                for yy in y.saturating_sub(radius)..(y + radius + 1).min(h) {
                    for xx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
                        out.data_mut()[yy * w + xx] = 1.0;
                    }
                }
            }
        }
    }
    out
}

pub fn generate(env: &Environment, count: usize, seed: u64) -> Result<Vec<LabSample>> {
    match env {
        Environment::SingleColor(c) => gen_single_color(c, count, seed),
        Environment::MultiColor(c) => gen_multi_color(c, count, seed),
    }
}

pub fn gen_single_color(cfg: &SingleColorConfig, count: usize, seed: u64) -> Result<Vec<LabSample>> {
    cfg.validate()?;
    check_count(count)?;
    (0..count)
        .into_par_iter()
        .map(|i| single_sample(cfg, seed, i))
        .collect()
}

pub fn gen_multi_color(cfg: &MultiColorConfig, count: usize, seed: u64) -> Result<Vec<LabSample>> {
    cfg.validate()?;
    check_count(count)?;
    if cfg.classes() != PATCHES {
        return Err(Error::Config(format!(
            "multi-color data needs {PATCHES} target colors, got {}",
            cfg.classes()
        )));
    }
    (0..count)
        .into_par_iter()
        .map(|i| multi_sample(cfg, seed, i))
        .collect()
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    Ok(())
}

/// Four pairwise disjoint patches with radius drawn from [H/10, H/5].
fn place_patches(
    height: usize,
    width: usize,
    kind_of: impl Fn(usize, &mut ChaCha8Rng) -> ShapeKind,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<PatchSpec>, Vec<Vec<bool>>)> {
    let side = height.min(width) as f64;
    let (rmin, rmax) = (side / 10.0, side / 5.0);
    let mut patches = Vec::with_capacity(PATCHES);
    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(PATCHES);
    let mut used = vec![false; height * width];
    for k in 0..PATCHES {
        let kind = kind_of(k, rng);
        let placed = (0..MAX_PLACEMENTS).find_map(|_| {
            let r = if rmax > rmin { rng.random_range(rmin..=rmax) } else { rmin };
            let cy = rng.random_range(r..=(height as f64 - r).max(r));
            let cx = rng.random_range(r..=(width as f64 - r).max(r));
            let p = PatchSpec::sample(kind, [cy, cx], r, k, rng);
            let m = p.rasterize(height, width);
            let clash = m.iter().zip(&used).any(|(&a, &b)| a && b);
            (!clash).then_some((p, m))
        })?;
        for (u, &b) in used.iter_mut().zip(&placed.1) {
            *u |= b;
        }
        patches.push(placed.0);
        masks.push(placed.1);
    }
    Some((patches, masks))
}

fn single_sample(cfg: &SingleColorConfig, seed: u64, index: usize) -> Result<LabSample> {
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = stream_rng(seed, index as u64);
    for attempt in 0..MAX_ATTEMPTS {
        let Some((patches, masks)) = place_patches(h, w, |_, _| ShapeKind::BezierBlob, &mut rng) else {
            continue;
        };
        let mut img = vec![0.0; h * w];
        let mut ok = true;
        for m in &masks {
            let mut painted = 0;
            for (px, &inside) in img.iter_mut().zip(m) {
                if inside && rng.random_bool(0.5) {
                    *px = 255.0;
                    painted += 1;
                }
            }
            ok &= painted >= MIN_PATCH_PIXELS;
        }
        if !ok {
            continue;
        }
        let gt: Vec<f64> = img.iter().map(|&v| (v == 255.0) as u8 as f64).collect();
        let white = gt.iter().filter(|&&v| v > 0.0).count();
        return Ok(LabSample {
            image: Tensor::new(vec![1, h, w], img)?,
            label: white % cfg.modulus,
            gt_signed: Tensor::new(vec![h, w], gt)?,
            meta: SampleMeta {
                seed,
                index,
                rejected: attempt,
                patches,
            },
        });
    }
    Err(Error::Generation(format!(
        "sample {index}: no valid patch layout in {MAX_ATTEMPTS} attempts"
    )))
}

fn multi_sample(cfg: &MultiColorConfig, seed: u64, index: usize) -> Result<LabSample> {
    const KINDS: [ShapeKind; 3] = [ShapeKind::Triangle, ShapeKind::Square, ShapeKind::Circle];
    let (h, w) = (cfg.height, cfg.width);
    let plane = h * w;
    let mut rng = stream_rng(seed, index as u64);
    for attempt in 0..MAX_ATTEMPTS {
        let pick = |_: usize, r: &mut ChaCha8Rng| KINDS[r.random_range(0..KINDS.len())];
        let Some((patches, masks)) = place_patches(h, w, pick, &mut rng) else {
            continue;
        };
        // color index per pixel, None for background
        let mut owner: Vec<Option<usize>> = vec![None; plane];
        let mut counts = vec![0usize; PATCHES];
        for (k, m) in masks.iter().enumerate() {
            for (o, &inside) in owner.iter_mut().zip(m) {
                // a draw of 1 keeps the background
                if inside && !rng.random_bool(0.5) {
                    *o = Some(k);
                    counts[k] += 1;
                }
            }
        }
        if counts.iter().any(|&c| c < MIN_PATCH_PIXELS) {
            continue;
        }
        let best = *counts.iter().max().unwrap();
        if counts.iter().filter(|&&c| c == best).count() > 1 {
            continue;
        }
        let label = counts.iter().position(|&c| c == best).unwrap();
        let mut img = vec![0.0; 3 * plane];
        let mut gt = vec![0.0; plane];
        for (p, o) in owner.iter().enumerate() {
            let color = match o {
                Some(k) => cfg.target_colors[*k],
                None => cfg.background,
            };
            for c in 0..3 {
                img[c * plane + p] = color[c] as f64;
            }
            gt[p] = match o {
                Some(k) if *k == label => 1.0,
                Some(_) => -1.0,
                None => 0.0,
            };
        }
        return Ok(LabSample {
            image: Tensor::new(vec![3, h, w], img)?,
            label,
            gt_signed: Tensor::new(vec![h, w], gt)?,
            meta: SampleMeta {
                seed,
                index,
                rejected: attempt,
                patches,
            },
        });
    }
    Err(Error::Generation(format!(
        "sample {index}: no valid patch layout in {MAX_ATTEMPTS} attempts"
    )))
}

/// Number of pixels equal to 255 in a single-channel image.
pub fn white_count(image: &Tensor) -> usize {
    image.data().iter().filter(|&&v| v == 255.0).count()
}

/// Pixels of each color in a 3×H×W image.
pub fn color_counts(image: &Tensor, colors: &[[u8; 3]]) -> Vec<usize> {
    let plane = image.shape()[1] * image.shape()[2];
    let d = image.data();
    let mut out = vec![0; colors.len()];
    for p in 0..plane {
        let px = [d[p], d[plane + p], d[2 * plane + p]];
        for (k, c) in colors.iter().enumerate() {
            if px == [c[0] as f64, c[1] as f64, c[2] as f64] {
                out[k] += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_single() -> SingleColorConfig {
        SingleColorConfig::with_size(32, 32)
    }

    #[test]
    fn single_color_is_deterministic_and_consistent() {
        let cfg = small_single();
        let a = gen_single_color(&cfg, 6, 9).unwrap();
        let b = gen_single_color(&cfg, 6, 9).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(s.label, (s.gt_signed.sum() as usize) % 30);
            assert_eq!(white_count(&s.image), s.gt_signed.sum() as usize);
            assert!(s.gt_signed.data().iter().all(|&v| v == 0.0 || v == 1.0));
        }
        let c = gen_single_color(&cfg, 6, 10).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn patches_do_not_overlap() {
        let cfg = MultiColorConfig {
            height: 32,
            width: 32,
            ..Default::default()
        };
        for s in gen_multi_color(&cfg, 10, 4).unwrap() {
            let mut used = vec![0u8; 32 * 32];
            for p in &s.meta.patches {
                for (u, b) in used.iter_mut().zip(p.rasterize(32, 32)) {
                    *u += b as u8;
                }
            }
            assert!(used.iter().all(|&u| u <= 1));
        }
    }

    #[test]
    fn multi_color_labels_follow_counts() {
        let cfg = MultiColorConfig {
            height: 32,
            width: 32,
            ..Default::default()
        };
        for s in gen_multi_color(&cfg, 20, 1).unwrap() {
            let counts = color_counts(&s.image, &cfg.target_colors);
            let best = *counts.iter().max().unwrap();
            assert_eq!(counts[s.label], best);
            assert_eq!(counts.iter().filter(|&&c| c == best).count(), 1);
            let plane = 32 * 32;
            for p in 0..plane {
                let px = [s.image.data()[p], s.image.data()[plane + p], s.image.data()[2 * plane + p]];
                if px == [20.0, 20.0, 20.0] {
                    assert_eq!(s.gt_signed.data()[p], 0.0);
                }
            }
            assert_eq!(s.gt_signed.data().iter().filter(|&&v| v == 1.0).count(), best);
        }
    }

    #[test]
    fn mask_variants() {
        let gt = Tensor::new(vec![1, 3], vec![1.0, -1.0, 0.0]).unwrap();
        let s = LabSample {
            image: Tensor::zeros(&[1, 1, 3]),
            label: 0,
            gt_signed: gt,
            meta: SampleMeta {
                seed: 0,
                index: 0,
                rejected: 0,
                patches: vec![],
            },
        };
        assert_eq!(gt_mask(&s, GtVariant::Overall).data(), &[1.0, 1.0, 0.0]);
        assert_eq!(gt_mask(&s, GtVariant::Positive).data(), &[1.0, 0.0, 0.0]);
        assert_eq!(gt_mask(&s, GtVariant::Negative).data(), &[0.0, 1.0, 0.0]);
        let mut one = Tensor::zeros(&[5, 5]);
        one.data_mut()[12] = 1.0;
        let d = dilate(&one, 1);
        assert_eq!(d.sum(), 9.0);
        assert_eq!(d.at2(1, 1), 1.0);
        assert_eq!(d.at2(0, 0), 0.0);
    }

    #[test]
    fn zero_count_rejected() {
        assert!(gen_single_color(&small_single(), 0, 0).is_err());
    }
}
