use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::{LabSample, SampleMeta};
use crate::error::{Error, Result};
use crate::netforge::Environment;
use crate::tensor::Tensor;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub environment: Environment,
    pub seed: u64,
    pub count: usize,
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    label: usize,
    #[serde(flatten)]
    meta: SampleMeta,
}

fn name(i: usize) -> String {
    format!("{i:04}")
}

fn gt_to_byte(v: f64) -> u8 {
    match v {
        v if v > 0.0 => 255,
        v if v < 0.0 => 0,
        _ => 128,
    }
}

/// Writes `images/`, `gt/`, `meta/` and `dataset.json` under `dir`.
pub fn export_dataset(samples: &[LabSample], env: &Environment, seed: u64, dir: &Path) -> Result<()> {
    for sub in ["images", "gt", "meta"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    for (i, s) in samples.iter().enumerate() {
        let (h, w) = (s.height() as u32, s.width() as u32);
        let plane = (h * w) as usize;
        let px = |v: f64| v.clamp(0.0, 255.0) as u8;
        let img_path = dir.join("images").join(format!("{}.png", name(i)));
        let d = s.image.data();
        let saved = if s.channels() == 1 {
            GrayImage::from_raw(w, h, d.iter().map(|&v| px(v)).collect())
                .expect("buffer size")
                .save(&img_path)
        } else {
            let raw = (0..plane)
                .flat_map(|p| [px(d[p]), px(d[plane + p]), px(d[2 * plane + p])])
                .collect();
            RgbImage::from_raw(w, h, raw).expect("buffer size").save(&img_path)
        };
        saved.map_err(|e| Error::load(&img_path, e))?;
        let gt_path = dir.join("gt").join(format!("{}.png", name(i)));
        GrayImage::from_raw(w, h, s.gt_signed.data().iter().map(|&v| gt_to_byte(v)).collect())
            .expect("buffer size")
            .save(&gt_path)
            .map_err(|e| Error::load(&gt_path, e))?;
        let file = SampleFile {
            label: s.label,
            meta: s.meta.clone(),
        };
        fs::write(
            dir.join("meta").join(format!("{}.json", name(i))),
            serde_json::to_vec_pretty(&file)?,
        )?;
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        environment: env.clone(),
        seed,
        count: samples.len(),
    };
    fs::write(dir.join("dataset.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read(path).map_err(|e| Error::load(path, e))?;
    serde_json::from_slice(&raw).map_err(|e| Error::load(path, e))
}

fn open_png(path: &PathBuf) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::load(path, e))
}

pub fn import_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<LabSample>)> {
    let manifest: DatasetManifest = read_json(&dir.join("dataset.json"))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::load(
            dir.join("dataset.json"),
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let env = &manifest.environment;
    let (h, w, c) = (env.height(), env.width(), env.channels());
    let mut samples = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let img_path = dir.join("images").join(format!("{}.png", name(i)));
        let img = open_png(&img_path)?;
        if (img.height() as usize, img.width() as usize) != (h, w) {
            return Err(Error::load(&img_path, format!("expected {w}×{h} pixels")));
        }
        let plane = h * w;
        let data: Vec<f64> = match (c, img) {
            (1, image::DynamicImage::ImageLuma8(g)) => g.into_raw().into_iter().map(f64::from).collect(),
            (3, image::DynamicImage::ImageRgb8(rgb)) => {
                let raw = rgb.into_raw();
                let mut out = vec![0.0; 3 * plane];
                for p in 0..plane {
                    for ch in 0..3 {
                        out[ch * plane + p] = raw[p * 3 + ch] as f64;
                    }
                }
                out
            }
            (_, other) => {
                return Err(Error::load(
                    &img_path,
                    format!("unexpected pixel format {:?}", other.color()),
                ))
            }
        };
        let gt_path = dir.join("gt").join(format!("{}.png", name(i)));
        let gt = match open_png(&gt_path)? {
            image::DynamicImage::ImageLuma8(g) if (g.height() as usize, g.width() as usize) == (h, w) => g,
            _ => return Err(Error::load(&gt_path, "expected a single-channel mask of the image size")),
        };
        let gt_vals = gt
            .into_raw()
            .into_iter()
            .map(|b| match b {
                255 => Ok(1.0),
                128 => Ok(0.0),
                0 => Ok(-1.0),
                other => Err(Error::load(&gt_path, format!("mask value {other} is not 0, 128 or 255"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let file: SampleFile = read_json(&dir.join("meta").join(format!("{}.json", name(i))))?;
        samples.push(LabSample {
            image: Tensor::new(vec![c, h, w], data)?,
            label: file.label,
            gt_signed: Tensor::new(vec![h, w], gt_vals)?,
            meta: file.meta,
        });
    }
    Ok((manifest, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_multi_color, gen_single_color};
    use crate::netforge::{MultiColorConfig, SingleColorConfig};

    #[test]
    fn round_trips() {
        let single = SingleColorConfig::with_size(32, 32);
        let multi = MultiColorConfig {
            height: 32,
            width: 32,
            ..Default::default()
        };
        for env in [Environment::SingleColor(single.clone()), Environment::MultiColor(multi.clone())] {
            let samples = match &env {
                Environment::SingleColor(c) => gen_single_color(c, 3, 5).unwrap(),
                Environment::MultiColor(c) => gen_multi_color(c, 3, 5).unwrap(),
            };
            let dir = tempfile::tempdir().unwrap();
            export_dataset(&samples, &env, 5, dir.path()).unwrap();
            let (m, back) = import_dataset(dir.path()).unwrap();
            assert_eq!(m.environment, env);
            assert_eq!(back, samples);
        }
    }

    #[test]
    fn white_gt_reads_255() {
        let cfg = SingleColorConfig::with_size(32, 32);
        let s = gen_single_color(&cfg, 1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_dataset(&s, &Environment::SingleColor(cfg), 2, dir.path()).unwrap();
        let g = image::open(dir.path().join("gt/0000.png")).unwrap().to_luma8();
        let p = s[0].gt_signed.data().iter().position(|&v| v == 1.0).unwrap();
        assert_eq!(g.as_raw()[p], 255);
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = import_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("dataset.json"), "{err}");
    }
}
