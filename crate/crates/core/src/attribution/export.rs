use std::fs;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{AttributionMap, Target};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub method: String,
    pub fingerprint: String,
    pub target: Target,
    pub shape: Vec<usize>,
    pub sample: usize,
}

/// Writes `<stem>.f64` (little-endian values, row-major) and `<stem>.json`.
pub fn save_map(map: &AttributionMap, sample: usize, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(map.values.len() * 8);
    for v in map.values.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(format!("{stem}.f64")), bytes)?;
    let side = MapSidecar {
        method: map.method.clone(),
        fingerprint: map.fingerprint.clone(),
        target: map.target,
        shape: map.values.shape().to_vec(),
        sample,
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&side)?)?;
    Ok(())
}

pub fn load_map(dir: &Path, stem: &str) -> Result<(AttributionMap, MapSidecar)> {
    let jpath = dir.join(format!("{stem}.json"));
    let raw = fs::read(&jpath).map_err(|e| Error::load(&jpath, e))?;
    let side: MapSidecar = serde_json::from_slice(&raw).map_err(|e| Error::load(&jpath, e))?;
    let bpath = dir.join(format!("{stem}.f64"));
    let bytes = fs::read(&bpath).map_err(|e| Error::load(&bpath, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::load(&bpath, "length is not a multiple of 8 bytes"));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Tensor::new(side.shape.clone(), data).map_err(|e| Error::load(&bpath, e))?;
    Ok((
        AttributionMap {
            values,
            method: side.method.clone(),
            fingerprint: side.fingerprint.clone(),
            target: side.target,
        },
        side,
    ))
}

/// Diverging rendering: values are divided by the largest magnitude, then
/// v > 0 fades white→red as (255, 255(1-v), 255(1-v)) and v < 0 fades
/// white→blue as (255(1+v), 255(1+v), 255).
pub fn render_png(map: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let peak = map.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut raw = Vec::with_capacity(h * w * 3);
    for &v in map.data() {
        let v = if peak > 0.0 { v / peak } else { 0.0 };
        let fade = |t: f64| (255.0 * (1.0 - t.abs())).round() as u8;
        raw.extend_from_slice(&if v >= 0.0 {
            [255, fade(v), fade(v)]
        } else {
            [fade(v), fade(v), 255]
        });
    }
    RgbImage::from_raw(w as u32, h as u32, raw)
        .expect("buffer size")
        .save(path)
        .map_err(|e| Error::load(path, e))
}
