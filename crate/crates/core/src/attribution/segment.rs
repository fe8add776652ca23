use serde::{Deserialize, Serialize};

use super::filters::gaussian_blur;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentationSpec {
    /// Square cells of `cell` pixels (smaller at the right and bottom edges).
    Grid { cell: usize },
    /// Graph-based merging on intensities scaled to [0, 1].
    Felzenszwalb { scale: f64, sigma: f64, min_size: usize },
}

impl SegmentationSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SegmentationSpec::Grid { cell } if cell == 0 => {
                Err(Error::Config("grid cell size must be positive".into()))
            }
            SegmentationSpec::Felzenszwalb { scale, sigma, .. } if !(scale > 0.0) || sigma < 0.0 => Err(
                Error::Config("felzenszwalb needs a positive scale and a non-negative sigma".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Superpixel ids per pixel, contiguous from 0 in row-major order of first
/// appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub labels: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub count: usize,
    pub spec: SegmentationSpec,
}

impl Segmentation {
    fn from_raw(raw: &[usize], height: usize, width: usize, spec: SegmentationSpec) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|&r| {
                let n = map.len();
                *map.entry(r).or_insert(n)
            })
            .collect();
        Segmentation {
            count: map.len(),
            labels,
            height,
            width,
            spec,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.height, self.width],
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("label map shape")
    }

    /// Pixel count per segment.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

pub fn segment(image: &Tensor, spec: &SegmentationSpec) -> Result<Segmentation> {
    spec.validate()?;
    Ok(match *spec {
        SegmentationSpec::Grid { cell } => segment_grid(image, cell),
        SegmentationSpec::Felzenszwalb { scale, sigma, min_size } => {
            segment_felzenszwalb(image, scale, sigma, min_size)
        }
    })
}

pub fn segment_grid(image: &Tensor, cell: usize) -> Segmentation {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let cols = w.div_ceil(cell);
    let raw: Vec<usize> = (0..h * w).map(|p| (p / w / cell) * cols + (p % w) / cell).collect();
    Segmentation::from_raw(&raw, h, w, SegmentationSpec::Grid { cell })
}

struct Forest {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Largest edge weight inside each component's spanning tree.
    internal: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn join(&mut self, a: usize, b: usize, w: f64) {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = w.max(self.internal[big]).max(self.internal[small]);
    }
}

pub fn segment_felzenszwalb(image: &Tensor, scale: f64, sigma: f64, min_size: usize) -> Segmentation {
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let plane = h * w;
    let smooth = gaussian_blur(&image.map(|v| v / 255.0), sigma);
    let d = smooth.data();
    let dist = |a: usize, b: usize| -> f64 {
        (0..c)
            .map(|ch| {
                let t = d[ch * plane + a] - d[ch * plane + b];
                t * t
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut edges = Vec::with_capacity(plane * 4);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                edges.push((dist(p, p + 1), p, p + 1));
            }
            if y + 1 < h {
                edges.push((dist(p, p + w), p, p + w));
                if x + 1 < w {
                    edges.push((dist(p, p + w + 1), p, p + w + 1));
                }
                if x > 0 {
                    edges.push((dist(p, p + w - 1), p, p + w - 1));
                }
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut f = Forest::new(plane);
    for &(wt, a, b) in &edges {
        let (ra, rb) = (f.find(a), f.find(b));
        if ra == rb {
            continue;
        }
        let ta = f.internal[ra] + scale / f.size[ra] as f64;
        let tb = f.internal[rb] + scale / f.size[rb] as f64;
        if wt <= ta.min(tb) {
            f.join(ra, rb, wt);
        }
    }
    for &(wt, a, b) in &edges {
        let (ra, rb) = (f.find(a), f.find(b));
        if ra != rb && (f.size[ra] < min_size || f.size[rb] < min_size) {
            f.join(ra, rb, wt);
        }
    }
    let raw: Vec<usize> = (0..plane).map(|p| f.find(p)).collect();
    Segmentation::from_raw(
        &raw,
        h,
        w,
        SegmentationSpec::Felzenszwalb {
            scale,
            sigma,
            min_size,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cells() {
        let s = segment_grid(&Tensor::zeros(&[3, 64, 64]), 8);
        assert_eq!(s.count, 64);
        assert!(s.sizes().iter().all(|&n| n == 64));
        let s = segment_grid(&Tensor::zeros(&[1, 10, 10]), 4);
        assert_eq!(s.count, 9);
        assert_eq!(s.labels.len(), 100);
    }

    #[test]
    fn two_tone_image_gives_two_segments() {
        let mut img = Tensor::zeros(&[3, 32, 32]);
        for c in 0..3 {
            for y in 0..32 {
                for x in 16..32 {
                    img.data_mut()[(c * 32 + y) * 32 + x] = 200.0;
                }
            }
        }
        let s = segment_felzenszwalb(&img, 10.0, 0.5, 50);
        assert_eq!(s.count, 2);
        assert_ne!(s.labels[0], s.labels[31]);
        assert_eq!(s.labels[0], s.labels[32 * 31 + 15]);
    }

    #[test]
    fn labels_are_contiguous() {
        let mut img = Tensor::zeros(&[1, 20, 20]);
        let mut rng = crate::rng::stream_rng(1, 1);
        for v in img.data_mut() {
            *v = rand::Rng::random_range(&mut rng, 0.0..255.0);
        }
        let s = segment_felzenszwalb(&img, 50.0, 0.5, 5);
        let mut seen = vec![false; s.count];
        for &l in &s.labels {
            seen[l] = true;
        }
        assert!(seen.iter().all(|&b| b));
        assert!(s.sizes().iter().all(|&n| n >= 5));
    }
}
