use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::stats::pearson;
use crate::attribution::BaselineSpec;
use crate::datagen::LabSample;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::{NetGraph, Tensor};

/// Consecutive model outputs closer than this count as unchanged.
const OUTPUT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    Insertion,
    Deletion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMode {
    Standard,
    Adapted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Trapezoid area divided by the x span.
    pub auc: f64,
    /// Grid points whose value was defined by convention (zero-variance correlation).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<usize>,
}

impl CurveResult {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let auc = normalized_auc(&x, &y);
        CurveResult {
            x,
            y,
            auc,
            degenerate: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for (x, y) in self.x.iter().zip(&self.y) {
            s.push_str(&format!("{x},{y}\n"));
        }
        s
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

fn normalized_auc(x: &[f64], y: &[f64]) -> f64 {
    match (x.first(), x.last()) {
        (Some(a), Some(b)) if b > a => trapezoid(x, y) / (b - a),
        _ => y.first().copied().unwrap_or(0.0),
    }
}

/// Pixel indices by descending attribution; ties go to the lower row-major index.
pub fn pixel_order(map: &Tensor) -> Vec<usize> {
    let v = map.data();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

fn set_pixel(img: &mut Tensor, p: usize, values: &[f64]) {
    let plane = img.shape()[1] * img.shape()[2];
    let d = img.data_mut();
    for (c, v) in values.iter().enumerate() {
        d[c * plane + p] = *v;
    }
}

fn copy_pixel(dst: &mut Tensor, src: &Tensor, p: usize) {
    let plane = src.shape()[1] * src.shape()[2];
    let c = src.shape()[0];
    let s = src.data();
    let d = dst.data_mut();
    for ch in 0..c {
        d[ch * plane + p] = s[ch * plane + p];
    }
}

fn check_map(map: &Tensor, sample: &LabSample) -> Result<()> {
    if map.shape() != [sample.height(), sample.width()] {
        return Err(Error::Shape(format!(
            "map {:?} does not match a {}×{} image",
            map.shape(),
            sample.height(),
            sample.width()
        )));
    }
    Ok(())
}

fn class_output(net: &NetGraph, x: &Tensor, class: usize) -> Result<f64> {
    let y = net.eval(x)?;
    y.data()
        .get(class)
        .copied()
        .ok_or_else(|| Error::Shape(format!("class {class} outside output of size {}", y.len())))
}

/// Insertion or deletion curve in steps of `fraction` of the pixels, reading
/// the post-softmax probability of `class`.
pub fn insertion_deletion(
    net: &NetGraph,
    sample: &LabSample,
    map: &Tensor,
    class: usize,
    mode: CurveMode,
    replacement: &BaselineSpec,
    fraction: f64,
) -> Result<CurveResult> {
    check_map(map, sample)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let x = &sample.image;
    let px = replacement.pixel(sample.channels())?;
    let order = pixel_order(map);
    let n = order.len();
    let steps = (1.0 / fraction).ceil() as usize;
    let mut img = match mode {
        CurveMode::Insertion => replacement.fill(x)?,
        CurveMode::Deletion => x.clone(),
    };
    let (mut xs, mut ys) = (Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1));
    let mut done = 0;
    for k in 0..=steps {
        let upto = ((k as f64 * fraction * n as f64).round() as usize).min(n);
        let upto = if k == steps { n } else { upto };
        for &p in &order[done..upto] {
            match mode {
                CurveMode::Insertion => copy_pixel(&mut img, x, p),
                CurveMode::Deletion => set_pixel(&mut img, p, &px),
            }
        }
        done = upto.max(done);
        let f = done as f64 / n as f64;
        if xs.last().is_some_and(|&l| l >= f) {
            continue;
        }
        xs.push(f);
        ys.push(class_output(net, &img, class)?);
    }
    Ok(CurveResult::new(xs, ys))
}

/// One-pixel-at-a-time curve for counting networks: a step is correct when
/// the model output differs from the previous step. The curve is the count of
/// correct steps over the number of ground-truth pixels (deletion reports the
/// remaining fraction), sampled at every pixel until the ground truth is
/// exhausted and then held flat.
pub fn adapted_insertion_deletion(net: &NetGraph, sample: &LabSample, map: &Tensor, mode: CurveMode) -> Result<CurveResult> {
    check_map(map, sample)?;
    let x = &sample.image;
    let zero = vec![0.0; sample.channels()];
    let order = pixel_order(map);
    let n = order.len();
    let gt: Vec<bool> = sample.gt_signed.data().iter().map(|&g| g != 0.0).collect();
    let total = gt.iter().filter(|&&g| g).count();
    let mut img = match mode {
        CurveMode::Insertion => Tensor::zeros(x.shape()),
        CurveMode::Deletion => x.clone(),
    };
    let value = |c: usize| {
        let f = if total == 0 { 0.0 } else { c as f64 / total as f64 };
        match mode {
            CurveMode::Insertion => f,
            CurveMode::Deletion => 1.0 - f,
        }
    };
    let mut prev = net.eval(&img)?.data()[0];
    let (mut xs, mut ys) = (vec![0.0], vec![value(0)]);
    let (mut correct, mut seen) = (0, 0);
    for (k, &p) in order.iter().enumerate() {
        if seen == total {
            break;
        }
        match mode {
            CurveMode::Insertion => copy_pixel(&mut img, x, p),
            CurveMode::Deletion => set_pixel(&mut img, p, &zero),
        }
        let out = net.eval(&img)?.data()[0];
        if (out - prev).abs() > OUTPUT_TOL {
            correct += 1;
        }
        prev = out;
        seen += gt[p] as usize;
        xs.push((k + 1) as f64 / n as f64);
        ys.push(value(correct));
    }
    if *xs.last().unwrap() < 1.0 {
        let last = *ys.last().unwrap();
        xs.push(1.0);
        ys.push(last);
    }
    Ok(CurveResult::new(xs, ys))
}

/// Powers of two below half the pixel count.
pub fn default_n_grid(pixels: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |n| Some(n * 2))
        .take_while(|&n| n <= pixels / 2)
        .collect()
}

/// Perturbation sets and model responses for Sensitivity-N. They depend only
/// on the sample, so one plan serves every attribution map.
#[derive(Clone, Debug)]
pub struct SensitivityPlan {
    pub mode: SensitivityMode,
    pub grid: Vec<usize>,
    /// `sets[g][r]`: perturbed pixels for grid point `g`, repeat `r`.
    sets: Vec<Vec<Vec<usize>>>,
    /// Output drop (standard) or cumulative correct steps (adapted).
    responses: Vec<Vec<f64>>,
    pixels: usize,
}

fn check_plan_args(grid: &[usize], repeats: usize, pixels: usize) -> Result<()> {
    if repeats < 2 {
        return Err(Error::Config(format!("repeats must be at least 2, got {repeats}")));
    }
    if grid.is_empty() || grid.iter().any(|&n| n == 0 || n > pixels) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "n grid must be strictly increasing within 1..={pixels}, got {grid:?}"
        )));
    }
    Ok(())
}

impl SensitivityPlan {
    /// Random pixel subsets of each size set to `replacement`; the response is
    /// the drop in the post-softmax probability of `class`.
    pub fn standard(
        net: &NetGraph,
        sample: &LabSample,
        class: usize,
        replacement: &BaselineSpec,
        grid: &[usize],
        repeats: usize,
        seed: u64,
    ) -> Result<Self> {
        let pixels = sample.height() * sample.width();
        check_plan_args(grid, repeats, pixels)?;
        let px = replacement.pixel(sample.channels())?;
        let base = class_output(net, &sample.image, class)?;
        let mut rng = stream_rng(seed, sample.meta.index as u64);
        let mut sets = Vec::with_capacity(grid.len());
        let mut responses = Vec::with_capacity(grid.len());
        for &n in grid {
            let mut gs = Vec::with_capacity(repeats);
            let mut gr = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let set = index::sample(&mut rng, pixels, n).into_vec();
                let mut img = sample.image.clone();
                for &p in &set {
                    set_pixel(&mut img, p, &px);
                }
                gr.push(base - class_output(net, &img, class)?);
                gs.push(set);
            }
            sets.push(gs);
            responses.push(gr);
        }
        Ok(SensitivityPlan {
            mode: SensitivityMode::Standard,
            grid: grid.to_vec(),
            sets,
            responses,
            pixels,
        })
    }

    /// Each repeat grows one random pixel order, zeroing one additional pixel
    /// per step; the response at N is the number of the first N steps that
    /// changed the model output.
    pub fn adapted(net: &NetGraph, sample: &LabSample, grid: &[usize], repeats: usize, seed: u64) -> Result<Self> {
        let pixels = sample.height() * sample.width();
        check_plan_args(grid, repeats, pixels)?;
        let zero = vec![0.0; sample.channels()];
        let max_n = *grid.last().unwrap();
        let mut rng = stream_rng(seed, sample.meta.index as u64);
        let mut sets = vec![Vec::with_capacity(repeats); grid.len()];
        let mut responses = vec![Vec::with_capacity(repeats); grid.len()];
        for _ in 0..repeats {
            let mut perm: Vec<usize> = (0..pixels).collect();
            perm.shuffle(&mut rng);
            perm.truncate(max_n);
            let mut img = sample.image.clone();
            let mut prev = net.eval(&img)?.data()[0];
            let mut correct = 0usize;
            let mut g = 0;
            for (k, &p) in perm.iter().enumerate() {
                set_pixel(&mut img, p, &zero);
                let out = net.eval(&img)?.data()[0];
                if (out - prev).abs() > OUTPUT_TOL {
                    correct += 1;
                }
                prev = out;
                if k + 1 == grid[g] {
                    sets[g].push(perm[..=k].to_vec());
                    responses[g].push(correct as f64);
                    g += 1;
                }
            }
        }
        Ok(SensitivityPlan {
            mode: SensitivityMode::Adapted,
            grid: grid.to_vec(),
            sets,
            responses,
            pixels,
        })
    }

    pub fn repeats(&self) -> usize {
        self.responses.first().map_or(0, Vec::len)
    }

    /// Pearson correlation per grid point between summed attribution of the
    /// perturbed pixels and the response.
    pub fn curve(&self, map: &Tensor) -> Result<CurveResult> {
        if map.len() != self.pixels {
            return Err(Error::Shape(format!(
                "map has {} values, plan covers {} pixels",
                map.len(),
                self.pixels
            )));
        }
        let a = map.data();
        let mut ys = Vec::with_capacity(self.grid.len());
        let mut degenerate = Vec::new();
        for (g, (sets, resp)) in self.sets.iter().zip(&self.responses).enumerate() {
            let sums: Vec<f64> = sets.iter().map(|s| s.iter().map(|&p| a[p]).sum()).collect();
            let (r, flat) = pearson(&sums, resp)?;
            if flat {
                degenerate.push(g);
            }
            ys.push(r);
        }
        let xs = self.grid.iter().map(|&n| n as f64).collect();
        Ok(CurveResult {
            degenerate,
            ..CurveResult::new(xs, ys)
        })
    }
}

/// Builds a plan and evaluates one map.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_n(
    net: &NetGraph,
    sample: &LabSample,
    map: &Tensor,
    class: usize,
    replacement: &BaselineSpec,
    mode: SensitivityMode,
    repeats: usize,
    grid: &[usize],
    seed: u64,
) -> Result<CurveResult> {
    check_map(map, sample)?;
    let plan = match mode {
        SensitivityMode::Standard => SensitivityPlan::standard(net, sample, class, replacement, grid, repeats, seed)?,
        SensitivityMode::Adapted => SensitivityPlan::adapted(net, sample, grid, repeats, seed)?,
    };
    plan.curve(map)
}
