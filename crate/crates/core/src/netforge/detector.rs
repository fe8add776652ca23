use rand::Rng;

use super::gates::pointwise_stack;
use super::{MultiColorConfig, Rgb};
use crate::error::{Error, Result};
use crate::tensor::{Conv2d, Layer, Linear, Tensor};

fn lin(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Layer {
    Layer::Linear(Linear::from_rows(&rows, bias).expect("detector weights are rectangular"))
}

/// 1×1 convolution stack mapping 3×H×W to (targets + redundant)×H×W.
pub(crate) fn detector_layers(cfg: &MultiColorConfig) -> Vec<Layer> {
    let mut colors: Vec<Rgb> = cfg.target_colors.clone();
    colors.push(cfg.background);
    let nc = cfg.target_colors.len();
    let ncol = colors.len();
    let width = |n: usize| vec![0.0; n];

    // per color and channel: x-(v-1), x-v, x-(v+1)
    let mut rows = Vec::with_capacity(ncol * 9);
    let mut bias = Vec::with_capacity(ncol * 9);
    for color in &colors {
        for (ch, &v) in color.iter().enumerate() {
            for shift in [v as f64 - 1.0, v as f64, v as f64 + 1.0] {
                let mut r = width(3);
                r[ch] = 1.0;
                rows.push(r);
                bias.push(-shift);
            }
        }
    }
    let l1 = lin(rows, bias);

    // [x > v-1] and [x > v]
    let mut rows = Vec::with_capacity(ncol * 6);
    for unit in 0..ncol * 3 {
        let b = unit * 3;
        for off in 0..2 {
            let mut r = width(ncol * 9);
            r[b + off] = 1.0;
            r[b + off + 1] = -1.0;
            rows.push(r);
        }
    }
    let l2 = lin(rows, vec![0.0; ncol * 6]);

    // [x == v]
    let rows = (0..ncol * 3)
        .map(|unit| {
            let mut r = width(ncol * 6);
            r[unit * 2] = 1.0;
            r[unit * 2 + 1] = -1.0;
            r
        })
        .collect();
    let l3 = lin(rows, vec![0.0; ncol * 3]);

    // all three channels match
    let rows = (0..ncol)
        .map(|c| {
            let mut r = width(ncol * 3);
            r[c * 3..c * 3 + 3].fill(1.0);
            r
        })
        .collect();
    let l4 = lin(rows, vec![-2.0; ncol]);

    // targets pass through; redundant channels fire on any other color
    let mut rows = Vec::with_capacity(nc + cfg.redundant_channels);
    let mut bias = Vec::with_capacity(nc + cfg.redundant_channels);
    for c in 0..nc {
        let mut r = width(ncol);
        r[c] = 1.0;
        rows.push(r);
        bias.push(0.0);
    }
    for _ in 0..cfg.redundant_channels {
        rows.push(vec![-1.0; ncol]);
        bias.push(1.0);
    }
    let l5 = lin(rows, bias);

    pointwise_stack(vec![
        l1,
        Layer::Relu,
        l2,
        Layer::Relu,
        l3,
        Layer::Relu,
        l4,
        Layer::Relu,
        l5,
        Layer::Relu,
    ])
}

/// Random wiring from redundant channel r to target channel i, before
/// scaling. Draws are repeated until some target channel receives a net
/// positive push of at least 0.1, so an unseen color always has a way to
/// raise a logit.
pub(crate) fn redundant_wiring(cfg: &MultiColorConfig, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    let (nc, nr) = (cfg.classes(), cfg.redundant_channels);
    if nr == 0 {
        return Ok(vec![]);
    }
    for attempt in 0..64 {
        let w: Vec<Vec<f64>> = (0..nr)
            .map(|_| (0..nc).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        let best = (0..nc)
            .map(|i| w.iter().map(|row| row[i]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        if best >= 0.1 {
            return Ok(w);
        }
        log::info!("redundant wiring draw {attempt} pushes no logit up, resampling");
    }
    Err(Error::Config("could not draw redundant wiring for this seed".into()))
}

/// 1×1 convolution from detector channels to target channels.
pub(crate) fn mixer_layer(cfg: &MultiColorConfig, wiring: &[Vec<f64>]) -> Layer {
    let (nc, nr) = (cfg.classes(), cfg.redundant_channels);
    let cin = nc + nr;
    let mut w = vec![0.0; nc * cin];
    for i in 0..nc {
        w[i * cin + i] = 1.0;
        for (r, row) in wiring.iter().enumerate() {
            w[i * cin + nc + r] = cfg.redundant_scale * row[i];
        }
    }
    let weight = Tensor::new(vec![nc, cin, 1, 1], w).expect("mixer shape");
    Layer::Conv2d(Conv2d::new(weight, Tensor::zeros(&[nc]), (1, 1)).expect("mixer conv"))
}
