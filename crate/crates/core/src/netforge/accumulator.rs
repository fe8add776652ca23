use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AccumulatorMode, Stack};
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::tensor::{Conv2d, Layer, NetGraph, Tensor};

const MAX_KERNEL: usize = 7;
const MAX_RESAMPLES: usize = 32;

/// Kernel sizes that tile `dim` exactly: its prime factors in ascending
/// order. Primes above 7 cannot be tiled.
pub fn kernel_schedule(dim: usize, axis: &str) -> Result<Vec<usize>> {
    if dim == 0 {
        return Err(Error::Config(format!("{axis} must be positive")));
    }
    let mut out = Vec::new();
    let mut rest = dim;
    let mut p = 2;
    while rest > 1 {
        if rest % p == 0 {
            if p > MAX_KERNEL {
                return Err(Error::Config(format!(
                    "accumulator stage {} cannot tile {axis} = {dim}: factor {p} exceeds the largest kernel {MAX_KERNEL}",
                    out.len()
                )));
            }
            out.push(p);
            rest /= p;
        } else {
            p += 1;
        }
    }
    Ok(out)
}

/// Paired (height, width) kernels per stage; the shorter axis is padded with 1.
pub fn stage_kernels(height: usize, width: usize) -> Result<Vec<(usize, usize)>> {
    let hs = kernel_schedule(height, "height")?;
    let ws = kernel_schedule(width, "width")?;
    let n = hs.len().max(ws.len());
    Ok((0..n)
        .map(|s| (hs.get(s).copied().unwrap_or(1), ws.get(s).copied().unwrap_or(1)))
        .collect())
}

/// Least-norm `m` with `Σ_i w[i][j] m_i = 1` for every kernel position `j`.
/// `w` is K × P row-major. `None` if the normal equations are singular.
pub fn mixing_weights(w: &[f64], k: usize, p: usize) -> Option<Vec<f64>> {
    // G = WᵀW is P × P; m = W G⁻¹ 1
    let mut g = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            g[a * p + b] = (0..k).map(|i| w[i * p + a] * w[i * p + b]).sum();
        }
    }
    let y = solve_spd(&g, p, &vec![1.0; p])?;
    Some((0..k).map(|i| (0..p).map(|j| w[i * p + j] * y[j]).sum()).collect())
}

/// Layers reducing a C×H×W map to C×1×1 per-channel sums.
pub(crate) fn accumulator_layers(
    mode: AccumulatorMode,
    channels: usize,
    height: usize,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Layer>> {
    let mut layers = Vec::new();
    for (stage, (kh, kw)) in stage_kernels(height, width)?.into_iter().enumerate() {
        match mode {
            AccumulatorMode::Uniform => {
                let mut w = vec![0.0; channels * channels * kh * kw];
                for c in 0..channels {
                    let base = (c * channels + c) * kh * kw;
                    w[base..base + kh * kw].fill(1.0);
                }
                layers.push(conv(w, [channels, channels, kh, kw], (kh, kw)));
                layers.push(Layer::Relu);
            }
            AccumulatorMode::NonUniform => {
                let p = kh * kw;
                let k = p + 1;
                let (kernels, mix) = (0..MAX_RESAMPLES)
                    .find_map(|attempt| {
                        let w: Vec<f64> = (0..k * p).map(|_| rng.random_range(0.5..1.5)).collect();
                        let m = mixing_weights(&w, k, p);
                        if m.is_none() {
                            log::info!("accumulator stage {stage}: kernel draw {attempt} is singular, resampling");
                        }
                        m.map(|m| (w, m))
                    })
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "accumulator stage {stage}: no non-singular kernel draw in {MAX_RESAMPLES} attempts"
                        ))
                    })?;
                let mut w = vec![0.0; channels * k * channels * p];
                for c in 0..channels {
                    for i in 0..k {
                        let base = ((c * k + i) * channels + c) * p;
                        w[base..base + p].copy_from_slice(&kernels[i * p..(i + 1) * p]);
                    }
                }
                layers.push(conv(w, [channels * k, channels, kh, kw], (kh, kw)));
                layers.push(Layer::Relu);
                let mut mw = vec![0.0; channels * channels * k];
                for c in 0..channels {
                    for i in 0..k {
                        mw[c * channels * k + c * k + i] = mix[i];
                    }
                }
                layers.push(conv(mw, [channels, channels * k, 1, 1], (1, 1)));
                layers.push(Layer::Relu);
            }
        }
    }
    Ok(layers)
}

fn conv(w: Vec<f64>, shape: [usize; 4], stride: (usize, usize)) -> Layer {
    let bias = Tensor::zeros(&[shape[0]]);
    let weight = Tensor::new(shape.to_vec(), w).expect("accumulator weight shape");
    Layer::Conv2d(Conv2d::new(weight, bias, stride).expect("accumulator conv"))
}

/// Standalone accumulator over a 1×H×W map.
pub fn build_accumulator(mode: AccumulatorMode, height: usize, width: usize, seed: u64) -> Result<NetGraph> {
    let mut rng = super::seeded(seed, 1);
    let mut s = Stack::default();
    s.push_segment("accumulator", accumulator_layers(mode, 1, height, width, &mut rng)?);
    s.finish(vec![1, height, width])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(kernel_schedule(64, "h").unwrap(), vec![2; 6]);
        assert_eq!(kernel_schedule(224, "h").unwrap(), vec![2, 2, 2, 2, 2, 7]);
        assert_eq!(kernel_schedule(6, "h").unwrap(), vec![2, 3]);
        let err = kernel_schedule(22, "height").unwrap_err().to_string();
        assert!(err.contains("stage 1") && err.contains("11"), "{err}");
        assert_eq!(stage_kernels(4, 2).unwrap(), vec![(2, 2), (2, 1)]);
    }

    #[test]
    fn uniform_six_by_six() {
        let net = build_accumulator(AccumulatorMode::Uniform, 6, 6, 0).unwrap();
        let y = net.eval(&Tensor::full(&[1, 6, 6], 1.0)).unwrap();
        assert_eq!(y.data(), &[36.0]);
        let y = net.eval(&Tensor::zeros(&[1, 6, 6])).unwrap();
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn mixing_constraint_holds() {
        let mut rng = crate::netforge::seeded(3, 0);
        let (k, p) = (5, 4);
        let w: Vec<f64> = (0..k * p).map(|_| rng.random_range(0.5..1.5)).collect();
        let m = mixing_weights(&w, k, p).unwrap();
        for j in 0..p {
            let s: f64 = (0..k).map(|i| w[i * p + j] * m[i]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
