use crate::tensor::Tensor;

/// Normalized 1-D Gaussian taps truncated at 4σ (at least one tap each side).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (4.0 * sigma).ceil().max(1.0) as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur of every plane of a C×H×W (or H×W) tensor, with
/// symmetric reflection at the borders.
pub fn gaussian_blur(x: &Tensor, sigma: f64) -> Tensor {
    let k = gaussian_kernel(sigma);
    if k.len() == 1 {
        return x.clone();
    }
    let r = (k.len() / 2) as i64;
    let shape = x.shape();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let plane = h * w;
    let mut out = x.clone();
    let mut tmp = vec![0.0; plane];
    for p in out.data_mut().chunks_mut(plane) {
        for y in 0..h {
            for xx in 0..w {
                tmp[y * w + xx] = (-r..=r)
                    .map(|d| k[(d + r) as usize] * p[y * w + reflect(xx as i64 + d, w)])
                    .sum();
            }
        }
        for y in 0..h {
            for xx in 0..w {
                p[y * w + xx] = (-r..=r)
                    .map(|d| k[(d + r) as usize] * tmp[reflect(y as i64 + d, h) * w + xx])
                    .sum();
            }
        }
    }
    out
}

/// Index into `0..n` mirrored at the edges (`-1 → 0`, `n → n-1`).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Bilinear resize of an h×w map with half-pixel centers.
pub fn upsample_bilinear(map: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let src = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        let (y0, y1, fy) = src(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, fx) = src(x, w, out_w);
            let top = map.at2(y0, x0) * (1.0 - fx) + map.at2(y0, x1) * fx;
            let bot = map.at2(y1, x0) * (1.0 - fx) + map.at2(y1, x1) * fx;
            out[y * out_w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    Tensor::new(vec![out_h, out_w], out).expect("resize shape")
}
