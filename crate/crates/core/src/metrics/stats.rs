use crate::error::{Error, Result};

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Shape("correlation needs at least two entries".into()));
    }
    Ok(())
}

/// Pearson correlation. A zero-variance input gives `(0.0, true)`.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<(f64, bool)> {
    check_len(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // relative check so rounding noise around a constant vector reads as flat
    let flat = |s: f64, v: &[f64], m: f64| s <= 1e-24 * n * (m * m + v.iter().map(|x| x * x).sum::<f64>() / n).max(1e-300);
    if flat(saa, a, ma) || flat(sbb, b, mb) {
        return Ok((0.0, true));
    }
    Ok(((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0), false))
}

/// 1-based ranks in ascending order; tied values share their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson on average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(pearson(&average_ranks(a), &average_ranks(b))?.0)
}
