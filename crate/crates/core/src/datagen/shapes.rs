use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    BezierBlob,
    Triangle,
    Square,
    Circle,
}

/// Outline of one patch. `vertices` is empty for circles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub shape: ShapeKind,
    /// (row, column) of the center.
    pub center: [f64; 2],
    pub radius: f64,
    pub color_index: usize,
    /// Polygon outline as (row, column) points.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertices: Vec<[f64; 2]>,
}

impl PatchSpec {
    /// Draws an outline that stays within `radius` of `center`.
    pub fn sample(shape: ShapeKind, center: [f64; 2], radius: f64, color_index: usize, rng: &mut impl Rng) -> Self {
        let vertices = match shape {
            ShapeKind::Circle => vec![],
            ShapeKind::Triangle => regular_polygon(center, radius, 3, rng.random_range(0.0..TAU)),
            ShapeKind::Square => regular_polygon(center, radius, 4, rng.random_range(0.0..TAU)),
            ShapeKind::BezierBlob => bezier_outline(center, radius, rng),
        };
        PatchSpec {
            shape,
            center,
            radius,
            color_index,
            vertices,
        }
    }

    pub fn contains(&self, row: f64, col: f64) -> bool {
        match self.shape {
            ShapeKind::Circle => {
                let (dy, dx) = (row - self.center[0], col - self.center[1]);
                dy * dy + dx * dx <= self.radius * self.radius
            }
            _ => point_in_polygon(&self.vertices, row, col),
        }
    }

    /// Row-major flags of covered pixels; pixel (y, x) is sampled at its center.
    pub fn rasterize(&self, height: usize, width: usize) -> Vec<bool> {
        let mut out = vec![false; height * width];
        let (r0, r1) = span(self.center[0], self.radius, height);
        let (c0, c1) = span(self.center[1], self.radius, width);
        for y in r0..r1 {
            for x in c0..c1 {
                out[y * width + x] = self.contains(y as f64 + 0.5, x as f64 + 0.5);
            }
        }
        out
    }
}

fn span(c: f64, r: f64, len: usize) -> (usize, usize) {
    let lo = (c - r - 1.0).floor().max(0.0) as usize;
    let hi = ((c + r + 1.0).ceil().max(0.0) as usize).min(len);
    (lo.min(len), hi)
}

fn regular_polygon(center: [f64; 2], radius: f64, n: usize, phase: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let a = phase + TAU * k as f64 / n as f64;
            [center[0] + radius * a.sin(), center[1] + radius * a.cos()]
        })
        .collect()
}

/// Six control points on a jittered circle joined by quadratic Bézier
/// segments that start and end at midpoints between neighbors.
fn bezier_outline(center: [f64; 2], radius: f64, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    const CONTROL: usize = 6;
    const PER_SEGMENT: usize = 16;
    let step = TAU / CONTROL as f64;
    let phase = rng.random_range(0.0..TAU);
    let ctrl: Vec<[f64; 2]> = (0..CONTROL)
        .map(|k| {
            let a = phase + step * k as f64 + rng.random_range(-0.25..0.25) * step;
            let r = radius * rng.random_range(0.6..1.0);
            [center[0] + r * a.sin(), center[1] + r * a.cos()]
        })
        .collect();
    let mid = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let mut out = Vec::with_capacity(CONTROL * PER_SEGMENT);
    for k in 0..CONTROL {
        let prev = ctrl[(k + CONTROL - 1) % CONTROL];
        let p = ctrl[k];
        let next = ctrl[(k + 1) % CONTROL];
        let (s, e) = (mid(prev, p), mid(p, next));
        for i in 0..PER_SEGMENT {
            let t = i as f64 / PER_SEGMENT as f64;
            let u = 1.0 - t;
            out.push([
                u * u * s[0] + 2.0 * u * t * p[0] + t * t * e[0],
                u * u * s[1] + 2.0 * u * t * p[1] + t * t * e[1],
            ]);
        }
    }
    out
}

/// Even-odd rule.
fn point_in_polygon(poly: &[[f64; 2]], row: f64, col: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let [ya, xa] = poly[i];
        let [yb, xb] = poly[(i + 1) % n];
        if (ya > row) != (yb > row) {
            let x = xa + (row - ya) * (xb - xa) / (yb - ya);
            if col < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn shapes_stay_inside_radius() {
        let mut rng = stream_rng(1, 0);
        for shape in [ShapeKind::BezierBlob, ShapeKind::Triangle, ShapeKind::Square, ShapeKind::Circle] {
            let p = PatchSpec::sample(shape, [20.0, 20.0], 8.0, 0, &mut rng);
            let mask = p.rasterize(40, 40);
            let mut n = 0;
            for y in 0..40 {
                for x in 0..40 {
                    if mask[y * 40 + x] {
                        n += 1;
                        let (dy, dx) = (y as f64 + 0.5 - 20.0, x as f64 + 0.5 - 20.0);
                        assert!((dy * dy + dx * dx).sqrt() <= 8.0 + 1e-9, "{shape:?}");
                    }
                }
            }
            assert!(n > 20, "{shape:?} covers only {n} pixels");
        }
    }

    #[test]
    fn square_area_close_to_geometry() {
        let mut rng = stream_rng(2, 0);
        let p = PatchSpec::sample(ShapeKind::Square, [32.0, 32.0], 10.0, 0, &mut rng);
        let n = p.rasterize(64, 64).iter().filter(|&&b| b).count() as f64;
        // side r·√2, area 2r²
        assert!((n - 200.0).abs() < 20.0, "{n}");
    }
}
