//! Plain SVG charts: violins, line curves and rank tables.

use std::fmt::Write;

use glassbox::metrics::{CurveResult, RankTable};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" width=\"{w}\" height=\"{h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn text(s: &mut String, x: f64, y: f64, anchor: &str, body: &str) {
    let _ = writeln!(
        s,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\">{}</text>",
        escape(body)
    );
}

/// Gaussian kernel density on [0, 1] with Silverman's bandwidth.
fn density(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let bw = (1.06 * sd * n.powf(-0.2)).max(0.02);
    grid.iter()
        .map(|&g| values.iter().map(|v| (-0.5 * ((g - v) / bw).powi(2)).exp()).sum::<f64>() / (n * bw))
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

/// Mirrored density outlines of values in [0, 1], one per group.
pub fn violin(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let (left, top, ph, col) = (60.0, 40.0, 300.0, 90.0);
    let w = left + col * groups.len().max(1) as f64 + 20.0;
    let h = top + ph + 90.0;
    let mut s = open(w, h);
    text(&mut s, w / 2.0, 20.0, "middle", title);
    let y = |v: f64| top + ph * (1.0 - v);
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{0:.1}\" x2=\"{1:.1}\" y2=\"{0:.1}\" stroke=\"#ddd\"/>",
            y(v),
            w - 20.0
        );
        text(&mut s, left - 6.0, y(v) + 4.0, "end", &format!("{v:.1}"));
    }
    let _ = writeln!(
        s,
        "<text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        top + ph / 2.0,
        escape(y_label)
    );
    let grid: Vec<f64> = (0..=60).map(|i| i as f64 / 60.0).collect();
    for (i, (label, values)) in groups.iter().enumerate() {
        let cx = left + col * (i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        if !values.is_empty() {
            let d = density(values, &grid);
            let peak = d.iter().copied().fold(0.0, f64::max).max(1e-12);
            let half = |k: usize| 0.42 * col * d[k] / peak;
            let mut path = String::new();
            for (k, &g) in grid.iter().enumerate() {
                let _ = write!(path, "{}{:.1},{:.1} ", if k == 0 { "M" } else { "L" }, cx + half(k), y(g));
            }
            for (k, &g) in grid.iter().enumerate().rev() {
                let _ = write!(path, "L{:.1},{:.1} ", cx - half(k), y(g));
            }
            let _ = writeln!(
                s,
                "<path d=\"{}Z\" fill=\"{color}\" fill-opacity=\"0.45\" stroke=\"{color}\"/>",
                path
            );
            let m = y(median(values));
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{m:.1}\" x2=\"{:.1}\" y2=\"{m:.1}\" stroke=\"black\" stroke-width=\"2\"/>",
                cx - 0.2 * col,
                cx + 0.2 * col
            );
        }
        let _ = writeln!(
            s,
            "<text transform=\"translate({cx:.1} {:.1}) rotate(35)\">{}</text>",
            top + ph + 14.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart of several curves on shared axes.
pub fn curves(title: &str, x_label: &str, y_label: &str, series: &[(String, &CurveResult)]) -> String {
    let (left, top, pw, ph) = (60.0, 40.0, 420.0, 280.0);
    let legend = 190.0;
    let w = left + pw + legend;
    let h = top + ph + 50.0;
    let mut s = open(w, h);
    text(&mut s, (left + pw) / 2.0, 20.0, "middle", title);
    let pts = series.iter().flat_map(|(_, c)| c.x.iter().zip(&c.y));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (&x, &y) in pts {
        if x.is_finite() && y.is_finite() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    y0 = y0.min(0.0);
    y1 = y1.max(if y0 < 0.0 { 0.0 } else { 1.0 });
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| left + pw * (x - x0) / (x1 - x0);
    let py = |y: f64| top + ph * (1.0 - (y - y0) / (y1 - y0));
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
    );
    for t in 0..=4 {
        let fx = x0 + (x1 - x0) * t as f64 / 4.0;
        let fy = y0 + (y1 - y0) * t as f64 / 4.0;
        text(&mut s, px(fx), top + ph + 16.0, "middle", &format!("{fx:.3}"));
        text(&mut s, left - 6.0, py(fy) + 4.0, "end", &format!("{fy:.2}"));
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{0:.1}\" x2=\"{1:.1}\" y2=\"{0:.1}\" stroke=\"#eee\"/>",
            py(fy),
            left + pw
        );
    }
    text(&mut s, left + pw / 2.0, top + ph + 36.0, "middle", x_label);
    let _ = writeln!(
        s,
        "<text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, (label, c)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (k, (&x, &y)) in c.x.iter().zip(&c.y).filter(|(x, y)| x.is_finite() && y.is_finite()).enumerate() {
            let _ = write!(path, "{}{:.1},{:.1} ", if k == 0 { "M" } else { "L" }, px(x), py(y));
        }
        if !path.is_empty() {
            let _ = writeln!(
                s,
                "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                path.trim_end()
            );
        }
        let ly = top + 14.0 * i as f64 + 8.0;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 16.0
        );
        text(&mut s, lx + 20.0, ly + 4.0, "start", &format!("{label} ({:.3})", c.auc));
    }
    s.push_str("</svg>\n");
    s
}

/// Ranks per method and the Spearman correlation of each metric with the
/// ground-truth ranking.
pub fn rank_table(table: &RankTable) -> String {
    let metrics: Vec<&String> = table.metric_ranks.keys().collect();
    let (row_h, first, col) = (20.0, 170.0, 100.0);
    let w = first + col * (metrics.len() + 1) as f64 + 20.0;
    let h = 60.0 + row_h * (table.methods.len() + 2) as f64;
    let mut s = open(w, h);
    text(
        &mut s,
        w / 2.0,
        20.0,
        "middle",
        &format!("Method ranks (ground truth: {})", table.variant.name()),
    );
    let header_y = 44.0;
    text(&mut s, 10.0, header_y, "start", "method");
    text(&mut s, first + col / 2.0, header_y, "middle", "gt_f1");
    for (j, m) in metrics.iter().enumerate() {
        text(&mut s, first + col * (j as f64 + 1.5), header_y, "middle", m);
    }
    let _ = writeln!(
        s,
        "<line x1=\"6\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
        header_y + 6.0,
        w - 10.0
    );
    for (i, method) in table.methods.iter().enumerate() {
        let y = header_y + row_h * (i as f64 + 1.0);
        text(&mut s, 10.0, y, "start", method);
        text(&mut s, first + col / 2.0, y, "middle", &format!("{}", table.gt_ranks[i]));
        for (j, m) in metrics.iter().enumerate() {
            text(&mut s, first + col * (j as f64 + 1.5), y, "middle", &format!("{}", table.metric_ranks[*m][i]));
        }
    }
    let y = header_y + row_h * (table.methods.len() as f64 + 1.0);
    let _ = writeln!(
        s,
        "<line x1=\"6\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
        y - row_h + 6.0,
        w - 10.0
    );
    text(&mut s, 10.0, y, "start", "Spearman rho");
    for (j, m) in metrics.iter().enumerate() {
        text(&mut s, first + col * (j as f64 + 1.5), y, "middle", &format!("{:.3}", table.spearman[*m]));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn violin_handles_constant_groups() {
        let svg = violin("t", "f1", &[("flat".into(), vec![0.5; 10]), ("empty".into(), vec![])]);
        assert!(svg.contains("<path") && !svg.contains("NaN"));
    }

    #[test]
    fn curves_handle_negative_values() {
        let c = CurveResult::new(vec![1.0, 2.0, 4.0], vec![-0.5, 0.2, 0.9]);
        let svg = curves("t", "n", "r", &[("m".into(), &c)]);
        assert!(svg.contains("-0.50") && !svg.contains("NaN"));
    }

    #[test]
    fn median_of_even_length() {
        assert_eq!(median(&[3.0, 1.0, 2.0, 4.0]), 2.5);
    }
}
