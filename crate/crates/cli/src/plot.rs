//! Minimal static SVG charts for eval reports. Display-only output; no
//! interactivity.

use std::io;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 40.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{iw}\" height=\"{ih}\" \
         fill=\"none\" stroke=\"#ccc\"/>\n",
        iw = W - 2.0 * MARGIN,
        ih = H - 2.0 * MARGIN,
    )
}

fn x_at(frac: f64) -> f64 {
    MARGIN + frac.clamp(0.0, 1.0) * (W - 2.0 * MARGIN)
}

fn y_at(frac: f64) -> f64 {
    // SVG y grows downward.
    H - MARGIN - frac.clamp(0.0, 1.0) * (H - 2.0 * MARGIN)
}

/// One polyline per series; x is the in-series index, y the value mapped
/// from the pooled min/max.
pub fn line_chart(series: &[Vec<f64>], label: &str, path: &Path) -> io::Result<()> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &v in s {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || hi <= lo {
        lo = 0.0;
        hi = 1.0;
    }
    let mut svg = header();
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\">{label}</text>\n",
        MARGIN,
        MARGIN - 10.0
    ));
    for (i, s) in series.iter().enumerate() {
        if s.len() < 2 {
            continue;
        }
        let points: Vec<String> = s
            .iter()
            .enumerate()
            .map(|(t, &v)| {
                format!(
                    "{:.1},{:.1}",
                    x_at(t as f64 / (s.len() - 1) as f64),
                    y_at((v - lo) / (hi - lo))
                )
            })
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            PALETTE[i % PALETTE.len()],
            points.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
}

/// Perceived-vs-true scatter with threshold guide lines. Perceived spans
/// [0,100], true [0,1].
pub fn scatter(points: &[(f64, f64)], thresholds: (f64, f64), path: &Path) -> io::Result<()> {
    let mut svg = header();
    let tx = x_at(thresholds.0 / 100.0);
    let ty = y_at(thresholds.1);
    svg.push_str(&format!(
        "<line x1=\"{tx:.1}\" y1=\"{MARGIN}\" x2=\"{tx:.1}\" y2=\"{:.1}\" \
         stroke=\"#999\" stroke-dasharray=\"4\"/>\n",
        H - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{ty:.1}\" x2=\"{:.1}\" y2=\"{ty:.1}\" \
         stroke=\"#999\" stroke-dasharray=\"4\"/>\n",
        W - MARGIN
    ));
    for &(p, t) in points {
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n",
            x_at(p / 100.0),
            y_at(t)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\">perceived vs true</text>\n",
        MARGIN,
        MARGIN - 10.0
    ));
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
}
