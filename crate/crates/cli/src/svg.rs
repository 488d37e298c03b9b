//! Minimal SVG line charts of ACCDOA x/y/z trajectories.

use std::fmt::Write as _;

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 240.0;
const MARGIN: f64 = 40.0;
/// x, y and z axes in red, green and blue.
pub const AXIS_COLORS: [&str; 3] = ["#d62728", "#2ca02c", "#1f77b4"];
const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Vertical pixel of a value in [-1, 1].
pub fn y_px(v: f64) -> f64 {
    let plot = HEIGHT - 2.0 * MARGIN;
    MARGIN + (1.0 - v.clamp(-1.0, 1.0)) / 2.0 * plot
}

/// Horizontal pixel of frame `i` out of `n`.
pub fn x_px(i: usize, n: usize) -> f64 {
    let plot = WIDTH - 2.0 * MARGIN;
    MARGIN + if n > 1 { i as f64 / (n - 1) as f64 * plot } else { 0.0 }
}

fn polyline(values: &[f64], color: &str, dashed: bool, label: &str) -> String {
    let pts: Vec<String> = values.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x_px(i, values.len()), y_px(v))).collect();
    let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
    format!(
        "<polyline class=\"{label}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>\n",
        pts.join(" ")
    )
}

/// One chart: predicted axes solid, reference axes dashed. Each series is `[frames][3]`.
pub fn trajectory_chart(title: &str, frame_s: f64, predicted: Option<&[[f64; 3]]>, reference: Option<&[[f64; 3]]>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{title}</text>");
    for v in [-1.0, 0.0, 1.0] {
        let y = y_px(v);
        let _ = writeln!(
            s,
            "<line x1=\"{MARGIN}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ccc\"/><text x=\"8\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{v}</text>",
            WIDTH - MARGIN,
            y + 4.0
        );
    }
    let n = predicted.or(reference).map_or(0, |p| p.len());
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.1} s</text>",
        WIDTH - MARGIN,
        HEIGHT - 12.0,
        n as f64 * frame_s
    );
    for (series, dashed, kind) in [(reference, true, "reference"), (predicted, false, "predicted")] {
        let Some(series) = series else { continue };
        for a in 0..3 {
            let values: Vec<f64> = series.iter().map(|v| v[a]).collect();
            s.push_str(&polyline(&values, AXIS_COLORS[a], dashed, &format!("{kind}-{}", AXIS_NAMES[a])));
        }
    }
    s.push_str("</svg>\n");
    s
}
