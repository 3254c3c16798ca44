//! Deterministic SVG figures: trajectory fans, endpoint scatters, and metric
//! curves. Output depends only on the input values and the seed.

use std::fmt::Write as _;

use rand::seq::index;

use crate::chain::Trajectories;
use crate::rng;
use crate::trainer::RunMetrics;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
/// Paths drawn as polylines.
pub const MAX_PATHS: usize = 64;
/// Points drawn per endpoint scatter.
pub const MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let range = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v
                .filter(|x| x.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if lo > hi {
                (0.0, 1.0)
            } else if hi - lo < 1e-9 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = range(&mut xs.clone());
        let (y0, y1) = range(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(title: &str, frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{l:.2} {t:.2} L{l:.2} {b:.2} L{r:.2} {b:.2}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for (v, anchor, x, y) in [
        (frame.x0, "start", l, b + 16.0),
        (frame.x1, "end", r, b + 16.0),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{v:.3}</text>"#
        );
    }
    for (v, y) in [(frame.y0, b), (frame.y1, t + 10.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{y:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.3}</text>"#,
            l - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(s: &mut String, pts: &[(f64, f64)], color: &str) {
    let mut coords = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        if i > 0 {
            coords.push(' ');
        }
        let _ = write!(coords, "{x:.2},{y:.2}");
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="0.8" stroke-opacity="0.6"/>"#
    );
}

fn dot(s: &mut String, x: f64, y: f64, color: &str) {
    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="{color}" fill-opacity="0.5"/>"#);
}

/// Seeded choice of at most `k` of `n` indices, in increasing order.
fn subsample(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut idx = index::sample(&mut rng::stream(seed, 0), n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Trajectory fan. One-dimensional paths are drawn against the step index;
/// higher-dimensional paths in the plane of the first two coordinates, with
/// start states in blue and end states in red.
pub fn trajectory_svg(trajs: &Trajectories, title: &str, seed: u64) -> String {
    let n = trajs.n_steps();
    let paths = subsample(trajs.n_paths(), MAX_PATHS, seed);
    let points = subsample(trajs.n_paths(), MAX_POINTS, seed ^ 1);
    let st = trajs.states();
    let mut out;
    if trajs.dim() == 1 {
        let frame = Frame::fit(
            (0..=n).map(|k| k as f64),
            st.iter().map(|&v| v as f64),
        );
        out = open(title, &frame, "k", "x");
        for &p in &paths {
            let pts: Vec<(f64, f64)> = (0..=n)
                .map(|k| (frame.px(k as f64), frame.py(st[[p, k, 0]] as f64)))
                .collect();
            polyline(&mut out, &pts, "#555555");
        }
    } else {
        let frame = Frame::fit(
            st.outer_iter().flat_map(|p| p.column(0).to_vec()).map(|v| v as f64),
            st.outer_iter().flat_map(|p| p.column(1).to_vec()).map(|v| v as f64),
        );
        out = open(title, &frame, "x_0", "x_1");
        for &p in &paths {
            let pts: Vec<(f64, f64)> = (0..=n)
                .map(|k| (frame.px(st[[p, k, 0]] as f64), frame.py(st[[p, k, 1]] as f64)))
                .collect();
            polyline(&mut out, &pts, "#555555");
        }
        for (k, color) in [(0, "#1f77b4"), (n, "#d62728")] {
            for &p in &points {
                dot(&mut out, frame.px(st[[p, k, 0]] as f64), frame.py(st[[p, k, 1]] as f64), color);
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Averaged KL (when present) and marginal gaps against the half-epoch.
pub fn metrics_svg(metrics: &RunMetrics, title: &str) -> String {
    let recs = &metrics.records;
    let series: Vec<(&str, Vec<(f64, f64)>)> = vec![
        (
            "#2ca02c",
            recs.iter()
                .filter_map(|r| r.avg_kl.map(|v| (r.half_epoch as f64, v)))
                .collect(),
        ),
        ("#1f77b4", recs.iter().map(|r| (r.half_epoch as f64, r.gap_fwd)).collect()),
        ("#d62728", recs.iter().map(|r| (r.half_epoch as f64, r.gap_bwd)).collect()),
    ];
    let frame = Frame::fit(
        series.iter().flat_map(|s| s.1.iter().map(|p| p.0)),
        series.iter().flat_map(|s| s.1.iter().map(|p| p.1)).chain([0.0]),
    );
    let mut out = open(title, &frame, "half-epoch", "avg KL (green), gap fwd (blue), gap bwd (red)");
    for (color, pts) in &series {
        let px: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (frame.px(x), frame.py(y))).collect();
        if !px.is_empty() {
            polyline(&mut out, &px, color);
        }
        for &(x, y) in &px {
            dot(&mut out, x, y, color);
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Direction;
    use ndarray::Array3;

    #[test]
    fn empty_file_gives_axes_only() {
        let t = Trajectories::from_states(Direction::Forward, 0, Array3::zeros((0, 1, 2)));
        let svg = trajectory_svg(&t, "empty", 0);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("<path"));
        assert!(!svg.contains("<polyline") && !svg.contains("<circle"));
    }

    #[test]
    fn one_path_three_states() {
        let states = Array3::from_shape_vec((1, 3, 1), vec![0.0, 1.0, -1.0]).unwrap();
        let t = Trajectories::from_states(Direction::Forward, 0, states);
        let svg = trajectory_svg(&t, "one", 0);
        assert_eq!(svg.matches("<polyline").count(), 1);
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = line.split('"').nth(1).unwrap();
        assert_eq!(pts.split(' ').count(), 3);
    }

    #[test]
    fn at_most_64_paths() {
        let states = Array3::from_shape_fn((500, 4, 2), |(p, k, j)| (p * 7 + k * 3 + j) as f32 * 0.01);
        let t = Trajectories::from_states(Direction::Backward, 0, states);
        let svg = trajectory_svg(&t, "fan", 5);
        assert_eq!(svg.matches("<polyline").count(), MAX_PATHS);
        assert_eq!(svg, trajectory_svg(&t, "fan", 5));
        assert_eq!(svg.matches("<circle").count(), 1000);
    }

    #[test]
    fn escapes_titles() {
        let t = Trajectories::from_states(Direction::Forward, 0, Array3::zeros((0, 1, 1)));
        assert!(trajectory_svg(&t, "a<b & c", 0).contains("a&lt;b &amp; c"));
    }
}
