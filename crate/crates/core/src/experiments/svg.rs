//! Minimal standalone SVG rendering for line plots and verdict scatters.

use std::fmt::Write;

use super::{Axes, Figure, Series};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool, px_lo: f64, px_hi: f64) -> Self {
        let vals: Vec<f64> = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(|v| if log { v.log10() } else { v })
            .collect();
        let (mut lo, mut hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            (lo, hi) = (lo - pad, hi + pad);
        } else {
            let pad = (hi - lo) * 0.05;
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self { lo, hi, log, px_lo, px_hi }
    }

    fn px(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let t = if self.log { v.log10() } else { v };
        Some(self.px_lo + (t - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo))
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b >= a {
                return (a..=b).map(|e| 10f64.powi(e)).collect();
            }
            return vec![10f64.powf((self.lo + self.hi) / 2.0)];
        }
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-12 * step.abs() {
            out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, axes: &Axes, sx: &Scale, sy: &Scale) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        (x0 + x1) / 2.0,
        escape(&axes.title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for t in sx.ticks() {
        if let Some(px) = sx.px(t) {
            let _ = writeln!(out, r##"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.1}" stroke="#000"/>"##, y0 + 5.0);
            let _ = writeln!(
                out,
                r#"<text x="{px:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 18.0,
                label(t)
            );
        }
    }
    for t in sy.ticks() {
        if let Some(py) = sy.px(t) {
            let _ = writeln!(out, r##"<line x1="{:.1}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#000"/>"##, x0 - 5.0);
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 8.0,
                py + 4.0,
                label(t)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 14.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&axes.y_label)
    );
}

fn lines(axes: &Axes, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let sx = Scale::new(pts().map(|p| p.0), axes.log_x, LEFT, W - RIGHT);
    let sy = Scale::new(pts().map(|p| p.1), axes.log_y, H - BOTTOM, TOP);
    let mut out = String::new();
    frame(&mut out, axes, &sx, &sy);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter_map(|&(x, y)| Some((sx.px(x)?, sy.px(y)?)))
            .collect();
        let path: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for (x, y) in &coords {
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn verdicts(axes: &Axes, points: &[(f64, f64, bool)]) -> String {
    let sx = Scale::new(points.iter().map(|p| p.0), axes.log_x, LEFT, W - RIGHT);
    let sy = Scale::new(points.iter().map(|p| p.1), axes.log_y, H - BOTTOM, TOP);
    let mut out = String::new();
    frame(&mut out, axes, &sx, &sy);
    for &(x, y, ok) in points {
        let (Some(px), Some(py)) = (sx.px(x), sy.px(y)) else { continue };
        if ok {
            let _ = writeln!(out, r##"<circle cx="{px:.2}" cy="{py:.2}" r="6" fill="#2ca02c"/>"##);
        } else {
            let d = 5.0;
            let _ = writeln!(
                out,
                r##"<path d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="#d62728" stroke-width="2.5"/>"##,
                px - d,
                py - d,
                px + d,
                py + d,
                px - d,
                py + d,
                px + d,
                py - d
            );
        }
    }
    let lx = W - RIGHT + 12.0;
    let _ = writeln!(out, r##"<circle cx="{:.1}" cy="{:.1}" r="6" fill="#2ca02c"/>"##, lx + 6.0, TOP + 16.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">beats baseline</text>"#, lx + 18.0, TOP + 20.0);
    let _ = writeln!(
        out,
        r##"<path d="M{:.1},{:.1} L{:.1},{:.1} M{:.1},{:.1} L{:.1},{:.1}" stroke="#d62728" stroke-width="2.5"/>"##,
        lx + 1.0,
        TOP + 31.0,
        lx + 11.0,
        TOP + 41.0,
        lx + 1.0,
        TOP + 41.0,
        lx + 11.0,
        TOP + 31.0
    );
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">does not</text>"#, lx + 18.0, TOP + 40.0);
    out.push_str("</svg>\n");
    out
}

pub fn render(fig: &Figure) -> String {
    match fig {
        Figure::Lines { axes, series, .. } => lines(axes, series),
        Figure::Verdicts { axes, points, .. } => verdicts(axes, points),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes(log: bool) -> Axes {
        Axes {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: log,
            log_y: log,
        }
    }

    #[test]
    fn line_plot_has_one_polyline_per_series() {
        let series: Vec<Series> = (0..3)
            .map(|k| Series {
                label: format!("s{k}"),
                points: vec![(1.0, 1.0 + k as f64), (10.0, 5.0), (100.0, 0.5)],
            })
            .collect();
        let fig = Figure::Lines { name: "f".into(), axes: axes(true), series };
        let svg = render(&fig);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg, render(&fig));
    }

    #[test]
    fn log_axes_skip_nonpositive_points() {
        let fig = Figure::Lines {
            name: "f".into(),
            axes: axes(true),
            series: vec![Series { label: "s".into(), points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)] }],
        };
        assert_eq!(render(&fig).matches("<circle").count(), 1);
    }

    #[test]
    fn verdict_markers_match_counts() {
        let pts = vec![(1.0, 1.0, true), (2.0, 1.0, false), (4.0, 2.0, false)];
        let svg = render(&Figure::Verdicts { name: "v".into(), axes: axes(false), points: pts });
        // one legend marker of each kind on top of the data
        assert_eq!(svg.matches(r##"fill="#2ca02c""##).count(), 2);
        assert_eq!(svg.matches(r##"stroke="#d62728""##).count(), 3);
    }

    #[test]
    fn linear_ticks_are_round() {
        let s = Scale::new([0.0, 9.5].into_iter(), false, 0.0, 100.0);
        let t = s.ticks();
        assert!(t.contains(&0.0) && t.contains(&4.0) && t.contains(&8.0), "{t:?}");
    }
}
