// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal SVG rendering for accuracy curves and before/after scatters.
//! Output depends only on the input values, so identical inputs give
//! identical bytes.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 320.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 44.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, PartialEq)]
pub enum XScale {
    Linear,
    Log2,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log: bool,
}

impl Frame {
    fn tx(&self, x: f64) -> f64 {
        let (x, a, b) = if self.log {
            (x.max(1e-12).log2(), self.x0.max(1e-12).log2(), self.x1.max(1e-12).log2())
        } else {
            (x, self.x0, self.x1)
        };
        let span = if b > a { b - a } else { 1.0 };
        LEFT + (x - a) / span * (W - LEFT - RIGHT)
    }

    fn ty(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 { self.y1 - self.y0 } else { 1.0 };
        H - BOTTOM - (y - self.y0) / span * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xticks: &[f64]) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{l} {t}V{b}H{r}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let y = f.y0 + (f.y1 - f.y0) * f64::from(i) / 4.0;
        let py = f.ty(y);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{y:.2}</text>"#,
            l - 4.0,
            l - 6.0,
            py + 4.0
        );
    }
    for &x in xticks {
        let px = f.tx(x);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{x}</text>"#,
            b + 4.0,
            b + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        H - 8.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64, f64, f64)> {
    points
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .fold(None, |acc, (x, y)| match acc {
            None => Some((x, x, y, y)),
            Some((a, b, c, d)) => Some((a.min(x), b.max(x), c.min(y), d.max(y))),
        })
}

/// Line chart of one or more series, y clamped to `[0, 1]` when all values
/// are accuracies.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], scale: XScale) -> String {
    let (x0, x1, y0, y1) =
        bounds(series.iter().flat_map(|s| s.points.iter().copied())).unwrap_or((1.0, 2.0, 0.0, 1.0));
    let (y0, y1) = if y0 >= 0.0 && y1 <= 1.0 { (0.0, 1.0) } else { (y0, y1) };
    let f = Frame {
        x0,
        x1,
        y0,
        y1,
        log: scale == XScale::Log2 && x0 > 0.0,
    };
    let mut ticks = Vec::new();
    if f.log {
        let mut t = 1.0;
        while t <= x1 {
            if t >= x0 {
                ticks.push(t);
            }
            t *= 2.0;
        }
    } else {
        ticks.extend((0..=4).map(|i| x0 + (x1 - x0) * f64::from(i) / 4.0));
        ticks.dedup();
    }
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, &ticks);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (k, (x, y)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if k == 0 { "M" } else { "L" }, f.tx(*x), f.ty(*y));
        }
        if !d.is_empty() {
            let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        }
        for (x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                f.tx(*x),
                f.ty(*y)
            );
        }
        let ly = TOP + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" text-anchor="end" fill="{color}">{}</text>"#,
            W - RIGHT - 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of `(before, after)` pairs with the `y = x` reference line.
pub fn scatter_identity(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (a, b, c, d) =
        bounds(series.iter().flat_map(|s| s.points.iter().copied())).unwrap_or((-1.0, 1.0, -1.0, 1.0));
    let lo = a.min(c);
    let hi = b.max(d);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let f = Frame {
        x0: lo,
        x1: hi,
        y0: lo,
        y1: hi,
        log: false,
    };
    let ticks: Vec<f64> = (0..=4).map(|i| lo + (hi - lo) * f64::from(i) / 4.0).collect();
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, &ticks);
    let _ = writeln!(
        out,
        r#"<line class="identity" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
        f.tx(lo),
        f.ty(lo),
        f.tx(hi),
        f.ty(hi)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for (x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#,
                f.tx(*x),
                f.ty(*y)
            );
        }
        let ly = TOP + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            LEFT + 8.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_has_identity_line() {
        let s = Series {
            label: "subject".into(),
            points: vec![(1.0, 0.5), (2.0, 2.5)],
        };
        let svg = scatter_identity("t", "before", "after", &[s]);
        assert!(svg.contains(r#"class="identity""#));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn rendering_is_deterministic() {
        let mk = || {
            vec![Series {
                label: "pos <real>".into(),
                points: vec![(1.0, 0.3), (2.0, 0.8), (64.0, 0.9)],
            }]
        };
        let a = line_chart("c", "rank", "accuracy", &mk(), XScale::Log2);
        let b = line_chart("c", "rank", "accuracy", &mk(), XScale::Log2);
        assert_eq!(a, b);
        assert!(a.contains("&lt;real&gt;"));
        assert!(line_chart("c", "x", "y", &[], XScale::Linear).ends_with("</svg>\n"));
    }
}
