//! Self-contained SVG line and step charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw as a right-continuous step function.
    pub step: bool,
    pub markers: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
            step: false,
            markers: false,
        }
    }

    pub fn with_markers(mut self) -> Self {
        self.markers = true;
        self
    }

    pub fn step(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
            step: true,
            markers: false,
        }
    }

    /// `(1, y₁), (2, y₂), …`.
    pub fn indexed(name: impl Into<String>, values: &[f64]) -> Self {
        Self::line(name, values.iter().enumerate().map(|(k, v)| ((k + 1) as f64, *v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = 0.5 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn render(&self) -> String {
        let (x0, x1) = bounds(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = bounds(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let _ = writeln!(
                out,
                r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                sx(xv),
                HEIGHT - MARGIN_BOTTOM + 16.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 6.0,
                sy(yv) + 4.0,
                fmt_tick(yv)
            );
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_LEFT}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="#ddd"/>"##,
                MARGIN_LEFT + plot_w,
                sy(yv),
                sy(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text class="y-label" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut pts: Vec<(f64, f64)> = Vec::new();
            for (j, &(x, y)) in s.points.iter().enumerate() {
                if s.step && j > 0 {
                    pts.push((x, s.points[j - 1].1));
                }
                pts.push((x, y));
            }
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                escape(&s.name),
                path.join(" ")
            );
            if s.markers {
                for (x, y) in &s.points {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(*x), sy(*y));
                }
            }
            let ly = MARGIN_TOP + 14.0 + 18.0 * k as f64;
            let lx = WIDTH - MARGIN_RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                lx + 20.0
            );
            let _ = writeln!(
                out,
                r#"<text class="legend" x="{}" y="{}">{}</text>"#,
                lx + 26.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
