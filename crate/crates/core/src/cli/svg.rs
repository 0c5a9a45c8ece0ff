//! Minimal SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a polyline.
    pub markers: bool,
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.to_string(),
            points,
            markers: false,
        }
    }

    pub fn scatter(label: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.to_string(),
            points,
            markers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    /// File stem of the rendered plot.
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub log_x: bool,
    pub log_y: bool,
}

/// Linear map from data space to pixel space, after the optional log10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_x: bool,
    log_y: bool,
}

fn transform(v: f64, log: bool) -> Option<f64> {
    let t = if log {
        if v > 0.0 {
            v.log10()
        } else {
            return None;
        }
    } else {
        v
    };
    t.is_finite().then_some(t)
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let w = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - w, hi + w)
    }
}

impl Plot {
    pub fn frame(&self) -> Frame {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                if let (Some(tx), Some(ty)) = (transform(x, self.log_x), transform(y, self.log_y)) {
                    xs = (xs.0.min(tx), xs.1.max(tx));
                    ys = (ys.0.min(ty), ys.1.max(ty));
                }
            }
        }
        if !xs.0.is_finite() {
            xs = (0.0, 1.0);
            ys = (0.0, 1.0);
        }
        let (x0, x1) = if xs.1 > xs.0 { xs } else { padded(xs.0, xs.1) };
        let (y0, y1) = padded(ys.0, ys.1);
        Frame {
            x0,
            x1,
            y0,
            y1,
            log_x: self.log_x,
            log_y: self.log_y,
        }
    }

    pub fn render(&self) -> String {
        let f = self.frame();
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=TICKS {
            let a = i as f64 / TICKS as f64;
            let tx = f.x0 + a * (f.x1 - f.x0);
            let ty = f.y0 + a * (f.y1 - f.y0);
            let px = LEFT + a * pw;
            let py = TOP + ph - a * ph;
            let _ = writeln!(
                out,
                r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                tick_label(tx, f.log_x)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                py + 4.0,
                tick_label(ty, f.log_y)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pixels: Vec<(f64, f64)> = s.points.iter().filter_map(|&(x, y)| f.to_pixel(x, y)).collect();
            if s.markers {
                for (x, y) in &pixels {
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                }
            } else if !pixels.is_empty() {
                let pts: Vec<String> = pixels.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                LEFT + pw - 150.0,
                LEFT + pw - 130.0,
                LEFT + pw - 125.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

impl Frame {
    /// Pixel position of a data point; `None` for points a log axis cannot show.
    pub fn to_pixel(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let tx = transform(x, self.log_x)?;
        let ty = transform(y, self.log_y)?;
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = LEFT + (tx - self.x0) / (self.x1 - self.x0) * pw;
        let py = TOP + ph - (ty - self.y0) / (self.y1 - self.y0) * ph;
        Some((px, py))
    }

    /// Inverse of [`Frame::to_pixel`] along x.
    pub fn x_from_pixel(&self, px: f64) -> f64 {
        let pw = WIDTH - LEFT - RIGHT;
        let t = self.x0 + (px - LEFT) / pw * (self.x1 - self.x0);
        if self.log_x {
            10f64.powf(t)
        } else {
            t
        }
    }
}

fn tick_label(v: f64, log: bool) -> String {
    let v = if log { 10f64.powf(v) } else { v };
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Points of every polyline in a rendered SVG, in pixel space.
pub fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .filter_map(|l| {
            let start = l.find("points=\"")? + 8;
            let end = start + l[start..].find('"')?;
            Some(
                l[start..end]
                    .split_whitespace()
                    .filter_map(|pair| {
                        let (x, y) = pair.split_once(',')?;
                        Some((x.parse().ok()?, y.parse().ok()?))
                    })
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_series() {
        let plot = Plot {
            name: "t".into(),
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![
                Series::line("one", vec![(0.0, 0.0), (1.0, 1.0)]),
                Series::scatter("two", vec![(0.5, 0.2)]),
            ],
            log_x: false,
            log_y: false,
        };
        let svg = plot.render();
        assert!(svg.contains("a &lt; b"));
        assert_eq!(polylines(&svg).len(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn log_axes_drop_non_positive_points() {
        let plot = Plot {
            name: "t".into(),
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![Series::line("s", vec![(0.0, 1.0), (1.0, 10.0), (100.0, 1000.0)])],
            log_x: true,
            log_y: true,
        };
        let lines = polylines(&plot.render());
        assert_eq!(lines[0].len(), 2);
        let f = plot.frame();
        let (px, _) = f.to_pixel(10.0, 10.0).unwrap();
        assert!((f.x_from_pixel(px) - 10.0).abs() < 1e-9);
    }
}
