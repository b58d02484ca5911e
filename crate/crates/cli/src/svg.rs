//! Minimal line-chart SVG writer. Output is a pure function of the input,
//! with coordinates printed to two decimals.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 250.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

#[derive(Debug, Clone)]
pub enum Layer {
    /// Polyline; `None` breaks the line.
    Line { label: String, color: String, dashed: bool, points: Vec<(f64, Option<f64>)> },
    /// Shaded region between two curves; `None` skips the point.
    Band { label: String, color: String, points: Vec<(f64, Option<(f64, f64)>)> },
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Fixed y range; computed from the data when absent.
    pub y_range: Option<(f64, f64)>,
    pub layers: Vec<Layer>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick spacing of 1, 2 or 5 times a power of ten giving about `n` ticks.
fn nice_step(span: f64, n: f64) -> f64 {
    let raw = span / n;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 5.0);
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{v:.decimals$}")
}

impl Chart {
    fn x_range(&self) -> (f64, f64) {
        let xs = self.layers.iter().flat_map(|l| match l {
            Layer::Line { points, .. } => points.iter().map(|p| p.0).collect::<Vec<_>>(),
            Layer::Band { points, .. } => points.iter().map(|p| p.0).collect(),
        });
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (0.0, 1.0)
        }
    }

    fn data_y_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for l in &self.layers {
            match l {
                Layer::Line { points, .. } => {
                    for y in points.iter().filter_map(|p| p.1) {
                        lo = lo.min(y);
                        hi = hi.max(y);
                    }
                }
                Layer::Band { points, .. } => {
                    for (a, b) in points.iter().filter_map(|p| p.1) {
                        lo = lo.min(a);
                        hi = hi.max(b);
                    }
                }
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            return (lo - 1.0, hi + 1.0);
        }
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }

    pub fn render(&self) -> String {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range.unwrap_or_else(|| self.data_y_range());
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y.clamp(y0, y1) - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        let xstep = nice_step(x1 - x0, 5.0);
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                w,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e6e6e6"/>"##,
                TOP,
                TOP + ph
            );
            let _ = writeln!(
                w,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 18.0,
                tick_label(t, xstep)
            );
        }
        let ystep = nice_step(y1 - y0, 5.0);
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                w,
                r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e6e6e6"/>"##,
                LEFT + pw
            );
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 8.0,
                y + 4.0,
                tick_label(t, ystep)
            );
        }
        let _ = writeln!(
            w,
            r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            w,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for layer in &self.layers {
            match layer {
                Layer::Band { color, points, .. } => {
                    for run in runs(points) {
                        let mut d = String::new();
                        for (x, (_, hi)) in &run {
                            let _ = write!(d, "{:.2},{:.2} ", sx(*x), sy(*hi));
                        }
                        for (x, (lo, _)) in run.iter().rev() {
                            let _ = write!(d, "{:.2},{:.2} ", sx(*x), sy(*lo));
                        }
                        let _ = writeln!(
                            w,
                            r#"<polygon points="{}" fill="{color}" fill-opacity="0.25" stroke="none"/>"#,
                            d.trim_end()
                        );
                    }
                }
                Layer::Line { color, dashed, points, .. } => {
                    let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    for run in runs(points) {
                        let d: Vec<String> = run.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
                        let _ = writeln!(
                            w,
                            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                            d.join(" ")
                        );
                    }
                }
            }
        }

        for (i, layer) in self.layers.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * i as f64;
            let lx = LEFT + pw + 14.0;
            match layer {
                Layer::Band { label, color, .. } => {
                    let _ = writeln!(
                        w,
                        r#"<rect x="{lx:.2}" y="{:.2}" width="22" height="10" fill="{color}" fill-opacity="0.25"/>"#,
                        y - 5.0
                    );
                    let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 28.0, y + 4.0, escape(label));
                }
                Layer::Line { label, color, dashed, .. } => {
                    let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        w,
                        r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                        lx + 22.0
                    );
                    let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 28.0, y + 4.0, escape(label));
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Maximal runs of defined points.
fn runs<T: Copy>(points: &[(f64, Option<T>)]) -> Vec<Vec<(f64, T)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for &(x, v) in points {
        match v {
            Some(v) => cur.push((x, v)),
            None if !cur.is_empty() => out.push(std::mem::take(&mut cur)),
            None => {}
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
